#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ngi/model.hpp"
#include "ngi/tensor.hpp"

// File formats. Weights: magic "NGIW", version u16, spec blob, then
// little-endian f32 tensors with shape headers. Adversarial batches reuse the
// same container layout under magic "NGIB" with f64 image payloads.

namespace ngi::io {

namespace detail {

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open for writing: " + path);
    }
    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) { std::uint8_t b[2] = {std::uint8_t(v), std::uint8_t(v >> 8)}; bytes(b, 2); }
    void u32(std::uint32_t v) {
        std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8), std::uint8_t(v >> 16), std::uint8_t(v >> 24)};
        bytes(b, 4);
    }
    void u64(std::uint64_t v) { u32(std::uint32_t(v)); u32(std::uint32_t(v >> 32)); }
    void f32(float v) { std::uint32_t u; std::memcpy(&u, &v, 4); u32(u); }
    void f64(double v) { std::uint64_t u; std::memcpy(&u, &v, 8); u64(u); }
    void str(const std::string& s) {
        if (s.size() > 255) throw std::runtime_error("string field too long");
        u8(std::uint8_t(s.size()));
        bytes(s.data(), s.size());
    }
    bool good() const { return static_cast<bool>(out_); }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw std::runtime_error("cannot open for reading: " + path);
    }
    void bytes(void* p, std::size_t n, const char* what) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw std::runtime_error(path_ + ": truncated reading " + what + " at offset " + std::to_string(offset_) +
                                     ": expected " + std::to_string(n) + " bytes, found " + std::to_string(in_.gcount()));
        offset_ += n;
    }
    std::uint8_t u8(const char* what) { std::uint8_t v; bytes(&v, 1, what); return v; }
    std::uint16_t u16(const char* what) { std::uint8_t b[2]; bytes(b, 2, what); return std::uint16_t(b[0] | (b[1] << 8)); }
    std::uint32_t u32(const char* what) {
        std::uint8_t b[4];
        bytes(b, 4, what);
        return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
    }
    std::uint64_t u64(const char* what) { std::uint64_t lo = u32(what); return lo | (std::uint64_t(u32(what)) << 32); }
    float f32(const char* what) { std::uint32_t u = u32(what); float v; std::memcpy(&v, &u, 4); return v; }
    double f64(const char* what) { std::uint64_t u = u64(what); double v; std::memcpy(&v, &u, 8); return v; }
    std::string str(const char* what) {
        std::uint8_t n = u8(what);
        std::string s(n, '\0');
        if (n) bytes(s.data(), n, what);
        return s;
    }
    std::size_t offset() const { return offset_; }
    const std::string& path() const { return path_; }

private:
    std::ifstream in_;
    std::string path_;
    std::size_t offset_ = 0;
};

}  // namespace detail

inline void save_weights(const Model& model, const std::string& path) {
    detail::Writer w(path);
    w.bytes("NGIW", 4);
    w.u16(1);
    const ModelSpec& s = model.spec();
    w.str(s.arch);
    w.u32(std::uint32_t(s.in_c));
    w.u32(std::uint32_t(s.in_h));
    w.u32(std::uint32_t(s.in_w));
    w.u32(std::uint32_t(s.classes));
    w.u64(model.meta().seed);
    w.u32(model.meta().epochs);
    w.f64(model.meta().clean_accuracy);
    w.u8(model.meta().adversarial ? 1 : 0);
    w.u32(std::uint32_t(model.params().size()));
    for (const Tensor& t : model.params()) {
        w.u8(std::uint8_t(t.ndim()));
        for (std::size_t d : t.shape()) w.u32(std::uint32_t(d));
        for (double v : t.value()) w.f32(static_cast<float>(v));
    }
    if (!w.good()) throw std::runtime_error("write failed: " + path);
}

inline Model load_weights(const std::string& path) {
    detail::Reader r(path);
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, "NGIW", 4) != 0)
        throw std::runtime_error(path + ": bad magic at offset 0 (expected NGIW)");
    std::uint16_t version = r.u16("version");
    if (version != 1) throw std::runtime_error(path + ": unsupported version " + std::to_string(version));
    ModelSpec spec;
    spec.arch = r.str("arch");
    spec.in_c = r.u32("in_c");
    spec.in_h = r.u32("in_h");
    spec.in_w = r.u32("in_w");
    spec.classes = r.u32("classes");
    Model model = Model::init(spec, 0);  // validates arch, allocates param shapes
    model.meta().seed = r.u64("seed");
    model.meta().epochs = r.u32("epochs");
    model.meta().clean_accuracy = r.f64("clean_accuracy");
    model.meta().adversarial = r.u8("adversarial flag") != 0;
    std::uint32_t count = r.u32("tensor count");
    auto expected = ngi::detail::param_shapes(spec);
    if (count != expected.size())
        throw std::runtime_error(path + ": tensor count " + std::to_string(count) + " does not match spec (" +
                                 std::to_string(expected.size()) + ") at offset " + std::to_string(r.offset()));
    for (std::size_t t = 0; t < count; ++t) {
        std::uint8_t ndim = r.u8("tensor ndim");
        Shape sh(ndim);
        for (auto& d : sh) d = r.u32("tensor dim");
        if (sh != expected[t])
            throw std::runtime_error(path + ": tensor " + std::to_string(t) + " shape " + shape_str(sh) +
                                     " does not match spec shape " + shape_str(expected[t]) + " at offset " +
                                     std::to_string(r.offset()));
        std::vector<double> v(shape_numel(sh));
        for (auto& x : v) x = static_cast<double>(r.f32("tensor data"));
        model.params()[t] = Tensor(sh, std::move(v));
    }
    return model;
}

// Adversarial batch container: clean images, adversarial images, labels, and
// the attack identity that produced them.
struct BatchFile {
    Tensor clean;
    Tensor adv;
    std::vector<std::size_t> labels;
    std::string method;
    double eps = 0.0;
    std::uint64_t seed = 0;
};

inline void save_batch(const BatchFile& b, const std::string& path) {
    detail::Writer w(path);
    w.bytes("NGIB", 4);
    w.u16(1);
    w.str(b.method);
    w.f64(b.eps);
    w.u64(b.seed);
    w.u32(std::uint32_t(b.labels.size()));
    for (std::size_t l : b.labels) w.u32(std::uint32_t(l));
    for (const Tensor* t : {&b.clean, &b.adv}) {
        w.u8(std::uint8_t(t->ndim()));
        for (std::size_t d : t->shape()) w.u32(std::uint32_t(d));
        for (double v : t->value()) w.f64(v);
    }
    if (!w.good()) throw std::runtime_error("write failed: " + path);
}

inline BatchFile load_batch(const std::string& path) {
    detail::Reader r(path);
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, "NGIB", 4) != 0)
        throw std::runtime_error(path + ": bad magic at offset 0 (expected NGIB)");
    std::uint16_t version = r.u16("version");
    if (version != 1) throw std::runtime_error(path + ": unsupported version " + std::to_string(version));
    BatchFile b;
    b.method = r.str("method");
    b.eps = r.f64("eps");
    b.seed = r.u64("seed");
    std::uint32_t n = r.u32("label count");
    b.labels.resize(n);
    for (auto& l : b.labels) l = r.u32("label");
    for (Tensor* t : {&b.clean, &b.adv}) {
        std::uint8_t ndim = r.u8("tensor ndim");
        Shape sh(ndim);
        for (auto& d : sh) d = r.u32("tensor dim");
        std::vector<double> v(shape_numel(sh));
        for (auto& x : v) x = r.f64("tensor data");
        *t = Tensor(sh, std::move(v));
    }
    if (b.clean.ndim() != 4 || b.clean.dim(0) != n)
        throw std::runtime_error(path + ": image tensor " + shape_str(b.clean.shape()) + " does not match " +
                                 std::to_string(n) + " labels");
    return b;
}

}  // namespace ngi::io
