#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ngi {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

struct TensorData {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated on demand, same length as value
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

// Dense f64 tensor with shared storage. Gradients are populated by
// Tape::backward for every tensor that participated in the recording.
class Tensor {
public:
    Tensor() : d_(std::make_shared<TensorData>()) {}

    Tensor(Shape shape, std::vector<double> value, bool requires_grad = false)
        : d_(std::make_shared<TensorData>()) {
        if (shape_numel(shape) != value.size())
            throw std::invalid_argument("Tensor: shape " + shape_str(shape) +
                                        " does not match data length " + std::to_string(value.size()));
        d_->shape = std::move(shape);
        d_->value = std::move(value);
        d_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::size_t n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor full(Shape shape, double v, bool requires_grad = false) {
        std::size_t n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return Tensor({1}, {v}, requires_grad);
    }

    const Shape& shape() const { return d_->shape; }
    std::size_t numel() const { return d_->value.size(); }
    std::size_t dim(std::size_t i) const { return d_->shape.at(i); }
    std::size_t ndim() const { return d_->shape.size(); }

    std::vector<double>& value() { return d_->value; }
    const std::vector<double>& value() const { return d_->value; }
    std::vector<double>& grad() { return d_->grad; }
    const std::vector<double>& grad() const { return d_->grad; }

    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool b) { d_->requires_grad = b; }
    void ensure_grad() { d_->ensure_grad(); }
    void zero_grad() { d_->grad.assign(d_->value.size(), 0.0); }

    double item() const {
        if (numel() != 1) throw std::invalid_argument("item: tensor is not scalar, shape " + shape_str(shape()));
        return d_->value[0];
    }

    bool same_storage(const Tensor& o) const { return d_ == o.d_; }

    std::shared_ptr<TensorData> data() const { return d_; }

private:
    std::shared_ptr<TensorData> d_;
};

// Record of primitive operations. Recording order is execution order, so a
// reverse replay visits every node after all of its consumers.
class Tape {
public:
    void record(std::function<void()> backward_step) {
        steps_.push_back(std::move(backward_step));
    }

    std::size_t size() const { return steps_.size(); }

    // Seeds d(loss)/d(loss) = 1 and replays the tape backward, accumulating
    // gradients into every recorded tensor. The tape is consumed.
    void backward(Tensor loss) {
        if (loss.numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
        loss.ensure_grad();
        loss.grad()[0] = 1.0;
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
        steps_.clear();
    }

    void reset() { steps_.clear(); }

private:
    std::vector<std::function<void()>> steps_;
};

}  // namespace ngi
