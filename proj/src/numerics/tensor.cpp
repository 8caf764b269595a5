#include "dicos/numerics/tensor.hpp"

#include <functional>
#include <numeric>
#include <sstream>

namespace dicos {

namespace {
thread_local Tape* active_tape = nullptr;

std::size_t extent_product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}
}  // namespace

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
    for (auto e : shape) {
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
    }
    if (extent_product(shape) != data.size()) {
        throw DimensionError("shape " + shape_to_string(shape) + " does not match " +
                             std::to_string(data.size()) + " values");
    }
    impl_ = std::make_shared<TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
    if (requires_grad) impl_->ensure_grad();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::size_t n = extent_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows, bool requires_grad) {
    if (rows.empty() || rows.front().empty()) throw DimensionError("matrix needs at least one element");
    std::vector<double> flat;
    flat.reserve(rows.size() * rows.front().size());
    for (const auto& r : rows) {
        if (r.size() != rows.front().size()) throw DimensionError("ragged matrix rows");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), rows.front().size()}, std::move(flat), requires_grad);
}

Tensor Tensor::row_vector(std::vector<double> values, bool requires_grad) {
    std::size_t n = values.size();
    return Tensor({1, n}, std::move(values), requires_grad);
}

std::size_t Tensor::rows() const {
    return dim() == 1 ? 1 : impl_->shape[0];
}

std::size_t Tensor::cols() const {
    return impl_->shape.back();
}

std::span<double> Tensor::mutable_grad() {
    impl_->ensure_grad();
    return impl_->grad;
}

void Tensor::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (on) impl_->ensure_grad();
}

void Tensor::zero_grad() {
    if (impl_->requires_grad) impl_->grad.assign(impl_->data.size(), 0.0);
}

double Tensor::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_to_string(shape()));
    return impl_->data[0];
}

Tensor Tensor::clone() const {
    Tensor out(impl_->shape, impl_->data, impl_->requires_grad);
    if (impl_->requires_grad) out.impl_->grad = impl_->grad;
    return out;
}

Tensor Tensor::detach() const {
    return Tensor(impl_->shape, impl_->data, false);
}

void Tape::record(std::function<void()> backward_rule) {
    if (consumed_) throw TapeError("tape already consumed by backward(); call reset()");
    rules_.push_back(std::move(backward_rule));
}

void Tape::backward(const Tensor& loss) {
    if (consumed_) throw TapeError("backward() called twice without reset()");
    if (!loss.defined() || loss.numel() != 1) throw TapeError("backward() needs a scalar loss");
    if (!loss.requires_grad()) throw TapeError("loss does not depend on any tracked tensor");
    consumed_ = true;
    loss.impl()->ensure_grad();
    loss.impl()->grad[0] += 1.0;
    for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
}

void Tape::reset() {
    rules_.clear();
    consumed_ = false;
}

Tape* Tape::current() {
    return active_tape;
}

TapeGuard::TapeGuard(Tape& tape) : previous_(active_tape) {
    active_tape = &tape;
}

TapeGuard::~TapeGuard() {
    active_tape = previous_;
}

NoGradGuard::NoGradGuard() : previous_(active_tape) {
    active_tape = nullptr;
}

NoGradGuard::~NoGradGuard() {
    active_tape = previous_;
}

}  // namespace dicos
