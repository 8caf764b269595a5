#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dicos {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when an op produces NaN/Inf.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TapeError : std::logic_error {
    using std::logic_error::logic_error;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated lazily, same extent as data
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

/// Dense row-major tensor of doubles. Copies share storage (handle semantics);
/// use clone() for a deep copy.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    /// rows x cols matrix from nested initializer rows.
    static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false);
    static Tensor row_vector(std::vector<double> values, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t dim() const { return impl_->shape.size(); }
    std::size_t numel() const { return impl_->data.size(); }
    /// For rank-2 tensors; rank-1 tensors are treated as a single row.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const { return impl_->data; }
    std::span<double> mutable_data() { return impl_->data; }
    std::span<const double> grad() const { return impl_->grad; }
    std::span<double> mutable_grad();
    bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    void set_requires_grad(bool on);
    void zero_grad();

    double item() const;
    double at(std::size_t i) const { return impl_->data[i]; }
    double at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }

    Tensor clone() const;
    /// Copy of the values with no tape participation.
    Tensor detach() const;

    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

/// Records backward closures in creation order. Ops append to the tape that
/// is active on the current thread (see TapeGuard); with no active tape,
/// nothing is recorded and outputs never require grad.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::function<void()> backward_rule);

    /// Seeds d(loss)/d(loss) = 1 and replays every rule in reverse order.
    /// A second call without reset() throws TapeError.
    void backward(const Tensor& loss);
    void reset();

    std::size_t size() const { return rules_.size(); }
    bool consumed() const { return consumed_; }

    static Tape* current();

private:
    friend class TapeGuard;
    std::vector<std::function<void()>> rules_;
    bool consumed_ = false;
};

class TapeGuard {
public:
    explicit TapeGuard(Tape& tape);
    ~TapeGuard();
    TapeGuard(const TapeGuard&) = delete;
    TapeGuard& operator=(const TapeGuard&) = delete;

private:
    Tape* previous_;
};

/// Suspends recording for the current scope.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    Tape* previous_;
};

}  // namespace dicos
