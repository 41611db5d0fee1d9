#pragma once

// Dense row-major tensors with optional gradient buffers, plus the reverse
// tape that composes per-operator backward passes. Templated on the scalar
// type: double for the 64-bit verification mode, float for 32-bit training.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace agcn::diff {

template <class Real>
struct TensorData {
  std::vector<int> shape;
  std::vector<Real> values;
  std::vector<Real> grad;  // empty until requested
  bool needs_grad = false;
};

template <class Real>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool needs_grad = false) {
    Tensor t;
    t.d_ = std::make_shared<TensorData<Real>>();
    t.d_->shape = std::move(shape);
    t.d_->values.assign(t.size(), Real(0));
    t.d_->needs_grad = needs_grad;
    return t;
  }

  static Tensor from(std::vector<int> shape, std::vector<Real> values, bool needs_grad = false) {
    Tensor t;
    t.d_ = std::make_shared<TensorData<Real>>();
    t.d_->shape = std::move(shape);
    t.d_->values = std::move(values);
    t.d_->needs_grad = needs_grad;
    if (t.d_->values.size() != static_cast<std::size_t>(t.size())) {
      throw std::invalid_argument("Tensor: value count does not match shape");
    }
    return t;
  }

  bool defined() const { return d_ != nullptr; }
  const std::vector<int>& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int dim(int i) const { return d_->shape[i]; }
  long size() const {
    return std::accumulate(d_->shape.begin(), d_->shape.end(), 1L,
                           [](long a, int b) { return a * b; });
  }

  Real* data() { return d_->values.data(); }
  const Real* data() const { return d_->values.data(); }
  std::vector<Real>& values() { return d_->values; }
  const std::vector<Real>& values() const { return d_->values; }

  bool needs_grad() const { return d_->needs_grad; }
  void set_needs_grad(bool v) { d_->needs_grad = v; }
  bool has_grad() const { return !d_->grad.empty(); }

  // Gradient buffer, allocated (zeroed) on first use.
  Real* grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->values.size(), Real(0));
    return d_->grad.data();
  }
  std::vector<Real>& grad_values() {
    if (d_->grad.empty()) d_->grad.assign(d_->values.size(), Real(0));
    return d_->grad;
  }
  void zero_grad() {
    if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), Real(0));
  }

  bool same_data(const Tensor& other) const { return d_ == other.d_; }

  void check_finite(const char* what) const {
    for (Real v : d_->values) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw std::runtime_error(std::string("non-finite value after ") + what);
      }
    }
  }

 private:
  std::shared_ptr<TensorData<Real>> d_;
};

// Reverse tape: operators push a closure that propagates gradients from
// their output to their inputs; backward() replays them last to first.
template <class Real>
class Tape {
 public:
  void push(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

  // Seeds the scalar output with grad 1 and runs all backward closures.
  void backward(Tensor<Real> loss) {
    if (loss.size() != 1) throw std::invalid_argument("Tape::backward: loss must be scalar");
    loss.grad()[0] = Real(1);
    run_backward();
  }

  void run_backward() {
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  void clear() { ops_.clear(); }
  std::size_t op_count() const { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
};

}  // namespace agcn::diff
