#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "macnet/error.hpp"

namespace macnet {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major N-dimensional value participating in a reverse-mode
// differentiation graph. Values are written once by the producing
// operation; only the grad buffer mutates afterwards (during backward).
template <class S>
struct Tensor {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // empty until first accumulation
  bool requires_grad = false;

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

  bool has_grad() const { return !grad.empty(); }

  // Lazily allocates the gradient buffer (zeros).
  std::vector<S>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), S(0));
    return grad;
  }

  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), S(0));
  }

  void clear_grad() {
    grad.clear();
    grad.shrink_to_fit();
  }

  bool all_finite() const {
    for (const S v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }
};

template <class S>
using TensorPtr = std::shared_ptr<Tensor<S>>;

template <class S>
TensorPtr<S> make_tensor(Shape shape, bool requires_grad = false) {
  for (const auto e : shape) {
    if (e <= 0) throw ShapeError("tensor extent must be positive, got shape " + shape_str(shape));
  }
  auto t = std::make_shared<Tensor<S>>();
  t->data.assign(static_cast<std::size_t>(shape_numel(shape)), S(0));
  t->shape = std::move(shape);
  t->requires_grad = requires_grad;
  return t;
}

template <class S>
TensorPtr<S> make_tensor(Shape shape, std::vector<S> values, bool requires_grad = false) {
  auto t = make_tensor<S>(std::move(shape), requires_grad);
  if (static_cast<std::int64_t>(values.size()) != t->size()) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(t->shape));
  }
  t->data = std::move(values);
  return t;
}

template <class S>
TensorPtr<S> full_tensor(Shape shape, S value, bool requires_grad = false) {
  auto t = make_tensor<S>(std::move(shape), requires_grad);
  std::fill(t->data.begin(), t->data.end(), value);
  return t;
}

template <class S>
TensorPtr<S> scalar_tensor(S value, bool requires_grad = false) {
  auto t = make_tensor<S>(Shape{}, requires_grad);
  t->data[0] = value;
  return t;
}

// Geometry of a (possibly dilated) 2-D convolution. Sampling offsets
// follow input_index = out*stride - pad + k*rate, so the effective
// kernel extent along an axis is rate*(k-1)+1.
struct Conv2dSpec {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel_h = 1;
  std::int64_t kernel_w = 1;
  std::int64_t stride_h = 1;
  std::int64_t stride_w = 1;
  std::int64_t rate_h = 1;
  std::int64_t rate_w = 1;
  std::int64_t pad_h = 0;
  std::int64_t pad_w = 0;

  std::int64_t effective_kh() const { return rate_h * (kernel_h - 1) + 1; }
  std::int64_t effective_kw() const { return rate_w * (kernel_w - 1) + 1; }

  std::int64_t out_h(std::int64_t in_h) const {
    return (in_h + 2 * pad_h - effective_kh()) / stride_h + 1;
  }
  std::int64_t out_w(std::int64_t in_w) const {
    return (in_w + 2 * pad_w - effective_kw()) / stride_w + 1;
  }

  void validate() const {
    if (in_channels < 1 || out_channels < 1)
      throw ConfigError("conv2d channels must be positive");
    if (kernel_h < 1 || kernel_w < 1) throw ConfigError("conv2d kernel extents must be positive");
    if (stride_h < 1 || stride_w < 1) throw ConfigError("conv2d strides must be positive");
    if (rate_h < 1 || rate_w < 1) throw ConfigError("conv2d dilation rates must be positive");
    if (pad_h < 0 || pad_w < 0) throw ConfigError("conv2d padding must be non-negative");
  }

  void validate_output(std::int64_t in_h, std::int64_t in_w) const {
    validate();
    if (out_h(in_h) < 1) {
      throw ConfigError("conv2d output height < 1 along axis H: input " + std::to_string(in_h) +
                        ", pad " + std::to_string(pad_h) + ", effective kernel " +
                        std::to_string(effective_kh()) + ", stride " + std::to_string(stride_h));
    }
    if (out_w(in_w) < 1) {
      throw ConfigError("conv2d output width < 1 along axis W: input " + std::to_string(in_w) +
                        ", pad " + std::to_string(pad_w) + ", effective kernel " +
                        std::to_string(effective_kw()) + ", stride " + std::to_string(stride_w));
    }
  }
};

// Ordered record of executed differentiable operations (a Wengert list).
// backward() replays the closures in exact reverse execution order;
// gradients accumulate additively across fan-out.
template <class S>
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }

  std::size_t size() const { return nodes_.size(); }

  void backward(const TensorPtr<S>& loss) {
    if (!loss) throw ContractError("backward: null loss tensor");
    if (loss->size() != 1) {
      throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss->shape));
    }
    if (!loss->requires_grad) {
      throw ContractError("backward: loss was not produced by tape-recorded operations");
    }
    if (backward_done_) {
      throw GradientError(
          "backward called twice on one tape without reset; gradients would double-accumulate");
    }
    backward_done_ = true;
    loss->ensure_grad()[0] += S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

 private:
  std::vector<std::function<void()>> nodes_;
  bool backward_done_ = false;
};

}  // namespace macnet
