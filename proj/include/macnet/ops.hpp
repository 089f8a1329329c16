#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "macnet/error.hpp"
#include "macnet/rng.hpp"
#include "macnet/tensor.hpp"

namespace macnet {

enum class Mode { kTrain, kEval };

namespace detail {

template <class S>
void require_rank(const TensorPtr<S>& t, std::size_t rank, const char* op) {
  if (!t || t->shape.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank-" + std::to_string(rank) +
                     " tensor, got " + (t ? shape_str(t->shape) : std::string("null")));
  }
}

template <class S>
void require_same_shape(const TensorPtr<S>& a, const TensorPtr<S>& b, const char* op) {
  if (a->shape != b->shape) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
  }
}

template <class S>
bool wants_grad(Tape<S>* tape, std::initializer_list<const TensorPtr<S>*> inputs) {
  if (!tape) return false;
  for (const auto* t : inputs) {
    if (*t && (*t)->requires_grad) return true;
  }
  return false;
}

// Gathers dilated patches of one sample into a (C*kh*kw) x (OH*OW)
// row-major matrix. Out-of-bounds taps contribute zero.
template <class S>
void im2col(const S* x, std::int64_t channels, std::int64_t in_h, std::int64_t in_w,
            const Conv2dSpec& spec, std::int64_t out_h, std::int64_t out_w, S* col) {
  const std::int64_t out_n = out_h * out_w;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < channels; ++c) {
    for (std::int64_t ki = 0; ki < spec.kernel_h; ++ki) {
      for (std::int64_t kj = 0; kj < spec.kernel_w; ++kj, ++row) {
        S* dst = col + row * out_n;
        const S* src = x + c * in_h * in_w;
        const std::int64_t dy = ki * spec.rate_h - spec.pad_h;
        const std::int64_t dx = kj * spec.rate_w - spec.pad_w;
        for (std::int64_t oh = 0; oh < out_h; ++oh) {
          const std::int64_t ih = oh * spec.stride_h + dy;
          if (ih < 0 || ih >= in_h) {
            std::fill(dst, dst + out_w, S(0));
            dst += out_w;
            continue;
          }
          const S* src_row = src + ih * in_w;
          for (std::int64_t ow = 0; ow < out_w; ++ow) {
            const std::int64_t iw = ow * spec.stride_w + dx;
            *dst++ = (iw >= 0 && iw < in_w) ? src_row[iw] : S(0);
          }
        }
      }
    }
  }
}

// Scatter-adds a column matrix back onto one input sample.
template <class S>
void col2im_add(const S* col, std::int64_t channels, std::int64_t in_h, std::int64_t in_w,
                const Conv2dSpec& spec, std::int64_t out_h, std::int64_t out_w, S* x) {
  const std::int64_t out_n = out_h * out_w;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < channels; ++c) {
    for (std::int64_t ki = 0; ki < spec.kernel_h; ++ki) {
      for (std::int64_t kj = 0; kj < spec.kernel_w; ++kj, ++row) {
        const S* src = col + row * out_n;
        S* dst = x + c * in_h * in_w;
        const std::int64_t dy = ki * spec.rate_h - spec.pad_h;
        const std::int64_t dx = kj * spec.rate_w - spec.pad_w;
        for (std::int64_t oh = 0; oh < out_h; ++oh) {
          const std::int64_t ih = oh * spec.stride_h + dy;
          if (ih < 0 || ih >= in_h) {
            src += out_w;
            continue;
          }
          S* dst_row = dst + ih * in_w;
          for (std::int64_t ow = 0; ow < out_w; ++ow) {
            const std::int64_t iw = ow * spec.stride_w + dx;
            if (iw >= 0 && iw < in_w) dst_row[iw] += src[ow];
          }
          src += out_w;
        }
      }
    }
  }
}

}  // namespace detail

// Dilated 2-D cross-correlation (no kernel flip). input [N,C,H,W],
// weights [F,C,kh,kw], bias [F] or null. Accumulation over the
// (c,kh,kw) axis runs in ascending index order, matching a direct
// gathered-loop evaluation term for term.
template <class S>
TensorPtr<S> conv2d(const TensorPtr<S>& input, const TensorPtr<S>& weights,
                    const TensorPtr<S>& bias, const Conv2dSpec& spec, Tape<S>* tape = nullptr) {
  detail::require_rank(input, 4, "conv2d input");
  detail::require_rank(weights, 4, "conv2d weights");
  if (weights->shape[0] != spec.out_channels || weights->shape[1] != spec.in_channels ||
      weights->shape[2] != spec.kernel_h || weights->shape[3] != spec.kernel_w) {
    throw ShapeError("conv2d: weight shape " + shape_str(weights->shape) +
                     " inconsistent with spec [F=" + std::to_string(spec.out_channels) +
                     ",C=" + std::to_string(spec.in_channels) + ",kh=" + std::to_string(spec.kernel_h) +
                     ",kw=" + std::to_string(spec.kernel_w) + "]");
  }
  if (input->shape[1] != spec.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(input->shape[1]) +
                     " channels, weights expect " + std::to_string(spec.in_channels));
  }
  if (bias) {
    detail::require_rank(bias, 1, "conv2d bias");
    if (bias->shape[0] != spec.out_channels) {
      throw ShapeError("conv2d: bias extent " + std::to_string(bias->shape[0]) +
                       " != out_channels " + std::to_string(spec.out_channels));
    }
  }
  const std::int64_t n = input->shape[0], c = input->shape[1];
  const std::int64_t in_h = input->shape[2], in_w = input->shape[3];
  spec.validate_output(in_h, in_w);
  const std::int64_t oh = spec.out_h(in_h), ow = spec.out_w(in_w);
  const std::int64_t f = spec.out_channels;
  const std::int64_t k_rows = c * spec.kernel_h * spec.kernel_w;
  const std::int64_t out_n = oh * ow;

  auto out = make_tensor<S>({n, f, oh, ow});
  std::vector<S> col(static_cast<std::size_t>(k_rows * out_n));
  for (std::int64_t s = 0; s < n; ++s) {
    detail::im2col(input->data.data() + s * c * in_h * in_w, c, in_h, in_w, spec, oh, ow,
                   col.data());
    S* y = out->data.data() + s * f * out_n;
    for (std::int64_t fo = 0; fo < f; ++fo) {
      S* y_row = y + fo * out_n;
      std::fill(y_row, y_row + out_n, bias ? bias->data[fo] : S(0));
      const S* w_row = weights->data.data() + fo * k_rows;
      for (std::int64_t k = 0; k < k_rows; ++k) {
        const S w = w_row[k];
        if (w == S(0)) continue;
        const S* c_row = col.data() + k * out_n;
        for (std::int64_t o = 0; o < out_n; ++o) y_row[o] += w * c_row[o];
      }
    }
  }

  if (detail::wants_grad(tape, {&input, &weights, &bias})) {
    out->requires_grad = true;
    Conv2dSpec sp = spec;
    TensorPtr<S> in_cap = input, w_cap = weights, b_cap = bias, out_cap = out;
    tape->record([in_cap, w_cap, b_cap, out_cap, sp, n, c, in_h, in_w, oh, ow, f, k_rows,
                  out_n]() {
      if (!out_cap->has_grad()) return;
      const S* gy_all = out_cap->grad.data();
      std::vector<S> col(static_cast<std::size_t>(k_rows * out_n));
      std::vector<S> dcol;
      const bool need_dx = in_cap->requires_grad;
      if (need_dx) {
        dcol.resize(static_cast<std::size_t>(k_rows * out_n));
        in_cap->ensure_grad();
      }
      if (w_cap->requires_grad) w_cap->ensure_grad();
      if (b_cap && b_cap->requires_grad) b_cap->ensure_grad();
      for (std::int64_t s = 0; s < n; ++s) {
        const S* gy = gy_all + s * f * out_n;
        if (b_cap && b_cap->requires_grad) {
          for (std::int64_t fo = 0; fo < f; ++fo) {
            S acc = S(0);
            const S* gy_row = gy + fo * out_n;
            for (std::int64_t o = 0; o < out_n; ++o) acc += gy_row[o];
            b_cap->grad[fo] += acc;
          }
        }
        if (w_cap->requires_grad || need_dx) {
          detail::im2col(in_cap->data.data() + s * c * in_h * in_w, c, in_h, in_w, sp, oh, ow,
                         col.data());
        }
        if (w_cap->requires_grad) {
          for (std::int64_t fo = 0; fo < f; ++fo) {
            const S* gy_row = gy + fo * out_n;
            S* gw_row = w_cap->grad.data() + fo * k_rows;
            for (std::int64_t k = 0; k < k_rows; ++k) {
              const S* c_row = col.data() + k * out_n;
              S acc = S(0);
              for (std::int64_t o = 0; o < out_n; ++o) acc += gy_row[o] * c_row[o];
              gw_row[k] += acc;
            }
          }
        }
        if (need_dx) {
          std::fill(dcol.begin(), dcol.end(), S(0));
          for (std::int64_t k = 0; k < k_rows; ++k) {
            S* d_row = dcol.data() + k * out_n;
            for (std::int64_t fo = 0; fo < f; ++fo) {
              const S w = w_cap->data[fo * k_rows + k];
              if (w == S(0)) continue;
              const S* gy_row = gy + fo * out_n;
              for (std::int64_t o = 0; o < out_n; ++o) d_row[o] += w * gy_row[o];
            }
          }
          detail::col2im_add(dcol.data(), c, in_h, in_w, sp, oh, ow,
                             in_cap->grad.data() + s * c * in_h * in_w);
        }
      }
    });
  }
  return out;
}

// Per-pixel linear map over channels; weights [F,C,1,1]. Spatial
// extents are unchanged. Implemented directly (no patch gathering);
// channel accumulation order matches conv2d's.
template <class S>
TensorPtr<S> pointwise_conv(const TensorPtr<S>& input, const TensorPtr<S>& weights,
                            const TensorPtr<S>& bias, Tape<S>* tape = nullptr) {
  detail::require_rank(input, 4, "pointwise_conv input");
  detail::require_rank(weights, 4, "pointwise_conv weights");
  if (weights->shape[2] != 1 || weights->shape[3] != 1) {
    throw ConfigError("pointwise_conv: kernel must be 1x1, got " + shape_str(weights->shape));
  }
  const std::int64_t n = input->shape[0], c = input->shape[1];
  const std::int64_t h = input->shape[2], w = input->shape[3];
  const std::int64_t f = weights->shape[0];
  if (weights->shape[1] != c) {
    throw ShapeError("pointwise_conv: input has " + std::to_string(c) + " channels, weights expect " +
                     std::to_string(weights->shape[1]));
  }
  if (bias) {
    detail::require_rank(bias, 1, "pointwise_conv bias");
    if (bias->shape[0] != f) {
      throw ShapeError("pointwise_conv: bias extent " + std::to_string(bias->shape[0]) +
                       " != out_channels " + std::to_string(f));
    }
  }
  const std::int64_t hw = h * w;
  auto out = make_tensor<S>({n, f, h, w});
  for (std::int64_t s = 0; s < n; ++s) {
    const S* x = input->data.data() + s * c * hw;
    S* y = out->data.data() + s * f * hw;
    for (std::int64_t fo = 0; fo < f; ++fo) {
      S* y_row = y + fo * hw;
      std::fill(y_row, y_row + hw, bias ? bias->data[fo] : S(0));
      for (std::int64_t ci = 0; ci < c; ++ci) {
        const S wv = weights->data[fo * c + ci];
        if (wv == S(0)) continue;
        const S* x_row = x + ci * hw;
        for (std::int64_t o = 0; o < hw; ++o) y_row[o] += wv * x_row[o];
      }
    }
  }

  if (detail::wants_grad(tape, {&input, &weights, &bias})) {
    out->requires_grad = true;
    TensorPtr<S> in_cap = input, w_cap = weights, b_cap = bias, out_cap = out;
    tape->record([in_cap, w_cap, b_cap, out_cap, n, c, f, hw]() {
      if (!out_cap->has_grad()) return;
      if (in_cap->requires_grad) in_cap->ensure_grad();
      if (w_cap->requires_grad) w_cap->ensure_grad();
      if (b_cap && b_cap->requires_grad) b_cap->ensure_grad();
      for (std::int64_t s = 0; s < n; ++s) {
        const S* gy = out_cap->grad.data() + s * f * hw;
        const S* x = in_cap->data.data() + s * c * hw;
        for (std::int64_t fo = 0; fo < f; ++fo) {
          const S* gy_row = gy + fo * hw;
          if (b_cap && b_cap->requires_grad) {
            S acc = S(0);
            for (std::int64_t o = 0; o < hw; ++o) acc += gy_row[o];
            b_cap->grad[fo] += acc;
          }
          for (std::int64_t ci = 0; ci < c; ++ci) {
            if (w_cap->requires_grad) {
              const S* x_row = x + ci * hw;
              S acc = S(0);
              for (std::int64_t o = 0; o < hw; ++o) acc += gy_row[o] * x_row[o];
              w_cap->grad[fo * c + ci] += acc;
            }
            if (in_cap->requires_grad) {
              const S wv = w_cap->data[fo * c + ci];
              if (wv == S(0)) continue;
              S* gx_row = in_cap->grad.data() + s * c * hw + ci * hw;
              for (std::int64_t o = 0; o < hw; ++o) gx_row[o] += wv * gy_row[o];
            }
          }
        }
      }
    });
  }
  return out;
}

// Affine map: input [N,D] x weights [D,M] + bias [M] -> [N,M].
template <class S>
TensorPtr<S> linear(const TensorPtr<S>& input, const TensorPtr<S>& weights,
                    const TensorPtr<S>& bias, Tape<S>* tape = nullptr) {
  detail::require_rank(input, 2, "linear input");
  detail::require_rank(weights, 2, "linear weights");
  const std::int64_t n = input->shape[0], d = input->shape[1];
  const std::int64_t m = weights->shape[1];
  if (weights->shape[0] != d) {
    throw ShapeError("linear: inner extents disagree, input " + shape_str(input->shape) +
                     " vs weights " + shape_str(weights->shape));
  }
  if (bias) {
    detail::require_rank(bias, 1, "linear bias");
    if (bias->shape[0] != m) {
      throw ShapeError("linear: bias extent " + std::to_string(bias->shape[0]) + " != " +
                       std::to_string(m));
    }
  }
  auto out = make_tensor<S>({n, m});
  for (std::int64_t i = 0; i < n; ++i) {
    S* y = out->data.data() + i * m;
    if (bias) {
      std::copy(bias->data.begin(), bias->data.end(), y);
    }
    const S* x = input->data.data() + i * d;
    for (std::int64_t k = 0; k < d; ++k) {
      const S xv = x[k];
      if (xv == S(0)) continue;
      const S* w_row = weights->data.data() + k * m;
      for (std::int64_t j = 0; j < m; ++j) y[j] += xv * w_row[j];
    }
  }

  if (detail::wants_grad(tape, {&input, &weights, &bias})) {
    out->requires_grad = true;
    TensorPtr<S> in_cap = input, w_cap = weights, b_cap = bias, out_cap = out;
    tape->record([in_cap, w_cap, b_cap, out_cap, n, d, m]() {
      if (!out_cap->has_grad()) return;
      const S* gy_all = out_cap->grad.data();
      if (b_cap && b_cap->requires_grad) {
        b_cap->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) {
          const S* gy = gy_all + i * m;
          for (std::int64_t j = 0; j < m; ++j) b_cap->grad[j] += gy[j];
        }
      }
      if (w_cap->requires_grad) {
        w_cap->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) {
          const S* gy = gy_all + i * m;
          const S* x = in_cap->data.data() + i * d;
          for (std::int64_t k = 0; k < d; ++k) {
            const S xv = x[k];
            if (xv == S(0)) continue;
            S* gw = w_cap->grad.data() + k * m;
            for (std::int64_t j = 0; j < m; ++j) gw[j] += xv * gy[j];
          }
        }
      }
      if (in_cap->requires_grad) {
        in_cap->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) {
          const S* gy = gy_all + i * m;
          S* gx = in_cap->grad.data() + i * d;
          for (std::int64_t k = 0; k < d; ++k) {
            const S* w_row = w_cap->data.data() + k * m;
            S acc = S(0);
            for (std::int64_t j = 0; j < m; ++j) acc += gy[j] * w_row[j];
            gx[k] += acc;
          }
        }
      }
    });
  }
  return out;
}

// Elementwise max(0, x). The subgradient at exactly 0 is 0.
template <class S>
TensorPtr<S> relu(const TensorPtr<S>& input, Tape<S>* tape = nullptr) {
  auto out = make_tensor<S>(input->shape);
  for (std::size_t i = 0; i < input->data.size(); ++i) {
    out->data[i] = input->data[i] > S(0) ? input->data[i] : S(0);
  }
  if (detail::wants_grad(tape, {&input})) {
    out->requires_grad = true;
    TensorPtr<S> in_cap = input, out_cap = out;
    tape->record([in_cap, out_cap]() {
      if (!out_cap->has_grad()) return;
      in_cap->ensure_grad();
      for (std::size_t i = 0; i < in_cap->data.size(); ++i) {
        if (in_cap->data[i] > S(0)) in_cap->grad[i] += out_cap->grad[i];
      }
    });
  }
  return out;
}

// Running first/second moments for one batch-norm layer, shape [C] each.
// These are state buffers, not graph tensors: they mutate only inside a
// train-mode forward pass.
template <class S>
struct BnState {
  TensorPtr<S> running_mean;
  TensorPtr<S> running_var;
  double momentum = 0.1;

  static BnState make(std::int64_t channels, double momentum = 0.1) {
    BnState st;
    st.running_mean = make_tensor<S>({channels});
    st.running_var = full_tensor<S>({channels}, S(1));
    st.momentum = momentum;
    return st;
  }
};

inline constexpr double kBnEpsilon = 1e-5;

// Per-channel batch normalization over [N,C,H,W]. Train mode uses batch
// moments (biased variance) and blends the running buffers; eval mode
// uses the stored running moments.
template <class S>
TensorPtr<S> batch_norm(const TensorPtr<S>& input, const TensorPtr<S>& gamma,
                        const TensorPtr<S>& beta, BnState<S>& state, Mode mode,
                        Tape<S>* tape = nullptr) {
  detail::require_rank(input, 4, "batch_norm input");
  const std::int64_t n = input->shape[0], c = input->shape[1];
  const std::int64_t h = input->shape[2], w = input->shape[3];
  detail::require_rank(gamma, 1, "batch_norm gamma");
  detail::require_rank(beta, 1, "batch_norm beta");
  if (gamma->shape[0] != c || beta->shape[0] != c || state.running_mean->shape[0] != c) {
    throw ShapeError("batch_norm: per-channel extents disagree with input channels " +
                     std::to_string(c));
  }
  const std::int64_t hw = h * w;
  const std::int64_t count = n * hw;
  auto out = make_tensor<S>(input->shape);

  std::vector<double> mean(c, 0.0), inv_std(c, 0.0);
  if (mode == Mode::kTrain) {
    if (count < 2) {
      throw ContractError("batch_norm: degenerate statistics, train mode needs N*H*W >= 2, got " +
                          std::to_string(count));
    }
    for (std::int64_t ci = 0; ci < c; ++ci) {
      double acc = 0.0;
      for (std::int64_t s = 0; s < n; ++s) {
        const S* x = input->data.data() + (s * c + ci) * hw;
        for (std::int64_t o = 0; o < hw; ++o) acc += static_cast<double>(x[o]);
      }
      const double mu = acc / static_cast<double>(count);
      double var_acc = 0.0;
      for (std::int64_t s = 0; s < n; ++s) {
        const S* x = input->data.data() + (s * c + ci) * hw;
        for (std::int64_t o = 0; o < hw; ++o) {
          const double d = static_cast<double>(x[o]) - mu;
          var_acc += d * d;
        }
      }
      const double var = var_acc / static_cast<double>(count);
      mean[ci] = mu;
      inv_std[ci] = 1.0 / std::sqrt(var + kBnEpsilon);
      // Unbiased variance feeds the running buffer (PyTorch convention).
      const double var_unbiased = var_acc / static_cast<double>(count - 1);
      const double m = state.momentum;
      state.running_mean->data[ci] =
          static_cast<S>((1.0 - m) * static_cast<double>(state.running_mean->data[ci]) + m * mu);
      state.running_var->data[ci] = static_cast<S>(
          (1.0 - m) * static_cast<double>(state.running_var->data[ci]) + m * var_unbiased);
    }
  } else {
    for (std::int64_t ci = 0; ci < c; ++ci) {
      mean[ci] = static_cast<double>(state.running_mean->data[ci]);
      inv_std[ci] = 1.0 / std::sqrt(static_cast<double>(state.running_var->data[ci]) + kBnEpsilon);
    }
  }

  for (std::int64_t s = 0; s < n; ++s) {
    for (std::int64_t ci = 0; ci < c; ++ci) {
      const S* x = input->data.data() + (s * c + ci) * hw;
      S* y = out->data.data() + (s * c + ci) * hw;
      const S g = gamma->data[ci], b = beta->data[ci];
      const S mu = static_cast<S>(mean[ci]), is = static_cast<S>(inv_std[ci]);
      for (std::int64_t o = 0; o < hw; ++o) y[o] = g * (x[o] - mu) * is + b;
    }
  }

  if (detail::wants_grad(tape, {&input, &gamma, &beta})) {
    out->requires_grad = true;
    TensorPtr<S> in_cap = input, g_cap = gamma, b_cap = beta, out_cap = out;
    const bool train = (mode == Mode::kTrain);
    tape->record([in_cap, g_cap, b_cap, out_cap, mean, inv_std, n, c, hw, count, train]() {
      if (!out_cap->has_grad()) return;
      const bool need_dx = in_cap->requires_grad;
      if (need_dx) in_cap->ensure_grad();
      if (g_cap->requires_grad) g_cap->ensure_grad();
      if (b_cap->requires_grad) b_cap->ensure_grad();
      for (std::int64_t ci = 0; ci < c; ++ci) {
        const double mu = mean[ci], is = inv_std[ci];
        const double g = static_cast<double>(g_cap->data[ci]);
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (std::int64_t s = 0; s < n; ++s) {
          const S* x = in_cap->data.data() + (s * c + ci) * hw;
          const S* gy = out_cap->grad.data() + (s * c + ci) * hw;
          for (std::int64_t o = 0; o < hw; ++o) {
            const double xhat = (static_cast<double>(x[o]) - mu) * is;
            sum_gy += static_cast<double>(gy[o]);
            sum_gy_xhat += static_cast<double>(gy[o]) * xhat;
          }
        }
        if (g_cap->requires_grad) g_cap->grad[ci] += static_cast<S>(sum_gy_xhat);
        if (b_cap->requires_grad) b_cap->grad[ci] += static_cast<S>(sum_gy);
        if (!need_dx) continue;
        const double inv_count = 1.0 / static_cast<double>(count);
        for (std::int64_t s = 0; s < n; ++s) {
          const S* x = in_cap->data.data() + (s * c + ci) * hw;
          const S* gy = out_cap->grad.data() + (s * c + ci) * hw;
          S* gx = in_cap->grad.data() + (s * c + ci) * hw;
          for (std::int64_t o = 0; o < hw; ++o) {
            const double xhat = (static_cast<double>(x[o]) - mu) * is;
            double d;
            if (train) {
              d = g * is *
                  (static_cast<double>(gy[o]) - inv_count * sum_gy - inv_count * xhat * sum_gy_xhat);
            } else {
              d = g * is * static_cast<double>(gy[o]);
            }
            gx[o] += static_cast<S>(d);
          }
        }
      }
    });
  }
  return out;
}

// Inverted dropout: train mode zeroes each element with probability p
// and scales survivors by 1/(1-p); eval mode is the identity.
template <class S>
TensorPtr<S> dropout(const TensorPtr<S>& input, double p, Mode mode, Rng& rng,
                     Tape<S>* tape = nullptr) {
  if (p < 0.0 || p >= 1.0) {
    throw ConfigError("dropout: drop probability must satisfy 0 <= p < 1, got " +
                      std::to_string(p));
  }
  if (mode == Mode::kEval || p == 0.0) return input;

  const S scale = static_cast<S>(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<std::uint8_t>>(input->data.size());
  auto out = make_tensor<S>(input->shape);
  for (std::size_t i = 0; i < input->data.size(); ++i) {
    const bool keep = uniform01(rng) >= p;
    (*mask)[i] = keep ? 1 : 0;
    out->data[i] = keep ? input->data[i] * scale : S(0);
  }
  if (detail::wants_grad(tape, {&input})) {
    out->requires_grad = true;
    TensorPtr<S> in_cap = input, out_cap = out;
    tape->record([in_cap, out_cap, mask, scale]() {
      if (!out_cap->has_grad()) return;
      in_cap->ensure_grad();
      for (std::size_t i = 0; i < in_cap->data.size(); ++i) {
        if ((*mask)[i]) in_cap->grad[i] += out_cap->grad[i] * scale;
      }
    });
  }
  return out;
}

// Row-wise softmax over [N,K], computed with max-subtraction.
template <class S>
TensorPtr<S> softmax(const TensorPtr<S>& input, Tape<S>* tape = nullptr) {
  detail::require_rank(input, 2, "softmax input");
  const std::int64_t n = input->shape[0], k = input->shape[1];
  auto out = make_tensor<S>(input->shape);
  for (std::int64_t i = 0; i < n; ++i) {
    const S* x = input->data.data() + i * k;
    S* y = out->data.data() + i * k;
    double mx = static_cast<double>(x[0]);
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(x[j]));
    double sum = 0.0;
    for (std::int64_t j = 0; j < k; ++j) {
      const double e = std::exp(static_cast<double>(x[j]) - mx);
      y[j] = static_cast<S>(e);
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::int64_t j = 0; j < k; ++j) y[j] = static_cast<S>(static_cast<double>(y[j]) * inv);
  }
  if (detail::wants_grad(tape, {&input})) {
    out->requires_grad = true;
    TensorPtr<S> in_cap = input, out_cap = out;
    tape->record([in_cap, out_cap, n, k]() {
      if (!out_cap->has_grad()) return;
      in_cap->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) {
        const S* y = out_cap->data.data() + i * k;
        const S* gy = out_cap->grad.data() + i * k;
        S* gx = in_cap->grad.data() + i * k;
        double dot = 0.0;
        for (std::int64_t j = 0; j < k; ++j) dot += static_cast<double>(gy[j]) * static_cast<double>(y[j]);
        for (std::int64_t j = 0; j < k; ++j) {
          gx[j] += static_cast<S>(static_cast<double>(y[j]) * (static_cast<double>(gy[j]) - dot));
        }
      }
    });
  }
  return out;
}

// Non-overlapping f x f window means over [N,C,H,W]; H and W must be
// divisible by the factor.
template <class S>
TensorPtr<S> downsample_avg(const TensorPtr<S>& input, std::int64_t factor,
                            Tape<S>* tape = nullptr) {
  detail::require_rank(input, 4, "downsample_avg input");
  if (factor < 1) throw ConfigError("downsample_avg: factor must be >= 1");
  const std::int64_t n = input->shape[0], c = input->shape[1];
  const std::int64_t h = input->shape[2], w = input->shape[3];
  if (h % factor != 0 || w % factor != 0) {
    throw ShapeError("downsample_avg: extents " + std::to_string(h) + "x" + std::to_string(w) +
                     " not divisible by factor " + std::to_string(factor));
  }
  const std::int64_t oh = h / factor, ow = w / factor;
  auto out = make_tensor<S>({n, c, oh, ow});
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::int64_t s = 0; s < n * c; ++s) {
    const S* x = input->data.data() + s * h * w;
    S* y = out->data.data() + s * oh * ow;
    for (std::int64_t i = 0; i < oh; ++i) {
      for (std::int64_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::int64_t di = 0; di < factor; ++di) {
          const S* row = x + (i * factor + di) * w + j * factor;
          for (std::int64_t dj = 0; dj < factor; ++dj) acc += static_cast<double>(row[dj]);
        }
        y[i * ow + j] = static_cast<S>(acc * inv);
      }
    }
  }
  if (detail::wants_grad(tape, {&input})) {
    out->requires_grad = true;
    TensorPtr<S> in_cap = input, out_cap = out;
    tape->record([in_cap, out_cap, n, c, h, w, oh, ow, factor, inv]() {
      if (!out_cap->has_grad()) return;
      in_cap->ensure_grad();
      for (std::int64_t s = 0; s < n * c; ++s) {
        S* gx = in_cap->grad.data() + s * h * w;
        const S* gy = out_cap->grad.data() + s * oh * ow;
        for (std::int64_t i = 0; i < oh; ++i) {
          for (std::int64_t j = 0; j < ow; ++j) {
            const S g = static_cast<S>(static_cast<double>(gy[i * ow + j]) * inv);
            for (std::int64_t di = 0; di < factor; ++di) {
              S* row = gx + (i * factor + di) * w + j * factor;
              for (std::int64_t dj = 0; dj < factor; ++dj) row[dj] += g;
            }
          }
        }
      }
    });
  }
  return out;
}

// Per-channel spatial mean: [N,C,H,W] -> [N,C].
template <class S>
TensorPtr<S> global_avg_pool(const TensorPtr<S>& input, Tape<S>* tape = nullptr) {
  detail::require_rank(input, 4, "global_avg_pool input");
  const std::int64_t n = input->shape[0], c = input->shape[1];
  const std::int64_t hw = input->shape[2] * input->shape[3];
  auto out = make_tensor<S>({n, c});
  const double inv = 1.0 / static_cast<double>(hw);
  for (std::int64_t s = 0; s < n * c; ++s) {
    const S* x = input->data.data() + s * hw;
    double acc = 0.0;
    for (std::int64_t o = 0; o < hw; ++o) acc += static_cast<double>(x[o]);
    out->data[s] = static_cast<S>(acc * inv);
  }
  if (detail::wants_grad(tape, {&input})) {
    out->requires_grad = true;
    TensorPtr<S> in_cap = input, out_cap = out;
    tape->record([in_cap, out_cap, n, c, hw, inv]() {
      if (!out_cap->has_grad()) return;
      in_cap->ensure_grad();
      for (std::int64_t s = 0; s < n * c; ++s) {
        const S g = static_cast<S>(static_cast<double>(out_cap->grad[s]) * inv);
        S* gx = in_cap->grad.data() + s * hw;
        for (std::int64_t o = 0; o < hw; ++o) gx[o] += g;
      }
    });
  }
  return out;
}

// Elementwise sum of two same-shape tensors.
template <class S>
TensorPtr<S> add(const TensorPtr<S>& a, const TensorPtr<S>& b, Tape<S>* tape = nullptr) {
  detail::require_same_shape(a, b, "add");
  auto out = make_tensor<S>(a->shape);
  for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
  if (detail::wants_grad(tape, {&a, &b})) {
    out->requires_grad = true;
    TensorPtr<S> a_cap = a, b_cap = b, out_cap = out;
    tape->record([a_cap, b_cap, out_cap]() {
      if (!out_cap->has_grad()) return;
      if (a_cap->requires_grad) {
        a_cap->ensure_grad();
        for (std::size_t i = 0; i < a_cap->data.size(); ++i) a_cap->grad[i] += out_cap->grad[i];
      }
      if (b_cap->requires_grad) {
        b_cap->ensure_grad();
        for (std::size_t i = 0; i < b_cap->data.size(); ++i) b_cap->grad[i] += out_cap->grad[i];
      }
    });
  }
  return out;
}

// Elementwise product of two same-shape tensors.
template <class S>
TensorPtr<S> mul(const TensorPtr<S>& a, const TensorPtr<S>& b, Tape<S>* tape = nullptr) {
  detail::require_same_shape(a, b, "mul");
  auto out = make_tensor<S>(a->shape);
  for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
  if (detail::wants_grad(tape, {&a, &b})) {
    out->requires_grad = true;
    TensorPtr<S> a_cap = a, b_cap = b, out_cap = out;
    tape->record([a_cap, b_cap, out_cap]() {
      if (!out_cap->has_grad()) return;
      if (a_cap->requires_grad) {
        a_cap->ensure_grad();
        for (std::size_t i = 0; i < a_cap->data.size(); ++i)
          a_cap->grad[i] += out_cap->grad[i] * b_cap->data[i];
      }
      if (b_cap->requires_grad) {
        b_cap->ensure_grad();
        for (std::size_t i = 0; i < b_cap->data.size(); ++i)
          b_cap->grad[i] += out_cap->grad[i] * a_cap->data[i];
      }
    });
  }
  return out;
}

// Sum over all elements -> scalar (rank-0 tensor).
template <class S>
TensorPtr<S> sum_all(const TensorPtr<S>& input, Tape<S>* tape = nullptr) {
  auto out = make_tensor<S>(Shape{});
  double acc = 0.0;
  for (const S v : input->data) acc += static_cast<double>(v);
  out->data[0] = static_cast<S>(acc);
  if (detail::wants_grad(tape, {&input})) {
    out->requires_grad = true;
    TensorPtr<S> in_cap = input, out_cap = out;
    tape->record([in_cap, out_cap]() {
      if (!out_cap->has_grad()) return;
      in_cap->ensure_grad();
      const S g = out_cap->grad[0];
      for (std::size_t i = 0; i < in_cap->data.size(); ++i) in_cap->grad[i] += g;
    });
  }
  return out;
}

// Concatenates [N,Ci,H,W] tensors along the channel axis.
template <class S>
TensorPtr<S> concat_channels(const std::vector<TensorPtr<S>>& parts, Tape<S>* tape = nullptr) {
  if (parts.empty()) throw ContractError("concat_channels: no inputs");
  detail::require_rank(parts[0], 4, "concat_channels input");
  const std::int64_t n = parts[0]->shape[0];
  const std::int64_t h = parts[0]->shape[2], w = parts[0]->shape[3];
  std::int64_t c_total = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    detail::require_rank(p, 4, "concat_channels input");
    if (p->shape[0] != n || p->shape[2] != h || p->shape[3] != w) {
      throw ShapeError("concat_channels: extents disagree, " + shape_str(parts[0]->shape) +
                       " vs " + shape_str(p->shape));
    }
    c_total += p->shape[1];
    any_grad = any_grad || p->requires_grad;
  }
  const std::int64_t hw = h * w;
  auto out = make_tensor<S>({n, c_total, h, w});
  for (std::int64_t s = 0; s < n; ++s) {
    std::int64_t c_off = 0;
    for (const auto& p : parts) {
      const std::int64_t pc = p->shape[1];
      std::copy(p->data.begin() + s * pc * hw, p->data.begin() + (s + 1) * pc * hw,
                out->data.begin() + (s * c_total + c_off) * hw);
      c_off += pc;
    }
  }
  if (tape && any_grad) {
    out->requires_grad = true;
    std::vector<TensorPtr<S>> parts_cap = parts;
    TensorPtr<S> out_cap = out;
    tape->record([parts_cap, out_cap, n, c_total, hw]() {
      if (!out_cap->has_grad()) return;
      for (std::int64_t s = 0; s < n; ++s) {
        std::int64_t c_off = 0;
        for (const auto& p : parts_cap) {
          const std::int64_t pc = p->shape[1];
          if (p->requires_grad) {
            p->ensure_grad();
            const S* gy = out_cap->grad.data() + (s * c_total + c_off) * hw;
            S* gp = p->grad.data() + s * pc * hw;
            for (std::int64_t i = 0; i < pc * hw; ++i) gp[i] += gy[i];
          }
          c_off += pc;
        }
      }
    });
  }
  return out;
}

}  // namespace macnet
