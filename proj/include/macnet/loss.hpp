#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "macnet/error.hpp"
#include "macnet/tensor.hpp"

namespace macnet {

// Per-class loss weights w_y = 1 - N_y / N, derived from the training
// split's class counts to counter class imbalance.
struct ClassWeights {
  std::vector<std::int64_t> class_counts;
  std::int64_t total = 0;
  std::vector<double> weights;

  static ClassWeights balanced(std::int64_t num_classes) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 1);
    return compute(counts);
  }

  static ClassWeights compute(const std::vector<std::int64_t>& class_counts) {
    std::int64_t total = 0;
    std::int64_t non_empty = 0;
    for (const auto c : class_counts) {
      if (c < 0) throw ContractError("class weights: negative class count");
      total += c;
      if (c > 0) ++non_empty;
    }
    if (total < 1) throw ContractError("class weights: need at least one instance");
    if (non_empty < 2) {
      throw ContractError(
          "class weights: degenerate, a single non-empty class gets weight 0 and nullifies the "
          "loss");
    }
    ClassWeights cw;
    cw.class_counts = class_counts;
    cw.total = total;
    cw.weights.reserve(class_counts.size());
    for (const auto c : class_counts) {
      cw.weights.push_back(1.0 - static_cast<double>(c) / static_cast<double>(total));
    }
    return cw;
  }

  std::size_t num_classes() const { return weights.size(); }
};

inline ClassWeights compute_class_weights(const std::vector<std::int64_t>& class_counts) {
  return ClassWeights::compute(class_counts);
}

inline constexpr double kLogClamp = 1e-12;

// Weighted categorical cross-entropy over a batch of probability rows:
// loss = -sum_j w_{y_j} * log(max(p_j[y_j], 1e-12)), summed over the
// batch. The mean for logging is this value divided by the batch size.
template <class S>
TensorPtr<S> weighted_cross_entropy(const TensorPtr<S>& probabilities,
                                    const std::vector<int>& labels, const ClassWeights& weights,
                                    Tape<S>* tape = nullptr) {
  if (!probabilities || probabilities->shape.size() != 2) {
    throw ShapeError("weighted_cross_entropy: probabilities must be [N,K]");
  }
  const std::int64_t n = probabilities->shape[0], k = probabilities->shape[1];
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw ShapeError("weighted_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " probability rows");
  }
  if (static_cast<std::int64_t>(weights.num_classes()) != k) {
    throw ShapeError("weighted_cross_entropy: weight count " +
                     std::to_string(weights.num_classes()) + " != classes " + std::to_string(k));
  }
  for (std::int64_t i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] < 0 || labels[static_cast<std::size_t>(i)] >= k) {
      throw LabelError("weighted_cross_entropy: label " +
                       std::to_string(labels[static_cast<std::size_t>(i)]) + " outside [0," +
                       std::to_string(k) + ") at row " + std::to_string(i));
    }
    double row_sum = 0.0;
    for (std::int64_t j = 0; j < k; ++j) {
      row_sum += static_cast<double>(probabilities->data[i * k + j]);
    }
    if (std::abs(row_sum - 1.0) > 1e-6) {
      throw ContractError("weighted_cross_entropy: probability row " + std::to_string(i) +
                          " sums to " + std::to_string(row_sum) + ", not 1");
    }
  }

  double loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const double p = std::max(static_cast<double>(probabilities->data[i * k + y]), kLogClamp);
    loss -= weights.weights[static_cast<std::size_t>(y)] * std::log(p);
  }
  auto out = make_tensor<S>(Shape{});
  out->data[0] = static_cast<S>(loss);

  if (tape && probabilities->requires_grad) {
    out->requires_grad = true;
    TensorPtr<S> p_cap = probabilities, out_cap = out;
    std::vector<int> labels_cap = labels;
    std::vector<double> w_cap = weights.weights;
    tape->record([p_cap, out_cap, labels_cap, w_cap, n, k]() {
      if (!out_cap->has_grad()) return;
      p_cap->ensure_grad();
      const double g = static_cast<double>(out_cap->grad[0]);
      for (std::int64_t i = 0; i < n; ++i) {
        const int y = labels_cap[static_cast<std::size_t>(i)];
        const double p = static_cast<double>(p_cap->data[i * k + y]);
        if (p <= kLogClamp) continue;  // clamped region: constant, zero gradient
        p_cap->grad[i * k + y] -=
            static_cast<S>(g * w_cap[static_cast<std::size_t>(y)] / p);
      }
    });
  }
  return out;
}

}  // namespace macnet
