#pragma once

#include <string>
#include <vector>

#include "uda/detector.hpp"
#include "uda/error.hpp"

namespace uda {

struct ConsistencyOptions {
  bool normalize_per_element = false;  // divide by the total element count
  bool stop_gradient_on_clean = false;  // no gradient into the first argument
};

template <typename T>
struct ConsistencyResult {
  T value = 0;
  std::vector<BasicTensor<T>> grad_a;  // d/d a per map, empty tensors when stopped
  std::vector<BasicTensor<T>> grad_b;  // d/d b per map
};

// Sum over maps of ||a_k - b_k||^2, optionally divided by the element count.
// Throws uda::Error(invalid_argument) on a stage-count or shape mismatch.
template <typename T>
ConsistencyResult<T> consistency_loss(const std::vector<BasicTensor<T>>& a, const std::vector<BasicTensor<T>>& b,
                                      const ConsistencyOptions& opts, bool with_grad) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::invalid_argument, "consistency_loss: stage count mismatch (" + std::to_string(a.size()) + " vs " +
                                                 std::to_string(b.size()) + ")");
  }
  double count = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!(a[k].shape() == b[k].shape())) {
      throw Error(ErrorKind::invalid_argument, "consistency_loss: shape mismatch at stage " + std::to_string(k) + ": " +
                                                   a[k].shape().str() + " vs " + b[k].shape().str());
    }
    count += static_cast<double>(a[k].size());
  }
  const double norm = opts.normalize_per_element && count > 0 ? 1.0 / count : 1.0;
  ConsistencyResult<T> r;
  double total = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].size(); ++i) {
      const double d = static_cast<double>(a[k][i]) - static_cast<double>(b[k][i]);
      total += d * d;
    }
  }
  r.value = static_cast<T>(total * norm);
  if (with_grad) {
    r.grad_a.resize(a.size());
    r.grad_b.resize(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      BasicTensor<T> gb(a[k].shape());
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] = static_cast<T>(2.0 * norm * (b[k][i] - a[k][i]));
      if (!opts.stop_gradient_on_clean) {
        BasicTensor<T> ga(gb.shape());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = -gb[i];
        r.grad_a[k] = std::move(ga);
      }
      r.grad_b[k] = std::move(gb);
    }
  }
  return r;
}

inline double consistency_loss(const FeatureMapSet& a, const FeatureMapSet& b, const ConsistencyOptions& opts = {}) {
  return consistency_loss<float>(a.maps, b.maps, opts, false).value;
}

inline ConsistencyResult<float> consistency_loss_with_grad(const FeatureMapSet& a, const FeatureMapSet& b,
                                                           const ConsistencyOptions& opts = {}) {
  return consistency_loss<float>(a.maps, b.maps, opts, true);
}

}  // namespace uda
