#pragma once

// SSD training losses. Templated on the scalar type so the same code serves
// float training and double-precision gradient checks.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "uda/geometry.hpp"

namespace uda {

inline constexpr double kLogEpsilon = 1e-12;
inline constexpr int kDefaultNegRatio = 3;

template <typename T>
void softmax(std::span<const T> logits, std::span<T> probs) {
  const T m = *std::max_element(logits.begin(), logits.end());
  T z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - m);
    z += probs[i];
  }
  for (auto& p : probs) p /= z;
}

// -log(softmax(logits)[class_id] + eps). When `grad` is non-empty it
// receives d loss / d logits.
template <typename T>
T confidence_loss(std::span<const T> logits, int class_id, std::span<T> grad = {}) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= logits.size()) {
    throw std::out_of_range("confidence_loss: class id outside logit vector");
  }
  std::vector<T> p(logits.size());
  softmax<T>(logits, p);
  const T pc = p[class_id];
  const T loss = -std::log(pc + T(kLogEpsilon));
  if (!grad.empty()) {
    // d(-log(p_c + eps))/dz_j = -(1/(p_c+eps)) * p_c * (delta_cj - p_j)
    const T scale = pc / (pc + T(kLogEpsilon));
    for (std::size_t j = 0; j < logits.size(); ++j) {
      grad[j] = scale * (p[j] - (static_cast<int>(j) == class_id ? T(1) : T(0)));
    }
  }
  return loss;
}

template <typename T>
T smooth_l1(T d) {
  const T a = std::abs(d);
  return a < T(1) ? T(0.5) * d * d : a - T(0.5);
}

template <typename T>
T localization_loss(std::span<const T> pred, std::span<const T> target, std::span<T> grad = {}) {
  T loss = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const T d = pred[i] - target[i];
    loss += smooth_l1(d);
    if (!grad.empty()) grad[i] = std::abs(d) < T(1) ? d : (d > 0 ? T(1) : T(-1));
  }
  return loss;
}

// Picks min(neg_ratio * N, #candidates) negatives among anchors that are not
// positive and are eligible, by descending background confidence loss; ties
// go to the lower anchor index. The result is sorted by anchor index.
template <typename T>
std::vector<std::size_t> hard_negative_mine(std::span<const T> background_loss, std::span<const char> is_positive,
                                            std::span<const char> eligible, int neg_ratio) {
  if (neg_ratio < 1) throw std::invalid_argument("hard_negative_mine: neg_ratio must be >= 1");
  std::size_t num_pos = 0;
  std::vector<std::size_t> cand;
  for (std::size_t a = 0; a < background_loss.size(); ++a) {
    if (is_positive[a]) {
      ++num_pos;
    } else if (eligible.empty() || eligible[a]) {
      cand.push_back(a);
    }
  }
  const std::size_t k = std::min(static_cast<std::size_t>(neg_ratio) * num_pos, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), [&](std::size_t a, std::size_t b) {
    if (background_loss[a] != background_loss[b]) return background_loss[a] > background_loss[b];
    return a < b;
  });
  cand.resize(k);
  std::sort(cand.begin(), cand.end());
  return cand;
}

// Per-anchor training targets for one image.
struct SsdTargets {
  std::vector<int> labels;  // class id per anchor, 0 for non-positive
  std::vector<char> is_positive;
  std::vector<double> offsets;  // 4 per anchor, valid on positives
  int num_positives = 0;
};

template <typename T>
struct SsdLossResult {
  T total = 0;
  T conf_pos = 0;
  T conf_neg = 0;
  T loc = 0;
  int num_positives = 0;
  std::vector<std::size_t> negatives;
};

// (sum_pos conf + sum_neg conf + alpha * sum_pos loc) / N, or 0 when N = 0.
// `logits` holds A rows of (1 + num_classes); `offsets` holds A rows of 4.
// Gradients are written when the grad spans are non-empty (they must be
// sized like the inputs and are overwritten).
template <typename T>
SsdLossResult<T> ssd_loss(std::span<const T> logits, std::span<const T> offsets, int num_classes, const SsdTargets& targets,
                          std::span<const char> eligible, double alpha, int neg_ratio, std::span<T> dlogits = {},
                          std::span<T> doffsets = {}) {
  const std::size_t row = static_cast<std::size_t>(num_classes) + 1;
  const std::size_t na = targets.labels.size();
  if (logits.size() != na * row || offsets.size() != na * 4) throw std::invalid_argument("ssd_loss: output/anchor size mismatch");
  SsdLossResult<T> r;
  r.num_positives = targets.num_positives;
  if (!dlogits.empty()) std::fill(dlogits.begin(), dlogits.end(), T(0));
  if (!doffsets.empty()) std::fill(doffsets.begin(), doffsets.end(), T(0));
  if (targets.num_positives == 0) return r;

  std::vector<T> bg_loss(na);
  for (std::size_t a = 0; a < na; ++a) {
    if (targets.is_positive[a]) continue;
    bg_loss[a] = confidence_loss<T>(logits.subspan(a * row, row), kBackground);
  }
  r.negatives = hard_negative_mine<T>(bg_loss, targets.is_positive, eligible, neg_ratio);

  const T inv_n = T(1) / T(targets.num_positives);
  const bool want_grad = !dlogits.empty();
  for (std::size_t a = 0; a < na; ++a) {
    if (!targets.is_positive[a]) continue;
    auto g = want_grad ? dlogits.subspan(a * row, row) : std::span<T>{};
    r.conf_pos += confidence_loss<T>(logits.subspan(a * row, row), targets.labels[a], g);
    T tgt[4];
    for (int i = 0; i < 4; ++i) tgt[i] = static_cast<T>(targets.offsets[a * 4 + i]);
    auto go = want_grad ? doffsets.subspan(a * 4, 4) : std::span<T>{};
    r.loc += localization_loss<T>(offsets.subspan(a * 4, 4), std::span<const T>(tgt, 4), go);
    if (want_grad) {
      for (auto& v : g) v *= inv_n;
      for (auto& v : go) v *= T(alpha) * inv_n;
    }
  }
  for (std::size_t a : r.negatives) {
    auto g = want_grad ? dlogits.subspan(a * row, row) : std::span<T>{};
    r.conf_neg += confidence_loss<T>(logits.subspan(a * row, row), kBackground, g);
    if (want_grad)
      for (auto& v : g) v *= inv_n;
  }
  r.total = (r.conf_pos + r.conf_neg + T(alpha) * r.loc) * inv_n;
  return r;
}

}  // namespace uda
