#pragma once

// Brute-force reference implementations used by the unit and acceptance
// tests. Written independently of the library: no calls into uda except
// for the plain data types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "uda/geometry.hpp"

namespace oracle {

// Pixel-count IoU on an n x n raster of the unit square.
inline double iou_raster(const uda::Box& a, const uda::Box& b, int n = 1000) {
  long inter = 0, uni = 0;
  for (int y = 0; y < n; ++y) {
    const double py = (y + 0.5) / n;
    for (int x = 0; x < n; ++x) {
      const double px = (x + 0.5) / n;
      const bool ia = px >= a.xmin && px < a.xmax && py >= a.ymin && py < a.ymax;
      const bool ib = px >= b.xmin && px < b.xmax && py >= b.ymin && py < b.ymax;
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni ? static_cast<double>(inter) / uni : 0.0;
}

inline double box_iou(const uda::Box& a, const uda::Box& b) {
  const double w = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double h = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (w <= 0 || h <= 0) return 0.0;
  const double inter = w * h;
  const double aa = (a.xmax - a.xmin) * (a.ymax - a.ymin), ab = (b.xmax - b.xmin) * (b.ymax - b.ymin);
  return inter / (aa + ab - inter);
}

// Greedy NMS with an explicit suppression table: visit in (score desc,
// index asc) order, each survivor strikes out every later same-class box
// it overlaps by more than the threshold.
inline std::vector<std::size_t> nms(const std::vector<uda::Detection>& d, double thr) {
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return d[a].score != d[b].score ? d[a].score > d[b].score : a < b;
  });
  std::vector<char> dead(n, 0);
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = order[i];
    if (dead[p]) continue;
    kept.push_back(p);
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::size_t q = order[j];
      if (d[q].class_id == d[p].class_id && box_iou(d[p].box, d[q].box) > thr) dead[q] = 1;
    }
  }
  return kept;
}

// Full IoU matrix, then: repeatedly take the globally largest remaining
// (gt, anchor) pair with IoU > 0 (scanning gt-major so ties go to the lower
// gt, then the lower anchor), then threshold every other anchor against its
// best gt. Returns the matched gt per anchor, -1 for background.
inline std::vector<int> match(const std::vector<uda::Box>& anchors, const std::vector<uda::Box>& gts, double pos_iou) {
  const std::size_t na = anchors.size(), ng = gts.size();
  std::vector<std::vector<double>> m(ng, std::vector<double>(na));
  for (std::size_t g = 0; g < ng; ++g)
    for (std::size_t a = 0; a < na; ++a) m[g][a] = box_iou(gts[g], anchors[a]);
  std::vector<int> out(na, -1);
  std::vector<char> gt_used(ng, 0), anchor_used(na, 0);
  for (;;) {
    double best = 0;
    int bg = -1, ba = -1;
    for (std::size_t g = 0; g < ng; ++g)
      for (std::size_t a = 0; a < na; ++a)
        if (!gt_used[g] && !anchor_used[a] && m[g][a] > best) {
          best = m[g][a];
          bg = static_cast<int>(g);
          ba = static_cast<int>(a);
        }
    if (bg < 0) break;
    gt_used[bg] = anchor_used[ba] = 1;
    out[ba] = bg;
  }
  for (std::size_t a = 0; a < na; ++a) {
    if (anchor_used[a]) continue;
    int bg = -1;
    double best = 0;
    for (std::size_t g = 0; g < ng; ++g)
      if (m[g][a] > best) {
        best = m[g][a];
        bg = static_cast<int>(g);
      }
    if (bg >= 0 && best >= pos_iou) out[a] = bg;
  }
  return out;
}

// Sort every candidate, take the top k.
inline std::vector<std::size_t> hard_negatives(const std::vector<double>& loss, const std::vector<char>& positive,
                                               const std::vector<char>& eligible, int ratio) {
  std::vector<std::size_t> cand;
  std::size_t pos = 0;
  for (std::size_t a = 0; a < loss.size(); ++a) {
    if (positive[a]) ++pos;
    else if (eligible.empty() || eligible[a]) cand.push_back(a);
  }
  std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
    return loss[a] != loss[b] ? loss[a] > loss[b] : a < b;
  });
  cand.resize(std::min(cand.size(), pos * ratio));
  std::sort(cand.begin(), cand.end());
  return cand;
}

inline std::vector<char> eligibility(const std::vector<float>& bg, const std::vector<char>& positive, double s_neg) {
  std::vector<char> out(bg.size());
  for (std::size_t a = 0; a < bg.size(); ++a) out[a] = !positive[a] && bg[a] >= s_neg;
  return out;
}

inline std::vector<uda::Detection> filter(const std::vector<uda::Detection>& d, double s_pos) {
  std::vector<uda::Detection> out;
  for (const auto& x : d)
    if (x.score >= s_pos) out.push_back(x);
  return out;
}

struct Img {
  std::vector<uda::Detection> dets;
  std::vector<uda::GroundTruth> gts;
};

// Per-class AP: rank, match to the argmax-IoU gt, difficult gts ignored,
// cumulative precision/recall, then 11-point or all-point integration.
inline std::optional<double> voc_ap(const std::vector<Img>& imgs, int cls, double thr, bool eleven) {
  struct Hit {
    double score;
    std::size_t img, k;
  };
  std::vector<Hit> hits;
  int npos = 0;
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    for (const auto& g : imgs[i].gts) npos += g.class_id == cls && !g.difficult;
    for (std::size_t k = 0; k < imgs[i].dets.size(); ++k)
      if (imgs[i].dets[k].class_id == cls) hits.push_back({imgs[i].dets[k].score, i, k});
  }
  if (npos == 0) return std::nullopt;
  std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.score > b.score; });
  std::vector<std::vector<char>> taken(imgs.size());
  for (std::size_t i = 0; i < imgs.size(); ++i) taken[i].assign(imgs[i].gts.size(), 0);
  std::vector<double> prec, rec;
  int tp = 0, fp = 0;
  for (const auto& h : hits) {
    const auto& img = imgs[h.img];
    int best = -1;
    double bi = -1;
    for (std::size_t g = 0; g < img.gts.size(); ++g) {
      if (img.gts[g].class_id != cls) continue;
      const double v = box_iou(img.dets[h.k].box, img.gts[g].box);
      if (v > bi) {
        bi = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && bi >= thr) {
      if (img.gts[best].difficult) {
        taken[h.img][best] = 1;
        continue;
      }
      if (taken[h.img][best]) ++fp;
      else ++tp;
      taken[h.img][best] = 1;
    } else {
      ++fp;
    }
    prec.push_back(static_cast<double>(tp) / (tp + fp));
    rec.push_back(static_cast<double>(tp) / npos);
  }
  if (eleven) {
    double ap = 0;
    for (int t = 0; t <= 10; ++t) {
      double p = 0;
      for (std::size_t i = 0; i < rec.size(); ++i)
        if (rec[i] >= t / 10.0) p = std::max(p, prec[i]);
      ap += p / 11;
    }
    return ap;
  }
  std::vector<double> mr{0}, mp{0};
  mr.insert(mr.end(), rec.begin(), rec.end());
  mp.insert(mp.end(), prec.begin(), prec.end());
  mr.push_back(1);
  mp.push_back(0);
  for (std::size_t i = mp.size() - 1; i > 0; --i) mp[i - 1] = std::max(mp[i - 1], mp[i]);
  double ap = 0;
  for (std::size_t i = 0; i + 1 < mr.size(); ++i)
    if (mr[i + 1] != mr[i]) ap += (mr[i + 1] - mr[i]) * mp[i + 1];
  return ap;
}

struct PrCount {
  int tp = 0, fp = 0, gts = 0;
};

// Counting oracle for precision/recall at one score threshold.
inline PrCount pr_count(const std::vector<std::vector<uda::Detection>>& dets,
                        const std::vector<std::vector<uda::GroundTruth>>& gts, double t, double thr) {
  PrCount c;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    c.gts += static_cast<int>(gts[i].size());
    std::vector<uda::Detection> kept;
    for (const auto& d : dets[i])
      if (d.score >= t) kept.push_back(d);
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    std::vector<char> used(gts[i].size(), 0);
    for (const auto& d : kept) {
      int best = -1;
      double bi = thr;
      for (std::size_t g = 0; g < gts[i].size(); ++g) {
        if (used[g] || gts[i][g].class_id != d.class_id) continue;
        const double v = box_iou(d.box, gts[i][g].box);
        if (v >= bi && (best < 0 || v > bi)) {
          bi = v;
          best = static_cast<int>(g);
        }
      }
      if (best >= 0) {
        used[best] = 1;
        ++c.tp;
      } else {
        ++c.fp;
      }
    }
  }
  return c;
}

// Relative error of an analytic gradient against central differences of f
// at x (step h): max |analytic - numeric| over components, divided by the
// largest component magnitude of either gradient. Component-wise ratios
// are meaningless for entries near zero, where truncation error dominates.
inline double grad_check(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                         const std::vector<double>& analytic, double h = 1e-3) {
  double diff = 0, scale = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double dn = f(x);
    x[i] = keep;
    const double num = (up - dn) / (2 * h);
    diff = std::max(diff, std::abs(num - analytic[i]));
    scale = std::max({scale, std::abs(num), std::abs(analytic[i])});
  }
  return scale > 0 ? diff / scale : diff;
}

inline uda::Box random_box(std::mt19937_64& rng, double min_side = 0.02, double max_side = 0.6) {
  std::uniform_real_distribution<double> side(min_side, max_side), u(0, 1);
  const double w = side(rng), h = side(rng);
  const double x = u(rng) * (1 - w), y = u(rng) * (1 - h);
  return {x, y, x + w, y + h};
}

}  // namespace oracle
