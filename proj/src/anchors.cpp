#include "uda/anchors.hpp"

#include <cmath>

#include "uda/error.hpp"

namespace uda {

int AnchorConfig::anchors_per_cell(std::size_t k) const {
  return static_cast<int>(aspect_ratios.at(k).size()) + (interpolated_square ? 1 : 0);
}

void AnchorConfig::validate() const {
  const std::size_t k = feature_map_sizes.size();
  if (k == 0) throw Error(ErrorKind::config, "anchor config: no feature maps");
  if (scales.size() != k || aspect_ratios.size() != k) {
    throw Error(ErrorKind::config, "anchor config: feature_map_sizes, scales and aspect_ratios must have equal length");
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (feature_map_sizes[i].h <= 0 || feature_map_sizes[i].w <= 0) throw Error(ErrorKind::config, "anchor config: empty feature map");
    if (!(scales[i] > 0)) throw Error(ErrorKind::config, "anchor config: scales must be positive");
    if (i > 0 && !(scales[i] > scales[i - 1])) throw Error(ErrorKind::config, "anchor config: scales must be strictly increasing");
    if (aspect_ratios[i].empty()) throw Error(ErrorKind::config, "anchor config: map without aspect ratios");
    for (double r : aspect_ratios[i])
      if (!(r > 0)) throw Error(ErrorKind::config, "anchor config: aspect ratios must be positive");
  }
  if (interpolated_square && !(max_scale >= scales.back())) {
    throw Error(ErrorKind::config, "anchor config: max_scale must not be below the last scale");
  }
}

AnchorConfig anchor_preset(std::string_view name) {
  AnchorConfig cfg;
  cfg.name = std::string(name);
  if (name == "toy128") {
    cfg.input_size = 128;
    cfg.feature_map_sizes = {{8, 8}, {4, 4}, {2, 2}, {1, 1}};
    cfg.scales = {0.18, 0.34, 0.52, 0.74};
    cfg.max_scale = 0.95;
    cfg.aspect_ratios = std::vector<std::vector<double>>(4, {1.0, 2.0, 0.5});
    return cfg;
  }
  if (name == "ssd300") {
    // Box sizes 30, 60, 111, 162, 213, 264 (next 315) pixels on a 300 input.
    cfg.input_size = 300;
    cfg.feature_map_sizes = {{38, 38}, {19, 19}, {10, 10}, {5, 5}, {3, 3}, {1, 1}};
    cfg.scales = {30.0 / 300, 60.0 / 300, 111.0 / 300, 162.0 / 300, 213.0 / 300, 264.0 / 300};
    cfg.max_scale = 315.0 / 300;
    cfg.aspect_ratios = {{1, 2, 0.5}, {1, 2, 0.5, 3, 1.0 / 3}, {1, 2, 0.5, 3, 1.0 / 3},
                         {1, 2, 0.5, 3, 1.0 / 3}, {1, 2, 0.5}, {1, 2, 0.5}};
    return cfg;
  }
  throw Error(ErrorKind::config, "unknown anchor preset '" + std::string(name) + "' (expected toy128 or ssd300)");
}

AnchorSet generate_anchors(const AnchorConfig& cfg) {
  cfg.validate();
  AnchorSet set;
  set.config = cfg;
  for (std::size_t k = 0; k < cfg.num_maps(); ++k) {
    set.map_offsets.push_back(set.anchors.size());
    set.per_cell.push_back(cfg.anchors_per_cell(k));
    const auto [mh, mw] = cfg.feature_map_sizes[k];
    const double s = cfg.scales[k];
    const double s_next = k + 1 < cfg.num_maps() ? cfg.scales[k + 1] : cfg.max_scale;
    for (int y = 0; y < mh; ++y) {
      for (int x = 0; x < mw; ++x) {
        const double cx = (x + 0.5) / mw;
        const double cy = (y + 0.5) / mh;
        for (double r : cfg.aspect_ratios[k]) {
          const double sr = std::sqrt(r);
          set.anchors.push_back(Box::from_center(cx, cy, s * sr, s / sr).clipped());
        }
        if (cfg.interpolated_square) {
          const double e = std::sqrt(s * s_next);
          set.anchors.push_back(Box::from_center(cx, cy, e, e).clipped());
        }
      }
    }
  }
  return set;
}

MatchAssignment match_anchors(const AnchorSet& anchors, std::span<const GroundTruth> gts, double pos_iou) {
  const std::size_t na = anchors.size(), ng = gts.size();
  MatchAssignment m;
  m.matched_gt_index.assign(na, -1);
  m.is_positive.assign(na, 0);
  m.matched_iou.assign(na, 0.0);
  if (ng == 0 || na == 0) return m;

  // overlaps[g * na + a]
  std::vector<double> overlaps(ng * na);
  for (std::size_t g = 0; g < ng; ++g)
    for (std::size_t a = 0; a < na; ++a) overlaps[g * na + a] = iou(gts[g].box, anchors.anchors[a]);

  std::vector<char> gt_done(ng, 0), forced(na, 0);
  for (std::size_t round = 0; round < ng; ++round) {
    double best = 0.0;
    std::size_t bg = ng, ba = na;
    for (std::size_t g = 0; g < ng; ++g) {
      if (gt_done[g]) continue;
      for (std::size_t a = 0; a < na; ++a) {
        if (forced[a]) continue;
        if (overlaps[g * na + a] > best) {
          best = overlaps[g * na + a];
          bg = g;
          ba = a;
        }
      }
    }
    if (bg == ng) break;
    gt_done[bg] = 1;
    forced[ba] = 1;
    m.matched_gt_index[ba] = static_cast<int>(bg);
    m.matched_iou[ba] = best;
  }

  for (std::size_t a = 0; a < na; ++a) {
    if (forced[a]) continue;
    double best = 0.0;
    int bg = -1;
    for (std::size_t g = 0; g < ng; ++g) {
      if (overlaps[g * na + a] > best) {
        best = overlaps[g * na + a];
        bg = static_cast<int>(g);
      }
    }
    if (bg >= 0 && best >= pos_iou) {
      m.matched_gt_index[a] = bg;
      m.matched_iou[a] = best;
    }
  }
  for (std::size_t a = 0; a < na; ++a) {
    if (m.matched_gt_index[a] >= 0) {
      m.is_positive[a] = 1;
      ++m.num_positives;
    }
  }
  return m;
}

}  // namespace uda
