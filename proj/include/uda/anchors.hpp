#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uda/geometry.hpp"

namespace uda {

struct MapSize {
  int h = 0;
  int w = 0;
  bool operator==(const MapSize&) const = default;
};

// Default-box layout. Each cell of map k gets one box per aspect ratio at
// scale s_k and, when `interpolated_square` is set, one extra square box of
// scale sqrt(s_k * s_{k+1}) (s_{K+1} = max_scale).
struct AnchorConfig {
  std::string name;
  int input_size = 128;
  std::vector<MapSize> feature_map_sizes;
  std::vector<double> scales;
  std::vector<std::vector<double>> aspect_ratios;
  double max_scale = 1.0;
  bool interpolated_square = true;
  Variances variances;

  int anchors_per_cell(std::size_t k) const;
  std::size_t num_maps() const { return feature_map_sizes.size(); }
  void validate() const;
};

// Named presets: "toy128" (4 maps, 340 anchors) and "ssd300" (6 maps, 8732 anchors).
AnchorConfig anchor_preset(std::string_view name);

struct AnchorSet {
  std::vector<Box> anchors;
  std::vector<std::size_t> map_offsets;
  std::vector<int> per_cell;
  AnchorConfig config;

  std::size_t size() const { return anchors.size(); }
};

// Order is map-major, row-major, ratio-minor.
AnchorSet generate_anchors(const AnchorConfig& cfg);

struct MatchAssignment {
  std::vector<int> matched_gt_index;  // -1 = background
  std::vector<char> is_positive;
  std::vector<double> matched_iou;
  int num_positives = 0;
};

inline constexpr double kDefaultPositiveIou = 0.5;

// Greedy bipartite "best anchor per ground truth" first (global max IoU pair
// repeatedly, IoU > 0 only), then every remaining anchor whose best IoU
// reaches `pos_iou` becomes positive for its best ground truth. Ties prefer
// the lower ground-truth index, then the lower anchor index.
MatchAssignment match_anchors(const AnchorSet& anchors, std::span<const GroundTruth> gts, double pos_iou = kDefaultPositiveIou);

}  // namespace uda
