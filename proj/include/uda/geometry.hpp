#pragma once

#include <array>
#include <span>
#include <vector>

namespace uda {

// Axis-aligned box in normalized image coordinates.
struct Box {
  double xmin = 0, ymin = 0, xmax = 0, ymax = 0;

  static Box from_center(double cx, double cy, double w, double h) {
    return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
  }
  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  double cx() const { return (xmin + xmax) / 2; }
  double cy() const { return (ymin + ymax) / 2; }
  bool valid() const;
  Box clipped() const;
  bool operator==(const Box&) const = default;
};

inline constexpr int kBackground = 0;

struct Detection {
  Box box;
  int class_id = 1;
  double score = 0;
};

enum class LabelSource { annotated, pseudo };

struct GroundTruth {
  Box box;
  int class_id = 1;
  LabelSource source = LabelSource::annotated;
  bool difficult = false;
  double score = 1.0;  // originating detector score for pseudo labels
};

double iou(const Box& a, const Box& b);

// Per-class greedy NMS. Returns the indices of kept detections, ordered by
// descending score with ties broken by lower input index. A box is
// suppressed when its IoU with an already kept same-class box exceeds
// `iou_threshold`.
std::vector<std::size_t> nms_indices(std::span<const Detection> dets, double iou_threshold);
std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold);

// Center/size offset encoding variances (center, size).
struct Variances {
  double center = 0.1;
  double size = 0.2;
};

using Offsets = std::array<double, 4>;

// Throws uda::Error(invalid_argument) for a degenerate ground-truth box or anchor.
Offsets encode_offsets(const Box& gt, const Box& anchor, Variances var = {});
// Inverse of encode_offsets; the result is clipped to the unit square.
Box decode_offsets(const Offsets& offsets, const Box& anchor, Variances var = {});
Box decode_offsets_unclipped(const Offsets& offsets, const Box& anchor, Variances var = {});

}  // namespace uda
