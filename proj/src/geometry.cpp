#include "uda/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uda/error.hpp"

namespace uda {

bool Box::valid() const {
  return std::isfinite(xmin) && std::isfinite(ymin) && std::isfinite(xmax) && std::isfinite(ymax) && xmin <= xmax &&
         ymin <= ymax;
}

Box Box::clipped() const {
  return {std::clamp(xmin, 0.0, 1.0), std::clamp(ymin, 0.0, 1.0), std::clamp(xmax, 0.0, 1.0), std::clamp(ymax, 0.0, 1.0)};
}

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double ih = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::vector<std::size_t> nms_indices(std::span<const Detection> dets, double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  std::vector<std::size_t> kept;
  kept.reserve(dets.size());
  for (std::size_t idx : order) {
    const Detection& d = dets[idx];
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (dets[k].class_id == d.class_id && iou(dets[k].box, d.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
  std::vector<Detection> out;
  for (std::size_t i : nms_indices(dets, iou_threshold)) out.push_back(dets[i]);
  return out;
}

Offsets encode_offsets(const Box& gt, const Box& anchor, Variances var) {
  if (!(anchor.width() > 0 && anchor.height() > 0)) {
    throw Error(ErrorKind::invalid_argument, "encode_offsets: anchor must have positive width and height");
  }
  if (!gt.valid() || !(gt.width() > 0 && gt.height() > 0)) {
    throw Error(ErrorKind::invalid_argument, "encode_offsets: degenerate ground-truth box (invalid annotation)");
  }
  return {(gt.cx() - anchor.cx()) / anchor.width() / var.center, (gt.cy() - anchor.cy()) / anchor.height() / var.center,
          std::log(gt.width() / anchor.width()) / var.size, std::log(gt.height() / anchor.height()) / var.size};
}

Box decode_offsets_unclipped(const Offsets& o, const Box& anchor, Variances var) {
  const double cx = anchor.cx() + o[0] * var.center * anchor.width();
  const double cy = anchor.cy() + o[1] * var.center * anchor.height();
  const double w = anchor.width() * std::exp(o[2] * var.size);
  const double h = anchor.height() * std::exp(o[3] * var.size);
  return Box::from_center(cx, cy, w, h);
}

Box decode_offsets(const Offsets& o, const Box& anchor, Variances var) {
  return decode_offsets_unclipped(o, anchor, var).clipped();
}

}  // namespace uda
