#include "uda/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "uda/error.hpp"

namespace uda {

ApMetric parse_ap_metric(const std::string& name) {
  if (name == "voc11" || name == "11point") return ApMetric::voc11;
  if (name == "allpoint" || name == "all_point") return ApMetric::all_point;
  throw Error(ErrorKind::config, "unknown AP metric '" + name + "' (expected voc11 or allpoint)");
}

const char* to_string(ApMetric metric) { return metric == ApMetric::voc11 ? "voc11" : "allpoint"; }

std::optional<double> voc_ap(const DetectionResultSet& results, int class_id, double iou_threshold, ApMetric metric) {
  if (!(iou_threshold > 0 && iou_threshold < 1)) throw Error(ErrorKind::invalid_argument, "voc_ap: iou threshold must be in (0,1)");

  struct Ranked {
    double score;
    int match;  // 1 tp, 0 fp, -1 ignored
  };
  std::vector<Ranked> ranked;
  int npos = 0;
  for (const auto& img : results) {
    std::vector<std::size_t> gt_idx;
    for (std::size_t g = 0; g < img.gts.size(); ++g) {
      if (img.gts[g].class_id != class_id) continue;
      gt_idx.push_back(g);
      if (!img.gts[g].difficult) ++npos;
    }
    std::vector<std::size_t> det_idx;
    for (std::size_t d = 0; d < img.detections.size(); ++d)
      if (img.detections[d].class_id == class_id) det_idx.push_back(d);
    std::stable_sort(det_idx.begin(), det_idx.end(), [&](std::size_t a, std::size_t b) {
      return img.detections[a].score > img.detections[b].score;
    });
    std::vector<char> taken(gt_idx.size(), 0);
    for (std::size_t d : det_idx) {
      const Detection& det = img.detections[d];
      double best = -1;
      std::size_t best_j = 0;
      for (std::size_t j = 0; j < gt_idx.size(); ++j) {
        const double o = iou(det.box, img.gts[gt_idx[j]].box);
        if (o > best) {
          best = o;
          best_j = j;
        }
      }
      int m = 0;
      if (!gt_idx.empty() && best >= iou_threshold) {
        if (img.gts[gt_idx[best_j]].difficult) m = -1;
        else m = taken[best_j] ? 0 : 1;
        taken[best_j] = 1;
      }
      ranked.push_back({det.score, m});
    }
  }
  if (npos == 0) return std::nullopt;

  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
  std::vector<double> prec(ranked.size()), rec(ranked.size());
  int tp = 0, fp = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    tp += ranked[i].match == 1;
    fp += ranked[i].match == 0;
    prec[i] = tp + fp > 0 ? double(tp) / (tp + fp) : 0.0;
    rec[i] = double(tp) / npos;
  }

  if (metric == ApMetric::voc11) {
    double ap = 0;
    for (int k = 0; k <= 10; ++k) {
      const double t = k / 10.0;
      double p = 0;
      for (std::size_t i = 0; i < rec.size(); ++i)
        if (rec[i] >= t) p = std::max(p, prec[i]);
      ap += p / 11;
    }
    return ap;
  }
  std::vector<double> mpre{0}, mrec{0};
  mpre.insert(mpre.end(), prec.begin(), prec.end());
  mrec.insert(mrec.end(), rec.begin(), rec.end());
  mpre.push_back(0);
  mrec.push_back(1);
  for (std::size_t i = mpre.size() - 1; i-- > 0;) mpre[i] = std::max(mpre[i], mpre[i + 1]);
  double ap = 0;
  for (std::size_t i = 0; i + 1 < mrec.size(); ++i)
    if (mrec[i + 1] != mrec[i]) ap += (mrec[i + 1] - mrec[i]) * mpre[i + 1];
  return ap;
}

MapReport compute_map(const DetectionResultSet& results, int num_classes, double iou_threshold, ApMetric metric) {
  MapReport r;
  double sum = 0;
  for (int c = 1; c <= num_classes; ++c) {
    const auto ap = voc_ap(results, c, iou_threshold, metric);
    r.per_class_ap.push_back(ap);
    if (ap) {
      sum += *ap;
      ++r.defined_classes;
    }
  }
  r.map = r.defined_classes > 0 ? sum / r.defined_classes : 0.0;
  return r;
}

DetectionResultSet run_inference(const DetectorModel& model, const Dataset& test_set, const EvalOptions& opts) {
  DetectionResultSet results;
  results.reserve(test_set.size());
  for (const auto& s : test_set.samples) {
    const DetectorOutputs out = model.forward(s.image);
    results.push_back({detect(out, model.anchors(), opts.score_floor, opts.nms_iou), s.gts});
  }
  return results;
}

MapReport evaluate_map(const DetectorModel& model, const Dataset& test_set, const EvalOptions& opts) {
  if (test_set.empty()) throw Error(ErrorKind::invalid_argument, "evaluate_map: empty test set");
  return compute_map(run_inference(model, test_set, opts), model.num_classes(), opts.match_iou, opts.metric);
}

std::string format_report(const MapReport& report, std::span<const std::string> class_names) {
  std::string out;
  char buf[160];
  for (std::size_t k = 0; k < report.per_class_ap.size(); ++k) {
    const std::string name = k < class_names.size() ? class_names[k] : "class" + std::to_string(k + 1);
    if (report.per_class_ap[k]) std::snprintf(buf, sizeof(buf), "ap.%s %.6f\n", name.c_str(), *report.per_class_ap[k]);
    else std::snprintf(buf, sizeof(buf), "ap.%s absent\n", name.c_str());
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "map %.6f\n", report.map);
  out += buf;
  return out;
}

double sliding_report(std::span<const double> map_log, int report_last, std::string* warning) {
  if (map_log.empty()) throw Error(ErrorKind::invalid_argument, "sliding_report: empty metric log");
  if (report_last < 1) throw Error(ErrorKind::invalid_argument, "sliding_report: report_last must be positive");
  std::size_t n = static_cast<std::size_t>(report_last);
  if (map_log.size() < n) {
    if (warning) {
      *warning = "sliding_report: only " + std::to_string(map_log.size()) + " evaluations (wanted " +
                 std::to_string(report_last) + "), averaging all";
    }
    n = map_log.size();
  }
  const auto tail = map_log.last(n);
  return std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(n);
}

}  // namespace uda
