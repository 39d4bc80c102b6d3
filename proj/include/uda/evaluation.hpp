#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uda/dataset.hpp"
#include "uda/detector.hpp"
#include "uda/geometry.hpp"

namespace uda {

enum class ApMetric { voc11, all_point };

ApMetric parse_ap_metric(const std::string& name);
const char* to_string(ApMetric metric);

struct ImageResult {
  std::vector<Detection> detections;
  std::vector<GroundTruth> gts;
};

using DetectionResultSet = std::vector<ImageResult>;

// VOC average precision for one class. Detections are ranked by descending
// score (ties keep image order, then in-image order); each is matched to the
// same-class gt of highest IoU in its image. A match with IoU >= iou_threshold
// is a true positive unless that gt was already taken (false positive) or is
// difficult (ignored). Returns nullopt when the class has no non-difficult gt.
std::optional<double> voc_ap(const DetectionResultSet& results, int class_id, double iou_threshold = 0.5,
                             ApMetric metric = ApMetric::voc11);

struct MapReport {
  std::vector<std::optional<double>> per_class_ap;  // index k is class k + 1
  double map = 0;  // mean over defined classes, 0 when none is defined
  int defined_classes = 0;
};

MapReport compute_map(const DetectionResultSet& results, int num_classes, double iou_threshold = 0.5,
                      ApMetric metric = ApMetric::voc11);

struct EvalOptions {
  double nms_iou = 0.45;
  double score_floor = 0.01;
  double match_iou = 0.5;
  ApMetric metric = ApMetric::voc11;
};

DetectionResultSet run_inference(const DetectorModel& model, const Dataset& test_set, const EvalOptions& opts = {});
MapReport evaluate_map(const DetectorModel& model, const Dataset& test_set, const EvalOptions& opts = {});

// Per-class AP table and mAP as "key value" lines.
std::string format_report(const MapReport& report, std::span<const std::string> class_names);

// Mean of the last `report_last` entries (all of them, with a warning
// written to `warning`, when the log is shorter). Throws on an empty log.
double sliding_report(std::span<const double> map_log, int report_last, std::string* warning = nullptr);

}  // namespace uda
