#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uda/dataset.hpp"
#include "uda/detector.hpp"

namespace uda {

inline constexpr double kDefaultPositiveThreshold = 0.7;
inline constexpr double kDefaultNegativeThreshold = 0.9;

// Target-set labels accepted from one detector pass. Labels carry
// source = pseudo and the detector score, which is always >= threshold.
class PseudoLabelSet {
 public:
  PseudoLabelSet() = default;
  PseudoLabelSet(double threshold, std::string model_checksum, std::string created);

  void add(std::string image_id, std::vector<GroundTruth> labels);

  double threshold() const { return threshold_; }
  const std::string& model_checksum() const { return checksum_; }
  const std::string& created() const { return created_; }
  std::size_t size() const { return ids_.size(); }
  const std::string& image_id(std::size_t i) const { return ids_[i]; }
  const std::vector<GroundTruth>& labels(std::size_t i) const { return labels_[i]; }
  // Labels for an image id; throws uda::Error(state) for unknown ids.
  const std::vector<GroundTruth>& labels_for(const std::string& image_id) const;
  std::size_t total_labels() const;

  // Throws uda::Error(integrity) when a stored score is below the threshold.
  void validate() const;

 private:
  double threshold_ = kDefaultPositiveThreshold;
  std::string checksum_;
  std::string created_;
  std::vector<std::string> ids_;
  std::vector<std::vector<GroundTruth>> labels_;
};

// Keeps the detections with score >= s_pos as pseudo ground truth.
std::vector<GroundTruth> filter_pseudo_labels(std::span<const Detection> detections, double s_pos);

// Forward, decode, per-class NMS, then the score filter, once per image.
PseudoLabelSet generate_pseudo_labels(const DetectorModel& model, const Dataset& target, double s_pos, double nms_iou = 0.45,
                                      double score_floor = 0.01);

// An anchor is an eligible negative iff it is not a positive for any pseudo
// gt and its background probability is >= s_neg.
std::vector<char> negative_eligibility(std::span<const float> background_prob, std::span<const char> is_positive, double s_neg);
std::vector<char> negative_eligibility(const DetectorOutputs& outputs, std::span<const GroundTruth> pseudo_gts,
                                       const AnchorSet& anchors, double s_neg);

std::vector<float> background_probabilities(const DetectorOutputs& outputs);

struct PrPoint {
  double threshold = 0;
  std::optional<double> precision;  // absent with no detections kept
  std::optional<double> recall;     // absent with no ground truth
  int true_positives = 0;
  int false_positives = 0;
  int num_gts = 0;
};

// Precision and recall of the detections kept at each threshold. Per image,
// detections are processed by descending score and matched to the unmatched
// same-class gt of highest IoU, if that IoU is >= iou.
std::vector<PrPoint> pr_analysis(const std::vector<std::vector<Detection>>& detections,
                                 const std::vector<std::vector<GroundTruth>>& gts, std::span<const double> thresholds,
                                 double iou = 0.5);

// Text file, one record per image:
//   image_id TAB threshold TAB checksum TAB count TAB cls,x0,y0,x1,y1,score;...
// Coordinates and scores use 6 decimals. Loading validates every score.
void save_pseudo_labels(const PseudoLabelSet& set, const std::string& path);
PseudoLabelSet load_pseudo_labels(const std::string& path);

}  // namespace uda
