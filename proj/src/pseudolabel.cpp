#include "uda/pseudolabel.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include "uda/error.hpp"

namespace uda {

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::format, where + ": bad number '" + s + "'");
  }
}

}  // namespace

PseudoLabelSet::PseudoLabelSet(double threshold, std::string model_checksum, std::string created)
    : threshold_(threshold), checksum_(std::move(model_checksum)), created_(std::move(created)) {}

void PseudoLabelSet::add(std::string image_id, std::vector<GroundTruth> labels) {
  for (auto& g : labels) g.source = LabelSource::pseudo;
  ids_.push_back(std::move(image_id));
  labels_.push_back(std::move(labels));
}

const std::vector<GroundTruth>& PseudoLabelSet::labels_for(const std::string& image_id) const {
  for (std::size_t i = 0; i < ids_.size(); ++i)
    if (ids_[i] == image_id) return labels_[i];
  throw Error(ErrorKind::state, "no pseudo labels for image '" + image_id + "'");
}

std::size_t PseudoLabelSet::total_labels() const {
  std::size_t n = 0;
  for (const auto& l : labels_) n += l.size();
  return n;
}

void PseudoLabelSet::validate() const {
  for (std::size_t i = 0; i < ids_.size(); ++i)
    for (const auto& g : labels_[i])
      if (g.score < threshold_) {
        throw Error(ErrorKind::integrity, "pseudo label for '" + ids_[i] + "' has score " + std::to_string(g.score) +
                                              " below threshold " + std::to_string(threshold_));
      }
}

std::vector<GroundTruth> filter_pseudo_labels(std::span<const Detection> detections, double s_pos) {
  std::vector<GroundTruth> out;
  for (const auto& d : detections) {
    if (d.score < s_pos) continue;
    GroundTruth g;
    g.box = d.box;
    g.class_id = d.class_id;
    g.source = LabelSource::pseudo;
    g.score = d.score;
    out.push_back(g);
  }
  return out;
}

PseudoLabelSet generate_pseudo_labels(const DetectorModel& model, const Dataset& target, double s_pos, double nms_iou,
                                      double score_floor) {
  if (!(s_pos > 0 && s_pos < 1)) throw Error(ErrorKind::invalid_argument, "generate_pseudo_labels: s_pos must be in (0,1)");
  PseudoLabelSet set(s_pos, model.checksum(), utc_timestamp());
  for (const auto& s : target.samples) {
    const auto dets = detect(model.forward(s.image), model.anchors(), score_floor, nms_iou);
    set.add(s.id, filter_pseudo_labels(dets, s_pos));
  }
  return set;
}

std::vector<float> background_probabilities(const DetectorOutputs& outputs) {
  const std::size_t row = static_cast<std::size_t>(outputs.num_classes) + 1;
  std::vector<float> bg(outputs.num_anchors());
  for (std::size_t a = 0; a < bg.size(); ++a) {
    const auto l = outputs.logits_row(a);
    const float m = *std::max_element(l.begin(), l.end());
    double z = 0;
    for (std::size_t c = 0; c < row; ++c) z += std::exp(double(l[c]) - m);
    bg[a] = static_cast<float>(std::exp(double(l[kBackground]) - m) / z);
  }
  return bg;
}

std::vector<char> negative_eligibility(std::span<const float> background_prob, std::span<const char> is_positive, double s_neg) {
  if (!(s_neg >= 0 && s_neg <= 1)) throw Error(ErrorKind::invalid_argument, "negative_eligibility: s_neg must be in [0,1]");
  if (background_prob.size() != is_positive.size()) throw Error(ErrorKind::invalid_argument, "negative_eligibility: size mismatch");
  std::vector<char> mask(background_prob.size());
  for (std::size_t a = 0; a < mask.size(); ++a) mask[a] = !is_positive[a] && background_prob[a] >= s_neg;
  return mask;
}

std::vector<char> negative_eligibility(const DetectorOutputs& outputs, std::span<const GroundTruth> pseudo_gts,
                                       const AnchorSet& anchors, double s_neg) {
  if (outputs.num_anchors() != anchors.size()) throw Error(ErrorKind::invalid_argument, "negative_eligibility: anchor count mismatch");
  const MatchAssignment m = match_anchors(anchors, pseudo_gts);
  return negative_eligibility(background_probabilities(outputs), m.is_positive, s_neg);
}

std::vector<PrPoint> pr_analysis(const std::vector<std::vector<Detection>>& detections,
                                 const std::vector<std::vector<GroundTruth>>& gts, std::span<const double> thresholds,
                                 double iou_threshold) {
  if (detections.size() != gts.size()) throw Error(ErrorKind::invalid_argument, "pr_analysis: image count mismatch");
  std::vector<PrPoint> curve;
  for (double t : thresholds) {
    PrPoint p;
    p.threshold = t;
    for (std::size_t i = 0; i < gts.size(); ++i) {
      p.num_gts += static_cast<int>(gts[i].size());
      std::vector<std::size_t> order;
      for (std::size_t d = 0; d < detections[i].size(); ++d)
        if (detections[i][d].score >= t) order.push_back(d);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return detections[i][a].score > detections[i][b].score;
      });
      std::vector<char> taken(gts[i].size(), 0);
      for (std::size_t d : order) {
        const Detection& det = detections[i][d];
        double best = -1;
        int best_g = -1;
        for (std::size_t g = 0; g < gts[i].size(); ++g) {
          if (taken[g] || gts[i][g].class_id != det.class_id) continue;
          const double o = iou(det.box, gts[i][g].box);
          if (o >= iou_threshold && o > best) {
            best = o;
            best_g = static_cast<int>(g);
          }
        }
        if (best_g >= 0) {
          taken[best_g] = 1;
          ++p.true_positives;
        } else {
          ++p.false_positives;
        }
      }
    }
    const int kept = p.true_positives + p.false_positives;
    if (kept > 0) p.precision = double(p.true_positives) / kept;
    if (p.num_gts > 0) p.recall = double(p.true_positives) / p.num_gts;
    curve.push_back(p);
  }
  return curve;
}

void save_pseudo_labels(const PseudoLabelSet& set, const std::string& path) {
  set.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write pseudo labels to " + path);
  out << "# pseudo-labels v1 created=" << set.created() << "\n";
  char buf[256];
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& labels = set.labels(i);
    std::snprintf(buf, sizeof(buf), "\t%.6f\t%s\t%zu\t", set.threshold(), set.model_checksum().c_str(), labels.size());
    out << set.image_id(i) << buf;
    for (std::size_t k = 0; k < labels.size(); ++k) {
      const auto& g = labels[k];
      std::snprintf(buf, sizeof(buf), "%s%d,%.6f,%.6f,%.6f,%.6f,%.6f", k ? ";" : "", g.class_id, g.box.xmin, g.box.ymin,
                    g.box.xmax, g.box.ymax, g.score);
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw Error(ErrorKind::io, "failed writing pseudo labels to " + path);
}

PseudoLabelSet load_pseudo_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read pseudo labels from " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# pseudo-labels v1", 0) != 0) {
    throw Error(ErrorKind::format, path + ": missing pseudo-label header");
  }
  std::string created;
  if (const auto pos = line.find("created="); pos != std::string::npos) created = line.substr(pos + 8);

  PseudoLabelSet set;
  bool first = true;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const auto f = split(line, '\t');
    if (f.size() != 5) throw Error(ErrorKind::format, where + ": expected 5 tab-separated fields");
    const double threshold = parse_double(f[1], where);
    if (first) {
      set = PseudoLabelSet(threshold, f[2], created);
      first = false;
    } else if (threshold != set.threshold() || f[2] != set.model_checksum()) {
      throw Error(ErrorKind::integrity, where + ": threshold or checksum differs from earlier records");
    }
    std::vector<GroundTruth> labels;
    if (!f[4].empty()) {
      for (const auto& item : split(f[4], ';')) {
        const auto v = split(item, ',');
        if (v.size() != 6) throw Error(ErrorKind::format, where + ": label needs 6 fields");
        GroundTruth g;
        g.class_id = static_cast<int>(parse_double(v[0], where));
        g.box = {parse_double(v[1], where), parse_double(v[2], where), parse_double(v[3], where), parse_double(v[4], where)};
        g.score = parse_double(v[5], where);
        g.source = LabelSource::pseudo;
        labels.push_back(g);
      }
    }
    if (std::to_string(labels.size()) != f[3]) throw Error(ErrorKind::format, where + ": label count mismatch");
    set.add(f[0], std::move(labels));
  }
  set.validate();
  return set;
}

}  // namespace uda
