#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "uda/consistency.hpp"
#include "uda/dataset.hpp"
#include "uda/detector.hpp"
#include "uda/evaluation.hpp"
#include "uda/optim.hpp"
#include "uda/pseudolabel.hpp"
#include "uda/styletransfer.hpp"

namespace uda {

// Ablation rows: source-only, +style transfer, +consistency, and step 2
// with robust pseudo labelling (dagger: target images are not stylized).
enum class Variant { source_only, st, st_c, st_c_rpl_dagger, st_c_rpl };

Variant parse_variant(const std::string& name);
const char* to_string(Variant v);
bool has_step2(Variant v);

enum class EligibilityModel { current, frozen };

EligibilityModel parse_eligibility_model(const std::string& name);
const char* to_string(EligibilityModel m);

struct LossWeights {
  double lambda1 = 1.0;  // style transfer
  double lambda2 = 1.0;  // feature consistency
  double lambda3 = 1.0;  // source detection
  double lambda4 = 0.0;  // pseudo-labelled target detection
  double alpha = 1.0;
  int neg_ratio = 3;

  // Throws uda::Error(config) unless every weight is finite and >= 0.
  void validate() const;
};

struct TrainConfig {
  // Optimization
  double lr = 1e-5;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int batch_size = 6;
  // lambda4 is the step-2 weight; step 1 has no target items and uses 0.
  LossWeights weights{1.0, 1.0, 1.0, 1.0, 1.0, 3};
  double style_lr = 1e-5;  // decoder SGD rate during detector training

  // Pseudo labelling
  double s_pos = 0.7;
  double s_neg = 0.9;
  EligibilityModel eligibility_model = EligibilityModel::current;

  // Schedule and reporting
  int iters_step1 = 10000;
  int iters_step2 = 5000;
  int eval_every = 100;
  int report_last = 10;
  double nms_iou = 0.45;
  double score_floor = 0.01;
  ApMetric metric = ApMetric::voc11;
  std::uint64_t seed = 0;
  std::string anchor_preset = "ssd300";

  // Toggles
  Variant variant = Variant::st_c_rpl;
  bool use_style_transfer = true;
  bool stylize_target = true;
  bool freeze_style_decoder = false;
  bool reset_momentum_step2 = true;
  ConsistencyOptions consistency;

  // Data: "toy" generates the synthetic domains from `seed`; "voc" reads
  // VOC-layout directories.
  std::string dataset = "voc";
  int toy_source = 500;
  int toy_target = 300;
  int toy_test = 200;
  std::string source_dir, target_dir, test_dir;
  std::string source_split = "trainval", target_split = "train", test_split = "test";
  std::vector<std::string> class_names;  // empty: VOC's 20 classes (or the toy classes)

  // Style network
  std::string style_checkpoint;  // reused when present, written after pretraining
  int pretrain_iters = 1500;
  int pretrain_batch = 4;
  double pretrain_lr = 1e-3;

  std::string run_dir = "runs/default";

  void validate() const;
};

// Training-details defaults (SSD300, 10000 + 5000 iterations).
TrainConfig full_config();
// Desk-scale toy benchmark defaults.
TrainConfig toy_config();
// Toggles implied by the ablation variant.
TrainConfig apply_variant(TrainConfig cfg);

struct ExperimentData {
  Dataset source_train;
  Dataset target_train;  // labels never read by training
  Dataset target_test;
};

struct BatchItem {
  const Sample* sample = nullptr;
  const Tensor* style = nullptr;  // null: no stylized copy
  bool target = false;
};

struct Batch {
  std::vector<BatchItem> items;
  int num_source() const;
  int num_target() const;
};

struct LossContext {
  const PseudoLabelSet* pseudo = nullptr;   // required for target items
  const DetectorModel* frozen = nullptr;    // eligibility scorer when set
  double s_neg = 0.9;
  ConsistencyOptions consistency;
  bool train_decoder = true;
};

// Unweighted batch means of each term plus the weighted total.
struct LossBreakdown {
  double total = 0;
  double st = 0;    // mean over stylized pairs
  double cons = 0;  // mean over stylized pairs
  double s = 0;     // mean over source items of L_SSD(x) + L_SSD(stylized x)
  double rpl = 0;   // same over target items with pseudo labels
  int num_source = 0;
  int num_target = 0;
  int num_pairs = 0;
  int positives = 0;
};

double recompose(const LossBreakdown& b, const LossWeights& w);

// Evaluates lambda1*L_ST + lambda2*L_Cons + lambda3*L_S + lambda4*L_RPL on a
// batch. With `accumulate`, adds the gradient of the total to the detector
// (and decoder, if ctx.train_decoder) parameter gradients. Stylized images
// are treated as inputs: detector terms do not reach the decoder.
LossBreakdown combined_loss(const Batch& batch, DetectorModel& detector, StyleTransferModel& style, const LossWeights& weights,
                            int step, const LossContext& ctx, bool accumulate);

struct MetricEntry {
  int step = 1;
  int iteration = 0;
  double map = 0;
  std::vector<std::optional<double>> ap;
  bool operator==(const MetricEntry&) const = default;
};

struct LossEntry {
  int step = 1;
  int iteration = 0;
  double total = 0, st = 0, cons = 0, s = 0, rpl = 0;
  bool operator==(const LossEntry&) const = default;
};

struct ExperimentState {
  DetectorModel detector;
  StyleTransferModel style;
  nn::MomentumSgd detector_opt;
  nn::MomentumSgd style_opt;
  int step = 1;
  int iteration = 0;  // completed iterations of the current step
  bool step1_complete = false;
  bool step2_complete = false;
  std::mt19937_64 rng;
  std::shared_ptr<const PseudoLabelSet> pseudo;
  std::string pseudo_path;
  std::optional<DetectorModel> frozen;  // eligibility scorer for step 2
  std::vector<MetricEntry> metric_log;
  std::vector<LossEntry> loss_log;

  std::vector<double> map_series(int step) const;
};

struct TrainHooks {
  std::function<void(const std::string&)> log;
  std::function<void(const Batch&, int step)> on_batch;
  std::function<void(const ExperimentState&)> on_eval;
};

// Decoder for the configured style network: loaded from cfg.style_checkpoint
// when it exists, otherwise pretrained on the toy corpora (content: source
// and target train, style: target train) and saved there if a path is set.
// `trajectory` receives the per-iteration pretraining loss when it trains.
StyleTransferModel prepare_style_model(const TrainConfig& cfg, const ExperimentData& data, const TrainHooks& hooks = {},
                                       std::vector<double>* trajectory = nullptr);

ExperimentState initial_state(const TrainConfig& cfg, const ExperimentData& data, StyleTransferModel style);

// Draws a training batch. Step 1: B source items. Step 2: ceil(B/2) source
// and floor(B/2) target items. Target style images exclude the content image.
Batch draw_batch(ExperimentState& state, const TrainConfig& cfg, const ExperimentData& data, int step);

// Runs (or resumes) step 1 up to cfg.iters_step1.
void run_step1(ExperimentState& state, const TrainConfig& cfg, const ExperimentData& data, const TrainHooks& hooks = {});
ExperimentState train_step1(const TrainConfig& cfg, const ExperimentData& data, StyleTransferModel style,
                            const TrainHooks& hooks = {});

// Moves a completed step-1 state into step 2 with the given pseudo labels.
void begin_step2(ExperimentState& state, const TrainConfig& cfg, std::shared_ptr<const PseudoLabelSet> labels,
                 std::string labels_path = {});
// Runs (or resumes) step 2. Labels the target set first if the state has no
// pseudo labels yet. Throws uda::Error(state) unless step 1 is complete.
void run_step2(ExperimentState& state, const TrainConfig& cfg, const ExperimentData& data, const TrainHooks& hooks = {});
ExperimentState train_step2(ExperimentState state, const TrainConfig& cfg, const ExperimentData& data,
                            const TrainHooks& hooks = {});

struct ExperimentReport {
  Variant variant = Variant::st_c_rpl;
  std::uint64_t seed = 0;
  double sliding_map = 0;
  MapReport final_eval;
  std::vector<MetricEntry> metric_log;
  std::string warning;
  std::string run_dir;
};

std::string format_experiment_report(const ExperimentReport& r, const std::vector<std::string>& class_names);

// Full protocol in cfg.run_dir: style network, step 1, pseudo labels (file
// written once, then re-read), step 2, report. Artifacts: style.ckpt,
// step1.ckpt, pseudo_labels.txt, final.ckpt, metrics.log, loss.log,
// report.txt. If step1.ckpt exists it is resumed instead of retrained.
ExperimentReport run_experiment(const TrainConfig& cfg, const TrainHooks& hooks = {});
ExperimentReport run_experiment(const TrainConfig& cfg, const ExperimentData& data, const TrainHooks& hooks = {});

// One seed of the ablation table, sharing step-1 runs: source-only, ST,
// ST+C; then from ST+C: ST+C+RPL (dagger), ST+C+RPL, and ST+C+RPL with
// s_neg = 0. Each row gets a subdirectory of cfg.run_dir.
struct AblationRow {
  std::string name;
  ExperimentReport report;
};
std::vector<AblationRow> run_ablation(const TrainConfig& cfg, const ExperimentData& data, const TrainHooks& hooks = {});

}  // namespace uda
