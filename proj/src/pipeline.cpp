#include "uda/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "uda/cli_io.hpp"
#include "uda/error.hpp"

namespace fs = std::filesystem;

namespace uda {

namespace {

void log_line(const TrainHooks& hooks, const std::string& msg) {
  if (hooks.log) hooks.log(msg);
}

LossWeights step_weights(const TrainConfig& cfg, int step) {
  LossWeights w = cfg.weights;
  if (step == 1) w.lambda4 = 0.0;
  return w;
}

bool trains_decoder(const TrainConfig& cfg) {
  return cfg.use_style_transfer && !cfg.freeze_style_decoder && cfg.weights.lambda1 > 0;
}

void evaluate_into(ExperimentState& state, const TrainConfig& cfg, const ExperimentData& data, const TrainHooks& hooks,
                   double loss) {
  EvalOptions opts;
  opts.nms_iou = cfg.nms_iou;
  opts.score_floor = cfg.score_floor;
  opts.metric = cfg.metric;
  const MapReport r = evaluate_map(state.detector, data.target_test, opts);
  state.metric_log.push_back({state.step, state.iteration, r.map, r.per_class_ap});
  char buf[160];
  std::snprintf(buf, sizeof(buf), "step %d iter %d loss %.5f map %.4f", state.step, state.iteration, loss, r.map);
  log_line(hooks, buf);
  if (hooks.on_eval) hooks.on_eval(state);
}

void train_loop(ExperimentState& state, const TrainConfig& cfg, const ExperimentData& data, const TrainHooks& hooks,
                int step, int iterations) {
  const LossWeights weights = step_weights(cfg, step);
  LossContext ctx;
  ctx.consistency = cfg.consistency;
  ctx.s_neg = cfg.s_neg;
  ctx.train_decoder = trains_decoder(cfg);
  if (step == 2) {
    ctx.pseudo = state.pseudo.get();
    if (cfg.eligibility_model == EligibilityModel::frozen) ctx.frozen = state.frozen ? &*state.frozen : nullptr;
    if (cfg.eligibility_model == EligibilityModel::frozen && !ctx.frozen) {
      throw Error(ErrorKind::state, "frozen eligibility model requested but the state has no frozen detector");
    }
  }
  state.detector_opt.configure(cfg.lr, cfg.momentum, cfg.weight_decay);
  state.style_opt.configure(cfg.style_lr, cfg.momentum, 0.0);
  auto det_params = state.detector.params();
  auto dec_params = state.style.decoder_params();
  double window = 0;
  int window_n = 0;
  while (state.iteration < iterations) {
    const Batch batch = draw_batch(state, cfg, data, step);
    if (hooks.on_batch) hooks.on_batch(batch, step);
    nn::zero_grads(det_params);
    nn::zero_grads(dec_params);
    const LossBreakdown b = combined_loss(batch, state.detector, state.style, weights, step, ctx, true);
    if (!std::isfinite(b.total)) {
      throw Error(ErrorKind::state, "training diverged at step " + std::to_string(step) + " iteration " +
                                        std::to_string(state.iteration + 1) + " (non-finite loss)");
    }
    state.detector_opt.step(det_params);
    if (ctx.train_decoder) state.style_opt.step(dec_params);
    ++state.iteration;
    state.loss_log.push_back({step, state.iteration, b.total, b.st, b.cons, b.s, b.rpl});
    window += b.total;
    ++window_n;
    if (state.iteration % cfg.eval_every == 0 || state.iteration == iterations) {
      evaluate_into(state, cfg, data, hooks, window / window_n);
      window = 0;
      window_n = 0;
    }
  }
}

std::string default_style_path(const TrainConfig& cfg) {
  return cfg.style_checkpoint.empty() ? (fs::path(cfg.run_dir) / "style.ckpt").string() : cfg.style_checkpoint;
}

void write_logs(const ExperimentState& state, const std::string& dir) {
  std::ofstream m(fs::path(dir) / "metrics.log");
  char buf[256];
  for (const auto& e : state.metric_log) {
    std::snprintf(buf, sizeof(buf), "%d\t%d\t%.9f", e.step, e.iteration, e.map);
    m << buf;
    for (const auto& ap : e.ap) {
      if (ap) std::snprintf(buf, sizeof(buf), "\t%.9f", *ap);
      else std::snprintf(buf, sizeof(buf), "\tabsent");
      m << buf;
    }
    m << "\n";
  }
  std::ofstream l(fs::path(dir) / "loss.log");
  l << "step\titer\ttotal\tst\tcons\ts\trpl\n";
  for (const auto& e : state.loss_log) {
    std::snprintf(buf, sizeof(buf), "%d\t%d\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n", e.step, e.iteration, e.total, e.st, e.cons, e.s,
                  e.rpl);
    l << buf;
  }
  if (!m || !l) throw Error(ErrorKind::io, "cannot write logs under " + dir);
}

}  // namespace

Variant parse_variant(const std::string& name) {
  if (name == "source_only") return Variant::source_only;
  if (name == "st") return Variant::st;
  if (name == "st_c") return Variant::st_c;
  if (name == "st_c_rpl_dagger") return Variant::st_c_rpl_dagger;
  if (name == "st_c_rpl") return Variant::st_c_rpl;
  throw Error(ErrorKind::config, "unknown variant '" + name + "' (expected source_only, st, st_c, st_c_rpl_dagger, st_c_rpl)");
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::source_only: return "source_only";
    case Variant::st: return "st";
    case Variant::st_c: return "st_c";
    case Variant::st_c_rpl_dagger: return "st_c_rpl_dagger";
    case Variant::st_c_rpl: return "st_c_rpl";
  }
  return "?";
}

bool has_step2(Variant v) { return v == Variant::st_c_rpl || v == Variant::st_c_rpl_dagger; }

EligibilityModel parse_eligibility_model(const std::string& name) {
  if (name == "current") return EligibilityModel::current;
  if (name == "frozen") return EligibilityModel::frozen;
  throw Error(ErrorKind::config, "unknown eligibility_model '" + name + "' (expected current or frozen)");
}

const char* to_string(EligibilityModel m) { return m == EligibilityModel::current ? "current" : "frozen"; }

void LossWeights::validate() const {
  for (double v : {lambda1, lambda2, lambda3, lambda4, alpha}) {
    if (!std::isfinite(v) || v < 0) throw Error(ErrorKind::config, "loss weights must be finite and non-negative");
  }
  if (neg_ratio < 0) throw Error(ErrorKind::config, "neg_ratio must be non-negative");
}

void TrainConfig::validate() const {
  weights.validate();
  auto fail = [](const std::string& m) { throw Error(ErrorKind::config, m); };
  if (!(lr > 0) || !std::isfinite(lr)) fail("lr must be positive");
  if (!(style_lr >= 0) || !std::isfinite(style_lr)) fail("style_lr must be non-negative");
  if (!(momentum >= 0 && momentum < 1)) fail("momentum must be in [0,1)");
  if (!(weight_decay >= 0)) fail("weight_decay must be non-negative");
  if (batch_size < 1) fail("batch_size must be positive");
  if (has_step2(variant) && batch_size < 2) fail("step 2 needs batch_size >= 2");
  if (!(s_pos > 0 && s_pos < 1)) fail("s_pos must be in (0,1)");
  if (!(s_neg >= 0 && s_neg <= 1)) fail("s_neg must be in [0,1]");
  if (iters_step1 < 0 || iters_step2 < 0) fail("iteration counts must be non-negative");
  if (eval_every < 1 || report_last < 1) fail("eval_every and report_last must be positive");
  if (!(nms_iou > 0 && nms_iou < 1)) fail("nms_iou must be in (0,1)");
  if (!(score_floor >= 0 && score_floor < 1)) fail("score_floor must be in [0,1)");
  if (dataset != "toy" && dataset != "voc") fail("dataset must be toy or voc");
  if (dataset == "toy" && (toy_source < 1 || toy_target < 2 || toy_test < 1)) fail("toy dataset sizes too small");
  if (pretrain_iters < 0 || pretrain_batch < 1 || !(pretrain_lr > 0)) fail("bad style pretraining schedule");
  try {
    uda::anchor_preset(anchor_preset);
  } catch (const std::exception& e) {
    fail(e.what());
  }
}

TrainConfig full_config() { return TrainConfig{}; }

TrainConfig toy_config() {
  TrainConfig c;
  c.dataset = "toy";
  c.anchor_preset = "toy128";
  c.lr = 1e-3;
  c.style_lr = 1e-6;
  c.iters_step1 = 2000;
  c.iters_step2 = 1000;
  c.eval_every = 100;
  c.consistency.normalize_per_element = true;
  c.class_names = {};
  c.run_dir = "runs/toy";
  return c;
}

TrainConfig apply_variant(TrainConfig cfg) {
  switch (cfg.variant) {
    case Variant::source_only:
      cfg.use_style_transfer = false;
      cfg.weights.lambda1 = 0;
      cfg.weights.lambda2 = 0;
      break;
    case Variant::st:
      cfg.use_style_transfer = true;
      cfg.weights.lambda2 = 0;
      break;
    case Variant::st_c:
      cfg.use_style_transfer = true;
      break;
    case Variant::st_c_rpl_dagger:
      cfg.use_style_transfer = true;
      cfg.stylize_target = false;
      break;
    case Variant::st_c_rpl:
      cfg.use_style_transfer = true;
      cfg.stylize_target = true;
      break;
  }
  return cfg;
}

int Batch::num_source() const {
  int n = 0;
  for (const auto& it : items) n += !it.target;
  return n;
}

int Batch::num_target() const { return static_cast<int>(items.size()) - num_source(); }

double recompose(const LossBreakdown& b, const LossWeights& w) {
  return w.lambda1 * b.st + w.lambda2 * b.cons + w.lambda3 * b.s + w.lambda4 * b.rpl;
}

LossBreakdown combined_loss(const Batch& batch, DetectorModel& detector, StyleTransferModel& style, const LossWeights& weights,
                            int step, const LossContext& ctx, bool accumulate) {
  if (step != 1 && step != 2) throw Error(ErrorKind::invalid_argument, "combined_loss: step must be 1 or 2");
  weights.validate();
  LossBreakdown out;
  for (const auto& it : batch.items) {
    if (!it.sample) throw Error(ErrorKind::invalid_argument, "combined_loss: batch item without a sample");
    if (it.target) {
      if (step == 1) throw Error(ErrorKind::state, "combined_loss: step-1 batches must contain only source images");
      if (!ctx.pseudo) throw Error(ErrorKind::state, "combined_loss: step 2 needs a pseudo-label set");
      ++out.num_target;
    } else {
      ++out.num_source;
    }
    out.num_pairs += it.style != nullptr;
  }

  const AnchorSet& anchors = detector.anchors();
  const std::size_t na = anchors.size();
  const std::size_t row = static_cast<std::size_t>(detector.num_classes()) + 1;
  const double pair_w = out.num_pairs ? 1.0 / out.num_pairs : 0.0;
  double sum_st = 0, sum_cons = 0, sum_s = 0, sum_rpl = 0;

  for (const auto& it : batch.items) {
    const Tensor& x = it.sample->image;
    const std::vector<GroundTruth>& gts = it.target ? ctx.pseudo->labels_for(it.sample->id) : it.sample->gts;
    const double det_w = it.target ? weights.lambda4 / out.num_target : weights.lambda3 / out.num_source;

    Tensor stylized;
    if (it.style) {
      const bool dec = accumulate && ctx.train_decoder && weights.lambda1 > 0;
      sum_st += st_loss(style, x, *it.style, dec, weights.lambda1 * pair_w, &stylized).total;
    }

    const auto eligibility = [&](const DetectorOutputs& own, const Tensor& img) -> std::vector<char> {
      if (!it.target) return {};
      if (ctx.frozen) return negative_eligibility(ctx.frozen->forward(img), gts, anchors, ctx.s_neg);
      return negative_eligibility(own, gts, anchors, ctx.s_neg);
    };

    DetectorTrace ta, tb;
    std::vector<float> dla(accumulate ? na * row : 0), doa(accumulate ? na * 4 : 0);
    const DetectorOutputs oa = detector.forward(x, accumulate ? &ta : nullptr);
    const auto ea = eligibility(oa, x);
    const auto ra = ssd_loss(oa, gts, anchors, ea, weights.alpha, weights.neg_ratio, dla, doa);
    double det_term = ra.total;
    out.positives += ra.num_positives;

    std::vector<float> dlb, dob;
    DetectorOutputs ob;
    ConsistencyResult<float> cons;
    if (it.style) {
      dlb.resize(accumulate ? na * row : 0);
      dob.resize(accumulate ? na * 4 : 0);
      ob = detector.forward(stylized, accumulate ? &tb : nullptr);
      const auto eb = eligibility(ob, stylized);
      const auto rb = ssd_loss(ob, gts, anchors, eb, weights.alpha, weights.neg_ratio, dlb, dob);
      det_term += rb.total;
      out.positives += rb.num_positives;
      cons = consistency_loss<float>(oa.feature_maps.maps, ob.feature_maps.maps, ctx.consistency, accumulate);
      sum_cons += cons.value;
    }
    (it.target ? sum_rpl : sum_s) += det_term;

    if (!accumulate) continue;
    const float dw = static_cast<float>(det_w), cw = static_cast<float>(weights.lambda2 * pair_w);
    auto scale = [](std::vector<float>& v, float s) {
      for (auto& e : v) e *= s;
    };
    auto scale_maps = [&](std::vector<Tensor>& maps) {
      for (auto& t : maps)
        for (auto& e : t.vec()) e *= cw;
    };
    scale(dla, dw);
    scale(doa, dw);
    std::vector<Tensor> dfa;
    if (it.style && cw != 0) {
      dfa = std::move(cons.grad_a);
      scale_maps(dfa);
    }
    detector.backward(ta, dla, doa, dfa);
    if (it.style) {
      scale(dlb, dw);
      scale(dob, dw);
      std::vector<Tensor> dfb;
      if (cw != 0) {
        dfb = std::move(cons.grad_b);
        scale_maps(dfb);
      }
      detector.backward(tb, dlb, dob, dfb);
    }
  }

  out.st = out.num_pairs ? sum_st / out.num_pairs : 0.0;
  out.cons = out.num_pairs ? sum_cons / out.num_pairs : 0.0;
  out.s = out.num_source ? sum_s / out.num_source : 0.0;
  out.rpl = out.num_target ? sum_rpl / out.num_target : 0.0;
  out.total = recompose(out, weights);
  return out;
}

std::vector<double> ExperimentState::map_series(int s) const {
  std::vector<double> v;
  for (const auto& e : metric_log)
    if (e.step == s) v.push_back(e.map);
  return v;
}

StyleTransferModel prepare_style_model(const TrainConfig& cfg, const ExperimentData& data, const TrainHooks& hooks,
                                       std::vector<double>* trajectory) {
  const DetectorArch arch = detector_arch_preset(cfg.anchor_preset, 1);
  const StyleArch sarch = style_arch_for(arch.input_size);
  const std::string path = default_style_path(cfg);
  if (!path.empty() && fs::exists(path)) {
    StyleTransferModel m = load_style_model(path);
    if (m.arch().input_size != sarch.input_size) throw Error(ErrorKind::state, path + ": style network input size differs");
    log_line(hooks, "loaded style network from " + path);
    return m;
  }
  StyleTransferModel m(sarch, 1000 + cfg.seed, 2000 + cfg.seed);
  std::vector<Tensor> content, styles;
  for (const auto& s : data.source_train.samples) content.push_back(s.image);
  for (const auto& s : data.target_train.samples) {
    content.push_back(s.image);
    styles.push_back(s.image);
  }
  PretrainSchedule sched;
  sched.iterations = cfg.pretrain_iters;
  sched.batch_size = cfg.pretrain_batch;
  sched.lr = cfg.pretrain_lr;
  sched.seed = 3000 + cfg.seed;
  sched.log_every = 100;
  log_line(hooks, "pretraining style decoder for " + std::to_string(sched.iterations) + " iterations");
  const auto traj = pretrain_decoder(m, content, styles, sched, [&](int it, double loss) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "decoder iter %d loss %.4f", it, loss);
    log_line(hooks, buf);
  });
  if (trajectory) *trajectory = traj;
  if (!path.empty()) {
    fs::create_directories(fs::absolute(path).parent_path());
    save_style_model(m, path);
  }
  return m;
}

ExperimentState initial_state(const TrainConfig& cfg, const ExperimentData& data, StyleTransferModel style) {
  if (data.source_train.empty()) throw Error(ErrorKind::invalid_argument, "empty source training set");
  if (data.target_test.empty()) throw Error(ErrorKind::invalid_argument, "empty target test set");
  if (cfg.use_style_transfer && data.target_train.empty()) throw Error(ErrorKind::invalid_argument, "empty target training set");
  ExperimentState s;
  s.detector = DetectorModel(detector_arch_preset(cfg.anchor_preset, data.source_train.num_classes()), cfg.seed);
  s.style = std::move(style);
  s.detector_opt = nn::MomentumSgd(cfg.lr, cfg.momentum, cfg.weight_decay);
  s.style_opt = nn::MomentumSgd(cfg.style_lr, cfg.momentum, 0.0);
  s.rng.seed(cfg.seed * 0x9E3779B97F4A7C15ULL + 17);
  return s;
}

Batch draw_batch(ExperimentState& state, const TrainConfig& cfg, const ExperimentData& data, int step) {
  Batch b;
  const auto& src = data.source_train.samples;
  const auto& tgt = data.target_train.samples;
  const int n_src = step == 1 ? cfg.batch_size : (cfg.batch_size + 1) / 2;
  const int n_tgt = step == 1 ? 0 : cfg.batch_size / 2;
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(state.rng); };
  for (int i = 0; i < n_src; ++i) {
    BatchItem it;
    it.sample = &src[pick(src.size())];
    if (cfg.use_style_transfer) it.style = &tgt[pick(tgt.size())].image;
    b.items.push_back(it);
  }
  for (int i = 0; i < n_tgt; ++i) {
    BatchItem it;
    const std::size_t j = pick(tgt.size());
    it.sample = &tgt[j];
    it.target = true;
    if (cfg.use_style_transfer && cfg.stylize_target && tgt.size() > 1) {
      std::size_t k = pick(tgt.size() - 1);
      if (k >= j) ++k;
      it.style = &tgt[k].image;
    }
    b.items.push_back(it);
  }
  return b;
}

void run_step1(ExperimentState& state, const TrainConfig& cfg, const ExperimentData& data, const TrainHooks& hooks) {
  if (state.step != 1) throw Error(ErrorKind::state, "run_step1: state is already in step 2");
  if (data.source_train.empty()) throw Error(ErrorKind::invalid_argument, "run_step1: empty source training set");
  train_loop(state, cfg, data, hooks, 1, cfg.iters_step1);
  state.step1_complete = true;
}

ExperimentState train_step1(const TrainConfig& cfg, const ExperimentData& data, StyleTransferModel style,
                            const TrainHooks& hooks) {
  ExperimentState s = initial_state(cfg, data, std::move(style));
  run_step1(s, cfg, data, hooks);
  return s;
}

void begin_step2(ExperimentState& state, const TrainConfig& cfg, std::shared_ptr<const PseudoLabelSet> labels,
                 std::string labels_path) {
  if (!state.step1_complete || state.step != 1) throw Error(ErrorKind::state, "step 2 needs a state from a completed step 1");
  if (!labels) throw Error(ErrorKind::state, "step 2 needs a pseudo-label set");
  labels->validate();
  state.step = 2;
  state.iteration = 0;
  state.pseudo = std::move(labels);
  state.pseudo_path = std::move(labels_path);
  if (cfg.reset_momentum_step2) {
    state.detector_opt.reset();
    state.style_opt.reset();
  }
  if (cfg.eligibility_model == EligibilityModel::frozen) state.frozen = state.detector;
}

void run_step2(ExperimentState& state, const TrainConfig& cfg, const ExperimentData& data, const TrainHooks& hooks) {
  if (state.step == 1) {
    if (!state.step1_complete) throw Error(ErrorKind::state, "step 2 needs a state from a completed step 1");
    auto labels = std::make_shared<PseudoLabelSet>(
        generate_pseudo_labels(state.detector, data.target_train, cfg.s_pos, cfg.nms_iou, cfg.score_floor));
    log_line(hooks, "pseudo labelled " + std::to_string(labels->size()) + " images, " + std::to_string(labels->total_labels()) +
                        " labels");
    begin_step2(state, cfg, std::move(labels));
  }
  if (!state.pseudo) throw Error(ErrorKind::state, "step 2 state has no pseudo-label set");
  if (data.target_train.empty()) throw Error(ErrorKind::invalid_argument, "run_step2: empty target training set");
  train_loop(state, cfg, data, hooks, 2, cfg.iters_step2);
  state.step2_complete = true;
}

ExperimentState train_step2(ExperimentState state, const TrainConfig& cfg, const ExperimentData& data,
                            const TrainHooks& hooks) {
  run_step2(state, cfg, data, hooks);
  return state;
}

std::string format_experiment_report(const ExperimentReport& r, const std::vector<std::string>& class_names) {
  char buf[160];
  std::string out;
  out += std::string("variant ") + to_string(r.variant) + "\n";
  out += "seed " + std::to_string(r.seed) + "\n";
  std::snprintf(buf, sizeof(buf), "sliding_map %.6f\n", r.sliding_map);
  out += buf;
  out += "evaluations " + std::to_string(r.metric_log.size()) + "\n";
  out += format_report(r.final_eval, class_names);
  if (!r.warning.empty()) out += "warning " + r.warning + "\n";
  return out;
}

ExperimentReport run_experiment(const TrainConfig& cfg_in, const TrainHooks& hooks) {
  const TrainConfig cfg = apply_variant(cfg_in);
  cfg.validate();
  return run_experiment(cfg, load_experiment_data(cfg), hooks);
}

ExperimentReport run_experiment(const TrainConfig& cfg_in, const ExperimentData& data, const TrainHooks& hooks) {
  const TrainConfig cfg = apply_variant(cfg_in);
  cfg.validate();
  const fs::path dir(cfg.run_dir);
  fs::create_directories(dir);
  {
    std::ofstream c(dir / "config.txt");
    c << format_config(cfg);
  }

  StyleTransferModel style;
  if (cfg.use_style_transfer) {
    style = prepare_style_model(cfg, data, hooks);
  } else {
    const StyleArch sarch = style_arch_for(detector_arch_preset(cfg.anchor_preset, 1).input_size);
    style = StyleTransferModel(sarch, 1000 + cfg.seed, 2000 + cfg.seed);
  }

  const fs::path step1 = dir / "step1.ckpt";
  ExperimentState state;
  if (fs::exists(step1)) {
    state = load_checkpoint(step1.string());
    if (!state.step1_complete || state.step != 1) throw Error(ErrorKind::state, step1.string() + " is not a completed step-1 state");
    log_line(hooks, "resuming from " + step1.string());
  } else {
    state = initial_state(cfg, data, std::move(style));
    run_step1(state, cfg, data, hooks);
    save_checkpoint(state, step1.string());
  }

  if (has_step2(cfg.variant)) {
    const fs::path labels_path = dir / "pseudo_labels.txt";
    if (!fs::exists(labels_path)) {
      const PseudoLabelSet labels =
          generate_pseudo_labels(state.detector, data.target_train, cfg.s_pos, cfg.nms_iou, cfg.score_floor);
      save_pseudo_labels(labels, labels_path.string());
      log_line(hooks, "wrote " + std::to_string(labels.total_labels()) + " pseudo labels to " + labels_path.string());
    }
    auto labels = std::make_shared<PseudoLabelSet>(load_pseudo_labels(labels_path.string()));
    if (labels->model_checksum() != state.detector.checksum()) {
      throw Error(ErrorKind::integrity, labels_path.string() + " was produced by a different model");
    }
    if (std::abs(labels->threshold() - cfg.s_pos) > 5e-7) {
      throw Error(ErrorKind::integrity, labels_path.string() + " was produced with a different s_pos");
    }
    begin_step2(state, cfg, std::move(labels), labels_path.string());
    run_step2(state, cfg, data, hooks);
    save_checkpoint(state, (dir / "final.ckpt").string());
  }

  ExperimentReport r;
  r.variant = cfg.variant;
  r.seed = cfg.seed;
  r.run_dir = cfg.run_dir;
  r.metric_log = state.metric_log;
  const int last_step = has_step2(cfg.variant) ? 2 : 1;
  const auto series = state.map_series(last_step);
  if (series.empty()) throw Error(ErrorKind::state, "no evaluations recorded (iteration count is zero)");
  r.sliding_map = sliding_report(series, cfg.report_last, &r.warning);
  for (auto it = state.metric_log.rbegin(); it != state.metric_log.rend(); ++it) {
    if (it->step != last_step) continue;
    r.final_eval.per_class_ap = it->ap;
    r.final_eval.map = it->map;
    for (const auto& ap : it->ap) r.final_eval.defined_classes += ap.has_value();
    break;
  }
  write_logs(state, dir.string());
  std::ofstream rep(dir / "report.txt");
  rep << format_experiment_report(r, data.target_test.class_names);
  if (!r.warning.empty()) log_line(hooks, r.warning);
  return r;
}

std::vector<AblationRow> run_ablation(const TrainConfig& cfg, const ExperimentData& data, const TrainHooks& hooks) {
  TrainConfig base = cfg;
  if (base.style_checkpoint.empty()) base.style_checkpoint = (fs::path(cfg.run_dir) / "style.ckpt").string();
  std::vector<AblationRow> rows;
  auto run = [&](const std::string& name, Variant v, const std::function<void(TrainConfig&)>& tweak,
                 const std::string& step1_from) {
    TrainConfig c = base;
    c.variant = v;
    c.run_dir = (fs::path(cfg.run_dir) / name).string();
    if (tweak) tweak(c);
    fs::create_directories(c.run_dir);
    if (!step1_from.empty()) {
      const fs::path to = fs::path(c.run_dir) / "step1.ckpt";
      if (!fs::exists(to)) fs::copy_file(fs::path(step1_from) / "step1.ckpt", to);
    }
    log_line(hooks, "ablation row " + name);
    rows.push_back({name, run_experiment(c, data, hooks)});
  };
  const std::string stc_dir = (fs::path(cfg.run_dir) / "st_c").string();
  run("source_only", Variant::source_only, {}, "");
  run("st", Variant::st, {}, "");
  run("st_c", Variant::st_c, {}, "");
  run("st_c_rpl_dagger", Variant::st_c_rpl_dagger, {}, stc_dir);
  run("st_c_rpl", Variant::st_c_rpl, {}, stc_dir);
  run("st_c_rpl_sneg0", Variant::st_c_rpl, [](TrainConfig& c) { c.s_neg = 0.0; }, stc_dir);
  return rows;
}

}  // namespace uda
