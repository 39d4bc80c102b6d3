#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "uda/cli_io.hpp"
#include "uda/error.hpp"
#include "uda/evaluation.hpp"
#include "uda/image.hpp"
#include "uda/pipeline.hpp"
#include "uda/pseudolabel.hpp"
#include "uda/toy_domains.hpp"

namespace fs = std::filesystem;
using namespace uda;

namespace {

void log_stderr(const std::string& msg) {
  static const auto start = std::chrono::steady_clock::now();
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::fprintf(stderr, "[%8.1fs] %s\n", t, msg.c_str());
}

TrainHooks stderr_hooks() {
  TrainHooks h;
  h.log = log_stderr;
  return h;
}

TrainConfig config_from(const std::string& path, const std::vector<std::string>& sets) {
  std::string text;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot read config " + path);
    std::ostringstream s;
    s << in.rdbuf();
    text = s.str() + "\n";
  }
  for (const auto& kv : sets) {
    if (kv.find('=') == std::string::npos) throw Error(ErrorKind::usage, "--set expects key=value, got '" + kv + "'");
    text += kv + "\n";
  }
  return parse_config(text);
}

std::vector<std::string> class_names_for(const TrainConfig& cfg) {
  if (!cfg.class_names.empty()) return cfg.class_names;
  return cfg.dataset == "toy" ? toy_class_names() : voc_class_names();
}

std::vector<std::string> image_files(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-step unsupervised domain adaptation for single-shot detectors"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, out, labels, dataset_dir, split = "test", target_dir, target_split = "train";
  std::string content_dir, style_dir, style_model, spec_path, metric;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  int n_source = 500, n_target = 300, n_test = 200, workers = 0;
  double s_pos = -1;

  auto add_config = [&](CLI::App* c, bool required) {
    auto* o = c->add_option("--config", config_path, "config file (key=value)");
    if (required) o->required();
    c->add_option("--set", sets, "override a config key, key=value (repeatable)");
  };

  auto* gen = app.add_subcommand("gen-toy", "write the synthetic source/target domains as VOC-layout directories");
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--n-source", n_source, "source training images");
  gen->add_option("--n-target", n_target, "unlabelled target training images");
  gen->add_option("--n-test", n_test, "target test images");

  auto* step1 = app.add_subcommand("train-step1", "train on source images (optionally with style transfer and consistency)");
  add_config(step1, true);
  step1->add_option("--out", out, "checkpoint path (default <run_dir>/step1.ckpt)");

  auto* pl = app.add_subcommand("pseudolabel", "label a target set once with a trained detector");
  pl->add_option("--checkpoint", checkpoint, "detector checkpoint")->required();
  pl->add_option("--target", target_dir, "target VOC directory (omit with a toy config)");
  pl->add_option("--split", target_split, "split name under ImageSets/Main");
  pl->add_option("--out", out, "pseudo-label file")->required();
  pl->add_option("--s-pos", s_pos, "score threshold (default from config)");
  add_config(pl, false);

  auto* step2 = app.add_subcommand("train-step2", "continue from step 1 with pseudo-labelled target images");
  add_config(step2, true);
  step2->add_option("--checkpoint", checkpoint, "step-1 checkpoint")->required();
  step2->add_option("--labels", labels, "pseudo-label file")->required();
  step2->add_option("--out", out, "checkpoint path (default <run_dir>/final.ckpt)");

  auto* ev = app.add_subcommand("eval", "VOC mAP of a checkpoint on a dataset");
  ev->add_option("--checkpoint", checkpoint, "detector checkpoint")->required();
  ev->add_option("--dataset", dataset_dir, "VOC directory (omit with a toy config to use the toy test set)");
  ev->add_option("--split", split, "split name");
  ev->add_option("--metric", metric, "voc11 or allpoint");
  add_config(ev, false);

  auto* run = app.add_subcommand("run", "full protocol: style network, step 1, pseudo labels, step 2, report");
  add_config(run, true);

  auto* abl = app.add_subcommand("ablation", "source-only, ST, ST+C and the step-2 variants for one seed");
  add_config(abl, true);

  auto* sty = app.add_subcommand("stylize", "render content images in the style of random style images");
  sty->add_option("--content", content_dir, "directory of content images")->required();
  sty->add_option("--style", style_dir, "directory of style images")->required();
  sty->add_option("--out", out, "output directory")->required();
  sty->add_option("--style-model", style_model, "style network checkpoint")->required();
  sty->add_option("--seed", seed, "style sampling seed");

  auto* sw = app.add_subcommand("sweep", "sensitivity sweep over one parameter and several seeds");
  sw->add_option("--spec", spec_path, "sweep spec file")->required();
  sw->add_option("--workers", workers, "parallel runs (overrides the sweep file)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::usage);
  }

  try {
    if (*gen) {
      ToyDomains d = generate_toy_domains(seed, n_source, n_target, n_test);
      write_voc_dataset(d.source_train, (fs::path(out) / "source").string(), "trainval");
      write_voc_dataset(d.target_train, (fs::path(out) / "target").string(), "train");
      write_voc_dataset(d.target_test, (fs::path(out) / "target").string(), "test");
      std::printf("wrote %zu source, %zu target train, %zu target test images to %s\n", d.source_train.size(),
                  d.target_train.size(), d.target_test.size(), out.c_str());
    } else if (*step1) {
      const TrainConfig cfg = apply_variant(config_from(config_path, sets));
      const ExperimentData data = load_experiment_data(cfg);
      fs::create_directories(cfg.run_dir);
      StyleTransferModel style = cfg.use_style_transfer
                                     ? prepare_style_model(cfg, data, stderr_hooks())
                                     : StyleTransferModel(style_arch_for(detector_arch_preset(cfg.anchor_preset, 1).input_size),
                                                          1000 + cfg.seed, 2000 + cfg.seed);
      const ExperimentState s = train_step1(cfg, data, std::move(style), stderr_hooks());
      const std::string path = out.empty() ? (fs::path(cfg.run_dir) / "step1.ckpt").string() : out;
      save_checkpoint(s, path);
      const auto series = s.map_series(1);
      std::printf("checkpoint %s\nsliding_map %.6f\n", path.c_str(), sliding_report(series, cfg.report_last));
    } else if (*pl) {
      const TrainConfig cfg = config_from(config_path, sets);
      const ExperimentState s = load_checkpoint(checkpoint);
      Dataset target;
      if (!target_dir.empty()) {
        target = load_dataset(scan_voc_dataset(target_dir, target_split, class_names_for(cfg)), s.detector.arch().input_size);
      } else if (cfg.dataset == "toy") {
        target = load_experiment_data(cfg).target_train;
      } else {
        throw Error(ErrorKind::usage, "pseudolabel needs --target or a toy config");
      }
      const double thr = s_pos > 0 ? s_pos : cfg.s_pos;
      const PseudoLabelSet set = generate_pseudo_labels(s.detector, target, thr, cfg.nms_iou, cfg.score_floor);
      save_pseudo_labels(set, out);
      std::printf("%zu images, %zu pseudo labels at threshold %.3f -> %s\n", set.size(), set.total_labels(), thr, out.c_str());
    } else if (*step2) {
      const TrainConfig cfg = apply_variant(config_from(config_path, sets));
      const ExperimentData data = load_experiment_data(cfg);
      ExperimentState s = load_checkpoint(checkpoint);
      begin_step2(s, cfg, std::make_shared<PseudoLabelSet>(load_pseudo_labels(labels)), labels);
      run_step2(s, cfg, data, stderr_hooks());
      fs::create_directories(cfg.run_dir);
      const std::string path = out.empty() ? (fs::path(cfg.run_dir) / "final.ckpt").string() : out;
      save_checkpoint(s, path);
      std::printf("checkpoint %s\nsliding_map %.6f\n", path.c_str(), sliding_report(s.map_series(2), cfg.report_last));
    } else if (*ev) {
      TrainConfig cfg = config_from(config_path, sets);
      if (!metric.empty()) cfg.metric = parse_ap_metric(metric);
      const ExperimentState s = load_checkpoint(checkpoint);
      Dataset test;
      if (!dataset_dir.empty()) {
        test = load_dataset(scan_voc_dataset(dataset_dir, split, class_names_for(cfg)), s.detector.arch().input_size);
      } else if (cfg.dataset == "toy") {
        test = load_experiment_data(cfg).target_test;
      } else {
        throw Error(ErrorKind::usage, "eval needs --dataset or a toy config");
      }
      EvalOptions opts;
      opts.nms_iou = cfg.nms_iou;
      opts.score_floor = cfg.score_floor;
      opts.metric = cfg.metric;
      std::fputs(format_report(evaluate_map(s.detector, test, opts), test.class_names).c_str(), stdout);
    } else if (*run) {
      const TrainConfig cfg = config_from(config_path, sets);
      const ExperimentReport r = run_experiment(cfg, stderr_hooks());
      std::fputs(format_experiment_report(r, class_names_for(cfg)).c_str(), stdout);
    } else if (*abl) {
      const TrainConfig cfg = config_from(config_path, sets);
      const ExperimentData data = load_experiment_data(cfg);
      for (const auto& row : run_ablation(cfg, data, stderr_hooks())) {
        std::printf("%-18s %.6f\n", row.name.c_str(), row.report.sliding_map);
      }
    } else if (*sty) {
      const StyleTransferModel m = load_style_model(style_model);
      const auto contents = image_files(content_dir), styles = image_files(style_dir);
      if (contents.empty() || styles.empty()) throw Error(ErrorKind::io, "stylize: no images found");
      fs::create_directories(out);
      std::mt19937_64 rng(seed);
      for (const auto& c : contents) {
        const Tensor img = load_image(c);
        const Tensor st = load_image(styles[std::uniform_int_distribution<std::size_t>(0, styles.size() - 1)(rng)], m.arch().input_size);
        const Tensor res = m.stylize(resize_bilinear(img, m.arch().input_size, m.arch().input_size), st).image;
        save_image(resize_bilinear(res, img.height(), img.width()), (fs::path(out) / fs::path(c).filename()).replace_extension(".png").string());
      }
      std::printf("stylized %zu images into %s\n", contents.size(), out.c_str());
    } else if (*sw) {
      SweepSpec spec = load_sweep_spec(spec_path);
      if (workers > 0) spec.workers = workers;
      const auto rows = run_sweep(spec, {}, log_stderr);
      std::fputs(sweep_csv(rows).c_str(), stdout);
      for (const auto& r : rows)
        if (!r.map) return static_cast<int>(ErrorKind::state);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", to_string(e.kind()), e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
