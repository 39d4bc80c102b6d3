#include <cstdio>
#include <fstream>
#include <sstream>

#include "uda/cli_io.hpp"
#include "uda/error.hpp"

namespace uda {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::config, "config key '" + key + "': expected a number, got '" + v + "'");
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used == v.size()) return i;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::config, "config key '" + key + "': expected an integer, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw Error(ErrorKind::config, "config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Entry {
  std::string key;
  std::string value;
  int line;
};

std::vector<Entry> tokenize(const std::string& text) {
  std::vector<Entry> out;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::config, "config line " + std::to_string(n) + ": expected key=value");
    out.push_back({trim(line.substr(0, eq)), trim(line.substr(eq + 1)), n});
  }
  return out;
}

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string flag(bool b) { return b ? "true" : "false"; }

}  // namespace

std::vector<std::string> config_keys() {
  return {"preset",          "lr",           "momentum",
          "weight_decay",    "batch_size",   "alpha",
          "neg_ratio",       "lambda1",      "lambda2",
          "lambda3",         "lambda4",      "style_lr",
          "s_pos",           "s_neg",        "eligibility_model",
          "iters_step1",     "iters_step2",  "eval_every",
          "report_last",     "nms_iou",      "score_floor",
          "metric",          "seed",         "anchor_preset",
          "variant",         "use_style_transfer", "stylize_target",
          "freeze_style_decoder", "reset_momentum_step2", "normalize_per_element",
          "stop_gradient_on_clean", "dataset", "toy_source",
          "toy_target",      "toy_test",     "source_dir",
          "target_dir",      "test_dir",     "source_split",
          "target_split",    "test_split",   "class_names",
          "style_checkpoint", "pretrain_iters", "pretrain_batch",
          "pretrain_lr",     "run_dir"};
}

void apply_config_entry(TrainConfig& c, const std::string& key, const std::string& v) {
  auto i = [&] { return static_cast<int>(to_int(key, v)); };
  auto d = [&] { return to_double(key, v); };
  auto b = [&] { return to_bool(key, v); };
  if (key == "preset") {
    if (v != "full" && v != "toy") throw Error(ErrorKind::config, "preset must be full or toy");
  } else if (key == "lr") c.lr = d();
  else if (key == "momentum") c.momentum = d();
  else if (key == "weight_decay") c.weight_decay = d();
  else if (key == "batch_size") c.batch_size = i();
  else if (key == "alpha") c.weights.alpha = d();
  else if (key == "neg_ratio") c.weights.neg_ratio = i();
  else if (key == "lambda1") c.weights.lambda1 = d();
  else if (key == "lambda2") c.weights.lambda2 = d();
  else if (key == "lambda3") c.weights.lambda3 = d();
  else if (key == "lambda4") c.weights.lambda4 = d();
  else if (key == "style_lr") c.style_lr = d();
  else if (key == "s_pos") c.s_pos = d();
  else if (key == "s_neg") c.s_neg = d();
  else if (key == "eligibility_model") c.eligibility_model = parse_eligibility_model(v);
  else if (key == "iters_step1") c.iters_step1 = i();
  else if (key == "iters_step2") c.iters_step2 = i();
  else if (key == "eval_every") c.eval_every = i();
  else if (key == "report_last") c.report_last = i();
  else if (key == "nms_iou") c.nms_iou = d();
  else if (key == "score_floor") c.score_floor = d();
  else if (key == "metric") c.metric = parse_ap_metric(v);
  else if (key == "seed") {
    const long long s = to_int(key, v);
    if (s < 0) throw Error(ErrorKind::config, "seed must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  } else if (key == "anchor_preset") c.anchor_preset = v;
  else if (key == "variant") c.variant = parse_variant(v);
  else if (key == "use_style_transfer") c.use_style_transfer = b();
  else if (key == "stylize_target") c.stylize_target = b();
  else if (key == "freeze_style_decoder") c.freeze_style_decoder = b();
  else if (key == "reset_momentum_step2") c.reset_momentum_step2 = b();
  else if (key == "normalize_per_element") c.consistency.normalize_per_element = b();
  else if (key == "stop_gradient_on_clean") c.consistency.stop_gradient_on_clean = b();
  else if (key == "dataset") c.dataset = v;
  else if (key == "toy_source") c.toy_source = i();
  else if (key == "toy_target") c.toy_target = i();
  else if (key == "toy_test") c.toy_test = i();
  else if (key == "source_dir") c.source_dir = v;
  else if (key == "target_dir") c.target_dir = v;
  else if (key == "test_dir") c.test_dir = v;
  else if (key == "source_split") c.source_split = v;
  else if (key == "target_split") c.target_split = v;
  else if (key == "test_split") c.test_split = v;
  else if (key == "class_names") c.class_names = to_list(v);
  else if (key == "style_checkpoint") c.style_checkpoint = v;
  else if (key == "pretrain_iters") c.pretrain_iters = i();
  else if (key == "pretrain_batch") c.pretrain_batch = i();
  else if (key == "pretrain_lr") c.pretrain_lr = d();
  else if (key == "run_dir") c.run_dir = v;
  else throw Error(ErrorKind::config, "unknown config key '" + key + "'");
}

TrainConfig parse_config(const std::string& text) {
  const auto entries = tokenize(text);
  TrainConfig c = full_config();
  for (const auto& e : entries) {
    if (e.key != "preset") continue;
    if (e.value == "toy") c = toy_config();
    else if (e.value != "full") throw Error(ErrorKind::config, "line " + std::to_string(e.line) + ": preset must be full or toy");
  }
  for (const auto& e : entries) {
    try {
      apply_config_entry(c, e.key, e.value);
    } catch (const Error& err) {
      throw Error(ErrorKind::config, "line " + std::to_string(e.line) + ": " + err.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot read config " + path);
  std::ostringstream s;
  s << in.rdbuf();
  try {
    return parse_config(s.str());
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream o;
  o << "lr=" << num(c.lr) << "\n"
    << "momentum=" << num(c.momentum) << "\n"
    << "weight_decay=" << num(c.weight_decay) << "\n"
    << "batch_size=" << c.batch_size << "\n"
    << "alpha=" << num(c.weights.alpha) << "\n"
    << "neg_ratio=" << c.weights.neg_ratio << "\n"
    << "lambda1=" << num(c.weights.lambda1) << "\n"
    << "lambda2=" << num(c.weights.lambda2) << "\n"
    << "lambda3=" << num(c.weights.lambda3) << "\n"
    << "lambda4=" << num(c.weights.lambda4) << "\n"
    << "style_lr=" << num(c.style_lr) << "\n"
    << "s_pos=" << num(c.s_pos) << "\n"
    << "s_neg=" << num(c.s_neg) << "\n"
    << "eligibility_model=" << to_string(c.eligibility_model) << "\n"
    << "iters_step1=" << c.iters_step1 << "\n"
    << "iters_step2=" << c.iters_step2 << "\n"
    << "eval_every=" << c.eval_every << "\n"
    << "report_last=" << c.report_last << "\n"
    << "nms_iou=" << num(c.nms_iou) << "\n"
    << "score_floor=" << num(c.score_floor) << "\n"
    << "metric=" << to_string(c.metric) << "\n"
    << "seed=" << c.seed << "\n"
    << "anchor_preset=" << c.anchor_preset << "\n"
    << "variant=" << to_string(c.variant) << "\n"
    << "use_style_transfer=" << flag(c.use_style_transfer) << "\n"
    << "stylize_target=" << flag(c.stylize_target) << "\n"
    << "freeze_style_decoder=" << flag(c.freeze_style_decoder) << "\n"
    << "reset_momentum_step2=" << flag(c.reset_momentum_step2) << "\n"
    << "normalize_per_element=" << flag(c.consistency.normalize_per_element) << "\n"
    << "stop_gradient_on_clean=" << flag(c.consistency.stop_gradient_on_clean) << "\n"
    << "dataset=" << c.dataset << "\n"
    << "toy_source=" << c.toy_source << "\n"
    << "toy_target=" << c.toy_target << "\n"
    << "toy_test=" << c.toy_test << "\n"
    << "source_dir=" << c.source_dir << "\n"
    << "target_dir=" << c.target_dir << "\n"
    << "test_dir=" << c.test_dir << "\n"
    << "source_split=" << c.source_split << "\n"
    << "target_split=" << c.target_split << "\n"
    << "test_split=" << c.test_split << "\n";
  o << "class_names=";
  for (std::size_t k = 0; k < c.class_names.size(); ++k) o << (k ? "," : "") << c.class_names[k];
  o << "\n"
    << "style_checkpoint=" << c.style_checkpoint << "\n"
    << "pretrain_iters=" << c.pretrain_iters << "\n"
    << "pretrain_batch=" << c.pretrain_batch << "\n"
    << "pretrain_lr=" << num(c.pretrain_lr) << "\n"
    << "run_dir=" << c.run_dir << "\n";
  return o.str();
}

}  // namespace uda
