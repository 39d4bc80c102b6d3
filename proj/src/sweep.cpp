#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "uda/cli_io.hpp"
#include "uda/error.hpp"

namespace fs = std::filesystem;

namespace uda {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void set_parameter(TrainConfig& c, const std::string& p, double v) {
  if (p == "s_pos") c.s_pos = v;
  else if (p == "s_neg") c.s_neg = v;
  else if (p == "lambda1") c.weights.lambda1 = v;
  else if (p == "lambda2") c.weights.lambda2 = v;
  else if (p == "lambda3") c.weights.lambda3 = v;
  else if (p == "lambda4") c.weights.lambda4 = v;
  else throw Error(ErrorKind::config, "sweep parameter must be s_pos, s_neg or lambda1..lambda4, got '" + p + "'");
}

}  // namespace

void SweepSpec::validate() const {
  TrainConfig probe = base;
  for (double v : values) set_parameter(probe, parameter, v);
  if (values.empty()) throw Error(ErrorKind::config, "sweep needs at least one value");
  if (seeds.empty()) throw Error(ErrorKind::config, "sweep needs at least one seed");
  if (workers < 1) throw Error(ErrorKind::config, "sweep workers must be positive");
  for (double v : values) {
    const bool ok = parameter == "s_pos"   ? (v > 0 && v < 1)
                    : parameter == "s_neg" ? (v >= 0 && v <= 1)
                                           : (std::isfinite(v) && v >= 0);
    if (!ok) throw Error(ErrorKind::config, "sweep value " + fmt6(v) + " is out of range for " + parameter);
  }
}

SweepSpec load_sweep_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot read sweep spec " + path);
  std::vector<std::pair<std::string, std::string>> overrides;
  SweepSpec spec;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::config, path + ":" + std::to_string(n) + ": expected key=value");
    const std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    try {
      if (k == "parameter") spec.parameter = v;
      else if (k == "values") {
        spec.values.clear();
        for (const auto& s : split_list(v)) spec.values.push_back(std::stod(s));
      } else if (k == "seeds") {
        spec.seeds.clear();
        for (const auto& s : split_list(v)) spec.seeds.push_back(std::stoull(s));
      } else if (k == "workers") spec.workers = std::stoi(v);
      else if (k == "out") spec.out_dir = v;
      else if (k == "config") {
        const fs::path p = fs::path(path).parent_path() / v;
        spec.base = load_config(fs::exists(p) ? p.string() : v);
      } else overrides.emplace_back(k, v);
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::config, path + ":" + std::to_string(n) + ": bad value for '" + k + "'");
    }
  }
  for (const auto& [k, v] : overrides) apply_config_entry(spec.base, k, v);
  spec.validate();
  return spec;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec, const ExperimentRunner& runner_in,
                                const std::function<void(const std::string&)>& log) {
  spec.validate();
  const ExperimentRunner runner = runner_in ? runner_in : [](const TrainConfig& c) { return run_experiment(c); };
  std::vector<SweepRow> rows;
  for (double v : spec.values)
    for (auto s : spec.seeds) rows.push_back({spec.parameter, v, s, std::nullopt, {}});

  std::mutex log_mu;
  auto say = [&](const std::string& m) {
    if (!log) return;
    std::lock_guard lock(log_mu);
    log(m);
  };
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      SweepRow& row = rows[i];
      TrainConfig c = spec.base;
      set_parameter(c, spec.parameter, row.value);
      c.seed = row.seed;
      c.run_dir = (fs::path(spec.out_dir) / (spec.parameter + "_" + fmt6(row.value) + "_seed" + std::to_string(row.seed))).string();
      try {
        row.map = runner(c).sliding_map;
        say("sweep " + spec.parameter + "=" + fmt6(row.value) + " seed " + std::to_string(row.seed) + " map " + fmt6(*row.map));
      } catch (const std::exception& e) {
        row.error = e.what();
        say("sweep " + spec.parameter + "=" + fmt6(row.value) + " seed " + std::to_string(row.seed) + " failed: " + row.error);
      }
    }
  };
  const int n_threads = std::min<int>(spec.workers, static_cast<int>(rows.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  fs::create_directories(spec.out_dir);
  {
    std::ofstream csv(fs::path(spec.out_dir) / (spec.parameter + ".csv"));
    csv << sweep_csv(rows);
    std::ofstream svg(fs::path(spec.out_dir) / (spec.parameter + ".svg"));
    svg << sweep_svg(rows, spec.parameter);
    if (!csv || !svg) throw Error(ErrorKind::io, "cannot write sweep outputs under " + spec.out_dir);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "parameter,value,seed,map\n";
  for (const auto& r : rows) {
    out += r.parameter + "," + fmt6(r.value) + "," + std::to_string(r.seed) + "," + (r.map ? fmt6(*r.map) : std::string("nan")) + "\n";
  }
  return out;
}

std::string sweep_svg(const std::vector<SweepRow>& rows, const std::string& parameter) {
  constexpr double W = 480, H = 320, L = 60, R = 20, T = 30, B = 50;
  std::map<std::uint64_t, std::vector<std::pair<double, double>>> by_seed;
  std::map<double, std::pair<double, int>> mean;
  double xmin = 1e300, xmax = -1e300;
  for (const auto& r : rows) {
    xmin = std::min(xmin, r.value);
    xmax = std::max(xmax, r.value);
    if (!r.map) continue;
    by_seed[r.seed].push_back({r.value, *r.map});
    mean[r.value].first += *r.map;
    mean[r.value].second += 1;
  }
  if (xmax <= xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - std::clamp(y, 0.0, 1.0) * (H - T - B); };
  char buf[256];
  std::string s;
  std::snprintf(buf, sizeof(buf), "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" font-family=\"sans-serif\" font-size=\"11\">\n", W, H);
  s += buf;
  std::snprintf(buf, sizeof(buf), "<rect width=\"%g\" height=\"%g\" fill=\"white\"/>\n", W, H);
  s += buf;
  std::snprintf(buf, sizeof(buf), "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", L, H - B, W - R, H - B);
  s += buf;
  std::snprintf(buf, sizeof(buf), "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", L, T, L, H - B);
  s += buf;
  for (int k = 0; k <= 4; ++k) {
    const double y = k / 4.0;
    std::snprintf(buf, sizeof(buf), "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.2f</text>\n", L - 6, py(y) + 4, y);
    s += buf;
  }
  std::vector<double> xs;
  for (const auto& r : rows)
    if (std::find(xs.begin(), xs.end(), r.value) == xs.end()) xs.push_back(r.value);
  for (double x : xs) {
    std::snprintf(buf, sizeof(buf), "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%g</text>\n", px(x), H - B + 16, x);
    s += buf;
  }
  std::snprintf(buf, sizeof(buf), "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%s</text>\n", (L + W - R) / 2, H - 12,
                parameter.c_str());
  s += buf;
  std::snprintf(buf, sizeof(buf), "<text x=\"14\" y=\"%g\" transform=\"rotate(-90 14 %g)\" text-anchor=\"middle\">mAP</text>\n",
                (T + H - B) / 2, (T + H - B) / 2);
  s += buf;
  auto polyline = [&](std::vector<std::pair<double, double>> pts, const char* style) {
    std::sort(pts.begin(), pts.end());
    s += "<polyline fill=\"none\" " + std::string(style) + " points=\"";
    for (const auto& [x, y] : pts) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(x), py(y));
      s += buf;
    }
    s += "\"/>\n";
  };
  for (const auto& [seed, pts] : by_seed) polyline(pts, "stroke=\"#9aa\" stroke-width=\"1\"");
  std::vector<std::pair<double, double>> m;
  for (const auto& [x, acc] : mean) m.push_back({x, acc.first / acc.second});
  if (!m.empty()) polyline(m, "stroke=\"#c33\" stroke-width=\"2.5\"");
  s += "</svg>\n";
  return s;
}

}  // namespace uda
