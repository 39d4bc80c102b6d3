#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "../support/oracles.hpp"
#include "uda/error.hpp"
#include "uda/pseudolabel.hpp"

using namespace uda;
namespace fs = std::filesystem;

namespace {

std::vector<Detection> random_dets(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> cls(1, 3);
  std::vector<Detection> d(n);
  for (auto& x : d) x = {oracle::random_box(rng, 0.05, 0.5), cls(rng), u(rng)};
  return d;
}

bool same(const std::vector<GroundTruth>& a, const std::vector<Detection>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(a[i].box == b[i].box) || a[i].class_id != b[i].class_id || a[i].score != b[i].score) return false;
  return true;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("uda_unit_" + name); }

}  // namespace

TEST_CASE("threshold examples") {
  std::vector<Detection> low{{{.1, .1, .3, .3}, 1, 0.65}, {{.5, .5, .7, .7}, 2, 0.65}};
  CHECK(filter_pseudo_labels(low, 0.7).empty());
  std::vector<Detection> pair{{{.1, .1, .3, .3}, 1, 0.71}, {{.5, .5, .7, .7}, 1, 0.69}};
  const auto kept = filter_pseudo_labels(pair, 0.7);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.71);
  CHECK(kept[0].source == LabelSource::pseudo);
  std::vector<Detection> edge{{{.1, .1, .3, .3}, 1, 0.7}};
  CHECK(filter_pseudo_labels(edge, 0.7).size() == 1);
}

TEST_CASE("filter equals the score oracle and is monotone in the threshold") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const auto d = random_dets(rng, 30);
    std::vector<GroundTruth> prev;
    bool first = true;
    for (double s : {0.2, 0.5, 0.7, 0.9}) {
      const auto got = filter_pseudo_labels(d, s);
      CHECK(same(got, oracle::filter(d, s)));
      for (const auto& g : got) CHECK(g.score >= s);
      if (!first) {
        // every label kept at the higher threshold was kept at the lower one
        for (const auto& g : got) {
          bool found = false;
          for (const auto& p : prev) found = found || (p.box == g.box && p.score == g.score);
          CHECK(found);
        }
      }
      prev = got;
      first = false;
    }
  }
}

TEST_CASE("negative eligibility examples and oracle") {
  std::vector<float> bg{0.95f, 0.5f, 0.99f};
  std::vector<char> pos{0, 0, 1};
  CHECK(negative_eligibility(bg, pos, 0.9) == std::vector<char>{1, 0, 0});
  CHECK(negative_eligibility(bg, pos, 0.0) == std::vector<char>{1, 1, 0});

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0, 1);
  std::uniform_int_distribution<int> coin(0, 4);
  for (int t = 0; t < 100; ++t) {
    std::vector<float> b(340);
    std::vector<char> p(340);
    for (int a = 0; a < 340; ++a) {
      b[a] = u(rng);
      p[a] = coin(rng) == 0;
    }
    for (double s : {0.0, 0.5, 0.9, 1.0}) CHECK(negative_eligibility(b, p, s) == oracle::eligibility(b, p, s));
  }
}

TEST_CASE("label set validation and lookup") {
  PseudoLabelSet set(0.7, "abc", "now");
  set.add("img1", {GroundTruth{{.1, .1, .2, .2}, 1, LabelSource::pseudo, false, 0.8}});
  set.add("img2", {});
  CHECK(set.size() == 2);
  CHECK(set.total_labels() == 1);
  CHECK(set.labels_for("img2").empty());
  CHECK_THROWS_AS(set.labels_for("nope"), Error);
  set.validate();
  PseudoLabelSet bad(0.7, "abc", "now");
  bad.add("img1", {GroundTruth{{.1, .1, .2, .2}, 1, LabelSource::pseudo, false, 0.5}});
  try {
    bad.validate();
    FAIL("expected an integrity error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::integrity);
  }
}

TEST_CASE("label file round trip") {
  PseudoLabelSet set(0.7, "deadbeef", "2024-01-01T00:00:00Z");
  set.add("a", {GroundTruth{{.125, .25, .5, .75}, 2, LabelSource::pseudo, false, 0.875}});
  set.add("b", {});
  set.add("c", {GroundTruth{{0, 0, 1, 1}, 1, LabelSource::pseudo, false, 0.7},
                GroundTruth{{.5, .5, .625, .75}, 3, LabelSource::pseudo, false, 1.0}});
  const auto path = temp_file("labels.txt");
  save_pseudo_labels(set, path.string());
  const PseudoLabelSet back = load_pseudo_labels(path.string());
  CHECK(back.size() == 3);
  CHECK(back.threshold() == doctest::Approx(0.7));
  CHECK(back.model_checksum() == "deadbeef");
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(back.image_id(i) == set.image_id(i));
    REQUIRE(back.labels(i).size() == set.labels(i).size());
    for (std::size_t k = 0; k < set.labels(i).size(); ++k) {
      CHECK(back.labels(i)[k].box == set.labels(i)[k].box);
      CHECK(back.labels(i)[k].class_id == set.labels(i)[k].class_id);
      CHECK(back.labels(i)[k].score == set.labels(i)[k].score);
    }
  }
  // a tampered score below the threshold is refused on load
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  in.close();
  const auto pos = text.find("0.875000");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 8, "0.500000");
  std::ofstream(path) << text;
  CHECK_THROWS_AS(load_pseudo_labels(path.string()), Error);
  fs::remove(path);
  CHECK_THROWS_AS(load_pseudo_labels(path.string()), Error);
}

TEST_CASE("pr analysis examples") {
  std::vector<std::vector<GroundTruth>> gts{{{{.1, .1, .4, .4}, 1}, {{.5, .5, .9, .9}, 2}}};
  std::vector<std::vector<Detection>> perfect{{{{.1, .1, .4, .4}, 1, 1.0}, {{.5, .5, .9, .9}, 2, 1.0}}};
  const std::vector<double> ts{0.1, 0.5, 1.0};
  for (const auto& p : pr_analysis(perfect, gts, ts)) {
    CHECK(*p.precision == 1.0);
    CHECK(*p.recall == 1.0);
  }
  std::vector<std::vector<Detection>> weak{{{{.1, .1, .4, .4}, 1, 0.3}}};
  const std::vector<double> high{0.5};
  const auto pr = pr_analysis(weak, gts, high);
  CHECK(!pr[0].precision);
  CHECK(*pr[0].recall == 0.0);
  std::vector<std::vector<GroundTruth>> nogt{{}};
  CHECK(!pr_analysis(weak, nogt, ts)[0].recall);
}

TEST_CASE("pr analysis equals the counting oracle") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> n(0, 8), cls(1, 3);
  std::normal_distribution<double> jitter(0, 0.03);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::vector<Detection>> dets(10);
  std::vector<std::vector<GroundTruth>> gts(10);
  for (int i = 0; i < 10; ++i) {
    for (int k = n(rng); k > 0; --k) gts[i].push_back({oracle::random_box(rng, 0.1, 0.4), cls(rng)});
    for (const auto& g : gts[i]) {
      // near-duplicates of each gt plus background clutter
      for (int r = 0; r < 2; ++r) {
        Box b = g.box;
        b.xmin += jitter(rng);
        b.xmax += jitter(rng);
        if (b.xmax > b.xmin) dets[i].push_back({b, u(rng) < 0.8 ? g.class_id : cls(rng), u(rng)});
      }
    }
    for (int k = n(rng); k > 0; --k) dets[i].push_back({oracle::random_box(rng), cls(rng), u(rng)});
  }
  std::vector<double> ts;
  for (int k = 0; k <= 20; ++k) ts.push_back(k / 20.0);
  const auto curve = pr_analysis(dets, gts, ts);
  std::optional<double> last_recall;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const auto c = oracle::pr_count(dets, gts, ts[k], 0.5);
    CHECK(curve[k].true_positives == c.tp);
    CHECK(curve[k].false_positives == c.fp);
    CHECK(curve[k].num_gts == c.gts);
    if (last_recall) CHECK(*curve[k].recall <= *last_recall);
    last_recall = curve[k].recall;
  }
}

TEST_CASE("miscalibrated scorer: precision rises with the threshold") {
  // Scores carry signal but are squashed toward the middle.
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::vector<Detection>> dets(50);
  std::vector<std::vector<GroundTruth>> gts(50);
  for (int i = 0; i < 50; ++i) {
    const Box g = oracle::random_box(rng, 0.2, 0.4);
    gts[i].push_back({g, 1});
    dets[i].push_back({g, 1, 0.35 + 0.6 * u(rng)});
    dets[i].push_back({oracle::random_box(rng), 1, 0.2 + 0.6 * u(rng) * u(rng)});
  }
  const std::vector<double> ts{0.2, 0.7};
  const auto c = pr_analysis(dets, gts, ts);
  CHECK(*c[1].precision >= *c[0].precision);
}
