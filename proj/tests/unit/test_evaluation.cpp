#include <doctest.h>

#include <random>

#include "../support/oracles.hpp"
#include "uda/error.hpp"
#include "uda/evaluation.hpp"

using namespace uda;

namespace {

// Two images, three gts, four detections: a hit, a duplicate of that hit,
// a hit in the second image and a false positive.
DetectionResultSet fixture() {
  DetectionResultSet r(2);
  r[0].gts = {{{0, 0, .4, .4}, 1}, {{.5, .5, .9, .9}, 1}};
  r[1].gts = {{{.1, .1, .5, .5}, 1}};
  r[0].detections = {{{0, 0, .4, .4}, 1, 0.9}, {{.01, 0, .41, .4}, 1, 0.8}, {{.6, 0, .9, .3}, 1, 0.6}};
  r[1].detections = {{{.1, .1, .5, .5}, 1, 0.7}};
  return r;
}

std::vector<oracle::Img> to_oracle(const DetectionResultSet& r) {
  std::vector<oracle::Img> out;
  for (const auto& x : r) out.push_back({x.detections, x.gts});
  return out;
}

}  // namespace

TEST_CASE("voc ap hand fixture") {
  const auto r = fixture();
  // ranked TP FP TP FP, 3 gts: precision 1, 1/2, 2/3, 1/2; recall 1/3, 1/3, 2/3, 2/3
  CHECK(std::abs(*voc_ap(r, 1, 0.5, ApMetric::voc11) - 6.0 / 11) < 1e-9);
  CHECK(std::abs(*voc_ap(r, 1, 0.5, ApMetric::all_point) - 5.0 / 9) < 1e-9);
  CHECK(std::abs(*voc_ap(r, 1, 0.5, ApMetric::voc11) - *oracle::voc_ap(to_oracle(r), 1, 0.5, true)) < 1e-9);
  CHECK(!voc_ap(r, 2));
}

TEST_CASE("voc ap trivial cases") {
  DetectionResultSet r(1);
  r[0].gts = {{{.1, .1, .3, .3}, 1}, {{.5, .5, .8, .8}, 2}};
  r[0].detections = {{{.1, .1, .3, .3}, 1, 1.0}, {{.5, .5, .8, .8}, 2, 1.0}};
  CHECK(*voc_ap(r, 1) == doctest::Approx(1.0));
  CHECK(compute_map(r, 2).map == doctest::Approx(1.0));
  r[0].detections.pop_back();
  CHECK(*voc_ap(r, 2) == 0.0);
  CHECK(*voc_ap(r, 2, 0.5, ApMetric::all_point) == 0.0);
  const MapReport m = compute_map(r, 3);
  CHECK(m.defined_classes == 2);
  CHECK(!m.per_class_ap[2]);
  CHECK(m.map == doctest::Approx(0.5));
}

TEST_CASE("difficult gts neither help nor hurt") {
  DetectionResultSet r(1);
  r[0].gts = {{{.1, .1, .3, .3}, 1}, {{.5, .5, .8, .8}, 1, LabelSource::annotated, true}};
  r[0].detections = {{{.1, .1, .3, .3}, 1, 0.9}};
  const double base = *voc_ap(r, 1);
  r[0].detections.push_back({{.5, .5, .8, .8}, 1, 0.95});
  CHECK(*voc_ap(r, 1) == doctest::Approx(base));
  CHECK(base == doctest::Approx(1.0));
}

TEST_CASE("voc ap equals the oracle on random dumps") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> n(0, 6), cls(1, 3), coin(0, 9);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> jitter(0, 0.04);
  for (int t = 0; t < 100; ++t) {
    DetectionResultSet r(6);
    for (auto& img : r) {
      for (int k = n(rng); k > 0; --k) img.gts.push_back({oracle::random_box(rng, 0.1, 0.4), cls(rng), LabelSource::annotated, coin(rng) == 0});
      for (const auto& g : img.gts)
        for (int d = 0; d < 2; ++d) {
          Box b = g.box;
          b.xmin += jitter(rng);
          b.ymax += jitter(rng);
          if (b.valid() && b.area() > 0) img.detections.push_back({b, g.class_id, u(rng)});
        }
      for (int k = n(rng); k > 0; --k) img.detections.push_back({oracle::random_box(rng), cls(rng), u(rng)});
    }
    const auto o = to_oracle(r);
    for (int c = 1; c <= 3; ++c) {
      const auto a11 = voc_ap(r, c, 0.5, ApMetric::voc11), aall = voc_ap(r, c, 0.5, ApMetric::all_point);
      const auto w11 = oracle::voc_ap(o, c, 0.5, true), wall = oracle::voc_ap(o, c, 0.5, false);
      REQUIRE(a11.has_value() == w11.has_value());
      if (!a11) continue;
      CHECK(std::abs(*a11 - *w11) < 1e-9);
      CHECK(std::abs(*aall - *wall) < 1e-9);
      CHECK(*a11 >= 0);
      CHECK(*a11 <= 1 + 1e-12);
    }
  }
}

TEST_CASE("a top-scoring false positive never raises ap") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 50; ++t) {
    DetectionResultSet r = fixture();
    r[1].detections.push_back({oracle::random_box(rng, 0.05, 0.1), 2, 0.5});
    const double before = *voc_ap(r, 1);
    r[0].detections.push_back({{.92, .92, .99, .99}, 1, 0.99});
    CHECK(*voc_ap(r, 1) <= before + 1e-12);
  }
}

TEST_CASE("map is invariant to class relabelling") {
  DetectionResultSet r = fixture();
  r[1].gts.push_back({{.6, .6, .9, .9}, 2});
  r[1].detections.push_back({{.6, .6, .9, .85}, 2, 0.5});
  r[1].detections.push_back({{0, .6, .2, .9}, 2, 0.6});
  const double m = compute_map(r, 2).map;
  for (auto& img : r) {
    for (auto& g : img.gts) g.class_id = 3 - g.class_id;
    for (auto& d : img.detections) d.class_id = 3 - d.class_id;
  }
  CHECK(compute_map(r, 2).map == doctest::Approx(m).epsilon(1e-12));
}

TEST_CASE("metrics agree when interpolation is exact") {
  // recall hits exactly 0.5 and 1.0 with precision 1 throughout
  DetectionResultSet r(1);
  r[0].gts = {{{.1, .1, .3, .3}, 1}, {{.5, .5, .8, .8}, 1}};
  r[0].detections = {{{.1, .1, .3, .3}, 1, 0.9}, {{.5, .5, .8, .8}, 1, 0.8}};
  CHECK(*voc_ap(r, 1, 0.5, ApMetric::voc11) == doctest::Approx(*voc_ap(r, 1, 0.5, ApMetric::all_point)));
}

TEST_CASE("sliding report") {
  const std::vector<double> flat(12, 0.42);
  CHECK(sliding_report(flat, 10) == doctest::Approx(0.42));
  std::vector<double> ramp;
  for (int k = 1; k <= 10; ++k) ramp.push_back(k / 10.0);
  CHECK(sliding_report(ramp, 10) == doctest::Approx(0.55));
  std::string warning;
  const std::vector<double> few{0.2, 0.4};
  CHECK(sliding_report(few, 10, &warning) == doctest::Approx(0.3));
  CHECK(!warning.empty());
  CHECK_THROWS_AS(sliding_report(std::vector<double>{}, 10), Error);
}

TEST_CASE("report formatting") {
  MapReport m;
  m.per_class_ap = {0.5, std::nullopt};
  m.map = 0.5;
  m.defined_classes = 1;
  const std::vector<std::string> names{"cat", "dog"};
  CHECK(format_report(m, names) == "ap.cat 0.500000\nap.dog absent\nmap 0.500000\n");
  CHECK(parse_ap_metric("allpoint") == ApMetric::all_point);
  CHECK(parse_ap_metric("voc11") == ApMetric::voc11);
  CHECK_THROWS(parse_ap_metric("coco"));
}
