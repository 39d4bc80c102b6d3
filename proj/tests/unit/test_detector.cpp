#include <doctest.h>

#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "uda/detector.hpp"
#include "uda/detector_losses.hpp"
#include "uda/error.hpp"

using namespace uda;

namespace {

std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

Tensor random_image(std::uint64_t seed, int size = 128) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0, 1);
  Tensor t(3, size, size);
  for (auto& v : t.vec()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("confidence loss examples") {
  std::vector<double> sat{0, 25, 0};
  CHECK(confidence_loss<double>(sat, 1) < 1e-8);
  std::vector<double> flat{1, 1, 1};
  CHECK(confidence_loss<double>(flat, 2) == doctest::Approx(std::log(3.0)).epsilon(1e-9));
  std::vector<double> half{0, 0};  // softmax 0.5 for both
  CHECK(confidence_loss<double>(half, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK_THROWS(confidence_loss<double>(flat, 3));
}

TEST_CASE("localization loss examples") {
  std::vector<double> p{1, 2, 3, 4}, t{1, 2, 3, 4};
  CHECK(localization_loss<double>(p, t) == 0.0);
  t[0] = 0.5;
  CHECK(localization_loss<double>(std::vector<double>{1, 2, 3, 4}, std::vector<double>{0.5, 2, 3, 4}) ==
        doctest::Approx(0.125));
  CHECK(localization_loss<double>(std::vector<double>{3, 2, 3, 4}, std::vector<double>{1, 2, 3, 4}) == doctest::Approx(1.5));
}

TEST_CASE("hard negative mining examples") {
  std::vector<double> loss{5, 1, 9, 3, 7, 2, 8, 6, 4, 0, 10, 11};
  std::vector<char> pos(12, 0), elig;
  CHECK(hard_negative_mine<double>(loss, pos, elig, 3).empty());
  pos[10] = pos[11] = 1;  // N = 2, 10 candidates
  const auto six = hard_negative_mine<double>(loss, pos, elig, 3);
  CHECK(six == std::vector<std::size_t>{0, 2, 4, 6, 7, 8});
  CHECK(six == oracle::hard_negatives(loss, pos, elig, 3));
  elig.assign(12, 1);
  elig[2] = 0;  // drop the 9
  const auto next = hard_negative_mine<double>(loss, pos, elig, 3);
  CHECK(next == std::vector<std::size_t>{0, 3, 4, 6, 7, 8});
  CHECK(next == oracle::hard_negatives(loss, pos, elig, 3));
}

TEST_CASE("hard negative mining matches the sort oracle") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> n(1, 400), coin(0, 9), level(0, 30);
  for (int t = 0; t < 200; ++t) {
    const int na = n(rng);
    std::vector<double> loss(na);
    std::vector<char> pos(na), elig(na);
    for (int a = 0; a < na; ++a) {
      loss[a] = level(rng) * 0.1;  // coarse levels force ties
      pos[a] = coin(rng) == 0;
      elig[a] = coin(rng) < 7;
    }
    const auto got = hard_negative_mine<double>(loss, pos, elig, 3);
    CHECK(got == oracle::hard_negatives(loss, pos, elig, 3));
    std::size_t npos = 0, ncand = 0;
    for (int a = 0; a < na; ++a) {
      npos += pos[a];
      ncand += !pos[a] && elig[a];
    }
    CHECK(got.size() == std::min(3 * npos, ncand));
  }
}

TEST_CASE("ssd loss recomposes from its parts") {
  const AnchorSet anchors = generate_anchors(anchor_preset("toy128"));
  const int nc = 3;
  std::mt19937_64 rng(41);
  std::vector<GroundTruth> gts{{{.1, .1, .4, .5}, 1}, {{.5, .5, .9, .8}, 3}};
  const SsdTargets tg = make_targets(anchors, gts);
  REQUIRE(tg.num_positives > 0);
  const auto logits = uniform(rng, anchors.size() * (nc + 1), -2, 2);
  const auto offs = uniform(rng, anchors.size() * 4, -1.5, 1.5);
  const auto r = ssd_loss<double>(logits, offs, nc, tg, {}, 1.0, 3);
  double pos = 0, neg = 0, loc = 0;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (!tg.is_positive[a]) continue;
    pos += confidence_loss<double>(std::span<const double>(logits).subspan(a * 4, 4), tg.labels[a]);
    std::vector<double> t(tg.offsets.begin() + a * 4, tg.offsets.begin() + a * 4 + 4);
    loc += localization_loss<double>(std::span<const double>(offs).subspan(a * 4, 4), t);
  }
  for (std::size_t a : r.negatives) neg += confidence_loss<double>(std::span<const double>(logits).subspan(a * 4, 4), 0);
  CHECK(r.total == doctest::Approx((pos + neg + loc) / tg.num_positives).epsilon(1e-12));
  CHECK(r.negatives.size() == std::min<std::size_t>(3 * tg.num_positives, anchors.size() - tg.num_positives));
  // permutation of the gt list leaves the loss unchanged
  std::vector<GroundTruth> rev{gts[1], gts[0]};
  const auto r2 = ssd_loss<double>(logits, offs, nc, make_targets(anchors, rev), {}, 1.0, 3);
  CHECK(r2.total == doctest::Approx(r.total).epsilon(1e-12));
}

TEST_CASE("ssd loss edge cases") {
  const AnchorSet anchors = generate_anchors(anchor_preset("toy128"));
  const int nc = 3;
  std::vector<double> logits(anchors.size() * 4, 0.0), offs(anchors.size() * 4, 0.0);
  const SsdTargets none = make_targets(anchors, {});
  CHECK(ssd_loss<double>(logits, offs, nc, none, {}, 1.0, 3).total == 0.0);
  // perfect logits and offsets
  std::vector<GroundTruth> gts{{{.1, .1, .4, .5}, 2}};
  const SsdTargets tg = make_targets(anchors, gts);
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const int c = tg.is_positive[a] ? tg.labels[a] : 0;
    logits[a * 4 + c] = 40;
    if (tg.is_positive[a])
      for (int i = 0; i < 4; ++i) offs[a * 4 + i] = tg.offsets[a * 4 + i];
  }
  CHECK(ssd_loss<double>(logits, offs, nc, tg, {}, 1.0, 3).total < 1e-6);
}

TEST_CASE("loss gradients match central differences") {
  std::mt19937_64 rng(51);
  for (int t = 0; t < 20; ++t) {
    auto z = uniform(rng, 4, -3, 3);
    std::vector<double> g(4);
    confidence_loss<double>(z, t % 4, g);
    CHECK(oracle::grad_check([&](const std::vector<double>& x) { return confidence_loss<double>(x, t % 4); }, z, g) < 1e-4);

    auto p = uniform(rng, 4, -3, 3), q = uniform(rng, 4, -3, 3);
    for (int i = 0; i < 4; ++i)
      if (std::abs(std::abs(p[i] - q[i]) - 1) < 0.05) p[i] += 0.2;
    std::vector<double> gl(4);
    localization_loss<double>(p, q, gl);
    CHECK(oracle::grad_check([&](const std::vector<double>& x) { return localization_loss<double>(x, q); }, p, gl) < 1e-4);
  }
}

TEST_CASE("toy detector shapes and determinism") {
  const DetectorModel m(detector_arch_preset("toy128", 3), 7);
  CHECK(m.anchors().size() == 340);
  CHECK(m.parameter_count() > 100000);
  CHECK(m.parameter_count() < 400000);
  const Tensor img = random_image(1);
  const DetectorOutputs o = m.forward(img);
  CHECK(o.num_anchors() == 340);
  CHECK(o.class_logits.size() == 340 * 4);
  REQUIRE(o.feature_maps.size() == 4);
  const int sizes[] = {8, 4, 2, 1};
  for (int k = 0; k < 4; ++k) {
    CHECK(o.feature_maps.maps[k].height() == sizes[k]);
    CHECK(o.feature_maps.maps[k].width() == sizes[k]);
  }
  const DetectorOutputs o2 = m.forward(img);
  CHECK(o.class_logits == o2.class_logits);
  CHECK(o.box_offsets == o2.box_offsets);
  const Tensor img2 = random_image(2);
  const std::vector<Tensor> batch{img, img2};
  const auto ob = m.forward_batch(batch);
  CHECK(ob[0].class_logits == o.class_logits);
  CHECK(ob[1].box_offsets == m.forward(img2).box_offsets);
  CHECK_THROWS_AS(m.forward(Tensor(3, 64, 64)), Error);
  CHECK(DetectorModel(detector_arch_preset("toy128", 3), 7).checksum() == m.checksum());
  CHECK(DetectorModel(detector_arch_preset("toy128", 3), 8).checksum() != m.checksum());
}

TEST_CASE("detector backward matches finite differences on the head bias") {
  DetectorModel m(detector_arch_preset("toy128", 3), 3);
  const Tensor img = random_image(4);
  std::vector<GroundTruth> gts{{{.2, .2, .6, .6}, 1}};
  DetectorTrace tr;
  const DetectorOutputs o = m.forward(img, &tr);
  std::vector<float> dl(o.class_logits.size()), dof(o.box_offsets.size());
  ssd_loss(o, gts, m.anchors(), {}, 1.0, 3, dl, dof);
  m.zero_grad();
  m.backward(tr, dl, dof, {});
  auto params = m.params();
  // the last parameter block is a head bias: small and well conditioned
  auto& p = params.back();
  for (std::size_t i = 0; i < std::min<std::size_t>(p.value.size(), 4); ++i) {
    const float keep = p.value[i];
    const float h = 1e-2f;
    p.value[i] = keep + h;
    const double up = ssd_loss(m.forward(img), gts, m.anchors()).total;
    p.value[i] = keep - h;
    const double dn = ssd_loss(m.forward(img), gts, m.anchors()).total;
    p.value[i] = keep;
    const double num = (up - dn) / (2 * h);
    CHECK(std::abs(num - p.grad[i]) <= 2e-2 * std::max(1.0, std::abs(num)));
  }
}

TEST_CASE("detect applies the score floor and nms") {
  const DetectorModel m(detector_arch_preset("toy128", 3), 7);
  const DetectorOutputs o = m.forward(random_image(5));
  const auto raw = decode_detections(o, m.anchors(), 0.01);
  for (const auto& d : raw) {
    CHECK(d.score >= 0.01);
    CHECK(d.class_id >= 1);
    CHECK(d.class_id <= 3);
  }
  const auto kept = detect(o, m.anchors(), 0.01, 0.45);
  CHECK(kept.size() == nms(raw, 0.45).size());
}
