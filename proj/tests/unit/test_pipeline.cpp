#include <doctest.h>

#include <cmath>
#include <random>

#include "uda/error.hpp"
#include "uda/pipeline.hpp"
#include "uda/toy_domains.hpp"

using namespace uda;

namespace {

ExperimentData tiny_data(std::uint64_t seed = 3) {
  ToyDomains d = generate_toy_domains(seed, 12, 8, 6);
  return {std::move(d.source_train), std::move(d.target_train), std::move(d.target_test)};
}

TrainConfig tiny_config(Variant v) {
  TrainConfig c = toy_config();
  c.variant = v;
  c.batch_size = 2;
  c.iters_step1 = 3;
  c.iters_step2 = 2;
  c.eval_every = 2;
  c.seed = 5;
  return apply_variant(c);
}

StyleTransferModel tiny_style() { return StyleTransferModel(style_arch_for(kToyImageSize), 1, 2); }

std::vector<double> grads(DetectorModel& m) {
  std::vector<double> g;
  for (auto& p : m.params())
    for (std::size_t i = 0; i < p.grad.size(); ++i) g.push_back(p.grad[i]);
  return g;
}

PseudoLabelSet labels_for_all(const Dataset& target) {
  PseudoLabelSet set(0.7, "test", "now");
  for (const auto& s : target.samples) set.add(s.id, {GroundTruth{{.2, .2, .5, .5}, 1, LabelSource::pseudo, false, 0.9}});
  return set;
}

}  // namespace

TEST_CASE("variant names round trip") {
  for (Variant v : {Variant::source_only, Variant::st, Variant::st_c, Variant::st_c_rpl_dagger, Variant::st_c_rpl})
    CHECK(parse_variant(to_string(v)) == v);
  CHECK(!has_step2(Variant::st_c));
  CHECK(has_step2(Variant::st_c_rpl));
  CHECK_THROWS_AS(parse_variant("st_rpl"), Error);
  CHECK(!apply_variant(tiny_config(Variant::source_only)).use_style_transfer);
  CHECK(!apply_variant(tiny_config(Variant::st_c_rpl_dagger)).stylize_target);
}

TEST_CASE("loss weights must be finite and non-negative") {
  LossWeights w;
  w.validate();
  w.lambda2 = -0.1;
  CHECK_THROWS_AS(w.validate(), Error);
  w.lambda2 = std::nan("");
  CHECK_THROWS_AS(w.validate(), Error);
}

TEST_CASE("batch composition") {
  const ExperimentData data = tiny_data();
  TrainConfig cfg = tiny_config(Variant::st_c_rpl);
  cfg.batch_size = 5;
  ExperimentState s = initial_state(cfg, data, tiny_style());
  const Batch b1 = draw_batch(s, cfg, data, 1);
  CHECK(b1.num_source() == 5);
  CHECK(b1.num_target() == 0);
  for (const auto& it : b1.items) CHECK(it.style != nullptr);
  for (int t = 0; t < 20; ++t) {
    const Batch b2 = draw_batch(s, cfg, data, 2);
    CHECK(b2.num_source() == 3);
    CHECK(b2.num_target() == 2);
    for (const auto& it : b2.items)
      if (it.target) {
        REQUIRE(it.style != nullptr);
        CHECK(it.style != &it.sample->image);
      }
  }
  TrainConfig dagger = tiny_config(Variant::st_c_rpl_dagger);
  for (const auto& it : draw_batch(s, dagger, data, 2).items) CHECK((it.style == nullptr) == it.target);
}

TEST_CASE("total recomposes from the unweighted terms, which do not depend on the weights") {
  const ExperimentData data = tiny_data();
  const TrainConfig cfg = tiny_config(Variant::st_c_rpl);
  ExperimentState s = initial_state(cfg, data, tiny_style());
  const PseudoLabelSet labels = labels_for_all(data.target_train);
  LossContext ctx;
  ctx.pseudo = &labels;
  const Batch batch = draw_batch(s, cfg, data, 2);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 2);
  LossBreakdown first;
  for (int t = 0; t < 5; ++t) {
    LossWeights w;
    w.lambda1 = u(rng);
    w.lambda2 = u(rng);
    w.lambda3 = u(rng);
    w.lambda4 = u(rng);
    const LossBreakdown b = combined_loss(batch, s.detector, s.style, w, 2, ctx, false);
    CHECK(std::abs(b.total - recompose(b, w)) <= 1e-10 * std::abs(b.total));
    if (t == 0) {
      first = b;
      CHECK(b.num_pairs == 2);
      CHECK(b.st > 0);
      CHECK(b.cons > 0);
      CHECK(b.rpl > 0);
      continue;
    }
    CHECK(b.st == first.st);
    CHECK(b.cons == first.cons);
    CHECK(b.s == first.s);
    CHECK(b.rpl == first.rpl);
  }
}

TEST_CASE("detector gradient is linear in the weights") {
  const ExperimentData data = tiny_data();
  const TrainConfig cfg = tiny_config(Variant::st_c_rpl);
  ExperimentState s = initial_state(cfg, data, tiny_style());
  const PseudoLabelSet labels = labels_for_all(data.target_train);
  LossContext ctx;
  ctx.pseudo = &labels;
  ctx.train_decoder = false;
  const Batch batch = draw_batch(s, cfg, data, 2);
  auto grad_with = [&](LossWeights w) {
    s.detector.zero_grad();
    combined_loss(batch, s.detector, s.style, w, 2, ctx, true);
    return grads(s.detector);
  };
  LossWeights w{0.3, 0.02, 1.5, 0.7, 1.0, 3};
  const auto all = grad_with(w);
  const auto g2 = grad_with({0, 1, 0, 0, 1.0, 3});
  const auto g3 = grad_with({0, 0, 1, 0, 1.0, 3});
  const auto g4 = grad_with({0, 0, 0, 1, 1.0, 3});
  double diff = 0, scale = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const double sum = w.lambda2 * g2[i] + w.lambda3 * g3[i] + w.lambda4 * g4[i];
    diff = std::max(diff, std::abs(sum - all[i]));
    scale = std::max(scale, std::abs(all[i]));
  }
  CHECK(scale > 0);
  CHECK(diff <= 1e-4 * scale);

  const auto zero = grad_with({0, 0, 0, 0, 1.0, 3});
  const LossBreakdown b = combined_loss(batch, s.detector, s.style, {0, 0, 0, 0, 1.0, 3}, 2, ctx, false);
  CHECK(b.total == 0.0);
  for (double g : zero) CHECK(g == 0.0);
}

TEST_CASE("step-1 batches refuse target items and step 2 needs labels") {
  const ExperimentData data = tiny_data();
  const TrainConfig cfg = tiny_config(Variant::st_c_rpl);
  ExperimentState s = initial_state(cfg, data, tiny_style());
  const Batch b2 = draw_batch(s, cfg, data, 2);
  CHECK_THROWS_AS(combined_loss(b2, s.detector, s.style, cfg.weights, 1, {}, false), Error);
  CHECK_THROWS_AS(combined_loss(b2, s.detector, s.style, cfg.weights, 2, {}, false), Error);
  CHECK_THROWS_AS(combined_loss(b2, s.detector, s.style, cfg.weights, 3, {}, false), Error);
  try {
    run_step2(s, cfg, data);
    FAIL("expected a state error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::state);
  }
  CHECK_THROWS_AS(begin_step2(s, cfg, std::make_shared<PseudoLabelSet>(labels_for_all(data.target_train))), Error);
}

TEST_CASE("short runs are deterministic") {
  const ExperimentData data = tiny_data();
  const TrainConfig cfg = tiny_config(Variant::st_c);
  const ExperimentState a = train_step1(cfg, data, tiny_style());
  const ExperimentState b = train_step1(cfg, data, tiny_style());
  CHECK(a.step1_complete);
  CHECK(a.loss_log.size() == 3);
  CHECK(a.loss_log == b.loss_log);
  CHECK(a.metric_log == b.metric_log);
  CHECK(a.detector.checksum() == b.detector.checksum());
  CHECK(a.style.decoder_checksum() == b.style.decoder_checksum());
  TrainConfig other = cfg;
  other.seed = 6;
  CHECK(train_step1(other, data, tiny_style()).detector.checksum() != a.detector.checksum());
}

TEST_CASE("step 2 continues a completed step 1") {
  const ExperimentData data = tiny_data();
  const TrainConfig cfg = tiny_config(Variant::st_c_rpl);
  ExperimentState s = train_step1(cfg, data, tiny_style());
  const std::string before = s.detector.checksum();
  begin_step2(s, cfg, std::make_shared<PseudoLabelSet>(labels_for_all(data.target_train)));
  CHECK(s.step == 2);
  CHECK(s.iteration == 0);
  run_step2(s, cfg, data);
  CHECK(s.step2_complete);
  CHECK(s.detector.checksum() != before);
  CHECK(!s.map_series(2).empty());
  for (const auto& e : s.loss_log)
    if (e.step == 2) CHECK(e.rpl > 0);
}

TEST_CASE("doubling every weight doubles the total") {
  const ExperimentData data = tiny_data();
  const TrainConfig cfg = tiny_config(Variant::st_c);
  ExperimentState s = initial_state(cfg, data, tiny_style());
  const Batch batch = draw_batch(s, cfg, data, 1);
  const LossWeights w{1, 0.5, 1, 0, 1.0, 3}, w2{2, 1, 2, 0, 1.0, 3};
  const double a = combined_loss(batch, s.detector, s.style, w, 1, {}, false).total;
  const double b = combined_loss(batch, s.detector, s.style, w2, 1, {}, false).total;
  CHECK(std::abs(b - 2 * a) <= 1e-12 * std::abs(b));
  const LossBreakdown st_only = combined_loss(batch, s.detector, s.style, {1, 0, 1, 0, 1.0, 3}, 1, {}, false);
  CHECK(st_only.total == doctest::Approx(st_only.st + st_only.s).epsilon(1e-12));
}

TEST_CASE("the consistency weight changes the trajectory after one iteration") {
  const ExperimentData data = tiny_data();
  TrainConfig cfg = tiny_config(Variant::st_c);
  cfg.iters_step1 = 1;
  cfg.weights.lambda2 = 0;
  const std::string off = train_step1(cfg, data, tiny_style()).detector.checksum();
  cfg.weights.lambda2 = 1;
  CHECK(train_step1(cfg, data, tiny_style()).detector.checksum() != off);
}

TEST_CASE("source-only smoke run: moving-average loss goes down") {
  const ExperimentData data = tiny_data(8);
  TrainConfig cfg = toy_config();
  cfg.variant = Variant::source_only;
  cfg.iters_step1 = 50;
  cfg.eval_every = 50;
  cfg = apply_variant(cfg);
  const ExperimentState s = train_step1(cfg, data, tiny_style());
  REQUIRE(s.loss_log.size() == 50);
  auto window = [&](std::size_t from) {
    double m = 0;
    for (std::size_t i = from; i < from + 10; ++i) m += s.loss_log[i].total;
    return m / 10;
  };
  CHECK(window(40) < window(0));
  CHECK(window(20) < window(0));
}
