#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "lnlab/error.hpp"
#include "lnlab/train.hpp"
#include "train_fixtures.hpp"

using namespace lnlab;

TEST_CASE("remember_rate schedule") {
  CHECK(remember_rate(0, 0.4, 5) == 1.0);
  CHECK(remember_rate(5, 0.4, 5) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(remember_rate(10, 0.4, 5) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(remember_rate(2, 0.5, 4) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_THROWS_AS(remember_rate(1, 1.0, 5), DomainError);
  CHECK_THROWS_AS(remember_rate(1, 0.2, 0), DomainError);
}

TEST_CASE("TrainConfig validation") {
  TrainConfig cfg;
  cfg.method = Method::noise_matrix;
  CHECK_THROWS_AS(cfg.validate(4), ConfigError);
  cfg.transition = uniform_matrix(3, 0.1);
  CHECK_THROWS_AS(cfg.validate(4), ConfigError);
  cfg.transition = uniform_matrix(4, 0.1);
  CHECK_NOTHROW(cfg.validate(4));

  TrainConfig ct;
  ct.method = Method::co_teaching;
  CHECK_THROWS_AS(ct.resolved_forget_rate(), ConfigError);
  ct.transition = uniform_matrix(4, 0.4);
  CHECK(ct.resolved_forget_rate() == doctest::Approx(0.4));
  ct.forget_rate = 0.2;
  CHECK(ct.resolved_forget_rate() == 0.2);

  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(2), ConfigError);
  CHECK_THROWS_AS(parse_method("mixup"), UsageError);
}

TEST_CASE("evaluate") {
  const auto f = fixtures::make(400, 0.0, 1);
  ClassifierConfig cfg = fixtures::bow_config(f);
  const ClassifierModel zero(cfg);  // predicts class 0 everywhere
  std::size_t zeros = 0;
  for (const auto& e : f.test.examples()) zeros += e.gold_label == 0;
  CHECK(evaluate(zero, f.test, LabelSource::gold) == doctest::Approx(double(zeros) / f.test.size()));
  CHECK_THROWS_WITH_AS(evaluate(zero, f.test.with_examples({}), LabelSource::gold), "empty split", ConfigError);
  CHECK_THROWS_AS(evaluate(zero, f.test, LabelSource::noisy), ConfigError);
}

TEST_CASE("epochs=0 reports the untrained model") {
  const auto f = fixtures::make(400, 0.2, 2);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto out = train(f.train, f.val, f.test, fixtures::bow_config(f), cfg);
  CHECK(out.result.selected_epoch == 0);
  CHECK(out.result.trace.size() == 1);
  CHECK(out.result.test_accuracy == evaluate(init_model(fixtures::bow_config(f)), f.test, LabelSource::gold));
}

TEST_CASE("clean separable training reaches the Bayes neighbourhood") {
  const auto f = fixtures::make(2000, 0.0, 3);
  REQUIRE(synthetic_bayes_accuracy(f.spec) >= 0.95);
  TrainConfig cfg;
  cfg.epochs = 10;
  for (auto arch_cfg : {fixtures::bow_config(f), fixtures::mlp_config(f)}) {
    const auto out = train(f.train, f.val, f.test, arch_cfg, cfg);
    CHECK(out.result.test_accuracy >= 0.95);
  }
}

TEST_CASE("training is deterministic") {
  const auto f = fixtures::make(600, 0.4, 4);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.seed = 17;
  for (auto method : {Method::none, Method::co_teaching, Method::noise_matrix, Method::noise_matrix_reg,
                      Method::label_smoothing}) {
    cfg.method = method;
    cfg.transition = uniform_matrix(4, 0.4);
    const auto a = train(f.train, f.val, f.test, fixtures::mlp_config(f), cfg);
    const auto b = train(f.train, f.val, f.test, fixtures::mlp_config(f), cfg);
    REQUIRE(a.result.trace.size() == b.result.trace.size());
    for (std::size_t e = 0; e < a.result.trace.size(); ++e) {
      CHECK(a.result.trace[e].train_loss == b.result.trace[e].train_loss);
      CHECK(a.result.trace[e].test_accuracy == b.result.trace[e].test_accuracy);
    }
    CHECK(a.model == b.model);
  }
}

TEST_CASE("model selection") {
  const auto f = fixtures::make(600, 0.6, 5);
  TrainConfig cfg;
  cfg.epochs = 8;
  const auto out = train(f.train, f.val, f.test, fixtures::mlp_config(f), cfg);
  const auto& tr = out.result.trace;
  // Oracle: first index of the maximum validation accuracy.
  std::size_t best = 0;
  for (std::size_t e = 1; e < tr.size(); ++e)
    if (tr[e].val_accuracy > tr[best].val_accuracy) best = e;
  CHECK(out.result.selected_epoch == best);
  CHECK(out.result.test_accuracy == tr[best].test_accuracy);
  CHECK(evaluate(out.model, f.test, LabelSource::gold) == tr[best].test_accuracy);

  cfg.use_validation = false;
  const auto nv = train(f.train, f.val.with_examples({}), f.test, fixtures::mlp_config(f), cfg);
  CHECK(nv.result.selected_epoch == 8);
  CHECK(std::isnan(nv.result.trace[3].val_accuracy));

  cfg.use_validation = true;
  cfg.patience = 1;
  cfg.epochs = 50;
  const auto early = train(f.train, f.val, f.test, fixtures::mlp_config(f), cfg);
  CHECK(early.result.trace.size() < 51);
  CHECK(early.result.trace.size() - 1 - early.result.selected_epoch == 1);
}

TEST_CASE("train input validation") {
  const auto f = fixtures::make(200, 0.2, 6);
  TrainConfig cfg;
  CHECK_THROWS_AS(train(f.test, f.val, f.test, fixtures::bow_config(f), cfg), ConfigError);  // clean train
  CHECK_THROWS_AS(train(f.train, f.val.with_examples({}), f.test, fixtures::bow_config(f), cfg), ConfigError);
  auto small = fixtures::bow_config(f);
  small.vocab_size = 10;
  CHECK_THROWS_AS(train(f.train, f.val, f.test, small, cfg), ConfigError);
  cfg.method = Method::noise_matrix;
  CHECK_THROWS_AS(train(f.train, f.val, f.test, fixtures::bow_config(f), cfg), ConfigError);
}

TEST_CASE("co_teach_step selection") {
  const auto f = fixtures::make(200, 0.4, 7);
  auto cfg = fixtures::mlp_config(f);
  cfg.init_seed = 1;
  auto a = init_model(cfg);
  cfg.init_seed = 2;
  auto b = init_model(cfg);
  std::vector<Sample> batch;
  for (std::size_t i = 0; i < 10; ++i) batch.push_back({f.train[i].tokens, *f.train[i].noisy_label});

  SUBCASE("R=0.6 keeps six") {
    // Oracle: the kept positions carry the six smallest losses of the selector.
    const auto la = per_example_loss(a, nullptr, batch, {});
    Optimizer oa({}), ob({});
    const auto step = co_teach_step(a, b, batch, 0.6, oa, ob);
    CHECK(step.selected_by_a.size() == 6);
    CHECK(step.selected_by_b.size() == 6);
    CHECK(std::is_sorted(step.selected_by_a.begin(), step.selected_by_a.end()));
    std::vector<std::size_t> idx(10);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto x, auto y) { return la[x] < la[y]; });
    idx.resize(6);
    std::sort(idx.begin(), idx.end());
    CHECK(step.selected_by_a == idx);
  }
  SUBCASE("tiny R keeps one") {
    Optimizer oa({}), ob({});
    const auto step = co_teach_step(a, b, batch, 0.01, oa, ob);
    CHECK(step.selected_by_a.size() == 1);
  }
  SUBCASE("R=1 equals two plain steps") {
    auto a2 = a, b2 = b;
    Optimizer oa({}), ob({}), oa2({}), ob2({});
    co_teach_step(a, b, batch, 1.0, oa, ob);
    for (auto [m, o] : {std::pair{&a2, &oa2}, std::pair{&b2, &ob2}}) {
      const auto g = backward(*m, nullptr, batch, {});
      std::vector<std::vector<double>*> ps;
      std::vector<const std::vector<double>*> gs;
      for (std::size_t i = 0; i < m->params().size(); ++i) {
        ps.push_back(&m->params()[i].values);
        gs.push_back(&g.params[i]);
      }
      o->step(ps, gs);
    }
    CHECK(a == a2);
    CHECK(b == b2);
  }
  SUBCASE("mismatched networks") {
    auto other = fixtures::bow_config(f);
    auto c = init_model(other);
    Optimizer oa({}), ob({});
    CHECK_THROWS_AS(co_teach_step(a, c, batch, 0.5, oa, ob), ConfigError);
  }
}

TEST_CASE("neutral settings reproduce no-handling") {
  const auto f = fixtures::make(500, 0.4, 8);
  TrainConfig base;
  base.epochs = 5;
  base.seed = 3;
  auto mcfg = fixtures::mlp_config(f);
  mcfg.init_seed = 21;
  const auto plain = train(f.train, f.val, f.test, mcfg, base);

  auto compare = [&](const TrainResult& r, const TrainResult& ref) {
    REQUIRE(r.trace.size() == ref.trace.size());
    for (std::size_t e = 0; e < r.trace.size(); ++e)
      CHECK(std::abs(r.trace[e].train_loss - ref.trace[e].train_loss) < 1e-9);
  };

  SUBCASE("label smoothing alpha 0") {
    auto cfg = base;
    cfg.method = Method::label_smoothing;
    cfg.smoothing = 0.0;
    compare(train(f.train, f.val, f.test, mcfg, cfg).result, plain.result);
  }
  SUBCASE("identity noise matrix") {
    auto cfg = base;
    cfg.method = Method::noise_matrix;
    cfg.transition = TransitionMatrix::identity(4);
    compare(train(f.train, f.val, f.test, mcfg, cfg).result, plain.result);
  }
  SUBCASE("co-teaching with tau 0") {
    auto cfg = base;
    cfg.method = Method::co_teaching;
    cfg.forget_rate = 0.0;
    const auto ct = train(f.train, f.val, f.test, mcfg, cfg);
    compare(ct.result, plain.result);
    auto peer_cfg = mcfg;
    peer_cfg.init_seed = peer_init_seed(mcfg.init_seed);
    const auto peer_plain = train(f.train, f.val, f.test, peer_cfg, base);
    REQUIRE(ct.result.peer_trace.size() == peer_plain.result.trace.size());
    for (std::size_t e = 0; e < ct.result.peer_trace.size(); ++e)
      CHECK(std::abs(ct.result.peer_trace[e].train_loss - peer_plain.result.trace[e].train_loss) < 1e-9);
  }
}

TEST_CASE("co-teaching records schedule and precision") {
  const auto f = fixtures::make(800, 0.4, 9);
  TrainConfig cfg;
  cfg.method = Method::co_teaching;
  cfg.transition = uniform_matrix(4, 0.4);
  cfg.epochs = 7;
  cfg.ramp_epochs = 5;
  const auto out = train(f.train, f.val, f.test, fixtures::mlp_config(f), cfg);
  const auto& tr = out.result.trace;
  CHECK(std::isnan(tr[0].remember_rate));
  CHECK(tr[1].remember_rate == 1.0);
  CHECK(tr[6].remember_rate == doctest::Approx(0.6));
  CHECK(tr[7].remember_rate == doctest::Approx(0.6));
  // At R=1 every example is kept, so precision equals the clean fraction.
  std::size_t clean = 0;
  for (const auto& e : f.train.examples()) clean += *e.noisy_label == e.gold_label;
  CHECK(tr[1].selection_precision == doctest::Approx(double(clean) / f.train.size()).epsilon(1e-12));
  CHECK(out.result.peer_trace.size() == tr.size());
}

TEST_CASE("noise_matrix_reg lowers the training loss") {
  const auto f = fixtures::make(600, 0.4, 10);
  TrainConfig cfg;
  cfg.method = Method::noise_matrix_reg;
  cfg.epochs = 3;
  const auto out = train(f.train, f.val, f.test, fixtures::bow_config(f), cfg);
  CHECK(out.result.trace.back().train_loss < out.result.trace.front().train_loss);
}
