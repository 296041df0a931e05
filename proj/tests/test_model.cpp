#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gradcheck.hpp"
#include "lnlab/error.hpp"
#include "lnlab/model.hpp"
#include "lnlab/optim.hpp"
#include "test_util.hpp"

using namespace lnlab;

namespace {

ClassifierConfig bow(std::size_t k, std::size_t vocab) {
  ClassifierConfig c;
  c.num_classes = k;
  c.vocab_size = vocab;
  return c;
}

ClassifierConfig mlp(std::size_t k, std::size_t vocab, std::size_t d, std::size_t h) {
  ClassifierConfig c;
  c.arch = Arch::embed_mlp;
  c.num_classes = k;
  c.vocab_size = vocab;
  c.embed_dim = d;
  c.hidden_dim = h;
  return c;
}

double sum(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("init_model shapes and determinism") {
  auto cfg = bow(4, 100);
  cfg.init_seed = 3;
  const auto a = init_model(cfg);
  CHECK(a == init_model(cfg));
  CHECK(a.param("weight").shape == std::vector<std::size_t>{4, 100});
  CHECK(a.param("bias").values == std::vector<double>(4, 0.0));
  cfg.init_seed = 4;
  CHECK(!(init_model(cfg) == a));

  const auto m = init_model(mlp(2, 50, 16, 32));
  CHECK(m.parameter_count() == 50 * 16 + 16 * 32 + 32 + 32 * 2 + 2);
  CHECK(m.param("embedding").shape == std::vector<std::size_t>{50, 16});
  CHECK(m.param("hidden_weight").shape == std::vector<std::size_t>{32, 16});
  CHECK(m.param("output_weight").shape == std::vector<std::size_t>{2, 32});
  CHECK_THROWS_AS(m.param("nothing"), ConfigError);

  CHECK_THROWS_AS(init_model(bow(1, 10)), ConfigError);
  CHECK_THROWS_AS(init_model(mlp(2, 10, 0, 4)), ConfigError);
}

TEST_CASE("init scale follows fan-in") {
  auto cfg = bow(50, 400);
  const auto m = init_model(cfg);
  double sq = 0.0;
  for (double w : m.param("weight").values) sq += w * w;
  const double var = sq / static_cast<double>(m.param("weight").values.size());
  CHECK(var == doctest::Approx(1.0 / 400).epsilon(0.05));
}

TEST_CASE("forward") {
  SUBCASE("zero model is uniform") {
    const ClassifierModel zero(bow(4, 10));
    for (auto p : probabilities(zero, std::vector<TokenId>{3, 4})) CHECK(p == 0.25);
    const ClassifierModel zero_mlp(mlp(4, 10, 3, 3));
    for (auto p : probabilities(zero_mlp, std::vector<TokenId>{})) CHECK(p == 0.25);
  }
  SUBCASE("hand-set 2x2 linear weights") {
    ClassifierModel m(bow(2, 2));
    m.param("weight").values = {1.0, -2.0, 0.5, 3.0};  // row per class
    m.param("bias").values = {0.1, -0.1};
    const std::vector<TokenId> doc{1};
    // z = (-2 + 0.1, 3 - 0.1)
    const double z0 = -1.9, z1 = 2.9;
    const double e0 = std::exp(z0), e1 = std::exp(z1);
    const auto p = probabilities(m, doc);
    CHECK(p[0] == doctest::Approx(e0 / (e0 + e1)).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(e1 / (e0 + e1)).epsilon(1e-14));
  }
  SUBCASE("counts, not presence") {
    ClassifierModel m(bow(2, 4));
    m.param("weight").values = {0, 0, 0, 1, 0, 0, 0, 0};
    const auto z = logits(m, std::vector<TokenId>{3, 3, 3});
    CHECK(z[0] == 3.0);
  }
  SUBCASE("hand-computed mlp") {
    ClassifierModel m(mlp(2, 3, 1, 2));
    m.param("embedding").values = {0.0, 1.0, 3.0};
    m.param("hidden_weight").values = {1.0, -1.0};
    m.param("hidden_bias").values = {0.0, 0.5};
    m.param("output_weight").values = {1.0, 0.0, 0.0, 2.0};
    m.param("output_bias").values = {0.0, 0.0};
    // mean E = 2; hidden = relu(2, -1.5) = (2, 0); logits = (2, 0)
    const auto z = logits(m, std::vector<TokenId>{1, 2});
    CHECK(z[0] == 2.0);
    CHECK(z[1] == 0.0);
  }
  SUBCASE("sums to one") {
    auto cfg = mlp(5, 30, 6, 7);
    cfg.init_seed = 1;
    const auto m = init_model(cfg);
    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
      std::vector<TokenId> doc;
      for (std::size_t t = 0; t < 1 + rng.below(20); ++t) doc.push_back(static_cast<TokenId>(rng.below(30)));
      const auto p = probabilities(m, doc);
      CHECK(std::abs(sum(p) - 1.0) < 1e-9);
      for (double x : p) CHECK((x > 0.0 && x < 1.0));
    }
  }
  CHECK_THROWS_AS(logits(ClassifierModel(bow(2, 5)), std::vector<TokenId>{5}), ConfigError);
}

TEST_CASE("adapter_forward") {
  const std::vector<double> p{0.7, 0.3};
  CHECK(adapter_forward(p, NoiseAdapter::fixed(TransitionMatrix::identity(2))) == p);
  const auto q = adapter_forward(p, NoiseAdapter::fixed(uniform_matrix(2, 0.4)));
  CHECK(q[0] == doctest::Approx(0.54).epsilon(1e-14));
  CHECK(q[1] == doctest::Approx(0.46).epsilon(1e-14));

  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> T(16), pv(4);
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 4; ++j) s += (T[i * 4 + j] = rng.uniform());
      for (std::size_t j = 0; j < 4; ++j) T[i * 4 + j] /= s;
    }
    double s = 0.0;
    for (auto& x : pv) s += (x = rng.uniform() + 1e-3);
    for (auto& x : pv) x /= s;
    CHECK(std::abs(sum(adapter_forward(pv, NoiseAdapter::fixed(TransitionMatrix(4, T)))) - 1.0) < 1e-9);
  }

  // Identity-initialised learnable adapter passes p through.
  const auto learn = NoiseAdapter::learnable(2, 0.0);
  const auto ql = adapter_forward(p, learn);
  CHECK(ql[0] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK_THROWS_AS(adapter_forward(std::vector<double>{1.0, 0.0, 0.0}, learn), ConfigError);
}

TEST_CASE("losses") {
  const std::vector<double> uniform4(4, 0.25);
  for (ClassId c = 0; c < 4; ++c) CHECK(loss(uniform4, c, {}) == doctest::Approx(std::log(4.0)).epsilon(1e-15));

  const auto t = smoothing_target(4, 1, 0.2);
  const double expected[] = {0.05, 0.85, 0.05, 0.05};
  for (std::size_t j = 0; j < 4; ++j) CHECK(t[j] == doctest::Approx(expected[j]).epsilon(1e-15));

  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> v(5);
    double s = 0.0;
    for (auto& x : v) s += (x = rng.uniform());
    for (auto& x : v) x /= s;
    const auto label = static_cast<ClassId>(rng.below(5));
    CHECK(std::abs(loss(v, label, {LossKind::label_smoothing, 0.0}) - loss(v, label, {})) < 1e-12);
  }

  const std::vector<double> degenerate{1.0, 0.0};
  CHECK(loss(degenerate, 1, {}) == doctest::Approx(-std::log(kLogClamp)));
  CHECK(loss(uniform4, 0, {}, 0.5) == doctest::Approx(std::log(4.0) + 0.5));
  CHECK_THROWS_AS(loss(uniform4, 0, {LossKind::label_smoothing, 1.0}), ConfigError);
  CHECK_THROWS_AS(loss(uniform4, 4, {}), ConfigError);
}

TEST_CASE("l2 term difference equals lambda times squared norm") {
  auto cfg = bow(3, 8);
  cfg.init_seed = 2;
  const auto m = init_model(cfg);
  const std::vector<TokenId> doc{3, 4, 5};
  const std::vector<Sample> batch{{doc, 1}, {doc, 2}};
  auto with = NoiseAdapter::learnable(3, 0.3);
  auto without = NoiseAdapter::learnable(3, 0.0);
  Rng rng(1);
  for (std::size_t i = 0; i < 9; ++i) {
    const double w = rng.normal();
    with.mutable_weights()[i] = w;
    without.mutable_weights()[i] = w;
  }
  double norm2 = 0.0;
  for (double w : with.matrix()) norm2 += w * w;
  CHECK(with.l2_term() == doctest::Approx(0.3 * norm2).epsilon(1e-15));
  CHECK(std::abs(batch_loss(m, &with, batch, {}) - batch_loss(m, &without, batch, {}) - 0.3 * norm2) < 1e-12);

  auto to_identity = NoiseAdapter::learnable(3, 0.3, L2Target::identity);
  CHECK(to_identity.l2_term() == 0.0);
  CHECK(NoiseAdapter::fixed(TransitionMatrix::identity(3)).l2_term() == 0.0);
  CHECK_THROWS_AS(NoiseAdapter::learnable(3, -1.0), ConfigError);
}

TEST_CASE("gradient check over every combination") {
  for (auto arch : {Arch::bow_linear, Arch::embed_mlp})
    for (auto loss_cfg : {LossConfig{}, LossConfig{LossKind::label_smoothing, 0.15}})
      for (int mode : {0, 1, 2})
        for (auto target : {L2Target::zero, L2Target::identity}) {
          if (mode != 2 && target == L2Target::identity) continue;
          for (std::uint64_t point = 0; point < 10; ++point) {
            auto s = gradcheck::random_setup(arch, loss_cfg, mode, target, 1000 * point + 7);
            const double err = gradcheck::max_relative_error(s);
            CAPTURE(arch_name(arch));
            CAPTURE(mode);
            CAPTURE(point);
            CHECK(err < 1e-3);
          }
        }
}

TEST_CASE("fixed adapter gives the matrix no gradient") {
  auto s = gradcheck::random_setup(Arch::bow_linear, {}, 1, L2Target::zero, 3);
  CHECK(backward(s.model, &*s.adapter, s.batch, s.loss).adapter.empty());
}

TEST_CASE("lambda 0 identity learnable adapter matches fixed identity") {
  for (auto arch : {Arch::bow_linear, Arch::embed_mlp}) {
    auto s = gradcheck::random_setup(arch, {}, 0, L2Target::zero, 11);
    const auto learn = NoiseAdapter::learnable(3, 0.0);
    const auto ident = NoiseAdapter::fixed(TransitionMatrix::identity(3));
    const auto a = backward(s.model, &learn, s.batch, s.loss);
    const auto b = backward(s.model, &ident, s.batch, s.loss);
    const auto c = backward(s.model, nullptr, s.batch, s.loss);
    CHECK(std::abs(a.loss - b.loss) < 1e-9);
    for (std::size_t p = 0; p < a.params.size(); ++p)
      for (std::size_t i = 0; i < a.params[p].size(); ++i) {
        CHECK(std::abs(a.params[p][i] - b.params[p][i]) < 1e-9);
        CHECK(std::abs(b.params[p][i] - c.params[p][i]) < 1e-9);
      }
  }
}

TEST_CASE("gradient vanishes at the optimum of a separable one-example problem") {
  // Label smoothing has a finite minimiser, so plain gradient descent on the
  // convex linear model converges to it.
  const auto cfg = bow(2, 5);
  ClassifierModel m(cfg);
  const std::vector<TokenId> doc{3, 4};
  const std::vector<Sample> batch{{doc, 1}};
  const LossConfig ls{LossKind::label_smoothing, 0.2};
  OptimizerConfig oc;
  oc.kind = OptimizerKind::sgd;
  oc.learning_rate = 0.5;
  Optimizer opt(oc);
  Gradients g;
  for (int step = 0; step < 5000; ++step) {
    backward(m, nullptr, batch, ls, g);
    std::vector<std::vector<double>*> ps;
    std::vector<const std::vector<double>*> gs;
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      ps.push_back(&m.params()[i].values);
      gs.push_back(&g.params[i]);
    }
    opt.step(ps, gs);
  }
  backward(m, nullptr, batch, ls, g);
  double norm2 = 0.0;
  for (const auto& p : g.params)
    for (double x : p) norm2 += x * x;
  CHECK(std::sqrt(norm2) < 1e-6);
  // Optimum matches the smoothing target.
  CHECK(probabilities(m, doc)[1] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("predict") {
  CHECK(argmax(std::vector<double>{0.1, 0.8, 0.1}) == 1);
  CHECK(argmax(std::vector<double>{0.5, 0.5}) == 0);
  const ClassifierModel zero(bow(3, 4));
  CHECK(predict(zero, std::vector<TokenId>{3}) == 0);
}

TEST_CASE("checkpoint round trip is bit exact") {
  test::TempDir dir;
  auto cfg = mlp(3, 20, 4, 6);
  cfg.init_seed = 99;
  auto m = init_model(cfg);
  m.param("output_bias").values = {1e-300, -0.1, 1.0 / 3.0};
  save_checkpoint(m, dir.path / "m.json");
  CHECK(load_checkpoint(dir.path / "m.json") == m);
  CHECK(model_from_checkpoint_json(checkpoint_json(m)) == m);
  CHECK_THROWS_AS(model_from_checkpoint_json("{}"), FormatError);
  CHECK_THROWS_AS(model_from_checkpoint_json("nope"), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir.path / "missing.json"), IoError);
}

TEST_CASE("optimizer") {
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), UsageError);
  OptimizerConfig oc;
  oc.learning_rate = 0.1;
  Optimizer adam(oc);
  std::vector<double> x{1.0}, g{2.0};
  std::vector<double>* ps[] = {&x};
  const std::vector<double>* gs[] = {&g};
  adam.step(ps, gs);
  // First Adam step moves by lr * sign(g) after bias correction.
  CHECK(x[0] == doctest::Approx(0.9).epsilon(1e-6));
  oc.learning_rate = -1.0;
  CHECK_THROWS_AS(Optimizer{oc}, ConfigError);
}
