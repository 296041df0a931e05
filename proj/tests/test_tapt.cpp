#include "doctest.h"
#include "lnlab/error.hpp"
#include "lnlab/tapt.hpp"
#include "train_fixtures.hpp"

using namespace lnlab;

namespace {

ClassifierModel mlp(const fixtures::Splits& f) {
  auto c = fixtures::mlp_config(f);
  c.init_seed = 5;
  return init_model(c);
}

}  // namespace

TEST_CASE("TaptConfig validation") {
  TaptConfig c;
  c.mask_prob = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.mask_prob = 0.15;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("zero pretraining epochs is a no-op") {
  const auto f = fixtures::make(300, 0.0, 1);
  TaptConfig c;
  c.pretrain_epochs = 0;
  const auto out = tapt_pretrain(mlp(f), f.train, c);
  CHECK(out.model == mlp(f));
  CHECK(out.epoch_loss.empty());
}

TEST_CASE("bag-of-words models are rejected") {
  const auto f = fixtures::make(100, 0.0, 2);
  CHECK_THROWS_WITH_AS(tapt_pretrain(init_model(fixtures::bow_config(f)), f.train, {}),
                       doctest::Contains("unsupported architecture"), ConfigError);
  auto small = fixtures::mlp_config(f);
  small.vocab_size = 20;
  CHECK_THROWS_AS(tapt_pretrain(init_model(small), f.train, {}), ConfigError);
}

TEST_CASE("only the embedding table changes") {
  const auto f = fixtures::make(400, 0.3, 3);
  TaptConfig c;
  c.pretrain_epochs = 2;
  const auto before = mlp(f);
  const auto out = tapt_pretrain(before, f.train, c);
  CHECK(!(out.model.params()[ClassifierModel::kEmbedding] == before.params()[ClassifierModel::kEmbedding]));
  for (std::size_t p = 1; p < before.params().size(); ++p) CHECK(out.model.params()[p] == before.params()[p]);
  CHECK(out.model.config() == before.config());
}

TEST_CASE("masked-token predictor learns the corpus") {
  const auto f = fixtures::make(2000, 0.0, 4);
  TaptConfig c;
  c.pretrain_epochs = 5;
  c.seed = 9;
  const auto out = tapt_pretrain(mlp(f), f.train, c);
  REQUIRE(out.epoch_loss.size() == 5);
  CHECK(out.epoch_loss.back() < out.epoch_loss.front());
  REQUIRE(out.masked_evaluated > 1000);
  // Chance is 1/V for a uniform guess.
  const double chance = 1.0 / static_cast<double>(f.train.vocab().size());
  MESSAGE("masked accuracy " << out.masked_accuracy << ", chance " << chance);
  CHECK(out.masked_accuracy > 5.0 * chance);
}

TEST_CASE("pretraining is deterministic in its seed") {
  const auto f = fixtures::make(300, 0.0, 5);
  TaptConfig c;
  c.pretrain_epochs = 2;
  c.seed = 3;
  const auto a = tapt_pretrain(mlp(f), f.train, c);
  const auto b = tapt_pretrain(mlp(f), f.train, c);
  CHECK(a.model == b.model);
  CHECK(a.epoch_loss == b.epoch_loss);
  c.seed = 4;
  CHECK(!(tapt_pretrain(mlp(f), f.train, c).model == a.model));
}
