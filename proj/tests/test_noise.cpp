#include <cmath>

#include "doctest.h"
#include "lnlab/error.hpp"
#include "lnlab/noise.hpp"
#include "test_util.hpp"

using namespace lnlab;

namespace {

LabeledDataset text_dataset(const std::vector<std::pair<std::string, ClassId>>& docs,
                            std::vector<std::string> class_names) {
  std::vector<std::vector<std::string>> toks;
  for (const auto& [text, _] : docs) toks.push_back(tokenize(text));
  auto vocab = std::make_shared<const Vocabulary>(build_vocab(toks));
  std::vector<Example> ex;
  for (std::size_t i = 0; i < docs.size(); ++i) ex.push_back({vocab->encode(toks[i]), docs[i].second, std::nullopt});
  return LabeledDataset(std::move(ex), std::move(class_names), vocab);
}

// Counting oracle written independently of empirical_matrix.
std::vector<std::vector<double>> count_matrix(const LabeledDataset& ds) {
  const auto k = ds.num_classes();
  std::vector<std::vector<double>> m(k, std::vector<double>(k, 0.0));
  std::vector<double> totals(k, 0.0);
  for (const auto& e : ds.examples()) {
    m[e.gold_label][*e.noisy_label] += 1.0;
    totals[e.gold_label] += 1.0;
  }
  for (std::size_t i = 0; i < k; ++i)
    for (auto& x : m[i]) x /= totals[i];
  return m;
}

LabeledDataset balanced(std::size_t n, std::size_t k) {
  auto vocab = std::make_shared<const Vocabulary>();
  std::vector<Example> ex(n);
  for (std::size_t i = 0; i < n; ++i) ex[i].gold_label = static_cast<ClassId>(i % k);
  std::vector<std::string> names;
  for (std::size_t c = 0; c < k; ++c) names.push_back("c" + std::to_string(c));
  return LabeledDataset(std::move(ex), names, vocab);
}

}  // namespace

TEST_CASE("TransitionMatrix validation") {
  CHECK_THROWS_AS(TransitionMatrix(2, {0.5, 0.6, 0.5, 0.5}), DomainError);
  CHECK_THROWS_AS(TransitionMatrix(2, {1.1, -0.1, 0.0, 1.0}), DomainError);
  CHECK_THROWS_AS(TransitionMatrix(2, {1.0, 0.0, 1.0}), DomainError);
  CHECK_NOTHROW(TransitionMatrix(2, {0.5, 0.5 + 1e-10, 0.0, 1.0}));
  CHECK(TransitionMatrix::identity(3).mean_flip_rate() == 0.0);
  CHECK(uniform_matrix(4, 0.4).mean_flip_rate() == doctest::Approx(0.4));
}

TEST_CASE("uniform_matrix") {
  CHECK(uniform_matrix(4, 0.0) == TransitionMatrix::identity(4));
  const auto m = uniform_matrix(4, 0.6);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(m(i, j) == doctest::Approx(i == j ? 0.4 : 0.2).epsilon(1e-15));
  CHECK(uniform_matrix(2, 0.45).rows() == std::vector<std::vector<double>>{{0.55, 0.45}, {0.45, 0.55}});
  CHECK_THROWS_AS(uniform_matrix(4, 1.0), DomainError);
  CHECK_THROWS_AS(uniform_matrix(4, -0.1), DomainError);
  CHECK_THROWS_AS(uniform_matrix(1, 0.1), DomainError);
}

TEST_CASE("single_flip_matrix") {
  const std::vector<ClassId> pi{1, 2, 0};
  CHECK(single_flip_matrix(3, 0.2, pi).rows() ==
        std::vector<std::vector<double>>{{0.8, 0.2, 0.0}, {0.0, 0.8, 0.2}, {0.2, 0.0, 0.8}});
  CHECK(single_flip_matrix(3, 0.2) == single_flip_matrix(3, 0.2, pi));
  CHECK(single_flip_matrix(5, 0.0) == TransitionMatrix::identity(5));
  for (double eps : {0.0, 0.1, 0.2, 0.3, 0.4, 0.45}) CHECK(single_flip_matrix(2, eps) == uniform_matrix(2, eps));
  const std::vector<ClassId> fixed_point{1, 1, 0};
  CHECK_THROWS_AS(single_flip_matrix(3, 0.2, fixed_point), ConfigError);
  const std::vector<ClassId> short_map{1};
  CHECK_THROWS_AS(single_flip_matrix(3, 0.2, short_map), ConfigError);
}

TEST_CASE("NoiseSpec ids and parsing") {
  CHECK(NoiseSpec{}.id() == "clean");
  CHECK(NoiseSpec{NoiseKind::uniform, 0.4, {}}.id() == "uniform_0.4");
  CHECK(NoiseSpec{NoiseKind::single_flip, 0.45, {}}.id() == "single_flip_0.45");
  CHECK(parse_noise_kind("single-flip") == NoiseKind::single_flip);
  CHECK(parse_noise_kind("clean") == NoiseKind::none);
  CHECK_THROWS_AS(parse_noise_kind("gaussian"), UsageError);
}

TEST_CASE("corrupt_labels") {
  SUBCASE("identity leaves labels") {
    const auto ds = corrupt_labels(balanced(1000, 4), TransitionMatrix::identity(4), 1);
    for (const auto& e : ds.examples()) CHECK(*e.noisy_label == e.gold_label);
  }
  SUBCASE("preserves gold, order and tokens; deterministic") {
    SynthSpec spec;
    spec.n_docs = 300;
    const auto clean = generate_synthetic(spec);
    const auto a = corrupt_labels(clean, uniform_matrix(4, 0.5), 7);
    const auto b = corrupt_labels(clean, uniform_matrix(4, 0.5), 7);
    CHECK(a == b);
    for (std::size_t i = 0; i < clean.size(); ++i) {
      CHECK(a[i].gold_label == clean[i].gold_label);
      CHECK(a[i].tokens == clean[i].tokens);
    }
    CHECK(!(corrupt_labels(clean, uniform_matrix(4, 0.5), 8) == a));
  }
  SUBCASE("empirical flips match T") {
    const auto ds = corrupt_labels(balanced(100000, 4), uniform_matrix(4, 0.4), 3);
    const auto m = count_matrix(ds);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(m[i][j] - uniform_matrix(4, 0.4)(i, j)) < 0.01);
  }
  SUBCASE("flip fraction interval") {
    const auto ds = corrupt_labels(balanced(10000, 4), uniform_matrix(4, 0.4), 4);
    const double rate = flip_stats(ds).rate();
    CHECK(rate >= 0.38);
    CHECK(rate <= 0.42);
  }
  SUBCASE("never samples a zero entry") {
    const auto ds = corrupt_labels(balanced(20000, 3), single_flip_matrix(3, 0.3), 5);
    for (const auto& e : ds.examples()) CHECK((*e.noisy_label == e.gold_label || *e.noisy_label == (e.gold_label + 1) % 3));
  }
  CHECK_THROWS_AS(corrupt_labels(balanced(10, 4), uniform_matrix(3, 0.1), 0), ConfigError);
}

TEST_CASE("weak rules") {
  const std::vector<std::string> names{"africa", "other", "sports"};
  const auto ds = text_dataset({{"election in nigeria today", 0},
                                {"football match in accra", 2},
                                {"stock markets fall", 1},
                                {"New York results", 1}},
                               names);
  SUBCASE("country-list rule") {
    const auto rules = parse_rules(R"([{"class":"africa","keywords":["nigeria","accra"],"priority":1}])", names);
    const auto out = apply_rules(ds, rules, ClassId{1});
    CHECK(*out[0].noisy_label == 0);
    CHECK(*out[1].noisy_label == 0);
    CHECK(*out[2].noisy_label == 1);  // fallback
    CHECK(out[1].gold_label == 2);
  }
  SUBCASE("priority tie-break") {
    const auto rules = parse_rules(R"([{"class":"sports","keywords":["football"],"priority":2},
                                       {"class":"africa","keywords":["accra"],"priority":1}])",
                                   names);
    CHECK(*apply_rules(ds, rules, ClassId{1})[1].noisy_label == 0);
    const auto winners = match_rules(ds, rules);
    CHECK(winners[1] == std::size_t{1});
    CHECK(!winners[2]);
  }
  SUBCASE("multi-token keyword matches a contiguous run") {
    const auto rules = parse_rules(R"([{"class":"other","keywords":["new york"],"priority":1},
                                       {"class":"sports","keywords":["in today"],"priority":2}])",
                                   names);
    const auto w = match_rules(ds, rules);
    CHECK(w[3] == std::size_t{0});
    CHECK(!w[0]);  // "in" and "today" are not adjacent
  }
  SUBCASE("drop unmatched") {
    const auto rules = parse_rules(R"([{"class":"africa","keywords":["Nigeria"],"priority":1}])", names);
    const auto out = apply_rules(ds, rules, DropUnmatched{});
    REQUIRE(out.size() == 1);
    CHECK(out[0].gold_label == 0);
    CHECK(apply_rules(ds, rules, DropUnmatched{}) == out);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(parse_rules(R"([{"class":"mars","keywords":["x"],"priority":1}])", names), ConfigError);
    CHECK_THROWS_AS(parse_rules(R"([{"class":"africa","keywords":[],"priority":1}])", names), ConfigError);
    CHECK_THROWS_AS(parse_rules(R"([{"class":"africa","keywords":["a"],"priority":1},
                                    {"class":"other","keywords":["b"],"priority":1}])",
                                names),
                    ConfigError);
    CHECK_THROWS_AS(parse_rules("{", names), FormatError);
    CHECK_THROWS_AS(parse_rules(R"([{"class":"africa"}])", names), FormatError);
    const auto rules = parse_rules(R"([{"class":"africa","keywords":["x"],"priority":1}])", names);
    CHECK_THROWS_AS(apply_rules(ds, rules, ClassId{3}), ConfigError);
  }
  SUBCASE("load_rules from file") {
    test::TempDir dir;
    const auto p = dir.write("r.json", R"([{"class":"sports","keywords":["football"],"priority":0}])");
    CHECK(load_rules(p, names).front().target_class == 2);
    CHECK_THROWS_AS(load_rules(dir.path / "none.json", names), IoError);
  }
}

TEST_CASE("empirical_matrix") {
  const std::vector<ClassId> gold{0, 0, 1, 1}, noisy{0, 1, 1, 1};
  CHECK(empirical_matrix(gold, noisy, 2).rows() == std::vector<std::vector<double>>{{0.5, 0.5}, {0.0, 1.0}});
  CHECK(empirical_matrix(gold, gold, 2) == TransitionMatrix::identity(2));
  const std::vector<ClassId> g3{0, 0, 2};
  CHECK_THROWS_WITH_AS(empirical_matrix(g3, g3, 3), doctest::Contains("class 1"), ConfigError);
  CHECK_THROWS_AS(empirical_matrix(gold, g3, 2), ConfigError);

  const auto T = single_flip_matrix(4, 0.3);
  const auto noisy_ds = corrupt_labels(balanced(100000, 4), T, 12);
  const auto est = empirical_matrix(noisy_ds);
  for (std::size_t i = 0; i < 4; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(std::abs(est(i, j) - T(i, j)) < 0.01);
      sum += est(i, j);
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("flip_stats with a mask") {
  auto ds = balanced(4, 2);
  std::vector<Example> ex = ds.examples();
  ex[0].noisy_label = 1;
  ex[1].noisy_label = 1;
  ex[2].noisy_label = 0;
  ex[3].noisy_label = 0;
  ds = ds.with_examples(ex);
  CHECK(flip_stats(ds).flipped == 2);
  const bool mask[] = {true, false, false, false};
  CHECK(flip_stats(ds, mask).rate() == 1.0);
}
