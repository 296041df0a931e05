#include <cmath>

#include "doctest.h"
#include "lnlab/bench.hpp"
#include "lnlab/error.hpp"
#include "test_util.hpp"

using namespace lnlab;
using nlohmann::json;

namespace {

json small_spec() {
  return json::parse(R"({
    "dataset": {"synthetic": {"n_docs": 300, "vocab_size": 100, "keywords_per_class": 5, "seed": 4}, "n_test": 150},
    "noise": [{"kind": "uniform", "level": 0.4}, {"kind": "single_flip", "level": 0.3}],
    "methods": ["NV", "WN", "CT", "NMat", "NMwR", "LS"],
    "tapt": "both",
    "trials": 2,
    "base_seed": 11,
    "model": {"arch": "embed_mlp", "embed_dim": 8, "hidden_dim": 8},
    "train": {"epochs": 2},
    "tapt_config": {"pretrain_epochs": 1}
  })");
}

ReportRow row(std::string method, std::string noise, bool tapt, double mean) {
  return {std::move(method), std::move(noise), tapt, mean, 0.5, 2, {mean - 0.5, mean + 0.5}};
}

}  // namespace

TEST_CASE("fixed two-decimal formatting") {
  CHECK(format_row(92.40, 0.25) == "92.40±0.25");
  CHECK(format_row(0.0, 0.0) == "0.00±0.00");
  CHECK(format_row(85.494, 0.756) == "85.49±0.76");
  CHECK(format_fixed2(0.125) == "0.13");  // half-up on the decimal form
  CHECK(format_fixed2(2.675) == "2.68");
  CHECK(format_fixed2(100.0) == "100.00");
  CHECK(format_fixed2(-1.005) == "-1.01");
  CHECK(format_fixed2(99.999) == "100.00");
}

TEST_CASE("mean_std") {
  const std::vector<double> v{90, 91, 92, 93, 94};
  const auto [m, s] = mean_std(v);
  CHECK(m == doctest::Approx(92.0));
  CHECK(s == doctest::Approx(std::sqrt(2.5)));
  CHECK(format_row(m, s) == "92.00±1.58");
  const std::vector<double> one{87.5};
  CHECK(mean_std(one).second == 0.0);
}

TEST_CASE("TAPT delta formatting") {
  CHECK(format_delta_row({"WN", "uniform_0.4", 85.49, 87.62}) == "85.49 | 2.13↑");
  CHECK(format_delta(0.0) == "0.00");
  CHECK(format_delta(49.0 - 50.0) == "1.00↓");
  for (double d : {0.37, 4.2, 12.005}) {
    auto up = format_delta(d), down = format_delta(-d);
    CHECK(up.substr(0, up.size() - 3) == down.substr(0, down.size() - 3));
    CHECK(up != down);
  }

  Report r;
  r.rows = {row("WN", "u", false, 85.49), row("WN", "u", true, 87.62), row("LS", "u", false, 50)};
  CHECK_THROWS_WITH_AS(delta_table(r), doctest::Contains("LS"), ConfigError);
  r.rows.push_back(row("LS", "u", true, 50));
  const auto d = delta_table(r);
  REQUIRE(d.size() == 2);
  CHECK(format_delta_row(d[0]) == "85.49 | 2.13↑");
  CHECK(format_delta_row(d[1]) == "50.00 | 0.00");
}

TEST_CASE("CSV report") {
  Report empty;
  CHECK(report_csv(empty) == "method,noise,tapt,mean,std,trials,trial_accuracies\n");
  CHECK(parse_report_csv(report_csv(empty)).empty());

  Report r;
  r.rows = {row("WN", "uniform_0.4", false, 85.1), row("CT", "weak, rules", true, 1.0 / 3.0)};
  const auto text = report_csv(r);
  std::size_t line_start = text.find('\n') + 1;
  const auto first = text.substr(line_start, text.find('\n', line_start) - line_start);
  CHECK(std::count(first.begin(), first.end(), ',') == 6);
  CHECK(parse_report_csv(text) == r.rows);

  CHECK_THROWS_AS(parse_report_csv("method,noise\nWN,u\n"), FormatError);
  CHECK_THROWS_AS(parse_report_csv("method,noise,tapt,mean,std,trials,trial_accuracies\nWN,u,maybe,1,0,1,1\n"),
                  FormatError);
  CHECK(parse_report_json(report_json(r)).rows == r.rows);
  CHECK_THROWS_AS(parse_report_json("[1]"), FormatError);

  test::TempDir dir;
  emit_report(r, ReportFormat::json, dir.path / "r.json");
  CHECK(read_report(dir.path / "r.json").rows == r.rows);
  emit_report(r, ReportFormat::csv, dir.path / "r.csv");
  CHECK(read_report(dir.path / "r.csv").rows == r.rows);
  CHECK_THROWS_AS(parse_report_format("xml"), UsageError);
}

TEST_CASE("markdown report") {
  Report r;
  r.rows = {row("WN", "u", false, 85.49), row("WN", "u", true, 87.62)};
  const auto md = report_markdown(r);
  CHECK(md.find("85.49±0.50") != std::string::npos);
  CHECK(md.find("TAPT+WN") != std::string::npos);
  CHECK(md.find("| WN | 85.49 | 2.13↑ |") != std::string::npos);
}

TEST_CASE("experiment parsing") {
  const auto spec = parse_experiment(small_spec());
  CHECK(spec.methods.size() == 6);
  CHECK(spec.noise[1].id() == "single_flip_0.3");
  CHECK(spec.tapt == TaptMode::both);

  auto bad = small_spec();
  bad["methods"] = {"WN", "MixUp"};
  CHECK_THROWS_AS(parse_experiment(bad), ConfigError);
  bad = small_spec();
  bad["extra"] = 1;
  CHECK_THROWS_AS(parse_experiment(bad), ConfigError);
  bad = small_spec();
  bad["model"]["arch"] = "bow_linear";
  CHECK_THROWS_AS(parse_experiment(bad), ConfigError);  // TAPT needs embeddings
  bad = small_spec();
  bad["noise"].push_back(bad["noise"][0]);
  CHECK_THROWS_AS(parse_experiment(bad), ConfigError);

  auto weak = small_spec();
  weak.erase("trials");
  weak["noise"] = json::parse(R"([{"kind":"weak","name":"kw","fallback":"class1",
      "rules":[{"class":"class0","keywords":["kw0t0"],"priority":1}]}])");
  const auto ws = parse_experiment(weak);
  CHECK(ws.trials == 10);
  CHECK(ws.noise[0].fallback_class == "class1");
  CHECK(ws.noise[0].id() == "kw");
  CHECK(parse_experiment(small_spec()).trials == 2);
}

TEST_CASE("run_experiment") {
  const auto spec = parse_experiment(small_spec());
  RunOptions opts;
  opts.timestamp = "2026-01-01T00:00:00Z";
  std::size_t traces = 0;
  opts.on_trial = [&](const TrialTrace& t) {
    ++traces;
    CHECK(t.result.trace.size() == 3);
  };
  const auto report = run_experiment(spec, opts);
  CHECK(traces == 6 * 2 * 2 * 2);
  CHECK(report.rows.size() == 24);
  CHECK(report.provenance.seeds == std::vector<std::uint64_t>{11, 12});
  for (const auto& r : report.rows) {
    CHECK(r.trials == 2);
    CHECK(r.mean == doctest::Approx((r.trial_accuracies[0] + r.trial_accuracies[1]) / 2));
  }

  SUBCASE("deterministic and independent of worker count") {
    RunOptions par = opts;
    par.on_trial = nullptr;
    par.workers = 4;
    CHECK(report_csv(run_experiment(spec, par)) == report_csv(report));
  }
  SUBCASE("cells do not depend on which methods run") {
    auto doc = small_spec();
    doc["methods"] = {"LS", "WN"};
    RunOptions o;
    o.timestamp = opts.timestamp;
    const auto sub = run_experiment(parse_experiment(doc), o);
    for (const auto& r : sub.rows) {
      const auto* full = report.find(r.method, r.noise, r.tapt);
      REQUIRE(full);
      CHECK(r.trial_accuracies == full->trial_accuracies);
    }
    CHECK(sub.provenance.spec_hash != report.provenance.spec_hash);
  }
}

TEST_CASE("weak-rule experiment") {
  auto doc = small_spec();
  doc["tapt"] = "off";
  doc["methods"] = {"WN", "NMat"};
  doc["noise"] = json::parse(R"([{"kind":"weak","name":"kw","fallback":"class1",
      "rules":[{"class":"class0","keywords":["kw0t0","kw0t1"],"priority":1},
               {"class":"class2","keywords":["kw2t0"],"priority":2}]}])");
  doc["trials"] = 1;
  const auto r = run_experiment(parse_experiment(doc));
  CHECK(r.rows.size() == 2);
  doc["noise"][0]["fallback"] = "class9";
  CHECK_THROWS_AS(run_experiment(parse_experiment(doc)), ConfigError);
}

TEST_CASE("seed derivation") {
  CHECK(cell_seed(1, "WN", "u", false, 0) == cell_seed(0, "WN", "u", false, 1));
  CHECK(cell_seed(1, "WN", "u", false, 0) != cell_seed(1, "WN", "u", true, 0));
  CHECK(cell_seed(1, "WN", "u", false, 0) != cell_seed(1, "CT", "u", false, 0));
  CHECK(data_seed(3, "u", 0) != data_seed(3, "v", 0));
}
