// Command-line front end. Talks to the library only through lnlab.h.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lnlab/lnlab.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Failure {
  lnlab_status status;
  std::string message;
};

void check(lnlab_status st, const std::string& what) {
  if (st != LNLAB_OK) throw Failure{st, what + ": " + lnlab_last_error()};
}

void config_error(const std::string& message) { throw Failure{LNLAB_ERR_CONFIG, message}; }

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Dataset = std::unique_ptr<lnlab_dataset, Deleter<lnlab_dataset, lnlab_dataset_free>>;
using Matrix = std::unique_ptr<lnlab_matrix, Deleter<lnlab_matrix, lnlab_matrix_free>>;
using Model = std::unique_ptr<lnlab_model, Deleter<lnlab_model, lnlab_model_free>>;
using Experiment = std::unique_ptr<lnlab_experiment, Deleter<lnlab_experiment, lnlab_experiment_free>>;
using ReportPtr = std::unique_ptr<lnlab_report, Deleter<lnlab_report, lnlab_report_free>>;

std::string take(char* s) {
  std::string out = s ? s : "";
  lnlab_string_free(s);
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{LNLAB_ERR_IO, "cannot open '" + path.string() + "'"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure{LNLAB_ERR_IO, "cannot write '" + path.string() + "'"};
  out << text;
}

json parse_json(const std::string& text, const std::string& context) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    config_error(context + ": invalid JSON: " + e.what());
  }
  return {};
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out_dir = ".";
  std::string text_field = "text";
  std::string label_field = "label";
  std::string raw_format;  // empty: inputs are encoded JSONL
  json config = json::object();

  // Section of the --config file, e.g. "train" or "model".
  json section(const std::string& name) const {
    if (!config.contains(name)) return json::object();
    if (!config[name].is_object()) config_error("--config: section '" + name + "' must be an object");
    return config[name];
  }

  fs::path out(const std::string& file) const { return fs::path(out_dir) / file; }
};

void load_config(Globals& g) {
  if (g.config_path.empty()) return;
  g.config = parse_json(read_file(g.config_path), g.config_path);
  if (!g.config.is_object()) config_error("--config must hold a JSON object");
}

std::string resolve(const char* kind, const json& j) {
  char* out = nullptr;
  check(lnlab_config_resolve(kind, j.dump().c_str(), &out), std::string("resolving ") + kind + " config");
  return take(out);
}

void write_resolved(const Globals& g, const std::string& command, json body) {
  body["command"] = command;
  body["version"] = lnlab_version();
  if (g.seed) body["seed"] = *g.seed;
  write_file(g.out("resolved_config.json"), body.dump(2) + "\n");
}

Dataset read_input(const Globals& g, const std::string& path, const lnlab_dataset* vocab_from = nullptr) {
  lnlab_dataset* ds = nullptr;
  if (g.raw_format.empty()) {
    check(lnlab_dataset_read(path.c_str(), &ds), "reading '" + path + "'");
  } else {
    check(lnlab_dataset_load(path.c_str(), g.raw_format.c_str(), g.text_field.c_str(), g.label_field.c_str(), nullptr,
                             vocab_from, &ds),
          "loading '" + path + "'");
  }
  return Dataset(ds);
}

std::string matrix_json(const lnlab_matrix* m) {
  char* out = nullptr;
  check(lnlab_matrix_to_json(m, &out), "serializing matrix");
  return take(out);
}

void print_flip_stats(const lnlab_dataset* ds) {
  size_t count = 0, flipped = 0;
  check(lnlab_dataset_flip_stats(ds, &count, &flipped), "flip stats");
  std::printf("%zu examples, %zu flipped (%.4f)\n", count, flipped, count ? double(flipped) / double(count) : 0.0);
}

// --- subcommands -----------------------------------------------------------

struct SynthArgs {
  std::string out = "synthetic.jsonl";
  std::optional<std::size_t> n_docs, classes;
  std::optional<double> signal_rate;
};

void run_synth(const Globals& g, const SynthArgs& a) {
  json spec = g.section("synthetic");
  if (a.n_docs) spec["n_docs"] = *a.n_docs;
  if (a.classes) spec["num_classes"] = *a.classes;
  if (a.signal_rate) spec["signal_rate"] = *a.signal_rate;
  if (g.seed) spec["seed"] = *g.seed;
  const auto resolved = resolve("synthetic", spec);
  lnlab_dataset* ds = nullptr;
  check(lnlab_dataset_synthetic(resolved.c_str(), &ds), "generating corpus");
  Dataset owned(ds);
  const auto path = g.out(a.out);
  check(lnlab_dataset_write(ds, path.c_str()), "writing corpus");
  write_resolved(g, "synth", {{"synthetic", json::parse(resolved)}, {"out", path.string()}});
  std::printf("wrote %zu documents to %s\n", lnlab_dataset_size(ds), path.c_str());
}

struct NoiseArgs {
  std::string in, out = "noisy.jsonl";
  std::optional<std::string> kind;
  std::optional<double> level;
  std::vector<std::uint32_t> flip_map;
};

void run_inject_noise(const Globals& g, const NoiseArgs& a) {
  json spec = g.section("noise");
  if (a.kind) spec["kind"] = *a.kind;
  if (a.level) spec["level"] = *a.level;
  if (!a.flip_map.empty()) spec["flip_map"] = a.flip_map;
  const auto resolved = resolve("noise", spec);
  auto ds = read_input(g, a.in);
  lnlab_matrix* m = nullptr;
  check(lnlab_matrix_from_noise(resolved.c_str(), lnlab_dataset_num_classes(ds.get()), &m), "building matrix");
  Matrix matrix(m);
  const std::uint64_t seed = g.seed.value_or(0);
  lnlab_dataset* noisy = nullptr;
  check(lnlab_dataset_corrupt(ds.get(), m, seed, &noisy), "injecting noise");
  Dataset owned(noisy);
  const auto path = g.out(a.out);
  check(lnlab_dataset_write(noisy, path.c_str()), "writing output");
  write_file(g.out("transition.json"), matrix_json(m) + "\n");
  write_resolved(g, "inject-noise",
                 {{"noise", json::parse(resolved)}, {"in", a.in}, {"out", path.string()}, {"corrupt_seed", seed}});
  print_flip_stats(noisy);
}

struct WeakArgs {
  std::string in, rules, fallback = "drop", out = "weak.jsonl";
};

void run_label_weak(const Globals& g, const WeakArgs& a) {
  const auto rules_text = read_file(a.rules);
  auto ds = read_input(g, a.in);
  lnlab_dataset* weak = nullptr;
  check(lnlab_dataset_apply_rules(ds.get(), rules_text.c_str(), a.fallback.c_str(), &weak), "applying rules");
  Dataset owned(weak);
  const auto path = g.out(a.out);
  check(lnlab_dataset_write(weak, path.c_str()), "writing output");
  lnlab_matrix* m = nullptr;
  check(lnlab_matrix_empirical(weak, &m), "estimating transition matrix");
  Matrix matrix(m);
  write_file(g.out("transition.json"), matrix_json(m) + "\n");
  write_resolved(g, "label-weak",
                 {{"rules", parse_json(rules_text, a.rules)}, {"fallback", a.fallback}, {"in", a.in}, {"out", path.string()}});
  print_flip_stats(weak);
}

Model initial_model(const Globals& g, const std::string& checkpoint, const lnlab_dataset* shape_from,
                    json& resolved_model) {
  lnlab_model* m = nullptr;
  if (!checkpoint.empty()) {
    check(lnlab_model_load(checkpoint.c_str(), &m), "loading checkpoint");
  } else {
    json cfg = g.section("model");
    if (g.seed && !cfg.contains("init_seed")) cfg["init_seed"] = *g.seed;
    check(lnlab_model_init(cfg.dump().c_str(), shape_from, &m), "initializing model");
  }
  Model model(m);
  char* cfg_text = nullptr;
  check(lnlab_model_config(m, &cfg_text), "model config");
  resolved_model = json::parse(take(cfg_text));
  return model;
}

struct TaptArgs {
  std::string in, model, out = "tapt_model.json";
  std::optional<std::size_t> epochs;
};

void run_tapt(const Globals& g, const TaptArgs& a) {
  json cfg = g.section("tapt");
  if (a.epochs) cfg["pretrain_epochs"] = *a.epochs;
  if (g.seed) cfg["seed"] = *g.seed;
  const auto resolved = resolve("tapt", cfg);
  auto corpus = read_input(g, a.in);
  json model_cfg;
  auto model = initial_model(g, a.model, corpus.get(), model_cfg);
  lnlab_model* out = nullptr;
  char* summary = nullptr;
  check(lnlab_tapt(model.get(), corpus.get(), resolved.c_str(), &out, &summary), "pretraining");
  Model owned(out);
  const auto summary_text = take(summary);
  const auto path = g.out(a.out);
  check(lnlab_model_save(out, path.c_str()), "saving model");
  write_file(g.out("tapt_summary.json"), summary_text + "\n");
  write_resolved(g, "tapt", {{"tapt", json::parse(resolved)}, {"model", model_cfg}, {"in", a.in}, {"out", path.string()}});
  const auto s = json::parse(summary_text);
  std::printf("masked-token accuracy %.4f over %zu positions\n", s["masked_accuracy"].get<double>(),
              s["masked_evaluated"].get<std::size_t>());
}

struct TrainArgs {
  std::string train, val, test, model;
  double val_fraction = 0.1;
  std::optional<std::string> method, transition;
  std::optional<std::size_t> epochs;
  bool no_validation = false;
  std::string out = "model.json";
};

void run_train(const Globals& g, const TrainArgs& a) {
  json cfg = g.section("train");
  if (a.method) cfg["method"] = *a.method;
  if (a.epochs) cfg["epochs"] = *a.epochs;
  if (a.no_validation) cfg["use_validation"] = false;
  if (a.transition) cfg["transition"] = parse_json(read_file(*a.transition), *a.transition);
  if (g.seed) cfg["seed"] = *g.seed;
  const auto resolved = resolve("train", cfg);
  const bool use_validation = json::parse(resolved)["use_validation"].get<bool>();

  auto full = read_input(g, a.train);
  auto test = read_input(g, a.test, full.get());
  Dataset train_set, val_set;
  if (!a.val.empty()) {
    train_set = std::move(full);
    val_set = read_input(g, a.val, train_set.get());
  } else if (use_validation) {
    lnlab_dataset *rest = nullptr, *held = nullptr;
    check(lnlab_dataset_split(full.get(), a.val_fraction, g.seed.value_or(0), &rest, &held), "splitting validation");
    train_set.reset(rest);
    val_set.reset(held);
  } else {
    train_set = std::move(full);
  }

  json model_cfg;
  auto model = initial_model(g, a.model, train_set.get(), model_cfg);
  lnlab_model* out = nullptr;
  char* result = nullptr;
  check(lnlab_train(train_set.get(), val_set.get(), test.get(), model.get(), resolved.c_str(), &out, &result),
        "training");
  Model owned(out);
  const auto result_text = take(result);
  const auto path = g.out(a.out);
  check(lnlab_model_save(out, path.c_str()), "saving model");
  write_file(g.out("trace.json"), result_text + "\n");
  write_resolved(g, "train",
                 {{"train", json::parse(resolved)},
                  {"model", model_cfg},
                  {"inputs", {{"train", a.train}, {"val", a.val}, {"test", a.test}, {"val_fraction", a.val_fraction}}},
                  {"out", path.string()}});
  const auto r = json::parse(result_text);
  std::printf("selected epoch %zu, clean test accuracy %.4f\n", r["selected_epoch"].get<std::size_t>(),
              r["test_accuracy"].get<double>());
}

struct BenchArgs {
  std::string spec;
  std::size_t workers = 0;
  std::string timestamp;
  bool no_traces = false;
};

void run_benchmark(const Globals& g, const BenchArgs& a) {
  const std::string spec_path = a.spec.empty() ? g.config_path : a.spec;
  if (spec_path.empty()) throw Failure{LNLAB_ERR_USAGE, "benchmark: give a spec file (positional or --config)"};
  json doc = parse_json(read_file(spec_path), spec_path);
  if (g.seed) doc["base_seed"] = *g.seed;
  lnlab_experiment* e = nullptr;
  check(lnlab_experiment_parse(doc.dump().c_str(), fs::path(spec_path).parent_path().c_str(), &e), "experiment spec");
  Experiment exp(e);

  fs::create_directories(g.out_dir);
  char* resolved = nullptr;
  check(lnlab_experiment_resolved(e, &resolved), "resolving spec");
  write_file(g.out("resolved_config.json"), take(resolved) + "\n");

  const auto trace_dir = g.out("traces");
  if (!a.no_traces) fs::create_directories(trace_dir);
  struct Ctx {
    fs::path dir;
    bool enabled;
  } ctx{trace_dir, !a.no_traces};
  auto on_trial = [](const char* method, const char* noise, int tapt, size_t trial, const char* trace, void* user) {
    auto* c = static_cast<Ctx*>(user);
    if (!c->enabled) return;
    const auto name = std::string(method) + "__" + noise + "__" + (tapt ? "tapt" : "orig") + "__trial" +
                      std::to_string(trial) + ".json";
    std::ofstream(c->dir / name, std::ios::binary) << trace << '\n';
  };

  lnlab_report* r = nullptr;
  check(lnlab_experiment_run(e, a.workers, a.timestamp.c_str(), on_trial, &ctx, &r), "benchmark");
  ReportPtr report(r);
  check(lnlab_report_write(r, "csv", g.out("report.csv").c_str()), "writing report.csv");
  check(lnlab_report_write(r, "markdown", g.out("report.md").c_str()), "writing report.md");
  check(lnlab_report_write(r, "json", g.out("report.json").c_str()), "writing report.json");
  std::printf("%zu cells written to %s\n", lnlab_report_size(r), g.out("report.csv").c_str());
}

struct ReportArgs {
  std::string in, format = "markdown", out;
  bool delta = false;
};

void run_report(const Globals& g, const ReportArgs& a) {
  (void)g;
  lnlab_report* r = nullptr;
  check(lnlab_report_read(a.in.c_str(), &r), "reading report");
  ReportPtr report(r);
  char* text = nullptr;
  if (a.delta)
    check(lnlab_report_delta(r, &text), "report");
  else
    check(lnlab_report_render(r, a.format.c_str(), &text), "rendering report");
  const auto body = take(text);
  if (a.out.empty())
    std::fwrite(body.data(), 1, body.size(), stdout);
  else
    write_file(a.out, body);
}

int exit_code(lnlab_status st) { return st == LNLAB_ERR_RUNTIME ? 2 : 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-noise benchmark toolkit"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for the command's random streams");
  app.add_option("--config", g.config_path, "JSON config (sections: synthetic, noise, model, train, tapt)");
  app.add_option("--out-dir", g.out_dir, "Directory for outputs and resolved_config.json");
  app.add_option("--text-field", g.text_field, "Text field of raw inputs");
  app.add_option("--label-field", g.label_field, "Label field of raw inputs");
  app.add_option("--input-format", g.raw_format, "Read raw csv/tsv/jsonl text instead of encoded JSONL")
      ->check(CLI::IsMember({"csv", "tsv", "jsonl"}));

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic keyword corpus");
  synth_cmd->add_option("--out", synth.out, "Output file name inside --out-dir");
  synth_cmd->add_option("--n-docs", synth.n_docs);
  synth_cmd->add_option("--classes", synth.classes);
  synth_cmd->add_option("--signal-rate", synth.signal_rate);

  NoiseArgs noise;
  auto* noise_cmd = app.add_subcommand("inject-noise", "Corrupt labels through a transition matrix");
  noise_cmd->add_option("--in", noise.in)->required();
  noise_cmd->add_option("--out", noise.out);
  noise_cmd->add_option("--kind", noise.kind, "none, uniform or single_flip");
  noise_cmd->add_option("--level", noise.level);
  noise_cmd->add_option("--flip-map", noise.flip_map)->delimiter(',');

  WeakArgs weak;
  auto* weak_cmd = app.add_subcommand("label-weak", "Label documents with keyword rules");
  weak_cmd->add_option("--in", weak.in)->required();
  weak_cmd->add_option("--rules", weak.rules)->required();
  weak_cmd->add_option("--fallback", weak.fallback, "drop, a class name or a class index");
  weak_cmd->add_option("--out", weak.out);

  TaptArgs tapt;
  auto* tapt_cmd = app.add_subcommand("tapt", "Masked-token pretraining of the embeddings");
  tapt_cmd->add_option("--in", tapt.in)->required();
  tapt_cmd->add_option("--model", tapt.model, "Start from this checkpoint");
  tapt_cmd->add_option("--epochs", tapt.epochs);
  tapt_cmd->add_option("--out", tapt.out);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a classifier on noisy labels");
  train_cmd->add_option("--train", tr.train)->required();
  train_cmd->add_option("--test", tr.test)->required();
  train_cmd->add_option("--val", tr.val, "Noisy validation file; default carves one out of --train");
  train_cmd->add_option("--val-fraction", tr.val_fraction);
  train_cmd->add_option("--model", tr.model, "Start from this checkpoint");
  train_cmd->add_option("--method", tr.method, "none, co_teaching, noise_matrix, noise_matrix_reg, label_smoothing");
  train_cmd->add_option("--transition", tr.transition, "JSON k x k matrix file");
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_flag("--no-validation", tr.no_validation, "Report the final epoch");
  train_cmd->add_option("--out", tr.out);

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("benchmark", "Run an experiment spec");
  bench_cmd->add_option("spec", bench.spec, "Experiment spec JSON (defaults to --config)");
  bench_cmd->add_option("--workers", bench.workers);
  bench_cmd->add_option("--timestamp", bench.timestamp, "Fixed provenance timestamp");
  bench_cmd->add_flag("--no-traces", bench.no_traces);

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "Render a stored report");
  report_cmd->add_option("--in", rep.in)->required();
  report_cmd->add_option("--format", rep.format)->check(CLI::IsMember({"csv", "markdown", "md", "json"}));
  report_cmd->add_option("--out", rep.out);
  report_cmd->add_flag("--delta", rep.delta, "Print the +TAPT difference table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  if (*seed_opt) g.seed = seed;

  try {
    load_config(g);
    if (!*bench_cmd) {
      std::error_code ec;
      fs::create_directories(g.out_dir, ec);
      if (ec) throw Failure{LNLAB_ERR_IO, "cannot create --out-dir '" + g.out_dir + "': " + ec.message()};
    }
    if (*synth_cmd) run_synth(g, synth);
    else if (*noise_cmd) run_inject_noise(g, noise);
    else if (*weak_cmd) run_label_weak(g, weak);
    else if (*tapt_cmd) run_tapt(g, tapt);
    else if (*train_cmd) run_train(g, tr);
    else if (*bench_cmd) run_benchmark(g, bench);
    else if (*report_cmd) run_report(g, rep);
  } catch (const Failure& f) {
    std::fprintf(stderr, "lnlab: %s: %s\n", lnlab_status_name(f.status), f.message.c_str());
    return exit_code(f.status);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "lnlab: %s\n", e.what());
    return 2;
  }
  return 0;
}
