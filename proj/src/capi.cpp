#include "lnlab/lnlab.h"

#include <charconv>
#include <cstring>
#include <string>

#include "lnlab/bench.hpp"
#include "lnlab/error.hpp"
#include "lnlab/serialize.hpp"

using nlohmann::json;

struct lnlab_dataset {
  lnlab::LabeledDataset value;
};
struct lnlab_matrix {
  lnlab::TransitionMatrix value;
};
struct lnlab_model {
  lnlab::ClassifierModel value;
};
struct lnlab_experiment {
  lnlab::ExperimentSpec value;
};
struct lnlab_report {
  lnlab::Report value;
};

namespace {

thread_local std::string g_last_error;

lnlab_status status_of(lnlab::ErrorKind kind) {
  switch (kind) {
    case lnlab::ErrorKind::config: return LNLAB_ERR_CONFIG;
    case lnlab::ErrorKind::usage: return LNLAB_ERR_USAGE;
    case lnlab::ErrorKind::format: return LNLAB_ERR_FORMAT;
    case lnlab::ErrorKind::domain: return LNLAB_ERR_DOMAIN;
    case lnlab::ErrorKind::io: return LNLAB_ERR_IO;
    case lnlab::ErrorKind::runtime: return LNLAB_ERR_RUNTIME;
  }
  return LNLAB_ERR_RUNTIME;
}

template <typename F>
lnlab_status guard(F&& f) {
  g_last_error.clear();
  try {
    f();
    return LNLAB_OK;
  } catch (const lnlab::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const json::exception& e) {
    g_last_error = std::string("json: ") + e.what();
    return LNLAB_ERR_CONFIG;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return LNLAB_ERR_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return LNLAB_ERR_RUNTIME;
  }
}

char* dup(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

json parse_or_empty(const char* text, const char* context) {
  if (!text || !*text) return json::object();
  return lnlab::parse_json_config(text, context);
}

lnlab_status argument_error(const char* what) {
  g_last_error = std::string("invalid argument: ") + what;
  return LNLAB_ERR_ARGUMENT;
}

}  // namespace

#define LNLAB_REQUIRE(cond) \
  do {                      \
    if (!(cond)) return argument_error(#cond); \
  } while (0)

extern "C" {

const char* lnlab_version(void) { return LNLAB_VERSION_STRING; }

const char* lnlab_last_error(void) { return g_last_error.c_str(); }

const char* lnlab_status_name(lnlab_status status) {
  switch (status) {
    case LNLAB_OK: return "ok";
    case LNLAB_ERR_CONFIG: return "config error";
    case LNLAB_ERR_USAGE: return "usage error";
    case LNLAB_ERR_FORMAT: return "format error";
    case LNLAB_ERR_DOMAIN: return "domain error";
    case LNLAB_ERR_IO: return "i/o error";
    case LNLAB_ERR_RUNTIME: return "runtime failure";
    case LNLAB_ERR_ARGUMENT: return "invalid argument";
  }
  return "unknown status";
}

void lnlab_string_free(char* s) { std::free(s); }

lnlab_status lnlab_config_resolve(const char* kind, const char* text, char** out_json) {
  LNLAB_REQUIRE(kind && out_json);
  return guard([&] {
    const auto j = parse_or_empty(text, kind);
    const std::string k = kind;
    json resolved;
    if (k == "synthetic")
      resolved = j.get<lnlab::SynthSpec>();
    else if (k == "noise")
      resolved = j.get<lnlab::NoiseSpec>();
    else if (k == "model")
      resolved = j.get<lnlab::ClassifierConfig>();
    else if (k == "train")
      resolved = j.get<lnlab::TrainConfig>();
    else if (k == "tapt")
      resolved = j.get<lnlab::TaptConfig>();
    else
      throw lnlab::UsageError("unknown config kind '" + k + "'");
    *out_json = dup(resolved.dump(2));
  });
}

// --- datasets --------------------------------------------------------------

lnlab_status lnlab_dataset_synthetic(const char* spec_json, lnlab_dataset** out) {
  LNLAB_REQUIRE(out);
  return guard([&] {
    const auto spec = parse_or_empty(spec_json, "synthetic spec").get<lnlab::SynthSpec>();
    *out = new lnlab_dataset{lnlab::generate_synthetic(spec)};
  });
}

lnlab_status lnlab_dataset_load(const char* path, const char* format, const char* text_field, const char* label_field,
                                const char* options_json, const lnlab_dataset* vocab_from, lnlab_dataset** out) {
  LNLAB_REQUIRE(path && format && text_field && label_field && out);
  return guard([&] {
    const auto j = parse_or_empty(options_json, "load options");
    lnlab::require_known_keys(j, {"min_freq", "max_vocab"}, "load options");
    lnlab::LoadOptions opts;
    opts.min_freq = j.value("min_freq", opts.min_freq);
    opts.max_vocab = j.value("max_vocab", opts.max_vocab);
    if (vocab_from) {
      opts.vocab = vocab_from->value.vocab_ptr();
      opts.class_names = vocab_from->value.class_names();
    }
    *out = new lnlab_dataset{
        lnlab::load_dataset(path, lnlab::parse_file_format(format), text_field, label_field, opts)};
  });
}

lnlab_status lnlab_dataset_read(const char* path, lnlab_dataset** out) {
  LNLAB_REQUIRE(path && out);
  return guard([&] { *out = new lnlab_dataset{lnlab::read_jsonl(path)}; });
}

lnlab_status lnlab_dataset_write(const lnlab_dataset* ds, const char* path) {
  LNLAB_REQUIRE(ds && path);
  return guard([&] { lnlab::write_jsonl(ds->value, path); });
}

void lnlab_dataset_free(lnlab_dataset* ds) { delete ds; }

size_t lnlab_dataset_size(const lnlab_dataset* ds) { return ds ? ds->value.size() : 0; }
size_t lnlab_dataset_num_classes(const lnlab_dataset* ds) { return ds ? ds->value.num_classes() : 0; }
size_t lnlab_dataset_vocab_size(const lnlab_dataset* ds) { return ds ? ds->value.vocab().size() : 0; }

lnlab_status lnlab_dataset_labels(const lnlab_dataset* ds, int noisy, int64_t* out_labels) {
  LNLAB_REQUIRE(ds && (out_labels || ds->value.empty()));
  return guard([&] {
    for (std::size_t i = 0; i < ds->value.size(); ++i) {
      const auto& ex = ds->value[i];
      if (!noisy)
        out_labels[i] = ex.gold_label;
      else
        out_labels[i] = ex.noisy_label ? static_cast<int64_t>(*ex.noisy_label) : -1;
    }
  });
}

lnlab_status lnlab_dataset_split(const lnlab_dataset* ds, double fraction, uint64_t seed, lnlab_dataset** out_rest,
                                 lnlab_dataset** out_held) {
  LNLAB_REQUIRE(ds && out_rest && out_held);
  return guard([&] {
    auto [rest, held] = lnlab::split_dataset(ds->value, fraction, seed);
    auto* r = new lnlab_dataset{std::move(rest)};
    *out_held = new lnlab_dataset{std::move(held)};
    *out_rest = r;
  });
}

lnlab_status lnlab_dataset_corrupt(const lnlab_dataset* ds, const lnlab_matrix* matrix, uint64_t seed,
                                   lnlab_dataset** out) {
  LNLAB_REQUIRE(ds && matrix && out);
  return guard([&] { *out = new lnlab_dataset{lnlab::corrupt_labels(ds->value, matrix->value, seed)}; });
}

lnlab_status lnlab_dataset_apply_rules(const lnlab_dataset* ds, const char* rules_json, const char* fallback,
                                       lnlab_dataset** out) {
  LNLAB_REQUIRE(ds && rules_json && fallback && out);
  return guard([&] {
    const auto rules = lnlab::parse_rules(rules_json, ds->value.class_names());
    lnlab::Fallback fb = lnlab::DropUnmatched{};
    const std::string f = fallback;
    if (f != "drop") {
      if (auto idx = ds->value.class_index(f)) {
        fb = *idx;
      } else {
        lnlab::ClassId c = 0;
        const auto res = std::from_chars(f.data(), f.data() + f.size(), c);
        if (res.ec != std::errc() || res.ptr != f.data() + f.size())
          throw lnlab::ConfigError("fallback '" + f + "' is neither 'drop', a class name nor a class index");
        fb = c;
      }
    }
    *out = new lnlab_dataset{lnlab::apply_rules(ds->value, rules, fb)};
  });
}

lnlab_status lnlab_dataset_flip_stats(const lnlab_dataset* ds, size_t* out_count, size_t* out_flipped) {
  LNLAB_REQUIRE(ds && out_count && out_flipped);
  return guard([&] {
    const auto s = lnlab::flip_stats(ds->value);
    *out_count = s.count;
    *out_flipped = s.flipped;
  });
}

// --- matrices --------------------------------------------------------------

lnlab_status lnlab_matrix_from_noise(const char* noise_json, size_t k, lnlab_matrix** out) {
  LNLAB_REQUIRE(out);
  return guard([&] {
    const auto spec = parse_or_empty(noise_json, "noise spec").get<lnlab::NoiseSpec>();
    *out = new lnlab_matrix{lnlab::noise_matrix(spec, k)};
  });
}

lnlab_status lnlab_matrix_from_values(size_t k, const double* row_major, lnlab_matrix** out) {
  LNLAB_REQUIRE(row_major && out);
  return guard([&] {
    *out = new lnlab_matrix{lnlab::TransitionMatrix(k, std::vector<double>(row_major, row_major + k * k))};
  });
}

lnlab_status lnlab_matrix_from_json(const char* text, lnlab_matrix** out) {
  LNLAB_REQUIRE(text && out);
  return guard([&] { *out = new lnlab_matrix{lnlab::matrix_from_json(lnlab::parse_json_config(text, "matrix"))}; });
}

lnlab_status lnlab_matrix_empirical(const lnlab_dataset* ds, lnlab_matrix** out) {
  LNLAB_REQUIRE(ds && out);
  return guard([&] { *out = new lnlab_matrix{lnlab::empirical_matrix(ds->value)}; });
}

size_t lnlab_matrix_k(const lnlab_matrix* m) { return m ? m->value.k() : 0; }

double lnlab_matrix_get(const lnlab_matrix* m, size_t i, size_t j) {
  if (!m || i >= m->value.k() || j >= m->value.k()) return 0.0;
  return m->value(i, j);
}

lnlab_status lnlab_matrix_to_json(const lnlab_matrix* m, char** out_json) {
  LNLAB_REQUIRE(m && out_json);
  return guard([&] { *out_json = dup(lnlab::matrix_to_json(m->value).dump()); });
}

void lnlab_matrix_free(lnlab_matrix* m) { delete m; }

// --- models ----------------------------------------------------------------

lnlab_status lnlab_model_init(const char* config_json, const lnlab_dataset* shape_from, lnlab_model** out) {
  LNLAB_REQUIRE(out);
  return guard([&] {
    auto j = parse_or_empty(config_json, "model config");
    if (shape_from) {
      if (!j.contains("num_classes")) j["num_classes"] = shape_from->value.num_classes();
      if (!j.contains("vocab_size")) j["vocab_size"] = shape_from->value.vocab().size();
    }
    *out = new lnlab_model{lnlab::init_model(j.get<lnlab::ClassifierConfig>())};
  });
}

lnlab_status lnlab_model_load(const char* path, lnlab_model** out) {
  LNLAB_REQUIRE(path && out);
  return guard([&] { *out = new lnlab_model{lnlab::load_checkpoint(path)}; });
}

lnlab_status lnlab_model_save(const lnlab_model* model, const char* path) {
  LNLAB_REQUIRE(model && path);
  return guard([&] { lnlab::save_checkpoint(model->value, path); });
}

lnlab_status lnlab_model_config(const lnlab_model* model, char** out_json) {
  LNLAB_REQUIRE(model && out_json);
  return guard([&] { *out_json = dup(json(model->value.config()).dump(2)); });
}

lnlab_status lnlab_model_predict(const lnlab_model* model, const lnlab_dataset* ds, uint32_t* out_labels) {
  LNLAB_REQUIRE(model && ds && (out_labels || ds->value.empty()));
  return guard([&] {
    for (std::size_t i = 0; i < ds->value.size(); ++i) out_labels[i] = lnlab::predict(model->value, ds->value[i].tokens);
  });
}

lnlab_status lnlab_model_evaluate(const lnlab_model* model, const lnlab_dataset* ds, int noisy, double* out_accuracy) {
  LNLAB_REQUIRE(model && ds && out_accuracy);
  return guard([&] {
    *out_accuracy =
        lnlab::evaluate(model->value, ds->value, noisy ? lnlab::LabelSource::noisy : lnlab::LabelSource::gold);
  });
}

void lnlab_model_free(lnlab_model* model) { delete model; }

lnlab_status lnlab_tapt(const lnlab_model* model, const lnlab_dataset* corpus, const char* config_json,
                        lnlab_model** out_model, char** out_summary_json) {
  LNLAB_REQUIRE(model && corpus && out_model);
  return guard([&] {
    const auto cfg = parse_or_empty(config_json, "tapt config").get<lnlab::TaptConfig>();
    auto result = lnlab::tapt_pretrain(model->value, corpus->value, cfg);
    char* summary = nullptr;
    if (out_summary_json)
      summary = dup(json{{"epoch_loss", result.epoch_loss},
                         {"masked_accuracy", result.masked_accuracy},
                         {"masked_evaluated", result.masked_evaluated}}
                        .dump(2));
    *out_model = new lnlab_model{std::move(result.model)};
    if (out_summary_json) *out_summary_json = summary;
  });
}

lnlab_status lnlab_train(const lnlab_dataset* train, const lnlab_dataset* val, const lnlab_dataset* test,
                         const lnlab_model* initial, const char* config_json, lnlab_model** out_model,
                         char** out_result_json) {
  LNLAB_REQUIRE(train && test && initial && out_model && out_result_json);
  return guard([&] {
    const auto cfg = parse_or_empty(config_json, "train config").get<lnlab::TrainConfig>();
    const auto empty_val = train->value.with_examples({});
    auto outcome = lnlab::train(train->value, val ? val->value : empty_val, test->value, initial->value, cfg);
    char* text = dup(json(outcome.result).dump(2));
    *out_model = new lnlab_model{std::move(outcome.model)};
    *out_result_json = text;
  });
}

// --- experiments -----------------------------------------------------------

lnlab_status lnlab_experiment_parse(const char* spec_json, const char* base_dir, lnlab_experiment** out) {
  LNLAB_REQUIRE(spec_json && out);
  return guard([&] {
    const auto doc = lnlab::parse_json_config(spec_json, "experiment spec");
    *out = new lnlab_experiment{lnlab::parse_experiment(doc, base_dir ? base_dir : "")};
  });
}

lnlab_status lnlab_experiment_load(const char* path, lnlab_experiment** out) {
  LNLAB_REQUIRE(path && out);
  return guard([&] { *out = new lnlab_experiment{lnlab::load_experiment(path)}; });
}

lnlab_status lnlab_experiment_resolved(const lnlab_experiment* exp, char** out_json) {
  LNLAB_REQUIRE(exp && out_json);
  return guard([&] { *out_json = dup(exp->value.source.dump(2)); });
}

lnlab_status lnlab_experiment_run(const lnlab_experiment* exp, size_t workers, const char* timestamp,
                                  lnlab_trial_callback on_trial, void* user, lnlab_report** out) {
  LNLAB_REQUIRE(exp && out);
  return guard([&] {
    lnlab::RunOptions opts;
    opts.workers = workers;
    if (timestamp) opts.timestamp = timestamp;
    if (on_trial)
      opts.on_trial = [&](const lnlab::TrialTrace& t) {
        json trace = t.result;
        trace["cell"] = {{"method", t.method}, {"noise", t.noise}, {"tapt", t.tapt}, {"trial", t.trial}, {"seed", t.seed}};
        on_trial(t.method.c_str(), t.noise.c_str(), t.tapt ? 1 : 0, t.trial, trace.dump(2).c_str(), user);
      };
    *out = new lnlab_report{lnlab::run_experiment(exp->value, opts)};
  });
}

void lnlab_experiment_free(lnlab_experiment* exp) { delete exp; }

// --- reports ---------------------------------------------------------------

lnlab_status lnlab_report_render(const lnlab_report* report, const char* format, char** out_text) {
  LNLAB_REQUIRE(report && format && out_text);
  return guard([&] {
    switch (lnlab::parse_report_format(format)) {
      case lnlab::ReportFormat::csv: *out_text = dup(lnlab::report_csv(report->value)); break;
      case lnlab::ReportFormat::markdown: *out_text = dup(lnlab::report_markdown(report->value)); break;
      case lnlab::ReportFormat::json: *out_text = dup(lnlab::report_json(report->value)); break;
    }
  });
}

lnlab_status lnlab_report_write(const lnlab_report* report, const char* format, const char* path) {
  LNLAB_REQUIRE(report && format && path);
  return guard([&] { lnlab::emit_report(report->value, lnlab::parse_report_format(format), path); });
}

lnlab_status lnlab_report_read(const char* path, lnlab_report** out) {
  LNLAB_REQUIRE(path && out);
  return guard([&] { *out = new lnlab_report{lnlab::read_report(path)}; });
}

size_t lnlab_report_size(const lnlab_report* report) { return report ? report->value.rows.size() : 0; }

lnlab_status lnlab_report_delta(const lnlab_report* report, char** out_text) {
  LNLAB_REQUIRE(report && out_text);
  return guard([&] {
    std::string text;
    for (const auto& d : lnlab::delta_table(report->value))
      text += d.method + "\t" + d.noise + "\t" + lnlab::format_delta_row(d) + "\n";
    *out_text = dup(text);
  });
}

void lnlab_report_free(lnlab_report* report) { delete report; }

}  // extern "C"
