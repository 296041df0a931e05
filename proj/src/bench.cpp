#include "lnlab/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "lnlab/error.hpp"
#include "lnlab/rng.hpp"
#include "lnlab/serialize.hpp"

#ifndef LNLAB_VERSION_STRING
#define LNLAB_VERSION_STRING "dev"
#endif

namespace lnlab {

using nlohmann::json;

std::string_view method_tag_name(MethodTag tag) {
  switch (tag) {
    case MethodTag::NV: return "NV";
    case MethodTag::WN: return "WN";
    case MethodTag::CT: return "CT";
    case MethodTag::NMat: return "NMat";
    case MethodTag::NMwR: return "NMwR";
    case MethodTag::LS: return "LS";
  }
  return "WN";
}

MethodTag parse_method_tag(std::string_view name) {
  for (auto tag : {MethodTag::NV, MethodTag::WN, MethodTag::CT, MethodTag::NMat, MethodTag::NMwR, MethodTag::LS})
    if (method_tag_name(tag) == name) return tag;
  throw ConfigError("unknown method '" + std::string(name) + "' (expected NV, WN, CT, NMat, NMwR or LS)");
}

std::string NoiseSetting::id() const {
  if (!name.empty()) return name;
  if (source == Source::weak) return "weak";
  return simulated.id();
}

const ReportRow* Report::find(std::string_view method, std::string_view noise, bool tapt) const {
  for (const auto& r : rows)
    if (r.method == method && r.noise == noise && r.tapt == tapt) return &r;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Spec parsing

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

DatasetSource parse_dataset(const json& j, const std::filesystem::path& base) {
  require_known_keys(j, {"synthetic", "n_test", "train", "test", "format", "text_field", "label_field", "min_freq", "max_vocab"},
                     "dataset");
  DatasetSource d;
  if (j.contains("synthetic")) {
    d.synthetic = j["synthetic"].get<SynthSpec>();
    d.n_test = j.value("n_test", d.n_test);
    return d;
  }
  if (!j.contains("train") || !j.contains("test"))
    throw ConfigError("dataset: give either 'synthetic' or both 'train' and 'test' paths");
  d.train_path = resolve(base, j["train"].get<std::string>());
  d.test_path = resolve(base, j["test"].get<std::string>());
  d.format = parse_file_format(j.value("format", std::string("jsonl")));
  d.text_field = j.value("text_field", d.text_field);
  d.label_field = j.value("label_field", d.label_field);
  d.min_freq = j.value("min_freq", d.min_freq);
  d.max_vocab = j.value("max_vocab", d.max_vocab);
  return d;
}

NoiseSetting parse_noise(const json& j, const std::filesystem::path& base) {
  NoiseSetting s;
  const auto kind = j.value("kind", std::string("none"));
  if (kind == "weak") {
    require_known_keys(j, {"kind", "rules", "fallback", "name"}, "noise setting");
    s.source = NoiseSetting::Source::weak;
    if (!j.contains("rules")) throw ConfigError("weak noise setting requires 'rules' (path or inline array)");
    const auto& rules = j["rules"];
    s.rules_json = rules.is_string() ? read_text(resolve(base, rules.get<std::string>())) : rules.dump();
    if (j.contains("fallback")) {
      const auto& fb = j["fallback"];
      if (fb.is_string() && fb.get<std::string>() == "drop")
        s.fallback = DropUnmatched{};
      else if (fb.is_string())
        s.fallback_class = fb.get<std::string>();
      else
        s.fallback = fb.get<ClassId>();
    }
  } else {
    json spec = j;
    spec.erase("name");
    s.simulated = spec.get<NoiseSpec>();
  }
  s.name = j.value("name", std::string());
  return s;
}

}  // namespace

void ExperimentSpec::validate() const {
  if (trials < 1) throw ConfigError("experiment: trials must be >= 1");
  if (methods.empty()) throw ConfigError("experiment: no methods");
  if (noise.empty()) throw ConfigError("experiment: no noise settings");
  if (tapt != TaptMode::off && model.arch != Arch::embed_mlp)
    throw ConfigError("experiment: TAPT requires the embed_mlp architecture");
  const bool needs_validation =
      std::any_of(methods.begin(), methods.end(), [](MethodTag t) { return t != MethodTag::NV; });
  if (needs_validation && !(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ConfigError("experiment: validation_fraction must lie in (0,1)");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("experiment: validation_fraction must lie in [0,1)");
  std::vector<std::string> ids;
  for (const auto& n : noise) ids.push_back(n.id());
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw ConfigError("experiment: duplicate noise setting id; set 'name' to disambiguate");
  if (dataset.synthetic) dataset.synthetic->validate();
}

ExperimentSpec parse_experiment(const json& doc, const std::filesystem::path& base_dir) {
  try {
    require_known_keys(doc,
                       {"dataset", "noise", "methods", "tapt", "trials", "base_seed", "validation_fraction", "model",
                        "train", "method_overrides", "tapt_config", "workers"},
                       "experiment");
    ExperimentSpec spec;
    if (!doc.contains("dataset")) throw ConfigError("experiment: missing 'dataset'");
    spec.dataset = parse_dataset(doc["dataset"], base_dir);

    bool any_weak = false;
    for (const auto& n : doc.value("noise", json::array())) {
      spec.noise.push_back(parse_noise(n, base_dir));
      any_weak = any_weak || spec.noise.back().source == NoiseSetting::Source::weak;
    }

    for (const auto& m : doc.value("methods", json::array())) spec.methods.push_back(parse_method_tag(m.get<std::string>()));
    const auto tapt = doc.value("tapt", std::string("off"));
    if (tapt == "off")
      spec.tapt = TaptMode::off;
    else if (tapt == "on")
      spec.tapt = TaptMode::on;
    else if (tapt == "both")
      spec.tapt = TaptMode::both;
    else
      throw ConfigError("experiment: tapt must be off, on or both");
    spec.trials = doc.value("trials", any_weak ? std::size_t{10} : std::size_t{5});
    spec.base_seed = doc.value("base_seed", std::uint64_t{0});
    spec.validation_fraction = doc.value("validation_fraction", 0.1);
    if (doc.contains("model")) spec.model = doc["model"].get<ClassifierConfig>();
    spec.train = doc.value("train", json::object());
    // Fail early on malformed train configs.
    (void)spec.train.get<TrainConfig>();
    const json overrides = doc.value("method_overrides", json::object());
    for (const auto& [tag, patch] : overrides.items()) {
      parse_method_tag(tag);
      spec.method_overrides[tag] = patch;
    }
    if (doc.contains("tapt_config")) spec.tapt_config = doc["tapt_config"].get<TaptConfig>();
    spec.workers = doc.value("workers", std::size_t{1});

    spec.source = doc;
    // Inline rule text so the hash covers the rules actually used.
    for (std::size_t i = 0; i < spec.noise.size(); ++i)
      if (spec.noise[i].source == NoiseSetting::Source::weak) spec.source["noise"][i]["rules"] = spec.noise[i].rules_json;
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment spec: ") + e.what());
  }
}

ExperimentSpec load_experiment(const std::filesystem::path& path) {
  const auto doc = parse_json_config(read_text(path), path.string());
  return parse_experiment(doc, path.parent_path());
}

// ---------------------------------------------------------------------------
// Seeding

std::uint64_t data_seed(std::uint64_t base_seed, std::string_view noise, std::size_t trial) {
  const std::uint64_t trial_seed = base_seed + trial;
  return derive_seed(trial_seed, "data|" + std::string(noise));
}

std::uint64_t cell_seed(std::uint64_t base_seed, std::string_view method, std::string_view noise, bool tapt,
                        std::size_t trial) {
  const std::uint64_t trial_seed = base_seed + trial;
  return derive_seed(trial_seed, "cell|" + std::string(method) + "|" + std::string(noise) + "|" + (tapt ? "tapt" : "orig"));
}

// ---------------------------------------------------------------------------
// Execution

namespace {

struct Splits {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset full;  // noisy training data before the validation carve-out
  TransitionMatrix transition;
};

struct LoadedData {
  LabeledDataset train;
  LabeledDataset test;
};

LoadedData load_data(const DatasetSource& d) {
  if (d.synthetic) {
    SynthSpec test_spec = *d.synthetic;
    test_spec.n_docs = d.n_test;
    test_spec.seed = derive_seed(d.synthetic->seed, "test");
    return {generate_synthetic(*d.synthetic), generate_synthetic(test_spec)};
  }
  LoadOptions opts;
  opts.min_freq = d.min_freq;
  opts.max_vocab = d.max_vocab;
  auto train = load_dataset(d.train_path, d.format, d.text_field, d.label_field, opts);
  LoadOptions test_opts;
  test_opts.vocab = train.vocab_ptr();
  test_opts.class_names = train.class_names();
  auto test = load_dataset(d.test_path, d.format, d.text_field, d.label_field, test_opts);
  return {std::move(train), std::move(test)};
}

Splits make_noisy_splits(const ExperimentSpec& spec, const NoiseSetting& setting, const LabeledDataset& clean,
                         std::size_t trial) {
  const auto seed = data_seed(spec.base_seed, setting.id(), trial);
  std::optional<LabeledDataset> noisy;
  std::optional<TransitionMatrix> transition;
  if (setting.source == NoiseSetting::Source::simulated) {
    transition = noise_matrix(setting.simulated, clean.num_classes());
    noisy = corrupt_labels(clean, *transition, derive_seed(seed, "corrupt"));
  } else {
    Fallback fallback = setting.fallback;
    if (!setting.fallback_class.empty()) {
      auto idx = clean.class_index(setting.fallback_class);
      if (!idx) throw ConfigError("weak noise: unknown fallback class '" + setting.fallback_class + "'");
      fallback = *idx;
    }
    const auto rules = parse_rules(setting.rules_json, clean.class_names());
    noisy = apply_rules(clean, rules, fallback);
    if (noisy->empty()) throw ConfigError("weak noise: no document matched any rule");
    // Ground truth channel of the weak labels.
    transition = empirical_matrix(*noisy);
  }
  auto [train, val] = split_dataset(*noisy, spec.validation_fraction, derive_seed(seed, "split"));
  return {std::move(train), std::move(val), std::move(*noisy), std::move(*transition)};
}

TrainConfig config_for(const ExperimentSpec& spec, MethodTag tag, const TransitionMatrix& transition) {
  json merged = spec.train;
  if (auto it = spec.method_overrides.find(std::string(method_tag_name(tag))); it != spec.method_overrides.end())
    merged.merge_patch(it->second);
  auto cfg = merged.get<TrainConfig>();
  cfg.use_validation = true;
  switch (tag) {
    case MethodTag::NV:
      cfg.method = Method::none;
      cfg.use_validation = false;
      break;
    case MethodTag::WN: cfg.method = Method::none; break;
    case MethodTag::CT:
      cfg.method = Method::co_teaching;
      if (!cfg.transition) cfg.transition = transition;
      break;
    case MethodTag::NMat:
      cfg.method = Method::noise_matrix;
      cfg.transition = transition;
      break;
    case MethodTag::NMwR: cfg.method = Method::noise_matrix_reg; break;
    case MethodTag::LS: cfg.method = Method::label_smoothing; break;
  }
  return cfg;
}

struct Cell {
  MethodTag method;
  std::size_t noise_index;
  bool tapt;
};

struct Job {
  std::size_t cell;
  std::size_t trial;
};

}  // namespace

Report run_experiment(const ExperimentSpec& spec, const RunOptions& options) {
  spec.validate();
  const auto data = load_data(spec.dataset);

  ClassifierConfig model_cfg = spec.model;
  model_cfg.num_classes = data.train.num_classes();
  model_cfg.vocab_size = data.train.vocab().size();
  model_cfg.validate();

  // Noisy data per (noise setting, trial), shared by every method.
  std::vector<std::vector<Splits>> splits(spec.noise.size());
  for (std::size_t n = 0; n < spec.noise.size(); ++n)
    for (std::size_t t = 0; t < spec.trials; ++t) splits[n].push_back(make_noisy_splits(spec, spec.noise[n], data.train, t));

  std::vector<bool> tapt_flags;
  if (spec.tapt != TaptMode::on) tapt_flags.push_back(false);
  if (spec.tapt != TaptMode::off) tapt_flags.push_back(true);

  std::vector<Cell> cells;
  for (bool tapt : tapt_flags)
    for (auto method : spec.methods)
      for (std::size_t n = 0; n < spec.noise.size(); ++n) cells.push_back({method, n, tapt});

  std::vector<Job> jobs;
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (std::size_t t = 0; t < spec.trials; ++t) jobs.push_back({c, t});

  std::vector<TrialTrace> traces(jobs.size());
  std::vector<std::string> failures(jobs.size());

  auto run_job = [&](std::size_t j) {
    const auto& job = jobs[j];
    const auto& cell = cells[job.cell];
    const auto method = std::string(method_tag_name(cell.method));
    const auto noise = spec.noise[cell.noise_index].id();
    const auto seed = cell_seed(spec.base_seed, method, noise, cell.tapt, job.trial);
    try {
      const auto& s = splits[cell.noise_index][job.trial];
      auto cfg = config_for(spec, cell.method, s.transition);
      cfg.seed = derive_seed(seed, "shuffle");
      auto mcfg = model_cfg;
      mcfg.init_seed = derive_seed(seed, "init");
      auto model = init_model(mcfg);
      std::optional<ClassifierModel> peer;
      if (cell.tapt) {
        auto tcfg = spec.tapt_config;
        tcfg.seed = derive_seed(seed, "tapt");
        model = tapt_pretrain(model, s.full, tcfg).model;
        if (cfg.method == Method::co_teaching) {
          auto pcfg = mcfg;
          pcfg.init_seed = peer_init_seed(mcfg.init_seed);
          peer = init_model(pcfg);
          peer->params()[ClassifierModel::kEmbedding] = model.params()[ClassifierModel::kEmbedding];
        }
      }
      auto outcome = train(s.train, s.val, data.test, model, cfg, std::move(peer));
      traces[j] = {method, noise, cell.tapt, job.trial, seed, std::move(outcome.result)};
    } catch (const std::exception& e) {
      failures[j] = "cell (method=" + method + ", noise=" + noise + ", tapt=" + (cell.tapt ? "on" : "off") +
                    ", seed=" + std::to_string(seed) + ", trial=" + std::to_string(job.trial) + "): " + e.what();
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, options.workers ? options.workers : spec.workers);
  if (workers == 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, jobs.size()); ++w)
      pool.emplace_back([&] {
        for (auto j = next.fetch_add(1); j < jobs.size(); j = next.fetch_add(1)) run_job(j);
      });
    for (auto& t : pool) t.join();
  }
  for (const auto& f : failures)
    if (!f.empty()) throw RuntimeFailure(f);

  if (options.on_trial)
    for (const auto& t : traces) options.on_trial(t);

  Report report;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    ReportRow row;
    row.method = std::string(method_tag_name(cells[c].method));
    row.noise = spec.noise[cells[c].noise_index].id();
    row.tapt = cells[c].tapt;
    row.trials = spec.trials;
    for (std::size_t t = 0; t < spec.trials; ++t)
      row.trial_accuracies.push_back(100.0 * traces[c * spec.trials + t].result.test_accuracy);
    std::tie(row.mean, row.std) = mean_std(row.trial_accuracies);
    report.rows.push_back(std::move(row));
  }

  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(spec.source.dump())));
  report.provenance.spec_hash = hash;
  report.provenance.base_seed = spec.base_seed;
  for (std::size_t t = 0; t < spec.trials; ++t) report.provenance.seeds.push_back(spec.base_seed + t);
  report.provenance.version = LNLAB_VERSION_STRING;
  report.provenance.timestamp = options.timestamp.empty() ? utc_timestamp() : options.timestamp;
  return report;
}

// ---------------------------------------------------------------------------
// Aggregation and formatting

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  if (values.size() == 1) return {mean, 0.0};
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size() - 1))};
}

std::string format_fixed2(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x < 0 ? "-inf" : "inf";
  const bool negative = std::signbit(x);
  char buf[400];
  const auto res = std::to_chars(buf, buf + sizeof buf, std::fabs(x), std::chars_format::fixed);
  std::string s(buf, res.ptr);
  const auto dot = s.find('.');
  std::string whole = dot == std::string::npos ? s : s.substr(0, dot);
  std::string frac = dot == std::string::npos ? "" : s.substr(dot + 1);
  frac.resize(std::max<std::size_t>(frac.size(), 3), '0');

  std::string digits = whole + frac.substr(0, 2);
  if (frac[2] >= '5') {
    std::size_t i = digits.size();
    while (i > 0) {
      --i;
      if (digits[i] == '9') {
        digits[i] = '0';
      } else {
        ++digits[i];
        break;
      }
      if (i == 0) digits.insert(digits.begin(), '1');
    }
  }
  std::string out = digits.substr(0, digits.size() - 2) + "." + digits.substr(digits.size() - 2);
  if (negative && out.find_first_not_of("0.") != std::string::npos) out.insert(out.begin(), '-');
  return out;
}

std::string format_row(double mean, double std) { return format_fixed2(mean) + "±" + format_fixed2(std); }

std::string format_delta(double delta) {
  const auto magnitude = format_fixed2(std::fabs(delta));
  if (magnitude == "0.00") return magnitude;
  return magnitude + (delta > 0 ? "↑" : "↓");
}

std::string format_delta_row(const DeltaRow& row) {
  return format_fixed2(row.original) + " | " + format_delta(row.delta());
}

std::vector<DeltaRow> delta_table(const Report& report) {
  std::vector<DeltaRow> out;
  std::vector<std::string> missing;
  std::vector<std::pair<std::string, std::string>> seen;
  for (const auto& r : report.rows) {
    std::pair<std::string, std::string> key{r.method, r.noise};
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    const auto* off = report.find(r.method, r.noise, false);
    const auto* on = report.find(r.method, r.noise, true);
    if (!off || !on) {
      missing.push_back(r.method + "/" + r.noise + (off ? " (+TAPT missing)" : " (original missing)"));
      continue;
    }
    out.push_back({r.method, r.noise, off->mean, on->mean});
  }
  if (!missing.empty()) {
    std::string msg = "delta table: unmatched cells:";
    for (const auto& m : missing) msg += " " + m + ";";
    throw ConfigError(msg);
  }
  return out;
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "csv") return ReportFormat::csv;
  if (name == "markdown" || name == "md") return ReportFormat::markdown;
  if (name == "json") return ReportFormat::json;
  throw UsageError("unknown report format '" + std::string(name) + "' (expected csv, markdown or json)");
}

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw FormatError("report csv: bad number '" + s + "'");
  return v;
}

constexpr std::string_view kCsvHeader = "method,noise,tapt,mean,std,trials,trial_accuracies";

std::vector<std::string> noise_columns(const Report& report) {
  std::vector<std::string> cols;
  for (const auto& r : report.rows)
    if (std::find(cols.begin(), cols.end(), r.noise) == cols.end()) cols.push_back(r.noise);
  return cols;
}

std::vector<std::string> method_rows(const Report& report) {
  std::vector<std::string> methods;
  for (const auto& r : report.rows)
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  return methods;
}

}  // namespace

std::string report_csv(const Report& report) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const auto& r : report.rows) {
    std::string accs;
    for (std::size_t i = 0; i < r.trial_accuracies.size(); ++i) accs += (i ? ";" : "") + shortest(r.trial_accuracies[i]);
    out << csv_field(r.method) << ',' << csv_field(r.noise) << ',' << (r.tapt ? "on" : "off") << ',' << shortest(r.mean)
        << ',' << shortest(r.std) << ',' << r.trials << ',' << accs << '\n';
  }
  return out.str();
}

std::vector<ReportRow> parse_report_csv(std::string_view text) {
  std::vector<ReportRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != kCsvHeader) throw FormatError("report csv: unexpected header");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw FormatError("report csv row " + std::to_string(lineno) + ": expected 7 columns");
    ReportRow r;
    r.method = f[0];
    r.noise = f[1];
    if (f[2] != "on" && f[2] != "off") throw FormatError("report csv row " + std::to_string(lineno) + ": bad tapt flag");
    r.tapt = f[2] == "on";
    r.mean = parse_double(f[3]);
    r.std = parse_double(f[4]);
    r.trials = static_cast<std::size_t>(parse_double(f[5]));
    std::stringstream accs(f[6]);
    std::string a;
    while (std::getline(accs, a, ';'))
      if (!a.empty()) r.trial_accuracies.push_back(parse_double(a));
    rows.push_back(std::move(r));
  }
  if (lineno == 0) throw FormatError("report csv: empty input");
  return rows;
}

std::string report_markdown(const Report& report) {
  std::ostringstream out;
  out << "# Benchmark report\n\n";
  out << "- spec hash: `" << report.provenance.spec_hash << "`\n";
  out << "- trial seeds:";
  for (std::size_t i = 0; i < report.provenance.seeds.size(); ++i) out << (i ? ", " : " ") << report.provenance.seeds[i];
  out << "\n- version: " << report.provenance.version << "\n";
  out << "- generated: " << report.provenance.timestamp << "\n";
  out << "\nAverage clean-test accuracy (%) and sample standard deviation.\n";

  const auto noises = noise_columns(report);
  const auto methods = method_rows(report);
  for (bool tapt : {false, true}) {
    const bool present = std::any_of(report.rows.begin(), report.rows.end(), [&](const auto& r) { return r.tapt == tapt; });
    if (!present) continue;
    out << "\n## " << (tapt ? "+TAPT" : "Original") << "\n\n| Method |";
    for (const auto& n : noises) out << ' ' << n << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < noises.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& m : methods) {
      out << "| " << (tapt ? "TAPT+" : "") << m << " |";
      for (const auto& n : noises) {
        const auto* r = report.find(m, n, tapt);
        out << ' ' << (r ? format_row(r->mean, r->std) : std::string("-")) << " |";
      }
      out << '\n';
    }
  }

  const bool both = std::any_of(report.rows.begin(), report.rows.end(), [](const auto& r) { return r.tapt; }) &&
                    std::any_of(report.rows.begin(), report.rows.end(), [](const auto& r) { return !r.tapt; });
  if (both) {
    const auto deltas = delta_table(report);
    for (const auto& n : noises) {
      out << "\n## TAPT difference, " << n << "\n\n| Methods | Original | +TAPT |\n|---|---|---|\n";
      for (const auto& d : deltas)
        if (d.noise == n) out << "| " << d.method << " | " << format_delta_row(d) << " |\n";
    }
  }
  return out.str();
}

std::string report_json(const Report& report) {
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"method", r.method},
                    {"noise", r.noise},
                    {"tapt", r.tapt},
                    {"mean", r.mean},
                    {"std", r.std},
                    {"trials", r.trials},
                    {"trial_accuracies", r.trial_accuracies}});
  json doc = {{"rows", rows},
              {"provenance",
               {{"spec_hash", report.provenance.spec_hash},
                {"base_seed", report.provenance.base_seed},
                {"seeds", report.provenance.seeds},
                {"version", report.provenance.version},
                {"timestamp", report.provenance.timestamp}}}};
  return doc.dump(2) + "\n";
}

Report parse_report_json(std::string_view text) {
  try {
    const auto doc = json::parse(text);
    Report report;
    for (const auto& r : doc.at("rows")) {
      ReportRow row;
      row.method = r.at("method").get<std::string>();
      row.noise = r.at("noise").get<std::string>();
      row.tapt = r.at("tapt").get<bool>();
      row.mean = r.at("mean").get<double>();
      row.std = r.at("std").get<double>();
      row.trials = r.at("trials").get<std::size_t>();
      row.trial_accuracies = r.at("trial_accuracies").get<std::vector<double>>();
      report.rows.push_back(std::move(row));
    }
    const auto& p = doc.at("provenance");
    report.provenance.spec_hash = p.at("spec_hash").get<std::string>();
    report.provenance.base_seed = p.at("base_seed").get<std::uint64_t>();
    report.provenance.seeds = p.at("seeds").get<std::vector<std::uint64_t>>();
    report.provenance.version = p.at("version").get<std::string>();
    report.provenance.timestamp = p.at("timestamp").get<std::string>();
    return report;
  } catch (const json::exception& e) {
    throw FormatError(std::string("report json: ") + e.what());
  }
}

Report read_report(const std::filesystem::path& path) {
  const auto text = read_text(path);
  if (path.extension() == ".csv") return Report{parse_report_csv(text), {}};
  return parse_report_json(text);
}

void emit_report(const Report& report, ReportFormat format, const std::filesystem::path& path) {
  std::string text;
  switch (format) {
    case ReportFormat::csv: text = report_csv(report); break;
    case ReportFormat::markdown: text = report_markdown(report); break;
    case ReportFormat::json: text = report_json(report); break;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write report to '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing report to '" + path.string() + "'");
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace lnlab
