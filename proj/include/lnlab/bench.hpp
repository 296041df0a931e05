#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lnlab/corpus.hpp"
#include "lnlab/model.hpp"
#include "lnlab/noise.hpp"
#include "lnlab/tapt.hpp"
#include "lnlab/train.hpp"

namespace lnlab {

/// Table legend: No Validation, Without noise-handling (early stopped),
/// Co-Teaching, Noise Matrix, Noise Matrix with Regularization, Label Smoothing.
enum class MethodTag { NV, WN, CT, NMat, NMwR, LS };

std::string_view method_tag_name(MethodTag tag);
MethodTag parse_method_tag(std::string_view name);

struct NoiseSetting {
  enum class Source { simulated, weak };

  Source source = Source::simulated;
  NoiseSpec simulated;
  /// Weak supervision: JSON rule array (text) and unmatched-document policy.
  std::string rules_json;
  Fallback fallback = ClassId{0};
  /// Fallback given by class name; resolved once the data is loaded.
  std::string fallback_class;
  /// Overrides the derived identifier.
  std::string name;

  std::string id() const;
};

struct DatasetSource {
  std::optional<SynthSpec> synthetic;
  /// Synthetic test split size; generated from the same model with a
  /// derived seed.
  std::size_t n_test = 1000;

  std::filesystem::path train_path;
  std::filesystem::path test_path;
  FileFormat format = FileFormat::jsonl;
  std::string text_field = "text";
  std::string label_field = "label";
  std::size_t min_freq = 1;
  std::size_t max_vocab = SIZE_MAX;
};

enum class TaptMode { off, on, both };

struct ExperimentSpec {
  DatasetSource dataset;
  std::vector<NoiseSetting> noise;
  std::vector<MethodTag> methods;
  TaptMode tapt = TaptMode::off;
  std::size_t trials = 5;
  std::uint64_t base_seed = 0;
  double validation_fraction = 0.1;
  /// num_classes and vocab_size are taken from the data.
  ClassifierConfig model;
  /// Base training config (JSON object) and per-method JSON merge patches.
  nlohmann::json train = nlohmann::json::object();
  std::map<std::string, nlohmann::json> method_overrides;
  TaptConfig tapt_config;
  std::size_t workers = 1;
  /// Canonical JSON the spec was parsed from; hashed into the provenance.
  nlohmann::json source = nlohmann::json::object();

  void validate() const;
};

/// Relative paths (dataset files, rule files) resolve against `base_dir`.
ExperimentSpec parse_experiment(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentSpec load_experiment(const std::filesystem::path& path);

struct ReportRow {
  std::string method;
  std::string noise;
  bool tapt = false;
  double mean = 0.0;  // accuracy, percent
  double std = 0.0;   // sample standard deviation, percent
  std::size_t trials = 0;
  std::vector<double> trial_accuracies;  // percent, in trial order

  bool operator==(const ReportRow&) const = default;
};

struct Provenance {
  std::string spec_hash;
  std::uint64_t base_seed = 0;
  std::vector<std::uint64_t> seeds;  // trial seeds base_seed + i
  std::string version;
  std::string timestamp;
};

struct Report {
  std::vector<ReportRow> rows;
  Provenance provenance;

  const ReportRow* find(std::string_view method, std::string_view noise, bool tapt) const;
};

struct TrialTrace {
  std::string method;
  std::string noise;
  bool tapt = false;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  TrainResult result;
};

struct RunOptions {
  /// Overrides spec.workers when non-zero.
  std::size_t workers = 0;
  /// Called once per finished trial, serially, in (cell, trial) order.
  std::function<void(const TrialTrace&)> on_trial;
  /// Injected into the provenance; empty means the current UTC time.
  std::string timestamp;
};

/// Seed of one pipeline stream for a cell: derived from the trial seed
/// (base_seed + trial) and the cell coordinates, never from a shared stream.
std::uint64_t cell_seed(std::uint64_t base_seed, std::string_view method, std::string_view noise, bool tapt,
                        std::size_t trial);
/// Seed of the label-noise and validation-split stream; shared by every
/// method and TAPT setting of one (noise setting, trial).
std::uint64_t data_seed(std::uint64_t base_seed, std::string_view noise, std::size_t trial);

Report run_experiment(const ExperimentSpec& spec, const RunOptions& options = {});

/// Mean and sample (n-1) standard deviation; std is 0 for a single value.
std::pair<double, double> mean_std(std::span<const double> values);

/// Two decimals, half-up on the shortest decimal form of x.
std::string format_fixed2(double x);
/// "MM.MM±S.SS"
std::string format_row(double mean, double std);

struct DeltaRow {
  std::string method;
  std::string noise;
  double original = 0.0;
  double with_tapt = 0.0;
  double delta() const { return with_tapt - original; }
};

/// Matched TAPT off/on pairs for every (method, noise) present. Throws
/// ConfigError listing any cell lacking its partner.
std::vector<DeltaRow> delta_table(const Report& report);
/// "2.13↑", "1.00↓" or "0.00".
std::string format_delta(double delta);
/// "85.49 | 2.13↑"
std::string format_delta_row(const DeltaRow& row);

enum class ReportFormat { csv, markdown, json };
ReportFormat parse_report_format(std::string_view name);

std::string report_csv(const Report& report);
std::string report_markdown(const Report& report);
std::string report_json(const Report& report);
void emit_report(const Report& report, ReportFormat format, const std::filesystem::path& path);

std::vector<ReportRow> parse_report_csv(std::string_view text);
Report parse_report_json(std::string_view text);
Report read_report(const std::filesystem::path& path);

std::string utc_timestamp();

}  // namespace lnlab
