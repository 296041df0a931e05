#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lnlab/corpus.hpp"

namespace lnlab {

/// Row-stochastic k x k matrix, entry (i, j) = p(noisy = j | gold = i).
class TransitionMatrix {
 public:
  static constexpr double kRowTolerance = 1e-9;

  /// Validates entries in [0,1] and unit row sums.
  TransitionMatrix(std::size_t k, std::vector<double> row_major);
  static TransitionMatrix from_rows(const std::vector<std::vector<double>>& rows);
  static TransitionMatrix identity(std::size_t k);

  std::size_t k() const noexcept { return k_; }
  double operator()(std::size_t i, std::size_t j) const { return entries_[i * k_ + j]; }
  std::span<const double> row(std::size_t i) const { return {entries_.data() + i * k_, k_}; }
  const std::vector<double>& entries() const noexcept { return entries_; }
  std::vector<std::vector<double>> rows() const;

  /// Mean off-diagonal mass, i.e. the flip rate under a uniform class prior.
  double mean_flip_rate() const;

  bool operator==(const TransitionMatrix&) const = default;

 private:
  std::size_t k_;
  std::vector<double> entries_;
};

enum class NoiseKind { none, uniform, single_flip };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::none;
  double level = 0.0;
  /// single_flip target per class; empty means the cyclic shift i -> i+1 mod k.
  std::vector<ClassId> flip_map;

  /// Stable identifier such as "uniform_0.4" used in reports and seeding.
  std::string id() const;
  bool operator==(const NoiseSpec&) const = default;
};

std::string_view noise_kind_name(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view name);

/// Diagonal 1 - eps, off-diagonal eps / (k - 1).
TransitionMatrix uniform_matrix(std::size_t k, double eps);
/// Row i puts 1 - eps on i and eps on flip_map[i].
TransitionMatrix single_flip_matrix(std::size_t k, double eps, std::span<const ClassId> flip_map = {});
std::vector<ClassId> cyclic_flip_map(std::size_t k);
TransitionMatrix noise_matrix(const NoiseSpec& spec, std::size_t k);

/// Samples every noisy label independently from the row of its gold label.
LabeledDataset corrupt_labels(const LabeledDataset& dataset, const TransitionMatrix& matrix, std::uint64_t seed);

struct WeakRule {
  ClassId target_class = 0;
  std::vector<std::string> keywords;
  int priority = 0;

  bool operator==(const WeakRule&) const = default;
};

struct DropUnmatched {
  bool operator==(const DropUnmatched&) const = default;
};
using Fallback = std::variant<ClassId, DropUnmatched>;

/// Checks non-empty keyword lists and unique priorities.
void validate_rules(std::span<const WeakRule> rules);

/// Parses a JSON array of {class, keywords, priority}; class names resolve
/// against `class_names`.
std::vector<WeakRule> parse_rules(std::string_view json_text, std::span<const std::string> class_names);
std::vector<WeakRule> load_rules(const std::filesystem::path& path, std::span<const std::string> class_names);

/// For each example, the index (into `rules`) of the winning rule: the
/// lowest priority number among rules with a keyword match. A keyword is
/// tokenized with `tokenize` and matches as a contiguous token run.
std::vector<std::optional<std::size_t>> match_rules(const LabeledDataset& dataset, std::span<const WeakRule> rules);

LabeledDataset apply_rules(const LabeledDataset& dataset, std::span<const WeakRule> rules, Fallback fallback);

/// Row-normalized co-occurrence counts of (gold, noisy).
TransitionMatrix empirical_matrix(std::span<const ClassId> gold, std::span<const ClassId> noisy, std::size_t k);
TransitionMatrix empirical_matrix(const LabeledDataset& dataset);

struct FlipStats {
  std::size_t count = 0;
  std::size_t flipped = 0;
  double rate() const { return count == 0 ? 0.0 : static_cast<double>(flipped) / static_cast<double>(count); }
};

/// Flip statistics over the examples selected by `mask` (all when empty).
FlipStats flip_stats(const LabeledDataset& dataset, std::span<const bool> mask = {});

}  // namespace lnlab
