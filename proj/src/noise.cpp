#include "lnlab/noise.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lnlab/error.hpp"
#include "lnlab/rng.hpp"

namespace lnlab {

using nlohmann::json;

TransitionMatrix::TransitionMatrix(std::size_t k, std::vector<double> row_major)
    : k_(k), entries_(std::move(row_major)) {
  if (k_ < 2) throw DomainError("transition matrix needs k >= 2");
  if (entries_.size() != k_ * k_)
    throw DomainError("transition matrix: expected " + std::to_string(k_ * k_) + " entries, got " +
                      std::to_string(entries_.size()));
  for (std::size_t i = 0; i < k_; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < k_; ++j) {
      const double v = entries_[i * k_ + j];
      if (!(v >= 0.0 && v <= 1.0))
        throw DomainError("transition matrix entry (" + std::to_string(i) + "," + std::to_string(j) +
                          ") outside [0,1]");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRowTolerance)
      throw DomainError("transition matrix row " + std::to_string(i) + " sums to " + std::to_string(sum));
  }
}

TransitionMatrix TransitionMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const auto k = rows.size();
  std::vector<double> flat;
  flat.reserve(k * k);
  for (const auto& r : rows) {
    if (r.size() != k) throw DomainError("transition matrix must be square");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return TransitionMatrix(k, std::move(flat));
}

TransitionMatrix TransitionMatrix::identity(std::size_t k) {
  std::vector<double> e(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) e[i * k + i] = 1.0;
  return TransitionMatrix(k, std::move(e));
}

std::vector<std::vector<double>> TransitionMatrix::rows() const {
  std::vector<std::vector<double>> out(k_);
  for (std::size_t i = 0; i < k_; ++i) out[i].assign(row(i).begin(), row(i).end());
  return out;
}

double TransitionMatrix::mean_flip_rate() const {
  double total = 0.0;
  for (std::size_t i = 0; i < k_; ++i) total += 1.0 - (*this)(i, i);
  return total / static_cast<double>(k_);
}

std::string_view noise_kind_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::none: return "none";
    case NoiseKind::uniform: return "uniform";
    case NoiseKind::single_flip: return "single_flip";
  }
  return "none";
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "none" || name == "clean") return NoiseKind::none;
  if (name == "uniform") return NoiseKind::uniform;
  if (name == "single_flip" || name == "single-flip") return NoiseKind::single_flip;
  throw UsageError("unknown noise kind '" + std::string(name) + "'");
}

std::string NoiseSpec::id() const {
  if (kind == NoiseKind::none) return "clean";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, level);
  std::string id = std::string(noise_kind_name(kind)) + "_" + std::string(buf, res.ptr);
  if (kind == NoiseKind::single_flip && !flip_map.empty()) {
    id += "_map";
    for (auto c : flip_map) id += "-" + std::to_string(c);
  }
  return id;
}

namespace {

void check_level(double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw DomainError("noise level must lie in [0,1), got " + std::to_string(eps));
}

}  // namespace

TransitionMatrix uniform_matrix(std::size_t k, double eps) {
  if (k < 2) throw DomainError("uniform noise needs k >= 2");
  check_level(eps);
  const double off = eps / static_cast<double>(k - 1);
  std::vector<double> e(k * k, off);
  for (std::size_t i = 0; i < k; ++i) e[i * k + i] = 1.0 - eps;
  return TransitionMatrix(k, std::move(e));
}

std::vector<ClassId> cyclic_flip_map(std::size_t k) {
  std::vector<ClassId> map(k);
  for (std::size_t i = 0; i < k; ++i) map[i] = static_cast<ClassId>((i + 1) % k);
  return map;
}

TransitionMatrix single_flip_matrix(std::size_t k, double eps, std::span<const ClassId> flip_map) {
  if (k < 2) throw DomainError("single-flip noise needs k >= 2");
  check_level(eps);
  std::vector<ClassId> map = flip_map.empty() ? cyclic_flip_map(k) : std::vector<ClassId>(flip_map.begin(), flip_map.end());
  if (map.size() != k) throw ConfigError("flip map has " + std::to_string(map.size()) + " entries, expected " + std::to_string(k));
  std::vector<double> e(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    if (map[i] >= k) throw ConfigError("flip map target " + std::to_string(map[i]) + " out of range");
    if (map[i] == i) throw ConfigError("flip map has fixed point at class " + std::to_string(i));
    e[i * k + i] = 1.0 - eps;
    e[i * k + map[i]] = eps;
  }
  return TransitionMatrix(k, std::move(e));
}

TransitionMatrix noise_matrix(const NoiseSpec& spec, std::size_t k) {
  switch (spec.kind) {
    case NoiseKind::none: return TransitionMatrix::identity(k);
    case NoiseKind::uniform: return uniform_matrix(k, spec.level);
    case NoiseKind::single_flip: return single_flip_matrix(k, spec.level, spec.flip_map);
  }
  return TransitionMatrix::identity(k);
}

LabeledDataset corrupt_labels(const LabeledDataset& dataset, const TransitionMatrix& matrix, std::uint64_t seed) {
  const auto k = dataset.num_classes();
  if (matrix.k() != k)
    throw ConfigError("transition matrix is " + std::to_string(matrix.k()) + "x" + std::to_string(matrix.k()) +
                      " but dataset has k=" + std::to_string(k));
  Rng rng(seed);
  std::vector<Example> examples = dataset.examples();
  for (auto& ex : examples) {
    const auto row = matrix.row(ex.gold_label);
    const double u = rng.uniform();
    double cumulative = 0.0;
    ClassId pick = static_cast<ClassId>(k - 1);
    for (std::size_t j = 0; j < k; ++j) {
      cumulative += row[j];
      if (u < cumulative) {
        pick = static_cast<ClassId>(j);
        break;
      }
    }
    // Rounding can leave cumulative just under 1; never land on a zero entry.
    while (row[pick] == 0.0 && pick > 0) --pick;
    ex.noisy_label = pick;
  }
  return dataset.with_examples(std::move(examples));
}

// ---------------------------------------------------------------------------
// Weak supervision

void validate_rules(std::span<const WeakRule> rules) {
  std::set<int> priorities;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    if (rules[i].keywords.empty()) throw ConfigError("rule " + std::to_string(i) + " has no keywords");
    if (!priorities.insert(rules[i].priority).second)
      throw ConfigError("duplicate rule priority " + std::to_string(rules[i].priority));
  }
}

std::vector<WeakRule> parse_rules(std::string_view json_text, std::span<const std::string> class_names) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("rule file: invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw FormatError("rule file must be a JSON array");
  std::vector<WeakRule> rules;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& r = doc[i];
    try {
      const auto name = r.at("class").get<std::string>();
      auto it = std::find(class_names.begin(), class_names.end(), name);
      if (it == class_names.end()) throw ConfigError("rule " + std::to_string(i) + ": unknown class '" + name + "'");
      rules.push_back({static_cast<ClassId>(it - class_names.begin()), r.at("keywords").get<std::vector<std::string>>(),
                       r.at("priority").get<int>()});
    } catch (const json::exception& e) {
      throw FormatError("rule " + std::to_string(i) + ": " + e.what());
    }
  }
  validate_rules(rules);
  return rules;
}

std::vector<WeakRule> load_rules(const std::filesystem::path& path, std::span<const std::string> class_names) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open rule file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_rules(ss.str(), class_names);
}

std::vector<std::optional<std::size_t>> match_rules(const LabeledDataset& dataset, std::span<const WeakRule> rules) {
  validate_rules(rules);
  const auto& vocab = dataset.vocab();

  // Rules in ascending priority; keywords as token-id runs. Keywords with an
  // out-of-vocabulary token can never match.
  std::vector<std::size_t> order(rules.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return rules[a].priority < rules[b].priority; });

  std::vector<std::vector<std::vector<TokenId>>> patterns(rules.size());
  for (std::size_t r = 0; r < rules.size(); ++r) {
    for (const auto& kw : rules[r].keywords) {
      std::vector<TokenId> ids;
      bool known = true;
      for (const auto& tok : tokenize(kw)) {
        auto id = vocab.find(tok);
        if (!id || *id < Vocabulary::kReserved) {
          known = false;
          break;
        }
        ids.push_back(*id);
      }
      if (known && !ids.empty()) patterns[r].push_back(std::move(ids));
    }
  }

  std::vector<std::optional<std::size_t>> winners(dataset.size());
  for (std::size_t e = 0; e < dataset.size(); ++e) {
    const auto& tokens = dataset[e].tokens;
    for (auto r : order) {
      const bool hit = std::any_of(patterns[r].begin(), patterns[r].end(), [&](const std::vector<TokenId>& p) {
        return std::search(tokens.begin(), tokens.end(), p.begin(), p.end()) != tokens.end();
      });
      if (hit) {
        winners[e] = r;
        break;
      }
    }
  }
  return winners;
}

LabeledDataset apply_rules(const LabeledDataset& dataset, std::span<const WeakRule> rules, Fallback fallback) {
  if (const auto* c = std::get_if<ClassId>(&fallback); c && *c >= dataset.num_classes())
    throw ConfigError("fallback class " + std::to_string(*c) + " >= k=" + std::to_string(dataset.num_classes()));
  for (const auto& r : rules)
    if (r.target_class >= dataset.num_classes())
      throw ConfigError("rule target class " + std::to_string(r.target_class) + " out of range");

  const auto winners = match_rules(dataset, rules);
  std::vector<Example> out;
  out.reserve(dataset.size());
  for (std::size_t e = 0; e < dataset.size(); ++e) {
    Example ex = dataset[e];
    if (winners[e]) {
      ex.noisy_label = rules[*winners[e]].target_class;
    } else if (const auto* c = std::get_if<ClassId>(&fallback)) {
      ex.noisy_label = *c;
    } else {
      continue;
    }
    out.push_back(std::move(ex));
  }
  return dataset.with_examples(std::move(out));
}

// ---------------------------------------------------------------------------

TransitionMatrix empirical_matrix(std::span<const ClassId> gold, std::span<const ClassId> noisy, std::size_t k) {
  if (gold.size() != noisy.size())
    throw ConfigError("empirical_matrix: gold has " + std::to_string(gold.size()) + " labels, noisy has " +
                      std::to_string(noisy.size()));
  std::vector<std::size_t> counts(k * k, 0);
  std::vector<std::size_t> totals(k, 0);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] >= k || noisy[i] >= k) throw ConfigError("empirical_matrix: label out of range");
    ++counts[gold[i] * k + noisy[i]];
    ++totals[gold[i]];
  }
  std::vector<double> e(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    if (totals[i] == 0) throw ConfigError("empirical_matrix: class " + std::to_string(i) + " never appears in gold labels");
    for (std::size_t j = 0; j < k; ++j)
      e[i * k + j] = static_cast<double>(counts[i * k + j]) / static_cast<double>(totals[i]);
  }
  return TransitionMatrix(k, std::move(e));
}

TransitionMatrix empirical_matrix(const LabeledDataset& dataset) {
  const auto gold = dataset.gold_labels();
  const auto noisy = dataset.noisy_labels();
  return empirical_matrix(gold, noisy, dataset.num_classes());
}

FlipStats flip_stats(const LabeledDataset& dataset, std::span<const bool> mask) {
  if (!mask.empty() && mask.size() != dataset.size()) throw ConfigError("flip_stats: mask length mismatch");
  FlipStats stats;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const auto& ex = dataset[i];
    if (!ex.noisy_label) throw ConfigError("flip_stats: example " + std::to_string(i) + " has no noisy label");
    ++stats.count;
    if (*ex.noisy_label != ex.gold_label) ++stats.flipped;
  }
  return stats;
}

}  // namespace lnlab
