#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace lnlab {

using TokenId = std::uint32_t;
using ClassId = std::uint32_t;

struct Example {
  std::vector<TokenId> tokens;
  ClassId gold_label = 0;
  std::optional<ClassId> noisy_label;

  bool operator==(const Example&) const = default;
};

/// Lowercases ASCII letters and splits on every non-alphanumeric ASCII byte.
/// Bytes >= 0x80 are kept inside words so UTF-8 text survives intact.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kMask = 2;
  static constexpr std::size_t kReserved = 3;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kMaskToken = "<mask>";

  /// Only the reserved entries.
  Vocabulary();

  /// Tokens in id order; the first three must be the reserved tokens.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  std::optional<TokenId> find(std::string_view token) const;
  /// Id of `token`, or kUnk.
  TokenId id_of(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const TokenId> ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept {
      return std::hash<std::string_view>{}(s);
    }
  };

  void append(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId, StringHash, std::equal_to<>> index_;
};

/// Frequency-ranked vocabulary with ties broken lexicographically.
/// Requires min_freq >= 1 and max_size > 3.
Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus, std::size_t min_freq = 1,
                       std::size_t max_size = SIZE_MAX);

class LabeledDataset {
 public:
  LabeledDataset(std::vector<Example> examples, std::vector<std::string> class_names,
                 std::shared_ptr<const Vocabulary> vocab);

  const std::vector<Example>& examples() const noexcept { return examples_; }
  const Example& operator[](std::size_t i) const { return examples_[i]; }
  std::size_t size() const noexcept { return examples_.size(); }
  bool empty() const noexcept { return examples_.empty(); }
  std::size_t num_classes() const noexcept { return class_names_.size(); }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  const Vocabulary& vocab() const noexcept { return *vocab_; }
  const std::shared_ptr<const Vocabulary>& vocab_ptr() const noexcept { return vocab_; }

  std::optional<ClassId> class_index(std::string_view name) const;

  /// True when every example carries a noisy label (the dataset is a D-hat).
  bool all_noisy() const;
  /// True when no example carries a noisy label.
  bool all_clean() const;

  /// Same class names and vocabulary, different examples.
  LabeledDataset with_examples(std::vector<Example> examples) const;

  std::vector<ClassId> gold_labels() const;
  /// Throws ConfigError when any example lacks a noisy label.
  std::vector<ClassId> noisy_labels() const;

  bool operator==(const LabeledDataset& other) const;

 private:
  std::vector<Example> examples_;
  std::vector<std::string> class_names_;
  std::shared_ptr<const Vocabulary> vocab_;
};

enum class FileFormat { csv, tsv, jsonl };

/// Parses "csv", "tsv" or "jsonl"; anything else is a UsageError.
FileFormat parse_file_format(std::string_view name);

struct LoadOptions {
  /// Encode against this vocabulary instead of building one from the file.
  std::shared_ptr<const Vocabulary> vocab;
  /// Map labels through these names instead of the file's sorted label set.
  std::optional<std::vector<std::string>> class_names;
  std::size_t min_freq = 1;
  std::size_t max_vocab = SIZE_MAX;
};

/// Reads raw text rows. Class names are the sorted distinct labels.
LabeledDataset load_dataset(const std::filesystem::path& path, FileFormat format,
                            std::string_view text_field, std::string_view label_field,
                            const LoadOptions& options = {});

/// Encoded form: one JSON object per line with tokens, gold_label and a
/// nullable noisy_label, plus a `<path>.meta.json` sidecar holding class
/// names and the vocabulary in id order.
void write_jsonl(const LabeledDataset& dataset, const std::filesystem::path& path);
LabeledDataset read_jsonl(const std::filesystem::path& path);

std::filesystem::path meta_path(const std::filesystem::path& path);

/// Seeded random split; the second part holds round(fraction * n) examples.
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& dataset, double fraction,
                                                        std::uint64_t seed);

struct SynthSpec {
  std::size_t num_classes = 4;
  /// Content tokens, excluding the three reserved ids.
  std::size_t vocab_size = 1000;
  std::size_t keywords_per_class = 20;
  std::size_t doc_length = 20;
  double signal_rate = 0.5;
  std::size_t n_docs = 1000;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SynthSpec&) const = default;
};

/// Class-keyword mixture: each token is, independently, one of the gold
/// class's keywords with probability signal_rate, otherwise a background
/// token. Keyword sets are disjoint. Labels are balanced and shuffled.
LabeledDataset generate_synthetic(const SynthSpec& spec);

/// Class owning `token` as a keyword in the synthetic vocabulary, if any.
std::optional<ClassId> synthetic_keyword_class(const SynthSpec& spec, TokenId token);

/// Majority vote over signature keywords; ties and keyword-free documents
/// go to the smallest class index.
ClassId keyword_lookup_predict(const SynthSpec& spec, std::span<const TokenId> tokens);

/// Closed-form Bayes accuracy of the generative model. A keyword identifies
/// its class, so only keyword-free documents are guessed:
/// 1 - (1 - signal_rate)^doc_length * (1 - 1/k).
double synthetic_bayes_accuracy(const SynthSpec& spec);

}  // namespace lnlab
