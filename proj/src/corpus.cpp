#include "lnlab/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lnlab/error.hpp"
#include "lnlab/rng.hpp"

namespace lnlab {

using nlohmann::json;

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  append(std::string(kPadToken));
  append(std::string(kUnkToken));
  append(std::string(kMaskToken));
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  if (tokens.size() < kReserved || tokens[kPad] != kPadToken || tokens[kUnk] != kUnkToken ||
      tokens[kMask] != kMaskToken) {
    throw FormatError("vocabulary must start with " + std::string(kPadToken) + ", " +
                      std::string(kUnkToken) + ", " + std::string(kMaskToken));
  }
  tokens_.reserve(tokens.size());
  for (auto& t : tokens) append(std::move(t));
}

void Vocabulary::append(std::string token) {
  const auto id = static_cast<TokenId>(tokens_.size());
  auto [it, inserted] = index_.emplace(token, id);
  if (!inserted) throw FormatError("duplicate vocabulary entry '" + token + "'");
  tokens_.push_back(std::move(token));
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id_of(std::string_view token) const { return find(token).value_or(kUnk); }

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id_of(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(token(id));
  return out;
}

Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus, std::size_t min_freq,
                       std::size_t max_size) {
  if (min_freq < 1) throw DomainError("build_vocab: min_freq must be >= 1");
  if (max_size <= Vocabulary::kReserved) throw DomainError("build_vocab: max_size must exceed 3");

  std::map<std::string, std::size_t> counts;
  for (const auto& doc : corpus)
    for (const auto& t : doc) ++counts[t];

  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [token, n] : counts) {
    if (n < min_freq) continue;
    if (token == Vocabulary::kPadToken || token == Vocabulary::kUnkToken ||
        token == Vocabulary::kMaskToken)
      continue;
    ranked.emplace_back(token, n);
  }
  // std::map iteration is already lexicographic; stable sort keeps that order on ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens{std::string(Vocabulary::kPadToken), std::string(Vocabulary::kUnkToken),
                                  std::string(Vocabulary::kMaskToken)};
  for (auto& [token, n] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(token);
  }
  return Vocabulary(std::move(tokens));
}

// ---------------------------------------------------------------------------
// LabeledDataset

LabeledDataset::LabeledDataset(std::vector<Example> examples, std::vector<std::string> class_names,
                               std::shared_ptr<const Vocabulary> vocab)
    : examples_(std::move(examples)), class_names_(std::move(class_names)), vocab_(std::move(vocab)) {
  if (!vocab_) throw ConfigError("dataset requires a vocabulary");
  if (class_names_.size() < 2) throw ConfigError("dataset requires at least 2 classes");
  const auto k = class_names_.size();
  const auto v = vocab_->size();
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    const auto& ex = examples_[i];
    if (ex.gold_label >= k || (ex.noisy_label && *ex.noisy_label >= k))
      throw FormatError("example " + std::to_string(i) + ": label out of range for k=" + std::to_string(k));
    for (TokenId t : ex.tokens)
      if (t >= v)
        throw FormatError("example " + std::to_string(i) + ": token id " + std::to_string(t) +
                          " exceeds vocabulary size " + std::to_string(v));
  }
}

std::optional<ClassId> LabeledDataset::class_index(std::string_view name) const {
  for (std::size_t i = 0; i < class_names_.size(); ++i)
    if (class_names_[i] == name) return static_cast<ClassId>(i);
  return std::nullopt;
}

bool LabeledDataset::all_noisy() const {
  return std::all_of(examples_.begin(), examples_.end(), [](const Example& e) { return e.noisy_label.has_value(); });
}

bool LabeledDataset::all_clean() const {
  return std::none_of(examples_.begin(), examples_.end(), [](const Example& e) { return e.noisy_label.has_value(); });
}

LabeledDataset LabeledDataset::with_examples(std::vector<Example> examples) const {
  return LabeledDataset(std::move(examples), class_names_, vocab_);
}

std::vector<ClassId> LabeledDataset::gold_labels() const {
  std::vector<ClassId> out;
  out.reserve(examples_.size());
  for (const auto& e : examples_) out.push_back(e.gold_label);
  return out;
}

std::vector<ClassId> LabeledDataset::noisy_labels() const {
  std::vector<ClassId> out;
  out.reserve(examples_.size());
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    if (!examples_[i].noisy_label) throw ConfigError("example " + std::to_string(i) + " has no noisy label");
    out.push_back(*examples_[i].noisy_label);
  }
  return out;
}

bool LabeledDataset::operator==(const LabeledDataset& other) const {
  return examples_ == other.examples_ && class_names_ == other.class_names_ && *vocab_ == *other.vocab_;
}

// ---------------------------------------------------------------------------
// File ingestion

FileFormat parse_file_format(std::string_view name) {
  if (name == "csv") return FileFormat::csv;
  if (name == "tsv") return FileFormat::tsv;
  if (name == "jsonl") return FileFormat::jsonl;
  throw UsageError("unknown dataset format '" + std::string(name) + "' (expected csv, tsv or jsonl)");
}

namespace {

struct RawRow {
  std::size_t line = 0;
  std::string text;
  std::string label;
};

// RFC 4180 style records: quoted fields may contain delimiters, doubled
// quotes and newlines.
std::vector<std::vector<std::string>> parse_delimited(const std::string& content, char delim,
                                                      std::vector<std::size_t>& record_lines) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t record_line = 1;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = record.size() == 1 && record[0].empty();
    if (!blank) {
      records.push_back(std::move(record));
      record_lines.push_back(record_line);
    }
    record.clear();
  };

  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == delim) {
      end_field();
    } else if (c == '\n') {
      end_record();
      ++line;
      record_line = line;
    } else if (c == '\r') {
      // tolerate CRLF
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw FormatError("unterminated quoted field starting near line " + std::to_string(record_line));
  if (!field.empty() || !record.empty()) end_record();
  return records;
}

std::vector<RawRow> read_delimited(const std::string& content, char delim, std::string_view text_field,
                                   std::string_view label_field) {
  std::vector<std::size_t> lines;
  auto records = parse_delimited(content, delim, lines);
  if (records.empty()) return {};
  const auto& header = records.front();
  auto column = [&](std::string_view name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError("header row: missing field '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto text_col = column(text_field);
  const auto label_col = column(label_field);

  std::vector<RawRow> rows;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (text_col >= rec.size() || label_col >= rec.size()) {
      const auto& missing = text_col >= rec.size() ? text_field : label_field;
      throw FormatError("row " + std::to_string(r) + " (line " + std::to_string(lines[r]) + "): missing field '" +
                        std::string(missing) + "'");
    }
    rows.push_back({lines[r], rec[text_col], rec[label_col]});
  }
  return rows;
}

std::vector<RawRow> read_jsonl_rows(const std::string& content, std::string_view text_field,
                                    std::string_view label_field) {
  std::vector<RawRow> rows;
  std::istringstream in(content);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError("row " + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    const std::string text_key(text_field);
    const std::string label_key(label_field);
    if (!obj.is_object() || !obj.contains(text_key) || !obj.contains(label_key)) {
      const auto& missing = obj.is_object() && obj.contains(text_key) ? label_field : text_field;
      throw FormatError("row " + std::to_string(lineno) + ": missing field '" + std::string(missing) + "'");
    }
    const auto& text = obj[text_key];
    const auto& label = obj[label_key];
    if (!text.is_string()) throw FormatError("row " + std::to_string(lineno) + ": field '" + text_key + "' is not a string");
    std::string label_str;
    if (label.is_string()) {
      label_str = label.get<std::string>();
    } else if (label.is_number() || label.is_boolean()) {
      label_str = label.dump();
    } else {
      throw FormatError("row " + std::to_string(lineno) + ": field '" + label_key + "' is not a scalar");
    }
    rows.push_back({lineno, text.get<std::string>(), std::move(label_str)});
  }
  return rows;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

LabeledDataset load_dataset(const std::filesystem::path& path, FileFormat format, std::string_view text_field,
                            std::string_view label_field, const LoadOptions& options) {
  const std::string content = read_file(path);
  std::vector<RawRow> rows;
  switch (format) {
    case FileFormat::csv: rows = read_delimited(content, ',', text_field, label_field); break;
    case FileFormat::tsv: rows = read_delimited(content, '\t', text_field, label_field); break;
    case FileFormat::jsonl: rows = read_jsonl_rows(content, text_field, label_field); break;
  }
  if (rows.empty()) throw FormatError("'" + path.string() + "': no examples");

  std::vector<std::string> class_names;
  if (options.class_names) {
    class_names = *options.class_names;
  } else {
    std::set<std::string> labels;
    for (const auto& r : rows) labels.insert(r.label);
    class_names.assign(labels.begin(), labels.end());
  }
  if (class_names.size() < 2)
    throw FormatError("'" + path.string() + "': need at least 2 distinct labels, found " +
                      std::to_string(class_names.size()));

  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(rows.size());
  for (const auto& r : rows) tokenized.push_back(tokenize(r.text));

  auto vocab = options.vocab ? options.vocab
                             : std::make_shared<const Vocabulary>(
                                   build_vocab(tokenized, options.min_freq, options.max_vocab));

  std::vector<Example> examples;
  examples.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto it = std::find(class_names.begin(), class_names.end(), rows[i].label);
    if (it == class_names.end())
      throw FormatError("row " + std::to_string(rows[i].line) + ": unknown label '" + rows[i].label + "'");
    examples.push_back({vocab->encode(tokenized[i]), static_cast<ClassId>(it - class_names.begin()), std::nullopt});
  }
  return LabeledDataset(std::move(examples), std::move(class_names), std::move(vocab));
}

std::filesystem::path meta_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".meta.json";
  return p;
}

void write_jsonl(const LabeledDataset& dataset, const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    for (const auto& ex : dataset.examples()) {
      json row;
      row["tokens"] = ex.tokens;
      row["gold_label"] = ex.gold_label;
      row["noisy_label"] = ex.noisy_label ? json(*ex.noisy_label) : json(nullptr);
      out << row.dump() << '\n';
    }
    if (!out) throw IoError("failed writing '" + path.string() + "'");
  }
  json meta;
  meta["num_classes"] = dataset.num_classes();
  meta["class_names"] = dataset.class_names();
  meta["vocab"] = dataset.vocab().tokens();
  std::ofstream out(meta_path(path), std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + meta_path(path).string() + "'");
  out << meta.dump() << '\n';
  if (!out) throw IoError("failed writing '" + meta_path(path).string() + "'");
}

LabeledDataset read_jsonl(const std::filesystem::path& path) {
  json meta;
  try {
    meta = json::parse(read_file(meta_path(path)));
  } catch (const json::exception& e) {
    throw FormatError("'" + meta_path(path).string() + "': " + e.what());
  }
  std::vector<std::string> class_names;
  std::shared_ptr<const Vocabulary> vocab;
  try {
    class_names = meta.at("class_names").get<std::vector<std::string>>();
    vocab = std::make_shared<const Vocabulary>(meta.at("vocab").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw FormatError("'" + meta_path(path).string() + "': " + e.what());
  }

  std::istringstream in(read_file(path));
  std::vector<Example> examples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json row = json::parse(line);
      Example ex;
      ex.tokens = row.at("tokens").get<std::vector<TokenId>>();
      ex.gold_label = row.at("gold_label").get<ClassId>();
      if (row.contains("noisy_label") && !row["noisy_label"].is_null())
        ex.noisy_label = row["noisy_label"].get<ClassId>();
      examples.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw FormatError("'" + path.string() + "' row " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return LabeledDataset(std::move(examples), std::move(class_names), std::move(vocab));
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& dataset, double fraction,
                                                        std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw DomainError("split fraction must lie in [0,1)");
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_second = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(dataset.size())));
  std::vector<std::size_t> second(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_second));
  std::vector<std::size_t> first(order.begin() + static_cast<std::ptrdiff_t>(n_second), order.end());
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  auto gather = [&](const std::vector<std::size_t>& idx) {
    std::vector<Example> ex;
    ex.reserve(idx.size());
    for (auto i : idx) ex.push_back(dataset[i]);
    return dataset.with_examples(std::move(ex));
  };
  return {gather(first), gather(second)};
}

// ---------------------------------------------------------------------------
// Synthetic corpus

void SynthSpec::validate() const {
  if (num_classes < 2) throw ConfigError("synthetic spec: num_classes must be >= 2");
  if (keywords_per_class < 1) throw ConfigError("synthetic spec: keywords_per_class must be >= 1");
  if (!(signal_rate >= 0.0 && signal_rate <= 1.0)) throw ConfigError("synthetic spec: signal_rate must lie in [0,1]");
  if (vocab_size < num_classes * keywords_per_class)
    throw ConfigError("synthetic spec: vocab_size " + std::to_string(vocab_size) + " < k * keywords_per_class = " +
                      std::to_string(num_classes * keywords_per_class));
  if (signal_rate < 1.0 && vocab_size == num_classes * keywords_per_class)
    throw ConfigError("synthetic spec: signal_rate < 1 requires background tokens (vocab_size > k * keywords_per_class)");
}

namespace {

std::string padded(std::size_t value, std::size_t width) {
  std::string s = std::to_string(value);
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return s;
}

std::size_t digits(std::size_t n) { return n < 10 ? 1 : 1 + digits(n / 10); }

}  // namespace

LabeledDataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  const auto k = spec.num_classes;
  const auto kpc = spec.keywords_per_class;
  const auto n_keywords = k * kpc;
  const auto n_background = spec.vocab_size - n_keywords;

  std::vector<std::string> tokens{std::string(Vocabulary::kPadToken), std::string(Vocabulary::kUnkToken),
                                  std::string(Vocabulary::kMaskToken)};
  tokens.reserve(Vocabulary::kReserved + spec.vocab_size);
  const auto class_width = digits(k - 1);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < kpc; ++j)
      tokens.push_back("kw" + padded(c, class_width) + "t" + padded(j, digits(kpc - 1)));
  for (std::size_t b = 0; b < n_background; ++b) tokens.push_back("bg" + padded(b, digits(n_background ? n_background - 1 : 0)));
  auto vocab = std::make_shared<const Vocabulary>(std::move(tokens));

  std::vector<std::string> class_names;
  for (std::size_t c = 0; c < k; ++c) class_names.push_back("class" + padded(c, class_width));

  Rng rng(spec.seed);
  std::vector<ClassId> labels(spec.n_docs);
  for (std::size_t i = 0; i < spec.n_docs; ++i) labels[i] = static_cast<ClassId>(i % k);
  rng.shuffle(std::span<ClassId>(labels));

  const auto keyword_base = static_cast<TokenId>(Vocabulary::kReserved);
  const auto background_base = static_cast<TokenId>(Vocabulary::kReserved + n_keywords);
  std::vector<Example> examples;
  examples.reserve(spec.n_docs);
  for (std::size_t i = 0; i < spec.n_docs; ++i) {
    Example ex;
    ex.gold_label = labels[i];
    ex.tokens.reserve(spec.doc_length);
    for (std::size_t p = 0; p < spec.doc_length; ++p) {
      if (rng.bernoulli(spec.signal_rate)) {
        ex.tokens.push_back(keyword_base + static_cast<TokenId>(labels[i] * kpc + rng.below(kpc)));
      } else {
        ex.tokens.push_back(background_base + static_cast<TokenId>(rng.below(n_background)));
      }
    }
    examples.push_back(std::move(ex));
  }
  return LabeledDataset(std::move(examples), std::move(class_names), std::move(vocab));
}

std::optional<ClassId> synthetic_keyword_class(const SynthSpec& spec, TokenId token) {
  const auto n_keywords = spec.num_classes * spec.keywords_per_class;
  if (token < Vocabulary::kReserved || token >= Vocabulary::kReserved + n_keywords) return std::nullopt;
  return static_cast<ClassId>((token - Vocabulary::kReserved) / spec.keywords_per_class);
}

ClassId keyword_lookup_predict(const SynthSpec& spec, std::span<const TokenId> tokens) {
  std::vector<std::size_t> votes(spec.num_classes, 0);
  for (TokenId t : tokens)
    if (auto c = synthetic_keyword_class(spec, t)) ++votes[*c];
  return static_cast<ClassId>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

double synthetic_bayes_accuracy(const SynthSpec& spec) {
  const double k = static_cast<double>(spec.num_classes);
  const double p_no_signal = std::pow(1.0 - spec.signal_rate, static_cast<double>(spec.doc_length));
  return 1.0 - p_no_signal * (1.0 - 1.0 / k);
}

}  // namespace lnlab
