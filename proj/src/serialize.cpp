#include "lnlab/serialize.hpp"

#include <algorithm>
#include <cmath>

#include "lnlab/error.hpp"

namespace lnlab {

using nlohmann::json;

void require_known_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view context) {
  if (!j.is_object()) throw ConfigError(std::string(context) + ": expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(std::string(context) + ": unknown key '" + key + "'");
}

json parse_json_config(std::string_view text, std::string_view context) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(context) + ": invalid JSON: " + e.what());
  }
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out, std::string_view context) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(context) + ": field '" + key + "': " + e.what());
  }
}

json nullable(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

}  // namespace

void to_json(json& j, const SynthSpec& s) {
  j = {{"num_classes", s.num_classes},         {"vocab_size", s.vocab_size}, {"keywords_per_class", s.keywords_per_class},
       {"doc_length", s.doc_length},           {"signal_rate", s.signal_rate}, {"n_docs", s.n_docs},
       {"seed", s.seed}};
}

void from_json(const json& j, SynthSpec& s) {
  constexpr std::string_view ctx = "synthetic spec";
  require_known_keys(j, {"num_classes", "k", "vocab_size", "keywords_per_class", "doc_length", "signal_rate", "n_docs", "seed"}, ctx);
  read(j, "num_classes", s.num_classes, ctx);
  read(j, "k", s.num_classes, ctx);
  read(j, "vocab_size", s.vocab_size, ctx);
  read(j, "keywords_per_class", s.keywords_per_class, ctx);
  read(j, "doc_length", s.doc_length, ctx);
  read(j, "signal_rate", s.signal_rate, ctx);
  read(j, "n_docs", s.n_docs, ctx);
  read(j, "seed", s.seed, ctx);
}

void to_json(json& j, const NoiseSpec& s) {
  j = {{"kind", noise_kind_name(s.kind)}, {"level", s.level}};
  if (!s.flip_map.empty()) j["flip_map"] = s.flip_map;
}

void from_json(const json& j, NoiseSpec& s) {
  constexpr std::string_view ctx = "noise spec";
  require_known_keys(j, {"kind", "level", "flip_map"}, ctx);
  std::string kind = "none";
  read(j, "kind", kind, ctx);
  s.kind = parse_noise_kind(kind);
  read(j, "level", s.level, ctx);
  read(j, "flip_map", s.flip_map, ctx);
}

void to_json(json& j, const ClassifierConfig& c) {
  j = {{"arch", arch_name(c.arch)},   {"num_classes", c.num_classes}, {"vocab_size", c.vocab_size},
       {"embed_dim", c.embed_dim}, {"hidden_dim", c.hidden_dim},   {"init_seed", c.init_seed}};
}

void from_json(const json& j, ClassifierConfig& c) {
  constexpr std::string_view ctx = "model config";
  require_known_keys(j, {"arch", "num_classes", "vocab_size", "embed_dim", "hidden_dim", "init_seed"}, ctx);
  std::string arch(arch_name(c.arch));
  read(j, "arch", arch, ctx);
  c.arch = parse_arch(arch);
  read(j, "num_classes", c.num_classes, ctx);
  read(j, "vocab_size", c.vocab_size, ctx);
  read(j, "embed_dim", c.embed_dim, ctx);
  read(j, "hidden_dim", c.hidden_dim, ctx);
  read(j, "init_seed", c.init_seed, ctx);
}

void to_json(json& j, const OptimizerConfig& c) {
  j = {{"kind", optimizer_name(c.kind)}, {"learning_rate", c.learning_rate}};
  if (c.kind == OptimizerKind::adam) {
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["epsilon"] = c.epsilon;
  }
}

void from_json(const json& j, OptimizerConfig& c) {
  constexpr std::string_view ctx = "optimizer";
  if (j.is_string()) {
    c.kind = parse_optimizer(j.get<std::string>());
    return;
  }
  require_known_keys(j, {"kind", "learning_rate", "beta1", "beta2", "epsilon"}, ctx);
  std::string kind(optimizer_name(c.kind));
  read(j, "kind", kind, ctx);
  c.kind = parse_optimizer(kind);
  read(j, "learning_rate", c.learning_rate, ctx);
  read(j, "beta1", c.beta1, ctx);
  read(j, "beta2", c.beta2, ctx);
  read(j, "epsilon", c.epsilon, ctx);
}

void to_json(json& j, const TaptConfig& c) {
  j = {{"mask_prob", c.mask_prob},   {"pretrain_epochs", c.pretrain_epochs}, {"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size}, {"seed", c.seed}};
}

void from_json(const json& j, TaptConfig& c) {
  constexpr std::string_view ctx = "tapt config";
  require_known_keys(j, {"mask_prob", "pretrain_epochs", "learning_rate", "batch_size", "seed"}, ctx);
  read(j, "mask_prob", c.mask_prob, ctx);
  read(j, "pretrain_epochs", c.pretrain_epochs, ctx);
  read(j, "learning_rate", c.learning_rate, ctx);
  read(j, "batch_size", c.batch_size, ctx);
  read(j, "seed", c.seed, ctx);
}

json matrix_to_json(const TransitionMatrix& m) { return m.rows(); }

TransitionMatrix matrix_from_json(const json& j) {
  try {
    return TransitionMatrix::from_rows(j.get<std::vector<std::vector<double>>>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("transition matrix: expected a k x k array: ") + e.what());
  }
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"method", method_name(c.method)},
       {"use_validation", c.use_validation},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.optimizer.learning_rate},
       {"optimizer", c.optimizer},
       {"seed", c.seed},
       {"smoothing", c.smoothing},
       {"l2_coeff", c.l2_coeff},
       {"l2_target", c.l2_target == L2Target::zero ? "zero" : "identity"},
       {"ramp_epochs", c.ramp_epochs},
       {"patience", c.patience}};
  if (c.transition) j["transition"] = matrix_to_json(*c.transition);
  if (c.forget_rate) j["forget_rate"] = *c.forget_rate;
}

void from_json(const json& j, TrainConfig& c) {
  constexpr std::string_view ctx = "train config";
  require_known_keys(j,
                     {"method", "use_validation", "epochs", "batch_size", "learning_rate", "optimizer", "seed",
                      "smoothing", "l2_coeff", "l2_target", "transition", "forget_rate", "ramp_epochs", "patience"},
                     ctx);
  std::string method(method_name(c.method));
  read(j, "method", method, ctx);
  c.method = parse_method(method);
  read(j, "use_validation", c.use_validation, ctx);
  read(j, "epochs", c.epochs, ctx);
  read(j, "batch_size", c.batch_size, ctx);
  if (j.contains("optimizer")) from_json(j["optimizer"], c.optimizer);
  read(j, "learning_rate", c.optimizer.learning_rate, ctx);
  read(j, "seed", c.seed, ctx);
  read(j, "smoothing", c.smoothing, ctx);
  read(j, "l2_coeff", c.l2_coeff, ctx);
  if (j.contains("l2_target")) {
    const auto t = j["l2_target"].get<std::string>();
    if (t == "zero")
      c.l2_target = L2Target::zero;
    else if (t == "identity")
      c.l2_target = L2Target::identity;
    else
      throw ConfigError("train config: l2_target must be 'zero' or 'identity'");
  }
  if (j.contains("transition") && !j["transition"].is_null()) c.transition = matrix_from_json(j["transition"]);
  if (j.contains("forget_rate") && !j["forget_rate"].is_null()) c.forget_rate = j["forget_rate"].get<double>();
  read(j, "ramp_epochs", c.ramp_epochs, ctx);
  read(j, "patience", c.patience, ctx);
}

void to_json(json& j, const EpochRecord& r) {
  j = {{"epoch", r.epoch},
       {"train_loss", nullable(r.train_loss)},
       {"train_accuracy", nullable(r.train_accuracy)},
       {"val_accuracy", nullable(r.val_accuracy)},
       {"test_accuracy", nullable(r.test_accuracy)}};
  if (!std::isnan(r.remember_rate)) j["remember_rate"] = r.remember_rate;
  if (!std::isnan(r.selection_precision)) j["selection_precision"] = r.selection_precision;
}

void to_json(json& j, const TrainResult& r) {
  auto column = [](const std::vector<EpochRecord>& trace, double EpochRecord::*field) {
    json a = json::array();
    for (const auto& e : trace) a.push_back(nullable(e.*field));
    return a;
  };
  j = {{"method", method_name(r.method)},
       {"use_validation", r.use_validation},
       {"seed", r.seed},
       {"selected_epoch", r.selected_epoch},
       {"test_accuracy", r.test_accuracy},
       {"train_loss", column(r.trace, &EpochRecord::train_loss)},
       {"train_accuracy", column(r.trace, &EpochRecord::train_accuracy)},
       {"val_accuracy", column(r.trace, &EpochRecord::val_accuracy)},
       {"test_accuracy_per_epoch", column(r.trace, &EpochRecord::test_accuracy)}};
  if (r.method == Method::co_teaching) {
    j["remember_rate"] = column(r.trace, &EpochRecord::remember_rate);
    j["selection_precision"] = column(r.trace, &EpochRecord::selection_precision);
    j["peer"] = {{"train_loss", column(r.peer_trace, &EpochRecord::train_loss)},
                 {"val_accuracy", column(r.peer_trace, &EpochRecord::val_accuracy)},
                 {"test_accuracy_per_epoch", column(r.peer_trace, &EpochRecord::test_accuracy)}};
  }
}

}  // namespace lnlab
