#include "lnlab/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lnlab/error.hpp"
#include "lnlab/rng.hpp"

namespace lnlab {

std::string_view method_name(Method method) {
  switch (method) {
    case Method::none: return "none";
    case Method::co_teaching: return "co_teaching";
    case Method::noise_matrix: return "noise_matrix";
    case Method::noise_matrix_reg: return "noise_matrix_reg";
    case Method::label_smoothing: return "label_smoothing";
  }
  return "none";
}

Method parse_method(std::string_view name) {
  if (name == "none") return Method::none;
  if (name == "co_teaching") return Method::co_teaching;
  if (name == "noise_matrix") return Method::noise_matrix;
  if (name == "noise_matrix_reg") return Method::noise_matrix_reg;
  if (name == "label_smoothing") return Method::label_smoothing;
  throw UsageError("unknown training method '" + std::string(name) + "'");
}

void TrainConfig::validate(std::size_t num_classes) const {
  optimizer.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (transition && transition->k() != num_classes)
    throw ConfigError("transition matrix is " + std::to_string(transition->k()) + "x" +
                      std::to_string(transition->k()) + " but data has k=" + std::to_string(num_classes));
  switch (method) {
    case Method::none: break;
    case Method::label_smoothing:
      if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("label_smoothing: smoothing must lie in [0,1)");
      break;
    case Method::noise_matrix:
      if (!transition) throw ConfigError("noise_matrix requires a transition matrix");
      break;
    case Method::noise_matrix_reg:
      if (!(l2_coeff >= 0.0) || !std::isfinite(l2_coeff)) throw ConfigError("noise_matrix_reg: l2_coeff must be >= 0");
      break;
    case Method::co_teaching: {
      if (ramp_epochs < 1) throw ConfigError("co_teaching: ramp_epochs must be >= 1");
      const double tau = resolved_forget_rate();
      if (!(tau >= 0.0 && tau < 1.0)) throw ConfigError("co_teaching: forget_rate must lie in [0,1)");
      break;
    }
  }
}

double TrainConfig::resolved_forget_rate() const {
  if (forget_rate) return *forget_rate;
  if (transition) return transition->mean_flip_rate();
  throw ConfigError("co_teaching requires forget_rate or a transition matrix to derive it from");
}

std::uint64_t peer_init_seed(std::uint64_t init_seed) { return derive_seed(init_seed, "co_teaching_peer"); }

double remember_rate(std::size_t epoch, double forget_rate, std::size_t ramp_epochs) {
  if (!(forget_rate >= 0.0 && forget_rate < 1.0)) throw DomainError("forget rate must lie in [0,1)");
  if (ramp_epochs < 1) throw DomainError("ramp_epochs must be >= 1");
  const double progress = std::min(static_cast<double>(epoch) / static_cast<double>(ramp_epochs), 1.0);
  return 1.0 - forget_rate * progress;
}

double evaluate(const ClassifierModel& model, const LabeledDataset& split, LabelSource against) {
  if (split.empty()) throw ConfigError("empty split");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& ex = split[i];
    ClassId label = ex.gold_label;
    if (against == LabelSource::noisy) {
      if (!ex.noisy_label) throw ConfigError("example " + std::to_string(i) + " has no noisy label");
      label = *ex.noisy_label;
    }
    if (predict(model, ex.tokens) == label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(split.size());
}

namespace {

std::vector<std::vector<double>*> param_slots(ClassifierModel& model) {
  std::vector<std::vector<double>*> slots;
  for (auto& p : model.params()) slots.push_back(&p.values);
  return slots;
}

std::vector<const std::vector<double>*> grad_slots(const Gradients& g) {
  std::vector<const std::vector<double>*> slots;
  for (const auto& v : g.params) slots.push_back(&v);
  return slots;
}

// One optimizer step on `batch`; returns the pre-update mean loss.
double sgd_step(ClassifierModel& model, NoiseAdapter* adapter, std::span<const Sample> batch, const LossConfig& loss,
                Optimizer& optimizer, Gradients& grads) {
  backward(model, adapter, batch, loss, grads);
  auto params = param_slots(model);
  auto gslots = grad_slots(grads);
  if (adapter && adapter->mode() == AdapterMode::learnable) {
    params.push_back(&adapter->mutable_weights());
    gslots.push_back(&grads.adapter);
  }
  optimizer.step(params, gslots);
  return grads.loss;
}

std::vector<std::size_t> smallest_losses(std::span<const double> losses, std::size_t keep) {
  std::vector<std::size_t> order(losses.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return losses[a] < losses[b]; });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<Sample> gather(std::span<const Sample> batch, std::span<const std::size_t> positions) {
  std::vector<Sample> out;
  out.reserve(positions.size());
  for (auto p : positions) out.push_back(batch[p]);
  return out;
}

LossConfig loss_for(const TrainConfig& cfg) {
  if (cfg.method == Method::label_smoothing) return {LossKind::label_smoothing, cfg.smoothing};
  return {};
}

void check_inputs(const LabeledDataset& train_set, const LabeledDataset& val_set, const LabeledDataset& test_set,
                  const ClassifierModel& model, const TrainConfig& cfg) {
  const auto k = model.config().num_classes;
  if (train_set.empty()) throw ConfigError("train split is empty");
  if (!train_set.all_noisy()) throw ConfigError("train split must carry noisy labels");
  if (cfg.use_validation) {
    if (val_set.empty()) throw ConfigError("validation split is empty but use_validation is set");
    if (!val_set.all_noisy()) throw ConfigError("validation split must carry noisy labels");
  }
  if (test_set.empty()) throw ConfigError("test split is empty");
  for (const auto* ds : {&train_set, &val_set, &test_set}) {
    if (ds->num_classes() != k)
      throw ConfigError("split has k=" + std::to_string(ds->num_classes()) + " but model has k=" + std::to_string(k));
    if (ds->vocab().size() > model.config().vocab_size)
      throw ConfigError("split vocabulary (" + std::to_string(ds->vocab().size()) + ") exceeds model vocab_size (" +
                        std::to_string(model.config().vocab_size) + ")");
    if (ds->class_names() != train_set.class_names())
      throw ConfigError("splits disagree on class names");
    if (ds->vocab_ptr() != train_set.vocab_ptr() && ds->vocab() != train_set.vocab())
      throw ConfigError("splits were encoded with different vocabularies");
  }
}

struct Evaluation {
  double train_accuracy;
  double val_accuracy;
  double test_accuracy;
};

Evaluation evaluate_all(const ClassifierModel& model, const LabeledDataset& train_set, const LabeledDataset& val_set,
                        const LabeledDataset& test_set) {
  return {evaluate(model, train_set, LabelSource::noisy),
          val_set.empty() || !val_set.all_noisy() ? kNotMeasured : evaluate(model, val_set, LabelSource::noisy),
          evaluate(model, test_set, LabelSource::gold)};
}

EpochRecord make_record(std::size_t epoch, double loss, const Evaluation& e) {
  EpochRecord r;
  r.epoch = epoch;
  r.train_loss = loss;
  r.train_accuracy = e.train_accuracy;
  r.val_accuracy = e.val_accuracy;
  r.test_accuracy = e.test_accuracy;
  return r;
}

}  // namespace

CoTeachStep co_teach_step(ClassifierModel& model_a, ClassifierModel& model_b, std::span<const Sample> batch,
                          double remember, Optimizer& optimizer_a, Optimizer& optimizer_b,
                          const LossConfig& loss_config) {
  if (model_a.config().num_classes != model_b.config().num_classes ||
      model_a.config().arch != model_b.config().arch || model_a.config().vocab_size != model_b.config().vocab_size)
    throw ConfigError("co-teaching networks must share a configuration");
  CoTeachStep step;
  if (batch.empty()) return step;

  const auto n = batch.size();
  const double wanted = std::ceil(remember * static_cast<double>(n) - 1e-9);
  const auto keep = std::clamp<std::size_t>(wanted < 1.0 ? 1 : static_cast<std::size_t>(wanted), 1, n);

  const auto losses_a = per_example_loss(model_a, nullptr, batch, loss_config);
  const auto losses_b = per_example_loss(model_b, nullptr, batch, loss_config);
  step.selected_by_a = smallest_losses(losses_a, keep);
  step.selected_by_b = smallest_losses(losses_b, keep);

  const auto for_a = gather(batch, step.selected_by_b);
  const auto for_b = gather(batch, step.selected_by_a);
  Gradients grads;
  step.loss_a = sgd_step(model_a, nullptr, for_a, loss_config, optimizer_a, grads);
  step.loss_b = sgd_step(model_b, nullptr, for_b, loss_config, optimizer_b, grads);
  return step;
}

TrainOutcome train(const LabeledDataset& train_set, const LabeledDataset& val_set, const LabeledDataset& test_set,
                   const ClassifierConfig& model_config, const TrainConfig& config) {
  return train(train_set, val_set, test_set, init_model(model_config), config);
}

TrainOutcome train(const LabeledDataset& train_set, const LabeledDataset& val_set, const LabeledDataset& test_set,
                   const ClassifierModel& initial, const TrainConfig& config, std::optional<ClassifierModel> peer) {
  const auto k = initial.config().num_classes;
  config.validate(k);
  check_inputs(train_set, val_set, test_set, initial, config);
  const bool co_teaching = config.method == Method::co_teaching;
  const LossConfig loss_config = loss_for(config);

  ClassifierModel model = initial;
  std::optional<ClassifierModel> partner;
  if (co_teaching) {
    if (peer) {
      if (peer->config().num_classes != k || peer->config().arch != initial.config().arch)
        throw ConfigError("co-teaching peer must share the primary model's configuration");
      partner = std::move(peer);
    } else {
      auto cfg = initial.config();
      cfg.init_seed = peer_init_seed(cfg.init_seed);
      partner = init_model(cfg);
    }
  }

  std::optional<NoiseAdapter> adapter;
  if (config.method == Method::noise_matrix) adapter = NoiseAdapter::fixed(*config.transition);
  if (config.method == Method::noise_matrix_reg) adapter = NoiseAdapter::learnable(k, config.l2_coeff, config.l2_target);
  NoiseAdapter* adapter_ptr = adapter ? &*adapter : nullptr;

  std::vector<Sample> samples;
  std::vector<ClassId> gold;
  samples.reserve(train_set.size());
  for (const auto& ex : train_set.examples()) {
    samples.push_back({ex.tokens, *ex.noisy_label});
    gold.push_back(ex.gold_label);
  }

  TrainOutcome outcome{TrainResult{}, model};
  auto& result = outcome.result;
  result.method = config.method;
  result.use_validation = config.use_validation;
  result.seed = config.seed;

  result.trace.push_back(make_record(0, batch_loss(model, adapter_ptr, samples, loss_config),
                                     evaluate_all(model, train_set, val_set, test_set)));
  if (co_teaching)
    result.peer_trace.push_back(make_record(0, batch_loss(*partner, nullptr, samples, loss_config),
                                            evaluate_all(*partner, train_set, val_set, test_set)));

  Optimizer optimizer(config.optimizer);
  Optimizer peer_optimizer(config.optimizer);
  Rng shuffle_rng(config.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Sample> batch;
  Gradients grads;

  std::size_t best_epoch = 0;
  double best_val = result.trace[0].val_accuracy;

  const double tau = co_teaching ? config.resolved_forget_rate() : 0.0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    const double remember = co_teaching ? remember_rate(epoch - 1, tau, config.ramp_epochs) : 1.0;

    double loss_sum = 0.0, peer_loss_sum = 0.0;
    std::size_t batches = 0, selected = 0, selected_clean = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const auto end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (auto i = start; i < end; ++i) batch.push_back(samples[order[i]]);
      if (co_teaching) {
        const auto step = co_teach_step(model, *partner, batch, remember, optimizer, peer_optimizer, loss_config);
        loss_sum += step.loss_a;
        peer_loss_sum += step.loss_b;
        for (const auto* sel : {&step.selected_by_a, &step.selected_by_b})
          for (auto pos : *sel) {
            ++selected;
            if (samples[order[start + pos]].label == gold[order[start + pos]]) ++selected_clean;
          }
      } else {
        loss_sum += sgd_step(model, adapter_ptr, batch, loss_config, optimizer, grads);
      }
      ++batches;
    }

    auto record = make_record(epoch, loss_sum / static_cast<double>(batches),
                              evaluate_all(model, train_set, val_set, test_set));
    if (co_teaching) {
      record.remember_rate = remember;
      record.selection_precision = static_cast<double>(selected_clean) / static_cast<double>(selected);
      auto peer_record = make_record(epoch, peer_loss_sum / static_cast<double>(batches),
                                     evaluate_all(*partner, train_set, val_set, test_set));
      peer_record.remember_rate = remember;
      peer_record.selection_precision = record.selection_precision;
      result.peer_trace.push_back(peer_record);
    }
    result.trace.push_back(record);

    if (config.use_validation) {
      if (record.val_accuracy > best_val) {
        best_val = record.val_accuracy;
        best_epoch = epoch;
        outcome.model = model;
      }
      if (config.patience > 0 && epoch - best_epoch >= config.patience) break;
    }
  }

  if (config.use_validation) {
    result.selected_epoch = best_epoch;
  } else {
    result.selected_epoch = result.trace.back().epoch;
    outcome.model = model;
  }
  result.test_accuracy = result.trace[result.selected_epoch].test_accuracy;
  return outcome;
}

}  // namespace lnlab
