#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "lnlab/corpus.hpp"
#include "lnlab/model.hpp"
#include "lnlab/noise.hpp"
#include "lnlab/optim.hpp"

namespace lnlab {

enum class Method { none, co_teaching, noise_matrix, noise_matrix_reg, label_smoothing };

std::string_view method_name(Method method);
Method parse_method(std::string_view name);

struct TrainConfig {
  Method method = Method::none;
  /// false with method none is the No-Validation control: no model
  /// selection, the final epoch is reported.
  bool use_validation = true;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;

  double smoothing = 0.1;  // label_smoothing
  double l2_coeff = 1e-3;  // noise_matrix_reg
  L2Target l2_target = L2Target::zero;
  /// Ground-truth channel; required by noise_matrix, and the default source
  /// of the co-teaching forget rate.
  std::optional<TransitionMatrix> transition;
  std::optional<double> forget_rate;  // co_teaching tau
  std::size_t ramp_epochs = 5;        // co_teaching t_k
  /// Stop after this many epochs without a validation improvement; 0 runs
  /// every epoch.
  std::size_t patience = 0;

  void validate(std::size_t num_classes) const;
  /// tau: explicit forget_rate, else the mean flip rate of `transition`.
  double resolved_forget_rate() const;
};

inline constexpr double kNotMeasured = std::numeric_limits<double>::quiet_NaN();

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;  // against the noisy training labels
  double val_accuracy = kNotMeasured;
  double test_accuracy = 0.0;  // against gold labels
  double remember_rate = kNotMeasured;        // co_teaching
  double selection_precision = kNotMeasured;  // co_teaching, gold-clean share of selections
};

struct TrainResult {
  Method method = Method::none;
  bool use_validation = true;
  std::uint64_t seed = 0;
  /// Entry 0 describes the untrained model; entry e the model after epoch e.
  std::vector<EpochRecord> trace;
  /// Co-teaching only: the second network.
  std::vector<EpochRecord> peer_trace;
  std::size_t selected_epoch = 0;
  double test_accuracy = 0.0;
};

struct TrainOutcome {
  TrainResult result;
  ClassifierModel model;  // parameters at the selected epoch
};

/// Init seed of the co-teaching peer network.
std::uint64_t peer_init_seed(std::uint64_t init_seed);

/// Trains on the noisy labels of `train_set`, selects on the noisy labels of
/// `val_set` and scores gold labels of `test_set`. For co-teaching the peer
/// starts from `peer` or, if absent, from init_model with peer_init_seed.
TrainOutcome train(const LabeledDataset& train_set, const LabeledDataset& val_set, const LabeledDataset& test_set,
                   const ClassifierModel& initial, const TrainConfig& config,
                   std::optional<ClassifierModel> peer = std::nullopt);

TrainOutcome train(const LabeledDataset& train_set, const LabeledDataset& val_set, const LabeledDataset& test_set,
                   const ClassifierConfig& model_config, const TrainConfig& config);

/// R(t) = 1 - tau * min(t / t_k, 1)
double remember_rate(std::size_t epoch, double forget_rate, std::size_t ramp_epochs);

struct CoTeachStep {
  std::vector<std::size_t> selected_by_a;  // batch positions, ascending
  std::vector<std::size_t> selected_by_b;
  double loss_a = 0.0;  // mean loss of A on its update set, before the update
  double loss_b = 0.0;
};

/// Each network keeps its ceil(R * n) smallest-loss examples (ties by batch
/// position, at least one); A then updates on B's selection and vice versa.
CoTeachStep co_teach_step(ClassifierModel& model_a, ClassifierModel& model_b, std::span<const Sample> batch,
                          double remember, Optimizer& optimizer_a, Optimizer& optimizer_b,
                          const LossConfig& loss_config = {});

enum class LabelSource { gold, noisy };

/// Fraction of predictions matching the chosen labels.
double evaluate(const ClassifierModel& model, const LabeledDataset& split, LabelSource against);

}  // namespace lnlab
