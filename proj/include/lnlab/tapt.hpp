#pragma once

#include <cstdint>
#include <vector>

#include "lnlab/corpus.hpp"
#include "lnlab/model.hpp"

namespace lnlab {

struct TaptConfig {
  double mask_prob = 0.15;
  std::size_t pretrain_epochs = 5;
  double learning_rate = 1e-2;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TaptConfig&) const = default;
};

struct TaptResult {
  ClassifierModel model;
  std::vector<double> epoch_loss;
  /// Masked-token accuracy of the trained predictor on a fresh masking pass.
  double masked_accuracy = 0.0;
  std::size_t masked_evaluated = 0;
};

/// Masked-token pretraining of the embedding table. Every token is masked
/// independently with mask_prob; each masked token is predicted from the
/// mean embedding of the unmasked tokens of its document through a
/// temporary vocab-sized projection trained with cross-entropy (Adam).
/// Documents without a masked or without an unmasked token are skipped.
/// Only the embedding table changes; the projection is discarded.
TaptResult tapt_pretrain(const ClassifierModel& model, const LabeledDataset& corpus, const TaptConfig& config);

}  // namespace lnlab
