#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lnlab/corpus.hpp"
#include "lnlab/noise.hpp"

namespace lnlab {

enum class Arch { bow_linear, embed_mlp };

std::string_view arch_name(Arch arch);
Arch parse_arch(std::string_view name);

struct ClassifierConfig {
  Arch arch = Arch::bow_linear;
  std::size_t num_classes = 2;
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 0;   // embed_mlp only
  std::size_t hidden_dim = 0;  // embed_mlp only
  std::uint64_t init_seed = 0;

  void validate() const;
  bool operator==(const ClassifierConfig&) const = default;
};

struct ParamArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;

  bool operator==(const ParamArray&) const = default;
};

/// Parameter layout:
///   bow_linear: weight (k x V), bias (k)
///   embed_mlp:  embedding (V x d), hidden_weight (h x d), hidden_bias (h),
///               output_weight (k x h), output_bias (k)
class ClassifierModel {
 public:
  // Slot indices into params().
  static constexpr std::size_t kBowWeight = 0, kBowBias = 1;
  static constexpr std::size_t kEmbedding = 0, kHiddenWeight = 1, kHiddenBias = 2, kOutputWeight = 3,
                               kOutputBias = 4;

  /// All parameters zero.
  explicit ClassifierModel(const ClassifierConfig& config);

  const ClassifierConfig& config() const noexcept { return config_; }
  std::vector<ParamArray>& params() noexcept { return params_; }
  const std::vector<ParamArray>& params() const noexcept { return params_; }
  ParamArray& param(std::string_view name);
  const ParamArray& param(std::string_view name) const;
  std::size_t parameter_count() const;

  bool operator==(const ClassifierModel&) const = default;

 private:
  ClassifierConfig config_;
  std::vector<ParamArray> params_;
};

/// Weights ~ N(0,1) / sqrt(fan_in), biases zero. Embedding rows are lookups
/// and use fan_in = 1.
ClassifierModel init_model(const ClassifierConfig& config);

enum class AdapterMode { fixed, learnable };
/// What the learnable matrix is shrunk toward by the l2 term.
enum class L2Target { zero, identity };

/// Output layer mapping the clean prediction p to noisy-label space.
///   fixed:     q = T^T p
///   learnable: q = softmax(W^T log p), W unconstrained, initialised to I,
///              penalised by l2_coeff * ||W - target||_F^2.
class NoiseAdapter {
 public:
  static NoiseAdapter fixed(TransitionMatrix matrix);
  static NoiseAdapter learnable(std::size_t k, double l2_coeff, L2Target target = L2Target::zero);

  AdapterMode mode() const noexcept { return mode_; }
  std::size_t k() const noexcept { return k_; }
  /// Row-major k x k: T for fixed mode, W for learnable mode.
  const std::vector<double>& matrix() const noexcept { return matrix_; }
  /// Learnable mode only.
  std::vector<double>& mutable_weights();
  double l2_coeff() const noexcept { return l2_coeff_; }
  L2Target l2_target() const noexcept { return l2_target_; }
  /// Regularizer value; zero in fixed mode.
  double l2_term() const;

 private:
  NoiseAdapter() = default;
  AdapterMode mode_ = AdapterMode::fixed;
  std::size_t k_ = 0;
  std::vector<double> matrix_;
  double l2_coeff_ = 0.0;
  L2Target l2_target_ = L2Target::zero;
};

enum class LossKind { cross_entropy, label_smoothing };

struct LossConfig {
  LossKind kind = LossKind::cross_entropy;
  double smoothing = 0.0;  // label_smoothing only, in [0,1)

  void validate() const;
};

/// Probabilities are clamped to this before taking logs.
inline constexpr double kLogClamp = 1e-12;

/// (1 - alpha) * onehot(label) + alpha / k
std::vector<double> smoothing_target(std::size_t k, ClassId label, double alpha);

/// -sum_j t_j log max(v_j, kLogClamp) + adapter_l2_term
double loss(std::span<const double> v, ClassId label, const LossConfig& config, double adapter_l2_term = 0.0);

struct Sample {
  std::span<const TokenId> tokens;
  ClassId label = 0;
};

std::vector<double> logits(const ClassifierModel& model, std::span<const TokenId> tokens);
std::vector<double> probabilities(const ClassifierModel& model, std::span<const TokenId> tokens);
std::vector<std::vector<double>> forward(const ClassifierModel& model, std::span<const Example> batch);
std::vector<double> adapter_forward(std::span<const double> p, const NoiseAdapter& adapter);

/// Argmax of the clean prediction, smallest index on ties.
ClassId argmax(std::span<const double> v);
ClassId predict(const ClassifierModel& model, std::span<const TokenId> tokens);

struct Gradients {
  std::vector<std::vector<double>> params;  // aligned with model.params()
  std::vector<double> adapter;              // learnable W; empty otherwise
  double loss = 0.0;                        // mean batch loss incl. l2 term
};

/// Exact gradients of the mean batch loss. The adapter may be null.
Gradients backward(const ClassifierModel& model, const NoiseAdapter* adapter, std::span<const Sample> batch,
                   const LossConfig& loss_config);
/// Same, reusing the buffers in `out`.
void backward(const ClassifierModel& model, const NoiseAdapter* adapter, std::span<const Sample> batch,
              const LossConfig& loss_config, Gradients& out);

double batch_loss(const ClassifierModel& model, const NoiseAdapter* adapter, std::span<const Sample> batch,
                  const LossConfig& loss_config);
/// Per-example losses without the l2 term.
std::vector<double> per_example_loss(const ClassifierModel& model, const NoiseAdapter* adapter,
                                     std::span<const Sample> batch, const LossConfig& loss_config);

/// JSON checkpoint: {"format":"lnlab-checkpoint","version":1,"config":{..},
/// "params":[{"name","shape","values"}]}. Doubles are written in shortest
/// round-trip form, so save/load is bit-exact.
std::string checkpoint_json(const ClassifierModel& model);
ClassifierModel model_from_checkpoint_json(std::string_view text);
void save_checkpoint(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_checkpoint(const std::filesystem::path& path);

}  // namespace lnlab
