#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace lnlab {

enum class OptimizerKind { sgd, adam };

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
  bool operator==(const OptimizerConfig&) const = default;
};

/// Plain SGD or Adam with bias correction over a fixed list of parameter
/// slots. Slot i must keep its size across calls.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  void step(std::span<std::vector<double>* const> params, std::span<const std::vector<double>* const> grads);

  const OptimizerConfig& config() const noexcept { return config_; }
  std::size_t steps() const noexcept { return steps_; }

 private:
  OptimizerConfig config_;
  std::size_t steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace lnlab
