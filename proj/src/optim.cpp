#include "lnlab/optim.hpp"

#include <cmath>
#include <string>

#include "lnlab/error.hpp"

namespace lnlab {

std::string_view optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw UsageError("unknown optimizer '" + std::string(name) + "'");
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (kind == OptimizerKind::adam) {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw ConfigError("adam betas must lie in [0,1)");
    if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
  }
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

void Optimizer::step(std::span<std::vector<double>* const> params, std::span<const std::vector<double>* const> grads) {
  if (params.size() != grads.size()) throw ConfigError("optimizer: params/grads slot count mismatch");
  ++steps_;
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::sgd) {
    for (std::size_t s = 0; s < params.size(); ++s) {
      auto& p = *params[s];
      const auto& g = *grads[s];
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    }
    return;
  }

  if (m_.size() < params.size()) {
    m_.resize(params.size());
    v_.resize(params.size());
  }
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (std::size_t s = 0; s < params.size(); ++s) {
    auto& p = *params[s];
    const auto& g = *grads[s];
    if (g.size() != p.size()) throw ConfigError("optimizer: gradient size mismatch in slot " + std::to_string(s));
    auto& m = m_[s];
    auto& v = v_[s];
    if (m.size() != p.size()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

}  // namespace lnlab
