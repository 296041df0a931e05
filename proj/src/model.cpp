#include "lnlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "lnlab/error.hpp"
#include "lnlab/rng.hpp"
#include "lnlab/serialize.hpp"

namespace lnlab {

using nlohmann::json;

std::string_view arch_name(Arch arch) { return arch == Arch::bow_linear ? "bow_linear" : "embed_mlp"; }

Arch parse_arch(std::string_view name) {
  if (name == "bow_linear") return Arch::bow_linear;
  if (name == "embed_mlp") return Arch::embed_mlp;
  throw UsageError("unknown architecture '" + std::string(name) + "'");
}

void ClassifierConfig::validate() const {
  if (num_classes < 2) throw ConfigError("classifier: num_classes must be >= 2");
  if (vocab_size < 1) throw ConfigError("classifier: vocab_size must be >= 1");
  if (arch == Arch::embed_mlp && (embed_dim < 1 || hidden_dim < 1))
    throw ConfigError("classifier: embed_mlp needs embed_dim >= 1 and hidden_dim >= 1");
}

ClassifierModel::ClassifierModel(const ClassifierConfig& config) : config_(config) {
  config_.validate();
  const auto k = config_.num_classes;
  const auto v = config_.vocab_size;
  auto make = [](std::string name, std::vector<std::size_t> shape) {
    const auto n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    return ParamArray{std::move(name), std::move(shape), std::vector<double>(n, 0.0)};
  };
  if (config_.arch == Arch::bow_linear) {
    params_.push_back(make("weight", {k, v}));
    params_.push_back(make("bias", {k}));
  } else {
    const auto d = config_.embed_dim;
    const auto h = config_.hidden_dim;
    params_.push_back(make("embedding", {v, d}));
    params_.push_back(make("hidden_weight", {h, d}));
    params_.push_back(make("hidden_bias", {h}));
    params_.push_back(make("output_weight", {k, h}));
    params_.push_back(make("output_bias", {k}));
  }
}

ParamArray& ClassifierModel::param(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ConfigError("no parameter named '" + std::string(name) + "'");
}

const ParamArray& ClassifierModel::param(std::string_view name) const {
  return const_cast<ClassifierModel*>(this)->param(name);
}

std::size_t ClassifierModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.values.size();
  return n;
}

ClassifierModel init_model(const ClassifierConfig& config) {
  ClassifierModel model(config);
  Rng rng(config.init_seed);
  auto fill = [&](ParamArray& p, double fan_in) {
    const double scale = 1.0 / std::sqrt(fan_in);
    for (auto& x : p.values) x = rng.normal() * scale;
  };
  auto& ps = model.params();
  if (config.arch == Arch::bow_linear) {
    fill(ps[ClassifierModel::kBowWeight], static_cast<double>(config.vocab_size));
  } else {
    fill(ps[ClassifierModel::kEmbedding], 1.0);
    fill(ps[ClassifierModel::kHiddenWeight], static_cast<double>(config.embed_dim));
    fill(ps[ClassifierModel::kOutputWeight], static_cast<double>(config.hidden_dim));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Adapter

NoiseAdapter NoiseAdapter::fixed(TransitionMatrix matrix) {
  NoiseAdapter a;
  a.mode_ = AdapterMode::fixed;
  a.k_ = matrix.k();
  a.matrix_ = matrix.entries();
  return a;
}

NoiseAdapter NoiseAdapter::learnable(std::size_t k, double l2_coeff, L2Target target) {
  if (k < 2) throw ConfigError("adapter needs k >= 2");
  if (!(l2_coeff >= 0.0) || !std::isfinite(l2_coeff)) throw ConfigError("adapter l2 coefficient must be >= 0");
  NoiseAdapter a;
  a.mode_ = AdapterMode::learnable;
  a.k_ = k;
  a.matrix_.assign(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) a.matrix_[i * k + i] = 1.0;
  a.l2_coeff_ = l2_coeff;
  a.l2_target_ = target;
  return a;
}

std::vector<double>& NoiseAdapter::mutable_weights() {
  if (mode_ != AdapterMode::learnable) throw ConfigError("fixed adapter matrix is not trainable");
  return matrix_;
}

double NoiseAdapter::l2_term() const {
  if (mode_ != AdapterMode::learnable) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < k_; ++i)
    for (std::size_t j = 0; j < k_; ++j) {
      const double target = (l2_target_ == L2Target::identity && i == j) ? 1.0 : 0.0;
      const double d = matrix_[i * k_ + j] - target;
      sum += d * d;
    }
  return l2_coeff_ * sum;
}

// ---------------------------------------------------------------------------
// Loss

void LossConfig::validate() const {
  if (kind == LossKind::label_smoothing && !(smoothing >= 0.0 && smoothing < 1.0))
    throw ConfigError("label smoothing alpha must lie in [0,1)");
}

std::vector<double> smoothing_target(std::size_t k, ClassId label, double alpha) {
  std::vector<double> t(k, alpha / static_cast<double>(k));
  t[label] += 1.0 - alpha;
  return t;
}

namespace {

double clamped_log(double v) { return std::log(std::max(v, kLogClamp)); }

// Target distribution of one example; writes into `t`.
void fill_target(std::vector<double>& t, std::size_t k, ClassId label, const LossConfig& cfg) {
  t.assign(k, 0.0);
  if (cfg.kind == LossKind::label_smoothing) {
    const double share = cfg.smoothing / static_cast<double>(k);
    for (auto& x : t) x = share;
    t[label] += 1.0 - cfg.smoothing;
  } else {
    t[label] = 1.0;
  }
}

double target_loss(std::span<const double> v, std::span<const double> t) {
  double l = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j)
    if (t[j] != 0.0) l -= t[j] * clamped_log(v[j]);
  return l;
}

void softmax_inplace(std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& x : z) {
    x = std::exp(x - m);
    sum += x;
  }
  for (auto& x : z) x /= sum;
}

void log_softmax(std::span<const double> z, std::vector<double>& out) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double x : z) sum += std::exp(x - m);
  const double lse = m + std::log(sum);
  out.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
}

// Hidden activations of embed_mlp kept for the backward pass.
struct MlpCache {
  std::vector<double> mean;    // d
  std::vector<double> preact;  // h
  std::vector<double> act;     // h
};

void bow_logits(const ClassifierModel& model, std::span<const TokenId> tokens, std::vector<double>& z) {
  const auto& cfg = model.config();
  const auto k = cfg.num_classes;
  const auto v = cfg.vocab_size;
  const auto& w = model.params()[ClassifierModel::kBowWeight].values;
  const auto& b = model.params()[ClassifierModel::kBowBias].values;
  z.assign(b.begin(), b.end());
  for (TokenId t : tokens)
    for (std::size_t c = 0; c < k; ++c) z[c] += w[c * v + t];
}

void mlp_logits(const ClassifierModel& model, std::span<const TokenId> tokens, std::vector<double>& z, MlpCache& cache) {
  const auto& cfg = model.config();
  const auto k = cfg.num_classes;
  const auto d = cfg.embed_dim;
  const auto h = cfg.hidden_dim;
  const auto& ps = model.params();
  const auto& e = ps[ClassifierModel::kEmbedding].values;
  const auto& hw = ps[ClassifierModel::kHiddenWeight].values;
  const auto& hb = ps[ClassifierModel::kHiddenBias].values;
  const auto& ow = ps[ClassifierModel::kOutputWeight].values;
  const auto& ob = ps[ClassifierModel::kOutputBias].values;

  cache.mean.assign(d, 0.0);
  if (!tokens.empty()) {
    for (TokenId t : tokens)
      for (std::size_t i = 0; i < d; ++i) cache.mean[i] += e[t * d + i];
    const double inv = 1.0 / static_cast<double>(tokens.size());
    for (auto& x : cache.mean) x *= inv;
  }
  cache.preact.assign(hb.begin(), hb.end());
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t i = 0; i < d; ++i) cache.preact[r] += hw[r * d + i] * cache.mean[i];
  cache.act.resize(h);
  for (std::size_t r = 0; r < h; ++r) cache.act[r] = cache.preact[r] > 0.0 ? cache.preact[r] : 0.0;
  z.assign(ob.begin(), ob.end());
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t r = 0; r < h; ++r) z[c] += ow[c * h + r] * cache.act[r];
}

void compute_logits(const ClassifierModel& model, std::span<const TokenId> tokens, std::vector<double>& z,
                    MlpCache& cache) {
  const auto v = model.config().vocab_size;
  for (TokenId t : tokens)
    if (t >= v) throw ConfigError("token id " + std::to_string(t) + " >= model vocab_size " + std::to_string(v));
  if (model.config().arch == Arch::bow_linear)
    bow_logits(model, tokens, z);
  else
    mlp_logits(model, tokens, z, cache);
}

void check_adapter(const ClassifierModel& model, const NoiseAdapter* adapter) {
  if (adapter && adapter->k() != model.config().num_classes)
    throw ConfigError("adapter is " + std::to_string(adapter->k()) + "x" + std::to_string(adapter->k()) +
                      " but model has k=" + std::to_string(model.config().num_classes));
}

// Per-example evaluation of the output head. Given logits, produces the
// loss-space vector v and, when requested, dL/dz (and adds into dL/dW for a
// learnable adapter, scaled by `scale`).
struct HeadWorkspace {
  std::vector<double> p, logp, v, s, t, gv, gp, gs, gl;
};

double head_loss(std::span<const double> z, const NoiseAdapter* adapter, ClassId label, const LossConfig& cfg,
                 HeadWorkspace& ws, std::vector<double>* gz, std::vector<double>* gw, double scale) {
  const auto k = z.size();
  ws.p.assign(z.begin(), z.end());
  softmax_inplace(ws.p);
  fill_target(ws.t, k, label, cfg);

  const bool learnable = adapter && adapter->mode() == AdapterMode::learnable;
  if (!adapter) {
    ws.v = ws.p;
  } else if (!learnable) {
    const auto& T = adapter->matrix();
    ws.v.assign(k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) ws.v[j] += T[i * k + j] * ws.p[i];
  } else {
    const auto& W = adapter->matrix();
    log_softmax(z, ws.logp);
    ws.s.assign(k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) ws.s[j] += W[i * k + j] * ws.logp[i];
    ws.v = ws.s;
    softmax_inplace(ws.v);
  }
  const double l = target_loss(ws.v, ws.t);
  if (!gz) return l;

  ws.gv.assign(k, 0.0);
  for (std::size_t j = 0; j < k; ++j)
    if (ws.t[j] != 0.0 && ws.v[j] > kLogClamp) ws.gv[j] = -ws.t[j] / ws.v[j];

  gz->assign(k, 0.0);
  if (!learnable) {
    if (!adapter) {
      ws.gp = ws.gv;
    } else {
      const auto& T = adapter->matrix();
      ws.gp.assign(k, 0.0);
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) ws.gp[i] += T[i * k + j] * ws.gv[j];
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < k; ++i) dot += ws.p[i] * ws.gp[i];
    for (std::size_t i = 0; i < k; ++i) (*gz)[i] = ws.p[i] * (ws.gp[i] - dot);
  } else {
    const auto& W = adapter->matrix();
    double dot = 0.0;
    for (std::size_t j = 0; j < k; ++j) dot += ws.v[j] * ws.gv[j];
    ws.gs.resize(k);
    for (std::size_t j = 0; j < k; ++j) ws.gs[j] = ws.v[j] * (ws.gv[j] - dot);
    ws.gl.assign(k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        (*gw)[i * k + j] += scale * ws.logp[i] * ws.gs[j];
        ws.gl[i] += W[i * k + j] * ws.gs[j];
      }
    double total = 0.0;
    for (double g : ws.gl) total += g;
    for (std::size_t i = 0; i < k; ++i) (*gz)[i] = ws.gl[i] - ws.p[i] * total;
  }
  return l;
}

}  // namespace

double loss(std::span<const double> v, ClassId label, const LossConfig& config, double adapter_l2_term) {
  config.validate();
  if (label >= v.size()) throw ConfigError("loss: label out of range");
  std::vector<double> t;
  fill_target(t, v.size(), label, config);
  return target_loss(v, t) + adapter_l2_term;
}

std::vector<double> logits(const ClassifierModel& model, std::span<const TokenId> tokens) {
  std::vector<double> z;
  MlpCache cache;
  compute_logits(model, tokens, z, cache);
  return z;
}

std::vector<double> probabilities(const ClassifierModel& model, std::span<const TokenId> tokens) {
  auto z = logits(model, tokens);
  softmax_inplace(z);
  return z;
}

std::vector<std::vector<double>> forward(const ClassifierModel& model, std::span<const Example> batch) {
  std::vector<std::vector<double>> out;
  out.reserve(batch.size());
  for (const auto& ex : batch) out.push_back(probabilities(model, ex.tokens));
  return out;
}

std::vector<double> adapter_forward(std::span<const double> p, const NoiseAdapter& adapter) {
  const auto k = adapter.k();
  if (p.size() != k)
    throw ConfigError("adapter_forward: vector of length " + std::to_string(p.size()) + " for k=" + std::to_string(k));
  const auto& m = adapter.matrix();
  std::vector<double> q(k, 0.0);
  if (adapter.mode() == AdapterMode::fixed) {
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) q[j] += m[i * k + j] * p[i];
  } else {
    for (std::size_t i = 0; i < k; ++i) {
      const double lp = clamped_log(p[i]);
      for (std::size_t j = 0; j < k; ++j) q[j] += m[i * k + j] * lp;
    }
    softmax_inplace(q);
  }
  return q;
}

ClassId argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<ClassId>(best);
}

ClassId predict(const ClassifierModel& model, std::span<const TokenId> tokens) {
  return argmax(probabilities(model, tokens));
}

// ---------------------------------------------------------------------------
// Gradients

void backward(const ClassifierModel& model, const NoiseAdapter* adapter, std::span<const Sample> batch,
              const LossConfig& loss_config, Gradients& out) {
  loss_config.validate();
  check_adapter(model, adapter);
  const auto& cfg = model.config();
  const auto k = cfg.num_classes;

  out.params.resize(model.params().size());
  for (std::size_t s = 0; s < model.params().size(); ++s) out.params[s].assign(model.params()[s].values.size(), 0.0);
  const bool learnable = adapter && adapter->mode() == AdapterMode::learnable;
  if (learnable)
    out.adapter.assign(k * k, 0.0);
  else
    out.adapter.clear();
  out.loss = 0.0;
  if (batch.empty()) return;

  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<double> z, gz;
  MlpCache cache;
  HeadWorkspace ws;
  std::vector<double> ga, gm;

  for (const auto& sample : batch) {
    if (sample.label >= k) throw ConfigError("backward: label out of range");
    compute_logits(model, sample.tokens, z, cache);
    out.loss += scale * head_loss(z, adapter, sample.label, loss_config, ws, &gz, &out.adapter, scale);
    for (auto& g : gz) g *= scale;

    if (cfg.arch == Arch::bow_linear) {
      const auto v = cfg.vocab_size;
      auto& gw = out.params[ClassifierModel::kBowWeight];
      auto& gb = out.params[ClassifierModel::kBowBias];
      for (std::size_t c = 0; c < k; ++c) gb[c] += gz[c];
      for (TokenId t : sample.tokens)
        for (std::size_t c = 0; c < k; ++c) gw[c * v + t] += gz[c];
    } else {
      const auto d = cfg.embed_dim;
      const auto h = cfg.hidden_dim;
      const auto& ps = model.params();
      const auto& hw = ps[ClassifierModel::kHiddenWeight].values;
      const auto& ow = ps[ClassifierModel::kOutputWeight].values;
      auto& g_emb = out.params[ClassifierModel::kEmbedding];
      auto& g_hw = out.params[ClassifierModel::kHiddenWeight];
      auto& g_hb = out.params[ClassifierModel::kHiddenBias];
      auto& g_ow = out.params[ClassifierModel::kOutputWeight];
      auto& g_ob = out.params[ClassifierModel::kOutputBias];

      ga.assign(h, 0.0);
      for (std::size_t c = 0; c < k; ++c) {
        g_ob[c] += gz[c];
        for (std::size_t r = 0; r < h; ++r) {
          g_ow[c * h + r] += gz[c] * cache.act[r];
          ga[r] += ow[c * h + r] * gz[c];
        }
      }
      for (std::size_t r = 0; r < h; ++r)
        if (cache.preact[r] <= 0.0) ga[r] = 0.0;
      gm.assign(d, 0.0);
      for (std::size_t r = 0; r < h; ++r) {
        if (ga[r] == 0.0) continue;
        g_hb[r] += ga[r];
        for (std::size_t i = 0; i < d; ++i) {
          g_hw[r * d + i] += ga[r] * cache.mean[i];
          gm[i] += hw[r * d + i] * ga[r];
        }
      }
      if (!sample.tokens.empty()) {
        const double inv = 1.0 / static_cast<double>(sample.tokens.size());
        for (TokenId t : sample.tokens)
          for (std::size_t i = 0; i < d; ++i) g_emb[t * d + i] += gm[i] * inv;
      }
    }
  }

  if (learnable) {
    const auto& w = adapter->matrix();
    const double lambda = adapter->l2_coeff();
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const double target = (adapter->l2_target() == L2Target::identity && i == j) ? 1.0 : 0.0;
        out.adapter[i * k + j] += 2.0 * lambda * (w[i * k + j] - target);
      }
    out.loss += adapter->l2_term();
  }
}

Gradients backward(const ClassifierModel& model, const NoiseAdapter* adapter, std::span<const Sample> batch,
                   const LossConfig& loss_config) {
  Gradients g;
  backward(model, adapter, batch, loss_config, g);
  return g;
}

std::vector<double> per_example_loss(const ClassifierModel& model, const NoiseAdapter* adapter,
                                     std::span<const Sample> batch, const LossConfig& loss_config) {
  loss_config.validate();
  check_adapter(model, adapter);
  std::vector<double> out;
  out.reserve(batch.size());
  std::vector<double> z;
  MlpCache cache;
  HeadWorkspace ws;
  for (const auto& sample : batch) {
    if (sample.label >= model.config().num_classes) throw ConfigError("loss: label out of range");
    compute_logits(model, sample.tokens, z, cache);
    out.push_back(head_loss(z, adapter, sample.label, loss_config, ws, nullptr, nullptr, 0.0));
  }
  return out;
}

double batch_loss(const ClassifierModel& model, const NoiseAdapter* adapter, std::span<const Sample> batch,
                  const LossConfig& loss_config) {
  const auto losses = per_example_loss(model, adapter, batch, loss_config);
  double mean = 0.0;
  const double scale = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());
  for (double l : losses) mean += scale * l;
  return mean + (adapter ? adapter->l2_term() : 0.0);
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string checkpoint_json(const ClassifierModel& model) {
  json doc;
  doc["format"] = "lnlab-checkpoint";
  doc["version"] = 1;
  doc["config"] = model.config();
  json params = json::array();
  for (const auto& p : model.params()) params.push_back({{"name", p.name}, {"shape", p.shape}, {"values", p.values}});
  doc["params"] = std::move(params);
  return doc.dump();
}

ClassifierModel model_from_checkpoint_json(std::string_view text) {
  try {
    const json doc = json::parse(text);
    if (doc.value("format", "") != "lnlab-checkpoint") throw FormatError("not an lnlab checkpoint");
    ClassifierModel model(doc.at("config").get<ClassifierConfig>());
    const auto& params = doc.at("params");
    if (params.size() != model.params().size()) throw FormatError("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& slot = model.params()[i];
      if (params[i].at("name").get<std::string>() != slot.name ||
          params[i].at("shape").get<std::vector<std::size_t>>() != slot.shape)
        throw FormatError("checkpoint parameter '" + slot.name + "' has unexpected name or shape");
      auto values = params[i].at("values").get<std::vector<double>>();
      if (values.size() != slot.values.size()) throw FormatError("checkpoint parameter '" + slot.name + "' size mismatch");
      slot.values = std::move(values);
    }
    return model;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const ClassifierModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << checkpoint_json(model) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ClassifierModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_checkpoint_json(ss.str());
}

}  // namespace lnlab
