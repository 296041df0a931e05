#include "lnlab/tapt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lnlab/error.hpp"
#include "lnlab/optim.hpp"
#include "lnlab/rng.hpp"

namespace lnlab {

void TaptConfig::validate() const {
  if (!(mask_prob > 0.0 && mask_prob < 1.0)) throw ConfigError("tapt: mask_prob must lie in (0,1)");
  if (!(learning_rate > 0.0)) throw ConfigError("tapt: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("tapt: batch_size must be >= 1");
}

namespace {

struct MaskedDoc {
  std::vector<TokenId> context;
  std::vector<TokenId> targets;
};

// Masks each token with probability p. Consumes one draw per token so the
// stream does not depend on the outcome of earlier documents.
MaskedDoc mask_document(std::span<const TokenId> tokens, double p, Rng& rng) {
  MaskedDoc doc;
  for (TokenId t : tokens) {
    if (rng.bernoulli(p))
      doc.targets.push_back(t);
    else
      doc.context.push_back(t);
  }
  return doc;
}

class MaskedPredictor {
 public:
  MaskedPredictor(std::size_t vocab, std::size_t dim, std::uint64_t seed)
      : vocab_(vocab), dim_(dim), weight_(vocab * dim), bias_(vocab, 0.0) {
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (auto& w : weight_) w = rng.normal() * scale;
  }

  std::vector<double>& weight() { return weight_; }
  std::vector<double>& bias() { return bias_; }

  void logits(std::span<const double> context_mean, std::vector<double>& out) const {
    out.assign(bias_.begin(), bias_.end());
    for (std::size_t r = 0; r < vocab_; ++r) {
      const double* w = weight_.data() + r * dim_;
      double acc = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) acc += w[i] * context_mean[i];
      out[r] += acc;
    }
  }

  const std::vector<double>& weight_values() const { return weight_; }

 private:
  std::size_t vocab_;
  std::size_t dim_;
  std::vector<double> weight_;
  std::vector<double> bias_;
};

void context_mean(const std::vector<double>& embedding, std::size_t dim, std::span<const TokenId> context,
                  std::vector<double>& out) {
  out.assign(dim, 0.0);
  for (TokenId t : context)
    for (std::size_t i = 0; i < dim; ++i) out[i] += embedding[t * dim + i];
  const double inv = 1.0 / static_cast<double>(context.size());
  for (auto& x : out) x *= inv;
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

}  // namespace

TaptResult tapt_pretrain(const ClassifierModel& model, const LabeledDataset& corpus, const TaptConfig& config) {
  config.validate();
  if (model.config().arch != Arch::embed_mlp)
    throw ConfigError("tapt_pretrain: unsupported architecture '" + std::string(arch_name(model.config().arch)) +
                      "' (requires embed_mlp)");
  const auto vocab = model.config().vocab_size;
  const auto dim = model.config().embed_dim;
  if (corpus.vocab().size() > vocab) throw ConfigError("tapt_pretrain: corpus vocabulary exceeds model vocab_size");

  TaptResult result{model, {}, 0.0, 0};
  auto& embedding = result.model.params()[ClassifierModel::kEmbedding].values;
  if (config.pretrain_epochs == 0) return result;

  MaskedPredictor predictor(vocab, dim, derive_seed(config.seed, "projection"));
  OptimizerConfig opt_cfg;
  opt_cfg.learning_rate = config.learning_rate;
  Optimizer optimizer(opt_cfg);

  Rng rng(config.seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<double> g_embedding(embedding.size());
  std::vector<double> g_weight(predictor.weight().size());
  std::vector<double> g_bias(vocab);
  std::vector<double> mean, probs, g_mean(dim);
  std::vector<MaskedDoc> batch;

  for (std::size_t epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      const auto end = std::min(order.size(), start + config.batch_size);
      std::size_t n_targets = 0;
      for (auto i = start; i < end; ++i) {
        auto doc = mask_document(corpus[order[i]].tokens, config.mask_prob, rng);
        if (doc.targets.empty() || doc.context.empty()) continue;
        n_targets += doc.targets.size();
        batch.push_back(std::move(doc));
      }
      if (batch.empty()) continue;

      std::fill(g_embedding.begin(), g_embedding.end(), 0.0);
      std::fill(g_weight.begin(), g_weight.end(), 0.0);
      std::fill(g_bias.begin(), g_bias.end(), 0.0);
      const double scale = 1.0 / static_cast<double>(n_targets);
      const auto& w = predictor.weight_values();

      for (const auto& doc : batch) {
        context_mean(embedding, dim, doc.context, mean);
        predictor.logits(mean, probs);
        softmax_inplace(probs);
        // Every masked position shares the context, so the logit gradient is
        // (n_masked * p - counts(targets)) / n_targets.
        const double n_masked = static_cast<double>(doc.targets.size());
        for (TokenId t : doc.targets) loss_sum -= std::log(std::max(probs[t], 1e-12));
        loss_count += doc.targets.size();
        for (auto& p : probs) p *= n_masked;
        for (TokenId t : doc.targets) probs[t] -= 1.0;
        for (auto& p : probs) p *= scale;

        std::fill(g_mean.begin(), g_mean.end(), 0.0);
        for (std::size_t r = 0; r < vocab; ++r) {
          const double g = probs[r];
          if (g == 0.0) continue;
          g_bias[r] += g;
          double* gw = g_weight.data() + r * dim;
          const double* wr = w.data() + r * dim;
          for (std::size_t i = 0; i < dim; ++i) {
            gw[i] += g * mean[i];
            g_mean[i] += wr[i] * g;
          }
        }
        const double inv = 1.0 / static_cast<double>(doc.context.size());
        for (TokenId t : doc.context)
          for (std::size_t i = 0; i < dim; ++i) g_embedding[t * dim + i] += g_mean[i] * inv;
      }

      std::vector<double>* params[] = {&embedding, &predictor.weight(), &predictor.bias()};
      const std::vector<double>* grads[] = {&g_embedding, &g_weight, &g_bias};
      optimizer.step(params, grads);
    }
    result.epoch_loss.push_back(loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0);
  }

  // Fresh masking pass to score the trained predictor.
  Rng eval_rng(derive_seed(config.seed, "evaluation"));
  std::size_t hits = 0;
  for (const auto& ex : corpus.examples()) {
    auto doc = mask_document(ex.tokens, config.mask_prob, eval_rng);
    if (doc.targets.empty() || doc.context.empty()) continue;
    context_mean(embedding, dim, doc.context, mean);
    predictor.logits(mean, probs);
    const auto guess = static_cast<TokenId>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    for (TokenId t : doc.targets) hits += (t == guess);
    result.masked_evaluated += doc.targets.size();
  }
  result.masked_accuracy =
      result.masked_evaluated ? static_cast<double>(hits) / static_cast<double>(result.masked_evaluated) : 0.0;
  return result;
}

}  // namespace lnlab
