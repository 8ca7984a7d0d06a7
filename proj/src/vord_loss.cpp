#include "vord/vord_loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vord {

void LossConfig::validate() const {
  if (!(psi > 0.0) || !std::isfinite(psi)) throw VordError("invalid-config", "psi must be > 0");
  if (!margin.adaptive && !(margin.fixed >= 0.0 && margin.fixed <= 1.0)) {
    throw VordError("invalid-config", "fixed margin must lie in [0,1]");
  }
}

namespace {

// Token indices the hinge is evaluated on.
std::vector<std::size_t> hinge_support(std::size_t vocab, std::optional<TokenId> target) {
  if (target) return {static_cast<std::size_t>(*target)};
  std::vector<std::size_t> all(vocab);
  std::iota(all.begin(), all.end(), 0);
  return all;
}

}  // namespace

double vord_penalty(const TokenDistribution& p_mod, const TokenDistribution& p_clean, double m,
                    double psi, Reduction reduction, std::optional<TokenId> target) {
  if (p_mod.size() != p_clean.size()) {
    throw VordError("vocab-mismatch", "clean and modified distributions differ in length");
  }
  if (target && (*target < 0 || static_cast<std::size_t>(*target) >= p_clean.size())) {
    throw VordError("invalid-target", "target token out of range");
  }
  const auto support = hinge_support(p_clean.size(), target);
  double total = 0.0;
  for (std::size_t t : support) {
    const double g = p_mod[t] - p_clean[t] + m;
    if (g > 0.0) total += std::pow(g, psi);
  }
  if (reduction == Reduction::kMean && !support.empty()) {
    total /= static_cast<double>(support.size());
  }
  return total;
}

double cross_entropy(const TokenDistribution& p_clean, TokenId target) {
  if (target < 0 || static_cast<std::size_t>(target) >= p_clean.size()) {
    throw VordError("invalid-target", "target token out of range");
  }
  const double p = p_clean[static_cast<std::size_t>(target)];
  if (p_clean.masked && p == 0.0) {
    throw VordError("log-zero", "target masked out of the distribution");
  }
  return -std::log(std::max(p, kProbabilityFloor));
}

LossTerms total_loss(const TokenDistribution& p_clean, const TokenDistribution& p_mod,
                     TokenId target, double m, const LossConfig& config) {
  config.validate();
  LossTerms terms;
  terms.ce = cross_entropy(p_clean, target);
  terms.vord = vord_penalty(p_mod, p_clean, m, config.psi, config.reduction,
                            config.target_only ? std::optional<TokenId>(target) : std::nullopt);
  return terms;
}

namespace {

// dL/dh from dL/dp through the softmax Jacobian p_j (delta_ij - p_i).
std::vector<double> softmax_backward(const TokenDistribution& p, const std::vector<double>& dp) {
  double inner = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) inner += p[i] * dp[i];
  std::vector<double> dh(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) dh[j] = p[j] * (dp[j] - inner);
  return dh;
}

struct ExampleForward {
  TokenDistribution p_clean;
  TokenDistribution p_mod;
};

ExampleForward forward(const TrainableModel& model, const TrainingExample& ex) {
  return {softmax(model.next_token_logits(ex.clean, ex.prompt, ex.prefix)),
          softmax(model.next_token_logits(ex.modified, ex.prompt, ex.prefix))};
}

double position_weight(const LossConfig& config, std::size_t batch) {
  return config.reduction == Reduction::kMean ? 1.0 / static_cast<double>(batch) : 1.0;
}

}  // namespace

ObjectiveValue evaluate_objective(const TrainableModel& model,
                                  std::span<const TrainingExample> batch,
                                  const LossConfig& config) {
  config.validate();
  ObjectiveValue value;
  if (batch.empty()) return value;
  const double w = position_weight(config, batch.size());
  std::size_t violations = 0, pairs = 0;
  for (const auto& ex : batch) {
    const auto fw = forward(model, ex);
    const auto terms = total_loss(fw.p_clean, fw.p_mod, ex.target, ex.margin, config);
    value.ce += w * terms.ce;
    value.vord += w * terms.vord;
    for (std::size_t t : hinge_support(fw.p_clean.size(),
                                       config.target_only ? std::optional<TokenId>(ex.target)
                                                          : std::nullopt)) {
      if (fw.p_mod[t] - fw.p_clean[t] + ex.margin > 0.0) ++violations;
      ++pairs;
    }
  }
  value.violation_rate = pairs ? static_cast<double>(violations) / static_cast<double>(pairs) : 0.0;
  return value;
}

std::vector<double> loss_gradient(const TrainableModel& model,
                                  std::span<const TrainingExample> batch,
                                  const LossConfig& config, ObjectiveValue* value) {
  config.validate();
  std::vector<double> grad(model.num_parameters(), 0.0);
  if (batch.empty()) return grad;
  const double w = position_weight(config, batch.size());
  ObjectiveValue acc;
  std::size_t violations = 0, pairs = 0;

  for (const auto& ex : batch) {
    const auto fw = forward(model, ex);
    const std::size_t vocab = fw.p_clean.size();
    const auto terms = total_loss(fw.p_clean, fw.p_mod, ex.target, ex.margin, config);
    acc.ce += w * terms.ce;
    acc.vord += w * terms.vord;

    std::vector<double> dp_clean(vocab, 0.0), dp_mod(vocab, 0.0);
    const auto target = static_cast<std::size_t>(ex.target);
    if (fw.p_clean[target] >= kProbabilityFloor) dp_clean[target] = -w / fw.p_clean[target];

    const auto support = hinge_support(
        vocab, config.target_only ? std::optional<TokenId>(ex.target) : std::nullopt);
    const double hinge_w =
        config.reduction == Reduction::kMean ? w / static_cast<double>(support.size()) : w;
    for (std::size_t t : support) {
      const double g = fw.p_mod[t] - fw.p_clean[t] + ex.margin;
      ++pairs;
      if (g <= 0.0) continue;
      ++violations;
      const double slope = hinge_w * config.psi * std::pow(g, config.psi - 1.0);
      dp_mod[t] += slope;
      dp_clean[t] -= slope;
    }

    const auto dh_clean = softmax_backward(fw.p_clean, dp_clean);
    const auto dh_mod = softmax_backward(fw.p_mod, dp_mod);
    model.accumulate_logit_vjp(ex.clean, ex.prompt, ex.prefix, dh_clean, grad);
    model.accumulate_logit_vjp(ex.modified, ex.prompt, ex.prefix, dh_mod, grad);
  }
  acc.violation_rate = pairs ? static_cast<double>(violations) / static_cast<double>(pairs) : 0.0;
  if (value) *value = acc;
  return grad;
}

namespace {

std::vector<std::size_t> permutation(std::size_t n, Rng rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::size_t partner_index(const std::vector<std::size_t>& perm, std::size_t i) {
  const std::size_t n = perm.size();
  if (n < 2) return i;
  return perm[i] == i ? (i + 1) % n : perm[i];
}

TrainingExample make_example(const VisualEncoder& encoder, const TrainingSample& sample,
                             const ImageTensor& partner, const CorruptionSpec& corruption,
                             const MarginMode& margin, Rng rng) {
  VisualPair pair = make_visual_pair(encoder, sample.image, corruption, &partner, margin, rng);
  return {std::move(pair.clean), std::move(pair.modified), pair.margin,
          sample.prompt,         sample.prefix,            sample.target};
}

}  // namespace

std::vector<TrainingExample> make_examples(const VisualEncoder& encoder,
                                           std::span<const TrainingSample> dataset,
                                           const CorruptionSpec& corruption,
                                           const MarginMode& margin, const Rng& rng) {
  const auto perm = permutation(dataset.size(), rng.split(0));
  std::vector<TrainingExample> out;
  out.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out.push_back(make_example(encoder, dataset[i], dataset[partner_index(perm, i)].image,
                               corruption, margin, rng.split(1 + i)));
  }
  return out;
}

TrainResult train(TrainableModel& model, const VisualEncoder& encoder,
                  std::span<const TrainingSample> dataset, const TrainConfig& config,
                  const Rng& rng, const HeldoutEvaluator& heldout) {
  config.loss.validate();
  config.corruption.validate();
  if (dataset.empty()) throw VordError("invalid-dataset", "training set is empty");
  if (config.epochs < 0 || config.batch_size < 1) {
    throw VordError("invalid-config", "epochs must be >= 0 and batch_size >= 1");
  }
  if (!(config.learning_rate >= 0.0)) throw VordError("invalid-config", "learning rate < 0");

  TrainResult result;
  result.state.learning_rate = config.learning_rate;
  std::vector<double> theta(model.parameters().begin(), model.parameters().end());

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const Rng epoch_rng = rng.split(static_cast<std::uint64_t>(epoch));
    const auto order = permutation(dataset.size(), epoch_rng.split(0));
    const auto partners = permutation(dataset.size(), epoch_rng.split(1));
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<TrainingExample> batch;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        batch.push_back(make_example(encoder, dataset[i],
                                     dataset[partner_index(partners, i)].image, config.corruption,
                                     config.loss.margin, epoch_rng.split(2 + i)));
      }
      ObjectiveValue value;
      const auto grad = loss_gradient(model, batch, config.loss, &value);
      if (!std::isfinite(value.ce) || !std::isfinite(value.vord)) {
        throw VordError("diverged", "non-finite loss at epoch " + std::to_string(epoch));
      }
      for (std::size_t p = 0; p < theta.size(); ++p) {
        theta[p] -= config.learning_rate * grad[p];
        if (!std::isfinite(theta[p])) throw VordError("diverged", "non-finite parameter");
      }
      model.set_parameters(theta);
      ++result.state.step_count;
      rec.ce_loss += value.ce;
      rec.vord_loss += value.vord;
      rec.violation_rate += value.violation_rate;
      ++batches;
    }
    rec.ce_loss /= static_cast<double>(batches);
    rec.vord_loss /= static_cast<double>(batches);
    rec.violation_rate /= static_cast<double>(batches);
    if (heldout) {
      const auto metrics = heldout(model);
      rec.heldout_accuracy = metrics.accuracy;
      rec.heldout_ece = metrics.ece;
    }
    result.curve.push_back(rec);
  }
  result.state.parameters = std::move(theta);
  return result;
}

}  // namespace vord
