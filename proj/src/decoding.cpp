#include "vord/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace vord {

std::string to_string(SamplingStrategy::Kind kind) {
  switch (kind) {
    case SamplingStrategy::Kind::kGreedy: return "greedy";
    case SamplingStrategy::Kind::kMultinomial: return "multinomial";
    case SamplingStrategy::Kind::kTopK: return "top_k";
    case SamplingStrategy::Kind::kNucleus: return "nucleus";
  }
  return "unknown";
}

SamplingStrategy::Kind strategy_kind_from_string(const std::string& name) {
  if (name == "greedy") return SamplingStrategy::Kind::kGreedy;
  if (name == "multinomial") return SamplingStrategy::Kind::kMultinomial;
  if (name == "top_k") return SamplingStrategy::Kind::kTopK;
  if (name == "nucleus") return SamplingStrategy::Kind::kNucleus;
  throw VordError("invalid-config", "unknown sampling strategy '" + name + "'");
}

std::string to_string(Termination t) { return t == Termination::kEos ? "eos" : "max_len"; }

void DecodeConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw VordError("invalid-config", "beta must lie in [0,1]");
  if (!margin.adaptive && !(margin.fixed >= 0.0 && margin.fixed <= 1.0)) {
    throw VordError("invalid-config", "fixed margin must lie in [0,1]");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw VordError("invalid-config", "temperature must be positive");
  }
  if (max_new_tokens < 1) throw VordError("invalid-config", "max_new_tokens must be >= 1");
  if (strategy.kind == SamplingStrategy::Kind::kTopK && strategy.top_k < 1) {
    throw VordError("invalid-config", "top_k must be >= 1");
  }
  if (strategy.kind == SamplingStrategy::Kind::kNucleus &&
      !(strategy.top_p > 0.0 && strategy.top_p <= 1.0)) {
    throw VordError("invalid-config", "top_p must lie in (0,1]");
  }
}

std::vector<bool> ordinal_mask(const TokenDistribution& p_clean, const TokenDistribution& p_mod,
                               double m) {
  if (p_clean.size() != p_mod.size()) {
    throw VordError("vocab-mismatch", "clean and modified distributions differ in length");
  }
  std::vector<bool> mask(p_clean.size());
  for (std::size_t t = 0; t < mask.size(); ++t) mask[t] = p_clean[t] + m >= p_mod[t];
  return mask;
}

std::vector<bool> plausibility_set(const TokenDistribution& p_clean, double beta) {
  const double peak = p_clean.probs.empty()
                          ? 0.0
                          : *std::max_element(p_clean.probs.begin(), p_clean.probs.end());
  const double threshold = beta * peak;
  std::vector<bool> keep(p_clean.size());
  for (std::size_t t = 0; t < keep.size(); ++t) keep[t] = p_clean[t] >= threshold;
  return keep;
}

namespace {

TokenDistribution masked_copy(const TokenDistribution& p, const std::vector<bool>& keep) {
  TokenDistribution out;
  out.masked = true;
  out.probs.resize(p.size());
  for (std::size_t t = 0; t < p.size(); ++t) out.probs[t] = keep[t] ? p[t] : 0.0;
  return out;
}

}  // namespace

TokenDistribution plausibility_masked(const TokenDistribution& p_clean, double beta) {
  return normalize(masked_copy(p_clean, plausibility_set(p_clean, beta)));
}

VordStepResult vord_step(const TokenDistribution& p_clean, const TokenDistribution& p_mod,
                         double m, double beta) {
  VordStepResult r;
  r.ordinal_mask = ordinal_mask(p_clean, p_mod, m);
  r.plausible_set = plausibility_set(p_clean, beta);
  std::vector<bool> accepted(p_clean.size());
  for (std::size_t t = 0; t < accepted.size(); ++t) {
    accepted[t] = r.ordinal_mask[t] && r.plausible_set[t];
  }
  const TokenDistribution masked = masked_copy(p_clean, accepted);
  if (masked.sum() > 0.0) {
    r.final_dist = normalize(masked);
  } else {
    r.final_dist = normalize(masked_copy(p_clean, r.plausible_set));
    r.fallback_used = true;
  }
  return r;
}

namespace {

// Indices sorted by descending probability, lowest index first on ties.
std::vector<std::size_t> ranked(const TokenDistribution& dist) {
  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
  return order;
}

TokenId draw(const std::vector<double>& weights, Rng& rng) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  const double target = rng.uniform() * total;
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last_positive = i;
    cumulative += weights[i];
    if (target < cumulative) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last_positive);
}

}  // namespace

TokenId sample(const TokenDistribution& dist, const SamplingStrategy& strategy, Rng& rng) {
  if (dist.probs.empty()) throw VordError("empty-support", "cannot sample from empty vocabulary");
  switch (strategy.kind) {
    case SamplingStrategy::Kind::kGreedy:
      return static_cast<TokenId>(dist.argmax());
    case SamplingStrategy::Kind::kMultinomial:
      return draw(dist.probs, rng);
    case SamplingStrategy::Kind::kTopK: {
      const auto order = ranked(dist);
      std::vector<double> w(dist.size(), 0.0);
      const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(strategy.top_k),
                                                  order.size());
      for (std::size_t i = 0; i < k; ++i) w[order[i]] = dist[order[i]];
      return draw(w, rng);
    }
    case SamplingStrategy::Kind::kNucleus: {
      const auto order = ranked(dist);
      std::vector<double> w(dist.size(), 0.0);
      const double target = strategy.top_p * dist.sum();
      double cumulative = 0.0;
      for (std::size_t idx : order) {
        w[idx] = dist[idx];
        cumulative += dist[idx];
        if (cumulative >= target) break;
      }
      return draw(w, rng);
    }
  }
  return 0;
}

VisualPair make_visual_pair(const VisualEncoder& encoder, const ImageTensor& v,
                            const CorruptionSpec& corruption, const ImageTensor* partner,
                            const MarginMode& mode, Rng& rng) {
  VisualPair pair;
  pair.clean = encoder.encode(v);
  auto modified = apply_corruption(corruption, v, partner, rng);
  pair.modified = encoder.encode(modified.image);
  pair.lambda = modified.lambda;
  const double m = mode.adaptive ? adaptive_margin(pair.clean, pair.modified) : mode.fixed;
  pair.margin = std::clamp(m, 0.0, 1.0);
  return pair;
}

namespace {

using PairProvider = std::function<const VisualPair&(int step)>;

GenerationTrace run_loop(const ConditionalModel& model, const PairProvider& pair_for_step,
                         const VisualEmbedding* clean_only, std::span<const TokenId> prompt,
                         const DecodeConfig& config, Rng& sampling_rng) {
  config.validate();
  if (prompt.empty()) throw VordError("invalid-prompt", "prompt must be non-empty");
  const Vocabulary& vocab = model.vocabulary();
  vocab.validate();

  GenerationTrace trace;
  TokenSequence prefix{vocab.bos_id};
  for (int step = 0; step < config.max_new_tokens; ++step) {
    StepRecord rec;
    rec.step = step;
    if (config.vord_enabled) {
      const VisualPair& pair = pair_for_step(step);
      rec.p_clean = softmax(model.next_token_logits(pair.clean, prompt, prefix),
                            config.temperature);
      rec.p_mod = softmax(model.next_token_logits(pair.modified, prompt, prefix),
                          config.temperature);
      rec.margin = pair.margin;
      auto r = vord_step(rec.p_clean, rec.p_mod, rec.margin, config.beta);
      rec.ordinal_mask = std::move(r.ordinal_mask);
      rec.plausible_set = std::move(r.plausible_set);
      rec.final_dist = std::move(r.final_dist);
      rec.fallback_used = r.fallback_used;
      if (step == 0) {
        trace.margin = pair.margin;
        trace.lambda = pair.lambda;
      }
    } else {
      rec.p_clean = softmax(model.next_token_logits(*clean_only, prompt, prefix),
                            config.temperature);
      rec.ordinal_mask.assign(rec.p_clean.size(), true);
      rec.plausible_set = plausibility_set(rec.p_clean, config.beta);
      rec.final_dist = plausibility_masked(rec.p_clean, config.beta);
    }
    if (static_cast<int>(rec.p_clean.size()) != vocab.size) {
      throw VordError("vocab-mismatch", "model logits do not match its vocabulary");
    }
    rec.chosen = sample(rec.final_dist, config.strategy, sampling_rng);
    trace.tokens.push_back(rec.chosen);
    prefix.push_back(rec.chosen);
    const bool eos = rec.chosen == vocab.eos_id;
    trace.records.push_back(std::move(rec));
    if (eos) {
      trace.terminated_by = Termination::kEos;
      return trace;
    }
  }
  trace.terminated_by = Termination::kMaxLen;
  return trace;
}

}  // namespace

GenerationTrace generate_from_pair(const ConditionalModel& model, const VisualPair& pair,
                                   std::span<const TokenId> prompt, const DecodeConfig& config,
                                   Rng& sampling_rng) {
  return run_loop(
      model, [&](int) -> const VisualPair& { return pair; }, &pair.clean, prompt, config,
      sampling_rng);
}

GenerationTrace generate(const ConditionalModel& model, const VisualEncoder& encoder,
                         const ImageTensor& v, const CorruptionSpec& corruption,
                         const ImageTensor* partner, std::span<const TokenId> prompt,
                         const DecodeConfig& config, const Rng& rng) {
  config.validate();
  Rng corruption_rng = rng.split(0);
  Rng sampling_rng = rng.split(1);
  if (!config.vord_enabled) {
    const VisualEmbedding clean = encoder.encode(v);
    return run_loop(
        model, [](int) -> const VisualPair& { throw VordError("internal", "no pair"); }, &clean,
        prompt, config, sampling_rng);
  }
  VisualPair pair =
      make_visual_pair(encoder, v, corruption, partner, config.margin, corruption_rng);
  int built_for = 0;
  return run_loop(
      model,
      [&](int step) -> const VisualPair& {
        if (corruption.resample_per_step && step != built_for) {
          auto modified = apply_corruption(corruption, v, partner, corruption_rng);
          pair.modified = encoder.encode(modified.image);
          pair.lambda = modified.lambda;
          if (config.margin.adaptive) {
            pair.margin = std::clamp(adaptive_margin(pair.clean, pair.modified), 0.0, 1.0);
          }
          built_for = step;
        }
        return pair;
      },
      &pair.clean, prompt, config, sampling_rng);
}

}  // namespace vord
