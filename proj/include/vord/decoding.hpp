#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vord/core_types.hpp"
#include "vord/corruption.hpp"
#include "vord/rng.hpp"
#include "vord/vision.hpp"

namespace vord {

/// Next-token model conditioned on visual tokens, a prompt and the generated
/// prefix (which starts with BOS). Must be deterministic and thread-safe.
class ConditionalModel {
 public:
  virtual ~ConditionalModel() = default;
  virtual LogitsVector next_token_logits(const VisualEmbedding& visual,
                                         std::span<const TokenId> prompt,
                                         std::span<const TokenId> prefix) const = 0;
  virtual const Vocabulary& vocabulary() const = 0;
};

struct MarginMode {
  bool adaptive = true;
  double fixed = 0.0;

  static MarginMode make_adaptive() { return {true, 0.0}; }
  static MarginMode make_fixed(double m) { return {false, m}; }
};

struct SamplingStrategy {
  enum class Kind { kGreedy, kMultinomial, kTopK, kNucleus };
  Kind kind = Kind::kNucleus;
  int top_k = 0;
  double top_p = 1.0;

  static SamplingStrategy greedy() { return {Kind::kGreedy, 0, 1.0}; }
  static SamplingStrategy multinomial() { return {Kind::kMultinomial, 0, 1.0}; }
  static SamplingStrategy with_top_k(int k) { return {Kind::kTopK, k, 1.0}; }
  static SamplingStrategy nucleus(double p) { return {Kind::kNucleus, 0, p}; }
};

std::string to_string(SamplingStrategy::Kind kind);
SamplingStrategy::Kind strategy_kind_from_string(const std::string& name);

struct DecodeConfig {
  double beta = 0.2;
  MarginMode margin = MarginMode::make_adaptive();
  double temperature = 1.0;
  SamplingStrategy strategy = SamplingStrategy::nucleus(1.0);
  int max_new_tokens = 64;
  bool vord_enabled = true;

  /// Throws "invalid-config".
  void validate() const;
};

struct StepRecord {
  int step = 0;
  TokenDistribution p_clean;
  TokenDistribution p_mod;  // empty when VORD is disabled
  double margin = 0.0;
  std::vector<bool> ordinal_mask;
  std::vector<bool> plausible_set;
  TokenDistribution final_dist;
  TokenId chosen = 0;
  bool fallback_used = false;
};

enum class Termination { kEos, kMaxLen };
std::string to_string(Termination t);

struct GenerationTrace {
  std::vector<StepRecord> records;
  TokenSequence tokens;
  Termination terminated_by = Termination::kMaxLen;
  double margin = 0.0;                 // margin of the first (or only) modified image
  std::optional<double> lambda;        // mixup weight of the first modified image
};

/// Entry t is true iff p_clean[t] + m >= p_mod[t]. Throws "vocab-mismatch".
std::vector<bool> ordinal_mask(const TokenDistribution& p_clean, const TokenDistribution& p_mod,
                               double m);

/// Entry t is true iff p_clean[t] >= beta * max_w p_clean[w].
std::vector<bool> plausibility_set(const TokenDistribution& p_clean, double beta);

struct VordStepResult {
  TokenDistribution final_dist;
  std::vector<bool> ordinal_mask;
  std::vector<bool> plausible_set;
  bool fallback_used = false;
};

/// Keeps p_clean on ordinal AND plausible tokens and renormalizes. When that
/// empties the support, falls back to p_clean on the plausible set alone.
VordStepResult vord_step(const TokenDistribution& p_clean, const TokenDistribution& p_mod,
                         double m, double beta);

/// p_clean restricted to the plausible set, renormalized (regular decoding).
TokenDistribution plausibility_masked(const TokenDistribution& p_clean, double beta);

TokenId sample(const TokenDistribution& dist, const SamplingStrategy& strategy, Rng& rng);

/// Clean and modified visual inputs for one decoding run.
struct VisualPair {
  VisualEmbedding clean;
  VisualEmbedding modified;
  double margin = 0.0;
  std::optional<double> lambda;
};

/// Builds v-hat with `corruption` (partner used only for mixup) and computes
/// the margin per `mode`, capped to [0,1].
VisualPair make_visual_pair(const VisualEncoder& encoder, const ImageTensor& v,
                            const CorruptionSpec& corruption, const ImageTensor* partner,
                            const MarginMode& mode, Rng& rng);

/// Full decoding loop. Rng streams: 0 corruption, 1 sampling.
GenerationTrace generate(const ConditionalModel& model, const VisualEncoder& encoder,
                         const ImageTensor& v, const CorruptionSpec& corruption,
                         const ImageTensor* partner, std::span<const TokenId> prompt,
                         const DecodeConfig& config, const Rng& rng);

/// Decoding loop over a precomputed visual pair (no per-step resampling).
GenerationTrace generate_from_pair(const ConditionalModel& model, const VisualPair& pair,
                                   std::span<const TokenId> prompt, const DecodeConfig& config,
                                   Rng& sampling_rng);

}  // namespace vord
