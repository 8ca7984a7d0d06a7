#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "vord/corruption.hpp"
#include "vord/decoding.hpp"

namespace vord {

/// Conditional model with a flat parameter vector and analytic logit Jacobians.
class TrainableModel : public ConditionalModel {
 public:
  virtual std::span<const double> parameters() const = 0;
  virtual void set_parameters(std::span<const double> theta) = 0;
  /// grad += (d logits / d theta)^T * dlogits at the given inputs.
  virtual void accumulate_logit_vjp(const VisualEmbedding& visual, std::span<const TokenId> prompt,
                                    std::span<const TokenId> prefix,
                                    std::span<const double> dlogits,
                                    std::span<double> grad) const = 0;

  std::size_t num_parameters() const { return parameters().size(); }
};

enum class Reduction { kMean, kSum };

struct LossConfig {
  double psi = 2.0;
  MarginMode margin = MarginMode::make_adaptive();
  Reduction reduction = Reduction::kMean;
  /// Apply the hinge only at the target token instead of the whole vocabulary.
  bool target_only = false;

  void validate() const;
};

/// Hinge max(p_mod - p_clean + m, 0)^psi over the vocabulary (or only at
/// `target` when given), reduced by `reduction`.
double vord_penalty(const TokenDistribution& p_mod, const TokenDistribution& p_clean, double m,
                    double psi, Reduction reduction = Reduction::kMean,
                    std::optional<TokenId> target = std::nullopt);

inline constexpr double kProbabilityFloor = 1e-12;

/// -ln p_clean[target] with a 1e-12 floor. Throws "log-zero" on a structural zero.
double cross_entropy(const TokenDistribution& p_clean, TokenId target);

struct LossTerms {
  double ce = 0.0;
  double vord = 0.0;
  double total() const { return ce + vord; }
};

LossTerms total_loss(const TokenDistribution& p_clean, const TokenDistribution& p_mod,
                     TokenId target, double m, const LossConfig& config);

/// One supervised position with its clean/modified visual inputs. The margin
/// is a constant of the example (no gradient flows through it).
struct TrainingExample {
  VisualEmbedding clean;
  VisualEmbedding modified;
  double margin = 0.0;
  TokenSequence prompt;
  TokenSequence prefix;
  TokenId target = 0;
};

struct ObjectiveValue {
  double ce = 0.0;
  double vord = 0.0;
  double violation_rate = 0.0;  // fraction of (position, token) pairs with g > 0
};

/// Batch loss (positions reduced per config) and its violation rate.
ObjectiveValue evaluate_objective(const TrainableModel& model,
                                  std::span<const TrainingExample> batch,
                                  const LossConfig& config);

/// Exact gradient of the batch loss with respect to the model parameters.
std::vector<double> loss_gradient(const TrainableModel& model,
                                  std::span<const TrainingExample> batch,
                                  const LossConfig& config, ObjectiveValue* value = nullptr);

struct TrainState {
  std::vector<double> parameters;
  double learning_rate = 1e-5;
  long step_count = 0;
};

struct TrainConfig {
  LossConfig loss;
  double learning_rate = 1e-5;
  int epochs = 1;
  int batch_size = 8;
  CorruptionSpec corruption;
};

struct TrainingSample {
  ImageTensor image;
  TokenSequence prompt;
  TokenSequence prefix;
  TokenId target = 0;
};

struct EpochRecord {
  int epoch = 0;
  double ce_loss = 0.0;
  double vord_loss = 0.0;
  double violation_rate = 0.0;
  double heldout_accuracy = 0.0;
  double heldout_ece = 0.0;
};

struct HeldoutMetrics {
  double accuracy = 0.0;
  double ece = 0.0;
};

using HeldoutEvaluator = std::function<HeldoutMetrics(const TrainableModel&)>;

struct TrainResult {
  TrainState state;
  std::vector<EpochRecord> curve;
};

/// Plain SGD on L_CE + L_vord. Each sample is corrupted against a partner from
/// a seeded shuffle of the dataset; the curve has a row per epoch.
/// Throws "diverged" on a non-finite loss or parameter.
TrainResult train(TrainableModel& model, const VisualEncoder& encoder,
                  std::span<const TrainingSample> dataset, const TrainConfig& config,
                  const Rng& rng, const HeldoutEvaluator& heldout = {});

/// Builds the deterministic training examples used to score a split: each
/// sample gets a partner and corruption from `rng` exactly as in training.
std::vector<TrainingExample> make_examples(const VisualEncoder& encoder,
                                           std::span<const TrainingSample> dataset,
                                           const CorruptionSpec& corruption,
                                           const MarginMode& margin, const Rng& rng);

}  // namespace vord
