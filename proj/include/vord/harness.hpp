#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vord/calibration.hpp"
#include "vord/corruption.hpp"
#include "vord/decoding.hpp"
#include "vord/vision.hpp"
#include "vord/vord_loss.hpp"

namespace vord {

/// Shape of the synthetic world. Defaults keep every experiment at laptop scale.
struct WorldConfig {
  int num_objects = 16;
  int embed_dim = 32;
  int patch_size = 4;
  int channels = 2;
  int image_size = 128;
  double background = 0.0;
  double pattern_amplitude = 0.8;
  double noise_std = 0.05;
  double zipf_exponent = 1.0;
  int group_size = 4;
  int min_objects = 2;
  int max_objects = 4;
  std::uint64_t catalog_seed = 7;
  std::uint64_t encoder_seed = 11;

  void validate() const;
};

/// Objects, their patch-space signature patterns, a symmetric co-occurrence
/// prior with zero diagonal and a Zipf popularity over objects.
struct ObjectCatalog {
  int num_objects = 0;
  int signature_dim = 0;
  std::vector<std::vector<double>> signatures;  // entries in {-1, +1}, balanced
  std::vector<double> cooccurrence;             // K x K, row-major
  std::vector<double> frequency;                // sums to 1
  std::vector<int> group;

  double cooc(int a, int b) const { return cooccurrence[static_cast<std::size_t>(a) * num_objects + b]; }
};

ObjectCatalog make_catalog(const WorldConfig& world);

struct Scene {
  std::vector<int> present;  // sorted, non-empty
  ImageTensor image;
};

/// Each present object fills its own patch-aligned region with its pattern;
/// then pixel noise is added and the image is clamped.
ImageTensor render_scene(const WorldConfig& world, const ObjectCatalog& catalog,
                         const std::vector<int>& present, Rng& rng);

/// Draws a co-occurrence-consistent object set and renders it.
Scene sample_scene(const WorldConfig& world, const ObjectCatalog& catalog, Rng& rng);

enum class PopeSetting { kRandom, kPopular, kAdversarial };
std::string to_string(PopeSetting setting);
PopeSetting pope_setting_from_string(const std::string& name);

struct BenchmarkQuery {
  std::size_t scene = 0;
  int object = 0;
  Answer label = Answer::kYes;
};

/// Every scene contributes one present-object query and one absent-object query.
struct BenchmarkSplit {
  PopeSetting setting = PopeSetting::kRandom;
  std::vector<Scene> scenes;
  std::vector<BenchmarkQuery> queries;
};

/// Absent object chosen by the setting rule (ties break to the lowest id).
int choose_negative(const ObjectCatalog& catalog, const std::vector<int>& present,
                    PopeSetting setting, Rng& rng);

BenchmarkSplit generate_benchmark(const WorldConfig& world, const ObjectCatalog& catalog,
                                  std::size_t n_scenes, PopeSetting setting, const Rng& rng);

/// Vocabulary layout: BOS, EOS, yes, no, then one token per object.
struct ToyVocab {
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kYes = 2;
  static constexpr TokenId kNo = 3;
  static constexpr TokenId kFirstObject = 4;
  static TokenId object_token(int object) { return kFirstObject + object; }
  static Vocabulary make(int num_objects);
};

/// Hand-set strengths of the biased initialization.
struct ToyModelSpec {
  double evidence_gain = 6.0;      // weight on the queried object's presence readout
  double cooccurrence_gain = 1.75;  // always-on pull toward co-occurring objects
  double uncertain_context_gain = 12.0;  // extra pull when the visual input is ambiguous
  double uncertain_popularity_gain = 4.0;
  double yes_bias = 0.0;
  double other_token_bias = -6.0;
};

/// Everything fixed about the world: catalog, encoder and the frozen presence
/// readout that maps a pooled embedding to per-object presence estimates.
class ToyWorld {
 public:
  explicit ToyWorld(WorldConfig config);

  const WorldConfig& config() const noexcept { return config_; }
  const ObjectCatalog& catalog() const noexcept { return catalog_; }
  const ToyPatchEncoder& encoder() const noexcept { return encoder_; }

  /// Presence estimates x (one per object) for a pooled embedding.
  std::vector<double> presence(std::span<const double> pooled) const;

 private:
  WorldConfig config_;
  ObjectCatalog catalog_;
  ToyPatchEncoder encoder_;
  std::vector<double> readout_;   // K x D
  std::vector<double> baseline_;  // pooled embedding of an empty scene
};

/// Trainable toy vision-language model. Logits are a per-query bilinear map of
/// fixed visual features phi = [x, u*x, u, 1], where x is the presence readout
/// and u in [0,1] measures how ambiguous the presence evidence is.
/// Prompt with an object token: yes/no question about that object; the
/// answer step is followed by EOS. Prompt without one: describe mode, which
/// lists objects and then EOS.
class ToyLVLM final : public TrainableModel {
 public:
  ToyLVLM(const ToyWorld& world, std::vector<double> parameters);

  static ToyLVLM biased(const ToyWorld& world, const ToyModelSpec& spec = {});
  static ToyLVLM zeros(const ToyWorld& world);

  LogitsVector next_token_logits(const VisualEmbedding& visual, std::span<const TokenId> prompt,
                                 std::span<const TokenId> prefix) const override;
  const Vocabulary& vocabulary() const override { return vocab_; }

  std::span<const double> parameters() const override { return theta_; }
  void set_parameters(std::span<const double> theta) override;
  void accumulate_logit_vjp(const VisualEmbedding& visual, std::span<const TokenId> prompt,
                            std::span<const TokenId> prefix, std::span<const double> dlogits,
                            std::span<double> grad) const override;

  std::size_t num_features() const noexcept { return num_features_; }
  std::vector<double> features(const VisualEmbedding& visual) const;
  static std::size_t parameter_count(int num_objects);

 private:
  enum class Mode { kAnswer, kAfterAnswer, kDescribe };
  struct Slot {
    Mode mode;
    std::size_t index;
  };
  Slot slot_for(std::span<const TokenId> prompt, std::span<const TokenId> prefix) const;
  std::size_t offset(std::size_t slot, std::size_t token) const {
    return (slot * vocab_.size + token) * num_features_;
  }

  const ToyWorld* world_;
  Vocabulary vocab_;
  std::size_t num_features_;
  std::vector<double> theta_;
};

/// Bias used by the untrainable steps (after-answer EOS, describe-mode repeats).
inline constexpr double kRepeatPenalty = 30.0;
inline constexpr double kEndOfAnswerLogit = 10.0;

/// Decodes one answer per query for each config. Corruptions are shared across
/// configs (same partner and draw per query), so rows are paired comparisons.
struct PopeResult {
  BinaryMetrics metrics;
  CalibrationReport calibration;
  double mean_margin = 0.0;
  double fallback_rate = 0.0;
  double false_yes_rate = 0.0;  // fraction of absent-object queries answered "yes"
};

struct PopeOptions {
  CorruptionSpec corruption;
  int num_bins = kDefaultBins;
  int jobs = 1;
};

std::vector<PopeResult> run_pope_experiment(const ConditionalModel& model,
                                            const VisualEncoder& encoder,
                                            const BenchmarkSplit& split,
                                            const std::vector<DecodeConfig>& configs,
                                            const PopeOptions& options, const Rng& rng);

struct AblationRow {
  std::string label;
  double margin = 0.0;  // fixed value, or the mean computed margin for "adaptive"
  PopeResult result;
};

/// Regular decoding plus VORD at each fixed margin and the adaptive margin.
std::vector<AblationRow> run_margin_ablation(const ConditionalModel& model,
                                             const VisualEncoder& encoder,
                                             const BenchmarkSplit& split,
                                             const std::vector<double>& fixed_margins,
                                             const DecodeConfig& base, const PopeOptions& options,
                                             const Rng& rng);

struct CorruptionAblationRow {
  std::string kind;
  double f1 = 0.0;
  double mean_margin = 0.0;
};

std::vector<CorruptionAblationRow> run_corruption_ablation(
    const ConditionalModel& model, const VisualEncoder& encoder, const BenchmarkSplit& split,
    const std::vector<CorruptionSpec>& kinds, const DecodeConfig& base,
    const PopeOptions& options, const Rng& rng);

/// Training samples (one per query) for the yes/no answer position.
std::vector<TrainingSample> training_samples(const BenchmarkSplit& split);

/// Standard decode configs used by the experiments.
DecodeConfig regular_decoding();
DecodeConfig vord_decoding(const MarginMode& margin = MarginMode::make_adaptive(),
                           double beta = 0.2);

/// Calls fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace vord
