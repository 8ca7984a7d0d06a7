#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vord/harness.hpp"

namespace vord {

/// Writes to a sibling temp file and renames it over `path`. Throws "io-error".
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

/// Binary PPM (P6, maxval 255). One channel is replicated to gray, two
/// channels fill red and green, extra channels beyond three are dropped.
std::string encode_ppm(const ImageTensor& image);
/// Throws "bad-ppm". Always returns three channels.
ImageTensor decode_ppm(std::string_view bytes);

/// Reads a VTEN or PPM file, chosen by its magic bytes.
ImageTensor read_image(const std::filesystem::path& path);

/// Model file: "VLM1", u64 parameter count, little-endian f32 parameters.
std::string encode_model(std::span<const double> parameters);
/// Throws "bad-model".
std::vector<double> decode_model(std::string_view bytes);

struct BenchmarkSettings {
  PopeSetting setting = PopeSetting::kAdversarial;
  std::size_t n_scenes = 500;
  std::size_t heldout_scenes = 200;
};

/// Everything a CLI run reads from its JSON config. Absent keys keep these
/// defaults; unknown keys are rejected with "invalid-config".
struct ExperimentConfig {
  std::uint64_t seed = 0;
  CorruptionSpec corruption;
  DecodeConfig decode;
  LossConfig loss;
  double learning_rate = 1e-5;
  int epochs = 1;
  int batch_size = 8;
  BenchmarkSettings benchmark;
  WorldConfig world;
  ToyModelSpec model;
  int num_bins = kDefaultBins;
  std::vector<double> ablation_margins{0.0, 0.25, 0.5, 0.75};
  std::vector<CorruptionSpec> ablation_corruptions;
  std::string out_dir = "out";
};

ExperimentConfig default_experiment_config();
ExperimentConfig parse_experiment_config(const nlohmann::json& doc);
nlohmann::json to_json(const ExperimentConfig& config);

/// Per-step records; distributions are elided for vocabularies above 256
/// tokens unless `full` is set.
nlohmann::json trace_to_json(const GenerationTrace& trace, const Vocabulary& vocab, bool full);
inline constexpr int kTraceElisionVocab = 256;

std::string metrics_csv(const std::vector<std::string>& methods,
                        const std::vector<PopeResult>& results);
std::string reliability_csv(const std::vector<std::string>& methods,
                            const std::vector<PopeResult>& results);
std::string margin_ablation_csv(const std::vector<AblationRow>& rows);
std::string corruption_ablation_csv(const std::vector<CorruptionAblationRow>& rows);
std::string loss_curve_csv(const std::vector<EpochRecord>& curve);

/// One JSON object per query: scene, present objects, image path, object, label.
std::string split_jsonl(const BenchmarkSplit& split, const std::vector<std::string>& image_paths);

}  // namespace vord
