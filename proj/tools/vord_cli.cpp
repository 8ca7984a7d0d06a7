// vord: command-line front end for decoding, training, evaluation, ablations
// and corruption previews on the synthetic world.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>

#include "vord/io.hpp"

namespace fs = std::filesystem;
using namespace vord;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

int exit_code_for(const std::string& code) {
  static const char* const config_codes[] = {
      "invalid-config", "invalid-corruption", "unknown-corruption", "missing-partner",
      "invalid-prompt", "invalid-vocabulary", "invalid-target"};
  static const char* const io_codes[] = {"io-error", "bad-vten", "bad-ppm", "bad-model",
                                         "bad-image"};
  for (const char* c : config_codes) {
    if (code == c) return kExitConfig;
  }
  for (const char* c : io_codes) {
    if (code == c) return kExitIo;
  }
  return kExitRuntime;
}

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int jobs = 1;
  std::string model_path;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON experiment config");
  cmd->add_option("--seed", o.seed, "Run seed (overrides the config)");
  cmd->add_option("--out", o.out_dir, "Output directory (overrides the config)");
  cmd->add_option("--jobs", o.jobs, "Worker threads for per-query evaluation")
      ->check(CLI::PositiveNumber);
}

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig cfg = default_experiment_config();
  if (!o.config_path.empty()) {
    const std::string text = read_file(o.config_path);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw VordError("invalid-config", o.config_path + ": " + e.what());
    }
    cfg = parse_experiment_config(doc);
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  return cfg;
}

ToyLVLM load_model(const ToyWorld& world, const ExperimentConfig& cfg, const std::string& path) {
  if (path.empty()) return ToyLVLM::biased(world, cfg.model);
  return ToyLVLM(world, decode_model(read_file(path)));
}

void save_resolved_config(const ExperimentConfig& cfg) {
  write_file_atomic(fs::path(cfg.out_dir) / "config.resolved.json", to_json(cfg).dump(2) + "\n");
}

DecodeConfig answer_config(DecodeConfig c, bool vord) {
  c.max_new_tokens = 1;
  if (!vord) {
    c.vord_enabled = false;
    c.beta = 0.0;
  }
  return c;
}

// Stream layout under the run seed.
enum Stream : std::uint64_t {
  kSceneStream = 1,
  kPartnerStream = 2,
  kDecodeStream = 3,
  kSplitStream = 4,
  kHeldoutStream = 5,
  kTrainStream = 6,
  kExperimentStream = 7,
  kCorruptStream = 8,
};

int cmd_decode(const CommonOptions& o, const std::string& image_path,
               const std::string& partner_path, std::optional<int> query, bool baseline,
               bool full_trace) {
  ExperimentConfig cfg = resolve_config(o);
  const Rng root(cfg.seed);
  const ToyWorld world(cfg.world);
  const ToyLVLM model = load_model(world, cfg, o.model_path);

  Rng scene_rng = root.split(kSceneStream);
  const ImageTensor image = image_path.empty()
                                ? sample_scene(world.config(), world.catalog(), scene_rng).image
                                : read_image(image_path);
  std::optional<ImageTensor> partner;
  if (!partner_path.empty()) {
    partner = read_image(partner_path);
  } else if (cfg.corruption.kind == CorruptionKind::kMixup) {
    Rng partner_rng = root.split(kPartnerStream);
    partner = sample_scene(world.config(), world.catalog(), partner_rng).image;
  }

  TokenSequence prompt{ToyVocab::kBos};
  if (query) {
    if (*query < 0 || *query >= world.catalog().num_objects) {
      throw VordError("invalid-prompt", "query object out of range");
    }
    prompt = {ToyVocab::object_token(*query)};
  }
  DecodeConfig decode = cfg.decode;
  if (baseline) decode.vord_enabled = false;

  const auto trace = generate(model, world.encoder(), image, cfg.corruption,
                              partner ? &*partner : nullptr, prompt, decode,
                              root.split(kDecodeStream));
  const auto& vocab = model.vocabulary();
  std::string text;
  for (TokenId t : trace.tokens) text += vocab.label(t) + " ";
  if (!text.empty()) text.pop_back();
  text += "\n";

  const fs::path out(cfg.out_dir);
  write_file_atomic(out / "trace.json", trace_to_json(trace, vocab, full_trace).dump(2) + "\n");
  write_file_atomic(out / "tokens.txt", text);
  save_resolved_config(cfg);
  std::cout << text;
  std::cout << (decode.vord_enabled ? "vord" : "baseline") << " decoding, margin "
            << trace.margin << ", " << trace.records.size() << " steps, stopped by "
            << to_string(trace.terminated_by) << "\n";
  return kExitOk;
}

HeldoutEvaluator make_heldout(const ToyWorld& world, const BenchmarkSplit& split,
                              const ExperimentConfig& cfg, int jobs, const Rng& rng) {
  return [&world, &split, cfg, jobs, rng](const TrainableModel& m) {
    PopeOptions opt;
    opt.corruption = cfg.corruption;
    opt.num_bins = cfg.num_bins;
    opt.jobs = jobs;
    const auto r = run_pope_experiment(m, world.encoder(), split,
                                       {answer_config(cfg.decode, false)}, opt, rng)
                       .front();
    return HeldoutMetrics{r.metrics.accuracy, r.calibration.ece};
  };
}

int cmd_train(const CommonOptions& o) {
  ExperimentConfig cfg = resolve_config(o);
  const Rng root(cfg.seed);
  const ToyWorld world(cfg.world);
  ToyLVLM model = load_model(world, cfg, o.model_path);

  const auto train_split = generate_benchmark(world.config(), world.catalog(),
                                              cfg.benchmark.n_scenes, cfg.benchmark.setting,
                                              root.split(kSplitStream));
  const auto heldout_split = generate_benchmark(world.config(), world.catalog(),
                                                cfg.benchmark.heldout_scenes,
                                                cfg.benchmark.setting, root.split(kHeldoutStream));
  const auto samples = training_samples(train_split);
  const auto heldout_samples = training_samples(heldout_split);
  const auto heldout_examples = make_examples(world.encoder(), heldout_samples, cfg.corruption,
                                              cfg.loss.margin, root.split(kHeldoutStream).split(1));
  const auto before = evaluate_objective(model, heldout_examples, cfg.loss);

  TrainConfig tc;
  tc.loss = cfg.loss;
  tc.learning_rate = cfg.learning_rate;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.corruption = cfg.corruption;
  const auto result =
      train(model, world.encoder(), samples, tc, root.split(kTrainStream),
            make_heldout(world, heldout_split, cfg, o.jobs, root.split(kExperimentStream)));
  const auto after = evaluate_objective(model, heldout_examples, cfg.loss);

  const fs::path out(cfg.out_dir);
  write_file_atomic(out / "loss_curve.csv", loss_curve_csv(result.curve));
  write_file_atomic(out / "model.vlm1", encode_model(result.state.parameters));
  save_resolved_config(cfg);
  std::printf("trained %ld steps over %d epoch(s)\n", result.state.step_count, cfg.epochs);
  std::printf("held-out violation rate %.6f -> %.6f, CE %.6f -> %.6f\n", before.violation_rate,
              after.violation_rate, before.ce, after.ce);
  return kExitOk;
}

int cmd_eval(const CommonOptions& o, bool dump_split) {
  ExperimentConfig cfg = resolve_config(o);
  const Rng root(cfg.seed);
  const ToyWorld world(cfg.world);
  const ToyLVLM model = load_model(world, cfg, o.model_path);
  const auto split = generate_benchmark(world.config(), world.catalog(), cfg.benchmark.n_scenes,
                                        cfg.benchmark.setting, root.split(kSplitStream));
  PopeOptions opt;
  opt.corruption = cfg.corruption;
  opt.num_bins = cfg.num_bins;
  opt.jobs = o.jobs;
  const std::vector<std::string> methods{"regular", "vord"};
  const auto results = run_pope_experiment(
      model, world.encoder(), split,
      {answer_config(cfg.decode, false), answer_config(cfg.decode, true)}, opt,
      root.split(kExperimentStream));

  const fs::path out(cfg.out_dir);
  write_file_atomic(out / "metrics.csv", metrics_csv(methods, results));
  write_file_atomic(out / "reliability.csv", reliability_csv(methods, results));
  if (dump_split) {
    std::vector<std::string> paths;
    for (std::size_t s = 0; s < split.scenes.size(); ++s) {
      char name[32];
      std::snprintf(name, sizeof name, "scene_%05zu.vten", s);
      paths.push_back(std::string("scenes/") + name);
      write_file_atomic(out / paths.back(), encode_vten(split.scenes[s].image));
    }
    write_file_atomic(out / "split.jsonl", split_jsonl(split, paths));
  }
  save_resolved_config(cfg);
  std::cout << metrics_csv(methods, results);
  return kExitOk;
}

int cmd_ablate(const CommonOptions& o, const std::string& kind) {
  ExperimentConfig cfg = resolve_config(o);
  const Rng root(cfg.seed);
  const ToyWorld world(cfg.world);
  const ToyLVLM model = load_model(world, cfg, o.model_path);
  const auto split = generate_benchmark(world.config(), world.catalog(), cfg.benchmark.n_scenes,
                                        cfg.benchmark.setting, root.split(kSplitStream));
  PopeOptions opt;
  opt.corruption = cfg.corruption;
  opt.num_bins = cfg.num_bins;
  opt.jobs = o.jobs;
  const DecodeConfig base = answer_config(cfg.decode, true);
  const fs::path out(cfg.out_dir);
  std::string csv;
  if (kind == "margin") {
    csv = margin_ablation_csv(run_margin_ablation(model, world.encoder(), split,
                                                  cfg.ablation_margins, base, opt,
                                                  root.split(kExperimentStream)));
    write_file_atomic(out / "margin_ablation.csv", csv);
  } else {
    csv = corruption_ablation_csv(run_corruption_ablation(model, world.encoder(), split,
                                                          cfg.ablation_corruptions, base, opt,
                                                          root.split(kExperimentStream)));
    write_file_atomic(out / "corruption_ablation.csv", csv);
  }
  save_resolved_config(cfg);
  std::cout << csv;
  return kExitOk;
}

int cmd_corrupt(const CommonOptions& o, const std::string& image_path,
                const std::string& partner_path) {
  ExperimentConfig cfg = resolve_config(o);
  const Rng root(cfg.seed);
  const ImageTensor image = read_image(image_path);
  std::optional<ImageTensor> partner;
  if (!partner_path.empty()) partner = read_image(partner_path);
  Rng rng = root.split(kCorruptStream);
  const auto result =
      apply_corruption(cfg.corruption, image, partner ? &*partner : nullptr, rng);

  // Patch size falls back to 1 when the image does not tile evenly.
  const int ps = (image.height() % cfg.world.patch_size == 0 &&
                  image.width() % cfg.world.patch_size == 0)
                     ? cfg.world.patch_size
                     : 1;
  const ToyPatchEncoder encoder(ps, image.channels(), cfg.world.embed_dim,
                                cfg.world.encoder_seed);
  const double margin = adaptive_margin(encoder.encode(image), encoder.encode(result.image));

  const fs::path out(cfg.out_dir);
  write_file_atomic(out / "corrupted.vten", encode_vten(result.image));
  write_file_atomic(out / "corrupted.ppm", encode_ppm(result.image));
  std::printf("corruption %s", to_string(cfg.corruption.kind).c_str());
  if (result.lambda) std::printf(" lambda %.6f", *result.lambda);
  std::printf(" adaptive margin %.6f\n", margin);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VORD: ordinal contrastive decoding and ordinal margin loss on a synthetic world"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string image_path, partner_path, ablate_kind = "margin";
  std::optional<int> query;
  bool baseline = false, full_trace = false, dump_split = false;

  auto* decode = app.add_subcommand("decode", "Decode one image with VORD (or --baseline)");
  add_common(decode, common);
  decode->add_option("--image", image_path, "VTEN or PPM image (default: a seeded scene)");
  decode->add_option("--partner", partner_path, "Mixup partner image (default: a seeded scene)");
  decode->add_option("--model", common.model_path, "VLM1 model file (default: biased init)");
  decode->add_option("--query", query, "Ask whether this object id is present");
  decode->add_flag("--baseline", baseline, "Disable VORD (plausibility-masked clean decoding)");
  decode->add_flag("--full-trace", full_trace, "Never elide distributions in the trace");

  auto* train_cmd = app.add_subcommand("train", "Train the toy model with CE + VORD loss");
  add_common(train_cmd, common);
  train_cmd->add_option("--model", common.model_path, "Initial VLM1 model file");

  auto* eval = app.add_subcommand("eval", "Regular vs VORD decoding on a benchmark split");
  add_common(eval, common);
  eval->add_option("--model", common.model_path, "VLM1 model file (default: biased init)");
  eval->add_flag("--dump-split", dump_split, "Also write split.jsonl and scene images");

  auto* ablate = app.add_subcommand("ablate", "Margin or corruption-type ablation");
  add_common(ablate, common);
  ablate->add_option("--kind", ablate_kind, "margin | corruption")
      ->check(CLI::IsMember({"margin", "corruption"}));
  ablate->add_option("--model", common.model_path, "VLM1 model file (default: biased init)");

  auto* corrupt = app.add_subcommand("corrupt", "Apply the configured corruption to an image");
  add_common(corrupt, common);
  corrupt->add_option("--image", image_path, "VTEN or PPM image")->required();
  corrupt->add_option("--partner", partner_path, "Mixup partner image");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*decode) {
      return cmd_decode(common, image_path, partner_path, query, baseline, full_trace);
    }
    if (*train_cmd) return cmd_train(common);
    if (*eval) return cmd_eval(common, dump_split);
    if (*ablate) return cmd_ablate(common, ablate_kind);
    if (*corrupt) return cmd_corrupt(common, image_path, partner_path);
  } catch (const VordError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
