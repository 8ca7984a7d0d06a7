#include "vord/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace vord {

using nlohmann::json;

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw VordError("io-error", "cannot create " + path.parent_path().string());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw VordError("io-error", "cannot open " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw VordError("io-error", "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw VordError("io-error", "cannot rename onto " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VordError("io-error", "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw VordError("io-error", "cannot read " + path.string());
  return buf.str();
}

std::string encode_ppm(const ImageTensor& image) {
  std::string out = "P6\n" + std::to_string(image.width()) + " " +
                    std::to_string(image.height()) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(image.width()) * image.height() * 3);
  const int c = image.channels();
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int k = 0; k < 3; ++k) {
        float v = 0.0f;
        if (c == 1) v = image.at(y, x, 0);
        else if (k < c) v = image.at(y, x, k);
        out.push_back(static_cast<char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
      }
    }
  }
  return out;
}

ImageTensor decode_ppm(std::string_view bytes) {
  std::size_t pos = 0;
  const auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return std::string(bytes.substr(start, pos - start));
  };
  if (next_token() != "P6") throw VordError("bad-ppm", "not a binary P6 file");
  long w = 0, h = 0, maxval = 0;
  try {
    w = std::stol(next_token());
    h = std::stol(next_token());
    maxval = std::stol(next_token());
  } catch (const std::exception&) {
    throw VordError("bad-ppm", "malformed header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255 || w * h > (1L << 28)) {
    throw VordError("bad-ppm", "unsupported dimensions or maxval");
  }
  ++pos;  // single whitespace after maxval
  const std::size_t count = static_cast<std::size_t>(w) * h * 3;
  if (pos > bytes.size() || bytes.size() - pos != count) {
    throw VordError("bad-ppm", "payload size mismatch");
  }
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = static_cast<float>(static_cast<unsigned char>(bytes[pos + i])) /
              static_cast<float>(maxval);
  }
  return ImageTensor(static_cast<int>(h), static_cast<int>(w), 3, std::move(data));
}

ImageTensor read_image(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.starts_with("VTEN")) return decode_vten(bytes);
  if (bytes.starts_with("P6")) return decode_ppm(bytes);
  throw VordError("bad-image", path.string() + " is neither VTEN nor PPM P6");
}

std::string encode_model(std::span<const double> parameters) {
  std::string out = "VLM1";
  std::uint64_t n = parameters.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
  for (double p : parameters) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(p));
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  return out;
}

std::vector<double> decode_model(std::string_view bytes) {
  if (bytes.size() < 12 || bytes.substr(0, 4) != "VLM1") {
    throw VordError("bad-model", "missing VLM1 header");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(p[4 + i]) << (8 * i);
  if (n > (bytes.size() - 12) / 4 || bytes.size() - 12 != n * 4) {
    throw VordError("bad-model", "parameter count does not match file size");
  }
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[12 + 4 * k + i]) << (8 * i);
    out[k] = std::bit_cast<float>(bits);
  }
  return out;
}

namespace {

// Reads one JSON object, remembering which keys were consumed so that the
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw VordError("invalid-config", where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      out = doc_.at(key).get<T>();
    } catch (const json::exception&) {
      throw VordError("invalid-config", "bad value for " + where(key));
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return doc_.contains(key) ? &doc_.at(key) : nullptr;
  }

  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!seen_.contains(key)) throw VordError("invalid-config", "unknown key " + where(key));
    }
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

MarginMode parse_margin(const json& v, const std::string& where) {
  if (v.is_string() && v.get<std::string>() == "adaptive") return MarginMode::make_adaptive();
  if (v.is_number()) return MarginMode::make_fixed(v.get<double>());
  throw VordError("invalid-config", where + " must be \"adaptive\" or a number");
}

json margin_json(const MarginMode& m) {
  return m.adaptive ? json("adaptive") : json(m.fixed);
}

CorruptionSpec parse_corruption(const json& doc, const std::string& path) {
  Section s(doc, path);
  CorruptionSpec c;
  std::string kind = to_string(c.kind), partner = to_string(c.partner_selection);
  s.get("kind", kind);
  c.kind = corruption_kind_from_string(kind);
  s.get("alpha", c.alpha);
  s.get("gamma", c.gamma);
  s.get("severity", c.severity);
  s.get("partner_selection", partner);
  c.partner_selection = partner_selection_from_string(partner);
  if (const json* l = s.child("lambda"); l && !l->is_null()) {
    if (!l->is_number()) throw VordError("invalid-config", s.where("lambda") + " must be a number");
    c.fixed_lambda = l->get<double>();
  }
  s.get("resample_per_step", c.resample_per_step);
  s.finish();
  c.validate();
  return c;
}

json corruption_json(const CorruptionSpec& c) {
  return {{"kind", to_string(c.kind)},
          {"alpha", c.alpha},
          {"gamma", c.gamma},
          {"severity", c.severity},
          {"partner_selection", to_string(c.partner_selection)},
          {"lambda", c.fixed_lambda ? json(*c.fixed_lambda) : json(nullptr)},
          {"resample_per_step", c.resample_per_step}};
}

std::vector<CorruptionSpec> default_ablation_corruptions() {
  CorruptionSpec mix;
  CorruptionSpec diffusion;
  diffusion.kind = CorruptionKind::kDiffusion;
  diffusion.gamma = 0.5;
  CorruptionSpec noise;
  noise.kind = CorruptionKind::kGaussianNoise;
  noise.severity = 0.1;
  CorruptionSpec contrast;
  contrast.kind = CorruptionKind::kContrast;
  contrast.severity = 0.3;
  CorruptionSpec brightness;
  brightness.kind = CorruptionKind::kBrightness;
  brightness.severity = 0.05;
  return {mix, diffusion, noise, contrast, brightness};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  c.ablation_corruptions = default_ablation_corruptions();
  return c;
}

ExperimentConfig parse_experiment_config(const json& doc) {
  ExperimentConfig c = default_experiment_config();
  Section root(doc, "");
  root.get("seed", c.seed);

  if (const json* j = root.child("corruption")) c.corruption = parse_corruption(*j, "corruption");

  if (const json* j = root.child("decode")) {
    Section s(*j, "decode");
    s.get("beta", c.decode.beta);
    if (const json* m = s.child("margin")) c.decode.margin = parse_margin(*m, s.where("margin"));
    s.get("temperature", c.decode.temperature);
    std::string strategy = to_string(c.decode.strategy.kind);
    s.get("strategy", strategy);
    c.decode.strategy.kind = strategy_kind_from_string(strategy);
    s.get("top_k", c.decode.strategy.top_k);
    s.get("top_p", c.decode.strategy.top_p);
    s.get("max_new_tokens", c.decode.max_new_tokens);
    s.finish();
  }
  c.decode.validate();

  if (const json* j = root.child("loss")) {
    Section s(*j, "loss");
    s.get("psi", c.loss.psi);
    if (const json* m = s.child("margin")) c.loss.margin = parse_margin(*m, s.where("margin"));
    std::string reduction = c.loss.reduction == Reduction::kMean ? "mean" : "sum";
    s.get("reduction", reduction);
    if (reduction == "mean") c.loss.reduction = Reduction::kMean;
    else if (reduction == "sum") c.loss.reduction = Reduction::kSum;
    else throw VordError("invalid-config", "loss.reduction must be \"mean\" or \"sum\"");
    s.get("target_only", c.loss.target_only);
    s.finish();
  }
  if (c.loss.psi != 1.0 && c.loss.psi != 2.0) {
    throw VordError("invalid-config", "loss.psi must be 1 or 2");
  }
  c.loss.validate();

  if (const json* j = root.child("train")) {
    Section s(*j, "train");
    s.get("learning_rate", c.learning_rate);
    s.get("epochs", c.epochs);
    s.get("batch_size", c.batch_size);
    s.finish();
  }
  if (!(c.learning_rate >= 0.0) || c.epochs < 0 || c.batch_size < 1) {
    throw VordError("invalid-config", "train needs learning_rate >= 0, epochs >= 0, batch_size >= 1");
  }

  if (const json* j = root.child("benchmark")) {
    Section s(*j, "benchmark");
    std::string setting = to_string(c.benchmark.setting);
    s.get("setting", setting);
    c.benchmark.setting = pope_setting_from_string(setting);
    s.get("n_scenes", c.benchmark.n_scenes);
    s.get("heldout_scenes", c.benchmark.heldout_scenes);
    s.finish();
  }
  if (c.benchmark.n_scenes < 1 || c.benchmark.heldout_scenes < 1) {
    throw VordError("invalid-config", "benchmark sizes must be >= 1");
  }

  if (const json* j = root.child("world")) {
    Section s(*j, "world");
    auto& w = c.world;
    s.get("num_objects", w.num_objects);
    s.get("embed_dim", w.embed_dim);
    s.get("patch_size", w.patch_size);
    s.get("channels", w.channels);
    s.get("image_size", w.image_size);
    s.get("background", w.background);
    s.get("pattern_amplitude", w.pattern_amplitude);
    s.get("noise_std", w.noise_std);
    s.get("zipf_exponent", w.zipf_exponent);
    s.get("group_size", w.group_size);
    s.get("min_objects", w.min_objects);
    s.get("max_objects", w.max_objects);
    s.get("catalog_seed", w.catalog_seed);
    s.get("encoder_seed", w.encoder_seed);
    s.finish();
  }
  c.world.validate();

  if (const json* j = root.child("model")) {
    Section s(*j, "model");
    auto& m = c.model;
    s.get("evidence_gain", m.evidence_gain);
    s.get("cooccurrence_gain", m.cooccurrence_gain);
    s.get("uncertain_context_gain", m.uncertain_context_gain);
    s.get("uncertain_popularity_gain", m.uncertain_popularity_gain);
    s.get("yes_bias", m.yes_bias);
    s.get("other_token_bias", m.other_token_bias);
    s.finish();
  }

  if (const json* j = root.child("eval")) {
    Section s(*j, "eval");
    s.get("num_bins", c.num_bins);
    s.finish();
  }
  if (c.num_bins < 1) throw VordError("invalid-config", "eval.num_bins must be >= 1");

  if (const json* j = root.child("ablation")) {
    Section s(*j, "ablation");
    s.get("margins", c.ablation_margins);
    if (const json* list = s.child("corruptions")) {
      if (!list->is_array()) throw VordError("invalid-config", "ablation.corruptions must be a list");
      c.ablation_corruptions.clear();
      for (std::size_t i = 0; i < list->size(); ++i) {
        c.ablation_corruptions.push_back(
            parse_corruption((*list)[i], "ablation.corruptions[" + std::to_string(i) + "]"));
      }
    }
    s.finish();
  }
  for (double m : c.ablation_margins) {
    if (!(m >= 0.0 && m <= 1.0)) throw VordError("invalid-config", "ablation margins must lie in [0,1]");
  }

  if (const json* j = root.child("paths")) {
    Section s(*j, "paths");
    s.get("out", c.out_dir);
    s.finish();
  }
  root.finish();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json corruptions = json::array();
  for (const auto& spec : c.ablation_corruptions) corruptions.push_back(corruption_json(spec));
  const auto& w = c.world;
  const auto& m = c.model;
  return {
      {"seed", c.seed},
      {"corruption", corruption_json(c.corruption)},
      {"decode",
       {{"beta", c.decode.beta},
        {"margin", margin_json(c.decode.margin)},
        {"temperature", c.decode.temperature},
        {"strategy", to_string(c.decode.strategy.kind)},
        {"top_k", c.decode.strategy.top_k},
        {"top_p", c.decode.strategy.top_p},
        {"max_new_tokens", c.decode.max_new_tokens}}},
      {"loss",
       {{"psi", c.loss.psi},
        {"margin", margin_json(c.loss.margin)},
        {"reduction", c.loss.reduction == Reduction::kMean ? "mean" : "sum"},
        {"target_only", c.loss.target_only}}},
      {"train",
       {{"learning_rate", c.learning_rate}, {"epochs", c.epochs}, {"batch_size", c.batch_size}}},
      {"benchmark",
       {{"setting", to_string(c.benchmark.setting)},
        {"n_scenes", c.benchmark.n_scenes},
        {"heldout_scenes", c.benchmark.heldout_scenes}}},
      {"world",
       {{"num_objects", w.num_objects},
        {"embed_dim", w.embed_dim},
        {"patch_size", w.patch_size},
        {"channels", w.channels},
        {"image_size", w.image_size},
        {"background", w.background},
        {"pattern_amplitude", w.pattern_amplitude},
        {"noise_std", w.noise_std},
        {"zipf_exponent", w.zipf_exponent},
        {"group_size", w.group_size},
        {"min_objects", w.min_objects},
        {"max_objects", w.max_objects},
        {"catalog_seed", w.catalog_seed},
        {"encoder_seed", w.encoder_seed}}},
      {"model",
       {{"evidence_gain", m.evidence_gain},
        {"cooccurrence_gain", m.cooccurrence_gain},
        {"uncertain_context_gain", m.uncertain_context_gain},
        {"uncertain_popularity_gain", m.uncertain_popularity_gain},
        {"yes_bias", m.yes_bias},
        {"other_token_bias", m.other_token_bias}}},
      {"eval", {{"num_bins", c.num_bins}}},
      {"ablation", {{"margins", c.ablation_margins}, {"corruptions", corruptions}}},
      {"paths", {{"out", c.out_dir}}},
  };
}

json trace_to_json(const GenerationTrace& trace, const Vocabulary& vocab, bool full) {
  const bool elide = !full && vocab.size > kTraceElisionVocab;
  const auto dist = [&](const TokenDistribution& d) -> json {
    if (elide || d.size() == 0) return nullptr;
    return d.probs;
  };
  const auto mask = [&](const std::vector<bool>& m) -> json {
    if (elide) return nullptr;
    json out = json::array();
    for (bool b : m) out.push_back(b ? 1 : 0);
    return out;
  };
  json steps = json::array();
  for (const auto& r : trace.records) {
    steps.push_back({{"step", r.step},
                     {"chosen", r.chosen},
                     {"chosen_label", vocab.label(r.chosen)},
                     {"p_chosen", r.final_dist[static_cast<std::size_t>(r.chosen)]},
                     {"margin", r.margin},
                     {"fallback_used", r.fallback_used},
                     {"p_clean", dist(r.p_clean)},
                     {"p_mod", dist(r.p_mod)},
                     {"final", dist(r.final_dist)},
                     {"ordinal_mask", r.ordinal_mask.empty() ? json(nullptr) : mask(r.ordinal_mask)},
                     {"plausible_set", mask(r.plausible_set)}});
  }
  json labels = json::array();
  for (TokenId t : trace.tokens) labels.push_back(vocab.label(t));
  return {{"tokens", trace.tokens},
          {"token_labels", labels},
          {"terminated_by", to_string(trace.terminated_by)},
          {"margin", trace.margin},
          {"lambda", trace.lambda ? json(*trace.lambda) : json(nullptr)},
          {"distributions_elided", elide},
          {"steps", steps}};
}

std::string metrics_csv(const std::vector<std::string>& methods,
                        const std::vector<PopeResult>& results) {
  std::string out =
      "method,accuracy,precision,recall,f1,ece,mean_margin,fallback_rate,false_yes_rate\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    out += methods[i] + "," + fmt(r.metrics.accuracy) + "," + fmt(r.metrics.precision) + "," +
           fmt(r.metrics.recall) + "," + fmt(r.metrics.f1) + "," + fmt(r.calibration.ece) + "," +
           fmt(r.mean_margin) + "," + fmt(r.fallback_rate) + "," + fmt(r.false_yes_rate) + "\n";
  }
  return out;
}

std::string reliability_csv(const std::vector<std::string>& methods,
                            const std::vector<PopeResult>& results) {
  std::string out = "method,bin,bin_center,accuracy,confidence,count\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& cal = results[i].calibration;
    for (int b = 0; b < cal.num_bins; ++b) {
      const auto& bin = cal.bins[b];
      out += methods[i] + "," + std::to_string(b) + "," + fmt((b + 0.5) / cal.num_bins) + "," +
             fmt(bin.mean_accuracy) + "," + fmt(bin.mean_confidence) + "," +
             std::to_string(bin.count) + "\n";
    }
  }
  return out;
}

std::string margin_ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "setting,margin,accuracy,precision,recall,f1,ece\n";
  for (const auto& r : rows) {
    const auto& m = r.result.metrics;
    out += r.label + "," + fmt(r.margin) + "," + fmt(m.accuracy) + "," + fmt(m.precision) + "," +
           fmt(m.recall) + "," + fmt(m.f1) + "," + fmt(r.result.calibration.ece) + "\n";
  }
  return out;
}

std::string corruption_ablation_csv(const std::vector<CorruptionAblationRow>& rows) {
  std::string out = "kind,f1,mean_margin\n";
  for (const auto& r : rows) out += r.kind + "," + fmt(r.f1) + "," + fmt(r.mean_margin) + "\n";
  return out;
}

std::string loss_curve_csv(const std::vector<EpochRecord>& curve) {
  std::string out = "epoch,ce_loss,vord_loss,violation_rate,heldout_accuracy,heldout_ece\n";
  for (const auto& e : curve) {
    out += std::to_string(e.epoch) + "," + fmt(e.ce_loss) + "," + fmt(e.vord_loss) + "," +
           fmt(e.violation_rate) + "," + fmt(e.heldout_accuracy) + "," + fmt(e.heldout_ece) + "\n";
  }
  return out;
}

std::string split_jsonl(const BenchmarkSplit& split, const std::vector<std::string>& image_paths) {
  std::string out;
  for (const auto& q : split.queries) {
    const json line = {{"scene", q.scene},
                       {"present", split.scenes[q.scene].present},
                       {"image", q.scene < image_paths.size() ? image_paths[q.scene] : ""},
                       {"object", q.object},
                       {"label", q.label == Answer::kYes ? "yes" : "no"},
                       {"setting", to_string(split.setting)}};
    out += line.dump() + "\n";
  }
  return out;
}

}  // namespace vord
