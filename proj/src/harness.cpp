#include "vord/harness.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <thread>

namespace vord {

namespace {

int blocks_per_side(int num_objects) {
  return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(num_objects))));
}

std::size_t draw_categorical(const std::vector<double>& weights, Rng& rng) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  const double target = rng.uniform() * total;
  double cumulative = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last = i;
    cumulative += weights[i];
    if (target < cumulative) return i;
  }
  return last;
}

// Dead zone keeps clean (near 0/1) presence estimates from registering as ambiguous.
constexpr double kAmbiguityDeadZone = 0.12;

// Mean of clamp(mu + sigma * Z, 0, 1) for standard normal Z.
double expected_clamped(double mu, double sigma) {
  if (sigma <= 0.0) return std::clamp(mu, 0.0, 1.0);
  const auto cdf = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
  const auto pdf = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); };
  const double a = -mu / sigma;
  const double b = (1.0 - mu) / sigma;
  return mu * (cdf(b) - cdf(a)) + sigma * (pdf(a) - pdf(b)) + (1.0 - cdf(b));
}

double ambiguity(double x) {
  const double a = 1.0 - std::abs(2.0 * x - 1.0);
  return std::clamp((a - kAmbiguityDeadZone) / (1.0 - kAmbiguityDeadZone), 0.0, 1.0);
}

}  // namespace

void WorldConfig::validate() const {
  if (num_objects < 2 || embed_dim < 1 || patch_size < 1 || channels < 1 || image_size < 1) {
    throw VordError("invalid-config", "world dimensions must be positive (>= 2 objects)");
  }
  if (image_size % patch_size != 0) {
    throw VordError("invalid-config", "image_size must be a multiple of patch_size");
  }
  const int grid = image_size / patch_size;
  const int bps = blocks_per_side(num_objects);
  if (grid % bps != 0) {
    throw VordError("invalid-config", "patch grid cannot be split into one region per object");
  }
  if (group_size < 1 || min_objects < 1 || max_objects < min_objects ||
      max_objects >= num_objects) {
    throw VordError("invalid-config", "scene object counts out of range");
  }
  if (!(background >= 0.0 && background + pattern_amplitude <= 1.0 && pattern_amplitude > 0.0)) {
    throw VordError("invalid-config", "background + pattern_amplitude must stay within [0,1]");
  }
  if (!(noise_std >= 0.0)) throw VordError("invalid-config", "noise_std must be >= 0");
}

ObjectCatalog make_catalog(const WorldConfig& world) {
  world.validate();
  Rng rng(world.catalog_seed);
  ObjectCatalog cat;
  cat.num_objects = world.num_objects;
  cat.signature_dim = world.patch_size * world.patch_size * world.channels;
  const int k = cat.num_objects;

  Rng sig_rng = rng.split(0);
  for (int o = 0; o < k; ++o) {
    std::vector<double> s(cat.signature_dim);
    for (int i = 0; i < cat.signature_dim; ++i) s[i] = i < cat.signature_dim / 2 ? 1.0 : -1.0;
    for (std::size_t i = s.size(); i > 1; --i) std::swap(s[i - 1], s[sig_rng.below(i)]);
    cat.signatures.push_back(std::move(s));
  }

  Rng group_rng = rng.split(1);
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[group_rng.below(i)]);
  cat.group.assign(k, 0);
  for (int r = 0; r < k; ++r) cat.group[order[r]] = r / world.group_size;

  Rng cooc_rng = rng.split(2);
  cat.cooccurrence.assign(static_cast<std::size_t>(k) * k, 0.0);
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      const double u = cooc_rng.uniform();
      const double c = cat.group[a] == cat.group[b] ? 0.6 + 0.4 * u : 0.05 * u;
      cat.cooccurrence[static_cast<std::size_t>(a) * k + b] = c;
      cat.cooccurrence[static_cast<std::size_t>(b) * k + a] = c;
    }
  }

  Rng zipf_rng = rng.split(3);
  std::vector<int> rank(k);
  std::iota(rank.begin(), rank.end(), 0);
  for (std::size_t i = rank.size(); i > 1; --i) std::swap(rank[i - 1], rank[zipf_rng.below(i)]);
  cat.frequency.resize(k);
  for (int o = 0; o < k; ++o) cat.frequency[o] = 1.0 / std::pow(rank[o] + 1.0, world.zipf_exponent);
  const double total = std::accumulate(cat.frequency.begin(), cat.frequency.end(), 0.0);
  for (double& f : cat.frequency) f /= total;
  return cat;
}

ImageTensor render_scene(const WorldConfig& world, const ObjectCatalog& catalog,
                         const std::vector<int>& present, Rng& rng) {
  const int size = world.image_size;
  const int ps = world.patch_size;
  const int region = (size / ps) / blocks_per_side(catalog.num_objects) * ps;  // pixels
  const int bps = blocks_per_side(catalog.num_objects);
  std::vector<float> data(static_cast<std::size_t>(size) * size * world.channels,
                          static_cast<float>(world.background));
  for (int o : present) {
    const int y0 = (o / bps) * region;
    const int x0 = (o % bps) * region;
    const auto& sig = catalog.signatures[o];
    for (int y = 0; y < region; ++y) {
      for (int x = 0; x < region; ++x) {
        for (int c = 0; c < world.channels; ++c) {
          const int k = ((y % ps) * ps + (x % ps)) * world.channels + c;
          const double value = world.background + world.pattern_amplitude * 0.5 * (sig[k] + 1.0);
          data[(static_cast<std::size_t>(y0 + y) * size + (x0 + x)) * world.channels + c] =
              static_cast<float>(value);
        }
      }
    }
  }
  if (world.noise_std > 0.0) {
    for (float& v : data) v = static_cast<float>(v + world.noise_std * rng.normal());
  }
  return ImageTensor(size, size, world.channels, std::move(data));
}

Scene sample_scene(const WorldConfig& world, const ObjectCatalog& catalog, Rng& rng) {
  const int k = catalog.num_objects;
  const int count = world.min_objects +
                    static_cast<int>(rng.below(static_cast<std::uint64_t>(
                        world.max_objects - world.min_objects + 1)));
  std::vector<int> present;
  std::vector<bool> used(k, false);
  for (int n = 0; n < count; ++n) {
    std::vector<double> w(k, 0.0);
    for (int o = 0; o < k; ++o) {
      if (used[o]) continue;
      double affinity = 1.0;
      if (!present.empty()) {
        affinity = 0.02;
        for (int p : present) affinity += catalog.cooc(p, o);
      }
      w[o] = catalog.frequency[o] * affinity;
    }
    const auto pick = static_cast<int>(draw_categorical(w, rng));
    used[pick] = true;
    present.push_back(pick);
  }
  std::sort(present.begin(), present.end());
  Scene scene;
  scene.image = render_scene(world, catalog, present, rng);
  scene.present = std::move(present);
  return scene;
}

std::string to_string(PopeSetting setting) {
  switch (setting) {
    case PopeSetting::kRandom: return "random";
    case PopeSetting::kPopular: return "popular";
    case PopeSetting::kAdversarial: return "adversarial";
  }
  return "unknown";
}

PopeSetting pope_setting_from_string(const std::string& name) {
  if (name == "random") return PopeSetting::kRandom;
  if (name == "popular") return PopeSetting::kPopular;
  if (name == "adversarial") return PopeSetting::kAdversarial;
  throw VordError("invalid-config", "unknown benchmark setting '" + name + "'");
}

int choose_negative(const ObjectCatalog& catalog, const std::vector<int>& present,
                    PopeSetting setting, Rng& rng) {
  std::vector<int> absent;
  for (int o = 0; o < catalog.num_objects; ++o) {
    if (std::find(present.begin(), present.end(), o) == present.end()) absent.push_back(o);
  }
  if (absent.empty()) throw VordError("invalid-scene", "scene contains every object");
  switch (setting) {
    case PopeSetting::kRandom:
      return absent[rng.below(absent.size())];
    case PopeSetting::kPopular: {
      int best = absent.front();
      for (int o : absent) {
        if (catalog.frequency[o] > catalog.frequency[best]) best = o;
      }
      return best;
    }
    case PopeSetting::kAdversarial: {
      int best = absent.front();
      double best_score = -1.0;
      for (int o : absent) {
        double score = 0.0;
        for (int p : present) score += catalog.cooc(p, o);
        if (score > best_score) {
          best_score = score;
          best = o;
        }
      }
      return best;
    }
  }
  return absent.front();
}

BenchmarkSplit generate_benchmark(const WorldConfig& world, const ObjectCatalog& catalog,
                                  std::size_t n_scenes, PopeSetting setting, const Rng& rng) {
  if (n_scenes < 1) throw VordError("invalid-config", "n_scenes must be >= 1");
  BenchmarkSplit split;
  split.setting = setting;
  split.scenes.reserve(n_scenes);
  split.queries.reserve(2 * n_scenes);
  for (std::size_t s = 0; s < n_scenes; ++s) {
    Rng scene_rng = rng.split(s);
    Scene scene = sample_scene(world, catalog, scene_rng);
    Rng query_rng = rng.split(s).split(1);
    const int positive = scene.present[query_rng.below(scene.present.size())];
    const int negative = choose_negative(catalog, scene.present, setting, query_rng);
    split.queries.push_back({s, positive, Answer::kYes});
    split.queries.push_back({s, negative, Answer::kNo});
    split.scenes.push_back(std::move(scene));
  }
  return split;
}

Vocabulary ToyVocab::make(int num_objects) {
  Vocabulary v;
  v.size = kFirstObject + num_objects;
  v.bos_id = kBos;
  v.eos_id = kEos;
  v.labels = {"<bos>", "<eos>", "yes", "no"};
  for (int o = 0; o < num_objects; ++o) v.labels.push_back("obj" + std::to_string(o));
  return v;
}

ToyWorld::ToyWorld(WorldConfig config)
    : config_(config),
      catalog_(make_catalog(config_)),
      encoder_(config_.patch_size, config_.channels, config_.embed_dim, config_.encoder_seed) {
  const int k = catalog_.num_objects;
  const int pd = encoder_.patch_dim();
  const int d = encoder_.embed_dim();
  const int grid = config_.image_size / config_.patch_size;
  const int region_patches = (grid / blocks_per_side(k)) * (grid / blocks_per_side(k));
  const double share = static_cast<double>(region_patches) / (grid * grid);

  Eigen::MatrixXd projection(d, pd);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < pd; ++c) projection(r, c) = encoder_.projection()[r * pd + c];
  }
  // Expected pooled-embedding shift caused by each object, relative to an empty
  // scene; expectations include the clamping of pixel noise.
  const double bg = expected_clamped(config_.background, config_.noise_std);
  const double lit =
      expected_clamped(config_.background + config_.pattern_amplitude, config_.noise_std);
  Eigen::MatrixXd shift(pd, k);
  for (int o = 0; o < k; ++o) {
    for (int i = 0; i < pd; ++i) {
      shift(i, o) = catalog_.signatures[o][i] > 0.0 ? share * (lit - bg) : 0.0;
    }
  }
  const Eigen::MatrixXd columns = projection * shift;
  const Eigen::MatrixXd readout = columns.completeOrthogonalDecomposition().pseudoInverse();
  readout_.resize(static_cast<std::size_t>(k) * d);
  for (int o = 0; o < k; ++o) {
    for (int j = 0; j < d; ++j) readout_[static_cast<std::size_t>(o) * d + j] = readout(o, j);
  }
  const Eigen::VectorXd base = projection * Eigen::VectorXd::Constant(pd, bg);
  baseline_.assign(base.data(), base.data() + d);
}

std::vector<double> ToyWorld::presence(std::span<const double> pooled) const {
  const std::size_t d = baseline_.size();
  if (pooled.size() != d) throw VordError("shape-mismatch", "pooled embedding has wrong dim");
  const int k = catalog_.num_objects;
  std::vector<double> x(k, 0.0);
  for (int o = 0; o < k; ++o) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += readout_[o * d + j] * (pooled[j] - baseline_[j]);
    x[o] = acc;
  }
  return x;
}

std::size_t ToyLVLM::parameter_count(int num_objects) {
  const std::size_t slots = num_objects + 1;
  const std::size_t vocab = ToyVocab::kFirstObject + num_objects;
  const std::size_t features = 2 * static_cast<std::size_t>(num_objects) + 2;
  return slots * vocab * features;
}

ToyLVLM::ToyLVLM(const ToyWorld& world, std::vector<double> parameters)
    : world_(&world),
      vocab_(ToyVocab::make(world.catalog().num_objects)),
      num_features_(2 * static_cast<std::size_t>(world.catalog().num_objects) + 2),
      theta_(std::move(parameters)) {
  if (theta_.size() != parameter_count(world.catalog().num_objects)) {
    throw VordError("invalid-model", "parameter count does not match the world");
  }
}

ToyLVLM ToyLVLM::zeros(const ToyWorld& world) {
  return ToyLVLM(world, std::vector<double>(parameter_count(world.catalog().num_objects), 0.0));
}

ToyLVLM ToyLVLM::biased(const ToyWorld& world, const ToyModelSpec& spec) {
  ToyLVLM model = zeros(world);
  const auto& cat = world.catalog();
  const int k = cat.num_objects;
  const std::size_t f = model.num_features_;
  const std::size_t u_feature = 2 * k;
  const std::size_t bias_feature = 2 * k + 1;
  const double max_freq = *std::max_element(cat.frequency.begin(), cat.frequency.end());

  // Row that scores "object q is there": own evidence, co-occurring evidence,
  // and a prior that only switches on when the visual input is ambiguous.
  const auto write_object_row = [&](std::size_t base, int q) {
    auto* row = model.theta_.data() + base;
    for (int o = 0; o < k; ++o) {
      if (o == q) {
        row[o] = spec.evidence_gain;
        continue;
      }
      row[o] = spec.cooccurrence_gain * cat.cooc(o, q);
      row[k + o] = spec.uncertain_context_gain * cat.cooc(o, q);
    }
    row[u_feature] = spec.uncertain_popularity_gain * cat.frequency[q] / max_freq;
    row[bias_feature] = -0.5 * spec.evidence_gain + spec.yes_bias;
  };

  for (int slot = 0; slot <= k; ++slot) {
    for (int w = 0; w < model.vocab_.size; ++w) {
      const std::size_t base = model.offset(slot, w);
      if (slot < k && w == ToyVocab::kYes) {
        write_object_row(base, slot);
      } else if (slot < k && w == ToyVocab::kNo) {
        // reference logit
      } else if (slot == k && w >= ToyVocab::kFirstObject) {
        write_object_row(base, w - ToyVocab::kFirstObject);
      } else if (slot == k && w == ToyVocab::kEos) {
        // describe mode stops once no object scores above zero
      } else {
        model.theta_[base + bias_feature] = spec.other_token_bias;
      }
    }
  }
  (void)f;
  return model;
}

void ToyLVLM::set_parameters(std::span<const double> theta) {
  if (theta.size() != theta_.size()) throw VordError("invalid-model", "parameter size mismatch");
  theta_.assign(theta.begin(), theta.end());
}

std::vector<double> ToyLVLM::features(const VisualEmbedding& visual) const {
  const auto x = world_->presence(mean_pool(visual));
  const std::size_t k = x.size();
  double u = 0.0;
  for (double xi : x) u = std::max(u, ambiguity(xi));
  std::vector<double> phi(num_features_);
  for (std::size_t o = 0; o < k; ++o) {
    phi[o] = x[o];
    phi[k + o] = u * x[o];
  }
  phi[2 * k] = u;
  phi[2 * k + 1] = 1.0;
  return phi;
}

ToyLVLM::Slot ToyLVLM::slot_for(std::span<const TokenId> prompt,
                                std::span<const TokenId> prefix) const {
  const int k = world_->catalog().num_objects;
  for (auto it = prompt.rbegin(); it != prompt.rend(); ++it) {
    if (*it >= ToyVocab::kFirstObject && *it < ToyVocab::kFirstObject + k) {
      const bool answered = std::count_if(prefix.begin(), prefix.end(), [](TokenId t) {
                              return t != ToyVocab::kBos;
                            }) > 0;
      return {answered ? Mode::kAfterAnswer : Mode::kAnswer,
              static_cast<std::size_t>(*it - ToyVocab::kFirstObject)};
    }
  }
  return {Mode::kDescribe, static_cast<std::size_t>(k)};
}

LogitsVector ToyLVLM::next_token_logits(const VisualEmbedding& visual,
                                        std::span<const TokenId> prompt,
                                        std::span<const TokenId> prefix) const {
  const Slot slot = slot_for(prompt, prefix);
  LogitsVector out;
  out.values.assign(vocab_.size, 0.0);
  if (slot.mode == Mode::kAfterAnswer) {
    out.values[ToyVocab::kEos] = kEndOfAnswerLogit;
    return out;
  }
  const auto phi = features(visual);
  for (int w = 0; w < vocab_.size; ++w) {
    const double* row = theta_.data() + offset(slot.index, w);
    double acc = 0.0;
    for (std::size_t f = 0; f < num_features_; ++f) acc += row[f] * phi[f];
    out.values[w] = acc;
  }
  if (slot.mode == Mode::kDescribe) {
    for (TokenId t : prefix) {
      if (t >= ToyVocab::kFirstObject && t < vocab_.size) out.values[t] -= kRepeatPenalty;
    }
  }
  return out;
}

void ToyLVLM::accumulate_logit_vjp(const VisualEmbedding& visual, std::span<const TokenId> prompt,
                                   std::span<const TokenId> prefix,
                                   std::span<const double> dlogits,
                                   std::span<double> grad) const {
  if (grad.size() != theta_.size() || dlogits.size() != static_cast<std::size_t>(vocab_.size)) {
    throw VordError("shape-mismatch", "gradient buffers do not match the model");
  }
  const Slot slot = slot_for(prompt, prefix);
  if (slot.mode == Mode::kAfterAnswer) return;
  const auto phi = features(visual);
  for (int w = 0; w < vocab_.size; ++w) {
    if (dlogits[w] == 0.0) continue;
    double* row = grad.data() + offset(slot.index, w);
    for (std::size_t f = 0; f < num_features_; ++f) row[f] += dlogits[w] * phi[f];
  }
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::clamp<std::size_t>(jobs < 1 ? 1 : jobs, 1, std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

DecodeConfig regular_decoding() {
  DecodeConfig c;
  c.vord_enabled = false;
  c.beta = 0.0;
  c.strategy = SamplingStrategy::greedy();
  c.max_new_tokens = 1;
  return c;
}

DecodeConfig vord_decoding(const MarginMode& margin, double beta) {
  DecodeConfig c;
  c.vord_enabled = true;
  c.beta = beta;
  c.margin = margin;
  c.strategy = SamplingStrategy::greedy();
  c.max_new_tokens = 1;
  return c;
}

namespace {

std::vector<std::size_t> partner_permutation(std::size_t n, Rng rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  for (std::size_t i = 0; i < n; ++i) {
    if (order[i] == i && n > 1) order[i] = (i + 1) % n;
  }
  return order;
}

struct QueryOutcome {
  Answer answer = Answer::kYes;
  double confidence = 0.5;
  double margin = 0.0;
  bool fallback = false;
};

}  // namespace

std::vector<PopeResult> run_pope_experiment(const ConditionalModel& model,
                                            const VisualEncoder& encoder,
                                            const BenchmarkSplit& split,
                                            const std::vector<DecodeConfig>& configs,
                                            const PopeOptions& options, const Rng& rng) {
  if (split.queries.empty()) throw VordError("no-data", "benchmark split is empty");
  for (const auto& c : configs) c.validate();
  options.corruption.validate();
  const auto partners = partner_permutation(split.scenes.size(), rng.split(0));
  const std::size_t nq = split.queries.size();
  std::vector<std::vector<QueryOutcome>> outcomes(configs.size(), std::vector<QueryOutcome>(nq));

  parallel_for(nq, options.jobs, [&](std::size_t qi) {
    const auto& query = split.queries[qi];
    const Rng query_rng = rng.split(1 + qi);
    const TokenSequence prompt{ToyVocab::object_token(query.object)};
    const ImageTensor& image = split.scenes[query.scene].image;
    const ImageTensor& partner = split.scenes[partners[query.scene]].image;

    const bool any_vord =
        std::any_of(configs.begin(), configs.end(), [](const auto& c) { return c.vord_enabled; });
    VisualPair pair;
    if (any_vord) {
      Rng corruption_rng = query_rng.split(0);
      pair = make_visual_pair(encoder, image, options.corruption, &partner,
                              MarginMode::make_adaptive(), corruption_rng);
    } else {
      pair.clean = encoder.encode(image);
    }
    const double adaptive = pair.margin;
    for (std::size_t ci = 0; ci < configs.size(); ++ci) {
      const auto& config = configs[ci];
      pair.margin = config.margin.adaptive ? adaptive : std::clamp(config.margin.fixed, 0.0, 1.0);
      Rng sampling_rng = query_rng.split(1 + ci);
      const auto trace = generate_from_pair(model, pair, prompt, config, sampling_rng);
      const auto& first = trace.records.front();
      const auto ac = answer_confidence(first.final_dist, ToyVocab::kYes, ToyVocab::kNo);
      outcomes[ci][qi] = {ac.answer, ac.confidence, config.vord_enabled ? pair.margin : 0.0,
                          first.fallback_used};
    }
  });

  std::vector<PopeResult> results;
  for (std::size_t ci = 0; ci < configs.size(); ++ci) {
    std::vector<Answer> predictions, labels;
    std::vector<PredictionRecord> records;
    PopeResult r;
    std::size_t negatives = 0, false_yes = 0, fallbacks = 0;
    double margin_sum = 0.0;
    for (std::size_t qi = 0; qi < nq; ++qi) {
      const auto& o = outcomes[ci][qi];
      const Answer label = split.queries[qi].label;
      predictions.push_back(o.answer);
      labels.push_back(label);
      records.push_back({o.confidence, o.answer == label});
      margin_sum += o.margin;
      fallbacks += o.fallback ? 1 : 0;
      if (label == Answer::kNo) {
        ++negatives;
        false_yes += o.answer == Answer::kYes ? 1 : 0;
      }
    }
    r.metrics = binary_metrics(predictions, labels);
    r.calibration = ece(records, options.num_bins);
    r.mean_margin = margin_sum / static_cast<double>(nq);
    r.fallback_rate = static_cast<double>(fallbacks) / static_cast<double>(nq);
    r.false_yes_rate = negatives ? static_cast<double>(false_yes) / negatives : 0.0;
    results.push_back(r);
  }
  return results;
}

std::vector<AblationRow> run_margin_ablation(const ConditionalModel& model,
                                             const VisualEncoder& encoder,
                                             const BenchmarkSplit& split,
                                             const std::vector<double>& fixed_margins,
                                             const DecodeConfig& base, const PopeOptions& options,
                                             const Rng& rng) {
  std::vector<DecodeConfig> configs;
  std::vector<std::string> labels;
  DecodeConfig regular = base;
  regular.vord_enabled = false;
  regular.beta = 0.0;
  configs.push_back(regular);
  labels.push_back("regular");
  for (double m : fixed_margins) {
    DecodeConfig c = base;
    c.vord_enabled = true;
    c.margin = MarginMode::make_fixed(m);
    configs.push_back(c);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", m);
    labels.emplace_back(buf);
  }
  DecodeConfig adaptive = base;
  adaptive.vord_enabled = true;
  adaptive.margin = MarginMode::make_adaptive();
  configs.push_back(adaptive);
  labels.push_back("adaptive");

  const auto results = run_pope_experiment(model, encoder, split, configs, options, rng);
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < results.size(); ++i) {
    AblationRow row;
    row.label = labels[i];
    row.result = results[i];
    row.margin = (i == 0) ? 0.0
                 : configs[i].margin.adaptive ? results[i].mean_margin
                                              : configs[i].margin.fixed;
    rows.push_back(row);
  }
  return rows;
}

std::vector<CorruptionAblationRow> run_corruption_ablation(
    const ConditionalModel& model, const VisualEncoder& encoder, const BenchmarkSplit& split,
    const std::vector<CorruptionSpec>& kinds, const DecodeConfig& base,
    const PopeOptions& options, const Rng& rng) {
  std::vector<CorruptionAblationRow> rows;
  DecodeConfig config = base;
  config.vord_enabled = true;
  for (const auto& spec : kinds) {
    PopeOptions opts = options;
    opts.corruption = spec;
    const auto r = run_pope_experiment(model, encoder, split, {config}, opts, rng).front();
    rows.push_back({to_string(spec.kind), r.metrics.f1, r.mean_margin});
  }
  return rows;
}

std::vector<TrainingSample> training_samples(const BenchmarkSplit& split) {
  std::vector<TrainingSample> out;
  out.reserve(split.queries.size());
  for (const auto& q : split.queries) {
    out.push_back({split.scenes[q.scene].image,
                   {ToyVocab::object_token(q.object)},
                   {ToyVocab::kBos},
                   q.label == Answer::kYes ? ToyVocab::kYes : ToyVocab::kNo});
  }
  return out;
}

}  // namespace vord
