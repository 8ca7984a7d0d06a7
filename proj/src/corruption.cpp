#include "vord/corruption.hpp"

#include <algorithm>
#include <cmath>

namespace vord {

namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

ImageTensor map_pixels(const ImageTensor& v, auto&& fn) {
  std::vector<float> out(v.size());
  const auto in = v.data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = clamp01(fn(static_cast<double>(in[i])));
  return ImageTensor(v.height(), v.width(), v.channels(), std::move(out));
}

}  // namespace

std::string to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::kMixup: return "mixup";
    case CorruptionKind::kDiffusion: return "diffusion";
    case CorruptionKind::kGaussianNoise: return "gaussian_noise";
    case CorruptionKind::kContrast: return "contrast";
    case CorruptionKind::kBrightness: return "brightness";
  }
  return "unknown";
}

CorruptionKind corruption_kind_from_string(const std::string& name) {
  if (name == "mixup") return CorruptionKind::kMixup;
  if (name == "diffusion") return CorruptionKind::kDiffusion;
  if (name == "gaussian_noise") return CorruptionKind::kGaussianNoise;
  if (name == "contrast") return CorruptionKind::kContrast;
  if (name == "brightness") return CorruptionKind::kBrightness;
  throw VordError("unknown-corruption", name);
}

std::string to_string(PartnerSelection selection) {
  return selection == PartnerSelection::kProvided ? "provided" : "shuffled_batch";
}

PartnerSelection partner_selection_from_string(const std::string& name) {
  if (name == "provided") return PartnerSelection::kProvided;
  if (name == "shuffled_batch") return PartnerSelection::kShuffledBatch;
  throw VordError("invalid-corruption", "unknown partner_selection '" + name + "'");
}

void CorruptionSpec::validate() const {
  switch (kind) {
    case CorruptionKind::kMixup:
      if (!(alpha > 0.0)) throw VordError("invalid-corruption", "mixup requires alpha > 0");
      if (fixed_lambda && !(*fixed_lambda >= 0.0 && *fixed_lambda <= 1.0)) {
        throw VordError("invalid-corruption", "lambda must lie in [0,1]");
      }
      break;
    case CorruptionKind::kDiffusion:
      if (!(gamma > 0.0 && gamma < 1.0)) {
        throw VordError("invalid-corruption", "diffusion requires 0 < gamma < 1");
      }
      break;
    default:
      if (!(severity >= 0.0)) throw VordError("invalid-corruption", "severity must be >= 0");
  }
}

ImageTensor mixup(const ImageTensor& a, const ImageTensor& b, double lambda) {
  if (!a.same_shape(b)) throw VordError("shape-mismatch", "mixup operands differ in shape");
  std::vector<float> out(a.size());
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = clamp01(lambda * da[i] + (1.0 - lambda) * db[i]);
  }
  return ImageTensor(a.height(), a.width(), a.channels(), std::move(out));
}

double sample_lambda(double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw VordError("invalid-corruption", "alpha must be positive");
  return std::clamp(rng.beta(alpha, alpha), 0.0, 1.0);
}

ImageTensor diffusion_noise(const ImageTensor& v, double gamma, Rng& rng) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw VordError("invalid-corruption", "diffusion requires 0 < gamma < 1");
  }
  const double keep = std::sqrt(1.0 - gamma);
  const double noise = std::sqrt(gamma);
  return map_pixels(v, [&](double x) { return keep * x + noise * rng.normal(); });
}

ImageTensor common_corruption(const ImageTensor& v, CorruptionKind kind, double severity,
                              Rng& rng) {
  if (!(severity >= 0.0)) throw VordError("invalid-corruption", "severity must be >= 0");
  switch (kind) {
    case CorruptionKind::kGaussianNoise:
      return map_pixels(v, [&](double x) { return x + severity * rng.normal(); });
    case CorruptionKind::kContrast: {
      const double mu = v.mean();
      return map_pixels(v, [&](double x) { return (x - mu) * (1.0 - severity) + mu; });
    }
    case CorruptionKind::kBrightness:
      return map_pixels(v, [&](double x) { return x + severity; });
    default:
      throw VordError("unknown-corruption", to_string(kind) + " is not a common corruption");
  }
}

CorruptionResult apply_corruption(const CorruptionSpec& spec, const ImageTensor& v,
                                  const ImageTensor* partner, Rng& rng) {
  spec.validate();
  switch (spec.kind) {
    case CorruptionKind::kMixup: {
      if (partner == nullptr) throw VordError("missing-partner", "mixup needs a second image");
      const double lambda = spec.fixed_lambda ? *spec.fixed_lambda : sample_lambda(spec.alpha, rng);
      return {mixup(v, *partner, lambda), lambda};
    }
    case CorruptionKind::kDiffusion:
      return {diffusion_noise(v, spec.gamma, rng), std::nullopt};
    default:
      return {common_corruption(v, spec.kind, spec.severity, rng), std::nullopt};
  }
}

}  // namespace vord
