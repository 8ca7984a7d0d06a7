#pragma once

#include <optional>
#include <string>

#include "vord/core_types.hpp"
#include "vord/rng.hpp"

namespace vord {

enum class CorruptionKind { kMixup, kDiffusion, kGaussianNoise, kContrast, kBrightness };
enum class PartnerSelection { kProvided, kShuffledBatch };

std::string to_string(CorruptionKind kind);
/// Throws "unknown-corruption".
CorruptionKind corruption_kind_from_string(const std::string& name);
std::string to_string(PartnerSelection selection);
PartnerSelection partner_selection_from_string(const std::string& name);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kMixup;
  double alpha = 1.0;     // Beta(alpha, alpha) for the mixup weight
  double gamma = 0.5;     // diffusion noise level, in (0,1)
  double severity = 0.0;  // gaussian_noise / contrast / brightness
  PartnerSelection partner_selection = PartnerSelection::kShuffledBatch;
  /// Pins the mixup weight instead of drawing it from Beta(alpha, alpha).
  std::optional<double> fixed_lambda;
  /// Draw a fresh modified image at every generation step instead of once.
  bool resample_per_step = false;

  /// Throws "invalid-corruption" when the kind-specific ranges are violated.
  void validate() const;
};

/// lambda * a + (1 - lambda) * b, clamped. Throws "shape-mismatch".
ImageTensor mixup(const ImageTensor& a, const ImageTensor& b, double lambda);

/// Draw from Beta(alpha, alpha).
double sample_lambda(double alpha, Rng& rng);

/// Forward-diffusion marginal sqrt(1-gamma) v + sqrt(gamma) eps, clamped.
ImageTensor diffusion_noise(const ImageTensor& v, double gamma, Rng& rng);

/// gaussian_noise, contrast or brightness. `rng` is only consumed by
/// gaussian_noise. Mixup and diffusion are rejected with "unknown-corruption".
ImageTensor common_corruption(const ImageTensor& v, CorruptionKind kind, double severity,
                              Rng& rng);

struct CorruptionResult {
  ImageTensor image;
  std::optional<double> lambda;  // set for mixup
};

/// Applies `spec` to `v`. Mixup needs `partner`; throws "missing-partner" otherwise.
CorruptionResult apply_corruption(const CorruptionSpec& spec, const ImageTensor& v,
                                  const ImageTensor* partner, Rng& rng);

}  // namespace vord
