#pragma once

#include <cstdint>
#include <vector>

#include "vord/core_types.hpp"

namespace vord {

/// N visual tokens of dimension D, stored row-major.
class VisualEmbedding {
 public:
  VisualEmbedding() = default;
  VisualEmbedding(std::size_t num_tokens, std::size_t dim, std::vector<double> values);
  explicit VisualEmbedding(const std::vector<std::vector<double>>& tokens);

  std::size_t num_tokens() const noexcept { return num_tokens_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> token(std::size_t i) const {
    return std::span<const double>(values_).subspan(i * dim_, dim_);
  }
  std::span<const double> values() const noexcept { return values_; }

  VisualEmbedding scaled(double factor) const;

 private:
  std::size_t num_tokens_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

class VisualEncoder {
 public:
  virtual ~VisualEncoder() = default;
  virtual VisualEmbedding encode(const ImageTensor& image) const = 0;
};

/// Splits the image into non-overlapping patch_size x patch_size patches,
/// flattens each (y, x, c order) and multiplies by a fixed Gaussian projection.
class ToyPatchEncoder final : public VisualEncoder {
 public:
  ToyPatchEncoder(int patch_size, int channels, int embed_dim, std::uint64_t seed);

  VisualEmbedding encode(const ImageTensor& image) const override;

  int patch_size() const noexcept { return patch_size_; }
  int channels() const noexcept { return channels_; }
  int embed_dim() const noexcept { return embed_dim_; }
  int patch_dim() const noexcept { return patch_size_ * patch_size_ * channels_; }
  /// embed_dim x patch_dim, row-major.
  const std::vector<double>& projection() const noexcept { return projection_; }

 private:
  int patch_size_;
  int channels_;
  int embed_dim_;
  std::vector<double> projection_;
};

std::vector<double> mean_pool(const VisualEmbedding& e);

/// arccos of the cosine between the pooled embeddings, divided by pi.
/// Throws "degenerate-embedding" for zero-norm pooled vectors.
double adaptive_margin(const VisualEmbedding& clean, const VisualEmbedding& modified);

/// Same quantity on already-pooled vectors.
double angular_margin(std::span<const double> a, std::span<const double> b);

}  // namespace vord
