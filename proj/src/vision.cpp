#include "vord/vision.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vord/rng.hpp"

namespace vord {

VisualEmbedding::VisualEmbedding(std::size_t num_tokens, std::size_t dim,
                                 std::vector<double> values)
    : num_tokens_(num_tokens), dim_(dim), values_(std::move(values)) {
  if (num_tokens_ == 0 || dim_ == 0) {
    throw VordError("degenerate-embedding", "embedding needs at least one token of dim >= 1");
  }
  if (values_.size() != num_tokens_ * dim_) {
    throw VordError("degenerate-embedding", "value count does not match N*D");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw VordError("degenerate-embedding", "non-finite value");
  }
}

VisualEmbedding::VisualEmbedding(const std::vector<std::vector<double>>& tokens) {
  if (tokens.empty()) throw VordError("degenerate-embedding", "no tokens");
  const std::size_t dim = tokens.front().size();
  std::vector<double> flat;
  flat.reserve(tokens.size() * dim);
  for (const auto& t : tokens) {
    if (t.size() != dim) throw VordError("degenerate-embedding", "token dimensions differ");
    flat.insert(flat.end(), t.begin(), t.end());
  }
  *this = VisualEmbedding(tokens.size(), dim, std::move(flat));
}

VisualEmbedding VisualEmbedding::scaled(double factor) const {
  std::vector<double> out(values_);
  for (double& v : out) v *= factor;
  return VisualEmbedding(num_tokens_, dim_, std::move(out));
}

ToyPatchEncoder::ToyPatchEncoder(int patch_size, int channels, int embed_dim,
                                 std::uint64_t seed)
    : patch_size_(patch_size), channels_(channels), embed_dim_(embed_dim) {
  if (patch_size <= 0 || channels <= 0 || embed_dim <= 0) {
    throw VordError("invalid-encoder", "encoder dimensions must be positive");
  }
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(patch_dim()));
  projection_.resize(static_cast<std::size_t>(embed_dim_) * patch_dim());
  for (double& w : projection_) w = rng.normal() * scale;
}

VisualEmbedding ToyPatchEncoder::encode(const ImageTensor& image) const {
  if (image.channels() != channels_ || image.height() % patch_size_ != 0 ||
      image.width() % patch_size_ != 0) {
    throw VordError("shape-mismatch", "image shape incompatible with the patch encoder");
  }
  const int rows = image.height() / patch_size_;
  const int cols = image.width() / patch_size_;
  const std::size_t pd = static_cast<std::size_t>(patch_dim());
  std::vector<double> patch(pd);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(rows) * cols * embed_dim_);
  for (int pr = 0; pr < rows; ++pr) {
    for (int pc = 0; pc < cols; ++pc) {
      std::size_t k = 0;
      for (int y = 0; y < patch_size_; ++y) {
        for (int x = 0; x < patch_size_; ++x) {
          for (int c = 0; c < channels_; ++c) {
            patch[k++] = image.at(pr * patch_size_ + y, pc * patch_size_ + x, c);
          }
        }
      }
      for (int d = 0; d < embed_dim_; ++d) {
        const double* row = projection_.data() + static_cast<std::size_t>(d) * pd;
        double acc = 0.0;
        for (std::size_t i = 0; i < pd; ++i) acc += row[i] * patch[i];
        out.push_back(acc);
      }
    }
  }
  return VisualEmbedding(static_cast<std::size_t>(rows) * cols, embed_dim_, std::move(out));
}

std::vector<double> mean_pool(const VisualEmbedding& e) {
  if (e.num_tokens() == 0) throw VordError("degenerate-embedding", "no tokens");
  std::vector<double> pooled(e.dim(), 0.0);
  for (std::size_t t = 0; t < e.num_tokens(); ++t) {
    const auto tok = e.token(t);
    for (std::size_t d = 0; d < e.dim(); ++d) pooled[d] += tok[d];
  }
  const double n = static_cast<double>(e.num_tokens());
  for (double& v : pooled) v /= n;
  return pooled;
}

double angular_margin(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw VordError("shape-mismatch", "embedding dimensions differ");
  double na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw VordError("degenerate-embedding", "pooled embedding has zero norm");
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  // Half-angle form of arccos(cosine): exact zero for parallel inputs and no
  // precision loss near cosine = +-1.
  double diff = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ua = a[i] / na;
    const double ub = b[i] / nb;
    diff += (ua - ub) * (ua - ub);
    sum += (ua + ub) * (ua + ub);
  }
  const double angle = 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
  return std::clamp(angle / std::numbers::pi, 0.0, 1.0);
}

double adaptive_margin(const VisualEmbedding& clean, const VisualEmbedding& modified) {
  if (clean.dim() != modified.dim()) {
    throw VordError("shape-mismatch", "embedding dimensions differ");
  }
  return angular_margin(mean_pool(clean), mean_pool(modified));
}

}  // namespace vord
