#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vord {

/// Error carrying a stable machine-readable code such as "invalid-logits".
class VordError : public std::runtime_error {
 public:
  VordError(std::string code, const std::string& detail = {});

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

/// Dense H x W x C image, row-major (channel fastest). Pixels are kept in [0,1].
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, int channels, float fill = 0.0f);
  /// Takes ownership of `data`, clamping every element into [0,1].
  ImageTensor(int height, int width, int channels, std::vector<float> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> data() const noexcept { return data_; }

  float at(int y, int x, int c) const { return data_[index(y, x, c)]; }
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  bool same_shape(const ImageTensor& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  float mean() const;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Raw pre-softmax scores; all values finite.
struct LogitsVector {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
};

/// Probability vector over the vocabulary. `masked` marks the transient
/// post-masking state that has not been renormalized yet.
struct TokenDistribution {
  std::vector<double> probs;
  bool masked = false;

  std::size_t size() const noexcept { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
  double sum() const;
  bool is_normalized(double tol = 1e-9) const;
  std::size_t argmax() const;  // lowest index on ties
};

struct Vocabulary {
  int size = 0;
  TokenId bos_id = 0;
  TokenId eos_id = 1;
  std::vector<std::string> labels;

  /// Throws "invalid-vocabulary" when the invariants do not hold.
  void validate() const;
  std::string label(TokenId id) const;
};

/// Numerically stable softmax with temperature.
TokenDistribution softmax(const LogitsVector& logits, double temperature = 1.0);

/// Divides by the sum. Throws "empty-support" on an all-zero vector.
TokenDistribution normalize(const TokenDistribution& dist);

// VTEN: ASCII header "VTEN v1 <H> <W> <C>\n" then H*W*C little-endian f32.
std::string encode_vten(const ImageTensor& image);
ImageTensor decode_vten(std::string_view bytes);

}  // namespace vord
