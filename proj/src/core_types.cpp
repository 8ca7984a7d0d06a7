#include "vord/core_types.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace vord {

VordError::VordError(std::string code, const std::string& detail)
    : std::runtime_error(detail.empty() ? code : code + ": " + detail),
      code_(std::move(code)) {}

ImageTensor::ImageTensor(int height, int width, int channels, float fill)
    : ImageTensor(height, width, channels,
                  std::vector<float>(static_cast<std::size_t>(std::max(height, 0)) *
                                         std::max(width, 0) * std::max(channels, 0),
                                     fill)) {}

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw VordError("invalid-shape", "image dimensions must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw VordError("invalid-shape", "data length does not match H*W*C");
  }
  for (float& v : data_) {
    if (!std::isfinite(v)) throw VordError("invalid-pixel", "non-finite pixel value");
    v = std::clamp(v, 0.0f, 1.0f);
  }
}

float ImageTensor::mean() const {
  if (data_.empty()) return 0.0f;
  double acc = 0.0;
  for (float v : data_) acc += v;
  return static_cast<float>(acc / static_cast<double>(data_.size()));
}

double TokenDistribution::sum() const {
  return std::accumulate(probs.begin(), probs.end(), 0.0);
}

bool TokenDistribution::is_normalized(double tol) const {
  if (masked) return false;
  for (double p : probs) {
    if (!(p >= 0.0)) return false;
  }
  return std::abs(sum() - 1.0) <= tol;
}

std::size_t TokenDistribution::argmax() const {
  return static_cast<std::size_t>(
      std::distance(probs.begin(), std::max_element(probs.begin(), probs.end())));
}

void Vocabulary::validate() const {
  if (size <= 0) throw VordError("invalid-vocabulary", "size must be positive");
  if (bos_id == eos_id) throw VordError("invalid-vocabulary", "bos_id equals eos_id");
  if (bos_id < 0 || bos_id >= size || eos_id < 0 || eos_id >= size) {
    throw VordError("invalid-vocabulary", "special token out of range");
  }
  if (!labels.empty() && static_cast<int>(labels.size()) != size) {
    throw VordError("invalid-vocabulary", "labels length differs from size");
  }
}

std::string Vocabulary::label(TokenId id) const {
  if (id >= 0 && static_cast<std::size_t>(id) < labels.size()) return labels[id];
  return "<" + std::to_string(id) + ">";
}

TokenDistribution softmax(const LogitsVector& logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw VordError("invalid-temperature", "temperature must be positive");
  }
  if (logits.values.empty()) throw VordError("invalid-logits", "empty logits");
  double max_logit = -INFINITY;
  for (double v : logits.values) {
    if (!std::isfinite(v)) throw VordError("invalid-logits", "non-finite logit");
    max_logit = std::max(max_logit, v);
  }
  TokenDistribution out;
  out.probs.resize(logits.values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.values.size(); ++i) {
    out.probs[i] = std::exp((logits.values[i] - max_logit) / temperature);
    total += out.probs[i];
  }
  for (double& p : out.probs) p /= total;
  return out;
}

TokenDistribution normalize(const TokenDistribution& dist) {
  double total = 0.0;
  for (double p : dist.probs) {
    if (p < 0.0 || !std::isfinite(p)) {
      throw VordError("invalid-distribution", "negative or non-finite entry");
    }
    total += p;
  }
  if (!(total > 0.0)) throw VordError("empty-support", "all entries are zero");
  TokenDistribution out;
  out.probs.resize(dist.probs.size());
  for (std::size_t i = 0; i < dist.probs.size(); ++i) out.probs[i] = dist.probs[i] / total;
  return out;
}

namespace {

static_assert(sizeof(float) == 4);

void put_f32_le(std::string& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float get_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::string encode_vten(const ImageTensor& image) {
  std::string out = "VTEN v1 " + std::to_string(image.height()) + " " +
                    std::to_string(image.width()) + " " +
                    std::to_string(image.channels()) + "\n";
  out.reserve(out.size() + image.size() * 4);
  for (float v : image.data()) put_f32_le(out, v);
  return out;
}

ImageTensor decode_vten(std::string_view bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos) throw VordError("bad-vten", "missing header line");
  std::istringstream header{std::string(bytes.substr(0, newline))};
  std::string magic, version;
  long long h = 0, w = 0, c = 0;
  if (!(header >> magic >> version >> h >> w >> c) || magic != "VTEN" || version != "v1") {
    throw VordError("bad-vten", "malformed header");
  }
  std::string rest;
  if (header >> rest) throw VordError("bad-vten", "trailing header fields");
  if (h <= 0 || w <= 0 || c <= 0 || h * w * c > (1LL << 31)) {
    throw VordError("bad-vten", "invalid dimensions");
  }
  const std::size_t count = static_cast<std::size_t>(h * w * c);
  const auto payload = bytes.substr(newline + 1);
  if (payload.size() != count * 4) throw VordError("bad-vten", "payload size mismatch");
  std::vector<float> data(count);
  const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
  for (std::size_t i = 0; i < count; ++i) data[i] = get_f32_le(p + 4 * i);
  return ImageTensor(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c),
                     std::move(data));
}

}  // namespace vord
