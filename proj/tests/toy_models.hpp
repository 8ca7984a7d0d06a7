#pragma once

// Small models for tests: an encoder that passes pixels through and a linear
// softmax model whose gradient is easy to write by hand.

#include <vector>

#include "vord/vord_loss.hpp"

namespace testing_models {

// One visual token holding every pixel value.
class PixelEncoder final : public vord::VisualEncoder {
 public:
  vord::VisualEmbedding encode(const vord::ImageTensor& image) const override {
    std::vector<double> v(image.data().begin(), image.data().end());
    const std::size_t n = v.size();
    return vord::VisualEmbedding(1, n, std::move(v));
  }
};

// logits[t] = sum_j W[t][j] pooled[j] + b[t] + step_gain[t] * (prefix length - 1).
class LinearModel final : public vord::TrainableModel {
 public:
  LinearModel(vord::Vocabulary vocab, std::size_t dim, std::vector<double> theta,
              std::vector<double> step_gain = {})
      : vocab_(std::move(vocab)), dim_(dim), theta_(std::move(theta)),
        step_gain_(std::move(step_gain)) {
    if (step_gain_.empty()) step_gain_.assign(vocab_.size, 0.0);
  }

  static std::size_t count(int vocab, std::size_t dim) { return vocab * (dim + 1); }

  vord::LogitsVector next_token_logits(const vord::VisualEmbedding& visual,
                                       std::span<const vord::TokenId>,
                                       std::span<const vord::TokenId> prefix) const override {
    const auto x = vord::mean_pool(visual);
    vord::LogitsVector out;
    out.values.resize(vocab_.size);
    for (int t = 0; t < vocab_.size; ++t) {
      const double* row = &theta_[t * (dim_ + 1)];
      double acc = row[dim_];
      for (std::size_t j = 0; j < dim_; ++j) acc += row[j] * x[j];
      out.values[t] = acc + step_gain_[t] * static_cast<double>(prefix.size() - 1);
    }
    return out;
  }
  const vord::Vocabulary& vocabulary() const override { return vocab_; }
  std::span<const double> parameters() const override { return theta_; }
  void set_parameters(std::span<const double> theta) override {
    theta_.assign(theta.begin(), theta.end());
  }
  void accumulate_logit_vjp(const vord::VisualEmbedding& visual, std::span<const vord::TokenId>,
                            std::span<const vord::TokenId>, std::span<const double> dlogits,
                            std::span<double> grad) const override {
    const auto x = vord::mean_pool(visual);
    for (int t = 0; t < vocab_.size; ++t) {
      double* row = &grad[t * (dim_ + 1)];
      for (std::size_t j = 0; j < dim_; ++j) row[j] += dlogits[t] * x[j];
      row[dim_] += dlogits[t];
    }
  }

 private:
  vord::Vocabulary vocab_;
  std::size_t dim_;
  std::vector<double> theta_;
  std::vector<double> step_gain_;
};

}  // namespace testing_models
