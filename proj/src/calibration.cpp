#include "vord/calibration.hpp"

#include <algorithm>
#include <cmath>

namespace vord {

int bin_index(double confidence, int num_bins) {
  const int b = static_cast<int>(std::floor(confidence * num_bins));
  return std::clamp(b, 0, num_bins - 1);
}

CalibrationReport ece(const std::vector<PredictionRecord>& records, int num_bins) {
  if (records.empty()) throw VordError("no-data", "no prediction records");
  if (num_bins < 1) throw VordError("invalid-config", "number of bins must be >= 1");

  CalibrationReport report;
  report.num_bins = num_bins;
  report.n_total = records.size();
  std::vector<double> conf_sum(num_bins, 0.0), correct(num_bins, 0.0);
  report.bins.resize(num_bins);
  for (const auto& r : records) {
    if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) {
      throw VordError("invalid-confidence", "confidence outside [0,1]");
    }
    const int b = bin_index(r.confidence, num_bins);
    ++report.bins[b].count;
    conf_sum[b] += r.confidence;
    correct[b] += r.correct ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(records.size());
  for (int b = 0; b < num_bins; ++b) {
    auto& bin = report.bins[b];
    if (bin.count == 0) continue;
    const double c = static_cast<double>(bin.count);
    bin.mean_confidence = conf_sum[b] / c;
    bin.mean_accuracy = correct[b] / c;
    report.ece += (c / n) * std::abs(bin.mean_accuracy - bin.mean_confidence);
  }
  return report;
}

BinaryMetrics binary_metrics(const std::vector<Answer>& predictions,
                             const std::vector<Answer>& labels) {
  if (predictions.size() != labels.size()) {
    throw VordError("length-mismatch", "predictions and labels differ in length");
  }
  if (predictions.empty()) throw VordError("no-data", "no predictions");
  BinaryMetrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred_yes = predictions[i] == Answer::kYes;
    const bool label_yes = labels[i] == Answer::kYes;
    if (pred_yes && label_yes) ++m.tp;
    else if (pred_yes) ++m.fp;
    else if (label_yes) ++m.fn;
    else ++m.tn;
  }
  const auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  m.accuracy = ratio(m.tp + m.tn, labels.size());
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

AnswerConfidence answer_confidence(const TokenDistribution& final_dist, TokenId yes_id,
                                   TokenId no_id) {
  const double yes = final_dist[static_cast<std::size_t>(yes_id)];
  const double no = final_dist[static_cast<std::size_t>(no_id)];
  if (!(yes + no > 0.0)) throw VordError("no-answer-mass", "yes and no both have zero mass");
  AnswerConfidence out;
  out.answer = yes >= no ? Answer::kYes : Answer::kNo;
  out.confidence = std::max(yes, no) / (yes + no);
  return out;
}

}  // namespace vord
