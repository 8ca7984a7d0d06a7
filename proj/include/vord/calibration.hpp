#pragma once

#include <string>
#include <vector>

#include "vord/core_types.hpp"

namespace vord {

struct PredictionRecord {
  double confidence = 0.0;
  bool correct = false;
};

struct CalibrationBin {
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double mean_accuracy = 0.0;
};

struct CalibrationReport {
  double ece = 0.0;
  std::vector<CalibrationBin> bins;
  std::size_t n_total = 0;
  int num_bins = 15;
};

inline constexpr int kDefaultBins = 15;

/// Equal-width bin index for a confidence in [0,1]; the last bin is right-closed.
int bin_index(double confidence, int num_bins);

/// Expected calibration error over equal-width bins.
/// Throws "no-data" on empty input and "invalid-confidence" outside [0,1].
CalibrationReport ece(const std::vector<PredictionRecord>& records, int num_bins = kDefaultBins);

enum class Answer { kYes, kNo };

struct BinaryMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Confusion-matrix metrics with "yes" as the positive class. Ratios with a
/// zero denominator are reported as 0. Throws "length-mismatch" / "no-data".
BinaryMetrics binary_metrics(const std::vector<Answer>& predictions,
                             const std::vector<Answer>& labels);

struct AnswerConfidence {
  Answer answer = Answer::kYes;
  double confidence = 0.5;
};

/// Contrasts only the yes/no probabilities: confidence is max/(p_yes + p_no),
/// ties go to "yes". Throws "no-answer-mass" when both are zero.
AnswerConfidence answer_confidence(const TokenDistribution& final_dist, TokenId yes_id,
                                   TokenId no_id);

}  // namespace vord
