#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgb/common.hpp"

namespace lgb {

inline constexpr double kDecisionThreshold = 0.5;

/// Predicted bot iff probability >= threshold.
inline Label decide(double bot_probability, double threshold = kDecisionThreshold) {
  return bot_probability >= threshold ? Label::bot : Label::human;
}

struct RunMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;  // positive class: bot
  std::optional<double> roc_auc;
  std::string auc_error;  // set when AUC is undefined (single-class labels)

  nlohmann::json to_json() const;
};

/// Accuracy and F1 at the fixed threshold, ROC-AUC by the rank statistic
/// with half credit for ties.
RunMetrics compute_metrics(std::span<const Label> y_true, std::span<const double> y_prob);

/// Throws DegenerateLabelsError when y_true holds a single class.
double roc_auc(std::span<const Label> y_true, std::span<const double> y_prob);

double accuracy(std::span<const Label> y_true, std::span<const double> y_prob);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

MeanStd mean_std(std::span<const double> values);

struct MetricsReport {
  MeanStd accuracy;
  MeanStd f1;
  std::optional<MeanStd> roc_auc;  // absent if any run had undefined AUC
  std::vector<RunMetrics> runs;

  static MetricsReport aggregate(std::vector<RunMetrics> runs);
  nlohmann::json to_json() const;
};

}  // namespace lgb
