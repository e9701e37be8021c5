#include "lgb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lgb {

namespace {

void check_inputs(std::span<const Label> y_true, std::span<const double> y_prob) {
  if (y_true.size() != y_prob.size()) throw ValidationError("labels and probabilities differ in length");
  if (y_true.empty()) throw ValidationError("metrics need at least one sample");
  for (double p : y_prob) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("probability outside [0, 1]");
  }
}

}  // namespace

double accuracy(std::span<const Label> y_true, std::span<const double> y_prob) {
  check_inputs(y_true, y_prob);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) correct += decide(y_prob[i]) == y_true[i];
  return static_cast<double>(correct) / static_cast<double>(y_true.size());
}

double roc_auc(std::span<const Label> y_true, std::span<const double> y_prob) {
  check_inputs(y_true, y_prob);
  const std::size_t n = y_true.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y_prob[a] < y_prob[b]; });

  // Mid-ranks (1-based) over tie groups.
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && y_prob[order[j + 1]] == y_prob[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double positives = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (y_true[i] == Label::bot) {
      positives += 1.0;
      rank_sum += rank[i];
    }
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw DegenerateLabelsError("ROC-AUC undefined: labels contain a single class");
  }
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

RunMetrics compute_metrics(std::span<const Label> y_true, std::span<const double> y_prob) {
  check_inputs(y_true, y_prob);
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const Label pred = decide(y_prob[i]);
    correct += pred == y_true[i];
    if (pred == Label::bot && y_true[i] == Label::bot) ++tp;
    if (pred == Label::bot && y_true[i] == Label::human) ++fp;
    if (pred == Label::human && y_true[i] == Label::bot) ++fn;
  }
  RunMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(y_true.size());
  const std::size_t denom = 2 * tp + fp + fn;
  m.f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  try {
    m.roc_auc = roc_auc(y_true, y_prob);
  } catch (const DegenerateLabelsError& e) {
    m.auc_error = e.what();
  }
  return m;
}

nlohmann::json RunMetrics::to_json() const {
  nlohmann::json j = {{"accuracy", accuracy}, {"f1", f1}};
  j["roc_auc"] = roc_auc ? nlohmann::json(*roc_auc) : nlohmann::json(nullptr);
  if (!auc_error.empty()) j["auc_error"] = auc_error;
  return j;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  const double n = static_cast<double>(values.size());
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / n);
  return r;
}

MetricsReport MetricsReport::aggregate(std::vector<RunMetrics> runs) {
  if (runs.empty()) throw ValidationError("metrics report needs at least one run");
  MetricsReport r;
  std::vector<double> acc, f1, auc;
  bool auc_ok = true;
  for (const auto& m : runs) {
    acc.push_back(m.accuracy);
    f1.push_back(m.f1);
    if (m.roc_auc) {
      auc.push_back(*m.roc_auc);
    } else {
      auc_ok = false;
    }
  }
  r.accuracy = mean_std(acc);
  r.f1 = mean_std(f1);
  if (auc_ok) r.roc_auc = mean_std(auc);
  r.runs = std::move(runs);
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  auto ms = [](const MeanStd& m) { return nlohmann::json{{"mean", m.mean}, {"std", m.std}}; };
  nlohmann::json runs_json = nlohmann::json::array();
  for (const auto& m : runs) runs_json.push_back(m.to_json());
  nlohmann::json j = {{"accuracy", ms(accuracy)}, {"f1", ms(f1)}, {"runs", runs_json}};
  j["roc_auc"] = roc_auc ? ms(*roc_auc) : nlohmann::json(nullptr);
  return j;
}

}  // namespace lgb
