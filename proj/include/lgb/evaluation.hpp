#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgb/graph_store.hpp"
#include "lgb/metrics.hpp"
#include "lgb/training.hpp"

namespace lgb {

// ---------------------------------------------------------------------------
// Accuracy broken down by neighbor count.

struct NeighborBucketAccuracy {
  std::size_t k = 0;  // bucket start; the last bucket holds every k >= cap
  bool capped = false;
  std::size_t support = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;

  std::string label() const { return capped ? std::to_string(k) + "+" : std::to_string(k); }
};

/// Rows for occupied buckets only, ascending k. bot_probability is parallel to nodes.
std::vector<NeighborBucketAccuracy> accuracy_by_neighbor_count(const SocialGraph& g,
                                                               std::span<const NodeId> nodes,
                                                               std::span<const double> bot_probability,
                                                               std::size_t cap = 10);

// ---------------------------------------------------------------------------
// Synthetic social graphs.

struct SyntheticSpec {
  std::size_t n_nodes = 1000;
  double bot_fraction = 0.5;
  /// Share of users whose text carries class tokens; the rest write only
  /// shared-pool text.
  double text_signal = 0.6;
  /// Per content token, chance of drawing from the class pool for an
  /// informative user.
  double token_purity = 0.35;
  double p_intra = 0.01;
  double p_inter = 0.001;
  double isolated_fraction = 0.3;
  /// Log-normal spread of per-node edge propensity (0 gives a plain block model).
  double degree_dispersion = 0.0;
  std::uint64_t seed = 0;

  std::size_t class_pool_size = 300;
  std::size_t shared_pool_size = 2000;
  std::size_t tweets_per_user = 4;
  std::size_t tokens_per_tweet = 8;
  std::size_t description_tokens = 8;
  /// Fraction of each class pool renamed under vocab_tag (domain shift).
  double vocab_shift = 0.0;
  std::string vocab_tag = "b";
  std::string id_prefix = "u";
  std::array<double, 3> split_ratios = {0.7, 0.2, 0.1};

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static SyntheticSpec from_json(const nlohmann::json& j);
};

/// Labeled graph with splits recorded on the nodes. Throws ValidationError
/// for an infeasible spec.
SocialGraph generate_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Robustness protocols.

enum class RobustnessMode { label, edge, feature };

std::string to_string(RobustnessMode m);
RobustnessMode parse_robustness_mode(const std::string& text);

/// Subsamples each class of the training ids to `fraction`, keeping order.
std::vector<NodeId> subsample_labels(const SocialGraph& g, const std::vector<NodeId>& train, double fraction,
                                     std::uint64_t seed);
/// Keeps round(fraction * E) undirected pairs chosen uniformly.
SocialGraph subsample_edges(const SocialGraph& g, double fraction, std::uint64_t seed);
/// With the given probability per user, deletes round(10%) of the content
/// tokens uniformly at random.
std::vector<TextSequence> corrupt_sequences(const std::vector<TextSequence>& sequences, double probability,
                                            std::uint64_t seed, double delete_share = 0.1);

struct RobustnessLevel {
  double level = 0.0;
  MetricsReport report;
};

struct RobustnessResult {
  RobustnessMode mode = RobustnessMode::label;
  MetricsReport baseline;
  std::vector<RobustnessLevel> levels;
};

RobustnessResult run_robustness(const PipelineInputs& in, const PipelineConfig& cfg, RobustnessMode mode,
                                const std::vector<double>& levels, const std::vector<std::uint64_t>& seeds);

// ---------------------------------------------------------------------------
// Feedback study: continue training on K labeled samples per class from a
// new dataset.

struct FeedbackPoint {
  std::size_t k = 0;
  RunMetrics metrics;
};

std::vector<FeedbackPoint> run_feedback_study(const ModelBundle& trained_on_a, const PipelineInputs& b,
                                              const PipelineConfig& cfg, const std::vector<std::size_t>& ks,
                                              std::uint64_t seed);

/// Bot probabilities of a deployed bundle on every node of g (fusion path).
std::vector<double> predict_graph(const ModelBundle& b, const SocialGraph& g);

/// Metric triple of `probability` (all nodes) restricted to `ids`.
RunMetrics metrics_on(const SocialGraph& g, const std::vector<NodeId>& ids, std::span<const double> probability);

/// Machine-readable summary for one run.
nlohmann::json run_summary(const PipelineResult& r, const PipelineConfig& cfg, std::uint64_t seed);

/// {0, 1, 2, 3, 4}
std::vector<std::uint64_t> default_seeds();

}  // namespace lgb
