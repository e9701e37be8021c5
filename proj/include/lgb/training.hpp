#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgb/encoders.hpp"
#include "lgb/graph_store.hpp"
#include "lgb/metrics.hpp"
#include "lgb/model.hpp"

namespace lgb {

enum class Stage { sft, pretrain, finetune };

std::string to_string(Stage s);
Stage parse_stage(const std::string& text);

struct TrainConfig {
  Stage stage = Stage::sft;
  double learning_rate = 1e-5;
  double weight_decay = 1e-2;
  int max_epochs = 50;
  int patience = 10;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;
  std::size_t batch_size = 32;  // 0 means full batch
  double temperature = 0.4;     // pretrain only
  double drop_edge_1 = 0.2;     // pretrain only
  double drop_edge_2 = 0.4;

  /// Reference optimizer settings for each stage.
  static TrainConfig defaults(Stage stage);

  /// Throws ValidationError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  std::string hash() const;
};

/// Raised when the loss or a parameter goes non-finite. Carries the state at
/// the start of the failing epoch.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, ModelBundle last_finite)
      : Error(what), last_finite_(std::make_shared<ModelBundle>(std::move(last_finite))) {}
  const ModelBundle& last_finite() const { return *last_finite_; }

 private:
  std::shared_ptr<ModelBundle> last_finite_;
};

/// AdamW with decoupled weight decay over an ordered list of tensors.
class AdamW {
 public:
  AdamW(std::vector<Matrix*> params, double learning_rate, double weight_decay,
        double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// grads must line up with the parameter list given at construction.
  void step(const std::vector<const Matrix*>& grads);
  long steps() const { return t_; }

 private:
  std::vector<Matrix*> params_;
  std::vector<Matrix> m_, v_;
  double lr_, wd_, beta1_, beta2_, eps_;
  long t_ = 0;
};

/// Append-only tab separated log: stage, epoch, split, loss, accuracy, f1, auc.
class MetricsLog {
 public:
  explicit MetricsLog(const std::filesystem::path& path);
  void write(const std::string& stage, int epoch, const std::string& split, double loss,
             const RunMetrics* metrics);

 private:
  std::ofstream out_;
};

struct SplitEval {
  double loss = 0.0;
  RunMetrics metrics;
};

struct EpochRecord {
  int epoch = 0;
  SplitEval train;
  std::optional<SplitEval> val;
};

struct StageResult {
  ModelBundle bundle;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

struct LabeledSequence {
  std::vector<std::int32_t> ids;
  Label label = Label::human;
};

/// Supervised training of the text encoder and its head. Returns the best
/// validation checkpoint (training accuracy is monitored if val is empty).
StageResult sft_language_model(ModelBundle bundle, std::span<const LabeledSequence> train,
                               std::span<const LabeledSequence> val, const TrainConfig& cfg,
                               MetricsLog* log = nullptr);

struct GraphView {
  const SocialGraph* base = nullptr;
  std::vector<bool> retained;  // parallel to base->undirected_edges()
  std::uint64_t seed = 0;

  std::size_t num_retained() const;
  Adjacency adjacency() const;
};

/// Independent edge dropping per view, deterministic in seed.
std::pair<GraphView, GraphView> generate_views(const SocialGraph& g, double p1, double p2,
                                                std::uint64_t seed);

struct InfoNceResult {
  double loss = 0.0;
  Matrix d_h1;
  Matrix d_h2;
};

/// Symmetric InfoNCE with cosine similarity, inter-view and intra-view
/// negatives, averaged over 2N terms.
double infonce_loss(const Matrix& h1, const Matrix& h2, double tau);
InfoNceResult infonce_loss_and_grad(const Matrix& h1, const Matrix& h2, double tau);

struct PretrainResult {
  ModelBundle bundle;
  std::vector<double> loss_history;
};

/// Contrastive pre-training of the graph encoder over every node. x is the
/// frozen text feature matrix.
PretrainResult pretrain_gnn(ModelBundle bundle, const SocialGraph& g, const Matrix& x,
                            const TrainConfig& cfg, MetricsLog* log = nullptr);

struct LabeledNodes {
  std::vector<std::size_t> rows;
  std::vector<Label> labels;

  std::size_t size() const { return rows.size(); }
  static LabeledNodes from_ids(const SocialGraph& g, const std::vector<NodeId>& ids);
};

/// Trains graph encoder and fusion head on frozen X; the text encoder is not touched.
StageResult finetune_fusion(ModelBundle bundle, const SocialGraph& g, const Matrix& x,
                            const LabeledNodes& train, const LabeledNodes& val,
                            const TrainConfig& cfg, MetricsLog* log = nullptr);

// ---------------------------------------------------------------------------
// Inference helpers.

std::vector<std::vector<std::int32_t>> node_token_ids(const ModelBundle& b, const SocialGraph& g);
/// N x text_dim, row i for node i.
Matrix node_features(const ModelBundle& b, const SocialGraph& g);

/// Bot probability from the text head alone.
std::vector<double> lm_bot_probabilities(const ModelBundle& b, const Matrix& x);
/// Bot probability from the fusion path under the bundle's fusion mode.
std::vector<double> fused_bot_probabilities(const ModelBundle& b, const Matrix& x,
                                            const Adjacency& adj);

// ---------------------------------------------------------------------------
// Full pipeline and ablations.

enum class Variant {
  full,
  no_sft,
  no_finetune,
  no_pretrain,
  no_concat,
  fuse_average,
  fuse_max,
  lm_only,
  graph_only,  // untrained text features, graph representation alone
};

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);
const std::vector<Variant>& all_variants();

struct PipelineConfig {
  ModelConfig model;
  TrainConfig sft = TrainConfig::defaults(Stage::sft);
  TrainConfig pretrain = TrainConfig::defaults(Stage::pretrain);
  TrainConfig finetune = TrainConfig::defaults(Stage::finetune);
  std::size_t vocab_max_size = 30000;
  std::size_t vocab_min_count = 1;

  /// Small shapes and larger step sizes that converge in seconds on one CPU.
  static PipelineConfig desk_scale();
  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
};

struct PipelineResult {
  Variant variant = Variant::full;
  ModelBundle bundle;
  std::vector<double> bot_probability;  // every node, graph order
  RunMetrics val;
  RunMetrics test;
  bool has_val = false;
  std::vector<EpochRecord> sft_history;
  std::vector<double> pretrain_history;
  std::vector<EpochRecord> finetune_history;
};

struct PipelineInputs {
  const SocialGraph* graph = nullptr;
  DatasetSplit split;
  /// Built from every node's sequence when absent.
  std::optional<Vocabulary> vocab;
  /// Per-node sequences replacing the ones built from the records.
  std::optional<std::vector<TextSequence>> sequences;
  /// Starting point instead of a fresh init (feedback continuation).
  const ModelBundle* warm_start = nullptr;
};

std::vector<TextSequence> node_sequences(const SocialGraph& g, const SegmentLimits& limits);
Vocabulary build_vocabulary(const std::vector<TextSequence>& sequences, const PipelineConfig& cfg);
Vocabulary build_vocabulary(const SocialGraph& g, const PipelineConfig& cfg);

/// Runs several variants for one seed, sharing identical upstream stages.
std::vector<PipelineResult> run_variants(const PipelineInputs& in, const PipelineConfig& cfg,
                                         std::span<const Variant> variants, std::uint64_t seed,
                                         MetricsLog* log = nullptr);

PipelineResult run_pipeline(const PipelineInputs& in, const PipelineConfig& cfg, Variant variant,
                            std::uint64_t seed, MetricsLog* log = nullptr);

/// Test-split metric triple for one variant.
RunMetrics ablation_variant(const PipelineInputs& in, const PipelineConfig& cfg, Variant variant,
                            std::uint64_t seed);

}  // namespace lgb
