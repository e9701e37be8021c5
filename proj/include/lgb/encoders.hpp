#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lgb/common.hpp"
#include "lgb/graph_store.hpp"
#include "lgb/random.hpp"
#include "lgb/tensor.hpp"

namespace lgb {

// ---------------------------------------------------------------------------
// Text encoder: token embedding, optional single-head self-attention, then
// residual mixing layers h <- h + tanh(h W + b), mean pooled over positions.
// No positional features, so the pooled output is invariant to token order.

struct TextEncoderConfig {
  std::int64_t vocab_size = 0;
  std::int64_t dim = 64;
  int mixing_layers = 1;
  bool attention = false;
};

struct AttentionParams {
  Matrix query;  // d x d
  Matrix key;
  Matrix value;

  template <class Self, class F>
  static void visit(Self& self, F&& f, const std::string& prefix = "") {
    f(join_name(prefix, "query"), self.query);
    f(join_name(prefix, "key"), self.key);
    f(join_name(prefix, "value"), self.value);
  }
};

struct TextEncoderParams {
  TextEncoderConfig config;
  Matrix embedding;  // vocab x d
  std::optional<AttentionParams> attention;
  std::vector<Linear> mixing;

  static TextEncoderParams init(const TextEncoderConfig& cfg, Rng& rng);
  /// Mixing and attention layers that act as the identity (zero weights).
  static TextEncoderParams identity(const TextEncoderConfig& cfg, Matrix embedding);

  template <class Self, class F>
  static void visit(Self& self, F&& f, const std::string& prefix = "") {
    f(join_name(prefix, "embedding"), self.embedding);
    if (self.attention) AttentionParams::visit(*self.attention, f, join_name(prefix, "attention"));
    for (std::size_t i = 0; i < self.mixing.size(); ++i) {
      Linear::visit(self.mixing[i], f, join_name(prefix, "mixing" + std::to_string(i)));
    }
  }
};

/// Intermediate values kept by the forward pass for backward.
struct TextEncoderTrace {
  std::vector<std::int32_t> ids;
  Matrix embedded;
  Matrix attn_q, attn_k, attn_v, attn_p;
  std::vector<Matrix> layer_inputs;
  std::vector<Matrix> layer_acts;
};

/// Mean-pooled encoding (1 x d). Empty ids give the zero vector; ids outside
/// the vocabulary throw ValidationError.
Matrix text_encode(const TextEncoderParams& p, std::span<const std::int32_t> ids,
                   TextEncoderTrace* trace = nullptr);

/// Backpropagates d(loss)/d(pooled) into grad.
void text_encode_backward(const TextEncoderParams& p, const TextEncoderTrace& trace,
                          const Matrix& d_pooled, TextEncoderParams& grad);

/// Encodes every sequence; row i corresponds to sequences[i].
Matrix text_encode_all(const TextEncoderParams& p,
                       const std::vector<std::vector<std::int32_t>>& sequences);

// ---------------------------------------------------------------------------
// Graph encoders.

enum class GnnVariant { gcn, gin, gat };

std::string to_string(GnnVariant v);
GnnVariant parse_gnn_variant(const std::string& text);

/// Symmetric neighbor lists without self-loops.
struct Adjacency {
  std::vector<std::vector<std::size_t>> neighbors;

  std::size_t size() const { return neighbors.size(); }
  static Adjacency from_graph(const SocialGraph& g);
  static Adjacency from_pairs(std::size_t n, const std::vector<IndexPair>& pairs);
  /// Keeps pairs whose mask entry is true.
  static Adjacency from_pairs(std::size_t n, const std::vector<IndexPair>& pairs,
                              const std::vector<bool>& keep);
  std::size_t num_undirected_edges() const;
  /// Same graph with the node order permuted: new index of old node i is perm[i].
  Adjacency permuted(const std::vector<std::size_t>& perm) const;
};

struct GraphEncoderConfig {
  GnnVariant variant = GnnVariant::gin;
  std::int64_t input_dim = 64;
  std::int64_t hidden_dim = 64;
  std::int64_t output_dim = 64;
  int layers = 2;
  double gin_epsilon = 0.0;
  double gat_negative_slope = 0.2;
};

struct GnnLayer {
  Linear linear;         // GCN/GAT transform, GIN first perceptron layer
  Linear update;         // GIN second perceptron layer (empty otherwise)
  Matrix att_source;     // GAT 1 x out (empty otherwise)
  Matrix att_target;

  template <class Self, class F>
  static void visit(Self& self, F&& f, const std::string& prefix = "") {
    Linear::visit(self.linear, f, join_name(prefix, "linear"));
    if (self.update.weight.size() > 0) Linear::visit(self.update, f, join_name(prefix, "update"));
    if (self.att_source.size() > 0) {
      f(join_name(prefix, "att_source"), self.att_source);
      f(join_name(prefix, "att_target"), self.att_target);
    }
  }
};

struct GraphEncoderParams {
  GraphEncoderConfig config;
  std::vector<GnnLayer> layers;

  static GraphEncoderParams init(const GraphEncoderConfig& cfg, Rng& rng);

  template <class Self, class F>
  static void visit(Self& self, F&& f, const std::string& prefix = "") {
    for (std::size_t i = 0; i < self.layers.size(); ++i) {
      GnnLayer::visit(self.layers[i], f, join_name(prefix, "layer" + std::to_string(i)));
    }
  }
};

struct GnnLayerTrace {
  Matrix input;
  Matrix aggregated;   // GCN: A_hat H; GIN: (1+eps)H + sum of neighbors
  Matrix hidden;       // GIN perceptron hidden activation
  Matrix transformed;  // GAT: H W
  std::vector<std::vector<double>> alpha;  // GAT attention per (node, slot)
  std::vector<std::vector<double>> pre;    // GAT pre-activation scores
  Matrix output_preact;
  Matrix dropout;      // mask applied after the activation (empty if none)
};

struct GnnTrace {
  std::vector<GnnLayerTrace> layers;
};

struct ForwardOptions {
  double dropout = 0.0;
  Rng* rng = nullptr;  // required when dropout > 0
};

/// N x output_dim node representations. Throws ShapeError on mismatch.
Matrix gnn_forward(const GraphEncoderParams& p, const Matrix& x, const Adjacency& adj,
                   GnnTrace* trace = nullptr, const ForwardOptions& opts = {});

/// Accumulates parameter gradients; returns d(loss)/dX.
Matrix gnn_backward(const GraphEncoderParams& p, const Adjacency& adj, const GnnTrace& trace,
                    const Matrix& d_output, GraphEncoderParams& grad);

// ---------------------------------------------------------------------------
// Heads.

struct HeadParams {
  std::vector<Linear> layers;  // ReLU between layers; last layer emits 2 logits

  /// hidden_dim == 0 gives a single affine layer.
  static HeadParams init(std::int64_t input_dim, std::int64_t hidden_dim, Rng& rng);
  std::int64_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }

  template <class Self, class F>
  static void visit(Self& self, F&& f, const std::string& prefix = "") {
    for (std::size_t i = 0; i < self.layers.size(); ++i) {
      Linear::visit(self.layers[i], f, join_name(prefix, "layer" + std::to_string(i)));
    }
  }
};

struct HeadTrace {
  std::vector<Matrix> inputs;
  std::vector<Matrix> masks;
};

Matrix head_logits(const HeadParams& h, const Matrix& features, HeadTrace* trace = nullptr,
                   const ForwardOptions& opts = {});
/// Returns d(loss)/d(features).
Matrix head_backward(const HeadParams& h, const HeadTrace& trace, const Matrix& d_logits,
                     HeadParams& grad);

/// Softmax class probabilities (N x 2). Throws ShapeError on a width mismatch.
Matrix classify(const HeadParams& h, const Matrix& features);

enum class FusionMode { concat, average, max, graph_only, text_only };

std::string to_string(FusionMode m);
FusionMode parse_fusion_mode(const std::string& text);

/// Combines text features X and graph features H into head input.
Matrix fuse(FusionMode mode, const Matrix& x, const Matrix& h);
/// Gradient of the fused input with respect to H.
Matrix fuse_backward_graph(FusionMode mode, const Matrix& x, const Matrix& h, const Matrix& d_fused);
std::int64_t fused_dim(FusionMode mode, std::int64_t text_dim, std::int64_t graph_dim);

/// softmax(MLP(Concat(X, H))), X block first.
Matrix fuse_classify(const HeadParams& h, const Matrix& x, const Matrix& graph);

// ---------------------------------------------------------------------------
// Losses.

struct LossResult {
  double value = 0.0;
  Matrix d_logits;  // same shape as logits; zero rows outside the selection
};

/// Mean cross-entropy over the selected rows (labels parallel to rows).
LossResult cross_entropy(const Matrix& logits, std::span<const std::size_t> rows,
                         std::span<const Label> labels);

}  // namespace lgb
