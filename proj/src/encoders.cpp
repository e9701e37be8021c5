#include "lgb/encoders.hpp"

#include <algorithm>
#include <cmath>

namespace lgb {

// ---------------------------------------------------------------------------
// Text encoder

TextEncoderParams TextEncoderParams::init(const TextEncoderConfig& cfg, Rng& rng) {
  if (cfg.dim <= 0 || cfg.vocab_size <= 0) throw ValidationError("text encoder dims must be positive");
  TextEncoderParams p;
  p.config = cfg;
  p.embedding = Matrix(cfg.vocab_size, cfg.dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  for (Eigen::Index i = 0; i < p.embedding.size(); ++i) p.embedding.data()[i] = scale * rng.normal();
  if (cfg.attention) {
    auto square = [&] { return Linear::init(cfg.dim, cfg.dim, rng).weight; };
    p.attention = AttentionParams{square(), square(), square()};
  }
  for (int l = 0; l < cfg.mixing_layers; ++l) {
    Linear lin = Linear::init(cfg.dim, cfg.dim, rng);
    lin.weight *= 0.5;
    p.mixing.push_back(std::move(lin));
  }
  return p;
}

TextEncoderParams TextEncoderParams::identity(const TextEncoderConfig& cfg, Matrix embedding) {
  if (embedding.rows() != cfg.vocab_size || embedding.cols() != cfg.dim) {
    throw ShapeError("embedding shape does not match the text encoder config");
  }
  TextEncoderParams p;
  p.config = cfg;
  p.embedding = std::move(embedding);
  if (cfg.attention) {
    p.attention = AttentionParams{Matrix::Zero(cfg.dim, cfg.dim), Matrix::Zero(cfg.dim, cfg.dim),
                                  Matrix::Zero(cfg.dim, cfg.dim)};
  }
  for (int l = 0; l < cfg.mixing_layers; ++l) p.mixing.push_back(Linear::zeros(cfg.dim, cfg.dim));
  return p;
}

Matrix text_encode(const TextEncoderParams& p, std::span<const std::int32_t> ids,
                   TextEncoderTrace* trace) {
  const Eigen::Index d = p.embedding.cols();
  if (ids.empty()) {
    if (trace) *trace = {};
    return Matrix::Zero(1, d);
  }
  const auto t = static_cast<Eigen::Index>(ids.size());
  Matrix h(t, d);
  for (Eigen::Index i = 0; i < t; ++i) {
    const auto id = ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= p.embedding.rows()) {
      throw ValidationError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(p.embedding.rows()));
    }
    h.row(i) = p.embedding.row(id);
  }
  if (trace) {
    trace->ids.assign(ids.begin(), ids.end());
    trace->embedded = h;
    trace->layer_inputs.clear();
    trace->layer_acts.clear();
  }

  if (p.attention) {
    const auto& a = *p.attention;
    Matrix q = h * a.query;
    Matrix k = h * a.key;
    Matrix v = h * a.value;
    Matrix scores = (q * k.transpose()) / std::sqrt(static_cast<double>(d));
    Matrix probs = softmax_rows(scores);
    Matrix out = h + probs * v;
    if (trace) {
      trace->attn_q = std::move(q);
      trace->attn_k = std::move(k);
      trace->attn_v = std::move(v);
      trace->attn_p = std::move(probs);
    }
    h = std::move(out);
  }

  for (const auto& layer : p.mixing) {
    Matrix act = layer.forward(h).array().tanh().matrix();
    if (trace) {
      trace->layer_inputs.push_back(h);
      trace->layer_acts.push_back(act);
    }
    h += act;
  }
  return h.colwise().mean();
}

void text_encode_backward(const TextEncoderParams& p, const TextEncoderTrace& trace,
                          const Matrix& d_pooled, TextEncoderParams& grad) {
  if (trace.ids.empty()) return;
  const auto t = static_cast<Eigen::Index>(trace.ids.size());
  const Eigen::Index d = p.embedding.cols();
  Matrix dh = Matrix::Constant(t, 1, 1.0 / static_cast<double>(t)) * d_pooled;

  for (std::size_t l = p.mixing.size(); l-- > 0;) {
    const Matrix& act = trace.layer_acts[l];
    Matrix dz = dh.array() * (1.0 - act.array().square());
    dh += p.mixing[l].backward(trace.layer_inputs[l], dz, grad.mixing[l]);
  }

  if (p.attention) {
    const auto& a = *p.attention;
    auto& ga = *grad.attention;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d));
    const Matrix& h0 = trace.embedded;
    const Matrix& probs = trace.attn_p;
    Matrix d_probs = dh * trace.attn_v.transpose();
    Matrix dv = probs.transpose() * dh;
    Matrix d_scores(t, t);
    for (Eigen::Index i = 0; i < t; ++i) {
      const double dot = d_probs.row(i).dot(probs.row(i));
      d_scores.row(i) = probs.row(i).array() * (d_probs.row(i).array() - dot);
    }
    Matrix dq = d_scores * trace.attn_k * inv_sqrt;
    Matrix dk = d_scores.transpose() * trace.attn_q * inv_sqrt;
    ga.query.noalias() += h0.transpose() * dq;
    ga.key.noalias() += h0.transpose() * dk;
    ga.value.noalias() += h0.transpose() * dv;
    dh += dq * a.query.transpose() + dk * a.key.transpose() + dv * a.value.transpose();
  }

  for (Eigen::Index i = 0; i < t; ++i) grad.embedding.row(trace.ids[static_cast<std::size_t>(i)]) += dh.row(i);
}

Matrix text_encode_all(const TextEncoderParams& p,
                       const std::vector<std::vector<std::int32_t>>& sequences) {
  Matrix x(static_cast<Eigen::Index>(sequences.size()), p.embedding.cols());
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = text_encode(p, sequences[i]);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Adjacency

std::string to_string(GnnVariant v) {
  switch (v) {
    case GnnVariant::gcn: return "GCN";
    case GnnVariant::gin: return "GIN";
    case GnnVariant::gat: return "GAT";
  }
  return "GIN";
}

GnnVariant parse_gnn_variant(const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "gcn") return GnnVariant::gcn;
  if (t == "gin") return GnnVariant::gin;
  if (t == "gat") return GnnVariant::gat;
  throw ValidationError("unknown GNN variant '" + text + "'");
}

Adjacency Adjacency::from_graph(const SocialGraph& g) {
  return from_pairs(g.num_nodes(), g.undirected_edges());
}

Adjacency Adjacency::from_pairs(std::size_t n, const std::vector<IndexPair>& pairs) {
  return from_pairs(n, pairs, std::vector<bool>(pairs.size(), true));
}

Adjacency Adjacency::from_pairs(std::size_t n, const std::vector<IndexPair>& pairs,
                                const std::vector<bool>& keep) {
  if (keep.size() != pairs.size()) throw ShapeError("edge mask size mismatch");
  Adjacency a;
  a.neighbors.assign(n, {});
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (!keep[k]) continue;
    const auto [i, j] = pairs[k];
    if (i >= n || j >= n) throw ShapeError("edge endpoint outside node range");
    if (i == j) continue;
    a.neighbors[i].push_back(j);
    a.neighbors[j].push_back(i);
  }
  for (auto& nb : a.neighbors) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return a;
}

std::size_t Adjacency::num_undirected_edges() const {
  std::size_t total = 0;
  for (const auto& nb : neighbors) total += nb.size();
  return total / 2;
}

Adjacency Adjacency::permuted(const std::vector<std::size_t>& perm) const {
  Adjacency a;
  a.neighbors.assign(neighbors.size(), {});
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    for (auto j : neighbors[i]) a.neighbors[perm[i]].push_back(perm[j]);
  }
  for (auto& nb : a.neighbors) std::sort(nb.begin(), nb.end());
  return a;
}

// ---------------------------------------------------------------------------
// Graph encoders

GraphEncoderParams GraphEncoderParams::init(const GraphEncoderConfig& cfg, Rng& rng) {
  if (cfg.layers < 1) throw ValidationError("graph encoder needs at least one layer");
  if (cfg.input_dim <= 0 || cfg.hidden_dim <= 0 || cfg.output_dim <= 0) {
    throw ValidationError("graph encoder dims must be positive");
  }
  GraphEncoderParams p;
  p.config = cfg;
  for (int l = 0; l < cfg.layers; ++l) {
    const auto in = l == 0 ? cfg.input_dim : cfg.hidden_dim;
    const auto out = l + 1 == cfg.layers ? cfg.output_dim : cfg.hidden_dim;
    GnnLayer layer;
    switch (cfg.variant) {
      case GnnVariant::gcn: layer.linear = Linear::init(in, out, rng); break;
      case GnnVariant::gin:
        layer.linear = Linear::init(in, out, rng);
        layer.update = Linear::init(out, out, rng);
        break;
      case GnnVariant::gat: {
        layer.linear = Linear::init(in, out, rng);
        const double bound = std::sqrt(6.0 / static_cast<double>(out + 1));
        layer.att_source = Matrix(1, out);
        layer.att_target = Matrix(1, out);
        for (Eigen::Index j = 0; j < out; ++j) {
          layer.att_source(0, j) = rng.uniform(-bound, bound);
          layer.att_target(0, j) = rng.uniform(-bound, bound);
        }
        break;
      }
    }
    p.layers.push_back(std::move(layer));
  }
  return p;
}

namespace {

std::vector<double> gcn_inverse_sqrt_degree(const Adjacency& adj) {
  std::vector<double> dinv(adj.size());
  for (std::size_t i = 0; i < adj.size(); ++i) {
    dinv[i] = 1.0 / std::sqrt(static_cast<double>(adj.neighbors[i].size()) + 1.0);
  }
  return dinv;
}

// D^-1/2 (A + I) D^-1/2 applied to rows of h. Symmetric, so it is its own
// transpose for the backward pass.
Matrix gcn_propagate(const Adjacency& adj, const std::vector<double>& dinv, const Matrix& h) {
  Matrix out(h.rows(), h.cols());
  for (std::size_t i = 0; i < adj.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    out.row(ii) = (dinv[i] * dinv[i]) * h.row(ii);
    for (auto j : adj.neighbors[i]) out.row(ii) += (dinv[i] * dinv[j]) * h.row(static_cast<Eigen::Index>(j));
  }
  return out;
}

// (1 + eps) h_i + sum over neighbors h_j. Symmetric as well.
Matrix gin_propagate(const Adjacency& adj, double eps, const Matrix& h) {
  Matrix out = (1.0 + eps) * h;
  for (std::size_t i = 0; i < adj.size(); ++i) {
    for (auto j : adj.neighbors[i]) out.row(static_cast<Eigen::Index>(i)) += h.row(static_cast<Eigen::Index>(j));
  }
  return out;
}

double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }

Matrix gnn_layer_forward(const GraphEncoderConfig& cfg, const GnnLayer& layer,
                         const Adjacency& adj, const Matrix& h, GnnLayerTrace* tr) {
  switch (cfg.variant) {
    case GnnVariant::gcn: {
      Matrix agg = gcn_propagate(adj, gcn_inverse_sqrt_degree(adj), h);
      Matrix out = layer.linear.forward(agg);
      if (tr) tr->aggregated = std::move(agg);
      return out;
    }
    case GnnVariant::gin: {
      Matrix agg = gin_propagate(adj, cfg.gin_epsilon, h);
      Matrix hidden = relu(layer.linear.forward(agg));
      Matrix out = layer.update.forward(hidden);
      if (tr) {
        tr->aggregated = std::move(agg);
        tr->hidden = std::move(hidden);
      }
      return out;
    }
    case GnnVariant::gat: {
      Matrix z = h * layer.linear.weight;
      const Eigen::Index n = z.rows();
      Eigen::VectorXd src = z * layer.att_source.transpose();
      Eigen::VectorXd dst = z * layer.att_target.transpose();
      Matrix out(n, z.cols());
      std::vector<std::vector<double>> alpha(static_cast<std::size_t>(n)), pre(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& nb = adj.neighbors[static_cast<std::size_t>(i)];
        auto& a = alpha[static_cast<std::size_t>(i)];
        auto& e = pre[static_cast<std::size_t>(i)];
        // Slot 0 is the self-loop, then neighbors in order.
        e.push_back(src(i) + dst(i));
        for (auto j : nb) e.push_back(src(static_cast<Eigen::Index>(j)) + dst(i));
        double m = -INFINITY;
        for (double v : e) m = std::max(m, leaky(v, cfg.gat_negative_slope));
        double total = 0.0;
        for (double v : e) {
          a.push_back(std::exp(leaky(v, cfg.gat_negative_slope) - m));
          total += a.back();
        }
        for (double& v : a) v /= total;
        out.row(i) = a[0] * z.row(i);
        for (std::size_t k = 0; k < nb.size(); ++k) out.row(i) += a[k + 1] * z.row(static_cast<Eigen::Index>(nb[k]));
      }
      out.rowwise() += layer.linear.bias.row(0);
      if (tr) {
        tr->transformed = std::move(z);
        tr->alpha = std::move(alpha);
        tr->pre = std::move(pre);
      }
      return out;
    }
  }
  throw ValidationError("unknown GNN variant");
}

Matrix gnn_layer_backward(const GraphEncoderConfig& cfg, const GnnLayer& layer,
                          const Adjacency& adj, const GnnLayerTrace& tr, const Matrix& dout,
                          GnnLayer& grad) {
  switch (cfg.variant) {
    case GnnVariant::gcn: {
      Matrix d_agg = layer.linear.backward(tr.aggregated, dout, grad.linear);
      return gcn_propagate(adj, gcn_inverse_sqrt_degree(adj), d_agg);
    }
    case GnnVariant::gin: {
      Matrix d_hidden = layer.update.backward(tr.hidden, dout, grad.update);
      d_hidden = d_hidden.array() * (tr.hidden.array() > 0.0).cast<double>();
      Matrix d_agg = layer.linear.backward(tr.aggregated, d_hidden, grad.linear);
      return gin_propagate(adj, cfg.gin_epsilon, d_agg);
    }
    case GnnVariant::gat: {
      const Matrix& z = tr.transformed;
      const Eigen::Index n = z.rows();
      Matrix dz = Matrix::Zero(n, z.cols());
      Eigen::VectorXd d_src = Eigen::VectorXd::Zero(n);
      Eigen::VectorXd d_dst = Eigen::VectorXd::Zero(n);
      grad.linear.bias += dout.colwise().sum();
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& nb = adj.neighbors[static_cast<std::size_t>(i)];
        const auto& a = tr.alpha[static_cast<std::size_t>(i)];
        const auto& e = tr.pre[static_cast<std::size_t>(i)];
        auto slot_node = [&](std::size_t k) {
          return k == 0 ? i : static_cast<Eigen::Index>(nb[k - 1]);
        };
        std::vector<double> d_alpha(a.size());
        double weighted = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
          const Eigen::Index j = slot_node(k);
          d_alpha[k] = dout.row(i).dot(z.row(j));
          dz.row(j) += a[k] * dout.row(i);
          weighted += a[k] * d_alpha[k];
        }
        for (std::size_t k = 0; k < a.size(); ++k) {
          const double d_e = a[k] * (d_alpha[k] - weighted);
          const double d_pre = d_e * (e[k] > 0.0 ? 1.0 : cfg.gat_negative_slope);
          d_src(slot_node(k)) += d_pre;
          d_dst(i) += d_pre;
        }
      }
      grad.att_source += d_src.transpose() * z;
      grad.att_target += d_dst.transpose() * z;
      dz += d_src * layer.att_source + d_dst * layer.att_target;
      grad.linear.weight.noalias() += tr.input.transpose() * dz;
      return dz * layer.linear.weight.transpose();
    }
  }
  throw ValidationError("unknown GNN variant");
}

}  // namespace

Matrix gnn_forward(const GraphEncoderParams& p, const Matrix& x, const Adjacency& adj,
                   GnnTrace* trace, const ForwardOptions& opts) {
  if (static_cast<std::size_t>(x.rows()) != adj.size()) {
    throw ShapeError("feature rows (" + std::to_string(x.rows()) + ") != node count (" +
                     std::to_string(adj.size()) + ")");
  }
  if (x.cols() != p.config.input_dim) {
    throw ShapeError("feature width " + std::to_string(x.cols()) + " != encoder input " +
                     std::to_string(p.config.input_dim));
  }
  if (trace) trace->layers.assign(p.layers.size(), {});
  Matrix h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    GnnLayerTrace* tr = trace ? &trace->layers[l] : nullptr;
    if (tr) tr->input = h;
    Matrix out = gnn_layer_forward(p.config, p.layers[l], adj, h, tr);
    if (l + 1 < p.layers.size()) {
      if (tr) tr->output_preact = out;
      out = relu(out);
      if (opts.dropout > 0.0) {
        if (!opts.rng) throw ValidationError("dropout requires an rng");
        Matrix mask = dropout_mask(out.rows(), out.cols(), opts.dropout, *opts.rng);
        out.array() *= mask.array();
        if (tr) tr->dropout = std::move(mask);
      }
    }
    h = std::move(out);
  }
  return h;
}

Matrix gnn_backward(const GraphEncoderParams& p, const Adjacency& adj, const GnnTrace& trace,
                    const Matrix& d_output, GraphEncoderParams& grad) {
  Matrix dh = d_output;
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    const auto& tr = trace.layers[l];
    if (l + 1 < p.layers.size()) {
      if (tr.dropout.size() > 0) dh.array() *= tr.dropout.array();
      dh.array() *= (tr.output_preact.array() > 0.0).cast<double>();
    }
    dh = gnn_layer_backward(p.config, p.layers[l], adj, tr, dh, grad.layers[l]);
  }
  return dh;
}

// ---------------------------------------------------------------------------
// Heads

HeadParams HeadParams::init(std::int64_t input_dim, std::int64_t hidden_dim, Rng& rng) {
  if (input_dim <= 0) throw ValidationError("head input dim must be positive");
  HeadParams h;
  if (hidden_dim > 0) {
    h.layers.push_back(Linear::init(input_dim, hidden_dim, rng));
    h.layers.push_back(Linear::init(hidden_dim, 2, rng));
  } else {
    h.layers.push_back(Linear::init(input_dim, 2, rng));
  }
  return h;
}

Matrix head_logits(const HeadParams& h, const Matrix& features, HeadTrace* trace,
                   const ForwardOptions& opts) {
  if (h.layers.empty() || h.layers.back().out_dim() != 2) throw ShapeError("head must emit 2 logits");
  if (features.cols() != h.input_dim()) {
    throw ShapeError("head expects width " + std::to_string(h.input_dim()) + ", got " +
                     std::to_string(features.cols()));
  }
  if (trace) {
    trace->inputs.clear();
    trace->masks.clear();
  }
  Matrix a = features;
  for (std::size_t l = 0; l < h.layers.size(); ++l) {
    if (trace) trace->inputs.push_back(a);
    a = h.layers[l].forward(a);
    if (l + 1 < h.layers.size()) {
      a = relu(a);
      Matrix mask;
      if (opts.dropout > 0.0) {
        if (!opts.rng) throw ValidationError("dropout requires an rng");
        mask = dropout_mask(a.rows(), a.cols(), opts.dropout, *opts.rng);
        a.array() *= mask.array();
      }
      if (trace) trace->masks.push_back(std::move(mask));
    }
  }
  return a;
}

Matrix head_backward(const HeadParams& h, const HeadTrace& trace, const Matrix& d_logits,
                     HeadParams& grad) {
  Matrix d = d_logits;
  for (std::size_t l = h.layers.size(); l-- > 0;) {
    if (l + 1 < h.layers.size()) {
      // trace.inputs[l + 1] is the post-activation (post-dropout) value.
      const auto& mask = trace.masks[l];
      if (mask.size() > 0) d.array() *= mask.array();
      d.array() *= (trace.inputs[l + 1].array() > 0.0).cast<double>();
    }
    d = h.layers[l].backward(trace.inputs[l], d, grad.layers[l]);
  }
  return d;
}

Matrix classify(const HeadParams& h, const Matrix& features) {
  return softmax_rows(head_logits(h, features));
}

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::concat: return "concat";
    case FusionMode::average: return "average";
    case FusionMode::max: return "max";
    case FusionMode::graph_only: return "graph_only";
    case FusionMode::text_only: return "text_only";
  }
  return "concat";
}

FusionMode parse_fusion_mode(const std::string& text) {
  if (text == "concat") return FusionMode::concat;
  if (text == "average") return FusionMode::average;
  if (text == "max") return FusionMode::max;
  if (text == "graph_only") return FusionMode::graph_only;
  if (text == "text_only") return FusionMode::text_only;
  throw ValidationError("unknown fusion mode '" + text + "'");
}

std::int64_t fused_dim(FusionMode mode, std::int64_t text_dim, std::int64_t graph_dim) {
  switch (mode) {
    case FusionMode::concat: return text_dim + graph_dim;
    case FusionMode::average:
    case FusionMode::max:
      if (text_dim != graph_dim) {
        throw ShapeError("elementwise fusion requires equal text and graph widths (" +
                         std::to_string(text_dim) + " vs " + std::to_string(graph_dim) + ")");
      }
      return text_dim;
    case FusionMode::graph_only: return graph_dim;
    case FusionMode::text_only: return text_dim;
  }
  return text_dim + graph_dim;
}

Matrix fuse(FusionMode mode, const Matrix& x, const Matrix& h) {
  if (mode != FusionMode::text_only && mode != FusionMode::graph_only && x.rows() != h.rows()) {
    throw ShapeError("text and graph features have different row counts");
  }
  fused_dim(mode, x.cols(), h.cols());
  switch (mode) {
    case FusionMode::concat: {
      Matrix out(x.rows(), x.cols() + h.cols());
      out << x, h;
      return out;
    }
    case FusionMode::average: return 0.5 * (x + h);
    case FusionMode::max: return x.cwiseMax(h);
    case FusionMode::graph_only: return h;
    case FusionMode::text_only: return x;
  }
  return x;
}

Matrix fuse_backward_graph(FusionMode mode, const Matrix& x, const Matrix& h, const Matrix& d_fused) {
  switch (mode) {
    case FusionMode::concat: return d_fused.rightCols(h.cols());
    case FusionMode::average: return 0.5 * d_fused;
    case FusionMode::max:
      // Ties route the gradient to the text block.
      return (d_fused.array() * (h.array() > x.array()).cast<double>()).matrix();
    case FusionMode::graph_only: return d_fused;
    case FusionMode::text_only: return Matrix::Zero(h.rows(), h.cols());
  }
  return d_fused;
}

Matrix fuse_classify(const HeadParams& h, const Matrix& x, const Matrix& graph) {
  return classify(h, fuse(FusionMode::concat, x, graph));
}

// ---------------------------------------------------------------------------

LossResult cross_entropy(const Matrix& logits, std::span<const std::size_t> rows,
                         std::span<const Label> labels) {
  if (rows.size() != labels.size()) throw ShapeError("rows and labels differ in length");
  LossResult r;
  r.d_logits = Matrix::Zero(logits.rows(), logits.cols());
  if (rows.empty()) return r;
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(rows[k]);
    const int y = to_int(labels[k]);
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    r.value += (lse - logits(i, y)) * inv;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      const double p = std::exp(logits(i, c) - lse);
      r.d_logits(i, c) += (p - (c == y ? 1.0 : 0.0)) * inv;
    }
  }
  return r;
}

}  // namespace lgb
