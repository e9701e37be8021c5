#include "lgb/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "lgb/hashing.hpp"

namespace lgb {

using nlohmann::json;

std::string to_string(Stage s) {
  switch (s) {
    case Stage::sft: return "sft";
    case Stage::pretrain: return "pretrain";
    case Stage::finetune: return "finetune";
  }
  return "?";
}

Stage parse_stage(const std::string& text) {
  if (text == "sft") return Stage::sft;
  if (text == "pretrain") return Stage::pretrain;
  if (text == "finetune") return Stage::finetune;
  throw ValidationError("unknown stage '" + text + "'");
}

// ---------------------------------------------------------------------------
// TrainConfig

TrainConfig TrainConfig::defaults(Stage stage) {
  TrainConfig c;
  c.stage = stage;
  switch (stage) {
    case Stage::sft:
      c.learning_rate = 1e-5;
      c.weight_decay = 1e-2;
      break;
    case Stage::pretrain:
      c.learning_rate = 1e-3;
      c.weight_decay = 1e-5;
      c.batch_size = 0;
      break;
    case Stage::finetune:
      c.learning_rate = 5e-4;
      c.weight_decay = 1e-5;
      c.batch_size = 0;
      break;
  }
  return c;
}

void TrainConfig::validate() const {
  // A zero rate is accepted so that optimizer no-op runs can be checked.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be non-negative");
  }
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be non-negative");
  if (max_epochs < 0) throw ValidationError("max_epochs must be non-negative");
  if (patience < 1) throw ValidationError("patience must be at least 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("dropout_rate must be in [0, 1)");
  if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  if (!(drop_edge_1 >= 0.0 && drop_edge_1 < 1.0)) throw ValidationError("drop_edge_1 must be in [0, 1)");
  if (!(drop_edge_2 >= 0.0 && drop_edge_2 < 1.0)) throw ValidationError("drop_edge_2 must be in [0, 1)");
}

json TrainConfig::to_json() const {
  return {{"stage", to_string(stage)},     {"learning_rate", learning_rate},
          {"weight_decay", weight_decay},  {"max_epochs", max_epochs},
          {"patience", patience},          {"dropout_rate", dropout_rate},
          {"seed", seed},                  {"batch_size", batch_size},
          {"temperature", temperature},    {"drop_edge_1", drop_edge_1},
          {"drop_edge_2", drop_edge_2}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c = defaults(parse_stage(j.value("stage", std::string("sft"))));
  auto get = [&](const char* key, auto& dst) {
    if (auto it = j.find(key); it != j.end()) it->get_to(dst);
  };
  get("learning_rate", c.learning_rate);
  get("weight_decay", c.weight_decay);
  get("max_epochs", c.max_epochs);
  get("patience", c.patience);
  get("dropout_rate", c.dropout_rate);
  get("seed", c.seed);
  get("batch_size", c.batch_size);
  get("temperature", c.temperature);
  get("drop_edge_1", c.drop_edge_1);
  get("drop_edge_2", c.drop_edge_2);
  return c;
}

std::string TrainConfig::hash() const { return fnv1a_hex(to_json().dump()); }

// ---------------------------------------------------------------------------
// AdamW

AdamW::AdamW(std::vector<Matrix*> params, double learning_rate, double weight_decay, double beta1,
             double beta2, double eps)
    : params_(std::move(params)), lr_(learning_rate), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Matrix* p : params_) {
    m_.push_back(Matrix::Zero(p->rows(), p->cols()));
    v_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

void AdamW::step(const std::vector<const Matrix*>& grads) {
  if (grads.size() != params_.size()) throw ShapeError("optimizer gradient count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Matrix& p = *params_[k];
    const Matrix& g = *grads[k];
    if (g.rows() != p.rows() || g.cols() != p.cols()) throw ShapeError("optimizer gradient shape mismatch");
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
    v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g.cwiseProduct(g);
    if (lr_ == 0.0) continue;
    p *= 1.0 - lr_ * wd_;
    p.array() -= lr_ * (m_[k].array() / bc1) / ((v_[k].array() / bc2).sqrt() + eps_);
  }
}

// ---------------------------------------------------------------------------
// MetricsLog

MetricsLog::MetricsLog(const std::filesystem::path& path) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  out_.open(path, std::ios::app);
  if (!out_) throw Error("cannot open metrics log " + path.string());
  if (fresh) out_ << "stage\tepoch\tsplit\tloss\taccuracy\tf1\tauc\n";
}

void MetricsLog::write(const std::string& stage, int epoch, const std::string& split, double loss,
                       const RunMetrics* m) {
  out_ << stage << '\t' << epoch << '\t' << split << '\t' << loss << '\t';
  if (m) {
    out_ << m->accuracy << '\t' << m->f1 << '\t';
    if (m->roc_auc) {
      out_ << *m->roc_auc;
    } else {
      out_ << "nan";
    }
  } else {
    out_ << "nan\tnan\tnan";
  }
  out_ << '\n';
  out_.flush();
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace {

template <class... P>
std::vector<Matrix*> param_list(P&... packs) {
  std::vector<Matrix*> out;
  (..., [&](auto& pack) {
    for (auto& [name, m] : named_tensors(pack)) out.push_back(m);
  }(packs));
  return out;
}

template <class... P>
std::vector<const Matrix*> grad_list(const P&... packs) {
  std::vector<const Matrix*> out;
  (..., [&](const auto& pack) {
    for (auto& [name, m] : named_tensors(pack)) out.push_back(m);
  }(packs));
  return out;
}

template <class P>
void set_zero(P& p) {
  P::visit(p, [](const std::string&, Matrix& m) { m.setZero(); });
}

void require_both_classes(std::span<const Label> labels, const std::string& stage) {
  if (labels.empty()) throw ValidationError(stage + ": labeled set is empty");
  const bool has_bot = std::find(labels.begin(), labels.end(), Label::bot) != labels.end();
  const bool has_human = std::find(labels.begin(), labels.end(), Label::human) != labels.end();
  if (!has_bot || !has_human) {
    throw DegenerateLabelsError(stage + ": labeled set contains a single class");
  }
}

std::vector<double> bot_column(const Matrix& logits) {
  const Matrix p = softmax_rows(logits);
  std::vector<double> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) out[static_cast<std::size_t>(i)] = p(i, 1);
  return out;
}

SplitEval evaluate_rows(const Matrix& logits, std::span<const std::size_t> rows,
                        std::span<const Label> labels) {
  SplitEval e;
  e.loss = cross_entropy(logits, rows, labels).value;
  const Matrix p = softmax_rows(logits);
  std::vector<double> probs;
  probs.reserve(rows.size());
  for (std::size_t r : rows) probs.push_back(p(static_cast<Eigen::Index>(r), 1));
  e.metrics = compute_metrics(labels, probs);
  return e;
}

struct EarlyStopper {
  int patience;
  double best = -1.0;
  int best_epoch = 0;
  int wait = 0;

  bool improved(int epoch, double accuracy) {
    if (accuracy > best) {
      best = accuracy;
      best_epoch = epoch;
      wait = 0;
      return true;
    }
    ++wait;
    return false;
  }
  bool stop() const { return wait >= patience; }
};

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const std::size_t bs = batch_size == 0 ? n : std::min(batch_size, n);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += bs) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + bs)));
  }
  return out;
}

void log_epoch(MetricsLog* log, const std::string& stage, const EpochRecord& r) {
  if (!log) return;
  log->write(stage, r.epoch, "train", r.train.loss, &r.train.metrics);
  if (r.val) log->write(stage, r.epoch, "val", r.val->loss, &r.val->metrics);
}

}  // namespace

// ---------------------------------------------------------------------------
// SFT

namespace {

SplitEval evaluate_sequences(const ModelBundle& b, std::span<const LabeledSequence> data) {
  const auto n = static_cast<Eigen::Index>(data.size());
  Matrix x(n, b.text.embedding.cols());
  std::vector<std::size_t> rows(data.size());
  std::vector<Label> labels(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = text_encode(b.text, data[i].ids);
    rows[i] = i;
    labels[i] = data[i].label;
  }
  return evaluate_rows(head_logits(b.lm_head, x), rows, labels);
}

}  // namespace

StageResult sft_language_model(ModelBundle bundle, std::span<const LabeledSequence> train,
                               std::span<const LabeledSequence> val, const TrainConfig& cfg,
                               MetricsLog* log) {
  cfg.validate();
  if (cfg.stage != Stage::sft) throw ValidationError("sft_language_model needs an sft config");
  std::vector<Label> train_labels;
  for (const auto& s : train) train_labels.push_back(s.label);
  require_both_classes(train_labels, "sft");

  Rng shuffle_rng(derive_seed(cfg.seed, 1));
  Rng dropout_rng(derive_seed(cfg.seed, 2));
  TextEncoderParams text_grad = zeros_like(bundle.text);
  HeadParams head_grad = zeros_like(bundle.lm_head);
  AdamW opt(param_list(bundle.text, bundle.lm_head), cfg.learning_rate, cfg.weight_decay);
  const auto grads = grad_list(text_grad, head_grad);

  StageResult result{bundle, {}, 0};
  EarlyStopper stopper{cfg.patience};
  const ForwardOptions fwd{cfg.dropout_rate, &dropout_rng};
  std::vector<TextEncoderTrace> traces;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const ModelBundle epoch_start = bundle;
    for (const auto& batch : make_batches(train.size(), cfg.batch_size, shuffle_rng)) {
      set_zero(text_grad);
      set_zero(head_grad);
      traces.assign(batch.size(), {});
      Matrix pooled(static_cast<Eigen::Index>(batch.size()), bundle.text.embedding.cols());
      std::vector<std::size_t> rows(batch.size());
      std::vector<Label> labels(batch.size());
      for (std::size_t k = 0; k < batch.size(); ++k) {
        pooled.row(static_cast<Eigen::Index>(k)) = text_encode(bundle.text, train[batch[k]].ids, &traces[k]);
        rows[k] = k;
        labels[k] = train[batch[k]].label;
      }
      HeadTrace ht;
      const Matrix logits = head_logits(bundle.lm_head, pooled, &ht, fwd);
      const LossResult loss = cross_entropy(logits, rows, labels);
      if (!std::isfinite(loss.value)) {
        throw TrainingError("sft diverged at epoch " + std::to_string(epoch), epoch_start);
      }
      const Matrix d_pooled = head_backward(bundle.lm_head, ht, loss.d_logits, head_grad);
      for (std::size_t k = 0; k < batch.size(); ++k) {
        text_encode_backward(bundle.text, traces[k], d_pooled.row(static_cast<Eigen::Index>(k)), text_grad);
      }
      opt.step(grads);
    }
    if (!all_finite(bundle.text) || !all_finite(bundle.lm_head)) {
      throw TrainingError("sft parameters became non-finite at epoch " + std::to_string(epoch), epoch_start);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = evaluate_sequences(bundle, train);
    if (!val.empty()) rec.val = evaluate_sequences(bundle, val);
    if (!std::isfinite(rec.train.loss)) {
      throw TrainingError("sft loss became non-finite at epoch " + std::to_string(epoch), epoch_start);
    }
    log_epoch(log, "sft", rec);
    result.history.push_back(rec);
    const double monitored = rec.val ? rec.val->metrics.accuracy : rec.train.metrics.accuracy;
    if (stopper.improved(epoch, monitored)) result.bundle = bundle;
    if (stopper.stop()) break;
  }
  result.best_epoch = stopper.best_epoch;
  result.bundle.provenance.push_back(
      {"sft", cfg.hash(), static_cast<int>(result.history.size()), result.best_epoch});
  return result;
}

// ---------------------------------------------------------------------------
// Views and contrastive loss

std::size_t GraphView::num_retained() const {
  return static_cast<std::size_t>(std::count(retained.begin(), retained.end(), true));
}

Adjacency GraphView::adjacency() const {
  return Adjacency::from_pairs(base->num_nodes(), base->undirected_edges(), retained);
}

std::pair<GraphView, GraphView> generate_views(const SocialGraph& g, double p1, double p2,
                                                std::uint64_t seed) {
  if (!(p1 >= 0.0 && p1 < 1.0) || !(p2 >= 0.0 && p2 < 1.0)) {
    throw ValidationError("edge drop probabilities must be in [0, 1)");
  }
  auto make = [&](double p, std::uint64_t tag) {
    GraphView v;
    v.base = &g;
    v.seed = derive_seed(seed, tag);
    Rng rng(v.seed);
    v.retained.resize(g.undirected_edges().size());
    for (std::size_t e = 0; e < v.retained.size(); ++e) v.retained[e] = rng.uniform() >= p;
    return v;
  };
  return {make(p1, 1), make(p2, 2)};
}

namespace {

Matrix row_normalize(const Matrix& h, int view, std::vector<double>& norms) {
  norms.resize(static_cast<std::size_t>(h.rows()));
  Matrix z(h.rows(), h.cols());
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    const double n = h.row(i).norm();
    if (!(n > 0.0)) {
      throw ValidationError("cosine similarity undefined: zero-norm representation for node " +
                            std::to_string(i) + " in view " + std::to_string(view));
    }
    norms[static_cast<std::size_t>(i)] = n;
    z.row(i) = h.row(i) / n;
  }
  return z;
}

// One direction: anchors a against positives/inter negatives s_ab[i, :] and
// intra negatives s_aa[i, j != i]. Fills softmax weights when asked.
double direction_loss(const Matrix& s_ab, const Matrix& s_aa, Matrix* p_ab, Matrix* p_aa) {
  const Eigen::Index n = s_ab.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double m = s_ab.row(i).maxCoeff();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) m = std::max(m, s_aa(i, j));
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      sum += std::exp(s_ab(i, j) - m);
      if (j != i) sum += std::exp(s_aa(i, j) - m);
    }
    const double lse = m + std::log(sum);
    total += lse - s_ab(i, i);
    if (p_ab) {
      for (Eigen::Index j = 0; j < n; ++j) {
        (*p_ab)(i, j) = std::exp(s_ab(i, j) - lse);
        (*p_aa)(i, j) = j == i ? 0.0 : std::exp(s_aa(i, j) - lse);
      }
    }
  }
  return total;
}

InfoNceResult infonce_impl(const Matrix& h1, const Matrix& h2, double tau, bool with_grad) {
  if (h1.rows() != h2.rows() || h1.cols() != h2.cols()) throw ShapeError("view representations differ in shape");
  if (h1.rows() == 0) throw ValidationError("infonce needs at least one node");
  if (!(tau > 0.0)) throw ValidationError("temperature must be positive");
  const Eigen::Index n = h1.rows();
  std::vector<double> n1, n2;
  const Matrix z1 = row_normalize(h1, 1, n1);
  const Matrix z2 = row_normalize(h2, 2, n2);
  const Matrix s12 = z1 * z2.transpose() / tau;
  const Matrix s21 = s12.transpose();
  const Matrix s11 = z1 * z1.transpose() / tau;
  const Matrix s22 = z2 * z2.transpose() / tau;

  InfoNceResult r;
  Matrix p12, p11, p21, p22;
  if (with_grad) {
    p12.resize(n, n);
    p11.resize(n, n);
    p21.resize(n, n);
    p22.resize(n, n);
  }
  const double a = direction_loss(s12, s11, with_grad ? &p12 : nullptr, with_grad ? &p11 : nullptr);
  const double b = direction_loss(s21, s22, with_grad ? &p21 : nullptr, with_grad ? &p22 : nullptr);
  const double c = 1.0 / (2.0 * static_cast<double>(n));
  r.loss = (a + b) * c;
  if (!with_grad) return r;

  const Matrix eye = Matrix::Identity(n, n);
  const Matrix g12 = c * ((p12 - eye) + (p21 - eye).transpose());
  const Matrix g11 = c * (p11 + p11.transpose());
  const Matrix g22 = c * (p22 + p22.transpose());
  const Matrix dz1 = (g12 * z2 + g11 * z1) / tau;
  const Matrix dz2 = (g12.transpose() * z1 + g22 * z2) / tau;

  auto through_norm = [&](const Matrix& z, const Matrix& dz, const std::vector<double>& norms) {
    Matrix dh(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double proj = z.row(i).dot(dz.row(i));
      dh.row(i) = (dz.row(i) - proj * z.row(i)) / norms[static_cast<std::size_t>(i)];
    }
    return dh;
  };
  r.d_h1 = through_norm(z1, dz1, n1);
  r.d_h2 = through_norm(z2, dz2, n2);
  return r;
}

}  // namespace

double infonce_loss(const Matrix& h1, const Matrix& h2, double tau) {
  return infonce_impl(h1, h2, tau, false).loss;
}

InfoNceResult infonce_loss_and_grad(const Matrix& h1, const Matrix& h2, double tau) {
  return infonce_impl(h1, h2, tau, true);
}

// ---------------------------------------------------------------------------
// Pre-training

PretrainResult pretrain_gnn(ModelBundle bundle, const SocialGraph& g, const Matrix& x,
                            const TrainConfig& cfg, MetricsLog* log) {
  cfg.validate();
  if (cfg.stage != Stage::pretrain) throw ValidationError("pretrain_gnn needs a pretrain config");
  if (x.rows() != static_cast<Eigen::Index>(g.num_nodes())) throw ShapeError("feature rows != node count");

  Rng dropout_rng(derive_seed(cfg.seed, 2));
  GraphEncoderParams grad = zeros_like(bundle.graph);
  AdamW opt(param_list(bundle.graph), cfg.learning_rate, cfg.weight_decay);
  const auto grads = grad_list(grad);
  const ForwardOptions fwd{cfg.dropout_rate, &dropout_rng};

  PretrainResult result{bundle, {}};
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto [v1, v2] = generate_views(g, cfg.drop_edge_1, cfg.drop_edge_2,
                                         derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(epoch)));
    const Adjacency a1 = v1.adjacency();
    const Adjacency a2 = v2.adjacency();
    GnnTrace t1, t2;
    const Matrix h1 = gnn_forward(bundle.graph, x, a1, &t1, fwd);
    const Matrix h2 = gnn_forward(bundle.graph, x, a2, &t2, fwd);
    const InfoNceResult loss = infonce_loss_and_grad(h1, h2, cfg.temperature);
    if (!std::isfinite(loss.loss)) {
      throw TrainingError("pretrain diverged at epoch " + std::to_string(epoch), bundle);
    }
    set_zero(grad);
    gnn_backward(bundle.graph, a1, t1, loss.d_h1, grad);
    gnn_backward(bundle.graph, a2, t2, loss.d_h2, grad);
    const ModelBundle before = bundle;
    opt.step(grads);
    if (!all_finite(bundle.graph)) {
      throw TrainingError("pretrain parameters became non-finite at epoch " + std::to_string(epoch), before);
    }
    result.loss_history.push_back(loss.loss);
    if (log) log->write("pretrain", epoch, "all", loss.loss, nullptr);
  }
  bundle.provenance.push_back({"pretrain", cfg.hash(), cfg.max_epochs, cfg.max_epochs});
  result.bundle = std::move(bundle);
  return result;
}

// ---------------------------------------------------------------------------
// Fusion fine-tuning

LabeledNodes LabeledNodes::from_ids(const SocialGraph& g, const std::vector<NodeId>& ids) {
  LabeledNodes out;
  for (const auto& id : ids) {
    const std::size_t i = g.index_of(id);
    const auto label = g.label(i);
    if (!label) throw ValidationError("node '" + id + "' has no label");
    out.rows.push_back(i);
    out.labels.push_back(*label);
  }
  return out;
}

StageResult finetune_fusion(ModelBundle bundle, const SocialGraph& g, const Matrix& x,
                            const LabeledNodes& train, const LabeledNodes& val,
                            const TrainConfig& cfg, MetricsLog* log) {
  cfg.validate();
  if (cfg.stage != Stage::finetune) throw ValidationError("finetune_fusion needs a finetune config");
  if (x.rows() != static_cast<Eigen::Index>(g.num_nodes())) throw ShapeError("feature rows != node count");
  require_both_classes(train.labels, "finetune");

  const FusionMode mode = bundle.config.fusion;
  const Adjacency adj = Adjacency::from_graph(g);
  Rng shuffle_rng(derive_seed(cfg.seed, 1));
  Rng dropout_rng(derive_seed(cfg.seed, 2));
  GraphEncoderParams graph_grad = zeros_like(bundle.graph);
  HeadParams head_grad = zeros_like(bundle.fusion_head);
  AdamW opt(param_list(bundle.graph, bundle.fusion_head), cfg.learning_rate, cfg.weight_decay);
  const auto grads = grad_list(graph_grad, head_grad);
  const ForwardOptions fwd{cfg.dropout_rate, &dropout_rng};

  StageResult result{bundle, {}, 0};
  EarlyStopper stopper{cfg.patience};
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const ModelBundle epoch_start = bundle;
    for (const auto& batch : make_batches(train.size(), cfg.batch_size, shuffle_rng)) {
      std::vector<std::size_t> rows;
      std::vector<Label> labels;
      for (std::size_t k : batch) {
        rows.push_back(train.rows[k]);
        labels.push_back(train.labels[k]);
      }
      set_zero(graph_grad);
      set_zero(head_grad);
      GnnTrace gt;
      HeadTrace ht;
      const Matrix h = gnn_forward(bundle.graph, x, adj, &gt, fwd);
      const Matrix fused = fuse(mode, x, h);
      const Matrix logits = head_logits(bundle.fusion_head, fused, &ht, fwd);
      const LossResult loss = cross_entropy(logits, rows, labels);
      if (!std::isfinite(loss.value)) {
        throw TrainingError("finetune diverged at epoch " + std::to_string(epoch), epoch_start);
      }
      const Matrix d_fused = head_backward(bundle.fusion_head, ht, loss.d_logits, head_grad);
      const Matrix d_h = fuse_backward_graph(mode, x, h, d_fused);
      gnn_backward(bundle.graph, adj, gt, d_h, graph_grad);
      opt.step(grads);
    }
    if (!all_finite(bundle.graph) || !all_finite(bundle.fusion_head)) {
      throw TrainingError("finetune parameters became non-finite at epoch " + std::to_string(epoch), epoch_start);
    }

    const Matrix logits = head_logits(bundle.fusion_head, fuse(mode, x, gnn_forward(bundle.graph, x, adj)));
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = evaluate_rows(logits, train.rows, train.labels);
    if (val.size() > 0) rec.val = evaluate_rows(logits, val.rows, val.labels);
    log_epoch(log, "finetune", rec);
    result.history.push_back(rec);
    const double monitored = rec.val ? rec.val->metrics.accuracy : rec.train.metrics.accuracy;
    if (stopper.improved(epoch, monitored)) result.bundle = bundle;
    if (stopper.stop()) break;
  }
  result.best_epoch = stopper.best_epoch;
  result.bundle.provenance.push_back(
      {"finetune", cfg.hash(), static_cast<int>(result.history.size()), result.best_epoch});
  return result;
}

// ---------------------------------------------------------------------------
// Inference

std::vector<std::vector<std::int32_t>> node_token_ids(const ModelBundle& b, const SocialGraph& g) {
  std::vector<std::vector<std::int32_t>> out;
  out.reserve(g.num_nodes());
  for (std::size_t i = 0; i < g.num_nodes(); ++i) out.push_back(b.encode_ids(g.record(i)));
  return out;
}

Matrix node_features(const ModelBundle& b, const SocialGraph& g) {
  return text_encode_all(b.text, node_token_ids(b, g));
}

std::vector<double> lm_bot_probabilities(const ModelBundle& b, const Matrix& x) {
  return bot_column(head_logits(b.lm_head, x));
}

std::vector<double> fused_bot_probabilities(const ModelBundle& b, const Matrix& x, const Adjacency& adj) {
  const Matrix h = gnn_forward(b.graph, x, adj);
  return bot_column(head_logits(b.fusion_head, fuse(b.config.fusion, x, h)));
}

// ---------------------------------------------------------------------------
// Pipeline

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_sft: return "no_sft";
    case Variant::no_finetune: return "no_finetune";
    case Variant::no_pretrain: return "no_pretrain";
    case Variant::no_concat: return "no_concat";
    case Variant::fuse_average: return "fuse_average";
    case Variant::fuse_max: return "fuse_max";
    case Variant::lm_only: return "lm_only";
    case Variant::graph_only: return "graph_only";
  }
  return "?";
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {Variant::full,        Variant::no_sft,   Variant::no_finetune,
                                         Variant::no_pretrain, Variant::no_concat, Variant::fuse_average,
                                         Variant::fuse_max,    Variant::lm_only,  Variant::graph_only};
  return v;
}

Variant parse_variant(const std::string& text) {
  if (text == "none") return Variant::full;
  for (Variant v : all_variants()) {
    if (to_string(v) == text) return v;
  }
  throw ValidationError("unknown ablation variant '" + text + "'");
}

PipelineConfig PipelineConfig::desk_scale() {
  PipelineConfig c;
  c.model.text_dim = 32;
  c.model.text_mixing_layers = 1;
  c.model.max_len = 128;
  c.model.limits = {16, 32, 64};
  c.model.gnn_hidden = 32;
  c.model.gnn_output = 32;
  c.model.lm_head_hidden = 32;
  c.model.fusion_head_hidden = 32;

  c.sft.learning_rate = 1e-2;
  c.sft.max_epochs = 30;
  c.sft.patience = 5;
  c.sft.dropout_rate = 0.1;

  c.pretrain.learning_rate = 5e-3;
  c.pretrain.max_epochs = 30;

  c.finetune.learning_rate = 1e-2;
  c.finetune.max_epochs = 150;
  c.finetune.patience = 25;
  c.finetune.dropout_rate = 0.2;
  c.vocab_max_size = 5000;
  return c;
}

json PipelineConfig::to_json() const {
  return {{"model", model.to_json()},
          {"sft", sft.to_json()},
          {"pretrain", pretrain.to_json()},
          {"finetune", finetune.to_json()},
          {"vocab_max_size", vocab_max_size},
          {"vocab_min_count", vocab_min_count}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
  if (j.contains("sft")) c.sft = TrainConfig::from_json(j.at("sft"));
  if (j.contains("pretrain")) c.pretrain = TrainConfig::from_json(j.at("pretrain"));
  if (j.contains("finetune")) c.finetune = TrainConfig::from_json(j.at("finetune"));
  c.vocab_max_size = j.value("vocab_max_size", c.vocab_max_size);
  c.vocab_min_count = j.value("vocab_min_count", c.vocab_min_count);
  return c;
}

std::vector<TextSequence> node_sequences(const SocialGraph& g, const SegmentLimits& limits) {
  std::vector<TextSequence> seqs;
  seqs.reserve(g.num_nodes());
  for (std::size_t i = 0; i < g.num_nodes(); ++i) seqs.push_back(build_sequence(g.record(i), limits));
  return seqs;
}

Vocabulary build_vocabulary(const std::vector<TextSequence>& sequences, const PipelineConfig& cfg) {
  return Vocabulary::build(sequences, cfg.vocab_min_count, cfg.vocab_max_size);
}

Vocabulary build_vocabulary(const SocialGraph& g, const PipelineConfig& cfg) {
  return build_vocabulary(node_sequences(g, cfg.model.limits), cfg);
}

namespace {

FusionMode fusion_for(Variant v) {
  switch (v) {
    case Variant::no_concat:
    case Variant::graph_only: return FusionMode::graph_only;
    case Variant::fuse_average: return FusionMode::average;
    case Variant::fuse_max: return FusionMode::max;
    default: return FusionMode::concat;
  }
}

bool uses_sft(Variant v) { return v != Variant::no_sft && v != Variant::graph_only; }
bool uses_pretrain(Variant v) { return v != Variant::no_pretrain && v != Variant::lm_only; }
bool uses_finetune(Variant v) { return v != Variant::no_finetune && v != Variant::lm_only; }

// Lazily computed stage outputs shared between variants of one seed.
struct StageCache {
  const PipelineInputs& in;
  const PipelineConfig& cfg;
  std::uint64_t seed;
  MetricsLog* log;
  ModelBundle base;
  std::vector<std::vector<std::int32_t>> ids;
  LabeledNodes train, val, test;

  std::optional<StageResult> sft;
  std::map<bool, Matrix> features;
  std::map<bool, PretrainResult> pretrained;

  const ModelBundle& text_stage(bool with_sft) {
    if (!with_sft) return base;
    if (!sft) {
      std::vector<LabeledSequence> tr, va;
      for (std::size_t k = 0; k < train.size(); ++k) tr.push_back({ids[train.rows[k]], train.labels[k]});
      for (std::size_t k = 0; k < val.size(); ++k) va.push_back({ids[val.rows[k]], val.labels[k]});
      TrainConfig c = cfg.sft;
      c.seed = derive_seed(seed, 201);
      sft = sft_language_model(base, tr, va, c, log);
    }
    return sft->bundle;
  }

  const Matrix& x(bool with_sft) {
    auto it = features.find(with_sft);
    if (it == features.end()) {
      it = features.emplace(with_sft, text_encode_all(text_stage(with_sft).text, ids)).first;
    }
    return it->second;
  }

  const ModelBundle& graph_stage(bool with_sft, bool with_pretrain) {
    if (!with_pretrain) return text_stage(with_sft);
    auto it = pretrained.find(with_sft);
    if (it == pretrained.end()) {
      TrainConfig c = cfg.pretrain;
      c.seed = derive_seed(seed, 202);
      it = pretrained.emplace(with_sft, pretrain_gnn(text_stage(with_sft), *in.graph, x(with_sft), c, log)).first;
    }
    return it->second.bundle;
  }
};

void set_fusion(ModelBundle& b, FusionMode mode, std::uint64_t seed) {
  if (b.config.fusion == mode) return;
  b.config.fusion = mode;
  Rng rng(derive_seed(seed, 14));
  b.fusion_head = HeadParams::init(fused_dim(mode, b.config.text_dim, b.config.gnn_output),
                                   b.config.fusion_head_hidden, rng);
}

}  // namespace

std::vector<PipelineResult> run_variants(const PipelineInputs& in, const PipelineConfig& cfg,
                                         std::span<const Variant> variants, std::uint64_t seed,
                                         MetricsLog* log) {
  if (!in.graph) throw ValidationError("pipeline needs a graph");
  const SocialGraph& g = *in.graph;
  for (Variant v : variants) {
    const FusionMode mode = fusion_for(v);
    fused_dim(mode, cfg.model.text_dim, cfg.model.gnn_output);  // dimension check up front
  }

  if (in.sequences && in.sequences->size() != g.num_nodes()) {
    throw ShapeError("sequence override must cover every node");
  }
  ModelBundle base;
  if (in.warm_start) {
    base = *in.warm_start;
  } else if (in.vocab) {
    base = ModelBundle::init(cfg.model, *in.vocab, seed);
  } else {
    base = ModelBundle::init(cfg.model,
                             in.sequences ? build_vocabulary(*in.sequences, cfg) : build_vocabulary(g, cfg), seed);
  }
  StageCache cache{in, cfg, seed, log, std::move(base), {}, {}, {}, {}, {}, {}, {}};
  if (in.sequences) {
    for (const auto& s : *in.sequences) cache.ids.push_back(cache.base.encode_ids(s));
  } else {
    cache.ids = node_token_ids(cache.base, g);
  }
  cache.train = LabeledNodes::from_ids(g, in.split.train);
  cache.val = LabeledNodes::from_ids(g, in.split.val);
  cache.test = LabeledNodes::from_ids(g, in.split.test);
  const Adjacency adj = Adjacency::from_graph(g);

  std::vector<PipelineResult> out;
  for (Variant v : variants) {
    PipelineResult r;
    r.variant = v;
    const bool s = uses_sft(v);
    const Matrix& x = cache.x(s);
    if (s && cache.sft) r.sft_history = cache.sft->history;
    if (v == Variant::lm_only) {
      r.bundle = cache.text_stage(true);
      r.bot_probability = lm_bot_probabilities(r.bundle, x);
    } else {
      r.bundle = cache.graph_stage(s, uses_pretrain(v));
      if (uses_pretrain(v)) r.pretrain_history = cache.pretrained.at(s).loss_history;
      set_fusion(r.bundle, fusion_for(v), seed);
      if (uses_finetune(v)) {
        TrainConfig c = cfg.finetune;
        c.seed = derive_seed(seed, 203);
        StageResult ft = finetune_fusion(r.bundle, g, x, cache.train, cache.val, c, log);
        r.bundle = std::move(ft.bundle);
        r.finetune_history = std::move(ft.history);
      }
      r.bot_probability = fused_bot_probabilities(r.bundle, x, adj);
    }
    auto metrics_for = [&](const LabeledNodes& nodes) {
      std::vector<double> p;
      for (std::size_t row : nodes.rows) p.push_back(r.bot_probability[row]);
      return compute_metrics(nodes.labels, p);
    };
    if (cache.val.size() > 0) {
      r.val = metrics_for(cache.val);
      r.has_val = true;
    }
    if (cache.test.size() > 0) r.test = metrics_for(cache.test);
    out.push_back(std::move(r));
  }
  return out;
}

PipelineResult run_pipeline(const PipelineInputs& in, const PipelineConfig& cfg, Variant variant,
                            std::uint64_t seed, MetricsLog* log) {
  const Variant vs[] = {variant};
  return std::move(run_variants(in, cfg, vs, seed, log).front());
}

RunMetrics ablation_variant(const PipelineInputs& in, const PipelineConfig& cfg, Variant variant,
                            std::uint64_t seed) {
  return run_pipeline(in, cfg, variant, seed).test;
}

}  // namespace lgb
