#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "helpers.hpp"
#include "lgb/encoders.hpp"
#include "lgb/model.hpp"
#include "oracles.hpp"

using namespace lgb;
namespace {

using oracle::random_matrix;

TextEncoderParams random_text(Rng& rng, std::int64_t vocab, std::int64_t d, int layers, bool attention) {
  return TextEncoderParams::init({vocab, d, layers, attention}, rng);
}

GraphEncoderParams random_gnn(Rng& rng, GnnVariant v, std::int64_t in, std::int64_t hidden, std::int64_t out,
                              int layers = 2, double eps = 0.0) {
  GraphEncoderConfig c;
  c.variant = v;
  c.input_dim = in;
  c.hidden_dim = hidden;
  c.output_dim = out;
  c.layers = layers;
  c.gin_epsilon = eps;
  GraphEncoderParams p = GraphEncoderParams::init(c, rng);
  // Zero biases put ReLUs exactly on their kink for dead rows; finite differences need them off it.
  for (auto& [name, m] : named_tensors(p)) {
    if (name.find("bias") != std::string::npos) *m = random_matrix(rng, m->rows(), m->cols(), 0.3);
  }
  return p;
}

Adjacency random_adjacency(Rng& rng, std::size_t n, double p) {
  std::vector<IndexPair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng.bernoulli(p)) pairs.emplace_back(i, j);
    }
  }
  return Adjacency::from_pairs(n, pairs);
}

// Straight-line text encoder: rows as std::vector, every product a loop.
std::vector<double> text_oracle(const TextEncoderParams& p, const std::vector<std::int32_t>& ids) {
  const auto d = static_cast<std::size_t>(p.embedding.cols());
  const std::size_t t = ids.size();
  std::vector<std::vector<double>> h(t, std::vector<double>(d));
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t c = 0; c < d; ++c) h[i][c] = p.embedding(ids[i], static_cast<Eigen::Index>(c));
  }
  auto mat = [&](const std::vector<double>& row, const Matrix& w) {
    std::vector<double> out(static_cast<std::size_t>(w.cols()), 0.0);
    for (std::size_t o = 0; o < out.size(); ++o) {
      for (std::size_t c = 0; c < row.size(); ++c) out[o] += row[c] * w(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(o));
    }
    return out;
  };
  if (p.attention) {
    std::vector<std::vector<double>> q(t), k(t), v(t);
    for (std::size_t i = 0; i < t; ++i) {
      q[i] = mat(h[i], p.attention->query);
      k[i] = mat(h[i], p.attention->key);
      v[i] = mat(h[i], p.attention->value);
    }
    std::vector<std::vector<double>> next = h;
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> s(t);
      double m = -1e300;
      for (std::size_t j = 0; j < t; ++j) {
        double dot = 0;
        for (std::size_t c = 0; c < d; ++c) dot += q[i][c] * k[j][c];
        s[j] = dot / std::sqrt(static_cast<double>(d));
        m = std::max(m, s[j]);
      }
      double z = 0;
      for (double& x : s) z += (x = std::exp(x - m));
      for (std::size_t j = 0; j < t; ++j) {
        for (std::size_t c = 0; c < d; ++c) next[i][c] += s[j] / z * v[j][c];
      }
    }
    h = next;
  }
  for (const auto& layer : p.mixing) {
    for (auto& row : h) {
      const auto a = oracle::affine(layer, row);
      for (std::size_t c = 0; c < d; ++c) row[c] += std::tanh(a[c]);
    }
  }
  std::vector<double> mean(d, 0.0);
  for (const auto& row : h) {
    for (std::size_t c = 0; c < d; ++c) mean[c] += row[c] / static_cast<double>(t);
  }
  return mean;
}

}  // namespace

TEST_SUITE("encoders") {
  TEST_CASE("text encoder: identity layers reduce to the mean embedding") {
    Rng rng(1);
    const Matrix emb = random_matrix(rng, 6, 4);
    const auto p = TextEncoderParams::identity({6, 4, 2, true}, emb);
    const std::vector<std::int32_t> one = {3};
    CHECK(text_encode(p, one).isApprox(emb.row(3), 1e-15));
    const std::vector<std::int32_t> two = {2, 5};
    const Matrix want = 0.5 * (emb.row(2) + emb.row(5));
    CHECK((text_encode(p, two) - want).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("text encoder: matches the straight-line forward pass") {
    Rng rng(2);
    for (bool attention : {false, true}) {
      const auto p = random_text(rng, 20, 5, 2, attention);
      const std::vector<std::int32_t> ids = {4, 9, 1, 17, 4};
      const auto want = text_oracle(p, ids);
      const Matrix got = text_encode(p, ids);
      for (int c = 0; c < 5; ++c) CHECK(got(0, c) == doctest::Approx(want[static_cast<std::size_t>(c)]).epsilon(1e-12));
    }
  }

  TEST_CASE("text encoder: empty input, bad ids, order invariance without attention") {
    Rng rng(3);
    const auto p = random_text(rng, 10, 4, 1, false);
    CHECK(text_encode(p, std::vector<std::int32_t>{}).isZero());
    CHECK_THROWS_AS(text_encode(p, std::vector<std::int32_t>{10}), ValidationError);
    CHECK_THROWS_AS(text_encode(p, std::vector<std::int32_t>{-1}), ValidationError);
    const Matrix a = text_encode(p, std::vector<std::int32_t>{1, 2, 3, 7});
    const Matrix b = text_encode(p, std::vector<std::int32_t>{7, 3, 1, 2});
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    const auto q = random_text(rng, 10, 4, 1, true);
    const Matrix c = text_encode(q, std::vector<std::int32_t>{1, 2, 3, 7});
    const Matrix d = text_encode(q, std::vector<std::int32_t>{7, 3, 1, 2});
    CHECK((c - d).cwiseAbs().maxCoeff() < 1e-12);  // attention without positions is permutation invariant too
  }

  TEST_CASE("GCN hand-computed two-node case") {
    Rng rng(4);
    auto p = random_gnn(rng, GnnVariant::gcn, 2, 2, 2, 1);
    p.layers[0].linear.weight = Matrix::Identity(2, 2);
    p.layers[0].linear.bias.setZero();
    Matrix x(2, 2);
    x << 1, 0, 0, 3;
    const Matrix h = gnn_forward(p, x, Adjacency::from_pairs(2, {{0, 1}}));
    Matrix want(2, 2);
    want << 0.5, 1.5, 0.5, 1.5;
    CHECK((h - want).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("GCN matches the dense normalized adjacency product") {
    Rng rng(5);
    const Adjacency adj = random_adjacency(rng, 7, 0.4);
    auto p = random_gnn(rng, GnnVariant::gcn, 3, 4, 2, 1);
    const Matrix x = random_matrix(rng, 7, 3);
    Matrix a = Matrix::Identity(7, 7);
    for (std::size_t i = 0; i < 7; ++i) {
      for (auto j : adj.neighbors[i]) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
    }
    Matrix dinv = Matrix::Zero(7, 7);
    for (int i = 0; i < 7; ++i) dinv(i, i) = 1.0 / std::sqrt(a.row(i).sum());
    Matrix want = dinv * a * dinv * x * p.layers[0].linear.weight;
    want.rowwise() += p.layers[0].linear.bias.row(0);
    CHECK((gnn_forward(p, x, adj) - want).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("GIN sums neighbors with (1 + eps) self weight") {
    Rng rng(6);
    const Adjacency adj = random_adjacency(rng, 6, 0.5);
    const auto p = random_gnn(rng, GnnVariant::gin, 3, 4, 2, 1, 0.3);
    const Matrix x = random_matrix(rng, 6, 3);
    const Matrix h = gnn_forward(p, x, adj);
    for (std::size_t i = 0; i < 6; ++i) {
      std::vector<double> agg(3);
      for (int c = 0; c < 3; ++c) {
        agg[static_cast<std::size_t>(c)] = 1.3 * x(static_cast<Eigen::Index>(i), c);
        for (auto j : adj.neighbors[i]) agg[static_cast<std::size_t>(c)] += x(static_cast<Eigen::Index>(j), c);
      }
      const auto want = oracle::affine(p.layers[0].update, oracle::relu(oracle::affine(p.layers[0].linear, agg)));
      for (int c = 0; c < 2; ++c) {
        CHECK(h(static_cast<Eigen::Index>(i), c) == doctest::Approx(want[static_cast<std::size_t>(c)]).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("GIN with eps 0 on an isolated node is the perceptron on its own features") {
    Rng rng(7);
    const auto p = random_gnn(rng, GnnVariant::gin, 3, 5, 2, 2, 0.0);
    const Matrix x = random_matrix(rng, 4, 3);
    const Adjacency adj = Adjacency::from_pairs(4, {{0, 1}, {1, 2}});  // node 3 isolated
    const Matrix h = gnn_forward(p, x, adj);
    Matrix row = x.row(3);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      row = p.layers[l].update.forward(relu(p.layers[l].linear.forward(row)));
      if (l + 1 < p.layers.size()) row = relu(row);
    }
    CHECK(h.row(3) == row);
  }

  TEST_CASE("GAT attention weights form a distribution over self and neighbors") {
    Rng rng(8);
    const Adjacency adj = random_adjacency(rng, 6, 0.5);
    const auto p = random_gnn(rng, GnnVariant::gat, 3, 4, 2);
    GnnTrace tr;
    gnn_forward(p, random_matrix(rng, 6, 3), adj, &tr);
    for (const auto& layer : tr.layers) {
      for (std::size_t i = 0; i < 6; ++i) {
        REQUIRE(layer.alpha[i].size() == adj.neighbors[i].size() + 1);
        CHECK(std::accumulate(layer.alpha[i].begin(), layer.alpha[i].end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("graph encoders are permutation equivariant") {
    Rng rng(9);
    for (GnnVariant v : {GnnVariant::gcn, GnnVariant::gin, GnnVariant::gat}) {
      const Adjacency adj = random_adjacency(rng, 8, 0.35);
      const auto p = random_gnn(rng, v, 3, 4, 3);
      const Matrix x = random_matrix(rng, 8, 3);
      std::vector<std::size_t> perm(8);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      Matrix px(8, 3);
      for (std::size_t i = 0; i < 8; ++i) px.row(static_cast<Eigen::Index>(perm[i])) = x.row(static_cast<Eigen::Index>(i));
      const Matrix h = gnn_forward(p, x, adj);
      const Matrix ph = gnn_forward(p, px, adj.permuted(perm));
      for (std::size_t i = 0; i < 8; ++i) {
        CHECK((ph.row(static_cast<Eigen::Index>(perm[i])) - h.row(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff() < 1e-12);
      }
    }
  }

  TEST_CASE("shape errors") {
    Rng rng(10);
    const auto p = random_gnn(rng, GnnVariant::gin, 3, 4, 2);
    CHECK_THROWS_AS(gnn_forward(p, random_matrix(rng, 4, 3), Adjacency::from_pairs(5, {})), ShapeError);
    CHECK_THROWS_AS(gnn_forward(p, random_matrix(rng, 4, 2), Adjacency::from_pairs(4, {})), ShapeError);
    const HeadParams h = HeadParams::init(3, 4, rng);
    CHECK_THROWS_AS(classify(h, random_matrix(rng, 2, 5)), ShapeError);
    CHECK_THROWS_AS(fuse(FusionMode::average, random_matrix(rng, 2, 3), random_matrix(rng, 2, 4)), ShapeError);
  }

  TEST_CASE("classify: softmax closed forms") {
    Rng rng(11);
    HeadParams h;
    h.layers.push_back(Linear::zeros(2, 2));
    h.layers[0].weight = Matrix::Identity(2, 2);
    Matrix f(3, 2);
    f << 0, 0, 0.25, 1.25, 100, 101;
    const Matrix p = classify(h, f);
    CHECK(p(0, 0) == doctest::Approx(0.5));
    CHECK(p(1, 1) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
    CHECK(p(2, 1) == doctest::Approx(p(1, 1)).epsilon(1e-12));
    const HeadParams r = HeadParams::init(4, 6, rng);
    const Matrix q = classify(r, random_matrix(rng, 10, 4, 3.0));
    for (int i = 0; i < 10; ++i) {
      CHECK(q.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(q(i, 0) > 0.0);
      CHECK(q(i, 0) < 1.0);
    }
  }

  TEST_CASE("fuse_classify: concat order and block-zero reduction") {
    Rng rng(12);
    const Matrix x = random_matrix(rng, 5, 3);
    const Matrix g = Matrix::Zero(5, 2);
    HeadParams wide = HeadParams::init(5, 4, rng);
    HeadParams narrow = wide;
    narrow.layers[0].weight = wide.layers[0].weight.topRows(3);
    wide.layers[0].weight.bottomRows(2).setZero();
    CHECK((fuse_classify(wide, x, random_matrix(rng, 5, 2)) - classify(narrow, x)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((fuse_classify(wide, x, g) - classify(narrow, x)).cwiseAbs().maxCoeff() < 1e-15);

    // d = d_g = 1, one affine layer: logits = (x w0 + h w1 + b).
    HeadParams s;
    s.layers.push_back(Linear::zeros(2, 2));
    s.layers[0].weight << 1.0, -1.0, 2.0, 0.5;
    s.layers[0].bias << 0.1, -0.2;
    Matrix x1(1, 1), h1(1, 1);
    x1 << 0.5;
    h1 << -1.0;
    const double l0 = 0.5 * 1.0 + -1.0 * 2.0 + 0.1, l1 = 0.5 * -1.0 + -1.0 * 0.5 - 0.2;
    CHECK(fuse_classify(s, x1, h1)(0, 1) == doctest::Approx(std::exp(l1) / (std::exp(l0) + std::exp(l1))).epsilon(1e-12));

    const Matrix hx = random_matrix(rng, 5, 2);
    Matrix sx = x, sh = hx;
    sx.row(0).swap(sx.row(3));
    sh.row(0).swap(sh.row(3));
    const HeadParams any = HeadParams::init(5, 4, rng);
    const Matrix a = fuse_classify(any, x, hx), b = fuse_classify(any, sx, sh);
    CHECK((a.row(0) - b.row(3)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((a.row(3) - b.row(0)).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("gradients: constant loss gives zeros, quadratic at 3 gives 6") {
    Rng rng(13);
    const HeadParams h = HeadParams::init(3, 4, rng);
    HeadTrace tr;
    const Matrix f = random_matrix(rng, 4, 3);
    head_logits(h, f, &tr);
    HeadParams g = zeros_like(h);
    head_backward(h, tr, Matrix::Zero(4, 2), g);
    for (const auto& [name, m] : named_tensors(std::as_const(g))) CHECK(m->isZero());

    Matrix w(1, 1);
    w << 3.0;
    Matrix gw(1, 1);
    gw << 2 * w(0, 0);
    CHECK(gw(0, 0) == 6.0);
    CHECK(oracle::max_relative_error(w, gw, [&]() { return w(0, 0) * w(0, 0); }) < 1e-8);
  }

  TEST_CASE("gradients: head cross-entropy vs finite differences") {
    Rng rng(14);
    HeadParams h = HeadParams::init(4, 5, rng);
    const Matrix f = random_matrix(rng, 6, 4);
    const std::vector<std::size_t> rows = {0, 2, 3, 5};
    const std::vector<Label> labels = {Label::bot, Label::human, Label::bot, Label::human};
    HeadTrace tr;
    const LossResult r = cross_entropy(head_logits(h, f, &tr), rows, labels);
    HeadParams g = zeros_like(h);
    head_backward(h, tr, r.d_logits, g);
    CHECK(oracle::max_relative_error(h, g, [&]() { return cross_entropy(head_logits(h, f), rows, labels).value; }) < 1e-4);
  }

  TEST_CASE("gradients: graph encoders vs finite differences") {
    Rng rng(15);
    for (GnnVariant v : {GnnVariant::gcn, GnnVariant::gin, GnnVariant::gat}) {
      CAPTURE(to_string(v));
      const Adjacency adj = random_adjacency(rng, 5, 0.5);
      GraphEncoderParams p = random_gnn(rng, v, 3, 4, 3, 2, 0.1);
      Matrix x = random_matrix(rng, 5, 3);
      const Matrix w = random_matrix(rng, 5, 3);
      auto loss = [&]() { return (gnn_forward(p, x, adj).array() * w.array()).sum(); };
      GnnTrace tr;
      gnn_forward(p, x, adj, &tr);
      GraphEncoderParams g = zeros_like(p);
      const Matrix dx = gnn_backward(p, adj, tr, w, g);
      CHECK(oracle::max_relative_error(p, g, loss) < 1e-4);
      CHECK(oracle::max_relative_error(x, dx, loss) < 1e-4);
    }
  }

  TEST_CASE("gradients: text encoder vs finite differences") {
    Rng rng(16);
    for (bool attention : {false, true}) {
      TextEncoderParams p = random_text(rng, 9, 4, 2, attention);
      const std::vector<std::int32_t> ids = {1, 5, 5, 8, 2};
      const Matrix w = random_matrix(rng, 1, 4);
      TextEncoderTrace tr;
      text_encode(p, ids, &tr);
      TextEncoderParams g = zeros_like(p);
      text_encode_backward(p, tr, w, g);
      CHECK(oracle::max_relative_error(p, g, [&]() { return (text_encode(p, ids).array() * w.array()).sum(); }) < 1e-4);
    }
  }

  TEST_CASE("fusion modes and their graph gradients") {
    Rng rng(17);
    const Matrix x = random_matrix(rng, 4, 3);
    Matrix h = random_matrix(rng, 4, 3);
    CHECK(fused_dim(FusionMode::concat, 3, 2) == 5);
    CHECK(fused_dim(FusionMode::graph_only, 3, 2) == 2);
    CHECK_THROWS_AS(fused_dim(FusionMode::average, 3, 2), ShapeError);
    for (FusionMode m : {FusionMode::concat, FusionMode::average, FusionMode::max, FusionMode::graph_only}) {
      const Matrix probe = random_matrix(rng, 4, fused_dim(m, 3, 3));
      auto loss = [&]() { return (fuse(m, x, h).array() * probe.array()).sum(); };
      CHECK(oracle::max_relative_error(h, fuse_backward_graph(m, x, h, probe), loss) < 1e-4);
    }
  }

  TEST_CASE("model bundle checkpoint round trip and hash checks") {
    Rng rng(18);
    ModelConfig cfg;
    cfg.text_dim = 6;
    cfg.gnn_hidden = 5;
    cfg.gnn_output = 4;
    cfg.lm_head_hidden = 3;
    cfg.fusion_head_hidden = 3;
    std::vector<std::string> toks = Vocabulary::reserved();
    toks.push_back("hello");
    const ModelBundle b = ModelBundle::init(cfg, Vocabulary::from_tokens(toks), 42);
    CHECK(ModelBundle::init(cfg, Vocabulary::from_tokens(toks), 42).version() == b.version());
    CHECK(ModelBundle::init(cfg, Vocabulary::from_tokens(toks), 43).version() != b.version());

    const auto path = std::filesystem::temp_directory_path() / "lgb_ckpt_test.json";
    save_checkpoint(b, path);
    const ModelBundle c = load_checkpoint(path, cfg.hash());
    CHECK(c.version() == b.version());
    CHECK(c.vocab == b.vocab);
    CHECK(bundle_to_json(c) == bundle_to_json(b));
    ModelConfig other = cfg;
    other.text_dim = 7;
    CHECK_THROWS_AS(load_checkpoint(path, other.hash()), ValidationError);

    nlohmann::json j = bundle_to_json(b);
    j["config"]["gnn_hidden"] = 99;
    CHECK_THROWS_AS(bundle_from_json(j), ValidationError);
    std::filesystem::remove(path);
  }
}
