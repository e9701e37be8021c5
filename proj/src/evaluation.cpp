#include "lgb/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "lgb/analytics.hpp"
#include "lgb/hashing.hpp"

namespace lgb {

using nlohmann::json;

std::vector<NeighborBucketAccuracy> accuracy_by_neighbor_count(const SocialGraph& g,
                                                               std::span<const NodeId> nodes,
                                                               std::span<const double> bot_probability,
                                                               std::size_t cap) {
  if (nodes.size() != bot_probability.size()) throw ValidationError("nodes and predictions differ in length");
  std::map<std::size_t, NeighborBucketAccuracy> buckets;
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    const std::size_t i = g.index_of(nodes[n]);
    const auto label = g.label(i);
    if (!label) throw ValidationError("node '" + nodes[n] + "' has no label");
    const std::size_t k = std::min(neighbor_count(g, i), cap);
    auto& b = buckets[k];
    b.k = k;
    b.capped = k == cap;
    ++b.support;
    b.correct += decide(bot_probability[n]) == *label;
  }
  std::vector<NeighborBucketAccuracy> out;
  for (auto& [k, b] : buckets) {
    b.accuracy = static_cast<double>(b.correct) / static_cast<double>(b.support);
    out.push_back(b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SyntheticSpec::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string(name) + " must be in [0, 1]");
  };
  if (n_nodes == 0) throw ValidationError("n_nodes must be positive");
  if (!(bot_fraction > 0.0 && bot_fraction < 1.0)) throw ValidationError("bot_fraction must be in (0, 1)");
  prob(text_signal, "text_signal");
  prob(token_purity, "token_purity");
  prob(p_intra, "p_intra");
  prob(p_inter, "p_inter");
  prob(isolated_fraction, "isolated_fraction");
  prob(vocab_shift, "vocab_shift");
  if (!(degree_dispersion >= 0.0)) throw ValidationError("degree_dispersion must be non-negative");
  if (class_pool_size == 0 || shared_pool_size == 0) throw ValidationError("token pools must be nonempty");
}

json SyntheticSpec::to_json() const {
  return {{"n_nodes", n_nodes},
          {"bot_fraction", bot_fraction},
          {"text_signal", text_signal},
          {"token_purity", token_purity},
          {"p_intra", p_intra},
          {"p_inter", p_inter},
          {"isolated_fraction", isolated_fraction},
          {"degree_dispersion", degree_dispersion},
          {"seed", seed},
          {"class_pool_size", class_pool_size},
          {"shared_pool_size", shared_pool_size},
          {"tweets_per_user", tweets_per_user},
          {"tokens_per_tweet", tokens_per_tweet},
          {"description_tokens", description_tokens},
          {"vocab_shift", vocab_shift},
          {"vocab_tag", vocab_tag},
          {"id_prefix", id_prefix},
          {"split_ratios", split_ratios}};
}

SyntheticSpec SyntheticSpec::from_json(const json& j) {
  SyntheticSpec s;
  s.n_nodes = j.value("n_nodes", s.n_nodes);
  s.bot_fraction = j.value("bot_fraction", s.bot_fraction);
  s.text_signal = j.value("text_signal", s.text_signal);
  s.token_purity = j.value("token_purity", s.token_purity);
  s.p_intra = j.value("p_intra", s.p_intra);
  s.p_inter = j.value("p_inter", s.p_inter);
  s.isolated_fraction = j.value("isolated_fraction", s.isolated_fraction);
  s.degree_dispersion = j.value("degree_dispersion", s.degree_dispersion);
  s.seed = j.value("seed", s.seed);
  s.class_pool_size = j.value("class_pool_size", s.class_pool_size);
  s.shared_pool_size = j.value("shared_pool_size", s.shared_pool_size);
  s.tweets_per_user = j.value("tweets_per_user", s.tweets_per_user);
  s.tokens_per_tweet = j.value("tokens_per_tweet", s.tokens_per_tweet);
  s.description_tokens = j.value("description_tokens", s.description_tokens);
  s.vocab_shift = j.value("vocab_shift", s.vocab_shift);
  s.vocab_tag = j.value("vocab_tag", s.vocab_tag);
  s.id_prefix = j.value("id_prefix", s.id_prefix);
  s.split_ratios = j.value("split_ratios", s.split_ratios);
  return s;
}

SocialGraph generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_nodes;
  const auto n_bots = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.bot_fraction));
  const auto n_isolated = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.isolated_fraction));
  if (n_bots == 0 || n_bots == n) throw ValidationError("bot_fraction leaves a class empty");
  if (n - n_isolated == 1) throw ValidationError("a single non-isolated node cannot receive an edge");

  std::vector<Label> labels(n, Label::human);
  {
    Rng rng(derive_seed(spec.seed, 1));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t k = 0; k < n_bots; ++k) labels[order[k]] = Label::bot;
  }
  std::vector<bool> isolated(n, false);
  {
    Rng rng(derive_seed(spec.seed, 2));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t k = 0; k < n_isolated; ++k) isolated[order[k]] = true;
  }

  const std::size_t width = std::to_string(n - 1).size();
  auto node_id = [&](std::size_t i) {
    std::string s = std::to_string(i);
    return spec.id_prefix + std::string(width - s.size(), '0') + s;
  };
  const auto shifted = static_cast<std::size_t>(
      std::llround(static_cast<double>(spec.class_pool_size) * spec.vocab_shift));
  auto class_token = [&](Label l, std::size_t k) {
    std::string t = (l == Label::bot ? "bot" : "hum") + std::to_string(k);
    if (k < shifted) t += spec.vocab_tag;
    return t;
  };

  std::vector<NodeData> nodes(n);
  {
    Rng rng(derive_seed(spec.seed, 3));
    for (std::size_t i = 0; i < n; ++i) {
      const bool informative = rng.uniform() < spec.text_signal;
      auto draw = [&]() {
        if (informative && rng.uniform() < spec.token_purity) {
          return class_token(labels[i], static_cast<std::size_t>(rng.below(spec.class_pool_size)));
        }
        return "w" + std::to_string(rng.below(spec.shared_pool_size));
      };
      auto text = [&](std::size_t count) {
        std::string s;
        for (std::size_t t = 0; t < count; ++t) {
          if (t) s += ' ';
          s += draw();
        }
        return s;
      };
      UserRecord& u = nodes[i].record;
      u.id = node_id(i);
      u.name = u.id;
      u.followers_count = static_cast<std::int64_t>(rng.below(500));
      u.following_count = static_cast<std::int64_t>(rng.below(500));
      u.description = text(spec.description_tokens);
      for (std::size_t t = 0; t < spec.tweets_per_user; ++t) u.tweets.push_back(text(spec.tokens_per_tweet));
      nodes[i].label = labels[i];
    }
  }

  std::vector<Edge> edges;
  {
    Rng rng(derive_seed(spec.seed, 4));
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < n; ++i) {
      if (!isolated[i]) active.push_back(i);
    }
    std::vector<std::size_t> degree(n, 0);
    std::vector<double> weight(n, 1.0);
    if (spec.degree_dispersion > 0.0) {
      const double sd = spec.degree_dispersion;
      for (double& w : weight) w = std::exp(sd * rng.normal() - 0.5 * sd * sd);
    }
    auto add = [&](std::size_t a, std::size_t b) {
      if (rng.bernoulli(0.5)) std::swap(a, b);
      edges.push_back({node_id(a), node_id(b), "follow"});
      ++degree[a];
      ++degree[b];
    };
    for (std::size_t x = 0; x < active.size(); ++x) {
      for (std::size_t y = x + 1; y < active.size(); ++y) {
        const std::size_t a = active[x], b = active[y];
        const double p = (labels[a] == labels[b] ? spec.p_intra : spec.p_inter) * weight[a] * weight[b];
        if (rng.uniform() < p) add(a, b);
      }
    }
    // Every non-isolated node gets at least one edge, partner drawn by the
    // block probabilities.
    std::vector<std::size_t> same, other;
    for (std::size_t a : active) {
      if (degree[a] > 0) continue;
      same.clear();
      other.clear();
      for (std::size_t b : active) {
        if (b == a) continue;
        (labels[b] == labels[a] ? same : other).push_back(b);
      }
      const double total = spec.p_intra + spec.p_inter;
      bool pick_same = total > 0.0 ? rng.uniform() < spec.p_intra / total : rng.bernoulli(0.5);
      if (same.empty()) pick_same = false;
      if (other.empty()) pick_same = true;
      const auto& pool = pick_same ? same : other;
      add(a, pool[rng.below(pool.size())]);
    }
  }

  SocialGraph g = SocialGraph::build(std::move(nodes), std::move(edges));
  return g.with_splits(make_split(g, spec.split_ratios, derive_seed(spec.seed, 5)));
}

// ---------------------------------------------------------------------------
// Robustness

std::string to_string(RobustnessMode m) {
  switch (m) {
    case RobustnessMode::label: return "label";
    case RobustnessMode::edge: return "edge";
    case RobustnessMode::feature: return "feature";
  }
  return "?";
}

RobustnessMode parse_robustness_mode(const std::string& text) {
  if (text == "label") return RobustnessMode::label;
  if (text == "edge") return RobustnessMode::edge;
  if (text == "feature") return RobustnessMode::feature;
  throw ValidationError("unknown robustness mode '" + text + "'");
}

std::vector<NodeId> subsample_labels(const SocialGraph& g, const std::vector<NodeId>& train, double fraction,
                                     std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("label fraction must be in (0, 1]");
  if (fraction == 1.0) return train;
  std::vector<bool> keep(train.size(), false);
  Rng rng(seed);
  for (Label c : {Label::human, Label::bot}) {
    std::vector<std::size_t> members;
    for (std::size_t k = 0; k < train.size(); ++k) {
      if (g.label(train[k]) == c) members.push_back(k);
    }
    const auto take = static_cast<std::size_t>(std::llround(static_cast<double>(members.size()) * fraction));
    if (take == 0) {
      throw DegenerateLabelsError("label fraction " + std::to_string(fraction) + " leaves no " + to_string(c) +
                                  " training labels");
    }
    rng.shuffle(members);
    for (std::size_t k = 0; k < take; ++k) keep[members[k]] = true;
  }
  std::vector<NodeId> out;
  for (std::size_t k = 0; k < train.size(); ++k) {
    if (keep[k]) out.push_back(train[k]);
  }
  return out;
}

SocialGraph subsample_edges(const SocialGraph& g, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ValidationError("edge fraction must be in [0, 1]");
  const std::size_t e = g.undirected_edges().size();
  std::vector<bool> keep(e, true);
  if (fraction < 1.0) {
    std::vector<std::size_t> order(e);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    const auto kept = static_cast<std::size_t>(std::llround(static_cast<double>(e) * fraction));
    for (std::size_t k = kept; k < e; ++k) keep[order[k]] = false;
  }
  return g.with_undirected_mask(keep);
}

std::vector<TextSequence> corrupt_sequences(const std::vector<TextSequence>& sequences, double probability,
                                            std::uint64_t seed, double delete_share) {
  if (!(probability >= 0.0 && probability <= 1.0)) throw ValidationError("corruption probability must be in [0, 1]");
  std::vector<TextSequence> out = sequences;
  Rng rng(seed);
  for (auto& seq : out) {
    if (!(rng.uniform() < probability)) continue;
    std::size_t total = 0;
    for (const auto& s : seq.segments) total += s.tokens.size();
    const auto remove = static_cast<std::size_t>(std::llround(static_cast<double>(total) * delete_share));
    if (remove == 0) continue;
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<bool> drop(total, false);
    for (std::size_t k = 0; k < remove; ++k) drop[order[k]] = true;
    std::size_t pos = 0;
    for (auto& s : seq.segments) {
      std::vector<std::string> kept;
      for (auto& t : s.tokens) {
        if (!drop[pos++]) kept.push_back(std::move(t));
      }
      s.tokens = std::move(kept);
    }
    seq.flat_tokens = flatten(seq.segments);
  }
  return out;
}

namespace {

void check_level(RobustnessMode mode, double level) {
  const bool ok = mode == RobustnessMode::label ? (level > 0.0 && level <= 1.0) : (level >= 0.0 && level <= 1.0);
  if (!ok) throw ValidationError("robustness level " + std::to_string(level) + " outside the range for " + to_string(mode));
}

}  // namespace

RobustnessResult run_robustness(const PipelineInputs& in, const PipelineConfig& cfg, RobustnessMode mode,
                                const std::vector<double>& levels, const std::vector<std::uint64_t>& seeds) {
  if (!in.graph) throw ValidationError("robustness needs a graph");
  if (seeds.empty()) throw ValidationError("robustness needs at least one seed");
  for (double l : levels) check_level(mode, l);
  const SocialGraph& g = *in.graph;

  RobustnessResult result;
  result.mode = mode;
  std::vector<RunMetrics> base_runs;
  for (std::uint64_t s : seeds) base_runs.push_back(run_pipeline(in, cfg, Variant::full, s).test);
  result.baseline = MetricsReport::aggregate(base_runs);

  const std::vector<TextSequence> sequences = in.sequences ? *in.sequences : node_sequences(g, cfg.model.limits);
  for (double level : levels) {
    std::vector<RunMetrics> runs;
    for (std::uint64_t s : seeds) {
      PipelineInputs mod = in;
      SocialGraph sub;
      switch (mode) {
        case RobustnessMode::label:
          mod.split.train = subsample_labels(g, in.split.train, level, derive_seed(s, 301));
          break;
        case RobustnessMode::edge:
          sub = subsample_edges(g, level, derive_seed(s, 302));
          mod.graph = &sub;
          break;
        case RobustnessMode::feature:
          mod.sequences = corrupt_sequences(sequences, level, derive_seed(s, 303));
          break;
      }
      runs.push_back(run_pipeline(mod, cfg, Variant::full, s).test);
    }
    result.levels.push_back({level, MetricsReport::aggregate(std::move(runs))});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Feedback study

std::vector<double> predict_graph(const ModelBundle& b, const SocialGraph& g) {
  return fused_bot_probabilities(b, node_features(b, g), Adjacency::from_graph(g));
}

RunMetrics metrics_on(const SocialGraph& g, const std::vector<NodeId>& ids, std::span<const double> probability) {
  std::vector<Label> y;
  std::vector<double> p;
  for (const auto& id : ids) {
    const std::size_t i = g.index_of(id);
    const auto l = g.label(i);
    if (!l) throw ValidationError("node '" + id + "' has no label");
    y.push_back(*l);
    p.push_back(probability[i]);
  }
  return compute_metrics(y, p);
}

std::vector<FeedbackPoint> run_feedback_study(const ModelBundle& trained_on_a, const PipelineInputs& b,
                                              const PipelineConfig& cfg, const std::vector<std::size_t>& ks,
                                              std::uint64_t seed) {
  if (!b.graph) throw ValidationError("feedback study needs dataset B");
  const SocialGraph& g = *b.graph;

  // One shuffled order per class so that larger K extends smaller K.
  std::map<Label, std::vector<NodeId>> by_class;
  for (const auto& id : b.split.train) {
    const auto l = g.label(id);
    if (!l) throw ValidationError("node '" + id + "' has no label");
    by_class[*l].push_back(id);
  }
  Rng rng(derive_seed(seed, 401));
  for (auto& [label, ids] : by_class) rng.shuffle(ids);

  const std::vector<double> zero_shot = predict_graph(trained_on_a, g);
  const bool has_val = !b.split.val.empty();
  const double zero_shot_val = has_val ? metrics_on(g, b.split.val, zero_shot).accuracy : 0.0;

  std::vector<FeedbackPoint> out;
  for (std::size_t k : ks) {
    FeedbackPoint pt;
    pt.k = k;
    if (k == 0) {
      pt.metrics = metrics_on(g, b.split.test, zero_shot);
      out.push_back(pt);
      continue;
    }
    std::set<NodeId> chosen;
    for (Label c : {Label::human, Label::bot}) {
      const auto& ids = by_class[c];
      if (k > ids.size()) {
        throw ValidationError("K=" + std::to_string(k) + " exceeds the " + std::to_string(ids.size()) + " " +
                              to_string(c) + " training samples of dataset B");
      }
      chosen.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
    }
    PipelineInputs in = b;
    in.split.train.clear();
    for (const auto& id : b.split.train) {
      if (chosen.count(id)) in.split.train.push_back(id);
    }
    in.warm_start = &trained_on_a;
    in.vocab.reset();
    const PipelineResult r = run_pipeline(in, cfg, Variant::no_pretrain, seed);
    // The transferred bundle competes as the epoch-0 checkpoint.
    if (has_val && r.val.accuracy < zero_shot_val) {
      pt.metrics = metrics_on(g, b.split.test, zero_shot);
    } else {
      pt.metrics = r.test;
    }
    out.push_back(pt);
  }
  return out;
}

json run_summary(const PipelineResult& r, const PipelineConfig& cfg, std::uint64_t seed) {
  json j = {{"variant", to_string(r.variant)},
            {"seed", seed},
            {"config_hash", fnv1a_hex(cfg.to_json().dump())},
            {"model_version", r.bundle.version()},
            {"test", r.test.to_json()}};
  if (r.has_val) j["val"] = r.val.to_json();
  return j;
}

std::vector<std::uint64_t> default_seeds() { return {0, 1, 2, 3, 4}; }

}  // namespace lgb
