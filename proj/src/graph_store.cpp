#include "lgb/graph_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "lgb/random.hpp"

namespace lgb {

using nlohmann::json;

std::string to_string(Label l) { return l == Label::bot ? "bot" : "human"; }

Label parse_label(const std::string& text) {
  if (text == "human" || text == "0") return Label::human;
  if (text == "bot" || text == "1") return Label::bot;
  throw ValidationError("invalid label '" + text + "' (expected human or bot)");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw ValidationError("invalid split '" + text + "'");
}

SocialGraph SocialGraph::build(std::vector<NodeData> nodes, std::vector<Edge> edges) {
  SocialGraph g;
  g.ids_.reserve(nodes.size());
  for (auto& n : nodes) {
    if (n.record.followers_count < 0 || n.record.following_count < 0) {
      throw IntegrityError("negative count for node '" + n.record.id + "'");
    }
    if (!g.index_.emplace(n.record.id, g.ids_.size()).second) {
      throw IntegrityError("duplicate node-id '" + n.record.id + "'");
    }
    g.ids_.push_back(n.record.id);
    g.labels_.push_back(n.label);
    g.splits_.push_back(n.split);
    g.records_.push_back(std::move(n.record));
  }

  std::vector<NodeId> dangling;
  for (const auto& e : edges) {
    if (!g.index_.count(e.source)) dangling.push_back(e.source);
    if (!g.index_.count(e.target)) dangling.push_back(e.target);
  }
  if (!dangling.empty()) {
    std::sort(dangling.begin(), dangling.end());
    dangling.erase(std::unique(dangling.begin(), dangling.end()), dangling.end());
    std::string msg = "edges reference unknown node-ids:";
    for (const auto& id : dangling) msg += " " + id;
    throw IntegrityError(msg);
  }
  g.edges_ = std::move(edges);
  g.index_all();
  return g;
}

void SocialGraph::index_all() {
  const std::size_t n = ids_.size();
  out_adj_.assign(n, {});
  undirected_adj_.assign(n, {});
  undirected_edges_.clear();
  for (const auto& e : edges_) {
    const std::size_t s = index_.at(e.source);
    const std::size_t t = index_.at(e.target);
    out_adj_[s].push_back(t);
    undirected_adj_[s].push_back(t);
    if (s != t) undirected_adj_[t].push_back(s);
    if (s != t) undirected_edges_.emplace_back(std::min(s, t), std::max(s, t));
  }
  auto dedup = [](std::vector<std::size_t>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  for (auto& v : out_adj_) dedup(v);
  for (auto& v : undirected_adj_) dedup(v);
  std::sort(undirected_edges_.begin(), undirected_edges_.end());
  undirected_edges_.erase(std::unique(undirected_edges_.begin(), undirected_edges_.end()),
                          undirected_edges_.end());
}

std::size_t SocialGraph::index_of(const NodeId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw LookupError("unknown node-id '" + id + "'");
  return it->second;
}

std::vector<std::pair<NodeId, Label>> SocialGraph::labeled() const {
  std::vector<std::pair<NodeId, Label>> out;
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (labels_[i]) out.emplace_back(ids_[i], *labels_[i]);
  }
  return out;
}

DatasetSplit SocialGraph::recorded_split() const {
  DatasetSplit s;
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!splits_[i] || !labels_[i]) continue;
    switch (*splits_[i]) {
      case Split::train: s.train.push_back(ids_[i]); break;
      case Split::val: s.val.push_back(ids_[i]); break;
      case Split::test: s.test.push_back(ids_[i]); break;
    }
  }
  return s;
}

const std::vector<std::size_t>& SocialGraph::neighbor_indices(std::size_t index,
                                                              bool directed) const {
  return directed ? out_adj_.at(index) : undirected_adj_.at(index);
}

std::vector<NodeData> SocialGraph::node_data() const {
  std::vector<NodeData> out;
  out.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    out.push_back({records_[i], labels_[i], splits_[i]});
  }
  return out;
}

SocialGraph SocialGraph::with_labels(const std::vector<std::optional<Label>>& labels) const {
  if (labels.size() != ids_.size()) throw ShapeError("label vector size mismatch");
  SocialGraph g = *this;
  g.labels_ = labels;
  return g;
}

SocialGraph SocialGraph::with_splits(const DatasetSplit& split) const {
  SocialGraph g = *this;
  g.splits_.assign(ids_.size(), std::nullopt);
  auto assign = [&](const std::vector<NodeId>& ids, Split s) {
    for (const auto& id : ids) g.splits_[index_of(id)] = s;
  };
  assign(split.train, Split::train);
  assign(split.val, Split::val);
  assign(split.test, Split::test);
  return g;
}

SocialGraph SocialGraph::with_undirected_mask(const std::vector<bool>& keep) const {
  if (keep.size() != undirected_edges_.size()) throw ShapeError("edge mask size mismatch");
  SocialGraph g = *this;
  g.edges_.clear();
  for (const auto& e : edges_) {
    const std::size_t s = index_.at(e.source);
    const std::size_t t = index_.at(e.target);
    if (s == t) {
      g.edges_.push_back(e);
      continue;
    }
    const IndexPair key{std::min(s, t), std::max(s, t)};
    auto it = std::lower_bound(undirected_edges_.begin(), undirected_edges_.end(), key);
    if (keep[static_cast<std::size_t>(it - undirected_edges_.begin())]) g.edges_.push_back(e);
  }
  g.index_all();
  return g;
}

SocialGraph SocialGraph::with_records(std::vector<UserRecord> records) const {
  if (records.size() != ids_.size()) throw ShapeError("record vector size mismatch");
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].id != ids_[i]) throw IntegrityError("record id mismatch at " + ids_[i]);
  }
  SocialGraph g = *this;
  g.records_ = std::move(records);
  return g;
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number()) {
    std::ostringstream out;
    out << v.get<double>();
    return out.str();
  }
  if (v.is_null()) return "";
  return v.dump();
}

std::string require_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw std::invalid_argument(std::string("missing key '") + key + "'");
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  throw std::invalid_argument(std::string("key '") + key + "' must be a string");
}

std::int64_t require_count(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw std::invalid_argument(std::string("missing key '") + key + "'");
  if (!it->is_number_integer()) {
    throw std::invalid_argument(std::string("key '") + key + "' must be an integer");
  }
  const auto v = it->get<std::int64_t>();
  if (v < 0) throw std::invalid_argument(std::string("key '") + key + "' must be >= 0");
  return v;
}

template <class F>
void for_each_line(const std::string& text, F&& f) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    f(line, number);
  }
}

NodeData parse_user(const std::string& line) {
  const json obj = json::parse(line);
  if (!obj.is_object()) throw std::invalid_argument("record is not an object");
  NodeData n;
  n.record.id = require_string(obj, "id");
  n.record.name = require_string(obj, "name");
  n.record.followers_count = require_count(obj, "followers_count");
  n.record.following_count = require_count(obj, "following_count");
  auto desc = obj.find("description");
  if (desc == obj.end()) throw std::invalid_argument("missing key 'description'");
  n.record.description = desc->is_null() ? "" : desc->get<std::string>();
  auto tweets = obj.find("tweets");
  if (tweets == obj.end()) throw std::invalid_argument("missing key 'tweets'");
  if (!tweets->is_array()) throw std::invalid_argument("key 'tweets' must be an array");
  for (const auto& t : *tweets) {
    if (!t.is_string()) throw std::invalid_argument("tweets must be strings");
    n.record.tweets.push_back(t.get<std::string>());
  }
  if (auto it = obj.find("label"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw std::invalid_argument("label must be \"human\" or \"bot\"");
    const auto s = it->get<std::string>();
    if (s != "human" && s != "bot") throw std::invalid_argument("label must be \"human\" or \"bot\"");
    n.label = parse_label(s);
  }
  if (auto it = obj.find("split"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw std::invalid_argument("split must be a string");
    n.split = parse_split(it->get<std::string>());
  }
  static const char* known[] = {"id", "name", "followers_count", "following_count",
                                "description", "tweets", "label", "split"};
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return it.key() == k; }) != std::end(known)) {
      continue;
    }
    n.record.extra_attributes[it.key()] = scalar_text(it.value());
  }
  return n;
}

Edge parse_edge(const std::string& line) {
  const json obj = json::parse(line);
  if (!obj.is_object()) throw std::invalid_argument("record is not an object");
  return {require_string(obj, "source"), require_string(obj, "target"),
          require_string(obj, "relation")};
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

SocialGraph parse_dataset(const std::string& users_text, const std::string& edges_text,
                          const std::string& users_name, const std::string& edges_name) {
  std::vector<NodeData> nodes;
  for_each_line(users_text, [&](const std::string& line, std::size_t number) {
    try {
      nodes.push_back(parse_user(line));
    } catch (const json::exception& e) {
      throw ParseError(users_name, number, e.what());
    } catch (const std::invalid_argument& e) {
      throw ParseError(users_name, number, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(users_name, number, e.what());
    }
  });
  std::vector<Edge> edges;
  for_each_line(edges_text, [&](const std::string& line, std::size_t number) {
    try {
      edges.push_back(parse_edge(line));
    } catch (const json::exception& e) {
      throw ParseError(edges_name, number, e.what());
    } catch (const std::invalid_argument& e) {
      throw ParseError(edges_name, number, e.what());
    }
  });
  return SocialGraph::build(std::move(nodes), std::move(edges));
}

SocialGraph ingest_dataset(const std::filesystem::path& users_path,
                           const std::filesystem::path& edges_path) {
  return parse_dataset(read_file(users_path), read_file(edges_path), users_path.string(),
                       edges_path.string());
}

std::string serialize_users(const SocialGraph& g) {
  std::string out;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const auto& r = g.record(i);
    json obj = json::object();
    for (const auto& [k, v] : r.extra_attributes) obj[k] = v;
    obj["id"] = r.id;
    obj["name"] = r.name;
    obj["followers_count"] = r.followers_count;
    obj["following_count"] = r.following_count;
    obj["description"] = r.description;
    obj["tweets"] = r.tweets;
    if (auto l = g.label(i)) obj["label"] = to_string(*l);
    if (auto s = g.split(i)) obj["split"] = to_string(*s);
    out += obj.dump();
    out += '\n';
  }
  return out;
}

std::string serialize_edges(const SocialGraph& g) {
  std::string out;
  for (const auto& e : g.edges()) {
    json obj = {{"source", e.source}, {"target", e.target}, {"relation", e.relation}};
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void write_dataset(const SocialGraph& g, const std::filesystem::path& users_path,
                   const std::filesystem::path& edges_path) {
  std::ofstream u(users_path, std::ios::binary);
  std::ofstream e(edges_path, std::ios::binary);
  if (!u || !e) throw Error("cannot write dataset files");
  u << serialize_users(g);
  e << serialize_edges(g);
}

// ---------------------------------------------------------------------------
// Accessors

std::vector<NodeId> neighbors(const SocialGraph& g, const NodeId& v, bool directed) {
  std::vector<NodeId> out;
  for (auto j : g.neighbor_indices(g.index_of(v), directed)) out.push_back(g.id_at(j));
  return out;
}

EgoNetwork ego_network(const SocialGraph& g, const NodeId& v) {
  const std::size_t ego = g.index_of(v);
  std::vector<std::size_t> members = g.neighbor_indices(ego, false);
  members.push_back(ego);
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());

  EgoNetwork net;
  net.ego = v;
  for (auto m : members) net.members.push_back(g.id_at(m));
  auto in_members = [&](const NodeId& id) {
    return std::binary_search(members.begin(), members.end(), g.index_of(id));
  };
  for (const auto& e : g.edges()) {
    if (in_members(e.source) && in_members(e.target)) net.induced_edges.push_back(e);
  }
  return net;
}

SocialGraph ego_subgraph(const SocialGraph& g, const NodeId& v) {
  const EgoNetwork net = ego_network(g, v);
  std::vector<NodeData> nodes;
  for (const auto& id : net.members) {
    const std::size_t i = g.index_of(id);
    nodes.push_back({g.record(i), g.label(i), g.split(i)});
  }
  return SocialGraph::build(std::move(nodes), net.induced_edges);
}

DatasetSplit make_split(const SocialGraph& g, const std::array<double, 3>& ratios,
                        std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r > 0.0)) throw ValidationError("split ratios must be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    if (auto l = g.label(i)) by_class[to_int(*l)].push_back(i);
  }
  if (by_class[0].empty() && by_class[1].empty()) {
    throw ValidationError("cannot split: graph has no labeled nodes");
  }

  // Overall sizes by largest remainder, then per-class counts rounded so that
  // rows sum to the class sizes and columns to the overall sizes.
  auto largest_remainder = [&](double n) {
    std::array<std::size_t, 3> out{};
    std::array<double, 3> frac{};
    std::size_t used = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = n * ratios[s];
      out[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      frac[s] = exact - static_cast<double>(out[s]);
      used += out[s];
    }
    std::array<int, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; used < static_cast<std::size_t>(n); ++k, ++used) ++out[order[k % 3]];
    return out;
  };
  const std::size_t total = by_class[0].size() + by_class[1].size();
  const auto target = largest_remainder(static_cast<double>(total));
  std::array<std::array<std::size_t, 3>, 2> count{};
  std::array<std::size_t, 2> row_left{};
  std::array<std::size_t, 3> col_left = target;
  std::vector<std::tuple<double, int, int>> cells;
  for (int c = 0; c < 2; ++c) {
    row_left[c] = by_class[c].size();
    for (int s = 0; s < 3; ++s) {
      const double exact = static_cast<double>(by_class[c].size()) * ratios[s];
      count[c][s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      row_left[c] -= count[c][s];
      col_left[s] -= count[c][s];
      cells.emplace_back(-(exact - static_cast<double>(count[c][s])), c, s);
    }
  }
  std::stable_sort(cells.begin(), cells.end());
  for (int pass = 0; pass < 3; ++pass) {
    for (const auto& [neg_frac, c, s] : cells) {
      if (row_left[c] > 0 && col_left[s] > 0) {
        ++count[c][s];
        --row_left[c];
        --col_left[s];
      }
    }
  }

  std::vector<std::size_t> train, val, test;
  for (int c = 0; c < 2; ++c) {
    auto& members = by_class[c];
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c) + 1));
    rng.shuffle(members);
    const std::size_t n_train = count[c][0];
    const std::size_t n_val = count[c][1];
    for (std::size_t k = 0; k < members.size(); ++k) {
      auto& dst = k < n_train ? train : (k < n_train + n_val ? val : test);
      dst.push_back(members[k]);
    }
  }
  auto to_ids = [&](std::vector<std::size_t>& idx) {
    std::sort(idx.begin(), idx.end());
    std::vector<NodeId> ids;
    for (auto i : idx) ids.push_back(g.id_at(i));
    return ids;
  };
  return {to_ids(train), to_ids(val), to_ids(test)};
}

Matrix dense_adjacency(const SocialGraph& g, std::size_t max_nodes) {
  if (g.num_nodes() > max_nodes) {
    throw ValidationError("dense adjacency requested for a graph of " +
                          std::to_string(g.num_nodes()) + " nodes");
  }
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  Matrix a = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    for (auto j : g.neighbor_indices(i, false)) a(i, j) = 1.0;
  }
  return a;
}

Matrix dense_degree(const Matrix& adjacency) {
  Matrix d = Matrix::Zero(adjacency.rows(), adjacency.cols());
  for (Eigen::Index i = 0; i < adjacency.rows(); ++i) d(i, i) = adjacency.row(i).sum();
  return d;
}

}  // namespace lgb
