#include "lgb/analytics.hpp"

#include <numeric>
#include <sstream>
#include <unordered_map>

namespace lgb {

double NeighborHistogram::fraction(std::size_t k) const {
  if (total == 0) return 0.0;
  auto it = counts.find(k);
  return it == counts.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(total);
}

double NeighborHistogram::fraction_above(std::size_t k) const {
  if (total == 0) return 0.0;
  std::size_t n = 0;
  for (auto it = counts.upper_bound(k); it != counts.end(); ++it) n += it->second;
  return static_cast<double>(n) / static_cast<double>(total);
}

std::size_t neighbor_count(const SocialGraph& g, std::size_t i) {
  const auto& nb = g.neighbor_indices(i, false);
  // A self-loop is not a neighbor.
  std::size_t k = nb.size();
  for (std::size_t j : nb) k -= j == i;
  return k;
}

NeighborHistogram neighbor_distribution(const SocialGraph& g) {
  NeighborHistogram h;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    ++h.counts[neighbor_count(g, i)];
    ++h.total;
  }
  return h;
}

namespace {

struct UnionFind {
  std::vector<std::size_t> parent, rank;
  std::size_t sets;

  explicit UnionFind(std::size_t n) : parent(n), rank(n, 0), sets(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank[a] < rank[b]) std::swap(a, b);
    parent[b] = a;
    if (rank[a] == rank[b]) ++rank[a];
    --sets;
  }
};

}  // namespace

std::size_t count_components(const EgoNetwork& e, const std::function<bool(const NodeId&)>& keep,
                             bool exclude_ego) {
  std::unordered_map<NodeId, std::size_t> slot;
  for (const auto& m : e.members) {
    if (exclude_ego && m == e.ego) continue;
    if (!keep || keep(m)) slot.emplace(m, slot.size());
  }
  UnionFind uf(slot.size());
  for (const auto& edge : e.induced_edges) {
    auto a = slot.find(edge.source);
    auto b = slot.find(edge.target);
    if (a != slot.end() && b != slot.end()) uf.unite(a->second, b->second);
  }
  return uf.sets;
}

std::string to_string(ClassFilter f) {
  switch (f) {
    case ClassFilter::human: return "human";
    case ClassFilter::bot: return "bot";
    case ClassFilter::all: return "all";
  }
  return "?";
}

ClassFilter parse_class_filter(const std::string& text) {
  if (text == "human") return ClassFilter::human;
  if (text == "bot") return ClassFilter::bot;
  if (text == "all") return ClassFilter::all;
  throw ValidationError("unknown class filter '" + text + "'");
}

std::string NeighborBucket::label() const {
  if (!hi) return std::to_string(lo) + "+";
  if (*hi == lo) return std::to_string(lo);
  return std::to_string(lo) + "-" + std::to_string(*hi);
}

std::vector<NeighborBucket> default_numcc_buckets() {
  return {{1, 5}, {6, 10}, {11, 20}, {21, std::nullopt}};
}

NumCcCurve bot_probability_by_numcc(const SocialGraph& g, ClassFilter filter,
                                    const std::vector<NeighborBucket>& buckets, std::size_t min_support) {
  if (g.labeled().empty()) throw ValidationError("bot_probability_by_numcc needs labeled nodes");
  auto keep = [&](const NodeId& id) {
    if (filter == ClassFilter::all) return true;
    const auto l = g.label(id);
    return l && *l == (filter == ClassFilter::bot ? Label::bot : Label::human);
  };

  std::map<std::pair<std::size_t, std::size_t>, std::pair<std::size_t, std::size_t>> cells;  // -> (support, bots)
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const auto label = g.label(i);
    if (!label) continue;
    const EgoNetwork ego = ego_network(g, g.id_at(i));
    const std::size_t k = neighbor_count(g, i);
    std::optional<std::size_t> bucket;
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      if (buckets[b].contains(k)) {
        bucket = b;
        break;
      }
    }
    if (!bucket) continue;
    const std::size_t numcc = count_components(ego, keep, true);
    if (numcc == 0) continue;
    auto& cell = cells[{*bucket, numcc}];
    ++cell.first;
    cell.second += *label == Label::bot;
  }

  NumCcCurve curve;
  curve.buckets = buckets;
  for (const auto& [key, cell] : cells) {
    if (cell.first < std::max<std::size_t>(1, min_support)) continue;
    NumCcRow r;
    r.bucket = key.first;
    r.bucket_label = buckets[key.first].label();
    r.numcc = key.second;
    r.filter = filter;
    r.support = cell.first;
    r.bots = cell.second;
    r.bot_probability = static_cast<double>(cell.second) / static_cast<double>(cell.first);
    curve.rows.push_back(r);
  }
  return curve;
}

std::string histogram_csv(const NeighborHistogram& h) {
  std::ostringstream out;
  out.precision(17);
  out << "neighbors,count,fraction\n";
  for (const auto& [k, n] : h.counts) out << k << ',' << n << ',' << h.fraction(k) << '\n';
  return out.str();
}

std::string numcc_csv(const std::vector<NumCcCurve>& curves) {
  std::ostringstream out;
  out.precision(17);
  out << "class_filter,bucket,numcc,bot_probability,support\n";
  for (const auto& c : curves) {
    for (const auto& r : c.rows) {
      out << to_string(r.filter) << ',' << r.bucket_label << ',' << r.numcc << ',' << r.bot_probability << ','
          << r.support << '\n';
    }
  }
  return out.str();
}

}  // namespace lgb
