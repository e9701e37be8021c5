#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lgb/graph_store.hpp"

namespace lgb {

struct NeighborHistogram {
  std::map<std::size_t, std::size_t> counts;  // neighbor count k -> nodes
  std::size_t total = 0;

  double fraction(std::size_t k) const;
  double fraction_above(std::size_t k) const;
  double isolated_fraction() const { return fraction(0); }
  double one_neighbor_fraction() const { return fraction(1); }
  double over_ten_fraction() const { return fraction_above(10); }
};

/// Undirected neighbors of node i, self excluded.
std::size_t neighbor_count(const SocialGraph& g, std::size_t i);

/// Undirected neighbor counts over every node.
NeighborHistogram neighbor_distribution(const SocialGraph& g);

/// Components of the undirected subgraph induced by the members passing
/// `keep` (edges taken from e.induced_edges).
std::size_t count_components(const EgoNetwork& e, const std::function<bool(const NodeId&)>& keep,
                             bool exclude_ego = true);

enum class ClassFilter { human, bot, all };

std::string to_string(ClassFilter f);
ClassFilter parse_class_filter(const std::string& text);

struct NeighborBucket {
  std::size_t lo = 1;
  std::optional<std::size_t> hi;  // inclusive; none means unbounded

  std::string label() const;
  bool contains(std::size_t k) const { return k >= lo && (!hi || k <= *hi); }
};

/// {1-5, 6-10, 11-20, 21+}
std::vector<NeighborBucket> default_numcc_buckets();

struct NumCcRow {
  std::size_t bucket = 0;  // index into the bucket list
  std::string bucket_label;
  std::size_t numcc = 0;
  ClassFilter filter = ClassFilter::all;
  double bot_probability = 0.0;
  std::size_t support = 0;
  std::size_t bots = 0;
};

struct NumCcCurve {
  std::vector<NeighborBucket> buckets;
  std::vector<NumCcRow> rows;  // ascending (bucket, numcc)
};

/// Groups labeled nodes by (neighbor-count bucket, NumCC of neighbors passing
/// the class filter). Nodes with no qualifying neighbors (NumCC = 0) or a
/// neighbor count outside every bucket are left out. Throws ValidationError
/// when the graph has no labeled node.
NumCcCurve bot_probability_by_numcc(const SocialGraph& g, ClassFilter filter,
                                    const std::vector<NeighborBucket>& buckets = default_numcc_buckets(),
                                    std::size_t min_support = 1);

std::string histogram_csv(const NeighborHistogram& h);
std::string numcc_csv(const std::vector<NumCcCurve>& curves);

}  // namespace lgb
