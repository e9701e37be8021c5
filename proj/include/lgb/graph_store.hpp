#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lgb/common.hpp"

namespace lgb {

enum class Split { train, val, test };

std::string to_string(Split s);
Split parse_split(const std::string& text);

struct UserRecord {
  NodeId id;
  std::string name;
  std::int64_t followers_count = 0;
  std::int64_t following_count = 0;
  std::string description;
  std::vector<std::string> tweets;
  // Scalars are stored in their textual form.
  std::map<std::string, std::string> extra_attributes;

  bool operator==(const UserRecord&) const = default;
};

struct Edge {
  NodeId source;
  NodeId target;
  std::string relation;

  bool operator==(const Edge&) const = default;
};

/// Unordered node pair by dense index, first < second.
using IndexPair = std::pair<std::size_t, std::size_t>;

struct EgoNetwork {
  NodeId ego;
  std::vector<NodeId> members;  // sorted by graph index, ego included
  std::vector<Edge> induced_edges;
};

struct DatasetSplit {
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;
};

struct NodeData {
  UserRecord record;
  std::optional<Label> label;
  std::optional<Split> split;
};

// Immutable social graph. Nodes keep insertion order; every accessor is
// const so a built graph can be shared across threads freely.
class SocialGraph {
 public:
  SocialGraph() = default;

  /// Validates and indexes. Throws IntegrityError on duplicate ids or
  /// dangling edge endpoints.
  static SocialGraph build(std::vector<NodeData> nodes, std::vector<Edge> edges);

  std::size_t num_nodes() const { return ids_.size(); }
  std::size_t num_edges() const { return edges_.size(); }

  const std::vector<NodeId>& nodes() const { return ids_; }
  const std::vector<Edge>& edges() const { return edges_; }

  bool contains(const NodeId& id) const { return index_.count(id) != 0; }
  /// Throws LookupError for unknown ids.
  std::size_t index_of(const NodeId& id) const;
  const NodeId& id_at(std::size_t index) const { return ids_.at(index); }

  const UserRecord& record(std::size_t index) const { return records_.at(index); }
  const UserRecord& record(const NodeId& id) const { return records_[index_of(id)]; }
  std::optional<Label> label(std::size_t index) const { return labels_.at(index); }
  std::optional<Label> label(const NodeId& id) const { return labels_[index_of(id)]; }
  std::optional<Split> split(std::size_t index) const { return splits_.at(index); }

  /// Labeled nodes as (id, label), in node order.
  std::vector<std::pair<NodeId, Label>> labeled() const;
  /// Split assignment carried by the dataset records (nodes without a split are skipped).
  DatasetSplit recorded_split() const;

  /// Out-neighbors when directed, otherwise the union of in- and
  /// out-neighbors. Sorted by index, multi-edges collapsed.
  const std::vector<std::size_t>& neighbor_indices(std::size_t index, bool directed) const;

  /// Undirected unique pairs, self-loops excluded, sorted.
  const std::vector<IndexPair>& undirected_edges() const { return undirected_edges_; }

  /// Copy with the given labels/splits replacing the current ones.
  SocialGraph with_labels(const std::vector<std::optional<Label>>& labels) const;
  SocialGraph with_splits(const DatasetSplit& split) const;
  /// Copy keeping only the undirected pairs whose mask entry is true
  /// (directed edges mapping onto a dropped pair are removed).
  SocialGraph with_undirected_mask(const std::vector<bool>& keep) const;
  /// Copy with replaced user records (same ids, same order).
  SocialGraph with_records(std::vector<UserRecord> records) const;

  std::vector<NodeData> node_data() const;

 private:
  void index_all();

  std::vector<NodeId> ids_;
  std::unordered_map<NodeId, std::size_t> index_;
  std::vector<UserRecord> records_;
  std::vector<std::optional<Label>> labels_;
  std::vector<std::optional<Split>> splits_;
  std::vector<Edge> edges_;

  std::vector<std::vector<std::size_t>> out_adj_;
  std::vector<std::vector<std::size_t>> undirected_adj_;
  std::vector<IndexPair> undirected_edges_;
};

/// Reads the line-delimited users and edges files.
SocialGraph ingest_dataset(const std::filesystem::path& users_path,
                           const std::filesystem::path& edges_path);

/// Parses in-memory contents; `source_name` is used in error messages.
SocialGraph parse_dataset(const std::string& users_text, const std::string& edges_text,
                          const std::string& users_name = "users",
                          const std::string& edges_name = "edges");

std::string serialize_users(const SocialGraph& g);
std::string serialize_edges(const SocialGraph& g);
void write_dataset(const SocialGraph& g, const std::filesystem::path& users_path,
                   const std::filesystem::path& edges_path);

std::vector<NodeId> neighbors(const SocialGraph& g, const NodeId& v, bool directed);

EgoNetwork ego_network(const SocialGraph& g, const NodeId& v);

/// Builds the ego network as a standalone graph (records and labels kept).
SocialGraph ego_subgraph(const SocialGraph& g, const NodeId& v);

/// Class-stratified, seeded split of the labeled nodes.
DatasetSplit make_split(const SocialGraph& g, const std::array<double, 3>& ratios,
                        std::uint64_t seed);

/// Dense adjacency (undirected view) for small graphs; throws ValidationError
/// above `max_nodes`.
Matrix dense_adjacency(const SocialGraph& g, std::size_t max_nodes = 2048);
Matrix dense_degree(const Matrix& adjacency);

}  // namespace lgb
