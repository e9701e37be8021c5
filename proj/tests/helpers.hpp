#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lgb/graph_store.hpp"
#include "lgb/random.hpp"

namespace testing {

inline lgb::UserRecord user(const std::string& id, std::vector<std::string> tweets = {},
                            const std::string& description = "") {
  lgb::UserRecord u;
  u.id = id;
  u.name = id;
  u.description = description;
  u.tweets = std::move(tweets);
  return u;
}

/// Nodes "n0".."n{count-1}", unlabeled unless labels are given.
inline lgb::SocialGraph graph(std::size_t count, const std::vector<std::pair<int, int>>& edges,
                              const std::vector<std::optional<lgb::Label>>& labels = {}) {
  std::vector<lgb::NodeData> nodes;
  for (std::size_t i = 0; i < count; ++i) {
    nodes.push_back({user("n" + std::to_string(i)), i < labels.size() ? labels[i] : std::nullopt, std::nullopt});
  }
  std::vector<lgb::Edge> e;
  for (auto [a, b] : edges) e.push_back({"n" + std::to_string(a), "n" + std::to_string(b), "follow"});
  return lgb::SocialGraph::build(std::move(nodes), std::move(e));
}

/// Erdos-Renyi style directed edge list, self-loops and duplicates possible.
inline std::vector<std::pair<int, int>> random_edges(lgb::Rng& rng, int n, int m) {
  std::vector<std::pair<int, int>> e;
  for (int k = 0; k < m; ++k) {
    e.emplace_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(n))),
                   static_cast<int>(rng.below(static_cast<std::uint64_t>(n))));
  }
  return e;
}

}  // namespace testing
