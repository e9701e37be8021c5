#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "helpers.hpp"
#include "lgb/graph_store.hpp"
#include "oracles.hpp"

using namespace lgb;
using testing::graph;

namespace {

std::string users_line(const std::string& id, const std::string& extra = "") {
  return R"({"id":")" + id + R"(","name":")" + id +
         R"(","followers_count":1,"following_count":2,"description":"d","tweets":["t"])" + extra + "}\n";
}

std::string edge_line(const std::string& s, const std::string& t) {
  return R"({"source":")" + s + R"(","target":")" + t + R"(","relation":"follow"})" + "\n";
}

std::set<NodeId> as_set(const std::vector<NodeId>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_SUITE("graph_store") {
  TEST_CASE("empty files give an empty graph") {
    const SocialGraph g = parse_dataset("", "");
    CHECK(g.num_nodes() == 0);
    CHECK(g.num_edges() == 0);
  }

  TEST_CASE("three users with a->b and a->c") {
    const SocialGraph g =
        parse_dataset(users_line("a") + users_line("b") + users_line("c"), edge_line("a", "b") + edge_line("a", "c"));
    CHECK(as_set(neighbors(g, "a", false)) == std::set<NodeId>{"b", "c"});
    CHECK(as_set(neighbors(g, "a", true)) == std::set<NodeId>{"b", "c"});
    CHECK(neighbors(g, "b", true).empty());
    CHECK(as_set(neighbors(g, "b", false)) == std::set<NodeId>{"a"});
  }

  TEST_CASE("in- and out-neighbors merge in the undirected view") {
    const SocialGraph g = graph(3, {{0, 1}, {2, 0}});
    CHECK(as_set(neighbors(g, "n0", false)) == std::set<NodeId>{"n1", "n2"});
    CHECK(as_set(neighbors(g, "n0", true)) == std::set<NodeId>{"n1"});
  }

  TEST_CASE("isolated node has no neighbors and a singleton ego network") {
    const SocialGraph g = graph(3, {{0, 1}});
    CHECK(neighbors(g, "n2", false).empty());
    const EgoNetwork e = ego_network(g, "n2");
    CHECK(e.members == std::vector<NodeId>{"n2"});
    CHECK(e.induced_edges.empty());
  }

  TEST_CASE("star ego network") {
    const SocialGraph g = graph(5, {{0, 1}, {0, 2}, {3, 0}, {4, 4}});
    const EgoNetwork e = ego_network(g, "n0");
    CHECK(e.members.size() == 4);
    CHECK(e.induced_edges.size() == 3);
  }

  TEST_CASE("self-loop only appears for the node itself") {
    const SocialGraph g = graph(2, {{0, 0}, {0, 1}});
    CHECK(as_set(neighbors(g, "n0", true)) == std::set<NodeId>{"n0", "n1"});
    CHECK(as_set(neighbors(g, "n1", false)) == std::set<NodeId>{"n0"});
  }

  TEST_CASE("multi-edges collapse") {
    const SocialGraph g = graph(2, {{0, 1}, {0, 1}, {1, 0}});
    CHECK(g.num_edges() == 3);
    CHECK(neighbors(g, "n0", false).size() == 1);
    CHECK(g.undirected_edges().size() == 1);
  }

  TEST_CASE("neighbors match a brute-force scan on random graphs") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      const auto edges = testing::random_edges(rng, 50, 80);
      const SocialGraph g = graph(50, edges);
      std::size_t degree_sum = 0;
      for (int v = 0; v < 50; ++v) {
        std::set<NodeId> out, und;
        for (auto [a, b] : edges) {
          if (a == v) out.insert("n" + std::to_string(b));
          if (a == v) und.insert("n" + std::to_string(b));
          if (b == v) und.insert("n" + std::to_string(a));
        }
        const NodeId id = "n" + std::to_string(v);
        CHECK(as_set(neighbors(g, id, true)) == out);
        CHECK(as_set(neighbors(g, id, false)) == und);
        CHECK(ego_network(g, id).members.size() == 1 + neighbors(g, id, false).size() - und.count(id));
        degree_sum += und.size() - und.count(id);
      }
      CHECK(degree_sum == 2 * g.undirected_edges().size());
    }
  }

  TEST_CASE("ego network equals the brute-force induced subgraph") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
      const auto edges = testing::random_edges(rng, 30, 45);
      const SocialGraph g = graph(30, edges);
      const int v = static_cast<int>(rng.below(30));
      std::set<int> members = {v};
      for (auto [a, b] : edges) {
        if (a == v) members.insert(b);
        if (b == v) members.insert(a);
      }
      std::multiset<std::pair<NodeId, NodeId>> expect;
      for (auto [a, b] : edges) {
        if (members.count(a) && members.count(b)) expect.insert({"n" + std::to_string(a), "n" + std::to_string(b)});
      }
      const EgoNetwork e = ego_network(g, "n" + std::to_string(v));
      std::set<NodeId> want;
      for (int m : members) want.insert("n" + std::to_string(m));
      CHECK(as_set(e.members) == want);
      std::multiset<std::pair<NodeId, NodeId>> got;
      for (const auto& edge : e.induced_edges) got.insert({edge.source, edge.target});
      CHECK(got == expect);
    }
  }

  TEST_CASE("unknown node ids raise lookup errors") {
    const SocialGraph g = graph(2, {});
    CHECK_THROWS_AS(neighbors(g, "zz", false), LookupError);
    CHECK_THROWS_AS(ego_network(g, "zz"), LookupError);
  }

  TEST_CASE("dangling edges and duplicate ids are integrity errors") {
    try {
      parse_dataset(users_line("a"), edge_line("a", "ghost"));
      FAIL("expected an integrity error");
    } catch (const IntegrityError& e) {
      CHECK(std::string(e.what()).find("ghost") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_dataset(users_line("a") + users_line("a"), ""), IntegrityError);
  }

  TEST_CASE("malformed records name their line") {
    try {
      parse_dataset(users_line("a") + "{\"id\": \"b\"}\n", "");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
    try {
      parse_dataset(users_line("a"), "not json\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 1);
    }
    CHECK_THROWS_AS(parse_dataset(users_line("a", R"(,"label":"robot")"), ""), ParseError);
  }

  TEST_CASE("serialization round-trips") {
    const std::string users = users_line("a", R"(,"label":"bot","split":"train","lang":"en")") +
                              users_line("b", R"(,"label":"human")") + users_line("c");
    const SocialGraph g = parse_dataset(users, edge_line("a", "b"));
    const SocialGraph h = parse_dataset(serialize_users(g), serialize_edges(g));
    CHECK(h.nodes() == g.nodes());
    CHECK(h.edges() == g.edges());
    CHECK(h.record("a") == g.record("a"));
    CHECK(h.record("a").extra_attributes.at("lang") == "en");
    CHECK(h.label("a") == Label::bot);
    CHECK(h.split(0) == Split::train);
    CHECK(!h.label("c"));
  }

  TEST_CASE("ingestion is a pure function of the file contents") {
    const auto dir = oracle::data_dir() / "tiny";
    const SocialGraph a = ingest_dataset(dir / "users.jsonl", dir / "edges.jsonl");
    const SocialGraph b = ingest_dataset(dir / "users.jsonl", dir / "edges.jsonl");
    CHECK(serialize_users(a) == serialize_users(b));
    CHECK(serialize_edges(a) == serialize_edges(b));
    CHECK(a.num_nodes() == 12);
    CHECK(a.num_edges() == 9);
  }

  TEST_CASE("make_split: exact sizes, determinism, disjointness") {
    std::vector<std::optional<Label>> labels;
    for (int i = 0; i < 10; ++i) labels.push_back(i < 5 ? Label::bot : Label::human);
    const SocialGraph g = graph(10, {}, labels);
    const DatasetSplit s = make_split(g, {0.7, 0.2, 0.1}, 3);
    CHECK(s.train.size() + s.val.size() + s.test.size() == 10);
    CHECK(s.train.size() == 7);
    CHECK(s.val.size() == 2);
    CHECK(s.test.size() == 1);
    const DatasetSplit t = make_split(g, {0.7, 0.2, 0.1}, 3);
    CHECK(s.train == t.train);
    CHECK(s.val == t.val);
    CHECK(s.test == t.test);
    std::set<NodeId> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
    CHECK(all.size() == 10);
  }

  TEST_CASE("make_split is class-stratified") {
    std::vector<std::optional<Label>> labels;
    for (int i = 0; i < 1000; ++i) labels.push_back(i % 2 ? Label::bot : Label::human);
    const SocialGraph g = graph(1000, {}, labels);
    const DatasetSplit s = make_split(g, {0.7, 0.2, 0.1}, 9);
    auto bots = [&](const std::vector<NodeId>& ids) {
      return std::count_if(ids.begin(), ids.end(), [&](const NodeId& id) { return g.label(id) == Label::bot; });
    };
    for (auto [part, want] : {std::pair{&s.train, 350L}, {&s.val, 100L}, {&s.test, 50L}}) {
      const long b = bots(*part);
      const long h = static_cast<long>(part->size()) - b;
      CHECK(std::abs(b - want) <= 1);
      CHECK(std::abs(h - want) <= 1);
    }
  }

  TEST_CASE("make_split rejects bad inputs") {
    const SocialGraph unlabeled = graph(4, {});
    CHECK_THROWS_AS(make_split(unlabeled, {0.7, 0.2, 0.1}, 0), ValidationError);
    const SocialGraph g = graph(4, {}, {Label::bot, Label::human, Label::bot, Label::human});
    CHECK_THROWS_AS(make_split(g, {0.7, 0.2, 0.2}, 0), ValidationError);
  }

  TEST_CASE("dense adjacency view for small graphs") {
    const SocialGraph g = graph(3, {{0, 1}, {1, 0}, {1, 2}});
    const Matrix a = dense_adjacency(g);
    CHECK(a(0, 1) == 1.0);
    CHECK(a(1, 0) == 1.0);
    CHECK(a(0, 2) == 0.0);
    const Matrix d = dense_degree(a);
    CHECK(d(1, 1) == 2.0);
    CHECK_THROWS_AS(dense_adjacency(g, 2), ValidationError);
  }
}
