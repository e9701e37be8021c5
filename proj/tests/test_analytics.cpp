#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "lgb/analytics.hpp"
#include "oracles.hpp"

using namespace lgb;

namespace {

SocialGraph tiny() {
  const auto dir = oracle::data_dir() / "tiny";
  return ingest_dataset(dir / "users.jsonl", dir / "edges.jsonl");
}

const NumCcRow* find_row(const NumCcCurve& c, std::size_t bucket, std::size_t numcc) {
  for (const auto& r : c.rows) {
    if (r.bucket == bucket && r.numcc == numcc) return &r;
  }
  return nullptr;
}

}  // namespace

TEST_SUITE("analytics") {
  TEST_CASE("neighbor histogram of the tiny fixture matches the hand count") {
    const NeighborHistogram h = neighbor_distribution(tiny());
    CHECK(h.total == 12);
    CHECK(h.counts == std::map<std::size_t, std::size_t>{{0, 3}, {1, 5}, {2, 3}, {3, 1}});
    CHECK(h.isolated_fraction() == doctest::Approx(3.0 / 12));
    CHECK(h.one_neighbor_fraction() == doctest::Approx(5.0 / 12));
    CHECK(h.over_ten_fraction() == 0.0);
    CHECK(h.fraction_above(1) == doctest::Approx(4.0 / 12));
  }

  TEST_CASE("self-loops do not count as neighbors") {
    const SocialGraph g = testing::graph(2, {{0, 0}, {0, 0}});
    CHECK(neighbor_count(g, 0) == 0);
  }

  TEST_CASE("histogram CSV") {
    const std::string csv = histogram_csv(neighbor_distribution(tiny()));
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "neighbors,count,fraction");
    std::getline(in, line);
    CHECK(line == "0,3,0.25");
    std::size_t rows = 1;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 4);
  }

  TEST_CASE("component count of the ego network of a") {
    const SocialGraph g = tiny();
    const EgoNetwork e = ego_network(g, "a");
    CHECK(count_components(e, nullptr) == 2);
    CHECK(count_components(e, nullptr, false) == 1);
    auto bots = [&](const NodeId& id) { return g.label(id) == Label::bot; };
    CHECK(count_components(e, bots) == 1);
  }

  TEST_CASE("component counts equal a flood fill on random ego networks") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
      const SocialGraph g = testing::graph(40, testing::random_edges(rng, 40, 90));
      std::set<NodeId> keep_set;
      for (const auto& id : g.nodes()) {
        if (rng.bernoulli(0.6)) keep_set.insert(id);
      }
      auto keep = [&](const NodeId& id) { return keep_set.count(id) != 0; };
      const EgoNetwork e = ego_network(g, g.id_at(rng.below(40)));
      for (bool exclude : {true, false}) {
        CHECK(count_components(e, keep, exclude) == oracle::components_bfs(e, keep, exclude));
        CHECK(count_components(e, nullptr, exclude) == oracle::components_bfs(e, nullptr, exclude));
      }
    }
  }

  TEST_CASE("NumCC curve on the tiny fixture matches the hand tally") {
    const SocialGraph g = tiny();
    const NumCcCurve all = bot_probability_by_numcc(g, ClassFilter::all);
    REQUIRE(all.rows.size() == 2);
    const NumCcRow* one = find_row(all, 0, 1);
    const NumCcRow* two = find_row(all, 0, 2);
    REQUIRE(one);
    REQUIRE(two);
    CHECK(one->support == 7);
    CHECK(one->bots == 4);
    CHECK(one->bot_probability == doctest::Approx(4.0 / 7));
    CHECK(two->support == 2);
    CHECK(two->bot_probability == 0.5);

    const NumCcCurve bot = bot_probability_by_numcc(g, ClassFilter::bot);
    REQUIRE(bot.rows.size() == 1);
    CHECK(bot.rows[0].support == 6);
    CHECK(bot.rows[0].bots == 3);

    const NumCcCurve human = bot_probability_by_numcc(g, ClassFilter::human);
    REQUIRE(human.rows.size() == 1);
    CHECK(human.rows[0].support == 5);
    CHECK(human.rows[0].bot_probability == doctest::Approx(0.6));

    CHECK(bot_probability_by_numcc(g, ClassFilter::all, default_numcc_buckets(), 3).rows.size() == 1);
  }

  TEST_CASE("NumCC needs labels; buckets and filters parse") {
    CHECK_THROWS_AS(bot_probability_by_numcc(testing::graph(3, {{0, 1}}), ClassFilter::all), ValidationError);
    const auto b = default_numcc_buckets();
    REQUIRE(b.size() == 4);
    CHECK(b[0].label() == "1-5");
    CHECK(b[3].label() == "21+");
    CHECK(b[3].contains(500));
    CHECK(!b[0].contains(0));
    CHECK(parse_class_filter("bot") == ClassFilter::bot);
    CHECK_THROWS_AS(parse_class_filter("robot"), ValidationError);
  }

  TEST_CASE("NumCC CSV") {
    const SocialGraph g = tiny();
    const std::string csv = numcc_csv({bot_probability_by_numcc(g, ClassFilter::human)});
    CHECK(csv == "class_filter,bucket,numcc,bot_probability,support\nhuman,1-5,1,0.59999999999999998,5\n");
  }
}
