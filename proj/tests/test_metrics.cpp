#include <doctest.h>

#include <cmath>

#include "lgb/metrics.hpp"
#include "lgb/random.hpp"
#include "oracles.hpp"

using namespace lgb;

TEST_SUITE("metrics") {
  TEST_CASE("metrics agree with brute-force counting on random inputs") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 2 + rng.below(60);
      std::vector<Label> y;
      std::vector<double> p;
      for (std::size_t i = 0; i < n; ++i) {
        y.push_back(i == 0 ? Label::bot : i == 1 ? Label::human : (rng.bernoulli(0.4) ? Label::bot : Label::human));
        // Coarse grid so ties and exact 0.5 scores occur.
        p.push_back(static_cast<double>(rng.below(11)) / 10.0);
      }
      const RunMetrics m = compute_metrics(y, p);
      CHECK(m.accuracy == doctest::Approx(oracle::accuracy(y, p)).epsilon(1e-15));
      CHECK(m.f1 == doctest::Approx(oracle::f1(y, p)).epsilon(1e-15));
      REQUIRE(m.roc_auc);
      CHECK(*m.roc_auc == doctest::Approx(oracle::auc(y, p)).epsilon(1e-12));
      CHECK(roc_auc(y, p) == *m.roc_auc);
      CHECK(accuracy(y, p) == m.accuracy);
    }
  }

  TEST_CASE("threshold is inclusive at one half") {
    CHECK(decide(0.5) == Label::bot);
    CHECK(decide(std::nextafter(0.5, 0.0)) == Label::human);
    const std::vector<Label> y = {Label::bot, Label::human};
    const std::vector<double> p = {0.5, 0.4999};
    CHECK(compute_metrics(y, p).accuracy == 1.0);
  }

  TEST_CASE("closed-form cases") {
    const std::vector<Label> y = {Label::bot, Label::bot, Label::human, Label::human};
    const std::vector<double> perfect = {0.9, 0.8, 0.1, 0.2};
    CHECK(*compute_metrics(y, perfect).roc_auc == 1.0);
    CHECK(compute_metrics(y, perfect).f1 == 1.0);
    const std::vector<double> reversed = {0.1, 0.2, 0.9, 0.8};
    CHECK(*compute_metrics(y, reversed).roc_auc == 0.0);
    CHECK(compute_metrics(y, reversed).accuracy == 0.0);
    const std::vector<double> flat(4, 0.3);
    CHECK(*compute_metrics(y, flat).roc_auc == 0.5);
    // No predicted and no actual positives: F1 falls back to zero.
    const std::vector<Label> humans = {Label::human, Label::human};
    const std::vector<double> low = {0.1, 0.2};
    CHECK(compute_metrics(humans, low).f1 == 0.0);
  }

  TEST_CASE("AUC is undefined for a single class") {
    const std::vector<Label> y = {Label::bot, Label::bot, Label::bot};
    const std::vector<double> p = {0.1, 0.6, 0.9};
    CHECK_THROWS_AS(roc_auc(y, p), DegenerateLabelsError);
    const RunMetrics m = compute_metrics(y, p);
    CHECK(!m.roc_auc);
    CHECK(!m.auc_error.empty());
    CHECK(m.accuracy == doctest::Approx(2.0 / 3.0));
    CHECK(m.to_json()["roc_auc"].is_null());
  }

  TEST_CASE("aggregation uses the population standard deviation") {
    const std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
    const MeanStd s = mean_std(v);
    CHECK(s.mean == 2.5);
    CHECK(s.std == doctest::Approx(std::sqrt(1.25)));
    RunMetrics a, b;
    a.accuracy = 0.8;
    a.f1 = 0.6;
    a.roc_auc = 0.9;
    b.accuracy = 0.6;
    b.f1 = 0.4;
    b.roc_auc = 0.7;
    const MetricsReport r = MetricsReport::aggregate({a, b});
    CHECK(r.accuracy.mean == doctest::Approx(0.7));
    CHECK(r.accuracy.std == doctest::Approx(0.1));
    REQUIRE(r.roc_auc);
    CHECK(r.roc_auc->mean == doctest::Approx(0.8));
    b.roc_auc.reset();
    CHECK(!MetricsReport::aggregate({a, b}).roc_auc);
  }
}
