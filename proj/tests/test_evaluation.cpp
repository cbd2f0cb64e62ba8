// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>

#include "oracles.hpp"
#include "qclip/error.hpp"
#include "qclip/evaluation.hpp"

using namespace qclip;
using Catch::Approx;
using Vec = std::vector<double>;

namespace {

Vec random_vec(std::mt19937_64& rng, int n, bool with_ties) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  Vec v(static_cast<std::size_t>(n));
  for (double& x : v) x = with_ties ? std::floor(u(rng)) : u(rng);
  return v;
}

bool has_spread(const Vec& v) { return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) != v.end(); }

}  // namespace

TEST_CASE("KROCC equals the brute force tau-b", "[metrics]") {
  std::mt19937_64 rng(1);
  int checked = 0;
  for (int n = 2; n <= 10; ++n) {
    for (int trial = 0; trial < 400; ++trial) {
      const bool ties = trial % 2 == 0;
      const Vec x = random_vec(rng, n, ties), y = random_vec(rng, n, ties && trial % 4 == 0);
      if (!has_spread(x) || !has_spread(y)) {
        REQUIRE_THROWS_AS(krocc(x, y), Error);
        continue;
      }
      REQUIRE(std::abs(krocc(x, y) - oracle::kendall_tau_b(x, y)) <= 1e-12);
      ++checked;
    }
  }
  REQUIRE(checked > 3000);
}

TEST_CASE("KROCC at larger n still matches", "[metrics]") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec x = random_vec(rng, 300, trial % 2), y = random_vec(rng, 300, trial % 3 == 0);
    REQUIRE(std::abs(krocc(x, y) - oracle::kendall_tau_b(x, y)) <= 1e-12);
  }
}

TEST_CASE("SROCC is invariant under strictly monotone transforms", "[metrics]") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 30);
    const Vec x = random_vec(rng, n, trial % 3 == 0), y = random_vec(rng, n, false);
    if (!has_spread(x)) continue;
    Vec fx(x.size());
    std::transform(x.begin(), x.end(), fx.begin(), [&](double v) {
      switch (trial % 3) {
        case 0: return std::exp(v);
        case 1: return v * v * v + 2.0 * v;
        default: return -1.0 / (v + 10.0);
      }
    });
    REQUIRE(srocc(fx, y) == Approx(srocc(x, y)).margin(1e-12));
    REQUIRE(srocc(x, y) == Approx(oracle::pearson(oracle::ranks(x), oracle::ranks(y))).margin(1e-12));
  }
}

TEST_CASE("PLCC is invariant under positive affine maps", "[metrics]") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec x = random_vec(rng, 12, false), y = random_vec(rng, 12, false);
    const double a = u(rng), b = u(rng) - 2.5;
    Vec ax(x.size());
    std::transform(x.begin(), x.end(), ax.begin(), [&](double v) { return a * v + b; });
    REQUIRE(plcc(ax, y) == Approx(plcc(x, y)).margin(1e-12));
    REQUIRE(plcc(x, y) == Approx(oracle::pearson(x, y)).margin(1e-12));
    std::transform(x.begin(), x.end(), ax.begin(), [&](double v) { return -a * v + b; });
    REQUIRE(plcc(ax, y) == Approx(-plcc(x, y)).margin(1e-12));
  }
}

TEST_CASE("metric hand cases", "[metrics]") {
  const Vec x{1, 2, 2, 3}, y{1, 3, 2, 4};
  REQUIRE(average_ranks(x) == Vec{1, 2.5, 2.5, 4});
  REQUIRE(average_ranks(x) == oracle::ranks(x));
  REQUIRE(srocc(x, y) == Approx(oracle::pearson(oracle::ranks(x), oracle::ranks(y))));
  REQUIRE(krocc(x, y) == Approx(oracle::kendall_tau_b(x, y)));
  REQUIRE(rmse(Vec{0, 0}, Vec{1, 3}) == Approx(std::sqrt(5.0)));
  REQUIRE(plcc(Vec{1, 2, 3}, Vec{2, 4, 6}) == Approx(1.0));
  REQUIRE(srocc(Vec{1, 2, 3}, Vec{3, 2, 1}) == Approx(-1.0));
  REQUIRE_THROWS_AS(plcc(Vec{1, 1, 1}, Vec{1, 2, 3}), Error);
  REQUIRE_THROWS_AS(srocc(Vec{1, 2, 3}, Vec{5, 5, 5}), Error);
  REQUIRE_THROWS_AS(plcc(Vec{1, 2}, Vec{1, 2, 3}), Error);
}

TEST_CASE("logistic fit recovers a logistic curve", "[metrics]") {
  const LogisticMap truth{4.5, 1.2, 0.3, 0.4};
  Vec x, y;
  for (int i = 0; i < 40; ++i) {
    x.push_back(-1.5 + 0.075 * i);
    y.push_back(truth(x.back()));
  }
  const LogisticMap fit = fit_logistic(x, y);
  for (double v : x) REQUIRE(fit(v) == Approx(truth(v)).margin(1e-4));
  const Metrics m = compute_metrics(x, y, EvalOptions{true});
  REQUIRE(m.rmse < 1e-4);
  REQUIRE(m.plcc == Approx(1.0).margin(1e-6));
  REQUIRE(m.srocc == Approx(1.0));
}

TEST_CASE("partition sizes, disjointness and determinism", "[protocol]") {
  for (int n : {5, 10, 32, 101}) {
    const Partition p = make_partition(n, 0.8, 7);
    REQUIRE(static_cast<int>(p.train.size()) == std::clamp<int>(std::lround(n * 0.8), 1, n - 1));
    REQUIRE(p.train.size() + p.test.size() == static_cast<std::size_t>(n));
    std::set<int> all(p.train.begin(), p.train.end());
    all.insert(p.test.begin(), p.test.end());
    REQUIRE(all.size() == static_cast<std::size_t>(n));
    REQUIRE(std::is_sorted(p.train.begin(), p.train.end()));
    REQUIRE(std::is_sorted(p.test.begin(), p.test.end()));
    REQUIRE(make_partition(n, 0.8, 7).test == p.test);
  }
  REQUIRE(make_partition(32, 0.8, 0).test.size() == 6);
  REQUIRE(make_partition(50, 0.8, 1).test != make_partition(50, 0.8, 2).test);
  REQUIRE_THROWS_AS(make_partition(1, 0.8, 0), Error);
}

TEST_CASE("split protocol aggregates and records failures as warnings", "[protocol]") {
  Vec labels;
  for (int i = 0; i < 20; ++i) labels.push_back(i * 0.25);
  SplitProtocolOptions opts;
  opts.num_splits = 4;
  const EvalReport perfect = run_split_protocol(labels, [&](const Partition& p, std::uint64_t) {
    Vec out;
    for (int i : p.test) out.push_back(2.0 * labels[i] + 1.0);
    return out;
  }, opts);
  REQUIRE(perfect.splits.size() == 4);
  REQUIRE(perfect.mean.srocc == Approx(1.0));
  REQUIRE(perfect.mean.plcc == Approx(1.0));
  REQUIRE(perfect.stddev.srocc == Approx(0.0).margin(1e-12));
  REQUIRE(perfect.splits[2].seed == 2);
  REQUIRE(perfect.splits[0].n == 4);

  const EvalReport partial = run_split_protocol(labels, [&](const Partition& p, std::uint64_t seed) {
    if (seed == 1) throw std::runtime_error("diverged");
    Vec out;
    for (int i : p.test) out.push_back(-labels[i]);
    return out;
  }, opts);
  REQUIRE(partial.splits.size() == 3);
  REQUIRE(partial.warnings.size() == 1);
  REQUIRE(partial.mean.srocc == Approx(-1.0));
  const auto j = partial.to_json();
  REQUIRE(j.contains("mean"));
  REQUIRE(partial.to_table().find("SROCC") != std::string::npos);
}

TEST_CASE("aggregate uses the population standard deviation", "[protocol]") {
  EvalReport r;
  r.splits.push_back({0, {0.5, 0.6, 0.4, 1.0}, 5});
  r.splits.push_back({1, {0.7, 0.8, 0.6, 3.0}, 5});
  aggregate(r);
  REQUIRE(r.mean.srocc == Approx(0.6));
  REQUIRE(r.mean.rmse == Approx(2.0));
  REQUIRE(r.stddev.srocc == Approx(0.1));
  REQUIRE(r.stddev.rmse == Approx(1.0));
}
