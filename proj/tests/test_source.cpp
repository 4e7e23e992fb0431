#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "postdyn/source.hpp"

using namespace postdyn;

TEST_CASE("even process machine") {
  const HiddenMarkovSource even = build_even_process();
  const Eigen::MatrixXd t = even.transition_matrix();
  CHECK(t(0, 0) == 0.0);
  CHECK(t(0, 1) == 1.0);
  CHECK(t(1, 0) == 0.5);
  CHECK(t(1, 1) == 0.5);
  CHECK(std::abs(even.stationary(0) - 1.0 / 3.0) <= 1e-12);
  CHECK(std::abs(even.stationary(1) - 2.0 / 3.0) <= 1e-12);
  // The only 0 emission is the state-2 self loop.
  for (const auto& es : even.edges_from)
    for (const auto& e : es) {
      if (e.from == 1 && e.to == 1)
        CHECK(e.symbol == 0);
      else
        CHECK(e.symbol == 1);
    }
}

TEST_CASE("sampling is stationary-seeded and deterministic") {
  const HiddenMarkovSource even = build_even_process();
  CHECK(sample_path(even, 0, 123).empty());
  CHECK(sample_path(even, 100, 7) == sample_path(even, 100, 7));
  CHECK(sample_path(even, 100, 7) != sample_path(even, 100, 8));

  const Path x = sample_path(even, 100000, 1);
  CHECK_FALSE(oracles::has_bounded_odd_one_block(x));
}

TEST_CASE("conditional next-symbol distribution") {
  const HiddenMarkovSource even = build_even_process();
  const Eigen::Vector2d p_empty = conditional_next_dist(even, {});
  CHECK(p_empty(1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  // Cross-checked against the raw transfer-matrix route.
  CHECK(p_empty(1) ==
        doctest::Approx(oracles::transfer_matrix_prob(even, oracles::bits_path(1, 1)))
            .epsilon(1e-12));

  const Path zero = {0};
  CHECK(conditional_next_dist(even, zero)(1) == doctest::Approx(0.5).epsilon(1e-12));

  const Path bad = {0, 1, 0};
  CHECK_THROWS_WITH_AS(conditional_next_dist(even, bad), doctest::Contains("impossible prefix"),
                       ImpossiblePrefix);

  // Incremental belief reuse matches recomputation from scratch.
  BeliefState b = initial_belief(even);
  Path prefix;
  std::mt19937_64 rng(5);
  for (int n = 0; n < 50; ++n) {
    const Eigen::Vector2d next = next_symbol_dist(even, b);
    const Eigen::Vector2d again = conditional_next_dist(even, prefix);
    CHECK((next - again).cwiseAbs().maxCoeff() <= 1e-12);
    const int a = unit_uniform(rng) < next(1) ? 1 : 0;
    advance(even, b, a);
    prefix.push_back(static_cast<std::uint8_t>(a));
  }
}

TEST_CASE("path log probability") {
  const HiddenMarkovSource even = build_even_process();
  const Path zero = {0};
  CHECK(path_log2_prob(even, zero) == doctest::Approx(std::log2(1.0 / 3.0)).epsilon(1e-12));
  const Path bad = {0, 1, 0};
  CHECK(path_log2_prob(even, bad) == kNegInf);

  // Dual route: belief recursion vs transfer-matrix products, all words t <= 10.
  for (int t = 1; t <= 10; ++t)
    for (unsigned long code = 0; code < (1ul << t); ++code) {
      const Path x = oracles::bits_path(code, t);
      const double direct = oracles::transfer_matrix_prob(even, x);
      const double lp = path_log2_prob(even, x);
      if (direct == 0.0)
        CHECK(lp == kNegInf);
      else
        CHECK(std::exp2(lp) == doctest::Approx(direct).epsilon(1e-11));
    }

  // Chain rule against the conditional distribution, many random paths.
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10000; ++trial) {
    const Path x = sample_path(even, 30, rng());
    BeliefState b = initial_belief(even);
    double sum = 0.0;
    for (std::uint8_t a : x) {
      sum += std::log2(next_symbol_dist(even, b)(a));
      advance(even, b, a);
    }
    CHECK(std::abs(sum - path_log2_prob(even, x)) <= 1e-9);
  }
}

TEST_CASE("block distribution") {
  const HiddenMarkovSource even = build_even_process();
  CHECK(block_distribution(even, 3)[0b010] == 0.0);

  const Eigen::ArrayXd b1 = block_distribution(even, 1);
  CHECK(std::abs(b1[0] - 1.0 / 3.0) <= 1e-12);
  CHECK(std::abs(b1[1] - 2.0 / 3.0) <= 1e-12);

  // Monte Carlo frequency oracle at t = 1e6.
  const Path x = sample_path(even, 1000000, 9);
  const double freq1 =
      static_cast<double>(std::count(x.begin(), x.end(), std::uint8_t{1})) / 1e6;
  CHECK(std::abs(freq1 - b1[1]) <= 2e-3);

  for (int k = 1; k <= 12; ++k)
    CHECK(std::abs(block_distribution(even, k).sum() - 1.0) <= 1e-12);

  // Stationarity: marginalizing the (k+1)-block law from either end gives the
  // same k-block law.
  for (int k = 1; k <= 11; ++k) {
    const Eigen::ArrayXd big = block_distribution(even, k + 1);
    const Eigen::ArrayXd small = block_distribution(even, k);
    const Eigen::Index n = small.size();
    for (Eigen::Index w = 0; w < n; ++w) {
      CHECK(std::abs(big[2 * w] + big[2 * w + 1] - small[w]) <= 1e-12);
      CHECK(std::abs(big[w] + big[w + n] - small[w]) <= 1e-12);
    }
  }

  CHECK_THROWS_AS(block_distribution(even, 0), std::invalid_argument);
  CHECK_THROWS_AS(block_distribution(even, 21), std::invalid_argument);
}

TEST_CASE("entropy rate") {
  const HiddenMarkovSource even = build_even_process();
  const EntropyRateReport rep = entropy_rate(even);
  CHECK(rep.unifilar);
  CHECK(std::abs(rep.closed_form_bits - 2.0 / 3.0) <= 1e-12);
  CHECK(rep.block_rates_bits.size() == 12);
  for (int k = 1; k < 12; ++k)
    CHECK(rep.block_rates_bits[k] <= rep.block_rates_bits[k - 1] + 1e-12);
  CHECK(rep.block_rates_bits[11] >= 2.0 / 3.0 - 1e-12);
  CHECK(rep.block_rates_bits[11] - 2.0 / 3.0 <= 0.02);

  // IID fair coin as a one-state machine with two self loops.
  const HiddenMarkovSource coin = make_source({"s"}, {{0, 0, 0.5, 0}, {0, 0, 0.5, 1}});
  const EntropyRateReport coin_rep = entropy_rate(coin);
  CHECK(coin_rep.unifilar);
  CHECK(coin_rep.closed_form_bits == doctest::Approx(1.0).epsilon(1e-12));

  // Two same-symbol edges out of one state: not unifilar, estimate only.
  const HiddenMarkovSource fuzzy =
      make_source({"a", "b"}, {{0, 0, 0.5, 1}, {0, 1, 0.5, 1}, {1, 0, 1.0, 0}});
  const EntropyRateReport fuzzy_rep = entropy_rate(fuzzy);
  CHECK_FALSE(fuzzy_rep.unifilar);
  CHECK(std::isnan(fuzzy_rep.closed_form_bits));
  CHECK(fuzzy_rep.block_rates_bits.size() == 12);
  CHECK(source_entropy_rate_bits(fuzzy) == fuzzy_rep.block_rates_bits[11]);
}

TEST_CASE("support law by exhaustive enumeration") {
  const HiddenMarkovSource even = build_even_process();
  for (int t = 1; t <= 10; ++t)
    for (unsigned long code = 0; code < (1ul << t); ++code) {
      const Path x = oracles::bits_path(code, t);
      const bool impossible = path_log2_prob(even, x) == kNegInf;
      CHECK(impossible == oracles::has_bounded_odd_one_block(x));
    }
}

TEST_CASE("source text format") {
  std::istringstream in(
      "# even process\n"
      "state 1\n"
      "state 2\n"
      "edge 1 2 1.0 1\n"
      "edge 2 1 0.5 1\n"
      "edge 2 2 0.5 0\n");
  const HiddenMarkovSource loaded = load_source(in, "even.source");
  const HiddenMarkovSource built = build_even_process();
  CHECK((loaded.transition_matrix() - built.transition_matrix()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.stationary - built.stationary).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(sample_path(loaded, 500, 3) == sample_path(built, 500, 3));

  std::istringstream missing("edge 1 2 1.0\n");
  CHECK_THROWS_WITH_AS(load_source(missing, "bad.source"), doctest::Contains("bad.source:1"),
                       ParseError);

  std::istringstream badrow(
      "edge 1 2 1.0 1\n"
      "edge 2 1 0.25 1\n"
      "edge 2 2 0.5 0\n");
  CHECK_THROWS_AS(load_source(badrow, "rows.source"), ParseError);

  std::istringstream unknown("vertex 1\n");
  CHECK_THROWS_AS(load_source(unknown, "kw.source"), ParseError);

  std::istringstream reducible(
      "edge 1 1 1.0 1\n"
      "edge 2 2 1.0 0\n");
  CHECK_THROWS_AS(load_source(reducible, "red.source"), ParseError);
}

TEST_CASE("source validation") {
  CHECK_THROWS_AS(make_source({"a"}, {{0, 0, 0.5, 0}}), std::invalid_argument);  // row sum
  CHECK_THROWS_AS(make_source({"a"}, {{0, 0, 1.0, 2}}), std::invalid_argument);  // symbol
  CHECK_THROWS_AS(make_source({"a"}, {{0, 0, 0.5, 0}, {0, 0, 0.5, 0}}),
                  std::invalid_argument);  // duplicate edge
}
