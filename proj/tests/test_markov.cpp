#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "postdyn/markov.hpp"

using namespace postdyn;

namespace {

MarkovHypothesis random_hypothesis(int order, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Eigen::ArrayXd next(Eigen::Index{2} << order);
  for (Eigen::Index c = 0; c < next.size() / 2; ++c) {
    const double p1 = 0.05 + 0.9 * unit_uniform(rng);
    next[2 * c] = 1.0 - p1;
    next[2 * c + 1] = p1;
  }
  return make_markov(order, next);
}

}  // namespace

TEST_CASE("fair coin likelihood and z") {
  const MarkovHypothesis fc = fair_coin();
  std::mt19937_64 rng(2);
  for (int t : {1, 5, 17}) {
    Path x(static_cast<std::size_t>(t));
    for (auto& a : x) a = rng() & 1;
    CHECK(hypothesis_log2_likelihood(fc, x) == doctest::Approx(-t).epsilon(1e-12));
  }
  CHECK(z_max_log2(fc) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("divergence closed forms on the even process") {
  const HiddenMarkovSource even = build_even_process();
  const DivergenceReport fair = divergence_rate(fair_coin(), even);
  CHECK(fair.h_bits == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(fair.j_bits == fair.h_bits);  // reference infimum defaults to 0

  const DivergenceReport skew = divergence_rate(iid_coin(2.0 / 3.0), even);
  CHECK(skew.h_bits == doctest::Approx(0.251629167387823).epsilon(1e-11));
  CHECK(z_max_log2(iid_coin(2.0 / 3.0)) == doctest::Approx(std::log2(3.0)).epsilon(1e-12));

  // Sample-path estimator agrees with the closed form.
  CHECK(std::abs(aep_estimate(fair_coin(), even, 100000, 3) - 1.0 / 3.0) <= 0.01);
  const DivergenceReport with_mc = divergence_rate(iid_coin(2.0 / 3.0), even, 0.0, 100000, 4);
  REQUIRE(with_mc.mc_estimate.has_value());
  CHECK(std::abs(*with_mc.mc_estimate - with_mc.h_bits) <= 0.01);
}

TEST_CASE("likelihood definition unrolled at order 1") {
  Eigen::ArrayXd next(4);
  next << 0.7, 0.3, 0.2, 0.8;
  const MarkovHypothesis th = make_markov(1, next);
  const Path x = {0, 1};
  CHECK(hypothesis_log2_likelihood(th, x) ==
        doctest::Approx(std::log2(th.stationary_ctx[0]) + std::log2(0.3)).epsilon(1e-12));
}

TEST_CASE("likelihood normalization by brute force") {
  const HiddenMarkovSource even = build_even_process();
  std::vector<MarkovHypothesis> hyps = {fair_coin(), iid_coin(2.0 / 3.0),
                                        optimal_in_order(0, even), optimal_in_order(2, even),
                                        random_hypothesis(1, 21), random_hypothesis(3, 22)};
  for (const auto& th : hyps)
    for (int t : {1, 2, 3, 6, 10}) {
      double total = 0.0;
      for (unsigned long code = 0; code < (1ul << t); ++code)
        total += std::exp2(hypothesis_log2_likelihood(th, oracles::bits_path(code, t)));
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
}

TEST_CASE("stationary context law and prefix marginals") {
  const MarkovHypothesis th = random_hypothesis(3, 33);
  // Invariance under the context shift.
  const Eigen::Index n = th.stationary_ctx.size();
  Eigen::ArrayXd pushed = Eigen::ArrayXd::Zero(n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (int a = 0; a < 2; ++a)
      pushed[((c << 1) | a) & (n - 1)] +=
          th.stationary_ctx[c] * th.next_prob(static_cast<std::uint32_t>(c), a);
  CHECK((pushed - th.stationary_ctx).abs().maxCoeff() <= 1e-12);

  // Prefix marginal equals the brute-force sum over matching contexts.
  const Path prefix = {0, 1};
  double brute = 0.0;
  for (Eigen::Index c = 0; c < n; ++c)
    if ((c >> 1) == 0b01) brute += th.stationary_ctx[c];
  CHECK(prefix_log2_marginal(th, prefix) == doctest::Approx(std::log2(brute)).epsilon(1e-12));
  CHECK(prefix_log2_marginal(th, {}) == 0.0);
}

TEST_CASE("optimal hypotheses per order") {
  const HiddenMarkovSource even = build_even_process();
  const MarkovHypothesis opt0 = optimal_in_order(0, even);
  CHECK(opt0.next_probs[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  const MarkovHypothesis opt1 = optimal_in_order(1, even);
  CHECK(opt1.next_probs[1] == doctest::Approx(0.5).epsilon(1e-12));   // p(1|0)
  CHECK(opt1.next_probs[3] == doctest::Approx(0.75).epsilon(1e-12));  // p(1|1)

  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 6; ++k) {
    const double h = divergence_rate(optimal_in_order(k, even), even).h_bits;
    CHECK(h < prev);
    CHECK(h > 1e-6);
    prev = h;
  }

  // Flooring keeps rows strictly positive (context "01" is deterministic).
  const MarkovHypothesis opt2 = optimal_in_order(2, even, 1e-6);
  CHECK(opt2.next_probs.minCoeff() >= 1e-6 - 1e-15);
  CHECK(opt2.next_probs[2 * 0b01 + 1] == doctest::Approx(1.0 - 1e-6).epsilon(1e-12));

  CHECK_THROWS_AS(optimal_in_order(11, even), std::invalid_argument);
}

TEST_CASE("divergence requires tractable block enumeration") {
  const HiddenMarkovSource even = build_even_process();
  Eigen::ArrayXd uniform = Eigen::ArrayXd::Constant(Eigen::Index{2} << 20, 0.5);
  const MarkovHypothesis big = make_markov(20, uniform);
  CHECK_THROWS_WITH_AS(divergence_rate(big, even), doctest::Contains("Monte Carlo"),
                       std::invalid_argument);
  CHECK(std::isfinite(aep_estimate(big, even, 50, 5)));
}

TEST_CASE("z grows when the smallest probability shrinks") {
  Eigen::ArrayXd next(4);
  next << 0.9, 0.1, 0.4, 0.6;
  const MarkovHypothesis a = make_markov(1, next);
  next << 0.95, 0.05, 0.4, 0.6;
  const MarkovHypothesis b = make_markov(1, next);
  CHECK(z_max_log2(b) > z_max_log2(a));
}

TEST_CASE("aep estimate stays finite and concentrates") {
  const HiddenMarkovSource even = build_even_process();
  CHECK(std::isfinite(aep_estimate(fair_coin(), even, 1, 9)));
  Eigen::ArrayXd next(2);
  next << 1e-6, 1.0 - 1e-6;
  CHECK(std::isfinite(aep_estimate(make_markov(0, next), even, 1, 9)));

  const MarkovHypothesis th = iid_coin(2.0 / 3.0);
  std::vector<double> est;
  for (int s = 0; s < 20; ++s)
    est.push_back(aep_estimate(th, even, 100000, derive_seed(40, static_cast<std::uint64_t>(s))));
  double mean = 0.0;
  for (double v : est) mean += v;
  mean /= static_cast<double>(est.size());
  double var = 0.0;
  for (double v : est) var += (v - mean) * (v - mean);
  CHECK(std::sqrt(var / static_cast<double>(est.size())) < 0.02);
}

TEST_CASE("hypothesis serialization round trip") {
  const MarkovHypothesis th = random_hypothesis(2, 77);
  std::stringstream buf;
  save_hypothesis(buf, th);
  const MarkovHypothesis back = load_hypothesis(buf, "roundtrip");
  CHECK(back.order == th.order);
  for (Eigen::Index i = 0; i < th.next_probs.size(); ++i)
    CHECK(back.next_probs[i] == th.next_probs[i]);

  std::istringstream dup(
      "order 1\n"
      "0 0.5 0.5\n"
      "0 0.5 0.5\n");
  CHECK_THROWS_AS(load_hypothesis(dup, "dup"), ParseError);
  std::istringstream short_file("order 2\n00 0.5 0.5\n");
  CHECK_THROWS_AS(load_hypothesis(short_file, "short"), ParseError);
}

TEST_CASE("hypothesis validation") {
  Eigen::ArrayXd bad(2);
  bad << 0.0, 1.0;
  CHECK_THROWS_AS(make_markov(0, bad), std::invalid_argument);
  bad << 0.6, 0.6;
  CHECK_THROWS_AS(make_markov(0, bad), std::invalid_argument);
}
