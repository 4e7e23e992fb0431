#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>

#include "postdyn/source.hpp"

namespace postdyn {

// One strictly positive stationary binary Markov chain of order k (k = 0 is
// IID). Contexts are encoded as integers with the oldest symbol in the most
// significant bit, so next_probs is laid out as [context * 2 + symbol] and a
// length-(k+1) block index b splits as context = b >> 1, symbol = b & 1.
// Immutable value; operations on it are pure.
struct MarkovHypothesis {
  int order = 0;
  Eigen::ArrayXd next_probs;      // 2^{order+1} entries, all in (0, 1)
  Eigen::ArrayXd stationary_ctx;  // 2^{order} entries, invariant context law

  std::uint32_t context_mask() const { return (1u << order) - 1u; }
  double next_prob(std::uint32_t ctx, int symbol) const {
    return next_probs[ctx * 2 + static_cast<std::uint32_t>(symbol)];
  }
};

// Validates positivity and row sums (1e-12), then solves for the stationary
// context distribution (power iteration with a dense fallback) and checks its
// invariance to 1e-12.
MarkovHypothesis make_markov(int order, Eigen::ArrayXd next_probs);

MarkovHypothesis fair_coin();
MarkovHypothesis iid_coin(double p1);

// log2 of the stationary marginal of a prefix shorter than (or equal to) the
// order: contexts sharing the first |x| symbols form one contiguous range.
double prefix_log2_marginal(const MarkovHypothesis& theta, PathView x);

// log2 f_theta(x): stationary marginal of the first k symbols, then
// transition probabilities. Always finite.
double hypothesis_log2_likelihood(const MarkovHypothesis& theta, PathView x);

// max_{w,a} |log2 f(a|w)|.
double z_max_log2(const MarkovHypothesis& theta);

struct DivergenceReport {
  double h_bits = 0.0;  // KL divergence rate from the source, bits/symbol
  double j_bits = 0.0;  // h - h_ref (h_ref = family-level infimum reference)
  double z_bits = 0.0;
  std::optional<double> mc_estimate;  // relative-AEP sample estimate, if requested
  long mc_path_length = 0;
};

// Fast closed-form core: h = -h_source - sum_{wa} blocks[wa] * log2 f(a|w),
// where `blocks` is the source's (order+1)-block distribution.
double divergence_h_bits(const MarkovHypothesis& theta, const Eigen::ArrayXd& source_blocks,
                         double source_entropy_bits);

// Closed-form divergence report. Requires order+1 <= 20; beyond that the
// caller should fall back to aep_estimate. When mc_length > 0 the report also
// carries a Monte Carlo estimate for cross-checking.
DivergenceReport divergence_rate(const MarkovHypothesis& theta, const HiddenMarkovSource& src,
                                 double h_ref_bits = 0.0, long mc_length = 0,
                                 std::uint64_t mc_seed = 0);

// -(1/t) [log2 f_theta(X) - log2 p(X)] on one sampled path; converges to the
// divergence rate as t grows.
double aep_estimate(const MarkovHypothesis& theta, const HiddenMarkovSource& src, long t,
                    std::uint64_t seed);

// Divergence minimizer within order k: the source's conditional block law,
// floored at eta and renormalized to stay strictly positive. Contexts the
// source never visits get a uniform row. Requires k <= 10.
MarkovHypothesis optimal_in_order(int k, const HiddenMarkovSource& src, double eta = 1e-6);

// Plain-text table: "order k" then 2^k rows "context p0 p1" (context "-" for
// order 0), probabilities in shortest round-trip form.
void save_hypothesis(std::ostream& out, const MarkovHypothesis& theta);
MarkovHypothesis load_hypothesis(std::istream& in, const std::string& filename = "<hypothesis>");
MarkovHypothesis load_hypothesis_file(const std::string& path);

}  // namespace postdyn
