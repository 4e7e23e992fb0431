#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "postdyn/posterior.hpp"

namespace postdyn {

// Growing constraint sets G_t: bounded order k(t) and bounded log transition
// probabilities z_t. Both cutoffs are non-decreasing, so membership is
// monotone in t.
struct SieveSchedule {
  double epsilon = 0.1;       // entropy-rate slack
  double growth_c = 4.0;      // C in z_t = C t^gamma
  double gamma = 0.0;         // must lie in (0, (h_p + eps/2)/(h_p + eps))
  double h_p = 2.0 / 3.0;     // source entropy rate, bits/symbol
  double tail_alpha = 1.0;    // targets for Pi_0(G_t^c) <= alpha 2^{-beta t}
  double tail_beta = 0.01;

  // k(t) = floor(log2(t) / (h_p + eps)) - 1; may be negative for tiny t, in
  // which case G_t is empty.
  int order_cutoff(long t) const;
  double z_cutoff(long t) const;
  double gamma_max() const { return (h_p + epsilon / 2.0) / (h_p + epsilon); }
  double tail_bound(long t) const;  // alpha * 2^{-beta t}

  // Default schedule: gamma at 80% of its admissible upper bound.
  static SieveSchedule make_default(double h_p_bits);
  void validate() const;
};

// order(theta) <= k(t) - 1 and z(theta) <= z_t.
bool sieve_membership(const MarkovHypothesis& theta, long t, const SieveSchedule& sched);

// Overlapping-window counts of length-k blocks of a path.
struct EmpiricalBlockDist {
  int k = 0;
  long total = 0;
  Eigen::ArrayXd counts;  // indexed like block_distribution
  Eigen::ArrayXd frequencies() const { return counts / static_cast<double>(total); }
};

EmpiricalBlockDist empirical_block_dist(PathView x, int k);

// Prior mass outside G_t along a dyadic t-grid: the order component is the
// exact tail sum of rho, the z component is Monte Carlo over Dirichlet rows.
// Both components (and the total) get an exponential fit log2(tail) ~ -rate*t
// and a polynomial fit log2(tail) ~ -deg*log2(t); the better fit decides
// whether the alpha*2^{-beta t} target is judged met.
struct PriorTailReport {
  std::vector<long> ts;
  std::vector<double> order_tail;  // exact
  std::vector<double> z_tail;      // Monte Carlo estimate
  std::vector<double> total_tail;
  std::vector<double> bound;       // alpha * 2^{-beta t}
  double order_exp_rate = 0.0, order_exp_r2 = 0.0, order_poly_r2 = 0.0;
  double total_exp_rate = 0.0, total_exp_r2 = 0.0, total_poly_r2 = 0.0;
  bool order_exponential_target_met = false;
  bool total_exponential_target_met = false;
};

PriorTailReport prior_tail_mass(const PriorSpec& prior, const SieveSchedule& sched, long t_max,
                                int mc_samples, std::uint64_t seed);

// (1/t) log2 <R_t 1_G> along a checkpoint grid, from a (grid x members)
// matrix of accumulated log2 likelihoods, the true-path log2 probabilities at
// the same checkpoints, and the subset G. m_total is the ensemble size the
// (1/M) prior weights refer to.
Eigen::ArrayXd set_log2_ratio_rate(const Eigen::MatrixXd& lw, std::span<const long> grid,
                                   const Eigen::ArrayXd& logp, std::span<const int> subset,
                                   int m_total);

// Last grid time at which s exceeds its horizon value (the limsup stand-in)
// by more than delta; 0 when never exceeded.
long last_entry_time(const Eigen::ArrayXd& s, std::span<const long> grid, double delta);

// D(t) = max over the subset of |(1/t) log2 R_t(theta) + h(theta)|.
// Throws when the subset is empty.
Eigen::ArrayXd uniform_convergence_profile(const Eigen::MatrixXd& lw, std::span<const long> grid,
                                           const Eigen::ArrayXd& logp,
                                           const Eigen::ArrayXd& member_h,
                                           std::span<const int> subset);

}  // namespace postdyn
