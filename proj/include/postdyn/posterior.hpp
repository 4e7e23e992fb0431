#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "postdyn/markov.hpp"

namespace postdyn {

// How a hypothesis scores the first `order` symbols of a path: its stationary
// block marginal (the default, matching stationary chains) or conditioning on
// them (the conjugate engine's convention). The two differ by an O(1) term
// that cancels in every rate; outputs record which mode was used.
enum class InitialTerm { stationary, condition };

const char* to_string(InitialTerm it);

struct PriorSpec {
  Eigen::ArrayXd order_weights;    // rho_k for k = 0..k_max, summing to 1
  double row_concentration = 1.0;  // symmetric Dirichlet concentration per row

  // rho_k proportional to lambda^k.
  static PriorSpec geometric(double lambda, int k_max, double alpha);
  // rho_k proportional to exp(-c * 2^{rate * k}); with rate = h_P + eps this
  // is the family whose order tail decays exponentially along the sieve.
  static PriorSpec doubly_exponential(double c, double rate, int k_max, double alpha);

  int max_order() const { return static_cast<int>(order_weights.size()) - 1; }
};

// Weighted-sample representation of the posterior: M hypotheses drawn from
// the prior, each carrying its accumulated log2 conditional likelihood.
// Weights are normalized only on demand (one max-shift per query), so the
// common true-path density cancels and never needs to be evaluated.
// Value-semantic: experiments may snapshot and fork freely.
struct EnsemblePosterior {
  std::vector<MarkovHypothesis> members;
  Eigen::ArrayXd log2_weights;
  long t = 0;
  InitialTerm initial_term = InitialTerm::stationary;

  // Bookkeeping for conditional lookups: rolling history (newest symbol in
  // bit 0), the first max_order symbols, and per-member log2 prefix marginals
  // used while t < order.
  std::uint64_t history = 0;
  int max_order = 0;
  Path prefix;
  std::vector<double> warm_log2_marginal;

  int size() const { return static_cast<int>(members.size()); }
};

EnsemblePosterior draw_prior_ensemble(const PriorSpec& prior, int m, std::uint64_t seed,
                                      InitialTerm initial_term = InitialTerm::stationary);

// Wraps explicit hypotheses as an equal-weight ensemble (probes, tests).
EnsemblePosterior ensemble_from_members(std::vector<MarkovHypothesis> members,
                                        InitialTerm initial_term = InitialTerm::stationary);

// Conditional likelihood L_{t+1}(theta_i) of symbol a for every member.
Eigen::ArrayXd member_conditional_probs(const EnsemblePosterior& post, int a);

// Moves history/prefix/warm marginals past symbol a without touching weights.
// update(post, a) is exactly replicator_step(member_conditional_probs(post,a))
// followed by this.
void advance_state(EnsemblePosterior& post, int a);

// One Bayes step: log2_weights[i] += log2 L_{t+1}(theta_i), then advance.
void update(EnsemblePosterior& post, int a);

// Replicator step with an arbitrary positive fitness vector; Bayes updating
// is the special case fitness = conditional likelihood. Throws on
// non-positive fitness. Weight arithmetic is shared with update(), so the two
// agree bit for bit.
void replicator_step(EnsemblePosterior& post, std::span<const double> fitness);

Eigen::ArrayXd normalized_weights(const EnsemblePosterior& post);

// log2 <R_t> up to the true-path density: log2( (1/M) sum_i 2^{lw_i} ).
double log2_integrated_likelihood(const EnsemblePosterior& post);

// Self-normalized posterior mass of {theta : pred(theta)}.
double posterior_mass(const EnsemblePosterior& post,
                      const std::function<bool(const MarkovHypothesis&)>& pred);

// log2 posterior mass over the members flagged in `indicator` (-inf if none).
double posterior_log2_mass(const EnsemblePosterior& post, std::span<const std::uint8_t> indicator);

// (1/t)(log2 R_t(theta_i) - log2 <R_t>): the growth rate of the posterior
// density ratio at member i against the ensemble-represented prior.
double posterior_log2_density_rate(const EnsemblePosterior& post, int member_index);
// Same for an external probe, given its accumulated log2 f_probe(x_1^t).
double posterior_log2_density_rate(const EnsemblePosterior& post, double probe_log2_likelihood);

// Posterior-weighted mixture of the members' next-symbol distributions.
Eigen::Vector2d predictive_dist(const EnsemblePosterior& post);

// log2 [posterior weight / prior weight] at the maximum-weight member.
double intensity_of_selection(const EnsemblePosterior& post);

// (1/t) sum_n log2 [L_n(theta)/<L_n>] accumulated step by step over `path`
// starting from the given (usually t = 0) snapshot. Telescopes to the density
// rate; the step-by-step form exists so tests can verify that identity.
double relative_fitness_average(EnsemblePosterior post, int member_index, PathView path);

// Posterior snapshot serialization (documented plain-text format).
void save_posterior(std::ostream& out, const EnsemblePosterior& post);
EnsemblePosterior load_posterior(std::istream& in, const std::string& filename = "<posterior>");

// Exact per-order conjugate engine: Dirichlet-multinomial marginal likelihood
// over transition counts, conditioned on the first k symbols of the path.
struct OrderPosterior {
  double alpha = 1.0;
  int k_max = 8;
  Eigen::ArrayXd order_log2_prior;     // log2 rho_k, renormalized over 0..k_max
  Eigen::ArrayXd order_log2_marginal;  // accumulated log2 marginal likelihood
  std::vector<std::vector<double>> counts;  // per order: 2^{k+1} transition tallies
  long t = 0;
  std::uint64_t history = 0;
};

OrderPosterior make_order_posterior(const PriorSpec& prior, int k_max);
void update(OrderPosterior& op, int a);
Eigen::ArrayXd order_posterior_weights(const OrderPosterior& op);
int order_posterior_mode(const OrderPosterior& op);
Eigen::Vector2d predictive_dist(const OrderPosterior& op);
// log2 of the prior-mixed marginal likelihood sum_k rho_k m_k(x_1^t).
double log2_marginal_likelihood(const OrderPosterior& op);

// Batch convenience: absorb a whole path.
OrderPosterior conjugate_order_posterior(const PriorSpec& prior, PathView x, int k_max);

}  // namespace postdyn
