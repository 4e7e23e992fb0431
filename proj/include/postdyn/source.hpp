#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "postdyn/util.hpp"

namespace postdyn {

// Observed alphabet is binary throughout: symbols are 0/1 stored in uint8_t.
using Path = std::vector<std::uint8_t>;
using PathView = std::span<const std::uint8_t>;

struct SourceEdge {
  int from = 0;
  int to = 0;
  double prob = 0.0;
  int symbol = 0;
};

// Edge-labeled hidden-Markov presentation of a stationary binary process.
// Parallel edges between the same state pair are allowed as long as they
// carry different symbols (an IID coin is one state with two self-loops).
// Immutable after construction; safe to share across threads.
struct HiddenMarkovSource {
  std::vector<std::string> state_names;
  std::vector<std::vector<SourceEdge>> edges_from;  // indexed by state
  Eigen::VectorXd stationary;                       // invariant law of the state chain

  int num_states() const { return static_cast<int>(state_names.size()); }
  // Row-stochastic state transition matrix (parallel edges summed).
  Eigen::MatrixXd transition_matrix() const;
};

// Validates edges (probabilities in (0,1], rows summing to 1 within 1e-12,
// binary symbols, irreducible state chain), solves for the stationary
// distribution and checks stationarity to 1e-12.
HiddenMarkovSource make_source(std::vector<std::string> state_names,
                               std::vector<SourceEdge> edges);

// The two-state machine emitting blocks of 1s of even length separated by
// blocks of 0s. The stationary law is computed by the generic solver and then
// asserted to equal (1/3, 2/3).
HiddenMarkovSource build_even_process();

// Plain-text loader; grammar documented in the README ("state"/"edge" lines).
HiddenMarkovSource load_source(std::istream& in, const std::string& filename = "<source>");
HiddenMarkovSource load_source_file(const std::string& path);

// True when (state, emitted symbol) determines the successor state.
bool is_unifilar(const HiddenMarkovSource& src);

// Posterior over the hidden state given an observed prefix. Entries are kept
// in linear space and renormalized on every step.
struct BeliefState {
  Eigen::VectorXd dist;
};

BeliefState initial_belief(const HiddenMarkovSource& src);

// Distribution of the next symbol given the current belief: (P(0), P(1)).
Eigen::Vector2d next_symbol_dist(const HiddenMarkovSource& src, const BeliefState& b);

// Conditions the belief on one more observed symbol. Throws ImpossiblePrefix
// when the symbol has probability 0 under the current belief.
void advance(const HiddenMarkovSource& src, BeliefState& b, int symbol);

// P(X_{t+1} = . | X_1^t = prefix). Throws ImpossiblePrefix when the prefix
// has probability 0. When `belief_out` is non-null, the conditioned belief is
// stored there for incremental reuse.
Eigen::Vector2d conditional_next_dist(const HiddenMarkovSource& src, PathView prefix,
                                      BeliefState* belief_out = nullptr);

// Stationary sample of length t. Hidden start state is drawn from the
// stationary law; deterministic given the seed.
Path sample_path(const HiddenMarkovSource& src, long t, std::uint64_t seed);

// log2 P(X_1^t = x); -inf for impossible sequences.
double path_log2_prob(const HiddenMarkovSource& src, PathView x);

// Exact stationary marginal of length-k blocks, indexed by the block read as
// a binary number with the *first* symbol in the most significant bit.
// Requires 1 <= k <= 20.
Eigen::ArrayXd block_distribution(const HiddenMarkovSource& src, int k);

struct EntropyRateReport {
  bool unifilar = false;
  // Sum_s pi(s) H(edges out of s), in bits; NaN when not unifilar.
  double closed_form_bits = 0.0;
  // block_rates_bits[k-1] = H(P^{(k+1)}) - H(P^{(k)}) for k = 1..max_block.
  Eigen::ArrayXd block_rates_bits;
};

EntropyRateReport entropy_rate(const HiddenMarkovSource& src, int max_block = 12);

// Closed form when unifilar, otherwise the deepest block-entropy estimate.
double source_entropy_rate_bits(const HiddenMarkovSource& src);

}  // namespace postdyn
