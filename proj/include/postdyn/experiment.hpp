#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "postdyn/config.hpp"
#include "postdyn/metrics.hpp"

namespace postdyn {

// Checkpoint times: powers of two and ~8 points per decade, plus the horizon.
std::vector<long> default_grid(long t_final);

// Accumulated log2 likelihoods of an ensemble along a checkpoint grid,
// together with everything the verification protocols divide by: the source
// log2 path probability, the integrated likelihood, and per-member divergence
// statistics. lw(g, i) is member i at time grid[g].
struct WeightField {
  std::vector<long> grid;
  Eigen::MatrixXd lw;
  Eigen::ArrayXd logp;   // log2 p(x_1^t) at the checkpoints
  Eigen::ArrayXd logz;   // log2 sum_i 2^{lw(g,i)}
  Eigen::ArrayXd member_h;
  Eigen::ArrayXd member_z;
  std::vector<int> member_order;
  double h_min = 0.0;

  int members() const { return static_cast<int>(lw.cols()); }
  // log2 <R_t>: logz shifted by the (1/M) prior weights and the path density.
  double log2_integrated(Eigen::Index g) const {
    return logz[g] - std::log2(static_cast<double>(members())) - logp[g];
  }
};

WeightField compute_weight_field(const HiddenMarkovSource& src,
                                 const std::vector<MarkovHypothesis>& members, PathView path,
                                 std::span<const long> grid, bool parallel = true);

struct CheckResult {
  std::string name;
  std::string status;  // PASS | FAIL | REVIEW
  std::string detail;
  bool gating = true;
  bool passed() const { return status == "PASS"; }
};

struct ProtocolResult {
  std::string protocol;
  std::vector<CheckResult> checks;
};

struct RunContext {
  HiddenMarkovSource source;
  double h_p = 0.0;  // bits/symbol
  ExperimentConfig cfg;
  std::filesystem::path dir;
};

RunContext make_run_context(const ExperimentConfig& cfg);

// Theorem-by-theorem verification protocols. Each writes its CSV records
// under ctx.dir and returns the tolerance checks it enforces.
ProtocolResult run_density_growth(const RunContext& ctx);        // Theorems 1-2
ProtocolResult run_set_concentration(const RunContext& ctx);     // Theorem 3
ProtocolResult run_ldp(const RunContext& ctx);                   // Theorem 4
ProtocolResult run_predictive_gap(const RunContext& ctx);        // Theorem 5
ProtocolResult run_rate(const RunContext& ctx);                  // Theorem 6
ProtocolResult run_diversity_decomposition(const RunContext& ctx);
ProtocolResult run_sieve_report(const RunContext& ctx);

// Runs the protocols selected by cfg.theorem, echoes the configuration,
// writes summary.txt with one line per check, and prints the same lines.
// Returns 0 iff every gating check passes.
int run_verify(const ExperimentConfig& cfg);

}  // namespace postdyn
