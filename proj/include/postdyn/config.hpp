#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "postdyn/posterior.hpp"
#include "postdyn/sieve.hpp"

namespace postdyn {

// Shrinking divergence-neighborhood radii eps_t = c * t^{-a}. The exponent
// must stay below 1 so that t * eps_t diverges.
struct RateSchedule {
  double a = 0.5;
  double c = 1.0;
  double epsilon(long t) const { return c * std::pow(static_cast<double>(t), -a); }
  void validate() const;
};

// One experiment = source + prior + ensemble/path sizes + schedules + the
// selected verification protocols. Loaded from a plain-text key-value file;
// CLI flags override individual keys.
struct ExperimentConfig {
  std::string source = "even";  // "even" or a source spec path

  std::string prior_family = "geometric";  // geometric | doubly_exponential
  double prior_lambda = 0.5;
  double prior_c = 1.0;
  double prior_alpha = 1.0;
  int prior_k_max = 10;
  std::string initial_term = "stationary";  // stationary | condition

  int ensemble_size = 10000;
  long path_length = 10000;
  std::uint64_t seed = 1;
  int replicates = 20;

  int conjugate_k_max = 8;
  int sieve_ensemble_size = 2000;

  double sieve_epsilon = 0.1;
  double sieve_c = 4.0;
  double sieve_gamma_frac = 0.8;  // gamma as a fraction of its upper bound
  double sieve_tail_alpha = 1.0;
  double sieve_tail_beta = 0.01;

  RateSchedule rate;

  std::string theorem = "all";  // 1..6 | diversity | sieve | all
  std::string out_dir = "runs/out";

  std::map<std::string, double> tolerance_overrides;  // keys without "tol."

  void validate() const;
  double tolerance(const std::string& name, double fallback) const;
  PriorSpec prior_spec(double h_p_bits) const;
  PriorSpec prior_spec_family(const std::string& family, double h_p_bits) const;
  SieveSchedule sieve_schedule(double h_p_bits) const;
  InitialTerm initial_term_mode() const;
  void echo(std::ostream& out) const;
};

ExperimentConfig load_config(const std::string& path);
// Applies "key=value" with the same keys as the config file; throws
// std::invalid_argument on unknown keys or bad values.
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);

bool valid_theorem_selector(const std::string& s);

}  // namespace postdyn
