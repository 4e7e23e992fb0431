#include "postdyn/config.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace postdyn {

void RateSchedule::validate() const {
  if (!(a > 0.0) || !(a < 1.0))
    throw std::invalid_argument("rate.a must lie in (0, 1): eps_t must vanish with t*eps_t -> inf");
  if (!(c > 0.0)) throw std::invalid_argument("rate.c must be positive");
}

bool valid_theorem_selector(const std::string& s) {
  return s == "1" || s == "2" || s == "3" || s == "4" || s == "5" || s == "6" ||
         s == "diversity" || s == "sieve" || s == "all";
}

void ExperimentConfig::validate() const {
  if (source != "even" && !std::filesystem::exists(source))
    throw std::invalid_argument("source file does not exist: " + source);
  if (prior_family != "geometric" && prior_family != "doubly_exponential")
    throw std::invalid_argument("prior.family must be geometric or doubly_exponential");
  if (!(prior_lambda > 0.0) || prior_lambda > 1.0)
    throw std::invalid_argument("prior.lambda must lie in (0, 1]");
  if (!(prior_c > 0.0)) throw std::invalid_argument("prior.c must be positive");
  if (!(prior_alpha > 0.0)) throw std::invalid_argument("prior.alpha must be positive");
  if (prior_k_max < 0 || prior_k_max > 19)
    throw std::invalid_argument("prior.k_max must lie in [0, 19]");
  if (initial_term != "stationary" && initial_term != "condition")
    throw std::invalid_argument("prior.initial_term must be stationary or condition");
  if (ensemble_size < 1) throw std::invalid_argument("ensemble.size must be >= 1");
  if (sieve_ensemble_size < 1) throw std::invalid_argument("sieve.ensemble_size must be >= 1");
  if (path_length < 10) throw std::invalid_argument("path.length must be >= 10");
  if (replicates < 1) throw std::invalid_argument("replicates must be >= 1");
  if (conjugate_k_max < 0 || conjugate_k_max > 12)
    throw std::invalid_argument("conjugate.k_max must lie in [0, 12]");
  if (!(sieve_gamma_frac > 0.0) || !(sieve_gamma_frac < 1.0))
    throw std::invalid_argument("sieve.gamma_frac must lie in (0, 1)");
  rate.validate();
  if (!valid_theorem_selector(theorem))
    throw std::invalid_argument("theorem must be one of 1..6, diversity, sieve, all");
}

double ExperimentConfig::tolerance(const std::string& name, double fallback) const {
  auto it = tolerance_overrides.find(name);
  return it == tolerance_overrides.end() ? fallback : it->second;
}

PriorSpec ExperimentConfig::prior_spec(double h_p_bits) const {
  return prior_spec_family(prior_family, h_p_bits);
}

PriorSpec ExperimentConfig::prior_spec_family(const std::string& family, double h_p_bits) const {
  if (family == "geometric")
    return PriorSpec::geometric(prior_lambda, prior_k_max, prior_alpha);
  return PriorSpec::doubly_exponential(prior_c, h_p_bits + sieve_epsilon, prior_k_max,
                                       prior_alpha);
}

SieveSchedule ExperimentConfig::sieve_schedule(double h_p_bits) const {
  SieveSchedule s;
  s.epsilon = sieve_epsilon;
  s.growth_c = sieve_c;
  s.h_p = h_p_bits;
  s.gamma = sieve_gamma_frac * s.gamma_max();
  s.tail_alpha = sieve_tail_alpha;
  s.tail_beta = sieve_tail_beta;
  s.validate();
  return s;
}

InitialTerm ExperimentConfig::initial_term_mode() const {
  return initial_term == "condition" ? InitialTerm::condition : InitialTerm::stationary;
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream ss(value);
  T out;
  if (!(ss >> out) || !ss.eof())
    throw std::invalid_argument("bad value for " + key + ": '" + value + "'");
  return out;
}

}  // namespace

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "source") cfg.source = value;
  else if (key == "prior.family") cfg.prior_family = value;
  else if (key == "prior.lambda") cfg.prior_lambda = parse_number<double>(key, value);
  else if (key == "prior.c") cfg.prior_c = parse_number<double>(key, value);
  else if (key == "prior.alpha") cfg.prior_alpha = parse_number<double>(key, value);
  else if (key == "prior.k_max") cfg.prior_k_max = parse_number<int>(key, value);
  else if (key == "prior.initial_term") cfg.initial_term = value;
  else if (key == "ensemble.size") cfg.ensemble_size = parse_number<int>(key, value);
  else if (key == "path.length") cfg.path_length = parse_number<long>(key, value);
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "replicates") cfg.replicates = parse_number<int>(key, value);
  else if (key == "conjugate.k_max") cfg.conjugate_k_max = parse_number<int>(key, value);
  else if (key == "sieve.ensemble_size") cfg.sieve_ensemble_size = parse_number<int>(key, value);
  else if (key == "sieve.epsilon") cfg.sieve_epsilon = parse_number<double>(key, value);
  else if (key == "sieve.C") cfg.sieve_c = parse_number<double>(key, value);
  else if (key == "sieve.gamma_frac") cfg.sieve_gamma_frac = parse_number<double>(key, value);
  else if (key == "sieve.tail_alpha") cfg.sieve_tail_alpha = parse_number<double>(key, value);
  else if (key == "sieve.tail_beta") cfg.sieve_tail_beta = parse_number<double>(key, value);
  else if (key == "rate.a") cfg.rate.a = parse_number<double>(key, value);
  else if (key == "rate.c") cfg.rate.c = parse_number<double>(key, value);
  else if (key == "theorem") cfg.theorem = value;
  else if (key == "out") cfg.out_dir = value;
  else if (key.rfind("tol.", 0) == 0)
    cfg.tolerance_overrides[key.substr(4)] = parse_number<double>(key, value);
  else
    throw std::invalid_argument("unknown key '" + key + "'");
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) throw ParseError(path, lineno, "expected key = value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty() || value.empty()) throw ParseError(path, lineno, "expected key = value");
    try {
      apply_override(cfg, key, value);
    } catch (const std::invalid_argument& ex) {
      throw ParseError(path, lineno, ex.what());
    }
  }
  return cfg;
}

void ExperimentConfig::echo(std::ostream& out) const {
  out << "source = " << source << "\n";
  out << "prior.family = " << prior_family << "\n";
  out << "prior.lambda = " << format_double(prior_lambda) << "\n";
  out << "prior.c = " << format_double(prior_c) << "\n";
  out << "prior.alpha = " << format_double(prior_alpha) << "\n";
  out << "prior.k_max = " << prior_k_max << "\n";
  out << "prior.initial_term = " << initial_term << "\n";
  out << "ensemble.size = " << ensemble_size << "\n";
  out << "path.length = " << path_length << "\n";
  out << "seed = " << seed << "\n";
  out << "replicates = " << replicates << "\n";
  out << "conjugate.k_max = " << conjugate_k_max << "\n";
  out << "sieve.ensemble_size = " << sieve_ensemble_size << "\n";
  out << "sieve.epsilon = " << format_double(sieve_epsilon) << "\n";
  out << "sieve.C = " << format_double(sieve_c) << "\n";
  out << "sieve.gamma_frac = " << format_double(sieve_gamma_frac) << "\n";
  out << "sieve.tail_alpha = " << format_double(sieve_tail_alpha) << "\n";
  out << "sieve.tail_beta = " << format_double(sieve_tail_beta) << "\n";
  out << "rate.a = " << format_double(rate.a) << "\n";
  out << "rate.c = " << format_double(rate.c) << "\n";
  out << "theorem = " << theorem << "\n";
  out << "out = " << out_dir << "\n";
  for (const auto& [k, v] : tolerance_overrides)
    out << "tol." << k << " = " << format_double(v) << "\n";
}

}  // namespace postdyn
