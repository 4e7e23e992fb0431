#include "postdyn/source.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

namespace postdyn {

namespace {

void check_irreducible(int n, const std::vector<std::vector<SourceEdge>>& edges_from) {
  // Reachability in both directions from state 0.
  auto reach = [&](bool reversed) {
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    std::vector<std::vector<int>> adj(n);
    for (const auto& es : edges_from)
      for (const auto& e : es)
        reversed ? adj[e.to].push_back(e.from) : adj[e.from].push_back(e.to);
    while (!stack.empty()) {
      int s = stack.back();
      stack.pop_back();
      for (int v : adj[s])
        if (!seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
  };
  if (!reach(false) || !reach(true))
    throw std::invalid_argument("source state chain is not irreducible; stationary law not unique");
}

Eigen::VectorXd solve_stationary(const Eigen::MatrixXd& T) {
  const int n = static_cast<int>(T.rows());
  if (n == 1) return Eigen::VectorXd::Ones(1);
  // pi^T T = pi^T with sum(pi) = 1: replace one equation by the normalization.
  Eigen::MatrixXd A = T.transpose() - Eigen::MatrixXd::Identity(n, n);
  A.row(n - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(n - 1) = 1.0;
  Eigen::VectorXd pi = A.fullPivLu().solve(b);
  for (int i = 0; i < n; ++i) {
    if (pi(i) < -1e-12) throw std::runtime_error("stationary solve produced a negative entry");
    if (pi(i) < 0) pi(i) = 0;
  }
  pi /= pi.sum();
  return pi;
}

}  // namespace

Eigen::MatrixXd HiddenMarkovSource::transition_matrix() const {
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(num_states(), num_states());
  for (const auto& es : edges_from)
    for (const auto& e : es) T(e.from, e.to) += e.prob;
  return T;
}

HiddenMarkovSource make_source(std::vector<std::string> state_names,
                               std::vector<SourceEdge> edges) {
  const int n = static_cast<int>(state_names.size());
  if (n == 0) throw std::invalid_argument("source needs at least one state");
  HiddenMarkovSource src;
  src.state_names = std::move(state_names);
  src.edges_from.resize(n);
  for (const auto& e : edges) {
    if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n)
      throw std::invalid_argument("edge references an unknown state");
    if (!(e.prob > 0.0) || e.prob > 1.0)
      throw std::invalid_argument("edge probability must lie in (0, 1]");
    if (e.symbol != 0 && e.symbol != 1)
      throw std::invalid_argument("edge symbol must be 0 or 1");
    for (const auto& other : src.edges_from[e.from])
      if (other.to == e.to && other.symbol == e.symbol)
        throw std::invalid_argument("duplicate edge (from, to, symbol)");
    src.edges_from[e.from].push_back(e);
  }
  for (int s = 0; s < n; ++s) {
    double row = 0.0;
    for (const auto& e : src.edges_from[s]) row += e.prob;
    if (std::abs(row - 1.0) > 1e-12)
      throw std::invalid_argument("outgoing probabilities of state '" + src.state_names[s] +
                                  "' sum to " + format_double(row));
  }
  check_irreducible(n, src.edges_from);
  src.stationary = solve_stationary(src.transition_matrix());
  const Eigen::VectorXd residual =
      src.transition_matrix().transpose() * src.stationary - src.stationary;
  if (residual.cwiseAbs().maxCoeff() > 1e-12)
    throw std::runtime_error("stationary distribution fails the fixed-point check");
  return src;
}

HiddenMarkovSource build_even_process() {
  HiddenMarkovSource src = make_source({"1", "2"}, {{0, 1, 1.0, 1},  //
                                                    {1, 0, 0.5, 1},
                                                    {1, 1, 0.5, 0}});
  if (std::abs(src.stationary(0) - 1.0 / 3.0) > 1e-12 ||
      std::abs(src.stationary(1) - 2.0 / 3.0) > 1e-12)
    throw std::logic_error("even process stationary law differs from (1/3, 2/3)");
  return src;
}

HiddenMarkovSource load_source(std::istream& in, const std::string& filename) {
  std::vector<std::string> names;
  std::map<std::string, int> index;
  auto state_id = [&](const std::string& name) {
    auto it = index.find(name);
    if (it != index.end()) return it->second;
    int id = static_cast<int>(names.size());
    names.push_back(name);
    index.emplace(name, id);
    return id;
  };
  std::vector<SourceEdge> edges;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string keyword;
    if (!(ls >> keyword)) continue;
    if (keyword == "state") {
      std::string name;
      if (!(ls >> name)) throw ParseError(filename, lineno, "expected: state NAME");
      state_id(name);
    } else if (keyword == "edge") {
      std::string from, to;
      double prob;
      int symbol;
      if (!(ls >> from >> to >> prob >> symbol))
        throw ParseError(filename, lineno, "expected: edge FROM TO PROB SYMBOL");
      edges.push_back({state_id(from), state_id(to), prob, symbol});
    } else {
      throw ParseError(filename, lineno, "unknown keyword '" + keyword + "'");
    }
    std::string extra;
    if (ls >> extra) throw ParseError(filename, lineno, "trailing token '" + extra + "'");
  }
  try {
    return make_source(std::move(names), std::move(edges));
  } catch (const std::exception& ex) {
    throw ParseError(filename, lineno, ex.what());
  }
}

HiddenMarkovSource load_source_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open source file: " + path);
  return load_source(in, path);
}

bool is_unifilar(const HiddenMarkovSource& src) {
  for (const auto& es : src.edges_from) {
    int seen_symbol[2] = {0, 0};
    for (const auto& e : es)
      if (++seen_symbol[e.symbol] > 1) return false;
  }
  return true;
}

BeliefState initial_belief(const HiddenMarkovSource& src) { return {src.stationary}; }

Eigen::Vector2d next_symbol_dist(const HiddenMarkovSource& src, const BeliefState& b) {
  Eigen::Vector2d out = Eigen::Vector2d::Zero();
  for (const auto& es : src.edges_from)
    for (const auto& e : es) out(e.symbol) += b.dist(e.from) * e.prob;
  return out;
}

namespace {

// One filtering step without normalization; returns the symbol probability.
double push_symbol(const HiddenMarkovSource& src, const Eigen::VectorXd& alpha, int symbol,
                   Eigen::VectorXd& out) {
  out.setZero();
  for (const auto& es : src.edges_from)
    for (const auto& e : es)
      if (e.symbol == symbol) out(e.to) += alpha(e.from) * e.prob;
  return out.sum();
}

}  // namespace

void advance(const HiddenMarkovSource& src, BeliefState& b, int symbol) {
  Eigen::VectorXd next(src.num_states());
  const double p = push_symbol(src, b.dist, symbol, next);
  if (!(p > 0.0))
    throw ImpossiblePrefix("symbol " + std::to_string(symbol) +
                           " has probability 0 given the observed prefix");
  b.dist = next / p;
}

Eigen::Vector2d conditional_next_dist(const HiddenMarkovSource& src, PathView prefix,
                                      BeliefState* belief_out) {
  BeliefState b = initial_belief(src);
  for (std::uint8_t a : prefix) advance(src, b, a);
  if (belief_out) *belief_out = b;
  return next_symbol_dist(src, b);
}

Path sample_path(const HiddenMarkovSource& src, long t, std::uint64_t seed) {
  if (t < 0) throw std::invalid_argument("path length must be >= 0");
  std::mt19937_64 rng(seed);
  Path x;
  x.reserve(static_cast<std::size_t>(t));
  // Draw the start state from the stationary law.
  int s = src.num_states() - 1;
  {
    double u = unit_uniform(rng), acc = 0.0;
    for (int i = 0; i < src.num_states(); ++i) {
      acc += src.stationary(i);
      if (u < acc) {
        s = i;
        break;
      }
    }
  }
  for (long n = 0; n < t; ++n) {
    const auto& es = src.edges_from[s];
    double u = unit_uniform(rng), acc = 0.0;
    const SourceEdge* chosen = &es.back();
    for (const auto& e : es) {
      acc += e.prob;
      if (u < acc) {
        chosen = &e;
        break;
      }
    }
    x.push_back(static_cast<std::uint8_t>(chosen->symbol));
    s = chosen->to;
  }
  return x;
}

double path_log2_prob(const HiddenMarkovSource& src, PathView x) {
  Eigen::VectorXd alpha = src.stationary, next(src.num_states());
  double lp = 0.0;
  for (std::uint8_t a : x) {
    const double p = push_symbol(src, alpha, a, next);
    if (!(p > 0.0)) return kNegInf;
    lp += std::log2(p);
    alpha = next / p;
  }
  return lp;
}

Eigen::ArrayXd block_distribution(const HiddenMarkovSource& src, int k) {
  if (k < 1 || k > 20)
    throw std::invalid_argument("block length must lie in [1, 20], got " + std::to_string(k));
  Eigen::ArrayXd out(std::size_t{1} << k);
  std::vector<Eigen::VectorXd> work(static_cast<std::size_t>(k) + 1,
                                    Eigen::VectorXd(src.num_states()));
  work[0] = src.stationary;
  std::function<void(int, std::uint32_t)> rec = [&](int depth, std::uint32_t prefix) {
    if (depth == k) {
      out[prefix] = work[depth].sum();
      return;
    }
    for (int a = 0; a < 2; ++a) {
      push_symbol(src, work[depth], a, work[depth + 1]);
      rec(depth + 1, (prefix << 1) | static_cast<std::uint32_t>(a));
    }
  };
  rec(0, 0);
  return out;
}

EntropyRateReport entropy_rate(const HiddenMarkovSource& src, int max_block) {
  if (max_block < 1 || max_block > 19)
    throw std::invalid_argument("max_block must lie in [1, 19]");
  EntropyRateReport rep;
  rep.unifilar = is_unifilar(src);
  rep.closed_form_bits = std::numeric_limits<double>::quiet_NaN();
  if (rep.unifilar) {
    double h = 0.0;
    for (int s = 0; s < src.num_states(); ++s) {
      double hs = 0.0;
      for (const auto& e : src.edges_from[s])
        if (e.prob > 0.0) hs -= e.prob * std::log2(e.prob);
      h += src.stationary(s) * hs;
    }
    rep.closed_form_bits = h;
  }
  // Block entropies from the deepest marginal, marginalizing the last symbol
  // so successive levels are exactly consistent.
  Eigen::ArrayXd blocks = block_distribution(src, max_block + 1);
  auto entropy = [](const Eigen::ArrayXd& p) {
    double h = 0.0;
    for (double v : p)
      if (v > 0.0) h -= v * std::log2(v);
    return h;
  };
  std::vector<double> block_entropy(static_cast<std::size_t>(max_block) + 2, 0.0);
  for (int k = max_block + 1; k >= 1; --k) {
    block_entropy[static_cast<std::size_t>(k)] = entropy(blocks);
    if (k > 1) {
      Eigen::ArrayXd down(blocks.size() / 2);
      for (Eigen::Index w = 0; w < down.size(); ++w) down[w] = blocks[2 * w] + blocks[2 * w + 1];
      blocks.swap(down);
    }
  }
  rep.block_rates_bits.resize(max_block);
  for (int k = 1; k <= max_block; ++k)
    rep.block_rates_bits[k - 1] = block_entropy[static_cast<std::size_t>(k) + 1] -
                                  block_entropy[static_cast<std::size_t>(k)];
  return rep;
}

double source_entropy_rate_bits(const HiddenMarkovSource& src) {
  EntropyRateReport rep = entropy_rate(src);
  return rep.unifilar ? rep.closed_form_bits
                      : rep.block_rates_bits[rep.block_rates_bits.size() - 1];
}

}  // namespace postdyn
