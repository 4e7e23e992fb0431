#include "postdyn/markov.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace postdyn {

namespace {

Eigen::ArrayXd context_stationary(int k, const Eigen::ArrayXd& next) {
  const Eigen::Index n = Eigen::Index{1} << k;
  if (k == 0) return Eigen::ArrayXd::Ones(1);
  const std::uint32_t mask = static_cast<std::uint32_t>(n - 1);
  Eigen::ArrayXd v = Eigen::ArrayXd::Constant(n, 1.0 / static_cast<double>(n));
  Eigen::ArrayXd w(n);
  auto sweep = [&](const Eigen::ArrayXd& in, Eigen::ArrayXd& out) {
    out.setZero();
    for (Eigen::Index c = 0; c < n; ++c) {
      const std::uint32_t shifted = (static_cast<std::uint32_t>(c) << 1) & mask;
      out[shifted] += in[c] * next[c * 2];
      out[shifted | 1u] += in[c] * next[c * 2 + 1];
    }
  };
  bool converged = false;
  for (int iter = 0; iter < 20000; ++iter) {
    sweep(v, w);
    const double diff = (w - v).abs().maxCoeff();
    v.swap(w);
    if (diff < 1e-15) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    // Slowly mixing rows (e.g. probabilities floored near 0/1): dense solve.
    if (k > 12) throw std::runtime_error("stationary context law did not converge for order > 12");
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index c = 0; c < n; ++c) {
      const std::uint32_t shifted = (static_cast<std::uint32_t>(c) << 1) & mask;
      A(shifted, c) += next[c * 2];
      A(shifted | 1u, c) += next[c * 2 + 1];
    }
    A -= Eigen::MatrixXd::Identity(n, n);
    A.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(n - 1) = 1.0;
    Eigen::VectorXd pi = A.fullPivLu().solve(b);
    v = pi.array().max(0.0);
    v /= v.sum();
  }
  v /= v.sum();
  sweep(v, w);
  if ((w - v).abs().maxCoeff() > 1e-12)
    throw std::runtime_error("stationary context law fails the invariance check");
  return v;
}

}  // namespace

MarkovHypothesis make_markov(int order, Eigen::ArrayXd next_probs) {
  if (order < 0 || order > 20) throw std::invalid_argument("order must lie in [0, 20]");
  const Eigen::Index expected = Eigen::Index{2} << order;
  if (next_probs.size() != expected)
    throw std::invalid_argument("next_probs must have 2^{order+1} entries");
  for (Eigen::Index i = 0; i < next_probs.size(); ++i)
    if (!(next_probs[i] > 0.0) || !(next_probs[i] < 1.0))
      throw std::invalid_argument("transition probabilities must lie strictly inside (0, 1)");
  for (Eigen::Index c = 0; c < expected / 2; ++c)
    if (std::abs(next_probs[2 * c] + next_probs[2 * c + 1] - 1.0) > 1e-12)
      throw std::invalid_argument("context row " + std::to_string(c) + " does not sum to 1");
  MarkovHypothesis theta;
  theta.order = order;
  theta.next_probs = std::move(next_probs);
  theta.stationary_ctx = context_stationary(order, theta.next_probs);
  return theta;
}

MarkovHypothesis fair_coin() { return iid_coin(0.5); }

MarkovHypothesis iid_coin(double p1) {
  Eigen::ArrayXd next(2);
  next << 1.0 - p1, p1;
  return make_markov(0, next);
}

double prefix_log2_marginal(const MarkovHypothesis& theta, PathView x) {
  const int k = theta.order;
  const int m = static_cast<int>(x.size());
  if (m > k) throw std::invalid_argument("prefix longer than the order");
  if (m == 0) return 0.0;
  std::uint32_t code = 0;
  for (std::uint8_t a : x) code = (code << 1) | a;
  const Eigen::Index lo = static_cast<Eigen::Index>(code) << (k - m);
  const Eigen::Index len = Eigen::Index{1} << (k - m);
  return std::log2(theta.stationary_ctx.segment(lo, len).sum());
}

double hypothesis_log2_likelihood(const MarkovHypothesis& theta, PathView x) {
  const int k = theta.order;
  const long t = static_cast<long>(x.size());
  if (t <= k) return prefix_log2_marginal(theta, x);
  std::uint32_t ctx = 0;
  for (int i = 0; i < k; ++i) ctx = (ctx << 1) | x[static_cast<std::size_t>(i)];
  double lw = k == 0 ? 0.0 : std::log2(theta.stationary_ctx[ctx]);
  const std::uint32_t mask = theta.context_mask();
  for (long n = k; n < t; ++n) {
    const std::uint32_t a = x[static_cast<std::size_t>(n)];
    lw += std::log2(theta.next_probs[ctx * 2 + a]);
    ctx = ((ctx << 1) | a) & mask;
  }
  return lw;
}

double z_max_log2(const MarkovHypothesis& theta) { return -std::log2(theta.next_probs.minCoeff()); }

double divergence_h_bits(const MarkovHypothesis& theta, const Eigen::ArrayXd& source_blocks,
                         double source_entropy_bits) {
  if (source_blocks.size() != theta.next_probs.size())
    throw std::invalid_argument("block distribution length must be 2^{order+1}");
  double cross = 0.0;
  for (Eigen::Index i = 0; i < source_blocks.size(); ++i)
    if (source_blocks[i] > 0.0) cross -= source_blocks[i] * std::log2(theta.next_probs[i]);
  return cross - source_entropy_bits;
}

DivergenceReport divergence_rate(const MarkovHypothesis& theta, const HiddenMarkovSource& src,
                                 double h_ref_bits, long mc_length, std::uint64_t mc_seed) {
  if (theta.order + 1 > 20)
    throw std::invalid_argument(
        "order too large for exact block enumeration; use the Monte Carlo estimator "
        "(aep_estimate) instead");
  DivergenceReport rep;
  const Eigen::ArrayXd blocks = block_distribution(src, theta.order + 1);
  rep.h_bits = divergence_h_bits(theta, blocks, source_entropy_rate_bits(src));
  rep.j_bits = rep.h_bits - h_ref_bits;
  rep.z_bits = z_max_log2(theta);
  if (mc_length > 0) {
    rep.mc_estimate = aep_estimate(theta, src, mc_length, mc_seed);
    rep.mc_path_length = mc_length;
  }
  return rep;
}

double aep_estimate(const MarkovHypothesis& theta, const HiddenMarkovSource& src, long t,
                    std::uint64_t seed) {
  if (t < 1) throw std::invalid_argument("aep_estimate needs t >= 1");
  const Path x = sample_path(src, t, seed);
  return -(hypothesis_log2_likelihood(theta, x) - path_log2_prob(src, x)) /
         static_cast<double>(t);
}

MarkovHypothesis optimal_in_order(int k, const HiddenMarkovSource& src, double eta) {
  if (k < 0 || k > 10) throw std::invalid_argument("optimal_in_order supports k in [0, 10]");
  if (!(eta > 0.0) || eta >= 0.5) throw std::invalid_argument("eta must lie in (0, 0.5)");
  const Eigen::ArrayXd blocks = block_distribution(src, k + 1);
  Eigen::ArrayXd next(blocks.size());
  for (Eigen::Index c = 0; c < blocks.size() / 2; ++c) {
    const double w0 = blocks[2 * c], w1 = blocks[2 * c + 1];
    const double tot = w0 + w1;
    double p1 = tot > 0.0 ? w1 / tot : 0.5;
    p1 = std::min(std::max(p1, eta), 1.0 - eta);
    next[2 * c] = 1.0 - p1;
    next[2 * c + 1] = p1;
  }
  return make_markov(k, next);
}

void save_hypothesis(std::ostream& out, const MarkovHypothesis& theta) {
  out << "order " << theta.order << "\n";
  const Eigen::Index rows = Eigen::Index{1} << theta.order;
  for (Eigen::Index c = 0; c < rows; ++c) {
    if (theta.order == 0) {
      out << "-";
    } else {
      for (int b = theta.order - 1; b >= 0; --b) out << ((c >> b) & 1);
    }
    out << " " << format_double(theta.next_probs[2 * c]) << " "
        << format_double(theta.next_probs[2 * c + 1]) << "\n";
  }
}

MarkovHypothesis load_hypothesis(std::istream& in, const std::string& filename) {
  std::string line;
  int lineno = 0;
  int order = -1;
  Eigen::ArrayXd next;
  std::vector<char> seen;
  Eigen::Index filled = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (order < 0) {
      int k;
      if (first != "order" || !(ls >> k) || k < 0 || k > 20)
        throw ParseError(filename, lineno, "expected header: order K (0 <= K <= 20)");
      order = k;
      next.resize(Eigen::Index{2} << order);
      seen.assign(std::size_t{1} << order, 0);
      continue;
    }
    double p0, p1;
    if (!(ls >> p0 >> p1)) throw ParseError(filename, lineno, "expected: CONTEXT P0 P1");
    std::uint32_t ctx = 0;
    if (order == 0) {
      if (first != "-") throw ParseError(filename, lineno, "order-0 context must be '-'");
    } else {
      if (static_cast<int>(first.size()) != order)
        throw ParseError(filename, lineno, "context length must equal the order");
      for (char ch : first) {
        if (ch != '0' && ch != '1') throw ParseError(filename, lineno, "context must be binary");
        ctx = (ctx << 1) | static_cast<std::uint32_t>(ch - '0');
      }
    }
    if (seen[ctx]) throw ParseError(filename, lineno, "duplicate context row");
    seen[ctx] = 1;
    next[ctx * 2] = p0;
    next[ctx * 2 + 1] = p1;
    ++filled;
  }
  if (order < 0) throw ParseError(filename, lineno, "missing 'order' header");
  if (filled != (Eigen::Index{1} << order))
    throw ParseError(filename, lineno, "expected one row per context");
  try {
    return make_markov(order, std::move(next));
  } catch (const std::exception& ex) {
    throw ParseError(filename, lineno, ex.what());
  }
}

MarkovHypothesis load_hypothesis_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open hypothesis file: " + path);
  return load_hypothesis(in, path);
}

}  // namespace postdyn
