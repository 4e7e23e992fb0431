#include "postdyn/sieve.hpp"

#include <cmath>
#include <random>

namespace postdyn {

int SieveSchedule::order_cutoff(long t) const {
  if (t < 1) return -1;
  return static_cast<int>(std::floor(std::log2(static_cast<double>(t)) / (h_p + epsilon))) - 1;
}

double SieveSchedule::z_cutoff(long t) const {
  if (t < 1) return 0.0;
  return growth_c * std::pow(static_cast<double>(t), gamma);
}

double SieveSchedule::tail_bound(long t) const {
  return tail_alpha * std::exp2(-tail_beta * static_cast<double>(t));
}

SieveSchedule SieveSchedule::make_default(double h_p_bits) {
  SieveSchedule s;
  s.h_p = h_p_bits;
  s.gamma = 0.8 * s.gamma_max();
  s.validate();
  return s;
}

void SieveSchedule::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("sieve epsilon must be positive");
  if (!(growth_c > 0.0)) throw std::invalid_argument("sieve C must be positive");
  if (!(h_p > 0.0)) throw std::invalid_argument("sieve h_p must be positive");
  if (!(gamma > 0.0) || !(gamma < gamma_max()))
    throw std::invalid_argument("sieve gamma must lie in (0, (h_p+eps/2)/(h_p+eps))");
  if (!(tail_alpha > 0.0) || !(tail_beta > 0.0))
    throw std::invalid_argument("sieve tail targets must be positive");
}

bool sieve_membership(const MarkovHypothesis& theta, long t, const SieveSchedule& sched) {
  return theta.order <= sched.order_cutoff(t) - 1 && z_max_log2(theta) <= sched.z_cutoff(t);
}

EmpiricalBlockDist empirical_block_dist(PathView x, int k) {
  if (k < 1 || k > 20) throw std::invalid_argument("block length must lie in [1, 20]");
  const long t = static_cast<long>(x.size());
  if (t < k) throw std::invalid_argument("path shorter than the block length");
  EmpiricalBlockDist d;
  d.k = k;
  d.total = t - k + 1;
  d.counts = Eigen::ArrayXd::Zero(Eigen::Index{1} << k);
  const std::uint32_t mask = (1u << k) - 1u;
  std::uint32_t window = 0;
  for (long n = 0; n < t; ++n) {
    window = ((window << 1) | x[static_cast<std::size_t>(n)]) & mask;
    if (n >= k - 1) d.counts[window] += 1.0;
  }
  return d;
}

namespace {

struct Fit {
  double slope = 0.0;
  double r2 = 0.0;
};

Fit linear_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  Fit f;
  const std::size_t n = xs.size();
  if (n < 2) return f;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx <= 0) return f;
  f.slope = sxy / sxx;
  f.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

struct TailFits {
  double exp_rate = 0.0, exp_r2 = 0.0, poly_r2 = 0.0;
  bool met = false;
};

TailFits fit_tail(const std::vector<long>& ts, const std::vector<double>& tail, double beta) {
  std::vector<double> t_lin, t_log, y;
  for (std::size_t i = 0; i < ts.size(); ++i)
    if (tail[i] > 0.0) {
      t_lin.push_back(static_cast<double>(ts[i]));
      t_log.push_back(std::log2(static_cast<double>(ts[i])));
      y.push_back(std::log2(tail[i]));
    }
  TailFits out;
  if (y.empty()) {
    // Tail identically zero on the probed grid: any exponential target holds.
    out.exp_rate = std::numeric_limits<double>::infinity();
    out.exp_r2 = 1.0;
    out.met = true;
    return out;
  }
  if (y.size() < 3) return out;  // too few points to classify
  const Fit e = linear_fit(t_lin, y);
  const Fit p = linear_fit(t_log, y);
  out.exp_rate = -e.slope;
  out.exp_r2 = e.r2;
  out.poly_r2 = p.r2;
  out.met = e.r2 >= p.r2 && out.exp_rate >= beta;
  return out;
}

}  // namespace

PriorTailReport prior_tail_mass(const PriorSpec& prior, const SieveSchedule& sched, long t_max,
                                int mc_samples, std::uint64_t seed) {
  if (mc_samples < 1000) throw std::invalid_argument("prior_tail_mass needs at least 10^3 samples");
  if (t_max < 16) throw std::invalid_argument("prior_tail_mass needs t_max >= 16");
  PriorTailReport rep;
  for (long t = 16; t <= t_max; t *= 2) rep.ts.push_back(t);
  if (rep.ts.back() != t_max) rep.ts.push_back(t_max);

  // One shared sample of (order, z) pairs; probabilities suffice, the context
  // stationary law is irrelevant for z.
  std::vector<int> orders(static_cast<std::size_t>(mc_samples));
  std::vector<double> zs(static_cast<std::size_t>(mc_samples));
  for (int i = 0; i < mc_samples; ++i) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    double u = unit_uniform(rng), acc = 0.0;
    int k = prior.max_order();
    for (int j = 0; j <= prior.max_order(); ++j) {
      acc += prior.order_weights[j];
      if (u < acc) {
        k = j;
        break;
      }
    }
    std::gamma_distribution<double> gamma(prior.row_concentration, 1.0);
    double minp = 1.0;
    for (Eigen::Index c = 0; c < (Eigen::Index{1} << k); ++c) {
      const double g1 = gamma(rng), g2 = gamma(rng);
      double p1 = g1 + g2 > 0.0 ? g1 / (g1 + g2) : 0.5;
      p1 = std::min(std::max(p1, 1e-12), 1.0 - 1e-12);
      minp = std::min(minp, std::min(p1, 1.0 - p1));
    }
    orders[static_cast<std::size_t>(i)] = k;
    zs[static_cast<std::size_t>(i)] = -std::log2(minp);
  }

  for (long t : rep.ts) {
    const int kt = sched.order_cutoff(t);
    double order_tail = 0.0;
    for (int k = 0; k <= prior.max_order(); ++k)
      if (k >= kt) order_tail += prior.order_weights[k];
    const double zt = sched.z_cutoff(t);
    long viol = 0;
    for (int i = 0; i < mc_samples; ++i)
      if (orders[static_cast<std::size_t>(i)] < kt && zs[static_cast<std::size_t>(i)] > zt)
        ++viol;
    const double z_tail = static_cast<double>(viol) / static_cast<double>(mc_samples);
    rep.order_tail.push_back(order_tail);
    rep.z_tail.push_back(z_tail);
    rep.total_tail.push_back(order_tail + z_tail);
    rep.bound.push_back(sched.tail_bound(t));
  }

  const TailFits of = fit_tail(rep.ts, rep.order_tail, sched.tail_beta);
  rep.order_exp_rate = of.exp_rate;
  rep.order_exp_r2 = of.exp_r2;
  rep.order_poly_r2 = of.poly_r2;
  rep.order_exponential_target_met = of.met;
  const TailFits tf = fit_tail(rep.ts, rep.total_tail, sched.tail_beta);
  rep.total_exp_rate = tf.exp_rate;
  rep.total_exp_r2 = tf.exp_r2;
  rep.total_poly_r2 = tf.poly_r2;
  rep.total_exponential_target_met = tf.met;
  return rep;
}

Eigen::ArrayXd set_log2_ratio_rate(const Eigen::MatrixXd& lw, std::span<const long> grid,
                                   const Eigen::ArrayXd& logp, std::span<const int> subset,
                                   int m_total) {
  if (subset.empty()) throw std::invalid_argument("subset must be nonempty");
  const Eigen::Index g = lw.rows();
  Eigen::ArrayXd out(g);
  std::vector<double> sel(subset.size());
  for (Eigen::Index j = 0; j < g; ++j) {
    for (std::size_t i = 0; i < subset.size(); ++i) sel[i] = lw(j, subset[i]);
    const double num =
        log2_sum_exp2(sel) - std::log2(static_cast<double>(m_total)) - logp[j];
    out[j] = num / static_cast<double>(grid[static_cast<std::size_t>(j)]);
  }
  return out;
}

long last_entry_time(const Eigen::ArrayXd& s, std::span<const long> grid, double delta) {
  if (s.size() != static_cast<Eigen::Index>(grid.size()))
    throw std::invalid_argument("series and grid lengths differ");
  if (s.size() == 0) return 0;
  const double limit = s[s.size() - 1];
  long tau = 0;
  for (Eigen::Index j = 0; j < s.size(); ++j)
    if (s[j] > limit + delta) tau = grid[static_cast<std::size_t>(j)];
  return tau;
}

Eigen::ArrayXd uniform_convergence_profile(const Eigen::MatrixXd& lw, std::span<const long> grid,
                                           const Eigen::ArrayXd& logp,
                                           const Eigen::ArrayXd& member_h,
                                           std::span<const int> subset) {
  if (subset.empty()) throw std::invalid_argument("uniform convergence profile over an empty set");
  const Eigen::Index g = lw.rows();
  Eigen::ArrayXd out(g);
  for (Eigen::Index j = 0; j < g; ++j) {
    const double t = static_cast<double>(grid[static_cast<std::size_t>(j)]);
    double d = 0.0;
    for (int i : subset) {
      const double rate = (lw(j, i) - logp[j]) / t;
      d = std::max(d, std::abs(rate + member_h[i]));
    }
    out[j] = d;
  }
  return out;
}

}  // namespace postdyn
