#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace postdyn {

// Distance conventions used throughout the outputs:
//   hellinger_sq(P,Q) = sum_a (sqrt P(a) - sqrt Q(a))^2          (max 2)
//   total_variation(P,Q) = sum_a |P(a) - Q(a)|                   (max 2)
//   kl in bits or nats, with 0 log 0 = 0.
// Under these, total_variation <= 2 sqrt(hellinger_sq) and
// hellinger_sq <= kl_nats.

template <class P, class Q>
double hellinger_sq(const Eigen::ArrayBase<P>& p, const Eigen::ArrayBase<Q>& q) {
  return (p.sqrt() - q.sqrt()).square().sum();
}

template <class P, class Q>
double total_variation(const Eigen::ArrayBase<P>& p, const Eigen::ArrayBase<Q>& q) {
  return (p - q).abs().sum();
}

template <class P, class Q>
double kl_nats(const Eigen::ArrayBase<P>& p, const Eigen::ArrayBase<Q>& q) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    d += p[i] * std::log(p[i] / q[i]);
  }
  return d;
}

template <class P, class Q>
double kl_bits(const Eigen::ArrayBase<P>& p, const Eigen::ArrayBase<Q>& q) {
  return kl_nats(p, q) / std::numbers::ln2;
}

inline double hellinger_sq2(const Eigen::Vector2d& p, const Eigen::Vector2d& q) {
  return hellinger_sq(p.array(), q.array());
}
inline double total_variation2(const Eigen::Vector2d& p, const Eigen::Vector2d& q) {
  return total_variation(p.array(), q.array());
}
inline double kl_nats2(const Eigen::Vector2d& p, const Eigen::Vector2d& q) {
  return kl_nats(p.array(), q.array());
}
inline double kl_bits2(const Eigen::Vector2d& p, const Eigen::Vector2d& q) {
  return kl_bits(p.array(), q.array());
}

// One-step decomposition of the mixture's divergence from the truth:
//   KL(truth || mixture) = <KL(truth || member)> - diversity,
// where diversity = <E_truth log2 (mixture / member)> >= 0. All terms are
// exact sums over the binary alphabet; residual is the identity defect.
struct DiversityTerms {
  double kl_mix_bits = 0.0;
  double mean_member_kl_bits = 0.0;
  double diversity_bits = 0.0;
  double residual = 0.0;
};

inline DiversityTerms diversity_decomposition(const Eigen::Vector2d& truth,
                                              const std::vector<Eigen::Vector2d>& members,
                                              const Eigen::ArrayXd& weights) {
  Eigen::Vector2d mix = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < members.size(); ++i)
    mix += weights[static_cast<Eigen::Index>(i)] * members[i];
  DiversityTerms out;
  out.kl_mix_bits = kl_bits2(truth, mix);
  for (std::size_t i = 0; i < members.size(); ++i) {
    const double w = weights[static_cast<Eigen::Index>(i)];
    out.mean_member_kl_bits += w * kl_bits2(truth, members[i]);
    // E_truth log2(mix/member): finite because members are strictly positive.
    double term = 0.0;
    for (int a = 0; a < 2; ++a)
      if (truth(a) > 0.0) term += truth(a) * std::log2(mix(a) / members[i](a));
    out.diversity_bits += w * term;
  }
  out.residual = out.kl_mix_bits - (out.mean_member_kl_bits - out.diversity_bits);
  return out;
}

}  // namespace postdyn
