#pragma once

// Test-only oracles, kept independent of the library code paths they check.

#include <Eigen/Dense>

#include "postdyn/source.hpp"

namespace oracles {

using namespace postdyn;

// Path probability via raw transfer-matrix products pi^T M_{x1}...M_{xt} 1.
// No per-step renormalization, so it exercises none of the belief machinery.
inline double transfer_matrix_prob(const HiddenMarkovSource& src, PathView x) {
  const int n = src.num_states();
  Eigen::MatrixXd m[2] = {Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
  for (const auto& es : src.edges_from)
    for (const auto& e : es) m[e.symbol](e.from, e.to) += e.prob;
  Eigen::RowVectorXd v = src.stationary.transpose();
  for (std::uint8_t a : x) v = v * m[a];
  return v.sum();
}

// True iff x contains a maximal 1-block of odd length bounded by 0s on both
// sides (the forbidden words of the even process).
inline bool has_bounded_odd_one_block(PathView x) {
  const std::size_t n = x.size();
  std::size_t i = 0;
  while (i < n) {
    if (x[i] == 1) {
      std::size_t j = i;
      while (j < n && x[j] == 1) ++j;
      if (i > 0 && j < n && (j - i) % 2 == 1) return true;
      i = j;
    } else {
      ++i;
    }
  }
  return false;
}

// The length-t word encoded by `code` with the first symbol in the top bit.
inline Path bits_path(unsigned long code, int t) {
  Path x(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) x[static_cast<std::size_t>(i)] = (code >> (t - 1 - i)) & 1u;
  return x;
}

}  // namespace oracles
