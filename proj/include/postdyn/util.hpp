#pragma once

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace postdyn {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Raised when a query conditions on a prefix the source assigns probability 0.
struct ImpossiblePrefix : std::runtime_error {
  explicit ImpossiblePrefix(const std::string& what)
      : std::runtime_error("impossible prefix: " + what) {}
};

// Line-anchored error for text inputs (source specs, hypothesis tables,
// experiment configuration).
struct ParseError : std::runtime_error {
  ParseError(const std::string& file, int line, const std::string& msg)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + msg) {}
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent RNG stream for (master seed, stream index). Streams are what
// make replicate/member sampling order-independent and reproducible.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master ^ 0x6a09e667f3bcc909ULL) + stream);
}

// Uniform in [0,1) from the top 53 bits of the generator. Hand-rolled so the
// stream does not depend on the standard library's distribution internals.
template <class Rng>
double unit_uniform(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// log2(sum_i 2^{v[i]}) with one max shift; -inf entries are skipped.
// Summation order is fixed (index order), so results are reproducible.
inline double log2_sum_exp2(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v)
    if (x > m) m = x;
  if (!(m > kNegInf)) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp2(x - m);
  return m + std::log2(s);
}

// Runs fn(begin, end) over fixed-size chunks of [0, n). Chunk boundaries
// depend only on n and chunk_size, never on the worker count, so writes into
// disjoint per-index slots give identical results on any machine.
inline void parallel_chunks(std::size_t n, std::size_t chunk_size,
                            const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  if (chunk_size == 0) chunk_size = 1;
  const std::size_t nchunks = (n + chunk_size - 1) / chunk_size;
  unsigned hw = std::thread::hardware_concurrency();
  unsigned nthreads = static_cast<unsigned>(std::min<std::size_t>(hw ? hw : 1, nchunks));
  if (nthreads <= 1) {
    for (std::size_t c = 0; c < nchunks; ++c)
      fn(c * chunk_size, std::min(n, (c + 1) * chunk_size));
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c; (c = next.fetch_add(1)) < nchunks;)
      fn(c * chunk_size, std::min(n, (c + 1) * chunk_size));
  };
  std::vector<std::thread> pool;
  pool.reserve(nthreads - 1);
  for (unsigned i = 0; i + 1 < nthreads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

// Shortest round-trip decimal representation, locale independent.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace postdyn
