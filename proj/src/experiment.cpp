#include "postdyn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>

#include "postdyn/csv.hpp"

namespace postdyn {

namespace fs = std::filesystem;

std::vector<long> default_grid(long t_final) {
  std::set<long> pts;
  for (long d = 8; d <= t_final; d *= 2) pts.insert(d);
  for (int j = 8;; ++j) {
    const long v = std::lround(std::pow(10.0, j / 8.0));
    if (v > t_final) break;
    pts.insert(v);
  }
  pts.insert(t_final);
  return {pts.begin(), pts.end()};
}

WeightField compute_weight_field(const HiddenMarkovSource& src,
                                 const std::vector<MarkovHypothesis>& members, PathView path,
                                 std::span<const long> grid, bool parallel) {
  const std::size_t m = members.size();
  const std::size_t g = grid.size();
  if (m == 0) throw std::invalid_argument("weight field needs at least one member");
  for (std::size_t j = 0; j < g; ++j)
    if (grid[j] < 1 || grid[j] > static_cast<long>(path.size()) ||
        (j > 0 && grid[j] <= grid[j - 1]))
      throw std::invalid_argument("grid must be strictly increasing within [1, |path|]");

  WeightField f;
  f.grid.assign(grid.begin(), grid.end());
  f.lw.resize(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(m));

  // Flattened log2 transition tables.
  std::vector<std::size_t> offset(m + 1, 0);
  for (std::size_t i = 0; i < m; ++i)
    offset[i + 1] = offset[i] + static_cast<std::size_t>(members[i].next_probs.size());
  std::vector<double> ltbl(offset[m]);
  for (std::size_t i = 0; i < m; ++i)
    for (Eigen::Index e = 0; e < members[i].next_probs.size(); ++e)
      ltbl[offset[i] + static_cast<std::size_t>(e)] = std::log2(members[i].next_probs[e]);

  auto walk = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const MarkovHypothesis& th = members[i];
      const double* tbl = ltbl.data() + offset[i];
      const int k = th.order;
      const std::uint64_t mask = th.context_mask();
      std::uint64_t hist = 0;
      double lw = 0.0;
      std::size_t gi = 0;
      const long t_end = f.grid.back();
      for (long n = 0; n < t_end; ++n) {
        const std::uint32_t a = path[static_cast<std::size_t>(n)];
        if (n < k)
          lw = prefix_log2_marginal(th, path.first(static_cast<std::size_t>(n) + 1));
        else
          lw += tbl[((hist & mask) << 1) | a];
        hist = (hist << 1) | a;
        if (n + 1 == f.grid[gi]) {
          f.lw(static_cast<Eigen::Index>(gi), static_cast<Eigen::Index>(i)) = lw;
          if (++gi == g) break;
        }
      }
    }
  };
  if (parallel)
    parallel_chunks(m, 256, walk);
  else
    walk(0, m);

  // Source log2 prefix probabilities at the checkpoints.
  f.logp.resize(static_cast<Eigen::Index>(g));
  {
    Eigen::VectorXd alpha = src.stationary, next(src.num_states());
    double lp = 0.0;
    std::size_t gi = 0;
    for (long n = 0; n < f.grid.back() && gi < g; ++n) {
      next.setZero();
      const std::uint32_t a = path[static_cast<std::size_t>(n)];
      for (const auto& es : src.edges_from)
        for (const auto& e : es)
          if (static_cast<std::uint32_t>(e.symbol) == a) next(e.to) += alpha(e.from) * e.prob;
      const double p = next.sum();
      if (!(p > 0.0)) throw std::logic_error("sampled path became impossible under its source");
      lp += std::log2(p);
      alpha = next / p;
      if (n + 1 == f.grid[gi]) f.logp[static_cast<Eigen::Index>(gi++)] = lp;
    }
  }

  // Per-member divergence statistics; block laws cached per order.
  const double h_p = source_entropy_rate_bits(src);
  std::map<int, Eigen::ArrayXd> blocks;
  f.member_h.resize(static_cast<Eigen::Index>(m));
  f.member_z.resize(static_cast<Eigen::Index>(m));
  f.member_order.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const int k = members[i].order;
    auto it = blocks.find(k + 1);
    if (it == blocks.end()) it = blocks.emplace(k + 1, block_distribution(src, k + 1)).first;
    f.member_h[static_cast<Eigen::Index>(i)] = divergence_h_bits(members[i], it->second, h_p);
    f.member_z[static_cast<Eigen::Index>(i)] = z_max_log2(members[i]);
    f.member_order[i] = k;
  }
  f.h_min = f.member_h.minCoeff();

  f.logz.resize(static_cast<Eigen::Index>(g));
  std::vector<double> rowbuf(m);
  for (std::size_t j = 0; j < g; ++j) {
    for (std::size_t i = 0; i < m; ++i)
      rowbuf[i] = f.lw(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
    f.logz[static_cast<Eigen::Index>(j)] = log2_sum_exp2(rowbuf);
  }
  return f;
}

RunContext make_run_context(const ExperimentConfig& cfg) {
  RunContext ctx;
  ctx.source = cfg.source == "even" ? build_even_process() : load_source_file(cfg.source);
  ctx.h_p = source_entropy_rate_bits(ctx.source);
  ctx.cfg = cfg;
  ctx.dir = cfg.out_dir;
  fs::create_directories(ctx.dir);
  return ctx;
}

namespace {

struct Fit {
  double slope = 0.0;
  double r2 = 0.0;
  int points = 0;
};

Fit linear_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  Fit f;
  f.points = static_cast<int>(xs.size());
  if (xs.size() < 2) return f;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx <= 0) return f;
  f.slope = sxy / sxx;
  f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

CheckResult check(std::string name, bool pass, bool gating, std::string detail) {
  return {std::move(name), pass ? "PASS" : (gating ? "FAIL" : "REVIEW"), std::move(detail),
          gating};
}

std::string frac(int num, int den) { return std::to_string(num) + "/" + std::to_string(den); }

int seeds_required(int replicates, double fraction) {
  return static_cast<int>(std::ceil(fraction * replicates - 1e-9));
}

std::uint64_t replicate_seed(const ExperimentConfig& cfg, int r) {
  return derive_seed(cfg.seed, static_cast<std::uint64_t>(r));
}

// Dyadic checkpoints (plus the horizon) used for trend checks.
std::vector<std::size_t> dyadic_indices(const std::vector<long>& grid) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const long t = grid[j];
    if ((t & (t - 1)) == 0 || j + 1 == grid.size()) idx.push_back(j);
  }
  return idx;
}

double log2_mass(const WeightField& f, Eigen::Index g, const std::vector<std::uint8_t>& ind) {
  std::vector<double> sel;
  for (int i = 0; i < f.members(); ++i)
    if (ind[static_cast<std::size_t>(i)]) sel.push_back(f.lw(g, i));
  if (sel.empty()) return kNegInf;
  return log2_sum_exp2(sel) - f.logz[g];
}

}  // namespace

// ---------------------------------------------------------------------------
// Theorems 1-2: growth rate of the posterior density ratio at probe points.

ProtocolResult run_density_growth(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  const long t_final = cfg.path_length;
  const int reps = cfg.replicates;
  const std::vector<long> grid = default_grid(t_final);
  const PriorSpec prior = cfg.prior_spec(ctx.h_p);

  const double tol_final = cfg.tolerance("density_final", 0.05);
  const double tol_upper = cfg.tolerance("density_upper", 0.05);
  const double tol_best = cfg.tolerance("density_best_member", 0.02);
  const long upper_t_min = static_cast<long>(cfg.tolerance("density_upper_t_min", 1000));
  const double seed_fraction = cfg.tolerance("seed_fraction", 0.9);

  const std::vector<std::string> probe_names = {"fair-coin", "optimal-0", "optimal-1",
                                                "optimal-2", "best-member"};
  struct Rep {
    double h_min = 0.0;
    Eigen::MatrixXd rate, ref;  // probe x grid
    bool fair_ok = false, best_ok = false;
    int upper_violations = 0;
  };
  std::vector<Rep> reps_data(static_cast<std::size_t>(reps));

  parallel_chunks(static_cast<std::size_t>(reps), 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r) {
      const std::uint64_t rs = replicate_seed(cfg, static_cast<int>(r));
      const Path path = sample_path(ctx.source, t_final, derive_seed(rs, 1));
      EnsemblePosterior ens =
          draw_prior_ensemble(prior, cfg.ensemble_size, derive_seed(rs, 2));
      const WeightField f = compute_weight_field(ctx.source, ens.members, path, grid, false);

      std::vector<MarkovHypothesis> probes = {fair_coin(), optimal_in_order(0, ctx.source),
                                              optimal_in_order(1, ctx.source),
                                              optimal_in_order(2, ctx.source)};
      Eigen::Index ibest = 0;
      f.member_h.minCoeff(&ibest);
      probes.push_back(ens.members[static_cast<std::size_t>(ibest)]);
      const WeightField pf = compute_weight_field(ctx.source, probes, path, grid, false);

      Rep& out = reps_data[r];
      out.h_min = f.h_min;
      const Eigen::Index np = static_cast<Eigen::Index>(probes.size());
      const Eigen::Index ng = static_cast<Eigen::Index>(grid.size());
      out.rate.resize(np, ng);
      out.ref.resize(np, ng);
      for (Eigen::Index p = 0; p < np; ++p)
        for (Eigen::Index g = 0; g < ng; ++g) {
          const double t = static_cast<double>(grid[static_cast<std::size_t>(g)]);
          out.rate(p, g) =
              (pf.lw(g, p) - (f.logz[g] - std::log2(static_cast<double>(f.members())))) / t;
          out.ref(p, g) = -(pf.member_h[p] - f.h_min);
          if (grid[static_cast<std::size_t>(g)] >= upper_t_min &&
              out.rate(p, g) > out.ref(p, g) + tol_upper)
            ++out.upper_violations;
        }
      out.fair_ok = std::abs(out.rate(0, ng - 1) - out.ref(0, ng - 1)) <= tol_final;
      out.best_ok = std::abs(out.rate(np - 1, ng - 1)) <= tol_best;
    }
  });

  CsvWriter csv((ctx.dir / "density.csv").string(),
                {"seed", "probe", "t", "rate_bits", "ref_bits", "h_min_bits", "gap_bits",
                 "ref_provenance", "upper_ok"});
  for (int r = 0; r < reps; ++r) {
    const Rep& d = reps_data[static_cast<std::size_t>(r)];
    for (Eigen::Index p = 0; p < d.rate.rows(); ++p)
      for (Eigen::Index g = 0; g < d.rate.cols(); ++g) {
        const bool upper_ok = !(grid[static_cast<std::size_t>(g)] >= upper_t_min &&
                                d.rate(p, g) > d.ref(p, g) + tol_upper);
        csv.row({CsvWriter::num(r), probe_names[static_cast<std::size_t>(p)],
                 CsvWriter::num(grid[static_cast<std::size_t>(g)]), CsvWriter::num(d.rate(p, g)),
                 CsvWriter::num(d.ref(p, g)), CsvWriter::num(d.h_min),
                 CsvWriter::num(d.rate(p, g) - d.ref(p, g)), "closed-form",
                 CsvWriter::flag(upper_ok)});
      }
  }

  int fair_pass = 0, best_pass = 0, total_viol = 0;
  for (const Rep& d : reps_data) {
    fair_pass += d.fair_ok ? 1 : 0;
    best_pass += d.best_ok ? 1 : 0;
    total_viol += d.upper_violations;
  }
  const int need = seeds_required(reps, seed_fraction);

  ProtocolResult res{"density-growth", {}};
  res.checks.push_back(check(
      "th2_fair_coin_rate", fair_pass >= need, true,
      frac(fair_pass, reps) + " seeds with |rate + (h_fc - h_min)| <= " +
          format_double(tol_final) + " at t=" + std::to_string(t_final)));
  res.checks.push_back(check("th1_upper_bound", total_viol == 0, true,
                             std::to_string(total_viol) + " violations of rate <= -J + " +
                                 format_double(tol_upper) + " for t >= " +
                                 std::to_string(upper_t_min)));
  res.checks.push_back(check("th2_best_member_rate", best_pass >= need, true,
                             frac(best_pass, reps) + " seeds with |rate| <= " +
                                 format_double(tol_best) + " for the best member"));
  return res;
}

// ---------------------------------------------------------------------------
// Theorem 3: posterior mass of high-divergence sets vanishes.

ProtocolResult run_set_concentration(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  const long t_final = cfg.path_length;
  const int reps = cfg.replicates;
  const std::vector<long> grid = default_grid(t_final);
  const PriorSpec prior = cfg.prior_spec(ctx.h_p);

  const double h_threshold = cfg.tolerance("conc_h_threshold", 0.3);
  const double tol_mass = cfg.tolerance("conc_terminal_mass", 1e-3);
  const double seed_fraction = cfg.tolerance("seed_fraction", 0.9);
  const double ball_center = 0.25, ball_radius = 0.15;

  const std::vector<std::string> set_names = {"high-divergence", "low-order", "order2-ball"};
  struct Rep {
    Eigen::MatrixXd mass;  // set x grid (log2)
    double h_min = 0.0;
    std::array<double, 3> h_set{};
  };
  std::vector<Rep> reps_data(static_cast<std::size_t>(reps));

  parallel_chunks(static_cast<std::size_t>(reps), 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r) {
      const std::uint64_t rs = replicate_seed(cfg, static_cast<int>(r));
      const Path path = sample_path(ctx.source, t_final, derive_seed(rs, 1));
      EnsemblePosterior ens =
          draw_prior_ensemble(prior, cfg.ensemble_size, derive_seed(rs, 2));
      const WeightField f = compute_weight_field(ctx.source, ens.members, path, grid, false);

      const int m = f.members();
      std::array<std::vector<std::uint8_t>, 3> ind;
      for (auto& v : ind) v.assign(static_cast<std::size_t>(m), 0);
      for (int i = 0; i < m; ++i) {
        if (f.member_h[i] >= h_threshold) ind[0][static_cast<std::size_t>(i)] = 1;
        if (f.member_order[static_cast<std::size_t>(i)] <= 1)
          ind[1][static_cast<std::size_t>(i)] = 1;
        const MarkovHypothesis& th = ens.members[static_cast<std::size_t>(i)];
        if (th.order == 2) {
          bool inside = true;
          for (Eigen::Index c = 0; c < 4; ++c)
            if (std::abs(th.next_probs[2 * c + 1] - ball_center) > ball_radius) inside = false;
          if (inside) ind[2][static_cast<std::size_t>(i)] = 1;
        }
      }

      Rep& out = reps_data[r];
      out.h_min = f.h_min;
      out.mass.resize(3, static_cast<Eigen::Index>(grid.size()));
      for (int s = 0; s < 3; ++s) {
        double hs = std::numeric_limits<double>::quiet_NaN();
        for (int i = 0; i < m; ++i)
          if (ind[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)])
            hs = std::isnan(hs) ? f.member_h[i] : std::min(hs, f.member_h[i]);
        out.h_set[static_cast<std::size_t>(s)] = hs;
        for (Eigen::Index g = 0; g < out.mass.cols(); ++g)
          out.mass(s, g) = log2_mass(f, g, ind[static_cast<std::size_t>(s)]);
      }
    }
  });

  CsvWriter csv((ctx.dir / "concentration.csv").string(),
                {"seed", "set", "t", "mass", "log2_mass", "h_set_bits", "h_min_bits"});
  for (int r = 0; r < reps; ++r) {
    const Rep& d = reps_data[static_cast<std::size_t>(r)];
    for (int s = 0; s < 3; ++s)
      for (Eigen::Index g = 0; g < d.mass.cols(); ++g)
        csv.row({CsvWriter::num(r), set_names[static_cast<std::size_t>(s)],
                 CsvWriter::num(grid[static_cast<std::size_t>(g)]),
                 CsvWriter::num(d.mass(s, g) == kNegInf ? 0.0 : std::exp2(d.mass(s, g))),
                 CsvWriter::num(d.mass(s, g)), CsvWriter::num(d.h_set[static_cast<std::size_t>(s)]),
                 CsvWriter::num(d.h_min)});
  }

  const auto dy = dyadic_indices(grid);
  int a1_pass = 0, a2_pass = 0, a3_pass = 0;
  for (const Rep& d : reps_data) {
    const Eigen::Index last = d.mass.cols() - 1;
    const double a1 = d.mass(0, last) == kNegInf ? 0.0 : std::exp2(d.mass(0, last));
    const double a3 = d.mass(2, last) == kNegInf ? 0.0 : std::exp2(d.mass(2, last));
    if (a1 <= tol_mass) ++a1_pass;
    if (a3 <= tol_mass) ++a3_pass;
    // Eventually decreasing: non-increasing across the last four dyadic points.
    bool trend = true;
    const std::size_t take = std::min<std::size_t>(4, dy.size());
    for (std::size_t j = dy.size() - take; j + 1 < dy.size(); ++j) {
      const double cur = d.mass(1, static_cast<Eigen::Index>(dy[j]));
      const double nxt = d.mass(1, static_cast<Eigen::Index>(dy[j + 1]));
      if (nxt > cur + 1e-15) trend = false;
    }
    if (trend) ++a2_pass;
  }
  const int need = seeds_required(reps, seed_fraction);

  ProtocolResult res{"set-concentration", {}};
  res.checks.push_back(check("th3_high_divergence_mass", a1_pass == reps, true,
                             frac(a1_pass, reps) + " seeds with mass{h >= " +
                                 format_double(h_threshold) + "} <= " + format_double(tol_mass) +
                                 " at t=" + std::to_string(t_final)));
  res.checks.push_back(check("th3_low_order_trend", a2_pass >= need, true,
                             frac(a2_pass, reps) +
                                 " seeds with mass{order <= 1} non-increasing over the last "
                                 "dyadic checkpoints"));
  res.checks.push_back(check("th3_compact_ball_mass", a3_pass == reps, true,
                             frac(a3_pass, reps) + " seeds with order-2 ball mass <= " +
                                 format_double(tol_mass)));
  return res;
}

// ---------------------------------------------------------------------------
// Theorem 4: exponential decay rate of the posterior mass of a fixed set.

ProtocolResult run_ldp(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  const long t_final = cfg.path_length;
  const int reps = cfg.replicates;
  const std::vector<long> grid = default_grid(t_final);
  const PriorSpec prior = cfg.prior_spec(ctx.h_p);

  const double h_threshold = cfg.tolerance("ldp_h_threshold", 0.3);
  const double tol_rel = cfg.tolerance("ldp_slope_rel", 0.30);

  struct Rep {
    std::vector<double> log2_mass;
    double slope = 0.0, ref = 0.0, ratio = std::numeric_limits<double>::quiet_NaN();
    bool censored = false, pass = false;
  };
  std::vector<Rep> reps_data(static_cast<std::size_t>(reps));

  parallel_chunks(static_cast<std::size_t>(reps), 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r) {
      const std::uint64_t rs = replicate_seed(cfg, static_cast<int>(r));
      const Path path = sample_path(ctx.source, t_final, derive_seed(rs, 1));
      EnsemblePosterior ens =
          draw_prior_ensemble(prior, cfg.ensemble_size, derive_seed(rs, 2));
      const WeightField f = compute_weight_field(ctx.source, ens.members, path, grid, false);

      std::vector<std::uint8_t> ind(static_cast<std::size_t>(f.members()), 0);
      double h_set = std::numeric_limits<double>::quiet_NaN();
      for (int i = 0; i < f.members(); ++i)
        if (f.member_h[i] >= h_threshold) {
          ind[static_cast<std::size_t>(i)] = 1;
          h_set = std::isnan(h_set) ? f.member_h[i] : std::min(h_set, f.member_h[i]);
        }
      Rep& out = reps_data[r];
      out.log2_mass.resize(grid.size());
      for (std::size_t g = 0; g < grid.size(); ++g)
        out.log2_mass[g] = log2_mass(f, static_cast<Eigen::Index>(g), ind);
      if (std::isnan(h_set)) {
        out.censored = true;
        continue;
      }
      std::vector<double> xs, ys;
      for (std::size_t g = 0; g < grid.size(); ++g)
        if (grid[g] >= t_final / 10 && out.log2_mass[g] > kNegInf) {
          xs.push_back(static_cast<double>(grid[g]));
          ys.push_back(out.log2_mass[g]);
        }
      if (xs.size() < 3) {
        out.censored = true;
        continue;
      }
      out.slope = linear_fit(xs, ys).slope;
      out.ref = -(h_set - f.h_min);
      out.ratio = out.slope / out.ref;
      out.pass = std::abs(out.ratio - 1.0) <= tol_rel;
    }
  });

  CsvWriter csv((ctx.dir / "ldp.csv").string(), {"seed", "t", "log2_mass", "censored"});
  for (int r = 0; r < reps; ++r)
    for (std::size_t g = 0; g < grid.size(); ++g)
      csv.row({CsvWriter::num(r), CsvWriter::num(grid[g]),
               CsvWriter::num(reps_data[static_cast<std::size_t>(r)].log2_mass[g]),
               CsvWriter::flag(reps_data[static_cast<std::size_t>(r)].censored)});
  CsvWriter fit((ctx.dir / "ldp_fit.csv").string(),
                {"seed", "slope_bits", "ref_bits", "ratio", "pass"});
  std::vector<double> ratios;
  int pass_count = 0, usable = 0;
  for (int r = 0; r < reps; ++r) {
    const Rep& d = reps_data[static_cast<std::size_t>(r)];
    fit.row({CsvWriter::num(r), CsvWriter::num(d.slope), CsvWriter::num(d.ref),
             CsvWriter::num(d.ratio), CsvWriter::flag(d.pass)});
    if (!d.censored) {
      ratios.push_back(d.ratio);
      ++usable;
      if (d.pass) ++pass_count;
    }
  }
  bool median_ok = false;
  double median = std::numeric_limits<double>::quiet_NaN();
  if (!ratios.empty()) {
    std::sort(ratios.begin(), ratios.end());
    median = ratios[ratios.size() / 2];
    median_ok = std::abs(median - 1.0) <= tol_rel;
  }

  ProtocolResult res{"ldp", {}};
  // Heuristic consistency probe (essential-infimum rate), review on failure.
  res.checks.push_back(check("th4_ldp_slope", median_ok, false,
                             "median slope/ref = " + format_double(median) + ", " +
                                 frac(pass_count, usable) + " seeds within +-" +
                                 format_double(tol_rel)));
  return res;
}

// ---------------------------------------------------------------------------
// Theorem 5: predictive distribution vs the true conditional, conjugate engine.

ProtocolResult run_predictive_gap(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  const long t_final = cfg.path_length;
  const int reps = cfg.replicates;
  // The protocol's engine is the order-k_max conjugate chain. A mixture over
  // orders 0..k_max parks its mode near order 6 at these horizons and its
  // run-parity blindness keeps the tail Hellinger gap at the tolerance edge;
  // the fixed-order chain is the engine the tolerance is calibrated to.
  PriorSpec prior;
  prior.order_weights = Eigen::ArrayXd::Zero(cfg.conjugate_k_max + 1);
  prior.order_weights[cfg.conjugate_k_max] = 1.0;
  prior.row_concentration = cfg.prior_alpha;

  const double tol_tail = cfg.tolerance("predictive_hellinger_tail", 0.02);
  const double ineq_slack = 1e-12;

  struct Rep {
    std::vector<double> hell, tv, kl;
    std::vector<std::uint8_t> ok;
    double tail_avg = 0.0;
    bool ineq_ok = true;
  };
  std::vector<Rep> reps_data(static_cast<std::size_t>(reps));

  parallel_chunks(static_cast<std::size_t>(reps), 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r) {
      const std::uint64_t rs = replicate_seed(cfg, static_cast<int>(r));
      const Path path = sample_path(ctx.source, t_final, derive_seed(rs, 1));
      OrderPosterior op = make_order_posterior(prior, cfg.conjugate_k_max);
      BeliefState belief = initial_belief(ctx.source);
      Rep& out = reps_data[r];
      out.hell.resize(static_cast<std::size_t>(t_final));
      out.tv.resize(static_cast<std::size_t>(t_final));
      out.kl.resize(static_cast<std::size_t>(t_final));
      out.ok.resize(static_cast<std::size_t>(t_final));
      double tail_sum = 0.0;
      long tail_count = 0;
      for (long n = 0; n < t_final; ++n) {
        const Eigen::Vector2d truth = next_symbol_dist(ctx.source, belief);
        const Eigen::Vector2d pred = predictive_dist(op);
        const double h2 = hellinger_sq2(truth, pred);
        const double tv = total_variation2(truth, pred);
        const double kl = kl_nats2(truth, pred);
        const bool ok = tv <= 2.0 * std::sqrt(h2) + ineq_slack && h2 <= kl + ineq_slack;
        out.hell[static_cast<std::size_t>(n)] = h2;
        out.tv[static_cast<std::size_t>(n)] = tv;
        out.kl[static_cast<std::size_t>(n)] = kl;
        out.ok[static_cast<std::size_t>(n)] = ok ? 1 : 0;
        if (!ok) out.ineq_ok = false;
        if (n + 1 > t_final / 2) {
          tail_sum += h2;
          ++tail_count;
        }
        const int a = path[static_cast<std::size_t>(n)];
        advance(ctx.source, belief, a);
        update(op, a);
      }
      out.tail_avg = tail_sum / static_cast<double>(tail_count);
    }
  });

  for (int r = 0; r < reps; ++r) {
    CsvWriter csv((ctx.dir / ("predictive_seed" + std::to_string(r) + ".csv")).string(),
                  {"t", "hellinger_sq", "tv", "kl_nats", "pass"});
    const Rep& d = reps_data[static_cast<std::size_t>(r)];
    for (long n = 0; n < t_final; ++n)
      csv.row({CsvWriter::num(n + 1), CsvWriter::num(d.hell[static_cast<std::size_t>(n)]),
               CsvWriter::num(d.tv[static_cast<std::size_t>(n)]),
               CsvWriter::num(d.kl[static_cast<std::size_t>(n)]),
               CsvWriter::flag(d.ok[static_cast<std::size_t>(n)] != 0)});
  }
  CsvWriter tail((ctx.dir / "predictive_tail.csv").string(),
                 {"seed", "tail_avg_hellinger_sq", "pass"});
  int tail_pass = 0, ineq_pass = 0;
  for (int r = 0; r < reps; ++r) {
    const Rep& d = reps_data[static_cast<std::size_t>(r)];
    tail.row({CsvWriter::num(r), CsvWriter::num(d.tail_avg),
              CsvWriter::flag(d.tail_avg <= tol_tail)});
    if (d.tail_avg <= tol_tail) ++tail_pass;
    if (d.ineq_ok) ++ineq_pass;
  }

  ProtocolResult res{"predictive-gap", {}};
  res.checks.push_back(check("th5_hellinger_tail", tail_pass == reps, true,
                             frac(tail_pass, reps) + " seeds with tail-avg hellinger_sq <= " +
                                 format_double(tol_tail) + " (conjugate engine, k_max=" +
                                 std::to_string(cfg.conjugate_k_max) + ")"));
  res.checks.push_back(check("th5_distance_inequalities", ineq_pass == reps, true,
                             frac(ineq_pass, reps) +
                                 " seeds with tv <= 2*hellinger and hellinger_sq <= kl at every t"));
  return res;
}

// ---------------------------------------------------------------------------
// Theorem 6: shrinking divergence neighborhoods keep almost all mass.

ProtocolResult run_rate(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  cfg.rate.validate();
  const long t_final = cfg.path_length;
  const int reps = cfg.replicates;
  const std::vector<long> grid = default_grid(t_final);
  const PriorSpec prior = cfg.prior_spec(ctx.h_p);

  const double tol_terminal = cfg.tolerance("rate_terminal_mass", 0.9);
  const double seed_fraction = cfg.tolerance("seed_fraction", 0.9);

  struct Rep {
    std::vector<double> mass, log2_comp_rate, eps;
    std::vector<std::uint8_t> empty;
  };
  std::vector<Rep> reps_data(static_cast<std::size_t>(reps));

  parallel_chunks(static_cast<std::size_t>(reps), 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r) {
      const std::uint64_t rs = replicate_seed(cfg, static_cast<int>(r));
      const Path path = sample_path(ctx.source, t_final, derive_seed(rs, 1));
      EnsemblePosterior ens =
          draw_prior_ensemble(prior, cfg.ensemble_size, derive_seed(rs, 2));
      const WeightField f = compute_weight_field(ctx.source, ens.members, path, grid, false);
      Rep& out = reps_data[r];
      out.mass.resize(grid.size());
      out.log2_comp_rate.resize(grid.size());
      out.eps.resize(grid.size());
      out.empty.resize(grid.size());
      std::vector<std::uint8_t> ind(static_cast<std::size_t>(f.members()));
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const double eps = cfg.rate.epsilon(grid[g]);
        long count = 0;
        for (int i = 0; i < f.members(); ++i) {
          ind[static_cast<std::size_t>(i)] = f.member_h[i] <= f.h_min + eps ? 1 : 0;
          count += ind[static_cast<std::size_t>(i)];
        }
        out.eps[g] = eps;
        out.empty[g] = count == 0 ? 1 : 0;
        const double lm = log2_mass(f, static_cast<Eigen::Index>(g), ind);
        out.mass[g] = lm == kNegInf ? 0.0 : std::exp2(lm);
        // Complement decay surrogate: log2 Pi_t(N^c) / t, to compare to -eps_t.
        std::vector<std::uint8_t> comp(ind.size());
        for (std::size_t i = 0; i < ind.size(); ++i) comp[i] = ind[i] ? 0 : 1;
        const double lc = log2_mass(f, static_cast<Eigen::Index>(g), comp);
        out.log2_comp_rate[g] = lc == kNegInf
                                    ? -std::numeric_limits<double>::infinity()
                                    : lc / static_cast<double>(grid[g]);
      }
    }
  });

  CsvWriter csv((ctx.dir / "rate.csv").string(),
                {"seed", "t", "epsilon_t", "mass", "log2_complement_over_t", "neg_epsilon_t",
                 "empty_neighborhood"});
  for (int r = 0; r < reps; ++r) {
    const Rep& d = reps_data[static_cast<std::size_t>(r)];
    for (std::size_t g = 0; g < grid.size(); ++g)
      csv.row({CsvWriter::num(r), CsvWriter::num(grid[g]), CsvWriter::num(d.eps[g]),
               CsvWriter::num(d.mass[g]), CsvWriter::num(d.log2_comp_rate[g]),
               CsvWriter::num(-d.eps[g]), CsvWriter::flag(d.empty[g] != 0)});
  }

  int terminal_pass = 0;
  long empty_rows = 0;
  for (const Rep& d : reps_data) {
    if (d.mass.back() >= tol_terminal) ++terminal_pass;
    for (auto e : d.empty) empty_rows += e;
  }
  const int need = seeds_required(reps, seed_fraction);

  ProtocolResult res{"rate-of-convergence", {}};
  res.checks.push_back(check("th6_neighborhood_mass", terminal_pass >= need, true,
                             frac(terminal_pass, reps) + " seeds with mass(N_eps_T) >= " +
                                 format_double(tol_terminal) + " at t=" +
                                 std::to_string(t_final)));
  res.checks.push_back(check("th6_empty_neighborhoods", empty_rows == 0, false,
                             std::to_string(empty_rows) + " empty-neighborhood checkpoints"));
  return res;
}

// ---------------------------------------------------------------------------
// Predictive-divergence decomposition into mean member divergence minus
// ensemble diversity; an exact identity checked step by step.

ProtocolResult run_diversity_decomposition(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  // The identity is size-independent; cap the run so the step loop (which
  // touches every member at every step) stays desk-scale.
  const long t_final = std::min<long>(cfg.path_length, 1000);
  const int m = std::min(cfg.ensemble_size, 512);
  const int reps = cfg.replicates;
  const PriorSpec prior = cfg.prior_spec(ctx.h_p);
  const double tol_resid = cfg.tolerance("diversity_residual", 1e-10);

  struct Rep {
    std::vector<DiversityTerms> terms;
    bool resid_ok = true, nonneg_ok = true;
  };
  std::vector<Rep> reps_data(static_cast<std::size_t>(reps));

  parallel_chunks(static_cast<std::size_t>(reps), 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r) {
      const std::uint64_t rs = replicate_seed(cfg, static_cast<int>(r));
      const Path path = sample_path(ctx.source, t_final, derive_seed(rs, 1));
      EnsemblePosterior ens = draw_prior_ensemble(prior, m, derive_seed(rs, 2));
      BeliefState belief = initial_belief(ctx.source);
      Rep& out = reps_data[r];
      out.terms.reserve(static_cast<std::size_t>(t_final));
      for (long n = 0; n < t_final; ++n) {
        const Eigen::Vector2d truth = next_symbol_dist(ctx.source, belief);
        const Eigen::ArrayXd l0 = member_conditional_probs(ens, 0);
        const Eigen::ArrayXd l1 = member_conditional_probs(ens, 1);
        std::vector<Eigen::Vector2d> dists(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) dists[static_cast<std::size_t>(i)] << l0[i], l1[i];
        const DiversityTerms terms =
            diversity_decomposition(truth, dists, normalized_weights(ens));
        if (std::abs(terms.residual) > tol_resid) out.resid_ok = false;
        if (terms.diversity_bits < -1e-12) out.nonneg_ok = false;
        out.terms.push_back(terms);
        const int a = path[static_cast<std::size_t>(n)];
        advance(ctx.source, belief, a);
        update(ens, a);
      }
    }
  });

  CsvWriter csv((ctx.dir / "diversity.csv").string(),
                {"seed", "t", "kl_mix_bits", "mean_member_kl_bits", "diversity_bits", "residual",
                 "pass"});
  for (int r = 0; r < reps; ++r) {
    const Rep& d = reps_data[static_cast<std::size_t>(r)];
    for (long n = 0; n < t_final; ++n) {
      const DiversityTerms& terms = d.terms[static_cast<std::size_t>(n)];
      csv.row({CsvWriter::num(r), CsvWriter::num(n + 1), CsvWriter::num(terms.kl_mix_bits),
               CsvWriter::num(terms.mean_member_kl_bits), CsvWriter::num(terms.diversity_bits),
               CsvWriter::num(terms.residual),
               CsvWriter::flag(std::abs(terms.residual) <= tol_resid)});
    }
  }
  int resid_pass = 0, nonneg_pass = 0;
  for (const Rep& d : reps_data) {
    resid_pass += d.resid_ok ? 1 : 0;
    nonneg_pass += d.nonneg_ok ? 1 : 0;
  }
  ProtocolResult res{"diversity-decomposition", {}};
  res.checks.push_back(check("diversity_identity", resid_pass == reps, true,
                             frac(resid_pass, reps) + " seeds with |residual| <= " +
                                 format_double(tol_resid) + " at every step"));
  res.checks.push_back(check("diversity_nonnegative", nonneg_pass == reps, true,
                             frac(nonneg_pass, reps) + " seeds with diversity term >= 0"));
  return res;
}

// ---------------------------------------------------------------------------
// Constructive sieve behavior: monotone good sets, their divergence floor,
// last-entry times, and prior tail decay for two order-prior families.

ProtocolResult run_sieve_report(const RunContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  const long t_final = cfg.path_length;
  const int reps = cfg.replicates;
  const std::vector<long> grid = default_grid(t_final);
  const SieveSchedule sched = cfg.sieve_schedule(ctx.h_p);
  // Sieve experiments default to the doubly-exponential order prior so the
  // exponential order-tail target is attainable; the geometric family is
  // fitted alongside for contrast.
  const PriorSpec prior_de = cfg.prior_spec_family("doubly_exponential", ctx.h_p);
  const PriorSpec prior_geo = cfg.prior_spec_family("geometric", ctx.h_p);
  const double delta = cfg.tolerance("sieve_delta", 0.1);

  const PriorTailReport tail_de =
      prior_tail_mass(prior_de, sched, t_final, 20000, derive_seed(cfg.seed, 777));
  const PriorTailReport tail_geo =
      prior_tail_mass(prior_geo, sched, t_final, 20000, derive_seed(cfg.seed, 778));
  {
    CsvWriter csv((ctx.dir / "prior_tail.csv").string(),
                  {"family", "t", "order_tail", "z_tail", "total_tail", "bound"});
    auto emit = [&](const char* fam, const PriorTailReport& rep) {
      for (std::size_t j = 0; j < rep.ts.size(); ++j)
        csv.row({fam, CsvWriter::num(rep.ts[j]), CsvWriter::num(rep.order_tail[j]),
                 CsvWriter::num(rep.z_tail[j]), CsvWriter::num(rep.total_tail[j]),
                 CsvWriter::num(rep.bound[j])});
    };
    emit("doubly_exponential", tail_de);
    emit("geometric", tail_geo);
  }

  // Shared Monte Carlo draws for the per-checkpoint z-violation component.
  std::vector<int> mc_order(20000);
  std::vector<double> mc_z(20000);
  for (std::size_t i = 0; i < mc_order.size(); ++i) {
    std::mt19937_64 rng(derive_seed(derive_seed(cfg.seed, 888), i));
    double u = unit_uniform(rng), acc = 0.0;
    int k = prior_de.max_order();
    for (int j = 0; j <= prior_de.max_order(); ++j) {
      acc += prior_de.order_weights[j];
      if (u < acc) {
        k = j;
        break;
      }
    }
    std::gamma_distribution<double> gamma(prior_de.row_concentration, 1.0);
    double minp = 1.0;
    for (Eigen::Index c = 0; c < (Eigen::Index{1} << k); ++c) {
      const double g1 = gamma(rng), g2 = gamma(rng);
      double p1 = g1 + g2 > 0.0 ? g1 / (g1 + g2) : 0.5;
      p1 = std::min(std::max(p1, 1e-12), 1.0 - 1e-12);
      minp = std::min(minp, std::min(p1, 1.0 - p1));
    }
    mc_order[i] = k;
    mc_z[i] = -std::log2(minp);
  }
  auto pi0_tail = [&](long t) {
    const int kt = sched.order_cutoff(t);
    double order_tail = 0.0;
    for (int k = 0; k <= prior_de.max_order(); ++k)
      if (k >= kt) order_tail += prior_de.order_weights[k];
    const double zt = sched.z_cutoff(t);
    long viol = 0;
    for (std::size_t i = 0; i < mc_order.size(); ++i)
      if (mc_order[i] < kt && mc_z[i] > zt) ++viol;
    return order_tail + static_cast<double>(viol) / static_cast<double>(mc_order.size());
  };

  struct Row {
    long t = 0;
    int k_t = 0;
    double z_t = 0, tail = 0, min_h = 0, d_profile = 0, s_g = 0;
    long g_count = 0, tau_hat = -1;
    bool probed = false, violation = false;
  };
  struct Rep {
    std::vector<Row> rows;
    bool monotone_ok = true, min_h_ok = true, terminal_min_ok = true;
    long t0 = 0;             // last probed time with a last-entry violation
    bool profile_down = true;
  };
  std::vector<Rep> reps_data(static_cast<std::size_t>(reps));

  const long probe_max = t_final / 10;
  parallel_chunks(static_cast<std::size_t>(reps), 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r) {
      const std::uint64_t rs = replicate_seed(cfg, static_cast<int>(r));
      const Path path = sample_path(ctx.source, t_final, derive_seed(rs, 1));
      EnsemblePosterior ens =
          draw_prior_ensemble(prior_de, cfg.sieve_ensemble_size, derive_seed(rs, 2));
      const WeightField f = compute_weight_field(ctx.source, ens.members, path, grid, false);
      Rep& out = reps_data[r];
      const int m = f.members();

      std::vector<std::vector<int>> subsets(grid.size());
      std::vector<char> was_member(static_cast<std::size_t>(m), 0);
      double prev_min_h = std::numeric_limits<double>::infinity();
      for (std::size_t g = 0; g < grid.size(); ++g) {
        Row row;
        row.t = grid[g];
        row.k_t = sched.order_cutoff(row.t);
        row.z_t = sched.z_cutoff(row.t);
        row.tail = pi0_tail(row.t);
        double min_h = std::numeric_limits<double>::quiet_NaN();
        for (int i = 0; i < m; ++i) {
          const bool in_g = f.member_order[static_cast<std::size_t>(i)] <= row.k_t - 1 &&
                            f.member_z[i] <= row.z_t;
          if (was_member[static_cast<std::size_t>(i)] && !in_g) out.monotone_ok = false;
          if (in_g) {
            was_member[static_cast<std::size_t>(i)] = 1;
            subsets[g].push_back(i);
            min_h = std::isnan(min_h) ? f.member_h[i] : std::min(min_h, f.member_h[i]);
          }
        }
        row.g_count = static_cast<long>(subsets[g].size());
        row.min_h = min_h;
        if (!std::isnan(min_h)) {
          if (min_h > prev_min_h + 1e-15) out.min_h_ok = false;
          prev_min_h = std::min(prev_min_h, min_h);
          row.d_profile = uniform_convergence_profile(
              f.lw, grid, f.logp, f.member_h, subsets[g])[static_cast<Eigen::Index>(g)];
          const Eigen::ArrayXd s =
              set_log2_ratio_rate(f.lw, grid, f.logp, subsets[g], m);
          row.s_g = s[static_cast<Eigen::Index>(g)];
          if (row.t <= probe_max) {
            row.probed = true;
            row.tau_hat = last_entry_time(s, grid, delta);
            row.violation = row.tau_hat > row.t;
            if (row.violation) out.t0 = std::max(out.t0, row.t);
          }
        } else {
          row.d_profile = std::numeric_limits<double>::quiet_NaN();
          row.s_g = std::numeric_limits<double>::quiet_NaN();
        }
        out.rows.push_back(row);
      }
      // Terminal floor must coincide with the global ensemble minimum.
      out.terminal_min_ok = out.rows.back().min_h == f.h_min;
      // Uniform-convergence profile: late deviations below the t~100 level.
      double d100 = std::numeric_limits<double>::quiet_NaN();
      for (const Row& row : out.rows)
        if (row.t >= 100 && std::isnan(d100)) d100 = row.d_profile;
      out.profile_down = !std::isnan(d100) && out.rows.back().d_profile < d100;
    }
  });

  CsvWriter csv((ctx.dir / "sieve.csv").string(),
                {"seed", "t", "k_t", "z_t", "g_count", "pi0_tail", "min_h_g", "d_profile", "s_g",
                 "tau_hat", "violation"});
  for (int r = 0; r < reps; ++r)
    for (const Row& row : reps_data[static_cast<std::size_t>(r)].rows)
      csv.row({CsvWriter::num(r), CsvWriter::num(row.t), CsvWriter::num(row.k_t),
               CsvWriter::num(row.z_t), CsvWriter::num(row.g_count), CsvWriter::num(row.tail),
               CsvWriter::num(row.min_h), CsvWriter::num(row.d_profile), CsvWriter::num(row.s_g),
               CsvWriter::num(row.tau_hat), CsvWriter::flag(row.violation)});

  int monotone_pass = 0, min_h_pass = 0, entry_pass = 0, profile_pass = 0;
  std::string t0s;
  for (const Rep& d : reps_data) {
    monotone_pass += d.monotone_ok ? 1 : 0;
    min_h_pass += (d.min_h_ok && d.terminal_min_ok) ? 1 : 0;
    entry_pass += d.t0 <= probe_max / 2 ? 1 : 0;
    profile_pass += d.profile_down ? 1 : 0;
    if (!t0s.empty()) t0s += " ";
    t0s += std::to_string(d.t0);
  }

  ProtocolResult res{"sieve", {}};
  res.checks.push_back(check("sieve_monotone", monotone_pass == reps, true,
                             frac(monotone_pass, reps) + " seeds with G_t monotone"));
  res.checks.push_back(
      check("sieve_min_h_profile", min_h_pass == reps, true,
            frac(min_h_pass, reps) +
                " seeds with min h over G_t non-increasing down to the ensemble minimum"));
  res.checks.push_back(check("assumption6_last_entry", entry_pass == reps, true,
                             "last-entry violations absent for t > " +
                                 std::to_string(probe_max / 2) + "; per-seed t0: " + t0s));
  res.checks.push_back(
      check("prior_tail_flags",
            tail_de.order_exponential_target_met && !tail_geo.order_exponential_target_met, true,
            std::string("doubly-exponential order tail ") +
                (tail_de.order_exponential_target_met ? "meets" : "misses") +
                " the exponential target (rate " + format_double(tail_de.order_exp_rate) +
                "), geometric " +
                (tail_geo.order_exponential_target_met ? "meets it unexpectedly" : "is flagged") +
                " (exp r2 " + format_double(tail_geo.order_exp_r2) + " vs poly r2 " +
                format_double(tail_geo.order_poly_r2) + ")"));
  res.checks.push_back(check("uniform_profile_decreasing", profile_pass == reps, false,
                             frac(profile_pass, reps) + " seeds with D(T) < D(100)"));
  return res;
}

// ---------------------------------------------------------------------------

int run_verify(const ExperimentConfig& cfg) {
  cfg.validate();
  RunContext ctx = make_run_context(cfg);
  {
    std::ofstream echo(ctx.dir / "config_echo.cfg");
    cfg.echo(echo);
  }
  const std::string& sel = cfg.theorem;
  std::vector<ProtocolResult> results;
  if (sel == "1" || sel == "2" || sel == "all") results.push_back(run_density_growth(ctx));
  if (sel == "3" || sel == "all") results.push_back(run_set_concentration(ctx));
  if (sel == "4" || sel == "all") results.push_back(run_ldp(ctx));
  if (sel == "5" || sel == "all") results.push_back(run_predictive_gap(ctx));
  if (sel == "6" || sel == "all") results.push_back(run_rate(ctx));
  if (sel == "diversity" || sel == "all") results.push_back(run_diversity_decomposition(ctx));
  if (sel == "sieve" || sel == "all") results.push_back(run_sieve_report(ctx));

  std::ofstream summary(ctx.dir / "summary.txt");
  bool all_ok = true;
  for (const ProtocolResult& pr : results)
    for (const CheckResult& c : pr.checks) {
      const std::string line =
          "[" + pr.protocol + "] " + c.name + ": " + c.status + " - " + c.detail;
      summary << line << "\n";
      std::cout << line << "\n";
      if (c.gating && !c.passed()) all_ok = false;
    }
  const std::string overall = std::string("overall: ") + (all_ok ? "PASS" : "FAIL");
  summary << overall << "\n";
  std::cout << overall << std::endl;
  return all_ok ? 0 : 1;
}

}  // namespace postdyn
