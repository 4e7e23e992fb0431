#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "postdyn/csv.hpp"
#include "postdyn/experiment.hpp"

using namespace postdyn;

namespace {

ExperimentConfig build_config(const std::string& config_path,
                              const std::vector<std::string>& sets) {
  ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

Path read_path_file(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open data file: " + file);
  Path x;
  char c;
  while (in.get(c)) {
    if (c == '0' || c == '1')
      x.push_back(static_cast<std::uint8_t>(c - '0'));
    else if (!std::isspace(static_cast<unsigned char>(c)))
      throw std::runtime_error("data file must contain only 0/1 symbols");
  }
  return x;
}

HiddenMarkovSource source_from_name(const std::string& name) {
  return name == "even" ? build_even_process() : load_source_file(name);
}

int cmd_simulate(const std::string& source, long t, std::uint64_t seed, const std::string& out) {
  const HiddenMarkovSource src = source_from_name(source);
  const Path x = sample_path(src, t, seed);
  std::ofstream os(out);
  if (!os) throw std::runtime_error("cannot open output file: " + out);
  for (std::uint8_t a : x) os << int(a);
  if (!x.empty()) os << "\n";
  return 0;
}

int cmd_divergence(const std::string& source, const std::vector<std::string>& files,
                   const std::vector<int>& optimal_orders, const std::vector<double>& iid,
                   bool fair, double h_ref, long mc_t, std::uint64_t seed,
                   const std::string& out) {
  const HiddenMarkovSource src = source_from_name(source);
  std::vector<std::pair<std::string, MarkovHypothesis>> hyps;
  if (fair) hyps.emplace_back("fair-coin", fair_coin());
  for (double q : iid) hyps.emplace_back("iid-" + format_double(q), iid_coin(q));
  for (int k : optimal_orders) hyps.emplace_back("optimal-" + std::to_string(k),
                                                 optimal_in_order(k, src));
  for (const auto& f : files) hyps.emplace_back(f, load_hypothesis_file(f));
  if (hyps.empty()) throw std::invalid_argument("no hypotheses given");
  CsvWriter csv(out, {"name", "order", "h_bits", "j_bits", "z_bits", "aep_estimate", "aep_t"});
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const DivergenceReport rep =
        divergence_rate(hyps[i].second, src, h_ref, mc_t, derive_seed(seed, i));
    csv.row({hyps[i].first, CsvWriter::num(hyps[i].second.order), CsvWriter::num(rep.h_bits),
             CsvWriter::num(rep.j_bits), CsvWriter::num(rep.z_bits),
             rep.mc_estimate ? CsvWriter::num(*rep.mc_estimate) : "",
             CsvWriter::num(rep.mc_path_length)});
  }
  std::cout << "wrote " << out << " (" << hyps.size() << " hypotheses)\n";
  return 0;
}

int cmd_posterior(const ExperimentConfig& cfg, long snapshot_every, const std::string& data) {
  cfg.validate();
  RunContext ctx = make_run_context(cfg);
  const Path x = data.empty()
                     ? sample_path(ctx.source, cfg.path_length, derive_seed(cfg.seed, 1))
                     : read_path_file(data);
  EnsemblePosterior post = draw_prior_ensemble(cfg.prior_spec(ctx.h_p), cfg.ensemble_size,
                                               derive_seed(cfg.seed, 2),
                                               cfg.initial_term_mode());
  CsvWriter trace((ctx.dir / "posterior_trace.csv").string(),
                  {"t", "log2_integrated_likelihood", "intensity_bits", "predictive_p1",
                   "initial_term"});
  auto snapshot = [&](long t) {
    std::ofstream os(ctx.dir / ("posterior_t" + std::to_string(t) + ".txt"));
    save_posterior(os, post);
  };
  for (std::size_t n = 0; n < x.size(); ++n) {
    update(post, x[n]);
    const long t = static_cast<long>(n) + 1;
    trace.row({CsvWriter::num(t), CsvWriter::num(log2_integrated_likelihood(post)),
               CsvWriter::num(intensity_of_selection(post)),
               CsvWriter::num(predictive_dist(post)(1)), to_string(post.initial_term)});
    if (snapshot_every > 0 && t % snapshot_every == 0) snapshot(t);
  }
  snapshot(static_cast<long>(x.size()));
  std::cout << "posterior run written to " << ctx.dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"postdyn: Bayesian posterior dynamics on sofic binary data"};
  app.require_subcommand(1);

  std::string config_path, out, source = "even", theorem = "all", data;
  std::vector<std::string> sets;
  long t = -1, snapshot_every = 0, mc_t = 0;
  std::uint64_t seed = 1;
  bool seed_given = false;
  int m = -1, replicates = -1;
  std::vector<std::string> hyp_files;
  std::vector<int> optimal_orders;
  std::vector<double> iid_probs;
  bool fair = false;
  double h_ref = 0.0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment configuration file");
    sub->add_option("--set", sets, "override a config key, e.g. --set prior.lambda=0.5");
    sub->add_option("--t", t, "path length");
    sub->add_option("--m", m, "ensemble size");
    sub->add_option("--seed", seed, "master seed")->each([&](const std::string&) {
      seed_given = true;
    });
    sub->add_option("--replicates", replicates, "number of replicate seeds");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--source", source, "'even' or a source spec file");
  };

  CLI::App* sim = app.add_subcommand("simulate", "sample a path from the source");
  sim->add_option("--t", t, "path length")->required();
  sim->add_option("--seed", seed, "seed");
  sim->add_option("--source", source, "'even' or a source spec file");
  sim->add_option("--out", out, "output file")->required();

  CLI::App* div = app.add_subcommand("divergence", "tabulate divergence rates h(theta)");
  div->add_option("--source", source, "'even' or a source spec file");
  div->add_option("--hyp", hyp_files, "hypothesis table file (repeatable)");
  div->add_option("--optimal", optimal_orders, "add the order-k divergence minimizer");
  div->add_option("--iid", iid_probs, "add an IID hypothesis with P(1)=q");
  div->add_flag("--fair", fair, "add the fair coin");
  div->add_option("--h-ref", h_ref, "family-level divergence infimum reference (bits)");
  div->add_option("--mc-t", mc_t, "also run the sample-path estimator at this length");
  div->add_option("--seed", seed, "seed for the sample-path estimator");
  div->add_option("--out", out, "output CSV")->required();

  CLI::App* post = app.add_subcommand("posterior", "run Bayesian updating and snapshot it");
  add_common(post);
  post->add_option("--snapshot-every", snapshot_every, "snapshot interval (0 = final only)");
  post->add_option("--data", data, "read the path from a 0/1 text file instead of sampling");

  CLI::App* sieve = app.add_subcommand("sieve", "good-set reports and prior tail fits");
  add_common(sieve);

  CLI::App* verify = app.add_subcommand("verify", "run theorem verification protocols");
  add_common(verify);
  verify->add_option("--theorem", theorem, "1..6, diversity, sieve, or all");

  CLI::App* all = app.add_subcommand("all", "run every protocol");
  add_common(all);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (sim->parsed()) return cmd_simulate(source, t, seed, out);

    ExperimentConfig cfg = build_config(config_path, sets);
    if (t >= 0) cfg.path_length = t;
    if (m >= 0) cfg.ensemble_size = m;
    if (seed_given) cfg.seed = seed;
    if (replicates >= 0) cfg.replicates = replicates;
    if (!out.empty()) cfg.out_dir = out;
    if (source != "even") cfg.source = source;

    if (div->parsed())
      return cmd_divergence(cfg.source, hyp_files, optimal_orders, iid_probs, fair, h_ref, mc_t,
                            seed, out);
    if (post->parsed()) return cmd_posterior(cfg, snapshot_every, data);
    if (sieve->parsed()) {
      cfg.theorem = "sieve";
      return run_verify(cfg);
    }
    if (verify->parsed()) {
      cfg.theorem = theorem;
      if (!valid_theorem_selector(cfg.theorem))
        throw std::invalid_argument("invalid --theorem '" + cfg.theorem +
                                    "': expected 1..6, diversity, sieve, or all");
      return run_verify(cfg);
    }
    if (all->parsed()) {
      cfg.theorem = "all";
      return run_verify(cfg);
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
  return 0;
}
