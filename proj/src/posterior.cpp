#include "postdyn/posterior.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace postdyn {

const char* to_string(InitialTerm it) {
  return it == InitialTerm::stationary ? "stationary" : "condition";
}

PriorSpec PriorSpec::geometric(double lambda, int k_max, double alpha) {
  if (!(lambda > 0.0) || lambda > 1.0) throw std::invalid_argument("lambda must lie in (0, 1]");
  if (k_max < 0 || k_max > 19) throw std::invalid_argument("k_max must lie in [0, 19]");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  PriorSpec p;
  p.order_weights.resize(k_max + 1);
  double w = 1.0;
  for (int k = 0; k <= k_max; ++k, w *= lambda) p.order_weights[k] = w;
  p.order_weights /= p.order_weights.sum();
  p.row_concentration = alpha;
  return p;
}

PriorSpec PriorSpec::doubly_exponential(double c, double rate, int k_max, double alpha) {
  if (!(c > 0.0) || !(rate > 0.0)) throw std::invalid_argument("c and rate must be positive");
  if (k_max < 0 || k_max > 19) throw std::invalid_argument("k_max must lie in [0, 19]");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  PriorSpec p;
  p.order_weights.resize(k_max + 1);
  for (int k = 0; k <= k_max; ++k) p.order_weights[k] = std::exp(-c * std::exp2(rate * k));
  p.order_weights /= p.order_weights.sum();
  p.row_concentration = alpha;
  return p;
}

namespace {

int sample_order(const Eigen::ArrayXd& weights, std::mt19937_64& rng) {
  const double u = unit_uniform(rng);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    acc += weights[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(weights.size()) - 1;
}

double beta_sample(double alpha, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double g1 = gamma(rng), g2 = gamma(rng);
  if (g1 + g2 <= 0.0) return 0.5;
  double p = g1 / (g1 + g2);
  // Theta contains strictly positive chains only; keep samples off the walls.
  return std::min(std::max(p, 1e-12), 1.0 - 1e-12);
}

void init_bookkeeping(EnsemblePosterior& post) {
  post.max_order = 0;
  for (const auto& m : post.members) post.max_order = std::max(post.max_order, m.order);
  post.warm_log2_marginal.assign(post.members.size(), 0.0);
  post.prefix.clear();
  post.history = 0;
  post.t = 0;
}

}  // namespace

EnsemblePosterior draw_prior_ensemble(const PriorSpec& prior, int m, std::uint64_t seed,
                                      InitialTerm initial_term) {
  if (m < 1) throw std::invalid_argument("ensemble size must be >= 1");
  EnsemblePosterior post;
  post.members.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const int k = sample_order(prior.order_weights, rng);
    Eigen::ArrayXd next(Eigen::Index{2} << k);
    for (Eigen::Index c = 0; c < next.size() / 2; ++c) {
      const double p1 = beta_sample(prior.row_concentration, rng);
      next[2 * c] = 1.0 - p1;
      next[2 * c + 1] = p1;
    }
    post.members.push_back(make_markov(k, std::move(next)));
  }
  post.log2_weights = Eigen::ArrayXd::Zero(m);
  post.initial_term = initial_term;
  init_bookkeeping(post);
  return post;
}

EnsemblePosterior ensemble_from_members(std::vector<MarkovHypothesis> members,
                                        InitialTerm initial_term) {
  if (members.empty()) throw std::invalid_argument("ensemble needs at least one member");
  EnsemblePosterior post;
  post.members = std::move(members);
  post.log2_weights = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(post.members.size()));
  post.initial_term = initial_term;
  init_bookkeeping(post);
  return post;
}

Eigen::ArrayXd member_conditional_probs(const EnsemblePosterior& post, int a) {
  Eigen::ArrayXd out(post.size());
  Path ext;
  if (post.t < post.max_order) {
    ext.assign(post.prefix.begin(), post.prefix.end());
    ext.push_back(static_cast<std::uint8_t>(a));
  }
  for (int i = 0; i < post.size(); ++i) {
    const MarkovHypothesis& m = post.members[i];
    if (post.t < m.order) {
      if (post.initial_term == InitialTerm::condition) {
        out[i] = 1.0;
      } else {
        const double nm = prefix_log2_marginal(m, PathView(ext));
        out[i] = std::exp2(nm - post.warm_log2_marginal[static_cast<std::size_t>(i)]);
      }
    } else {
      const std::uint32_t ctx = static_cast<std::uint32_t>(post.history) & m.context_mask();
      out[i] = m.next_probs[ctx * 2 + static_cast<std::uint32_t>(a)];
    }
  }
  return out;
}

void advance_state(EnsemblePosterior& post, int a) {
  if (post.t < post.max_order) {
    Path ext(post.prefix.begin(), post.prefix.end());
    ext.push_back(static_cast<std::uint8_t>(a));
    for (int i = 0; i < post.size(); ++i)
      if (post.t + 1 <= post.members[i].order)
        post.warm_log2_marginal[static_cast<std::size_t>(i)] =
            prefix_log2_marginal(post.members[i],
                                 PathView(ext.data(), static_cast<std::size_t>(
                                                          std::min<long>(post.t + 1,
                                                                         post.members[i].order))));
    post.prefix = std::move(ext);
  }
  post.history = (post.history << 1) | static_cast<std::uint64_t>(a & 1);
  post.t += 1;
}

void update(EnsemblePosterior& post, int a) {
  const Eigen::ArrayXd ls = member_conditional_probs(post, a);
  for (Eigen::Index i = 0; i < ls.size(); ++i) post.log2_weights[i] += std::log2(ls[i]);
  advance_state(post, a);
}

void replicator_step(EnsemblePosterior& post, std::span<const double> fitness) {
  if (static_cast<int>(fitness.size()) != post.size())
    throw std::invalid_argument("fitness vector length must equal the ensemble size");
  for (double f : fitness)
    if (!(f > 0.0)) throw std::invalid_argument("replicator fitness values must be positive");
  for (int i = 0; i < post.size(); ++i)
    post.log2_weights[i] += std::log2(fitness[static_cast<std::size_t>(i)]);
}

Eigen::ArrayXd normalized_weights(const EnsemblePosterior& post) {
  const double m = post.log2_weights.maxCoeff();
  Eigen::ArrayXd w =
      (post.log2_weights - m).unaryExpr([](double v) { return std::exp2(v); });
  w /= w.sum();
  return w;
}

double log2_integrated_likelihood(const EnsemblePosterior& post) {
  return log2_sum_exp2(std::span<const double>(post.log2_weights.data(),
                                               static_cast<std::size_t>(post.log2_weights.size()))) -
         std::log2(static_cast<double>(post.size()));
}

double posterior_mass(const EnsemblePosterior& post,
                      const std::function<bool(const MarkovHypothesis&)>& pred) {
  std::vector<std::uint8_t> ind(static_cast<std::size_t>(post.size()), 0);
  for (int i = 0; i < post.size(); ++i)
    ind[static_cast<std::size_t>(i)] = pred(post.members[static_cast<std::size_t>(i)]) ? 1 : 0;
  const double lm = posterior_log2_mass(post, ind);
  return lm == kNegInf ? 0.0 : std::exp2(lm);
}

double posterior_log2_mass(const EnsemblePosterior& post,
                           std::span<const std::uint8_t> indicator) {
  if (static_cast<int>(indicator.size()) != post.size())
    throw std::invalid_argument("indicator length must equal the ensemble size");
  std::vector<double> sel;
  sel.reserve(indicator.size());
  for (int i = 0; i < post.size(); ++i)
    if (indicator[static_cast<std::size_t>(i)]) sel.push_back(post.log2_weights[i]);
  if (sel.empty()) return kNegInf;
  const double num = log2_sum_exp2(sel);
  const double den = log2_sum_exp2(std::span<const double>(
      post.log2_weights.data(), static_cast<std::size_t>(post.log2_weights.size())));
  return num - den;
}

double posterior_log2_density_rate(const EnsemblePosterior& post, int member_index) {
  return posterior_log2_density_rate(post, post.log2_weights[member_index]);
}

double posterior_log2_density_rate(const EnsemblePosterior& post, double probe_log2_likelihood) {
  if (post.t < 1) throw std::invalid_argument("density rate needs t >= 1");
  return (probe_log2_likelihood - log2_integrated_likelihood(post)) /
         static_cast<double>(post.t);
}

Eigen::Vector2d predictive_dist(const EnsemblePosterior& post) {
  const Eigen::ArrayXd w = normalized_weights(post);
  const Eigen::ArrayXd l0 = member_conditional_probs(post, 0);
  const Eigen::ArrayXd l1 = member_conditional_probs(post, 1);
  Eigen::Vector2d out;
  out << (w * l0).sum(), (w * l1).sum();
  return out;
}

double intensity_of_selection(const EnsemblePosterior& post) {
  // log2[pi_t(mle)/pi_0(mle)] = log2 R_t(mle) - log2 <R_t>; the true-path
  // density cancels between the two terms.
  Eigen::Index imax = 0;
  post.log2_weights.maxCoeff(&imax);
  return post.log2_weights[imax] - log2_integrated_likelihood(post);
}

double relative_fitness_average(EnsemblePosterior post, int member_index, PathView path) {
  if (path.empty()) throw std::invalid_argument("relative fitness average needs t >= 1");
  double acc = 0.0;
  for (std::uint8_t a : path) {
    const Eigen::ArrayXd ls = member_conditional_probs(post, a);
    const Eigen::ArrayXd w = normalized_weights(post);
    const double mean_fitness = (w * ls).sum();
    acc += std::log2(ls[member_index]) - std::log2(mean_fitness);
    for (Eigen::Index i = 0; i < ls.size(); ++i) post.log2_weights[i] += std::log2(ls[i]);
    advance_state(post, a);
  }
  return acc / static_cast<double>(path.size());
}

void save_posterior(std::ostream& out, const EnsemblePosterior& post) {
  out << "postdyn-posterior v1\n";
  out << "t " << post.t << "\n";
  out << "initial_term " << to_string(post.initial_term) << "\n";
  out << "context ";
  const long depth = std::min<long>(post.t, post.max_order);
  if (post.t <= post.max_order) {
    for (std::uint8_t a : post.prefix) out << int(a);
  } else {
    for (long b = depth - 1; b >= 0; --b) out << ((post.history >> b) & 1);
  }
  out << "\n";
  out << "members " << post.size() << "\n";
  for (int i = 0; i < post.size(); ++i) {
    out << "member " << i << " logweight " << format_double(post.log2_weights[i]) << "\n";
    save_hypothesis(out, post.members[static_cast<std::size_t>(i)]);
  }
}

EnsemblePosterior load_posterior(std::istream& in, const std::string& filename) {
  std::string line;
  int lineno = 0;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) throw ParseError(filename, lineno, std::string("missing ") + what);
    ++lineno;
    return std::istringstream(line);
  };
  {
    auto ls = next_line("header");
    std::string magic, version;
    ls >> magic >> version;
    if (magic != "postdyn-posterior" || version != "v1")
      throw ParseError(filename, lineno, "expected header 'postdyn-posterior v1'");
  }
  long t = 0;
  std::string term, context;
  int m = 0;
  {
    auto ls = next_line("t");
    std::string key;
    if (!(ls >> key >> t) || key != "t") throw ParseError(filename, lineno, "expected: t N");
  }
  {
    auto ls = next_line("initial_term");
    std::string key;
    if (!(ls >> key >> term) || key != "initial_term" ||
        (term != "stationary" && term != "condition"))
      throw ParseError(filename, lineno, "expected: initial_term stationary|condition");
  }
  {
    auto ls = next_line("context");
    std::string key;
    ls >> key;
    if (key != "context") throw ParseError(filename, lineno, "expected: context BITS");
    ls >> context;  // may be empty at t = 0
  }
  {
    auto ls = next_line("members");
    std::string key;
    if (!(ls >> key >> m) || key != "members" || m < 1)
      throw ParseError(filename, lineno, "expected: members M");
  }
  std::vector<MarkovHypothesis> members;
  Eigen::ArrayXd lw(m);
  for (int i = 0; i < m; ++i) {
    int idx = 0;
    double w = 0.0;
    {
      auto ls = next_line("member header");
      std::string key, wkey;
      if (!(ls >> key >> idx >> wkey >> w) || key != "member" || wkey != "logweight" || idx != i)
        throw ParseError(filename, lineno, "expected: member I logweight W");
    }
    // A hypothesis table: "order k" plus 2^k rows; collect and reparse.
    std::ostringstream block;
    {
      auto ls = next_line("order header");
      std::string key;
      int k;
      if (!(ls >> key >> k) || key != "order")
        throw ParseError(filename, lineno, "expected: order K");
      block << line << "\n";
      for (Eigen::Index r = 0; r < (Eigen::Index{1} << k); ++r) {
        next_line("context row");
        block << line << "\n";
      }
    }
    std::istringstream bs(block.str());
    members.push_back(load_hypothesis(bs, filename));
    lw[i] = w;
  }
  EnsemblePosterior post = ensemble_from_members(std::move(members),
                                                 term == "stationary" ? InitialTerm::stationary
                                                                      : InitialTerm::condition);
  post.log2_weights = lw;
  // Replay the stored context to rebuild history and warm marginals.
  for (char c : context) {
    if (c != '0' && c != '1') throw ParseError(filename, lineno, "context must be binary");
    advance_state(post, c - '0');
  }
  post.t = t;
  return post;
}

OrderPosterior make_order_posterior(const PriorSpec& prior, int k_max) {
  if (k_max < 0 || k_max > 12) throw std::invalid_argument("conjugate engine supports k_max <= 12");
  OrderPosterior op;
  op.alpha = prior.row_concentration;
  op.k_max = k_max;
  const int avail = std::min(k_max, prior.max_order());
  Eigen::ArrayXd w = prior.order_weights.head(avail + 1);
  w /= w.sum();
  op.order_log2_prior = Eigen::ArrayXd::Constant(k_max + 1, kNegInf);
  for (int k = 0; k <= avail; ++k) op.order_log2_prior[k] = std::log2(w[k]);
  op.order_log2_marginal = Eigen::ArrayXd::Zero(k_max + 1);
  op.counts.resize(static_cast<std::size_t>(k_max) + 1);
  for (int k = 0; k <= k_max; ++k)
    op.counts[static_cast<std::size_t>(k)].assign(std::size_t{2} << k, 0.0);
  return op;
}

void update(OrderPosterior& op, int a) {
  for (int k = 0; k <= op.k_max; ++k) {
    if (op.t < k) continue;  // conditioned on the first k symbols
    const std::uint32_t ctx = static_cast<std::uint32_t>(op.history) & ((1u << k) - 1u);
    auto& cnt = op.counts[static_cast<std::size_t>(k)];
    const double n0 = cnt[ctx * 2], n1 = cnt[ctx * 2 + 1];
    const double na = a == 0 ? n0 : n1;
    op.order_log2_marginal[k] += std::log2((op.alpha + na) / (2.0 * op.alpha + n0 + n1));
    cnt[ctx * 2 + static_cast<std::uint32_t>(a)] += 1.0;
  }
  op.history = (op.history << 1) | static_cast<std::uint64_t>(a & 1);
  op.t += 1;
}

Eigen::ArrayXd order_posterior_weights(const OrderPosterior& op) {
  Eigen::ArrayXd lw = op.order_log2_prior + op.order_log2_marginal;
  const double m = lw.maxCoeff();
  Eigen::ArrayXd w = (lw - m).unaryExpr([](double v) { return std::exp2(v); });
  for (Eigen::Index k = 0; k < w.size(); ++k)
    if (lw[k] == kNegInf) w[k] = 0.0;
  w /= w.sum();
  return w;
}

int order_posterior_mode(const OrderPosterior& op) {
  const Eigen::ArrayXd w = order_posterior_weights(op);
  Eigen::Index kmax = 0;
  w.maxCoeff(&kmax);
  return static_cast<int>(kmax);
}

Eigen::Vector2d predictive_dist(const OrderPosterior& op) {
  const Eigen::ArrayXd w = order_posterior_weights(op);
  Eigen::Vector2d out = Eigen::Vector2d::Zero();
  for (int k = 0; k <= op.k_max; ++k) {
    double p1 = 0.5;  // prior mean while the order-k context is still forming
    if (op.t >= k) {
      const std::uint32_t ctx = static_cast<std::uint32_t>(op.history) & ((1u << k) - 1u);
      const auto& cnt = op.counts[static_cast<std::size_t>(k)];
      const double n0 = cnt[ctx * 2], n1 = cnt[ctx * 2 + 1];
      p1 = (op.alpha + n1) / (2.0 * op.alpha + n0 + n1);
    }
    out(0) += w[k] * (1.0 - p1);
    out(1) += w[k] * p1;
  }
  return out;
}

double log2_marginal_likelihood(const OrderPosterior& op) {
  const Eigen::ArrayXd lw = op.order_log2_prior + op.order_log2_marginal;
  return log2_sum_exp2(std::span<const double>(lw.data(), static_cast<std::size_t>(lw.size())));
}

OrderPosterior conjugate_order_posterior(const PriorSpec& prior, PathView x, int k_max) {
  OrderPosterior op = make_order_posterior(prior, k_max);
  for (std::uint8_t a : x) update(op, a);
  return op;
}

}  // namespace postdyn
