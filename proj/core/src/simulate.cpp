#include "sbanm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "parallel.hpp"
#include "sbanm/error.hpp"

namespace sbanm {
namespace {

constexpr double kMinSimVariance = 0.05;

std::vector<double> draw_dirichlet(std::size_t Q, double conc, Rng& rng) {
  std::gamma_distribution<double> g(conc, 1.0);
  std::vector<double> a(Q);
  double s = 0.0;
  for (auto& v : a) {
    v = g(rng);
    s += v;
  }
  for (auto& v : a) v /= s;
  return a;
}

}  // namespace

void SimSpec::validate() const {
  if (K < 1) throw UsageError("need at least one layer");
  if (q_min < 2 || q_max < q_min) throw UsageError("block range must satisfy 2 <= qmin <= qmax");
  if (prior_means.size() != K || noise_mu.size() != K || noise_var.size() != K) {
    throw UsageError("prior vectors must have one entry per layer");
  }
  for (double v : noise_var) {
    if (!(v > 0.0)) throw UsageError("noise variances must be positive");
  }
  if (!(prior_sd > 0.0) || !(dirichlet_conc > 0.0)) throw UsageError("prior scales must be positive");
  if (!(rho_lo <= rho_hi)) throw UsageError("empty correlation range");
  if (!(bhatt_keep_frac > 0.0 && bhatt_keep_frac <= 1.0)) throw UsageError("keep fraction must lie in (0, 1]");
  if (n < q_max * min_block_size) throw UsageError("too few nodes for the block count");
}

SimSpec default_spec(std::size_t n, std::size_t K, std::size_t q_min, std::size_t q_max) {
  SimSpec s;
  s.n = n;
  s.K = K;
  s.q_min = q_min;
  s.q_max = q_max;
  if (K == 2) {
    s.prior_means = {0.0, 2.0};
    s.noise_mu = {-1.0, 0.0};
  } else if (K == 3) {
    s.prior_means = {-2.0, 0.0, 2.0};
    s.noise_mu = {-3.0, -1.0, 1.0};
  } else {
    for (std::size_t k = 0; k < K; ++k) {
      const double m = 2.0 * static_cast<double>(k) - (static_cast<double>(K) - 1.0);
      s.prior_means.push_back(m);
      s.noise_mu.push_back(m - 1.0);
    }
  }
  s.noise_var.assign(K, 2.0);
  return s;
}

ModelParams gen_params(const SimSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t K = spec.K;
  std::uniform_int_distribution<std::size_t> qd(spec.q_min, spec.q_max);
  const std::size_t Q = qd(rng);

  ModelParams p;
  p.Q = Q;
  p.psi = psi(Q);
  p.noise_block = 0;
  p.noise.mu = spec.noise_mu;
  p.noise.var = spec.noise_var;
  p.blocks.push_back(noise_as_block(p.noise));

  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(spec.rho_lo, spec.rho_hi);
  for (std::size_t q = 1; q < Q; ++q) {
    BlockParams b;
    b.mu.resize(K);
    b.var.resize(K);
    for (std::size_t k = 0; k < K; ++k) b.mu[k] = spec.prior_means[k] + spec.prior_sd * z(rng);
    for (std::size_t k = 0; k < K; ++k) b.var[k] = std::max(std::abs(spec.prior_sd * z(rng)), kMinSimVariance);
    b.rho = spec.rho_lo == spec.rho_hi ? clamp_rho(spec.rho_lo, K) : clamp_rho(u(rng), K);
    if (K < 2) b.rho = 0.0;
    p.blocks.push_back(std::move(b));
  }
  p.alpha = draw_dirichlet(Q, spec.dirichlet_conc, rng);
  return p;
}

std::vector<std::size_t> gen_sizes(std::size_t n, const std::vector<double>& alpha, std::size_t min_size,
                                   Rng& rng) {
  const std::size_t Q = alpha.size();
  if (Q == 0 || n < Q * min_size) throw UsageError("too few nodes for the block count");
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::vector<std::size_t> sizes(Q, 0);
    std::size_t left = n;
    double mass = 1.0;
    for (std::size_t q = 0; q + 1 < Q; ++q) {
      const double pq = std::clamp(alpha[q] / mass, 0.0, 1.0);
      std::binomial_distribution<std::size_t> b(left, pq);
      sizes[q] = b(rng);
      left -= sizes[q];
      mass -= alpha[q];
    }
    sizes[Q - 1] = left;
    if (std::all_of(sizes.begin(), sizes.end(), [&](std::size_t s) { return s >= min_size; })) return sizes;
  }
  throw NumericalError("could not draw block sizes above the minimum");
}

std::size_t interstitial_pairs(const std::vector<std::size_t>& sizes) {
  const std::size_t n = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  std::size_t within = 0;
  for (std::size_t s : sizes) within += s * (s - (s > 0 ? 1 : 0)) / 2;
  return n * (n - 1) / 2 - within;
}

SimNetwork gen_network(const ModelParams& params, const std::vector<std::size_t>& sizes, Rng& rng) {
  const std::size_t Q = params.Q;
  const std::size_t K = params.num_layers();
  if (sizes.size() != Q) throw UsageError("one size per block required");
  for (std::size_t s : sizes) {
    if (s < 1) throw UsageError("block sizes must be positive");
  }
  const std::size_t n = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});

  std::vector<std::size_t> z;
  z.reserve(n);
  for (std::size_t q = 0; q < Q; ++q) z.insert(z.end(), sizes[q], q);
  std::shuffle(z.begin(), z.end(), rng);

  // Cholesky factors of every law; index Q is the noise law.
  std::vector<Eigen::MatrixXd> chol;
  std::vector<const std::vector<double>*> means;
  for (std::size_t q = 0; q < Q; ++q) {
    Eigen::LLT<Eigen::MatrixXd> llt(covariance(params.blocks[q]));
    if (llt.info() != Eigen::Success) throw NumericalError("covariance not positive definite");
    chol.push_back(llt.matrixL());
    means.push_back(&params.blocks[q].mu);
  }
  chol.push_back(covariance(params.noise).cwiseSqrt());
  means.push_back(&params.noise.mu);

  SimNetwork out{MultilayerNetwork(n, K), z};
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd e(static_cast<Eigen::Index>(K));
  std::vector<double> x(K);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::size_t law = (z[i] == z[j] && z[i] != params.noise_block) ? z[i] : Q;
      for (auto& v : e) v = nd(rng);
      const Eigen::VectorXd y = chol[law] * e;
      for (std::size_t k = 0; k < K; ++k) x[k] = (*means[law])[k] + y[static_cast<Eigen::Index>(k)];
      out.net.set_edge(i, j, x);
    }
  }
  return out;
}

double bhattacharyya(std::span<const double> mu_p, const Eigen::MatrixXd& cov_p, std::span<const double> mu_q,
                     const Eigen::MatrixXd& cov_q) {
  const Eigen::Index K = cov_p.rows();
  const Eigen::MatrixXd avg = 0.5 * (cov_p + cov_q);
  Eigen::LLT<Eigen::MatrixXd> llt(avg);
  if (llt.info() != Eigen::Success) throw NumericalError("singular average covariance");
  Eigen::VectorXd d(K);
  for (Eigen::Index k = 0; k < K; ++k) d[k] = mu_p[static_cast<std::size_t>(k)] - mu_q[static_cast<std::size_t>(k)];
  const double maha = d.dot(llt.solve(d));
  auto logdet = [](const Eigen::MatrixXd& m) {
    Eigen::LLT<Eigen::MatrixXd> f(m);
    if (f.info() != Eigen::Success) throw NumericalError("covariance not positive definite");
    return 2.0 * Eigen::MatrixXd(f.matrixL()).diagonal().array().log().sum();
  };
  return maha / 8.0 + 0.5 * (logdet(avg) - 0.5 * (logdet(cov_p) + logdet(cov_q)));
}

double bhattacharyya(const BlockParams& p, const BlockParams& q) {
  return bhattacharyya(p.mu, covariance(p), q.mu, covariance(q));
}

double min_block_distance(const ModelParams& params) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < params.Q; ++a) {
    for (std::size_t b = a + 1; b < params.Q; ++b) {
      best = std::min(best, bhattacharyya(params.blocks[a], params.blocks[b]));
    }
  }
  return best;
}

std::vector<std::size_t> filter_separable(const std::vector<double>& scores, double keep_frac) {
  if (!(keep_frac > 0.0 && keep_frac <= 1.0)) throw UsageError("keep fraction must lie in (0, 1]");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto keep = static_cast<std::size_t>(std::ceil(keep_frac * static_cast<double>(scores.size()) - 1e-9));
  idx.resize(std::min(keep, idx.size()));
  return idx;
}

std::vector<Candidate> simulate_candidates(const SimSpec& spec, std::size_t count) {
  spec.validate();
  if (count < 1) throw UsageError("need at least one candidate");
  detail::ThreadScope threads(spec.threads);
  std::vector<Candidate> all(count);
  std::vector<double> scores(count);
  // Parameters are cheap; draw them all, then generate networks for the kept ones.
  for (std::size_t c = 0; c < count; ++c) {
    Rng rng = make_rng(spec.seed, "candidate", c);
    all[c].index = c;
    all[c].params = gen_params(spec, rng);
    all[c].sizes = gen_sizes(spec.n, all[c].params.alpha, spec.min_block_size, rng);
    all[c].min_distance = min_block_distance(all[c].params);
    scores[c] = all[c].min_distance;
  }
  const std::vector<std::size_t> keep = filter_separable(scores, spec.bhatt_keep_frac);
  std::vector<Candidate> out(keep.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t r = 0; r < keep.size(); ++r) {
    Candidate& c = all[keep[r]];
    Rng rng = make_rng(spec.seed, "network", c.index);
    c.data = gen_network(c.params, c.sizes, rng);
    out[r] = std::move(c);
  }
  return out;
}

std::pair<ModelParams, std::vector<std::size_t>> experiment2_spec() {
  ModelParams p;
  p.Q = 4;
  p.psi = psi(4);
  p.noise_block = 0;
  p.noise.mu = {5.0, 10.0, 15.0};
  p.noise.var = {7.88, 7.32, 6.69};
  p.blocks = {
      {{5.0, 10.0, 15.0}, {7.88, 7.32, 6.69}, 0.0},
      {{11.98, 16.86, 16.69}, {13.11, 7.67, 4.15}, 0.40},
      {{11.55, 16.49, 21.25}, {0.31, 4.89, 0.06}, 0.15},
      {{10.39, 14.81, 21.08}, {1.16, 1.03, 4.36}, 0.34},
  };
  std::vector<std::size_t> sizes = {76, 97, 93, 34};
  p.alpha.resize(4);
  for (std::size_t q = 0; q < 4; ++q) p.alpha[q] = static_cast<double>(sizes[q]) / 300.0;
  return {p, sizes};
}

}  // namespace sbanm
