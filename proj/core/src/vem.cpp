#include "sbanm/vem.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "parallel.hpp"
#include "sbanm/error.hpp"
#include "sbanm/init.hpp"

namespace sbanm {
namespace {

constexpr int kMaxBacktracks = 20;
constexpr double kBlendMassEps = 1e-12;

double safe_log(double x) { return std::log(std::max(x, kProbFloor)); }

double log_sum_exp(const double* v, std::size_t n) {
  double mx = v[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, v[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

// log(logistic(z)), stable for large |z|.
double log_logistic(double z) {
  if (z == std::numeric_limits<double>::infinity()) return 0.0;
  return z > 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

void require_stochastic(const VariationalState& s, std::size_t n, std::size_t Q) {
  if (static_cast<std::size_t>(s.tau.rows()) != n || static_cast<std::size_t>(s.tau.cols()) != Q) {
    throw DataError("tau has the wrong shape");
  }
  if (s.P.size() != Q) throw DataError("P has the wrong length");
}

// The per-block constant of the tau score.
std::vector<double> tau_offsets(const ModelParams& params, const VariationalState& state) {
  const double lp = safe_log(params.psi);
  const double lq = safe_log(1.0 - params.psi);
  std::vector<double> off(params.Q);
  for (std::size_t q = 0; q < params.Q; ++q) {
    off[q] = safe_log(params.alpha[q]) + state.P[q] * lp + (1.0 - state.P[q]) * lq - 1.0;
  }
  return off;
}

// Moments for S weight families at once. weight(i, j, out) fills S weights.
template <class WeightFn>
std::vector<WeightedMoments> accumulate(const MultilayerNetwork& net, std::size_t S, WeightFn weight) {
  const std::size_t n = net.num_nodes();
  const std::size_t K = net.num_layers();
  const auto Ki = static_cast<Eigen::Index>(K);

  std::vector<double> row_mass(n * S, 0.0);
  std::vector<double> row_sum(n * S * K, 0.0);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> w(S);
    double* mass = row_mass.data() + i * S;
    double* sum = row_sum.data() + i * S * K;
    for (std::size_t j = i + 1; j < n; ++j) {
      weight(i, j, w.data());
      const double* x = net.edge(i, j).data();
      for (std::size_t s = 0; s < S; ++s) {
        mass[s] += w[s];
        for (std::size_t k = 0; k < K; ++k) sum[s * K + k] += w[s] * x[k];
      }
    }
  }

  std::vector<WeightedMoments> out(S);
  for (std::size_t s = 0; s < S; ++s) {
    out[s].mean = Eigen::VectorXd::Zero(Ki);
    out[s].scatter = Eigen::MatrixXd::Zero(Ki, Ki);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < S; ++s) {
      out[s].mass += row_mass[i * S + s];
      for (std::size_t k = 0; k < K; ++k) out[s].mean[static_cast<Eigen::Index>(k)] += row_sum[(i * S + s) * K + k];
    }
  }
  for (auto& m : out) {
    if (m.mass > 0.0) m.mean /= m.mass;
  }

  std::vector<double> row_scatter(n * S * K * K, 0.0);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> w(S);
    std::vector<double> d(K);
    double* sc = row_scatter.data() + i * S * K * K;
    for (std::size_t j = i + 1; j < n; ++j) {
      weight(i, j, w.data());
      const double* x = net.edge(i, j).data();
      for (std::size_t s = 0; s < S; ++s) {
        if (w[s] == 0.0) continue;
        for (std::size_t k = 0; k < K; ++k) d[k] = x[k] - out[s].mean[static_cast<Eigen::Index>(k)];
        double* c = sc + s * K * K;
        for (std::size_t h = 0; h < K; ++h) {
          for (std::size_t k = 0; k < K; ++k) c[h * K + k] += w[s] * d[h] * d[k];
        }
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < S; ++s) {
      const double* c = row_scatter.data() + (i * S + s) * K * K;
      for (std::size_t h = 0; h < K; ++h) {
        for (std::size_t k = 0; k < K; ++k) {
          out[s].scatter(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(k)) += c[h * K + k];
        }
      }
    }
  }
  return out;
}

BlockParams mix(const BlockParams& from, const BlockParams& to, double s, std::size_t K) {
  BlockParams b = from;
  for (std::size_t k = 0; k < K; ++k) {
    b.mu[k] += s * (to.mu[k] - from.mu[k]);
    b.var[k] += s * (to.var[k] - from.var[k]);
  }
  b.rho = clamp_rho(from.rho + s * (to.rho - from.rho), K);
  return b;
}

NoiseParams mix(const NoiseParams& from, const NoiseParams& to, double s) {
  NoiseParams b = from;
  for (std::size_t k = 0; k < b.mu.size(); ++k) {
    b.mu[k] += s * (to.mu[k] - from.mu[k]);
    b.var[k] += s * (to.var[k] - from.var[k]);
  }
  return b;
}

// Backtracking toward a proposal: tries s = 1, 1/2, 1/4, ... and returns the
// first step whose objective does not fall below the current one, or 0.
template <class Objective>
double line_search(double current, Objective objective) {
  double s = 1.0;
  for (int it = 0; it <= kMaxBacktracks; ++it, s *= 0.5) {
    const double v = objective(s);
    if (std::isfinite(v) && v >= current) return s;
  }
  return 0.0;
}

// Part of the ELBO that depends on P for fixed tau and parameters.
double p_objective(std::span<const double> P, std::span<const double> gaps,
                   const Eigen::VectorXd& colsum, double psi) {
  const double lp = safe_log(psi);
  const double lq = safe_log(1.0 - psi);
  double v = 0.0;
  for (std::size_t q = 0; q < P.size(); ++q) {
    v += P[q] * gaps[q];
    v -= P[q] * safe_log(P[q]) + (1.0 - P[q]) * safe_log(1.0 - P[q]);
    v += colsum[static_cast<Eigen::Index>(q)] * (P[q] * lp + (1.0 - P[q]) * lq);
  }
  return v;
}

std::vector<double> mix(std::span<const double> from, std::span<const double> to, double s) {
  std::vector<double> out(from.begin(), from.end());
  for (std::size_t q = 0; q < out.size(); ++q) out[q] += s * (to[q] - from[q]);
  return out;
}

}  // namespace

void FitConfig::validate() const {
  if (Q < 1) throw UsageError("Q must be at least 1");
  if (max_outer < 1) throw UsageError("max_outer must be at least 1");
  if (tau_inner_max < 1) throw UsageError("tau_inner_max must be at least 1");
  if (!(tol_tau > 0.0) || !(tol_elbo > 0.0)) throw UsageError("tolerances must be positive");
  if (!(damping > 0.0 && damping <= 1.0)) throw UsageError("damping must lie in (0, 1]");
  if (svi) svi->validate();
}

std::vector<std::size_t> hard_assignments(const Eigen::MatrixXd& tau) {
  std::vector<std::size_t> z(static_cast<std::size_t>(tau.rows()));
  for (Eigen::Index i = 0; i < tau.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index q = 1; q < tau.cols(); ++q) {
      if (tau(i, q) > tau(i, best)) best = q;
    }
    z[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return z;
}

// ---------------------------------------------------------------------------
// E-step

Eigen::MatrixXd tau_fixed_point_map(const PairDensities& dens, const ModelParams& params,
                                    const VariationalState& state) {
  const std::size_t m = dens.size();
  const std::size_t Q = params.Q;
  const auto& nodes = dens.nodes();
  const std::vector<double> off = tau_offsets(params, state);
  const Eigen::MatrixXd& tau = state.tau;

  Eigen::MatrixXd out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(Q));
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t a = 0; a < m; ++a) {
    std::vector<double> acc(Q, 0.0);
    for (std::size_t b = 0; b < m; ++b) {
      if (b == a) continue;
      const double* ex = dens.excess(a < b ? dens.local_pair(a, b) : dens.local_pair(b, a));
      const auto jb = static_cast<Eigen::Index>(nodes[b]);
      for (std::size_t q = 0; q < Q; ++q) acc[q] += tau(jb, static_cast<Eigen::Index>(q)) * ex[q];
    }
    for (std::size_t q = 0; q < Q; ++q) acc[q] = off[q] + state.P[q] * acc[q];
    const double lse = log_sum_exp(acc.data(), Q);
    for (std::size_t q = 0; q < Q; ++q) {
      out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(q)) = std::exp(acc[q] - lse);
    }
  }
  return out;
}

TauEstimate estimate_tau(const PairDensities& dens, const ModelParams& params,
                         const VariationalState& state, const FitConfig& cfg) {
  const std::size_t n = static_cast<std::size_t>(state.tau.rows());
  if (!dens.covers_all(n)) throw DataError("estimate_tau needs densities over all nodes");
  require_stochastic(state, n, params.Q);

  TauEstimate est;
  VariationalState cur = state;
  for (std::size_t it = 1; it <= cfg.tau_inner_max; ++it) {
    Eigen::MatrixXd next = tau_fixed_point_map(dens, params, cur);
    next = cfg.damping * next + (1.0 - cfg.damping) * cur.tau;
    if (!next.allFinite()) throw NumericalError("tau update diverged at inner iteration " + std::to_string(it));
    for (Eigen::Index i = 0; i < next.rows(); ++i) next.row(i) /= next.row(i).sum();
    est.max_change = (next - cur.tau).cwiseAbs().maxCoeff();
    est.iterations = it;
    cur.tau = std::move(next);
    if (est.max_change < cfg.tol_tau) {
      est.converged = true;
      break;
    }
  }
  est.tau = std::move(cur.tau);
  return est;
}

TauEstimate estimate_tau(const MultilayerNetwork& net, const ModelParams& params,
                         const VariationalState& state, const FitConfig& cfg) {
  return estimate_tau(PairDensities(net, params), params, state, cfg);
}

std::vector<double> block_density_gaps(const PairDensities& dens, const Eigen::MatrixXd& tau) {
  const std::size_t m = dens.size();
  const std::size_t Q = dens.num_blocks();
  const auto& nodes = dens.nodes();
  std::vector<double> rows(m * Q, 0.0);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t a = 0; a < m; ++a) {
    const auto ia = static_cast<Eigen::Index>(nodes[a]);
    double* r = rows.data() + a * Q;
    for (std::size_t b = a + 1; b < m; ++b) {
      const double* ex = dens.excess(dens.local_pair(a, b));
      const auto jb = static_cast<Eigen::Index>(nodes[b]);
      for (std::size_t q = 0; q < Q; ++q) {
        const auto qi = static_cast<Eigen::Index>(q);
        r[q] += tau(ia, qi) * tau(jb, qi) * ex[q];
      }
    }
  }
  std::vector<double> gaps(Q, 0.0);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t q = 0; q < Q; ++q) gaps[q] += rows[a * Q + q];
  }
  return gaps;
}

std::vector<double> signal_probabilities(std::span<const double> gaps, double psi) {
  const std::size_t Q = gaps.size();
  const double prior = (psi <= 0.0) ? std::numeric_limits<double>::infinity() : std::log((1.0 - psi) / psi);
  std::vector<double> logn(Q);
  for (std::size_t q = 0; q < Q; ++q) logn[q] = log_logistic(-gaps[q] + prior);
  const double lse = log_sum_exp(logn.data(), Q);
  std::vector<double> P(Q);
  for (std::size_t q = 0; q < Q; ++q) {
    P[q] = std::clamp(1.0 - std::exp(logn[q] - lse), kProbFloor, 1.0 - kProbFloor);
  }
  return P;
}

std::vector<double> estimate_P(const PairDensities& dens, const VariationalState& state, double psi) {
  return signal_probabilities(block_density_gaps(dens, state.tau), psi);
}

std::vector<double> estimate_P(const MultilayerNetwork& net, const ModelParams& params,
                               const VariationalState& state) {
  return estimate_P(PairDensities(net, params), state, params.psi);
}

// ---------------------------------------------------------------------------
// M-step

std::vector<double> m_step_alpha(const VariationalState& state) {
  const Eigen::VectorXd col = state.tau.colwise().sum().transpose();
  std::vector<double> alpha(static_cast<std::size_t>(col.size()));
  const double n = static_cast<double>(state.tau.rows());
  for (Eigen::Index q = 0; q < col.size(); ++q) alpha[static_cast<std::size_t>(q)] = col[q] / n;
  return alpha;
}

MStepMoments compute_moments(const MultilayerNetwork& net, const VariationalState& state) {
  const std::size_t Q = static_cast<std::size_t>(state.tau.cols());
  require_stochastic(state, net.num_nodes(), Q);
  const Eigen::MatrixXd& tau = state.tau;
  const Eigen::VectorXd rs = tau.rowwise().sum();
  const std::vector<double>& P = state.P;

  // Families: blocks 0..Q-1, then cross, noise_within, ambient.
  auto weight = [&](std::size_t i, std::size_t j, double* w) {
    const auto ii = static_cast<Eigen::Index>(i);
    const auto jj = static_cast<Eigen::Index>(j);
    double within = 0.0;
    double noise = 0.0;
    for (std::size_t q = 0; q < Q; ++q) {
      const double t = tau(ii, static_cast<Eigen::Index>(q)) * tau(jj, static_cast<Eigen::Index>(q));
      w[q] = t;
      within += t;
      noise += t * (1.0 - P[q]);
    }
    const double cross = std::max(rs[ii] * rs[jj] - within, 0.0);
    w[Q] = cross;
    w[Q + 1] = noise;
    w[Q + 2] = cross + noise;
  };
  std::vector<WeightedMoments> all = accumulate(net, Q + 3, weight);

  MStepMoments out;
  out.ambient = std::move(all[Q + 2]);
  out.noise_within = std::move(all[Q + 1]);
  out.cross = std::move(all[Q]);
  all.resize(Q);
  out.block = std::move(all);
  return out;
}

double weighted_log_likelihood(const WeightedMoments& m, std::span<const double> mu,
                               const Eigen::MatrixXd& cov) {
  if (m.mass == 0.0) return 0.0;
  const Eigen::Index K = cov.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  Eigen::VectorXd d(K);
  for (Eigen::Index k = 0; k < K; ++k) d[k] = m.mean[k] - mu[static_cast<std::size_t>(k)];
  const Eigen::MatrixXd second = m.scatter + m.mass * d * d.transpose();
  const double tr = llt.solve(second).trace();
  return -0.5 * (m.mass * (static_cast<double>(K) * std::log(2.0 * std::numbers::pi) + logdet) + tr);
}

BlockEstimate block_from_moments(const WeightedMoments& m, double signal_prob, const NoiseParams& noise) {
  const std::size_t K = noise.mu.size();
  if (!(m.mass >= kDegenerateMass)) return {noise_as_block(noise), true};
  const double p = signal_prob;

  BlockEstimate est;
  BlockParams& b = est.params;
  b.mu.resize(K);
  b.var.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    b.mu[k] = p * m.mean[static_cast<Eigen::Index>(k)] + (1.0 - p) * noise.mu[k];
  }
  // Second moment about the blended mean.
  Eigen::VectorXd d(static_cast<Eigen::Index>(K));
  for (std::size_t k = 0; k < K; ++k) d[static_cast<Eigen::Index>(k)] = m.mean[static_cast<Eigen::Index>(k)] - b.mu[k];
  const Eigen::MatrixXd T = m.scatter / m.mass + d * d.transpose();
  for (std::size_t k = 0; k < K; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    b.var[k] = std::max(p * T(kk, kk) + (1.0 - p) * noise.var[k], kVarianceFloor);
  }
  if (K < 2) {
    b.rho = 0.0;
    return est;
  }
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t h = 0; h < K; ++h) {
    for (std::size_t k = h + 1; k < K; ++k) {
      const double c = p * T(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(k));
      best = std::max(best, c / std::sqrt(b.var[h] * b.var[k]));
    }
  }
  b.rho = clamp_rho(best, K);
  return est;
}

BlockEstimate m_step_block(const MultilayerNetwork& net, const VariationalState& state, std::size_t q,
                           const NoiseParams& noise) {
  if (q >= state.P.size()) throw DataError("block index out of range");
  const MStepMoments mom = compute_moments(net, state);
  return block_from_moments(mom.block[q], state.P[q], noise);
}

NoiseParams noise_from_moments(const WeightedMoments& cross, const WeightedMoments& within, double psi) {
  const double wc = cross.mass > kBlendMassEps ? psi : 0.0;
  const double wn = within.mass > kBlendMassEps ? 1.0 - psi : 0.0;
  const double total = wc + wn;
  if (!(total > 0.0)) throw NumericalError("noise estimate undefined: no pair carries noise weight");
  const double a = wc / total;
  const double b = wn / total;
  const auto K = std::max(cross.mean.size(), within.mean.size());

  NoiseParams out;
  out.mu.resize(static_cast<std::size_t>(K));
  out.var.resize(static_cast<std::size_t>(K));
  for (Eigen::Index k = 0; k < K; ++k) {
    double mu = 0.0;
    if (a > 0.0) mu += a * cross.mean[k];
    if (b > 0.0) mu += b * within.mean[k];
    double v = 0.0;
    if (a > 0.0) {
      const double d = cross.mean[k] - mu;
      v += a * (cross.scatter(k, k) / cross.mass + d * d);
    }
    if (b > 0.0) {
      const double d = within.mean[k] - mu;
      v += b * (within.scatter(k, k) / within.mass + d * d);
    }
    out.mu[static_cast<std::size_t>(k)] = mu;
    out.var[static_cast<std::size_t>(k)] = std::max(v, kVarianceFloor);
  }
  return out;
}

NoiseParams m_step_noise(const MultilayerNetwork& net, const VariationalState& state, double psi) {
  const MStepMoments mom = compute_moments(net, state);
  return noise_from_moments(mom.cross, mom.noise_within, psi);
}

// ---------------------------------------------------------------------------
// ELBO

ElboTerms elbo_terms(const PairDensities& dens, const ModelParams& params, const VariationalState& state) {
  const std::size_t n = static_cast<std::size_t>(state.tau.rows());
  const std::size_t Q = params.Q;
  if (!dens.covers_all(n)) throw DataError("elbo needs densities over all nodes");
  require_stochastic(state, n, Q);
  const Eigen::MatrixXd& tau = state.tau;

  std::vector<double> rows(n, 0.0);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    double s = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::size_t p = dens.local_pair(i, j);
      const double* ex = dens.excess(p);
      const auto jj = static_cast<Eigen::Index>(j);
      double e = dens.noise(p);
      for (std::size_t q = 0; q < Q; ++q) {
        const auto qi = static_cast<Eigen::Index>(q);
        e += state.P[q] * tau(ii, qi) * tau(jj, qi) * ex[q];
      }
      s += e;
    }
    rows[i] = s;
  }

  ElboTerms t;
  for (double r : rows) t.likelihood += r;
  const double lp = safe_log(params.psi);
  const double lq = safe_log(1.0 - params.psi);
  for (std::size_t q = 0; q < Q; ++q) {
    const auto qi = static_cast<Eigen::Index>(q);
    const double la = safe_log(params.alpha[q]);
    const double P = state.P[q];
    double col = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = tau(static_cast<Eigen::Index>(i), qi);
      col += v;
      t.tau_entropy -= v * safe_log(v);
    }
    t.membership_prior += col * la;
    t.signal_entropy -= P * safe_log(P) + (1.0 - P) * safe_log(1.0 - P);
    t.hierarchy_prior += col * (P * lp + (1.0 - P) * lq);
  }
  if (!std::isfinite(t.likelihood)) throw NumericalError("non-finite ELBO term: expected log-likelihood");
  if (!std::isfinite(t.membership_prior)) throw NumericalError("non-finite ELBO term: membership prior");
  if (!std::isfinite(t.tau_entropy)) throw NumericalError("non-finite ELBO term: tau entropy");
  if (!std::isfinite(t.signal_entropy)) throw NumericalError("non-finite ELBO term: signal entropy");
  if (!std::isfinite(t.hierarchy_prior)) throw NumericalError("non-finite ELBO term: hierarchy prior");
  return t;
}

ElboTerms elbo_terms(const MultilayerNetwork& net, const ModelParams& params, const VariationalState& state) {
  return elbo_terms(PairDensities(net, params), params, state);
}

double elbo(const MultilayerNetwork& net, const ModelParams& params, const VariationalState& state) {
  return elbo_terms(net, params, state).total();
}

// ---------------------------------------------------------------------------
// Driver

ModelParams initial_params(const MultilayerNetwork& net, const VariationalState& state, std::size_t Q) {
  ModelParams params;
  params.Q = Q;
  params.psi = psi(Q);
  params.alpha = m_step_alpha(state);
  const MStepMoments mom = compute_moments(net, state);
  // Noise from between-cluster pairs alone; blocks as plain signal blocks.
  params.noise = mom.cross.mass > kBlendMassEps ? noise_from_moments(mom.cross, mom.noise_within, 1.0)
                                                : noise_from_moments(mom.cross, mom.noise_within, 0.0);
  params.blocks.reserve(Q);
  for (std::size_t q = 0; q < Q; ++q) {
    params.blocks.push_back(block_from_moments(mom.block[q], 1.0, params.noise).params);
  }
  return params;
}

namespace {

struct SweepResult {
  double max_tau_change = 0.0;
  std::vector<std::size_t> degenerate;
};

// Guarded tau, P and parameter updates of one full-batch outer iteration.
SweepResult full_batch_sweep(const MultilayerNetwork& net, const FitConfig& cfg, const PairDensities& dens,
                             ModelParams& params, VariationalState& state, bool guard_p) {
  SweepResult res;
  const std::size_t Q = params.Q;
  const std::size_t K = net.num_layers();

  // tau
  const double before = elbo_terms(dens, params, state).total();
  const TauEstimate est = estimate_tau(dens, params, state, cfg);
  const Eigen::MatrixXd old_tau = state.tau;
  VariationalState trial = state;
  const double step = line_search(before, [&](double s) {
    trial.tau = old_tau + s * (est.tau - old_tau);
    return elbo_terms(dens, params, trial).total();
  });
  if (step > 0.0) {
    state.tau = old_tau + step * (est.tau - old_tau);
    for (Eigen::Index i = 0; i < state.tau.rows(); ++i) state.tau.row(i) /= state.tau.row(i).sum();
  }
  res.max_tau_change = (state.tau - old_tau).cwiseAbs().maxCoeff();

  // P
  const std::vector<double> gaps = block_density_gaps(dens, state.tau);
  const std::vector<double> proposal = signal_probabilities(gaps, params.psi);
  if (guard_p) {
    const Eigen::VectorXd col = state.tau.colwise().sum().transpose();
    const std::vector<double> old_p = state.P;
    const double cur = p_objective(old_p, gaps, col, params.psi);
    const double s = line_search(cur, [&](double s) { return p_objective(mix(old_p, proposal, s), gaps, col, params.psi); });
    state.P = mix(old_p, proposal, s);
  } else {
    state.P = proposal;
  }

  // alpha
  params.alpha = m_step_alpha(state);

  const MStepMoments mom = compute_moments(net, state);

  // noise
  {
    const NoiseParams prop = noise_from_moments(mom.cross, mom.noise_within, params.psi);
    const NoiseParams old = params.noise;
    const double cur = weighted_log_likelihood(mom.ambient, old.mu, covariance(old));
    const double s = line_search(cur, [&](double s) {
      const NoiseParams t = mix(old, prop, s);
      return weighted_log_likelihood(mom.ambient, t.mu, covariance(t));
    });
    params.noise = mix(old, prop, s);
  }

  // blocks
  for (std::size_t q = 0; q < Q; ++q) {
    const BlockEstimate prop = block_from_moments(mom.block[q], state.P[q], params.noise);
    if (prop.degenerate) {
      res.degenerate.push_back(q);
      params.blocks[q] = prop.params;
      continue;
    }
    const BlockParams old = params.blocks[q];
    const double cur = weighted_log_likelihood(mom.block[q], old.mu, covariance(old));
    const double s = line_search(cur, [&](double s) {
      const BlockParams t = mix(old, prop.params, s, K);
      return weighted_log_likelihood(mom.block[q], t.mu, covariance(t));
    });
    params.blocks[q] = mix(old, prop.params, s, K);
  }
  return res;
}

void plain_m_step(const MultilayerNetwork& net, ModelParams& params, const VariationalState& state,
                  std::vector<std::size_t>& degenerate) {
  params.alpha = m_step_alpha(state);
  const MStepMoments mom = compute_moments(net, state);
  params.noise = noise_from_moments(mom.cross, mom.noise_within, params.psi);
  for (std::size_t q = 0; q < params.Q; ++q) {
    const BlockEstimate est = block_from_moments(mom.block[q], state.P[q], params.noise);
    if (est.degenerate) degenerate.push_back(q);
    params.blocks[q] = est.params;
  }
}

double min_of(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }

}  // namespace

FitResult fit(const MultilayerNetwork& net, const FitConfig& cfg) {
  cfg.validate();
  if (net.num_nodes() <= cfg.Q) throw UsageError("need more nodes than blocks");
  detail::ThreadScope threads(cfg.threads);
  InitConfig ic;
  ic.Q = cfg.Q;
  ic.kmeans_restarts = cfg.kmeans_restarts;
  ic.seed = cfg.seed;
  return fit_from(net, cfg, spectral_init(net, ic));
}

FitResult fit_from(const MultilayerNetwork& net, const FitConfig& cfg, VariationalState initial) {
  cfg.validate();
  const std::size_t n = net.num_nodes();
  const std::size_t Q = cfg.Q;
  if (n <= Q) throw UsageError("need more nodes than blocks");
  if (initial.P.empty()) {
    initial.P.assign(Q, std::clamp(1.0 - 1.0 / static_cast<double>(Q), kProbFloor, 1.0 - kProbFloor));
  }
  require_stochastic(initial, n, Q);
  detail::ThreadScope threads(cfg.threads);

  FitResult res;
  VariationalState state = std::move(initial);
  ModelParams params = initial_params(net, state, Q);

  auto report = [&](const IterationReport& r) {
    if (cfg.on_iteration) cfg.on_iteration(r);
  };

  if (cfg.svi) {
    SviConfig scfg = *cfg.svi;
    for (std::size_t t = 0; t < cfg.max_outer && subsample_size(t, scfg, n) < n; ++t) {
      const Eigen::MatrixXd old_tau = state.tau;
      state = svi_e_step(net, params, state, t, scfg);
      IterationReport r;
      r.iteration = t + 1;
      r.stochastic = true;
      r.max_tau_change = (state.tau - old_tau).cwiseAbs().maxCoeff();
      plain_m_step(net, params, state, r.degenerate_blocks);
      r.min_signal_prob = min_of(state.P);
      r.elbo = elbo(net, params, state);
      res.svi_steps = t + 1;
      report(r);
    }
  }

  auto dens = std::make_unique<PairDensities>(net, params);
  double best = -std::numeric_limits<double>::infinity();
  ModelParams best_params = params;
  VariationalState best_state = state;
  double prev = 0.0;

  for (std::size_t it = 1; it <= cfg.max_outer; ++it) {
    const SweepResult sweep = full_batch_sweep(net, cfg, *dens, params, state, it > 1);
    dens = std::make_unique<PairDensities>(net, params);
    const double value = elbo_terms(*dens, params, state).total();
    res.elbo_trace.push_back(value);
    res.iterations = it;

    IterationReport r;
    r.iteration = it;
    r.elbo = value;
    r.max_tau_change = sweep.max_tau_change;
    r.min_signal_prob = min_of(state.P);
    r.degenerate_blocks = sweep.degenerate;
    report(r);

    if (value > best) {
      best = value;
      best_params = params;
      best_state = state;
    }
    if (it > 1) {
      const double rel = std::abs(value - prev) / std::max(std::abs(prev), std::numeric_limits<double>::min());
      if (rel < cfg.tol_elbo || sweep.max_tau_change < cfg.tol_tau) {
        res.converged = true;
        break;
      }
    }
    prev = value;
  }

  if (!res.converged) {
    params = std::move(best_params);
    state = std::move(best_state);
  }

  std::size_t nb = 0;
  for (std::size_t q = 1; q < Q; ++q) {
    if (state.P[q] < state.P[nb]) nb = q;
  }
  params.noise_block = nb;
  params.blocks[nb] = noise_as_block(params.noise);
  res.elbo = elbo(net, params, state);
  res.hard_membership = hard_assignments(state.tau);
  res.params = std::move(params);
  res.state = std::move(state);
  return res;
}

}  // namespace sbanm
