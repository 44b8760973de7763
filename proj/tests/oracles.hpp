#pragma once

// Slow, direct reference implementations used only by the tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sbanm/model.hpp"
#include "sbanm/network.hpp"
#include "sbanm/simulate.hpp"

namespace oracle {

// Gaussian log-density through an explicit inverse and determinant.
inline double mvn_logpdf(const std::vector<double>& x, const std::vector<double>& mu, const Eigen::MatrixXd& cov) {
  const auto K = cov.rows();
  Eigen::VectorXd d(K);
  for (Eigen::Index k = 0; k < K; ++k) d[k] = x[static_cast<std::size_t>(k)] - mu[static_cast<std::size_t>(k)];
  const Eigen::MatrixXd inv = cov.inverse();
  return -0.5 * static_cast<double>(K) * std::log(2.0 * std::numbers::pi) - 0.5 * std::log(cov.determinant()) -
         0.5 * d.dot(inv * d);
}

inline std::vector<double> edge(const sbanm::MultilayerNetwork& net, std::size_t i, std::size_t j) {
  auto e = net.edge(i, j);
  return {e.begin(), e.end()};
}

struct Moments {
  double mass = 0.0;
  std::vector<double> mean;
  std::vector<std::vector<double>> second;  // about `mean`, divided by mass
};

// Weighted moments over ordered pairs i != j; weight(i, j) must be symmetric.
template <class W>
Moments ordered_pair_moments(const sbanm::MultilayerNetwork& net, W weight) {
  const std::size_t n = net.num_nodes();
  const std::size_t K = net.num_layers();
  Moments m;
  m.mean.assign(K, 0.0);
  m.second.assign(K, std::vector<double>(K, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double w = weight(i, j);
      m.mass += w;
      const auto x = edge(net, i, j);
      for (std::size_t k = 0; k < K; ++k) m.mean[k] += w * x[k];
    }
  }
  for (auto& v : m.mean) v /= m.mass;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double w = weight(i, j);
      const auto x = edge(net, i, j);
      for (std::size_t h = 0; h < K; ++h) {
        for (std::size_t k = 0; k < K; ++k) m.second[h][k] += w * (x[h] - m.mean[h]) * (x[k] - m.mean[k]);
      }
    }
  }
  for (auto& r : m.second) {
    for (auto& v : r) v /= m.mass;
  }
  m.mass /= 2.0;  // each unordered pair counted twice
  return m;
}

// Block estimate written out term by term.
inline sbanm::BlockParams block_estimate(const sbanm::MultilayerNetwork& net, const Eigen::MatrixXd& tau,
                                         double P, std::size_t q, const sbanm::NoiseParams& noise) {
  const auto qi = static_cast<Eigen::Index>(q);
  const Moments m = ordered_pair_moments(net, [&](std::size_t i, std::size_t j) {
    return tau(static_cast<Eigen::Index>(i), qi) * tau(static_cast<Eigen::Index>(j), qi);
  });
  const std::size_t K = net.num_layers();
  sbanm::BlockParams b;
  for (std::size_t k = 0; k < K; ++k) b.mu.push_back(P * m.mean[k] + (1.0 - P) * noise.mu[k]);
  std::vector<std::vector<double>> about(K, std::vector<double>(K));
  for (std::size_t h = 0; h < K; ++h) {
    for (std::size_t k = 0; k < K; ++k) {
      about[h][k] = m.second[h][k] + (m.mean[h] - b.mu[h]) * (m.mean[k] - b.mu[k]);
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    b.var.push_back(std::max(P * about[k][k] + (1.0 - P) * noise.var[k], sbanm::kVarianceFloor));
  }
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t h = 0; h < K; ++h) {
    for (std::size_t k = h + 1; k < K; ++k) best = std::max(best, P * about[h][k] / std::sqrt(b.var[h] * b.var[k]));
  }
  b.rho = K < 2 ? 0.0 : sbanm::clamp_rho(best, K);
  return b;
}

// psi-weighted blend of cross-block and noise-weighted within-block moments.
inline sbanm::NoiseParams noise_estimate(const sbanm::MultilayerNetwork& net, const Eigen::MatrixXd& tau,
                                         const std::vector<double>& P, double psi) {
  const std::size_t Q = P.size();
  auto cross_w = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t q = 0; q < Q; ++q) {
      for (std::size_t l = 0; l < Q; ++l) {
        if (q != l) s += tau(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) *
                         tau(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l));
      }
    }
    return s;
  };
  auto within_w = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t q = 0; q < Q; ++q) {
      s += tau(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) *
           tau(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(q)) * (1.0 - P[q]);
    }
    return s;
  };
  const Moments c = ordered_pair_moments(net, cross_w);
  const Moments w = ordered_pair_moments(net, within_w);
  double a = c.mass > 1e-12 ? psi : 0.0;
  double b = w.mass > 1e-12 ? 1.0 - psi : 0.0;
  const double t = a + b;
  a /= t;
  b /= t;
  sbanm::NoiseParams out;
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    double mu = 0.0;
    if (a > 0) mu += a * c.mean[k];
    if (b > 0) mu += b * w.mean[k];
    double v = 0.0;
    if (a > 0) v += a * (c.second[k][k] + (c.mean[k] - mu) * (c.mean[k] - mu));
    if (b > 0) v += b * (w.second[k][k] + (w.mean[k] - mu) * (w.mean[k] - mu));
    out.mu.push_back(mu);
    out.var.push_back(std::max(v, sbanm::kVarianceFloor));
  }
  return out;
}

// Complete-data log-likelihood of a hard labelling.
inline double complete_loglik(const sbanm::MultilayerNetwork& net, const sbanm::ModelParams& p,
                              const std::vector<std::size_t>& z) {
  double s = 0.0;
  for (std::size_t i = 0; i < net.num_nodes(); ++i) {
    s += std::log(p.alpha[z[i]]);
    for (std::size_t j = i + 1; j < net.num_nodes(); ++j) {
      const auto x = edge(net, i, j);
      if (z[i] == z[j] && z[i] != p.noise_block) {
        s += mvn_logpdf(x, p.blocks[z[i]].mu, sbanm::covariance(p.blocks[z[i]]));
      } else {
        s += mvn_logpdf(x, p.noise.mu, sbanm::covariance(p.noise));
      }
    }
  }
  return s;
}

// Labelling maximising complete_loglik over all Q^n assignments.
inline std::vector<std::size_t> brute_force_labels(const sbanm::MultilayerNetwork& net, const sbanm::ModelParams& p) {
  const std::size_t n = net.num_nodes();
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= p.Q;
  std::vector<std::size_t> best;
  double best_v = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> z(n);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = c % p.Q;
      c /= p.Q;
    }
    const double v = complete_loglik(net, p, z);
    if (v > best_v) {
      best_v = v;
      best = z;
    }
  }
  return best;
}

// ARI from the four pair counts.
inline double ari_pairs(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  double ss = 0, sd = 0, ds = 0, dd = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool sa = a[i] == a[j];
      const bool sb = b[i] == b[j];
      if (sa && sb) ss += 1;
      else if (sa) sd += 1;
      else if (sb) ds += 1;
      else dd += 1;
    }
  }
  const double den = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
  return den == 0.0 ? 1.0 : 2.0 * (ss * dd - sd * ds) / den;
}

// Lloyd's algorithm from many uniformly random initial partitions.
inline std::pair<std::vector<std::size_t>, double> kmeans_many(const Eigen::MatrixXd& x, std::size_t k,
                                                               std::size_t restarts, unsigned seed) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::mt19937 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  std::vector<std::size_t> best;
  double best_w = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    std::vector<std::size_t> z(n);
    for (auto& v : z) v = pick(rng);
    for (int it = 0; it < 200; ++it) {
      Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), x.cols());
      std::vector<double> cnt(k, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        c.row(static_cast<Eigen::Index>(z[i])) += x.row(static_cast<Eigen::Index>(i));
        cnt[z[i]] += 1;
      }
      bool empty = false;
      for (std::size_t q = 0; q < k; ++q) {
        if (cnt[q] == 0) empty = true;
        else c.row(static_cast<Eigen::Index>(q)) /= cnt[q];
      }
      if (empty) break;
      bool changed = false;
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t arg = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t q = 0; q < k; ++q) {
          const double d = (x.row(static_cast<Eigen::Index>(i)) - c.row(static_cast<Eigen::Index>(q))).squaredNorm();
          if (d < bd) {
            bd = d;
            arg = q;
          }
        }
        if (arg != z[i]) changed = true;
        z[i] = arg;
      }
      if (!changed) break;
    }
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), x.cols());
    std::vector<double> cnt(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      c.row(static_cast<Eigen::Index>(z[i])) += x.row(static_cast<Eigen::Index>(i));
      cnt[z[i]] += 1;
    }
    if (std::find(cnt.begin(), cnt.end(), 0.0) != cnt.end()) continue;
    for (std::size_t q = 0; q < k; ++q) c.row(static_cast<Eigen::Index>(q)) /= cnt[q];
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i) w += (x.row(static_cast<Eigen::Index>(i)) - c.row(static_cast<Eigen::Index>(z[i]))).squaredNorm();
    if (w < best_w) {
      best_w = w;
      best = z;
    }
  }
  return {best, best_w};
}

}  // namespace oracle
