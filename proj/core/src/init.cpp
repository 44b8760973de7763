#include "sbanm/init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

#include "sbanm/error.hpp"
#include "sbanm/graph_io.hpp"
#include "sbanm/rng.hpp"

namespace sbanm {
namespace {

constexpr double kDegreeFloor = 1e-12;

double squared_distance(const Eigen::MatrixXd& points, Eigen::Index i,
                        const Eigen::MatrixXd& centers, Eigen::Index c) {
  return (points.row(i) - centers.row(c)).squaredNorm();
}

Eigen::MatrixXd kmeans_pp_seed(const Eigen::MatrixXd& points, std::size_t k, Rng& rng) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd centers(static_cast<Eigen::Index>(k), points.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = points.row(pick(rng));
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& d = d2[static_cast<std::size_t>(i)];
      d = std::min(d, squared_distance(points, i, centers, static_cast<Eigen::Index>(c - 1)));
      total += d;
    }
    Eigen::Index chosen = n - 1;
    if (total > 0.0) {
      double target = unit(rng) * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= d2[static_cast<std::size_t>(i)];
        if (target < 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centers.row(static_cast<Eigen::Index>(c)) = points.row(chosen);
  }
  return centers;
}

KMeansResult lloyd(const Eigen::MatrixXd& points, Eigen::MatrixXd centers, std::size_t max_iter) {
  const Eigen::Index n = points.rows();
  const Eigen::Index k = centers.rows();
  KMeansResult res;
  res.labels.assign(static_cast<std::size_t>(n), 0);
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = it == 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      double best_d = squared_distance(points, i, centers, 0);
      for (Eigen::Index c = 1; c < k; ++c) {
        const double d = squared_distance(points, i, centers, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      auto& lab = res.labels[static_cast<std::size_t>(i)];
      if (lab != static_cast<std::size_t>(best)) {
        lab = static_cast<std::size_t>(best);
        changed = true;
      }
    }
    if (!changed) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = static_cast<Eigen::Index>(res.labels[static_cast<std::size_t>(i)]);
      sums.row(c) += points.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      // Empty cluster: move its center to the point farthest from its own center.
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = squared_distance(points, i, centers,
                                          static_cast<Eigen::Index>(res.labels[static_cast<std::size_t>(i)]));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      centers.row(c) = points.row(far);
    }
  }
  res.wcss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    res.wcss += squared_distance(points, i, centers,
                                 static_cast<Eigen::Index>(res.labels[static_cast<std::size_t>(i)]));
  }
  return res;
}

}  // namespace

Eigen::MatrixXd spectral_embedding(const MultilayerNetwork& net, std::size_t Q) {
  const std::size_t n = net.num_nodes();
  if (Q == 0 || Q > n) throw UsageError("spectral_embedding: need 1 <= Q <= n");
  const MultilayerNetwork summed = sum_layers(net);
  double lowest = std::numeric_limits<double>::infinity();
  for (double w : summed.weights()) lowest = std::min(lowest, w);

  const auto N = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double w = summed.weight(i, j, 0) - lowest;
      A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w;
      A(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = w;
    }
  }
  const Eigen::VectorXd inv_sqrt_deg =
      A.rowwise().sum().array().max(kDegreeFloor).rsqrt().matrix();
  // L = I - D^{-1/2} A D^{-1/2}
  Eigen::MatrixXd L = -(inv_sqrt_deg.asDiagonal() * A * inv_sqrt_deg.asDiagonal());
  L.diagonal().array() += 1.0;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(L);
  if (solver.info() != Eigen::Success) throw NumericalError("spectral initialization failed");
  // Eigenvalues come back in increasing order.
  Eigen::MatrixXd emb = solver.eigenvectors().leftCols(static_cast<Eigen::Index>(Q));
  for (Eigen::Index i = 0; i < N; ++i) {
    const double norm = emb.row(i).norm();
    if (norm > 0.0) emb.row(i) /= norm;
  }
  if (!emb.allFinite()) throw NumericalError("spectral initialization failed");
  return emb;
}

KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::size_t restarts,
                    std::uint64_t seed, std::size_t max_iter) {
  if (k == 0 || static_cast<Eigen::Index>(k) > points.rows()) {
    throw UsageError("kmeans: need 1 <= k <= number of points");
  }
  if (restarts == 0) throw UsageError("kmeans: restarts must be >= 1");
  std::vector<KMeansResult> runs(restarts);
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng = make_rng(seed, "kmeans", r);
    runs[r] = lloyd(points, kmeans_pp_seed(points, k, rng), max_iter);
    runs[r].restart = r;
  }
  std::size_t best = 0;
  for (std::size_t r = 1; r < restarts; ++r) {
    if (runs[r].wcss < runs[best].wcss) best = r;
  }
  return runs[best];
}

VariationalState state_from_labels(const std::vector<std::size_t>& labels, std::size_t Q,
                                   double soft_eps) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  VariationalState st;
  st.P.assign(Q, std::clamp(1.0 - 1.0 / static_cast<double>(Q), kProbFloor, 1.0 - kProbFloor));
  if (Q == 1) {
    st.tau = Eigen::MatrixXd::Ones(n, 1);
    return st;
  }
  const double off = soft_eps / static_cast<double>(Q - 1);
  st.tau = Eigen::MatrixXd::Constant(n, static_cast<Eigen::Index>(Q), off);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t q = labels[static_cast<std::size_t>(i)];
    if (q >= Q) throw DataError("label out of range");
    st.tau(i, static_cast<Eigen::Index>(q)) = 1.0 - soft_eps;
  }
  return st;
}

VariationalState spectral_init(const MultilayerNetwork& net, const InitConfig& cfg) {
  if (cfg.Q == 0) throw UsageError("spectral_init: Q must be >= 1");
  if (cfg.kmeans_restarts == 0) throw UsageError("spectral_init: restarts must be >= 1");
  if (!(cfg.soft_eps > 0.0 && cfg.soft_eps < 1.0)) throw UsageError("spectral_init: soft_eps must be in (0,1)");
  if (net.num_nodes() <= cfg.Q) throw UsageError("spectral_init: need more nodes than blocks");
  if (cfg.Q == 1) return state_from_labels(std::vector<std::size_t>(net.num_nodes(), 0), 1, cfg.soft_eps);
  const Eigen::MatrixXd emb = spectral_embedding(net, cfg.Q);
  const KMeansResult km = kmeans(emb, cfg.Q, cfg.kmeans_restarts, cfg.seed);
  return state_from_labels(km.labels, cfg.Q, cfg.soft_eps);
}

VariationalState random_init(std::size_t n, std::size_t Q, std::uint64_t seed) {
  Rng rng = make_rng(seed, "random-init");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  VariationalState st;
  st.tau.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(Q));
  for (Eigen::Index i = 0; i < st.tau.rows(); ++i) {
    for (Eigen::Index q = 0; q < st.tau.cols(); ++q) st.tau(i, q) = unit(rng) + 1e-3;
    st.tau.row(i) /= st.tau.row(i).sum();
  }
  st.P.assign(Q, std::clamp(1.0 - 1.0 / static_cast<double>(Q), kProbFloor, 1.0 - kProbFloor));
  return st;
}

}  // namespace sbanm
