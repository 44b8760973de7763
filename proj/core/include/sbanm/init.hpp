#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "sbanm/model.hpp"
#include "sbanm/network.hpp"

namespace sbanm {

struct InitConfig {
  std::size_t Q = 2;
  std::size_t kmeans_restarts = 10;
  std::uint64_t seed = 0;
  double soft_eps = 0.05;
};

/// Row-normalised eigenvectors of the Q smallest eigenvalues of the
/// symmetric normalised Laplacian of the layer-summed graph, after shifting
/// all weights so the smallest is zero. Result is n x Q.
Eigen::MatrixXd spectral_embedding(const MultilayerNetwork& net, std::size_t Q);

struct KMeansResult {
  std::vector<std::size_t> labels;
  double wcss = 0.0;
  std::size_t restart = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Keeps the restart with the
/// smallest within-cluster sum of squares; the lowest restart index wins ties.
KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::size_t restarts,
                    std::uint64_t seed, std::size_t max_iter = 100);

/// Spectral clustering of the summed graph turned into a soft tau:
/// 1 - soft_eps on the assigned cluster, soft_eps / (Q-1) elsewhere.
/// P starts at 1 - 1/Q (clamped to the probability floor).
VariationalState spectral_init(const MultilayerNetwork& net, const InitConfig& cfg);

/// Soft state built from hard labels, as spectral_init does.
VariationalState state_from_labels(const std::vector<std::size_t>& labels, std::size_t Q,
                                   double soft_eps);

/// Uniform-random tau rows, normalised. Test utility only.
VariationalState random_init(std::size_t n, std::size_t Q, std::uint64_t seed);

}  // namespace sbanm
