#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "sbanm/model.hpp"
#include "sbanm/network.hpp"
#include "sbanm/rng.hpp"

namespace sbanm {

/// Priors for random SBANM instances. Block 0 is always the noise block.
struct SimSpec {
  std::size_t n = 200;
  std::size_t K = 2;
  std::size_t q_min = 3;  // Q is drawn uniformly from [q_min, q_max]
  std::size_t q_max = 3;
  std::vector<double> prior_means;
  double prior_sd = 2.23606797749979;  // sqrt(5)
  std::vector<double> noise_mu;
  std::vector<double> noise_var;
  double dirichlet_conc = 5.0;
  double rho_lo = 0.0;
  double rho_hi = 1.0;
  double bhatt_keep_frac = 0.10;
  std::size_t min_block_size = 3;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 keeps the OpenMP default

  void validate() const;
};

/// Default priors for K layers with Q in [q_min, q_max].
SimSpec default_spec(std::size_t n, std::size_t K, std::size_t q_min, std::size_t q_max);

/// Draws Q, block laws and alpha. Block 0 mirrors the noise law.
ModelParams gen_params(const SimSpec& spec, Rng& rng);

/// Block sizes from a multinomial(n, alpha), redrawn until every block has
/// at least min_size nodes.
std::vector<std::size_t> gen_sizes(std::size_t n, const std::vector<double>& alpha, std::size_t min_size,
                                   Rng& rng);

struct SimNetwork {
  MultilayerNetwork net{2, 1};
  std::vector<std::size_t> membership;
};

/// Nodes are shuffled across blocks. Within-block pairs of a signal block
/// follow that block's law; every other pair follows the noise law.
SimNetwork gen_network(const ModelParams& params, const std::vector<std::size_t>& sizes, Rng& rng);

/// Number of pairs that draw from the noise law outside block 0:
/// n(n-1)/2 - sum_q n_q(n_q-1)/2.
std::size_t interstitial_pairs(const std::vector<std::size_t>& sizes);

double bhattacharyya(std::span<const double> mu_p, const Eigen::MatrixXd& cov_p, std::span<const double> mu_q,
                     const Eigen::MatrixXd& cov_q);
double bhattacharyya(const BlockParams& p, const BlockParams& q);

/// Smallest Bhattacharyya distance over all block pairs.
double min_block_distance(const ModelParams& params);

/// Indices of the ceil(keep_frac * scores.size()) largest scores, by
/// descending score; equal scores keep index order.
std::vector<std::size_t> filter_separable(const std::vector<double>& scores, double keep_frac);

struct Candidate {
  std::size_t index = 0;
  ModelParams params;
  std::vector<std::size_t> sizes;
  SimNetwork data;
  double min_distance = 0.0;
};

/// Draws `count` independent candidates (stream per candidate index) and
/// keeps the most separable ones, ordered by rank.
std::vector<Candidate> simulate_candidates(const SimSpec& spec, std::size_t count);

/// Fixed trivariate four-block instance with sizes (76, 97, 93, 34).
std::pair<ModelParams, std::vector<std::size_t>> experiment2_spec();

}  // namespace sbanm
