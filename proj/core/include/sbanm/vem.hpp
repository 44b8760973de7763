#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sbanm/densities.hpp"
#include "sbanm/model.hpp"
#include "sbanm/network.hpp"
#include "sbanm/svi.hpp"

namespace sbanm {

/// One line of progress: emitted after every outer iteration.
struct IterationReport {
  std::size_t iteration = 0;
  bool stochastic = false;
  double elbo = 0.0;
  double max_tau_change = 0.0;
  double min_signal_prob = 0.0;
  std::vector<std::size_t> degenerate_blocks;
};

struct FitConfig {
  std::size_t Q = 2;
  std::size_t max_outer = 200;
  std::size_t tau_inner_max = 50;
  double tol_tau = 1e-6;
  double tol_elbo = 1e-8;
  double damping = 0.7;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 keeps the OpenMP default
  std::size_t kmeans_restarts = 10;
  std::optional<SviConfig> svi;
  std::function<void(const IterationReport&)> on_iteration;

  void validate() const;
};

struct FitResult {
  ModelParams params;
  VariationalState state;
  std::vector<std::size_t> hard_membership;
  std::vector<double> elbo_trace;  // full-batch outer iterations only
  double elbo = 0.0;               // after the noise block is designated
  bool converged = false;
  std::size_t iterations = 0;
  std::size_t svi_steps = 0;
  double icl = std::numeric_limits<double>::quiet_NaN();
};

/// Row argmax; the lowest index wins ties.
std::vector<std::size_t> hard_assignments(const Eigen::MatrixXd& tau);

// ---------------------------------------------------------------------------
// E-step

/// One undamped evaluation of the tau fixed point for the nodes covered by
/// `dens` (rows in dens.nodes() order), summing only over partners in the
/// same node set:
///   log tau_iq = log alpha_q + P_q sum_j tau_jq (f_q - f_AN)(X_ij)
///                + P_q log psi + (1 - P_q) log(1 - psi) - 1  (+ const_i)
Eigen::MatrixXd tau_fixed_point_map(const PairDensities& dens, const ModelParams& params,
                                    const VariationalState& state);

struct TauEstimate {
  Eigen::MatrixXd tau;
  std::size_t iterations = 0;
  double max_change = 0.0;
  bool converged = false;
};

/// Damped fixed-point iteration until the max-abs change drops below
/// cfg.tol_tau or cfg.tau_inner_max iterations. Throws NumericalError
/// ("tau update diverged ...") on non-finite values.
TauEstimate estimate_tau(const PairDensities& dens, const ModelParams& params,
                         const VariationalState& state, const FitConfig& cfg);
TauEstimate estimate_tau(const MultilayerNetwork& net, const ModelParams& params,
                         const VariationalState& state, const FitConfig& cfg);

/// Per-block signal-vs-noise log-density gap sum_{i<j} tau_iq tau_jq (f_q - f_AN),
/// over the node set of `dens`. `tau` has one row per network node.
std::vector<double> block_density_gaps(const PairDensities& dens, const Eigen::MatrixXd& tau);

/// N_q = logistic(-gap_q + log((1-psi)/psi)), normalised to sum to one;
/// returns P_q = 1 - N_q clamped to [kProbFloor, 1 - kProbFloor].
std::vector<double> signal_probabilities(std::span<const double> gaps, double psi);

std::vector<double> estimate_P(const PairDensities& dens, const VariationalState& state, double psi);
std::vector<double> estimate_P(const MultilayerNetwork& net, const ModelParams& params,
                               const VariationalState& state);

// ---------------------------------------------------------------------------
// M-step

std::vector<double> m_step_alpha(const VariationalState& state);

/// Weighted first and second moments of edge vectors: mass W, weighted mean
/// m and scatter S = sum w (x - m)(x - m)^T.
struct WeightedMoments {
  double mass = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd scatter;
};

/// All pair-weight families the M-step and its objectives use.
///   block[q]:     tau_iq tau_jq
///   cross:        sum_{q != l} tau_iq tau_jl
///   noise_within: sum_q tau_iq tau_jq (1 - P_q)
///   ambient:      cross + noise_within (the weight on f_AN in the ELBO)
struct MStepMoments {
  std::vector<WeightedMoments> block;
  WeightedMoments cross;
  WeightedMoments noise_within;
  WeightedMoments ambient;
};

MStepMoments compute_moments(const MultilayerNetwork& net, const VariationalState& state);

/// sum_p w_p log N(x_p; mu, cov) evaluated from moments.
double weighted_log_likelihood(const WeightedMoments& m, std::span<const double> mu,
                               const Eigen::MatrixXd& cov);

struct BlockEstimate {
  BlockParams params;
  bool degenerate = false;
};

/// Mass below this resets a block to the noise law.
inline constexpr double kDegenerateMass = 1e-8;

BlockEstimate block_from_moments(const WeightedMoments& m, double signal_prob, const NoiseParams& noise);
BlockEstimate m_step_block(const MultilayerNetwork& net, const VariationalState& state, std::size_t q,
                           const NoiseParams& noise);

/// psi-blend of the cross-block and noise-weighted within-block moments; a
/// side with zero mass drops out and the blend weights are renormalised.
/// Throws NumericalError("noise estimate undefined") if both sides are empty.
NoiseParams noise_from_moments(const WeightedMoments& cross, const WeightedMoments& within, double psi);
NoiseParams m_step_noise(const MultilayerNetwork& net, const VariationalState& state, double psi);

// ---------------------------------------------------------------------------
// Hierarchical ELBO

struct ElboTerms {
  double likelihood = 0.0;        // E[log f(X | Z)]
  double membership_prior = 0.0;  // sum tau log alpha
  double tau_entropy = 0.0;       // -sum tau log tau
  double signal_entropy = 0.0;    // -sum [P log P + (1-P) log(1-P)]
  double hierarchy_prior = 0.0;   // sum tau [P log psi + (1-P) log(1-psi)]

  double total() const {
    return likelihood + membership_prior + tau_entropy + signal_entropy + hierarchy_prior;
  }
};

ElboTerms elbo_terms(const PairDensities& dens, const ModelParams& params, const VariationalState& state);
ElboTerms elbo_terms(const MultilayerNetwork& net, const ModelParams& params, const VariationalState& state);
double elbo(const MultilayerNetwork& net, const ModelParams& params, const VariationalState& state);

// ---------------------------------------------------------------------------
// Driver

/// Starting parameters for a state: alpha from tau, the noise law from the
/// between-cluster moments only (within-cluster moments when Q = 1), and
/// every block from its own moments as if it carried signal.
ModelParams initial_params(const MultilayerNetwork& net, const VariationalState& state, std::size_t Q);

FitResult fit(const MultilayerNetwork& net, const FitConfig& cfg);
FitResult fit_from(const MultilayerNetwork& net, const FitConfig& cfg, VariationalState initial);

}  // namespace sbanm
