#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace sbanm {

/// Floor applied to probabilities (P_q, tau entries) before taking logs, and
/// the clamp interval [kProbFloor, 1 - kProbFloor] for signal probabilities.
inline constexpr double kProbFloor = 1e-9;
/// Lower bound on every estimated variance.
inline constexpr double kVarianceFloor = 1e-8;
/// Distance kept from the edges of the equicorrelation PD interval.
inline constexpr double kRhoMargin = 1e-6;

/// Per-block Gaussian law: mean, per-layer variances and one cross-layer
/// correlation shared by all layer pairs (equicorrelation).
struct BlockParams {
  std::vector<double> mu;
  std::vector<double> var;
  double rho = 0.0;
};

/// Ambient noise law; its covariance is diagonal.
struct NoiseParams {
  std::vector<double> mu;
  std::vector<double> var;
};

struct ModelParams {
  std::size_t Q = 0;
  std::vector<BlockParams> blocks;
  NoiseParams noise;
  std::vector<double> alpha;
  double psi = 0.0;
  std::size_t noise_block = 0;

  std::size_t num_layers() const noexcept { return noise.mu.size(); }

  /// Throws DataError when shapes disagree or a law is invalid.
  void validate() const;
};

/// Variational parameters: tau is n x Q and row-stochastic; P holds the
/// per-block signal probabilities (1 - P_q is the noise probability).
struct VariationalState {
  Eigen::MatrixXd tau;
  std::vector<double> P;
};

/// Multivariate normal log-density. Throws NumericalError("covariance not
/// positive definite") when the Cholesky factorisation fails.
double log_density(std::span<const double> x, std::span<const double> mu,
                   const Eigen::MatrixXd& cov);

/// Equicorrelation covariance: var on the diagonal, rho*sd_h*sd_k elsewhere.
Eigen::MatrixXd build_covariance(std::span<const double> var, double rho);
Eigen::MatrixXd covariance(const BlockParams& block);
Eigen::MatrixXd covariance(const NoiseParams& noise);

/// Prior probability that a block carries signal, (Q-1)/Q.
double psi(std::size_t Q);

/// Free parameter count 2KQ + Q - 1 + 2K.
std::size_t param_count(std::size_t K, std::size_t Q);

/// Open lower bound -1/(K-1) of the equicorrelation PD interval
/// (-infinity for K = 1).
double rho_lower_bound(std::size_t K);

/// Clamps rho into [-1/(K-1) + kRhoMargin, 1 - kRhoMargin].
double clamp_rho(double rho, std::size_t K);

/// Block law that mirrors the noise law (rho = 0).
BlockParams noise_as_block(const NoiseParams& noise);

/// Log-density evaluator with the covariance factorised once.
class GaussianKernel {
 public:
  GaussianKernel(std::span<const double> mu, const Eigen::MatrixXd& cov);
  explicit GaussianKernel(const BlockParams& block);
  explicit GaussianKernel(const NoiseParams& noise);

  std::size_t dim() const noexcept { return mu_.size(); }
  double log_density(const double* x) const;
  double log_density(std::span<const double> x) const { return log_density(x.data()); }

 private:
  std::vector<double> mu_;
  std::vector<double> precision_;  // row-major K x K
  double log_norm_ = 0.0;          // -0.5 * (K log 2pi + log det)
};

}  // namespace sbanm
