#include "sbanm/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sbanm/error.hpp"

namespace sbanm {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_law(const std::vector<double>& mu, const std::vector<double>& var,
               std::size_t K, const std::string& what) {
  if (mu.size() != K || var.size() != K) {
    throw DataError(what + ": expected " + std::to_string(K) + " layers");
  }
  for (std::size_t k = 0; k < K; ++k) {
    if (!std::isfinite(mu[k]) || !std::isfinite(var[k]) || var[k] <= 0.0) {
      throw DataError(what + ": invalid mean or variance");
    }
  }
}

}  // namespace

void ModelParams::validate() const {
  const std::size_t K = num_layers();
  if (K == 0) throw DataError("model has no layers");
  if (Q == 0 || blocks.size() != Q || alpha.size() != Q) {
    throw DataError("model block count mismatch");
  }
  if (noise_block >= Q) throw DataError("noise block index out of range");
  check_law(noise.mu, noise.var, K, "noise");
  for (std::size_t q = 0; q < Q; ++q) {
    check_law(blocks[q].mu, blocks[q].var, K, "block " + std::to_string(q));
    if (K > 1 && (blocks[q].rho <= rho_lower_bound(K) || blocks[q].rho >= 1.0)) {
      throw DataError("block " + std::to_string(q) + ": correlation violates positive definiteness");
    }
  }
  double total = 0.0;
  for (double a : alpha) {
    if (!(a >= 0.0)) throw DataError("alpha has a negative entry");
    total += a;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DataError("alpha does not sum to one");
}

double log_density(std::span<const double> x, std::span<const double> mu,
                   const Eigen::MatrixXd& cov) {
  const auto K = static_cast<Eigen::Index>(mu.size());
  if (static_cast<Eigen::Index>(x.size()) != K || cov.rows() != K || cov.cols() != K) {
    throw DataError("log_density: dimension mismatch");
  }
  if (!cov.isApprox(cov.transpose(), 1e-12)) {
    throw NumericalError("covariance not positive definite");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance not positive definite");
  const Eigen::MatrixXd& L = llt.matrixL();
  for (Eigen::Index k = 0; k < K; ++k) {
    if (!(L(k, k) > 0.0)) throw NumericalError("covariance not positive definite");
  }
  Eigen::VectorXd d(K);
  for (Eigen::Index k = 0; k < K; ++k) d(k) = x[k] - mu[k];
  const Eigen::VectorXd z = llt.matrixL().solve(d);
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  return -0.5 * z.squaredNorm() - 0.5 * log_det - 0.5 * static_cast<double>(K) * kLog2Pi;
}

Eigen::MatrixXd build_covariance(std::span<const double> var, double rho) {
  const std::size_t K = var.size();
  if (K == 0) throw DataError("build_covariance: empty variance vector");
  if (K > 1 && !(rho > rho_lower_bound(K) && rho < 1.0)) {
    throw NumericalError("correlation violates positive definiteness");
  }
  Eigen::MatrixXd cov(K, K);
  for (std::size_t h = 0; h < K; ++h) {
    if (!(var[h] > 0.0)) throw NumericalError("variance must be positive");
    for (std::size_t k = 0; k < K; ++k) {
      cov(h, k) = h == k ? var[h] : rho * std::sqrt(var[h] * var[k]);
    }
  }
  return cov;
}

Eigen::MatrixXd covariance(const BlockParams& block) {
  return build_covariance(block.var, block.rho);
}

Eigen::MatrixXd covariance(const NoiseParams& noise) {
  return build_covariance(noise.var, 0.0);
}

double psi(std::size_t Q) {
  if (Q == 0) throw UsageError("psi: Q must be at least 1");
  return static_cast<double>(Q - 1) / static_cast<double>(Q);
}

std::size_t param_count(std::size_t K, std::size_t Q) {
  return 2 * K * Q + Q - 1 + 2 * K;
}

double rho_lower_bound(std::size_t K) {
  if (K <= 1) return -std::numeric_limits<double>::infinity();
  return -1.0 / static_cast<double>(K - 1);
}

double clamp_rho(double rho, std::size_t K) {
  if (K <= 1) return 0.0;
  const double lo = rho_lower_bound(K) + kRhoMargin;
  const double hi = 1.0 - kRhoMargin;
  if (std::isnan(rho)) return 0.0;
  return std::clamp(rho, lo, hi);
}

BlockParams noise_as_block(const NoiseParams& noise) {
  return BlockParams{noise.mu, noise.var, 0.0};
}

GaussianKernel::GaussianKernel(std::span<const double> mu, const Eigen::MatrixXd& cov)
    : mu_(mu.begin(), mu.end()) {
  const auto K = static_cast<Eigen::Index>(mu_.size());
  if (cov.rows() != K || cov.cols() != K) throw DataError("GaussianKernel: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();
  for (Eigen::Index k = 0; k < K; ++k) {
    if (!(L(k, k) > 0.0)) throw NumericalError("covariance not positive definite");
  }
  const Eigen::MatrixXd prec = llt.solve(Eigen::MatrixXd::Identity(K, K));
  precision_.resize(static_cast<std::size_t>(K * K));
  for (Eigen::Index h = 0; h < K; ++h) {
    for (Eigen::Index k = 0; k < K; ++k) {
      precision_[static_cast<std::size_t>(h * K + k)] = 0.5 * (prec(h, k) + prec(k, h));
    }
  }
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  log_norm_ = -0.5 * (static_cast<double>(K) * kLog2Pi + log_det);
}

GaussianKernel::GaussianKernel(const BlockParams& block)
    : GaussianKernel(block.mu, covariance(block)) {}

GaussianKernel::GaussianKernel(const NoiseParams& noise)
    : GaussianKernel(noise.mu, covariance(noise)) {}

double GaussianKernel::log_density(const double* x) const {
  const std::size_t K = mu_.size();
  if (K == 1) {
    const double d = x[0] - mu_[0];
    return log_norm_ - 0.5 * precision_[0] * d * d;
  }
  double quad = 0.0;
  double d[16];
  double* dv = K <= 16 ? d : nullptr;
  std::vector<double> heap;
  if (dv == nullptr) {
    heap.resize(K);
    dv = heap.data();
  }
  for (std::size_t k = 0; k < K; ++k) dv[k] = x[k] - mu_[k];
  for (std::size_t h = 0; h < K; ++h) {
    const double* row = precision_.data() + h * K;
    double acc = row[h] * dv[h];
    for (std::size_t k = h + 1; k < K; ++k) acc += 2.0 * row[k] * dv[k];
    quad += acc * dv[h];
  }
  return log_norm_ - 0.5 * quad;
}

}  // namespace sbanm
