#include "sbanm/svi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sbanm/densities.hpp"
#include "sbanm/error.hpp"
#include "sbanm/rng.hpp"
#include "sbanm/vem.hpp"

namespace sbanm {

void SviConfig::validate() const {
  if (a < 2) throw UsageError("svi base subsample size must be at least 2");
  if (!(kappa_w > 0.5 && kappa_w <= 1.0)) throw UsageError("svi kappa_w must lie in (0.5, 1]");
  if (!(kappa_m >= 0.0)) throw UsageError("svi kappa_m must be non-negative");
}

std::size_t subsample_size(std::size_t t, const SviConfig& cfg, std::size_t n) {
  const double td = static_cast<double>(t);
  const double grow = std::floor(std::pow(td / (td + 1.0), cfg.kappa_m) * static_cast<double>(n));
  return std::min(cfg.a + static_cast<std::size_t>(grow), n);
}

double averaging_weight(std::size_t t, const SviConfig& cfg) {
  return std::pow(static_cast<double>(t) + 1.0, -cfg.kappa_w);
}

std::vector<std::size_t> sample_nodes(std::size_t n, std::size_t m, std::uint64_t seed, std::size_t t) {
  if (m > n) throw UsageError("subsample larger than the network");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed, "svi-sample", t);
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

VariationalState svi_e_step(const MultilayerNetwork& net, const ModelParams& params,
                            const VariationalState& state, std::size_t t, const SviConfig& cfg) {
  const std::size_t n = net.num_nodes();
  const std::size_t m = subsample_size(t, cfg, n);
  if (m < params.Q) throw UsageError("subsample too small for Q blocks");
  const PairDensities dens(net, params, sample_nodes(n, m, cfg.seed, t));

  const Eigen::MatrixXd fresh = tau_fixed_point_map(dens, params, state);
  if (!fresh.allFinite()) throw NumericalError("tau update diverged at svi step " + std::to_string(t));
  VariationalState next = state;
  const double d = averaging_weight(t, cfg);
  const auto& nodes = dens.nodes();
  for (std::size_t a = 0; a < m; ++a) {
    const auto i = static_cast<Eigen::Index>(nodes[a]);
    next.tau.row(i) = d * fresh.row(static_cast<Eigen::Index>(a)) + (1.0 - d) * state.tau.row(i);
    next.tau.row(i) /= next.tau.row(i).sum();
  }
  // P from the subsample gaps, with the fresh tau on sampled rows.
  Eigen::MatrixXd local_tau = state.tau;
  for (std::size_t a = 0; a < m; ++a) {
    local_tau.row(static_cast<Eigen::Index>(nodes[a])) = fresh.row(static_cast<Eigen::Index>(a));
  }
  const std::vector<double> fresh_p = signal_probabilities(block_density_gaps(dens, local_tau), params.psi);
  for (std::size_t q = 0; q < params.Q; ++q) {
    next.P[q] = std::clamp(d * fresh_p[q] + (1.0 - d) * state.P[q], kProbFloor, 1.0 - kProbFloor);
  }
  return next;
}

}  // namespace sbanm
