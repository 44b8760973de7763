#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sbanm/model.hpp"
#include "sbanm/network.hpp"

namespace sbanm {

struct SviConfig {
  std::size_t a = 150;   // base subsample size
  double kappa_m = 2.0;  // subsample growth exponent
  double kappa_w = 0.7;  // averaging exponent, in (0.5, 1]
  std::uint64_t seed = 0;

  void validate() const;
};

/// min(a + floor((t/(t+1))^kappa_m * n), n).
std::size_t subsample_size(std::size_t t, const SviConfig& cfg, std::size_t n);

/// (t+1)^-kappa_w.
double averaging_weight(std::size_t t, const SviConfig& cfg);

/// m distinct nodes drawn uniformly without replacement, sorted. The draw
/// depends only on (seed, t).
std::vector<std::size_t> sample_nodes(std::size_t n, std::size_t m, std::uint64_t seed, std::size_t t);

/// One stochastic E-step: fixed-point tau and P computed on the subsample
/// induced by sample_nodes(n, subsample_size(t), cfg.seed, t), then blended
/// into the previous state with weight averaging_weight(t). Rows of nodes
/// outside the subsample are left unchanged.
VariationalState svi_e_step(const MultilayerNetwork& net, const ModelParams& params,
                            const VariationalState& state, std::size_t t, const SviConfig& cfg);

}  // namespace sbanm
