#pragma once

#include <cstddef>
#include <vector>

#include "sbanm/model.hpp"
#include "sbanm/network.hpp"

namespace sbanm {

/// Per-pair log-densities over a node set, cached for one parameter value.
///
/// For every unordered pair (a, b) of *local* node indices the table holds
/// the ambient-noise log-density f_AN and, per block q, the excess
/// f_q - f_AN. Everything the E-step and the ELBO need is a weighted sum of
/// these entries. The full-batch table uses all nodes; the stochastic E-step
/// builds one over a node subsample.
class PairDensities {
 public:
  PairDensities(const MultilayerNetwork& net, const ModelParams& params);
  PairDensities(const MultilayerNetwork& net, const ModelParams& params,
                std::vector<std::size_t> nodes);

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t num_blocks() const noexcept { return Q_; }
  const std::vector<std::size_t>& nodes() const noexcept { return nodes_; }
  bool covers_all(std::size_t n) const noexcept { return nodes_.size() == n; }

  std::size_t local_pair(std::size_t a, std::size_t b) const {
    return upper_pair_index(nodes_.size(), a, b);
  }
  double noise(std::size_t p) const { return noise_[p]; }
  const double* excess(std::size_t p) const { return excess_.data() + p * Q_; }

 private:
  void fill(const MultilayerNetwork& net, const ModelParams& params);

  std::size_t Q_;
  std::vector<std::size_t> nodes_;
  std::vector<double> noise_;
  std::vector<double> excess_;
};

}  // namespace sbanm
