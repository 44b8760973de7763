#include "sbanm/densities.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "sbanm/error.hpp"

namespace sbanm {

PairDensities::PairDensities(const MultilayerNetwork& net, const ModelParams& params)
    : PairDensities(net, params, [&] {
        std::vector<std::size_t> all(net.num_nodes());
        std::iota(all.begin(), all.end(), std::size_t{0});
        return all;
      }()) {}

PairDensities::PairDensities(const MultilayerNetwork& net, const ModelParams& params,
                             std::vector<std::size_t> nodes)
    : Q_(params.Q), nodes_(std::move(nodes)) {
  if (params.num_layers() != net.num_layers()) throw DataError("model and network layer counts differ");
  for (std::size_t a = 1; a < nodes_.size(); ++a) {
    if (nodes_[a] <= nodes_[a - 1]) throw DataError("density node set must be strictly increasing");
  }
  if (!nodes_.empty() && nodes_.back() >= net.num_nodes()) throw DataError("density node out of range");
  fill(net, params);
}

void PairDensities::fill(const MultilayerNetwork& net, const ModelParams& params) {
  const std::size_t m = nodes_.size();
  const std::size_t pairs = m < 2 ? 0 : m * (m - 1) / 2;
  noise_.assign(pairs, 0.0);
  excess_.assign(pairs * Q_, 0.0);

  const GaussianKernel noise_kernel(params.noise);
  std::vector<GaussianKernel> kernels;
  kernels.reserve(Q_);
  for (const auto& b : params.blocks) kernels.emplace_back(b);

  bool finite = true;
#pragma omp parallel for schedule(dynamic, 16) reduction(&& : finite)
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      const std::size_t p = upper_pair_index(m, a, b);
      const double* x = net.edge(nodes_[a], nodes_[b]).data();
      const double f_an = noise_kernel.log_density(x);
      noise_[p] = f_an;
      double* ex = excess_.data() + p * Q_;
      for (std::size_t q = 0; q < Q_; ++q) ex[q] = kernels[q].log_density(x) - f_an;
      finite = finite && std::isfinite(f_an);
    }
  }
  if (!finite) throw NumericalError("non-finite edge log-density");
}

}  // namespace sbanm
