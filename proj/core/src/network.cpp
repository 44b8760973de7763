#include "sbanm/network.hpp"

#include <cmath>
#include <string>

#include "sbanm/error.hpp"

namespace sbanm {

MultilayerNetwork::MultilayerNetwork(std::size_t num_nodes, std::size_t num_layers)
    : n_(num_nodes), k_(num_layers) {
  if (n_ < 2) throw DataError("network needs at least 2 nodes");
  if (k_ < 1) throw DataError("network needs at least 1 layer");
  weights_.assign(num_pairs() * k_, 0.0);
}

std::size_t MultilayerNetwork::pair_index(std::size_t i, std::size_t j) const {
  if (i == j) throw DataError("self-loop (" + std::to_string(i) + "," + std::to_string(j) + ")");
  if (i > j) std::swap(i, j);
  if (j >= n_) throw DataError("node index " + std::to_string(j) + " out of range");
  return upper_pair_index(n_, i, j);
}

std::span<const double> MultilayerNetwork::edge(std::size_t i, std::size_t j) const {
  return pair(pair_index(i, j));
}

void MultilayerNetwork::set_edge(std::size_t i, std::size_t j, std::span<const double> w) {
  if (w.size() != k_) throw DataError("edge vector has wrong number of layers");
  const std::size_t p = pair_index(i, j);
  for (std::size_t k = 0; k < k_; ++k) {
    if (!std::isfinite(w[k])) throw DataError("non-finite weight");
    weights_[p * k_ + k] = w[k];
  }
}

void MultilayerNetwork::set_weight(std::size_t i, std::size_t j, std::size_t layer, double w) {
  if (layer >= k_) throw DataError("layer index out of range");
  if (!std::isfinite(w)) throw DataError("non-finite weight");
  weights_[pair_index(i, j) * k_ + layer] = w;
}

void MultilayerNetwork::set_labels(std::vector<std::string> labels) {
  if (!labels.empty() && labels.size() != n_) {
    throw DataError("label count does not match node count");
  }
  labels_ = std::move(labels);
}

}  // namespace sbanm
