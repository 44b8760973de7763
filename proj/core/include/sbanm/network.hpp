#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sbanm {

/// Dense, symmetric K-layer weighted graph without self-loops.
///
/// Only the upper triangle (i < j) is stored, pair-major: the K weights of
/// pair (i, j) are contiguous. Pairs are numbered in lexicographic order,
/// which is also the order of the on-disk network format.
class MultilayerNetwork {
 public:
  MultilayerNetwork(std::size_t num_nodes, std::size_t num_layers);

  std::size_t num_nodes() const noexcept { return n_; }
  std::size_t num_layers() const noexcept { return k_; }
  std::size_t num_pairs() const noexcept { return n_ * (n_ - 1) / 2; }

  /// Lexicographic index of the unordered pair {i, j}; i != j.
  std::size_t pair_index(std::size_t i, std::size_t j) const;

  std::span<const double> edge(std::size_t i, std::size_t j) const;
  std::span<const double> pair(std::size_t p) const {
    return {weights_.data() + p * k_, k_};
  }
  double weight(std::size_t i, std::size_t j, std::size_t layer) const {
    return edge(i, j)[layer];
  }

  void set_edge(std::size_t i, std::size_t j, std::span<const double> w);
  void set_weight(std::size_t i, std::size_t j, std::size_t layer, double w);

  /// All stored weights, pair-major.
  std::span<const double> weights() const noexcept { return weights_; }

  const std::vector<std::string>& labels() const noexcept { return labels_; }
  void set_labels(std::vector<std::string> labels);

  friend bool operator==(const MultilayerNetwork& a, const MultilayerNetwork& b) {
    return a.n_ == b.n_ && a.k_ == b.k_ && a.weights_ == b.weights_;
  }

 private:
  std::size_t n_;
  std::size_t k_;
  std::vector<double> weights_;
  std::vector<std::string> labels_;
};

/// Lexicographic pair index for n nodes; requires i < j < n.
inline std::size_t upper_pair_index(std::size_t n, std::size_t i, std::size_t j) {
  return i * (2 * n - i - 1) / 2 + (j - i - 1);
}

}  // namespace sbanm
