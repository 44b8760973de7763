#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sbanm/model.hpp"
#include "sbanm/network.hpp"

namespace sbanm {

enum class Response : std::uint8_t { kNo, kYes, kMissing };

/// One questionnaire layer: n_subjects x items answers, row-major.
struct ResponseLayer {
  std::string name;
  std::vector<std::string> items;
  std::vector<Response> cells;

  std::size_t num_items() const noexcept { return items.size(); }
  Response at(std::size_t subject, std::size_t item) const {
    return cells[subject * items.size() + item];
  }
};

struct ResponseMatrix {
  std::vector<std::string> subjects;
  std::vector<ResponseLayer> layers;

  std::size_t num_subjects() const noexcept { return subjects.size(); }
};

/// Parses `subject,<layer>:<item>,...` CSV with cells in {1,0,NA}. Columns
/// of one layer need not be adjacent; layers keep first-appearance order.
ResponseMatrix parse_responses(std::istream& in);
ResponseMatrix read_responses(const std::filesystem::path& path);

/// Agreement-ratio similarity per layer, Fisher-transformed. Both-yes scores
/// +1, both-no -1, anything else (including missing) 0; the ratio is clamped
/// to [-1 + 1e-7, 1 - 1e-7] before the transform.
MultilayerNetwork build_similarity_network(const ResponseMatrix& responses);

/// atanh(r); throws DataError for |r| >= 1.
double fisher(double r);
double fisher_inverse(double z);

/// Divides every weight by its layer's total strength, clamps to
/// [1e-12, 1 - 1e-12] and applies the logit.
MultilayerNetwork normalize_logit(const MultilayerNetwork& net);

/// Single-layer network whose weights are the per-pair sums over layers.
MultilayerNetwork sum_layers(const MultilayerNetwork& net);

// Network file: `#sbanm-net v1 n=<n> K=<K>` followed by n(n-1)/2 lines
// `i<TAB>j<TAB>w1..wK` in lexicographic pair order, 17 significant digits.
MultilayerNetwork parse_network(std::istream& in);
MultilayerNetwork read_network(const std::filesystem::path& path);
std::string format_network(const MultilayerNetwork& net);
void write_network(const MultilayerNetwork& net, const std::filesystem::path& path);

// Membership file: `node,block,tau_0,...,tau_{Q-1}`.
std::string format_memberships(const std::vector<std::size_t>& blocks, const Eigen::MatrixXd& tau);
void write_memberships(const std::filesystem::path& path, const std::vector<std::size_t>& blocks,
                       const Eigen::MatrixXd& tau);
std::vector<std::size_t> parse_memberships(std::istream& in);
std::vector<std::size_t> read_memberships(const std::filesystem::path& path);

struct ParamsDocument {
  ModelParams params;
  std::optional<double> elbo;
  std::optional<double> icl;
  std::uint64_t seed = 0;
};

std::string format_params(const ParamsDocument& doc);
ParamsDocument parse_params(const std::string& text);
void write_params(const std::filesystem::path& path, const ParamsDocument& doc);
ParamsDocument read_params(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// `%.17g`: round-trips every finite double bit-exactly.
std::string format_double(double value);

}  // namespace sbanm
