#pragma once

#include <cstddef>
#include <vector>

#include "sbanm/model.hpp"
#include "sbanm/network.hpp"
#include "sbanm/vem.hpp"

namespace sbanm {

using Partition = std::vector<std::size_t>;

double ari(const Partition& a, const Partition& b);
double nmi(const Partition& a, const Partition& b);

/// Contingency counts, rows indexed by labels of `a`.
std::vector<std::vector<std::size_t>> confusion(const Partition& a, const Partition& b);

/// Maximum-weight assignment on a square cost-free weight matrix; returns
/// col[row].
std::vector<std::size_t> hungarian_max(const std::vector<std::vector<double>>& weight);

/// Label map truth -> fitted maximising agreement. Entries beyond the fitted
/// label range map to labels that occur in neither partition.
std::vector<std::size_t> best_matching(const Partition& truth, const Partition& fitted);

bool exact_recovery(const Partition& truth, const Partition& fitted);

/// Penalty Q log(n(n-1)K/2) + Q(Q-1)/2 * K log(n(n-1)/2).
double icl_penalty(std::size_t n, std::size_t K, std::size_t Q);

/// 1/2 Q(Q-1) log(n max(K-1, 1)).
double icl_membership_term(std::size_t n, std::size_t K, std::size_t Q);

/// Complete-data log-likelihood at hard labels: same-label pairs in a signal
/// block use that block's law, every other pair the noise law; plus
/// sum_i log alpha_{z_i}.
double complete_log_likelihood(const MultilayerNetwork& net, const ModelParams& params, const Partition& z);

double icl(const MultilayerNetwork& net, const ModelParams& params, const Partition& z);
double icl(const MultilayerNetwork& net, const FitResult& fit);

struct ParamError {
  double signed_error = 0.0;
  double abs_pct = 0.0;
};

struct ParamReport {
  std::vector<std::size_t> matching;  // truth block -> fitted block
  std::vector<ParamError> signal_mu;
  std::vector<ParamError> signal_var;
  std::vector<ParamError> signal_rho;
  std::vector<ParamError> noise_mu;
  std::vector<ParamError> noise_var;
};

ParamReport param_report(const ModelParams& truth, const ModelParams& fitted,
                         const std::vector<std::size_t>& matching);

double median_abs_pct(const std::vector<ParamError>& errs);

}  // namespace sbanm
