#include "sbanm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sbanm/error.hpp"

namespace sbanm {
namespace {

std::size_t label_count(const Partition& p) {
  return p.empty() ? 0 : *std::max_element(p.begin(), p.end()) + 1;
}

void check_lengths(const Partition& a, const Partition& b) {
  if (a.size() != b.size()) throw DataError("partitions have different lengths");
  if (a.empty()) throw DataError("empty partition");
}

double choose2(double x) { return x * (x - 1.0) / 2.0; }

std::vector<ParamError> compare(const std::vector<double>& truth, const std::vector<double>& fitted) {
  std::vector<ParamError> out;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const double e = fitted[k] - truth[k];
    out.push_back({e, 100.0 * std::abs(e) / std::max(std::abs(truth[k]), 0.01)});
  }
  return out;
}

}  // namespace

std::vector<std::vector<std::size_t>> confusion(const Partition& a, const Partition& b) {
  check_lengths(a, b);
  std::vector<std::vector<std::size_t>> c(label_count(a), std::vector<std::size_t>(label_count(b), 0));
  for (std::size_t i = 0; i < a.size(); ++i) ++c[a[i]][b[i]];
  return c;
}

double ari(const Partition& a, const Partition& b) {
  const auto c = confusion(a, b);
  const double n = static_cast<double>(a.size());
  double sum_ij = 0.0;
  std::vector<double> rows(c.size(), 0.0);
  std::vector<double> cols(c.empty() ? 0 : c[0].size(), 0.0);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = 0; j < c[i].size(); ++j) {
      const double v = static_cast<double>(c[i][j]);
      sum_ij += choose2(v);
      rows[i] += v;
      cols[j] += v;
    }
  }
  double sa = 0.0;
  double sb = 0.0;
  for (double r : rows) sa += choose2(r);
  for (double s : cols) sb += choose2(s);
  const double expected = sa * sb / choose2(n);
  const double max_index = 0.5 * (sa + sb);
  const double denom = max_index - expected;
  if (denom == 0.0) return 1.0;
  return (sum_ij - expected) / denom;
}

double nmi(const Partition& a, const Partition& b) {
  const auto c = confusion(a, b);
  const double n = static_cast<double>(a.size());
  std::vector<double> rows(c.size(), 0.0);
  std::vector<double> cols(c.empty() ? 0 : c[0].size(), 0.0);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = 0; j < c[i].size(); ++j) {
      rows[i] += static_cast<double>(c[i][j]);
      cols[j] += static_cast<double>(c[i][j]);
    }
  }
  auto entropy = [n](const std::vector<double>& m) {
    double h = 0.0;
    for (double v : m) {
      if (v > 0.0) h -= v / n * std::log(v / n);
    }
    return h;
  };
  const double ha = entropy(rows);
  const double hb = entropy(cols);
  if (ha <= 0.0 && hb <= 0.0) return 1.0;
  if (ha <= 0.0 || hb <= 0.0) return 0.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = 0; j < c[i].size(); ++j) {
      const double v = static_cast<double>(c[i][j]);
      if (v > 0.0) mi += v / n * std::log(n * v / (rows[i] * cols[j]));
    }
  }
  return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

std::vector<std::size_t> hungarian_max(const std::vector<std::vector<double>>& weight) {
  const std::size_t n = weight.size();
  if (n == 0) return {};
  double mx = 0.0;
  for (const auto& r : weight) {
    if (r.size() != n) throw DataError("assignment matrix must be square");
    for (double v : r) mx = std::max(mx, v);
  }
  // Minimisation form, 1-based potentials.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = (mx - weight[i0 - 1][j - 1]) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> col(n);
  for (std::size_t j = 1; j <= n; ++j) col[p[j] - 1] = j - 1;
  return col;
}

std::vector<std::size_t> best_matching(const Partition& truth, const Partition& fitted) {
  const auto c = confusion(truth, fitted);
  const std::size_t T = c.size();
  const std::size_t S = std::max(T, c.empty() ? 0 : c[0].size());
  std::vector<std::vector<double>> w(S, std::vector<double>(S, 0.0));
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = 0; j < c[i].size(); ++j) w[i][j] = static_cast<double>(c[i][j]);
  }
  std::vector<std::size_t> col = hungarian_max(w);
  col.resize(T);
  return col;
}

bool exact_recovery(const Partition& truth, const Partition& fitted) {
  const auto m = best_matching(truth, fitted);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (m[truth[i]] != fitted[i]) return false;
  }
  return true;
}

double icl_penalty(std::size_t n, std::size_t K, std::size_t Q) {
  const double nd = static_cast<double>(n);
  const double kd = static_cast<double>(K);
  const double qd = static_cast<double>(Q);
  const double pairs = nd * (nd - 1.0) / 2.0;
  return qd * std::log(pairs * kd) + qd * (qd - 1.0) / 2.0 * kd * std::log(pairs);
}

double icl_membership_term(std::size_t n, std::size_t K, std::size_t Q) {
  const double qd = static_cast<double>(Q);
  const double k1 = static_cast<double>(std::max<std::size_t>(K, 2) - 1);
  return 0.5 * qd * (qd - 1.0) * std::log(static_cast<double>(n) * k1);
}

double complete_log_likelihood(const MultilayerNetwork& net, const ModelParams& params, const Partition& z) {
  const std::size_t n = net.num_nodes();
  if (z.size() != n) throw DataError("membership length differs from node count");
  for (std::size_t l : z) {
    if (l >= params.Q) throw DataError("membership label out of range");
  }
  const GaussianKernel noise(params.noise);
  std::vector<GaussianKernel> kernels;
  for (const auto& b : params.blocks) kernels.emplace_back(b);

  std::vector<double> rows(n, 0.0);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* x = net.edge(i, j).data();
      const bool signal = z[i] == z[j] && z[i] != params.noise_block;
      s += signal ? kernels[z[i]].log_density(x) : noise.log_density(x);
    }
    rows[i] = s;
  }
  double total = 0.0;
  for (double r : rows) total += r;
  for (std::size_t l : z) total += std::log(std::max(params.alpha[l], kProbFloor));
  return total;
}

double icl(const MultilayerNetwork& net, const ModelParams& params, const Partition& z) {
  const std::size_t n = net.num_nodes();
  const std::size_t K = net.num_layers();
  return complete_log_likelihood(net, params, z) - icl_membership_term(n, K, params.Q) -
         icl_penalty(n, K, params.Q);
}

double icl(const MultilayerNetwork& net, const FitResult& fit) {
  return icl(net, fit.params, fit.hard_membership);
}

ParamReport param_report(const ModelParams& truth, const ModelParams& fitted,
                         const std::vector<std::size_t>& matching) {
  if (truth.Q != fitted.Q) throw DataError("block counts differ");
  if (truth.num_layers() != fitted.num_layers()) throw DataError("layer counts differ");
  if (matching.size() != truth.Q) throw DataError("matching must cover every true block");
  ParamReport r;
  r.matching = matching;
  for (std::size_t q = 0; q < truth.Q; ++q) {
    if (q == truth.noise_block) continue;
    if (matching[q] >= fitted.Q) throw DataError("matching points outside the fitted blocks");
    const BlockParams& t = truth.blocks[q];
    const BlockParams& f = fitted.blocks[matching[q]];
    for (auto e : compare(t.mu, f.mu)) r.signal_mu.push_back(e);
    for (auto e : compare(t.var, f.var)) r.signal_var.push_back(e);
    if (truth.num_layers() > 1) {
      for (auto e : compare({t.rho}, {f.rho})) r.signal_rho.push_back(e);
    }
  }
  r.noise_mu = compare(truth.noise.mu, fitted.noise.mu);
  r.noise_var = compare(truth.noise.var, fitted.noise.var);
  return r;
}

double median_abs_pct(const std::vector<ParamError>& errs) {
  if (errs.empty()) return 0.0;
  std::vector<double> v;
  for (const auto& e : errs) v.push_back(e.abs_pct);
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace sbanm
