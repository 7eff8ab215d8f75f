#ifndef MEDIATION_PERMUTE_HPP
#define MEDIATION_PERMUTE_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "mediation/data.hpp"

namespace mediation {

/// Pairwise distances between standardized (A, W) rows.
struct DistanceMatrix {
  enum class Metric { standardized_euclidean };
  Matrix D;
  Metric metric = Metric::standardized_euclidean;

  Index n() const { return D.rows(); }
};

/// A derangement of {0..n-1}: Z^pi row i is Z row perm[i].
struct PermutationPlan {
  std::vector<Index> perm;
  double total_cost = 0.0;
  /// Set when the blocked approximation (large n) was used.
  bool approximate = false;
  /// Number of (A, W) strata with a single member; those rows are matched
  /// across strata at positive cost.
  Index singleton_strata = 0;
};

/// (A, W) with every column scaled to unit population variance (divisor n).
/// Constant columns are zeroed.
inline Matrix standardized_treatment_covariates(const MediationDataset& d) {
  Matrix x(d.n(), 1 + d.w().cols());
  x.col(0) = d.a();
  if (d.w().cols() > 0) x.rightCols(d.w().cols()) = d.w();
  const double n = static_cast<double>(d.n());
  for (Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    const double var = (x.col(j).array() - mean).square().sum() / n;
    if (var > 0.0)
      x.col(j) = (x.col(j).array() - mean) / std::sqrt(var);
    else
      x.col(j).setZero();
  }
  return x;
}

inline DistanceMatrix build_distance(const MediationDataset& d) {
  if (d.n() < 2) throw ArgumentError("permute", "distance matrix needs n >= 2");
  const Matrix x = standardized_treatment_covariates(d);
  const Index n = x.rows();
  DistanceMatrix out;
  out.D.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    out.D(i, i) = 0.0;
    for (Index j = i + 1; j < n; ++j) {
      const double dist = (x.row(i) - x.row(j)).norm();
      out.D(i, j) = dist;
      out.D(j, i) = dist;
    }
  }
  return out;
}

/// Minimum-cost perfect matching with every diagonal pair forbidden, i.e.
/// min Tr(Pi D) over zero-trace permutation matrices. Shortest augmenting
/// path Hungarian method, O(n^3). `cost(i, j)` is only queried for i != j.
template <typename Cost>
std::vector<Index> solve_zero_trace(Index n, Cost&& cost) {
  if (n < 2) throw ArgumentError("permute", "a derangement needs n >= 2");
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t N = static_cast<std::size_t>(n);
  // 1-based arrays; column 0 and row 0 are sentinels.
  std::vector<double> u(N + 1, 0.0), v(N + 1, 0.0), minv(N + 1);
  std::vector<std::size_t> p(N + 1, 0), way(N + 1, 0);
  std::vector<char> used(N + 1);
  for (std::size_t i = 1; i <= N; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= N; ++j) {
        if (used[j]) continue;
        if (j != i0) {
          const double cur = cost(static_cast<Index>(i0 - 1), static_cast<Index>(j - 1)) - u[i0] - v[j];
          if (cur < minv[j]) {
            minv[j] = cur;
            way[j] = j0;
          }
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= N; ++j) {
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
  std::vector<Index> perm(N);
  for (std::size_t j = 1; j <= N; ++j) perm[p[j] - 1] = static_cast<Index>(j - 1);
  return perm;
}

inline PermutationPlan solve_zero_trace_assignment(const DistanceMatrix& dm) {
  const Index n = dm.n();
  if (n < 2) throw ArgumentError("permute", "zero-trace assignment needs n >= 2");
  PermutationPlan plan;
  plan.perm = solve_zero_trace(n, [&](Index i, Index j) { return dm.D(i, j); });
  for (Index i = 0; i < n; ++i) plan.total_cost += dm.D(i, plan.perm[static_cast<std::size_t>(i)]);
  return plan;
}

inline bool is_derangement(const std::vector<Index>& perm) {
  std::vector<char> hit(perm.size(), 0);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const Index j = perm[i];
    if (j < 0 || static_cast<std::size_t>(j) >= perm.size() || static_cast<std::size_t>(j) == i || hit[static_cast<std::size_t>(j)])
      return false;
    hit[static_cast<std::size_t>(j)] = 1;
  }
  return true;
}

struct PermuteOptions {
  /// Largest n solved exactly by the O(n^3) assignment when some stratum is a
  /// singleton. Above it the problem is blocked into (A, W) clusters.
  Index exact_limit = 5000;
  /// Cluster size for the blocked approximation.
  Index block_size = 1000;
  /// Distances are cached in memory up to this n; beyond it they are
  /// recomputed on demand.
  Index materialize_limit = 4000;
};

namespace permute_detail {

/// Groups of rows with identical (A, W).
inline std::vector<std::vector<Index>> strata(const Matrix& aw) {
  std::map<std::vector<double>, std::vector<Index>> groups;
  std::vector<double> key(static_cast<std::size_t>(aw.cols()));
  for (Index i = 0; i < aw.rows(); ++i) {
    for (Index j = 0; j < aw.cols(); ++j) key[static_cast<std::size_t>(j)] = aw(i, j);
    groups[key].push_back(i);
  }
  std::vector<std::vector<Index>> out;
  out.reserve(groups.size());
  for (auto& [k, rows] : groups) out.push_back(std::move(rows));
  return out;
}

/// Exact solve restricted to `rows`; writes into `perm` (global indices).
inline void solve_rows(const Matrix& x, const std::vector<Index>& rows, Index materialize_limit,
                       std::vector<Index>& perm) {
  const Index m = static_cast<Index>(rows.size());
  std::vector<Index> local;
  if (m <= materialize_limit) {
    Matrix D(m, m);
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < m; ++j)
        D(i, j) = (i == j) ? 0.0 : (x.row(rows[static_cast<std::size_t>(i)]) - x.row(rows[static_cast<std::size_t>(j)])).norm();
    local = solve_zero_trace(m, [&](Index i, Index j) { return D(i, j); });
  } else {
    local = solve_zero_trace(m, [&](Index i, Index j) {
      return (x.row(rows[static_cast<std::size_t>(i)]) - x.row(rows[static_cast<std::size_t>(j)])).norm();
    });
  }
  for (Index i = 0; i < m; ++i)
    perm[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])] = rows[static_cast<std::size_t>(local[static_cast<std::size_t>(i)])];
}

/// Recursive median split along the widest standardized coordinate.
inline void split_blocks(const Matrix& x, std::vector<Index> rows, Index block_size,
                         std::vector<std::vector<Index>>& out) {
  if (static_cast<Index>(rows.size()) <= block_size) {
    out.push_back(std::move(rows));
    return;
  }
  Index best = 0;
  double best_spread = -1.0;
  for (Index j = 0; j < x.cols(); ++j) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Index r : rows) {
      lo = std::min(lo, x(r, j));
      hi = std::max(hi, x(r, j));
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best = j;
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [&](Index a, Index b) { return x(a, best) < x(b, best); });
  const auto mid = rows.begin() + static_cast<std::ptrdiff_t>(rows.size() / 2);
  split_blocks(x, std::vector<Index>(rows.begin(), mid), block_size, out);
  split_blocks(x, std::vector<Index>(mid, rows.end()), block_size, out);
}

} // namespace permute_detail

/// Optimal zero-trace permutation for the whole dataset. Exact (A, W) ties
/// are matched within their stratum at zero cost when every stratum has at
/// least two members; otherwise the full assignment is solved (exactly up to
/// `exact_limit` rows, by clusters beyond).
inline PermutationPlan plan_permutation(const MediationDataset& d, const PermuteOptions& opt = {}) {
  const Index n = d.n();
  if (n < 2) throw ArgumentError("permute", "Z^pi construction needs n >= 2");
  const Matrix x = standardized_treatment_covariates(d);
  const auto groups = permute_detail::strata(x);
  PermutationPlan plan;
  plan.perm.assign(static_cast<std::size_t>(n), -1);
  for (const auto& g : groups)
    if (g.size() == 1) ++plan.singleton_strata;

  if (plan.singleton_strata == 0) {
    for (const auto& g : groups)
      for (std::size_t k = 0; k < g.size(); ++k)
        plan.perm[static_cast<std::size_t>(g[k])] = g[(k + 1) % g.size()];
  } else if (n <= opt.exact_limit) {
    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    permute_detail::solve_rows(x, all, opt.materialize_limit, plan.perm);
  } else {
    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    std::vector<std::vector<Index>> blocks;
    permute_detail::split_blocks(x, std::move(all), std::max<Index>(opt.block_size, 4), blocks);
    for (const auto& b : blocks) permute_detail::solve_rows(x, b, opt.materialize_limit, plan.perm);
    plan.approximate = true;
  }
  for (Index i = 0; i < n; ++i)
    plan.total_cost += (x.row(i) - x.row(plan.perm[static_cast<std::size_t>(i)])).norm();
  return plan;
}

/// Independent permutations inside each prediction set of `folds`, so Z^pi
/// of a row only ever comes from the same fold.
inline PermutationPlan plan_permutation_by_fold(const MediationDataset& d, const FoldPlan& folds,
                                                const PermuteOptions& opt = {}) {
  PermutationPlan plan;
  plan.perm.assign(static_cast<std::size_t>(d.n()), -1);
  for (int j = 0; j < folds.J; ++j) {
    const auto rows = folds.validation(j);
    const PermutationPlan part = plan_permutation(d.subset(rows), opt);
    for (std::size_t k = 0; k < rows.size(); ++k)
      plan.perm[static_cast<std::size_t>(rows[k])] = rows[static_cast<std::size_t>(part.perm[k])];
    plan.approximate = plan.approximate || part.approximate;
    plan.singleton_strata += part.singleton_strata;
  }
  const Matrix x = standardized_treatment_covariates(d);
  for (Index i = 0; i < d.n(); ++i)
    plan.total_cost += (x.row(i) - x.row(plan.perm[static_cast<std::size_t>(i)])).norm();
  return plan;
}

inline MediationDataset apply_permutation(const MediationDataset& d, const PermutationPlan& plan) {
  if (static_cast<Index>(plan.perm.size()) != d.n())
    throw ArgumentError("permute", "permutation length " + std::to_string(plan.perm.size()) +
                                       " does not match n=" + std::to_string(d.n()));
  std::vector<Index> idx(plan.perm.begin(), plan.perm.end());
  return d.with_zpi(d.z()(idx, Eigen::all));
}

struct PermutationDiagnostics {
  double total_cost = 0.0;
  bool derangement = false;
  bool approximate = false;
  Index strata = 0;
  Index singleton_strata = 0;
  /// Total-variation distance between the empirical Z and Z^pi distributions
  /// within each (A, W) stratum: max and size-weighted mean.
  double max_stratum_discrepancy = 0.0;
  double mean_stratum_discrepancy = 0.0;
};

inline PermutationDiagnostics diagnose_permutation(const MediationDataset& d, const PermutationPlan& plan) {
  PermutationDiagnostics out;
  out.total_cost = plan.total_cost;
  out.derangement = static_cast<Index>(plan.perm.size()) == d.n() && is_derangement(plan.perm);
  out.approximate = plan.approximate;
  Matrix aw(d.n(), 1 + d.w().cols());
  aw.col(0) = d.a();
  if (d.w().cols() > 0) aw.rightCols(d.w().cols()) = d.w();
  const auto groups = permute_detail::strata(aw);
  out.strata = static_cast<Index>(groups.size());
  double weighted = 0.0;
  const Matrix& z = d.z();
  for (const auto& g : groups) {
    if (g.size() == 1) ++out.singleton_strata;
    std::map<std::vector<double>, long> diff;
    std::vector<double> key(static_cast<std::size_t>(z.cols()));
    for (Index i : g) {
      for (Index j = 0; j < z.cols(); ++j) key[static_cast<std::size_t>(j)] = z(i, j);
      ++diff[key];
      const Index src = plan.perm[static_cast<std::size_t>(i)];
      for (Index j = 0; j < z.cols(); ++j) key[static_cast<std::size_t>(j)] = z(src, j);
      --diff[key];
    }
    long l1 = 0;
    for (const auto& [k, c] : diff) l1 += std::labs(c);
    const double tv = 0.5 * static_cast<double>(l1) / static_cast<double>(g.size());
    out.max_stratum_discrepancy = std::max(out.max_stratum_discrepancy, tv);
    weighted += tv * static_cast<double>(g.size());
  }
  out.mean_stratum_discrepancy = d.n() > 0 ? weighted / static_cast<double>(d.n()) : 0.0;
  return out;
}

} // namespace mediation

#endif // MEDIATION_PERMUTE_HPP
