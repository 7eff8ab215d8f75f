#ifndef MEDIATION_LEARN_HPP
#define MEDIATION_LEARN_HPP

#include <algorithm>
#include <numeric>

#include "mediation/learn/learner.hpp"
#include "mediation/learn/mlp.hpp"
#include "mediation/learn/ridge.hpp"
#include "mediation/learn/tabular.hpp"

namespace mediation::learn {

/// Non-negative least squares for a handful of columns: best feasible
/// unconstrained solution over all column subsets.
inline Vector nnls_small(const Matrix& p, const Vector& y) {
  const Index k = p.cols();
  Vector best = Vector::Zero(k);
  double best_sse = y.squaredNorm();
  for (unsigned mask = 1; mask < (1u << k); ++mask) {
    std::vector<Index> cols;
    for (Index j = 0; j < k; ++j)
      if (mask & (1u << j)) cols.push_back(j);
    const Matrix sub = p(Eigen::all, cols);
    const Vector c = sub.completeOrthogonalDecomposition().solve(y);
    if ((c.array() < 0.0).any() || !c.allFinite()) continue;
    const double sse = (sub * c - y).squaredNorm();
    if (sse < best_sse) {
      best_sse = sse;
      best.setZero();
      for (std::size_t t = 0; t < cols.size(); ++t) best[cols[t]] = c[static_cast<Index>(t)];
    }
  }
  return best;
}

class EnsembleModel final : public Model {
public:
  EnsembleModel(std::vector<Predictor> members, Vector weights)
      : members_(std::move(members)), weights_(std::move(weights)) {}

  Vector predict(const Matrix& x) const override {
    Vector out = Vector::Zero(x.rows());
    for (std::size_t k = 0; k < members_.size(); ++k)
      if (weights_[static_cast<Index>(k)] != 0.0) out += weights_[static_cast<Index>(k)] * members_[k].predict(x);
    return out;
  }
  const Vector& weights() const { return weights_; }

private:
  std::vector<Predictor> members_;
  Vector weights_;
};

inline Predictor fit(const LearnerSpec& spec, const Matrix& x, const LossSpec& loss, const Vector* y = nullptr);

/// Holdout stacking: members fit on a random (1 - holdout) share, weights by
/// NNLS of the holdout targets on holdout predictions, normalized to sum 1.
inline Predictor fit_ensemble(const LearnerSpec& spec, const Matrix& x, const LossSpec& loss, const Vector* y) {
  if (loss.is_riesz())
    throw ConfigError("learn", "ensemble learners cannot fit Riesz losses; choose ridge, mlp or tabular_exact");
  check_fit_inputs(x, loss, y);
  std::vector<LearnerSpec> members = spec.resolved_members();
  for (std::size_t k = 0; k < members.size(); ++k) {
    members[k].mlp.seed = derive_seed(spec.ensemble.seed, k);
    members[k].ensemble.seed = derive_seed(spec.ensemble.seed, k);
  }
  const Index n = x.rows();
  if (n < 2) throw ArgumentError("learn", "ensemble needs at least two rows");
  const Index n_hold =
      std::clamp<Index>(static_cast<Index>(std::llround(spec.ensemble.holdout_fraction * static_cast<double>(n))), 1, n - 1);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(derive_seed(spec.ensemble.seed, 0x686f6c64));
  rng.shuffle(order);
  std::vector<Index> hold(order.begin(), order.begin() + n_hold), train(order.begin() + n_hold, order.end());
  std::sort(hold.begin(), hold.end());
  std::sort(train.begin(), train.end());
  const Matrix x_train = x(train, Eigen::all), x_hold = x(hold, Eigen::all);
  const Vector y_train = (*y)(train), y_hold = (*y)(hold);

  std::vector<Predictor> fitted;
  Matrix preds(n_hold, static_cast<Index>(members.size()));
  for (std::size_t k = 0; k < members.size(); ++k) {
    fitted.push_back(fit(members[k], x_train, loss, &y_train));
    preds.col(static_cast<Index>(k)) = fitted.back().predict(x_hold);
  }
  Vector w = nnls_small(preds, y_hold);
  if (w.sum() <= 0.0) {
    Index best = 0;
    double best_mse = std::numeric_limits<double>::infinity();
    for (Index k = 0; k < preds.cols(); ++k) {
      const double mse = (preds.col(k) - y_hold).squaredNorm();
      if (mse < best_mse) {
        best_mse = mse;
        best = k;
      }
    }
    w.setZero();
    w[best] = 1.0;
  }
  w /= w.sum();
  if (spec.ensemble.refit)
    for (std::size_t k = 0; k < members.size(); ++k)
      if (w[static_cast<Index>(k)] > 0.0) fitted[k] = fit(members[k], x, loss, y);
  std::vector<double> trace(w.data(), w.data() + w.size());
  auto model = std::make_shared<EnsembleModel>(std::move(fitted), std::move(w));
  return Predictor(model, x.cols(), "ensemble", std::move(trace));
}

/// Fits `spec` to (x, y) under `loss`. Squared error requires `y`; the Riesz
/// loss ignores it.
inline Predictor fit(const LearnerSpec& spec, const Matrix& x, const LossSpec& loss, const Vector* y) {
  spec.validate();
  switch (spec.kind) {
  case LearnerSpec::Kind::ridge: return fit_ridge(spec.ridge, x, loss, y);
  case LearnerSpec::Kind::tabular_exact: return fit_tabular(spec.tabular, x, loss, y);
  case LearnerSpec::Kind::mlp: return fit_mlp(spec.mlp, x, loss, y);
  case LearnerSpec::Kind::ensemble: return fit_ensemble(spec, x, loss, y);
  }
  throw ConfigError("learn", "unknown learner kind");
}

inline Predictor fit(const LearnerSpec& spec, const Matrix& x, const Vector& y) {
  return fit(spec, x, LossSpec::squared_error(), &y);
}

inline Vector predict(const Predictor& p, const Matrix& x) { return p.predict(x); }

/// Copy of `spec` whose stochastic parts are seeded by `seed`.
inline LearnerSpec seeded(LearnerSpec spec, std::uint64_t seed) {
  spec.mlp.seed = seed;
  spec.ensemble.seed = seed;
  return spec;
}

} // namespace mediation::learn

#endif // MEDIATION_LEARN_HPP
