#ifndef MEDIATION_LEARN_RIDGE_HPP
#define MEDIATION_LEARN_RIDGE_HPP

#include <Eigen/Dense>

#include "mediation/learn/learner.hpp"

namespace mediation::learn {

/// Intercept, standardized features, and (optionally) all degree-two
/// monomials of the standardized features.
struct RidgeBasis {
  Standardizer standardizer;
  bool quadratic = false;

  Index dimension(Index p) const { return 1 + p + (quadratic ? p * (p + 1) / 2 : 0); }

  Matrix expand(const Matrix& x) const {
    const Matrix s = standardizer.apply(x);
    const Index p = s.cols();
    Matrix phi(s.rows(), dimension(p));
    phi.col(0).setOnes();
    phi.middleCols(1, p) = s;
    if (quadratic) {
      Index c = 1 + p;
      for (Index j = 0; j < p; ++j)
        for (Index k = j; k < p; ++k) phi.col(c++) = s.col(j).cwiseProduct(s.col(k));
    }
    return phi;
  }
};

class RidgeModel final : public Model {
public:
  RidgeModel(RidgeBasis basis, Vector beta) : basis_(std::move(basis)), beta_(std::move(beta)) {}
  Vector predict(const Matrix& x) const override { return basis_.expand(x) * beta_; }
  const Vector& coefficients() const { return beta_; }
  const RidgeBasis& basis() const { return basis_; }

private:
  RidgeBasis basis_;
  Vector beta_;
};

/// Solves (Phi'Phi/n + lambda*D) beta = rhs/n, D = diag(0, 1, ..., 1).
/// Squared error: rhs = Phi'y. Riesz: rhs = sum_t Phi_t' w_t.
inline Predictor fit_ridge(const RidgeParams& params, const Matrix& x, const LossSpec& loss, const Vector* y) {
  check_fit_inputs(x, loss, y);
  RidgeBasis basis{Standardizer::fit(x), params.quadratic};
  const Matrix phi = basis.expand(x);
  const double n = static_cast<double>(x.rows());
  const Index q = phi.cols();
  Matrix gram = phi.transpose() * phi / n;
  gram.diagonal().tail(q - 1).array() += params.lambda;
  Vector rhs = Vector::Zero(q);
  if (loss.is_riesz()) {
    for (const auto& t : loss.terms) rhs += basis.expand(t.counterfactual).transpose() * t.weights;
  } else {
    rhs = phi.transpose() * *y;
  }
  rhs /= n;
  Vector beta;
  if (params.lambda > 0.0) {
    Eigen::LDLT<Matrix> ldlt(gram);
    beta = ldlt.solve(rhs);
    if (ldlt.info() != Eigen::Success || !beta.allFinite())
      beta = gram.completeOrthogonalDecomposition().solve(rhs);
  } else {
    beta = gram.completeOrthogonalDecomposition().solve(rhs);
  }
  auto model = std::make_shared<RidgeModel>(std::move(basis), std::move(beta));
  Predictor p(model, x.cols(), "ridge");
  return Predictor(model, x.cols(), "ridge", {empirical_loss(p, x, loss, y)});
}

} // namespace mediation::learn

#endif // MEDIATION_LEARN_RIDGE_HPP
