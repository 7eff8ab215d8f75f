#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "mediation/learn.hpp"

using namespace mediation;
using namespace mediation::learn;

namespace {

Matrix column(std::initializer_list<double> v) {
  Matrix x(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double e : v) x(i++, 0) = e;
  return x;
}

double smooth(double x) { return std::sin(2.0 * x) + 0.3 * x; }

// Least squares on a degree-5 polynomial basis of x / 2.
Vector polynomial_fit_predict(const Matrix& xtr, const Vector& ytr, const Matrix& xte) {
  auto basis = [](const Matrix& x) {
    Matrix b(x.rows(), 6);
    for (Index i = 0; i < x.rows(); ++i) {
      const double t = x(i, 0) / 2.0;
      double p = 1.0;
      for (Index k = 0; k < 6; ++k, p *= t) b(i, k) = p;
    }
    return b;
  };
  const Matrix btr = basis(xtr);
  const Vector coef = btr.colPivHouseholderQr().solve(ytr);
  return basis(xte) * coef;
}

} // namespace

TEST(Ridge, ExactLinearFit) {
  const Matrix x = column({1, 2, 3});
  const Vector y = Eigen::Vector3d(2, 4, 6);
  const auto p = fit(LearnerSpec::make_ridge(0.0, false), x, y);
  const Vector out = p.predict(column({1, 2, 3, 10}));
  EXPECT_NEAR(out[0], 2.0, 1e-10);
  EXPECT_NEAR(out[1], 4.0, 1e-10);
  EXPECT_NEAR(out[2], 6.0, 1e-10);
  EXPECT_NEAR(out[3], 20.0, 1e-9);
}

TEST(Ridge, NormalEquationsHold) {
  Rng rng(1);
  const Index n = 300;
  Matrix x(n, 3);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < 3; ++j) x(i, j) = rng.normal();
    y[i] = x(i, 0) - x(i, 1) * x(i, 2) + rng.normal();
  }
  const double lambda = 0.05;
  const auto p = fit(LearnerSpec::make_ridge(lambda, true), x, y);
  const auto* m = dynamic_cast<const RidgeModel*>(p.model());
  ASSERT_NE(m, nullptr);
  const Matrix phi = m->basis().expand(x);
  Matrix lhs = phi.transpose() * phi / static_cast<double>(n);
  lhs.diagonal().tail(lhs.rows() - 1).array() += lambda;
  const Vector rhs = phi.transpose() * y / static_cast<double>(n);
  EXPECT_LE((lhs * m->coefficients() - rhs).norm() / rhs.norm(), 1e-8);
}

TEST(Ridge, ConstantTargetGivesConstantPredictions) {
  Rng rng(2);
  Matrix x(50, 2);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const auto p = fit(LearnerSpec::make_ridge(), x, Vector::Constant(50, 3.5));
  const Vector out = p.predict(x);
  for (Index i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], 3.5, 1e-9);
}

TEST(Learner, WidthMismatchRejected) {
  const auto p = fit(LearnerSpec::make_ridge(), column({1, 2, 3}), Vector(Eigen::Vector3d(1, 2, 3)));
  EXPECT_THROW(p.predict(Matrix::Zero(2, 2)), ArgumentError);
}

TEST(Tabular, CellMeansOnTrainingRows) {
  Matrix x(6, 2);
  x << 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1;
  Vector y(6);
  y << 1, 3, 5, 2, 4, 9;
  const auto p = fit(LearnerSpec::make_tabular(), x, y);
  const Vector out = p.predict(x);
  EXPECT_DOUBLE_EQ(out[0], 2.0);
  EXPECT_DOUBLE_EQ(out[1], 2.0);
  EXPECT_DOUBLE_EQ(out[2], 5.0);
  EXPECT_DOUBLE_EQ(out[3], 5.0);
  EXPECT_DOUBLE_EQ(out[5], 5.0);
}

TEST(Tabular, RieszPointEvaluationIsInverseFrequency) {
  Rng rng(4);
  const Index n = 997;
  Matrix x(n, 2);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = static_cast<double>(rng.below(2));
    x(i, 1) = static_cast<double>(rng.below(3));
  }
  // b(alpha) = alpha(c0) with c0 = (1, 2) for every row.
  Matrix cf(n, 2);
  cf.col(0).setConstant(1.0);
  cf.col(1).setConstant(2.0);
  const auto p = fit(LearnerSpec::make_tabular(), x, LossSpec::riesz(cf, Vector::Ones(n)));
  Index count = 0;
  for (Index i = 0; i < n; ++i) count += (x(i, 0) == 1.0 && x(i, 1) == 2.0);
  const double freq = static_cast<double>(count) / static_cast<double>(n);
  const Vector out = p.predict(x);
  for (Index i = 0; i < n; ++i) {
    if (x(i, 0) == 1.0 && x(i, 1) == 2.0)
      EXPECT_NEAR(out[i], 1.0 / freq, 1e-12);
    else
      EXPECT_DOUBLE_EQ(out[i], 0.0);
  }
}

TEST(Tabular, RieszStationarityPerCell) {
  Rng rng(6);
  const Index n = 500;
  Matrix x(n, 1), cf(n, 1);
  Vector w(n);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = static_cast<double>(rng.below(4));
    cf(i, 0) = static_cast<double>(rng.below(4));
    w[i] = rng.uniform() * 2.0;
  }
  const auto p = fit(LearnerSpec::make_tabular(), x, LossSpec::riesz(cf, w));
  std::map<double, double> nc, hit;
  for (Index i = 0; i < n; ++i) {
    nc[x(i, 0)] += 1.0;
    hit[cf(i, 0)] += w[i];
  }
  for (const auto& [c, count] : nc) {
    Matrix q(1, 1);
    q(0, 0) = c;
    // 2 n_c alpha(c) = 2 * (linear-term weight landing on c)
    EXPECT_NEAR(2.0 * count * p.predict(q)[0], 2.0 * hit[c], 1e-9);
  }
}

TEST(Tabular, ContinuousColumnRejected) {
  Matrix x(100, 1);
  for (Index i = 0; i < 100; ++i) x(i, 0) = 0.01 * static_cast<double>(i);
  EXPECT_THROW(fit(LearnerSpec::make_tabular(), x, Vector(Vector::Zero(100))), ArgumentError);
}

TEST(Mlp, SmoothFunctionNearBasisBaseline) {
  Rng rng(7);
  const Index n = 5000, m = 2000;
  Matrix xtr(n, 1), xte(m, 1);
  Vector ytr(n), fte(m);
  for (Index i = 0; i < n; ++i) {
    xtr(i, 0) = -2.0 + 4.0 * rng.uniform();
    ytr[i] = smooth(xtr(i, 0)) + 0.1 * rng.normal();
  }
  for (Index i = 0; i < m; ++i) {
    xte(i, 0) = -2.0 + 4.0 * rng.uniform();
    fte[i] = smooth(xte(i, 0));
  }
  MlpParams params;
  params.seed = 11;
  const auto p = fit(LearnerSpec::make_mlp(params), xtr, ytr);
  const double mse_mlp = (p.predict(xte) - fte).squaredNorm() / static_cast<double>(m);
  const double mse_base = (polynomial_fit_predict(xtr, ytr, xte) - fte).squaredNorm() / static_cast<double>(m);
  EXPECT_LT(mse_mlp, 5.0 * mse_base) << "mlp " << mse_mlp << " baseline " << mse_base;
  EXPECT_EQ(p.trace().size(), static_cast<std::size_t>(params.epochs));
}

TEST(Mlp, DeterministicGivenSeed) {
  Rng rng(8);
  Matrix x(300, 2);
  Vector y(300);
  for (Index i = 0; i < 300; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    y[i] = x(i, 0) * x(i, 1);
  }
  MlpParams params;
  params.epochs = 20;
  params.seed = 3;
  const auto a = fit(LearnerSpec::make_mlp(params), x, y);
  const auto b = fit(LearnerSpec::make_mlp(params), x, y);
  EXPECT_EQ(a.predict(x), b.predict(x));
  EXPECT_EQ(a.predict(x), a.predict(x));
}

TEST(Mlp, RieszLossNotBelowSaturatedMinimum) {
  Rng rng(9);
  const Index n = 1000;
  Matrix x(n, 2), cf(n, 2);
  for (Index i = 0; i < n; ++i) {
    x(i, 1) = static_cast<double>(rng.below(3));
    x(i, 0) = rng.bernoulli(0.3 + 0.2 * x(i, 1)) ? 1.0 : 0.0;
    cf(i, 0) = 1.0;
    cf(i, 1) = x(i, 1);
  }
  const LossSpec loss = LossSpec::riesz(cf, Vector::Ones(n));
  MlpParams params;
  params.seed = 2;
  params.epochs = 100;
  const auto mlp = fit(LearnerSpec::make_mlp(params), x, loss);
  const auto tab = fit(LearnerSpec::make_tabular(), x, loss);
  EXPECT_GE(empirical_loss(mlp, x, loss, nullptr), empirical_loss(tab, x, loss, nullptr) - 1e-12);
}

TEST(Mlp, DivergenceReported) {
  Matrix x = column({1, 2, 3, 4});
  Vector y(4);
  y << 1, 2, 3, 4;
  MlpParams params;
  params.step_size = 1e308;
  params.clip_norm = 1e308;
  params.epochs = 50;
  try {
    fit(LearnerSpec::make_mlp(params), x, y);
    FAIL() << "expected TrainingDivergence";
  } catch (const TrainingDivergence& e) {
    EXPECT_GE(e.epoch(), 0);
  }
}

TEST(Ensemble, WeightsAreConvexAndSupported) {
  Rng rng(12);
  const Index n = 600;
  Matrix x(n, 1);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    y[i] = 2.0 * x(i, 0) + 0.1 * rng.normal();
  }
  MlpParams small;
  small.epochs = 30;
  auto spec = LearnerSpec::make_ensemble({LearnerSpec::make_ridge(), LearnerSpec::make_mlp(small)});
  const auto p = fit(seeded(spec, 5), x, y);
  double s = 0.0;
  for (double w : p.trace()) {
    EXPECT_GE(w, 0.0);
    s += w;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_LT((p.predict(x) - y).squaredNorm() / static_cast<double>(n), 0.05);
  EXPECT_THROW(fit(spec, x, LossSpec::riesz(x, Vector::Ones(n))), ConfigError);
}

TEST(LearnerSpec, ValidationNamesProblem) {
  LearnerSpec s = LearnerSpec::make_mlp();
  s.mlp.hidden = {};
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_EQ(learner_kind_from_string("tabular_exact"), LearnerSpec::Kind::tabular_exact);
  EXPECT_THROW(learner_kind_from_string("boosting"), ConfigError);
}
