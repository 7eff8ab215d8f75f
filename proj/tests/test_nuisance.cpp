#include <map>
#include <tuple>

#include <gtest/gtest.h>

#include "mediation/nuisance.hpp"
#include "mediation/oracle.hpp"
#include "mediation/permute.hpp"

using namespace mediation;
using learn::LearnerSpec;

namespace {

MediationDataset discrete_sample(std::uint64_t seed, Index n, int nw = 2, int nz = 2, int nm = 2) {
  Rng rng(seed);
  const auto g = oracle::DiscreteDGP::random(rng, nw, nz, nm);
  return g.sample(n, rng);
}

MediationDataset with_permuted_z(const MediationDataset& d) { return apply_permutation(d, plan_permutation(d)); }

MediationDataset from_rows(const std::vector<std::array<double, 5>>& rows) {
  const Index n = static_cast<Index>(rows.size());
  Matrix w(n, 1), z(n, 1), m(n, 1);
  Vector a(n), y(n);
  for (Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    w(i, 0) = r[0];
    a[i] = r[1];
    z(i, 0) = r[2];
    m(i, 0) = r[3];
    y[i] = r[4];
  }
  ColumnRoles roles;
  roles.covariates = {"w"};
  roles.treatment = "a";
  roles.intermediate = {"z"};
  roles.mediators = {"m"};
  roles.outcome = "y";
  return MediationDataset(roles, w, a, z, m, y, TreatmentKind::binary);
}

using Key = std::tuple<double, double, double, double>;

// Mean of v per key.
std::map<Key, double> cell_means(const std::vector<Key>& keys, const Vector& v) {
  std::map<Key, std::pair<double, double>> acc;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    acc[keys[i]].first += v[static_cast<Index>(i)];
    acc[keys[i]].second += 1.0;
  }
  std::map<Key, double> out;
  for (const auto& [k, s] : acc) out[k] = s.first / s.second;
  return out;
}

Matrix row(std::initializer_list<double> v) {
  Matrix x(1, static_cast<Index>(v.size()));
  Index j = 0;
  for (double e : v) x(0, j++) = e;
  return x;
}

NuisanceOptions tabular_options() {
  NuisanceOptions opt;
  opt.theta_learner = LearnerSpec::make_tabular();
  opt.alpha_learner = LearnerSpec::make_tabular();
  opt.alpha_max = 1e6;
  return opt;
}

} // namespace

TEST(ThetaChain, ConstantOutcomePropagates) {
  MediationDataset base = discrete_sample(1, 400);
  const MediationDataset d =
      with_permuted_z(MediationDataset(base.roles(), base.w(), base.a(), base.z(), base.m(),
                                       Vector::Constant(base.n(), 2.5), TreatmentKind::binary));
  const auto nat = fit_theta_chain_natural(d, PsiTarget::natural(1, 0, 1), LearnerSpec::make_ridge());
  for (const auto& p : nat) {
    const Vector out = p.predict(Matrix::Random(10, p.width()));
    for (Index i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], 2.5, 1e-8);
  }
  const auto ran = fit_theta_chain_randomized(d, PsiTarget::randomized(1, 0, 1, 0), LearnerSpec::make_ridge());
  ASSERT_EQ(ran.size(), 4u);
  for (const auto& p : ran) {
    const Vector out = p.predict(Matrix::Random(10, p.width()));
    for (Index i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], 2.5, 1e-8);
  }
}

TEST(ThetaChain, NaturalSecondRegressionIsCellMeanOfPseudoOutcome) {
  const auto d = discrete_sample(2, 3000, 3, 2, 3);
  const int a1 = 1;
  const auto chain = fit_theta_chain_natural(d, PsiTarget::natural(a1, 0, 1), LearnerSpec::make_tabular());
  const Index n = d.n();
  std::vector<Key> k3(n), k2(n);
  for (Index i = 0; i < n; ++i) {
    k3[i] = {d.a()[i], d.z()(i, 0), d.m()(i, 0), d.w()(i, 0)};
    k2[i] = {d.a()[i], d.z()(i, 0), 0.0, d.w()(i, 0)};
  }
  const auto theta3 = cell_means(k3, d.y());
  Vector b3(n);
  for (Index i = 0; i < n; ++i) b3[i] = theta3.at({double(a1), d.z()(i, 0), d.m()(i, 0), d.w()(i, 0)});
  const auto theta2 = cell_means(k2, b3);
  for (const auto& [k, v] : theta2) {
    const auto [a, z, unused, w] = k;
    EXPECT_NEAR(chain[1].predict(row({a, z, w}))[0], v, 1e-12);
  }
}

TEST(ThetaChain, RandomizedThirdRegressionUsesPermutedZ) {
  const auto d = with_permuted_z(discrete_sample(3, 3000, 2, 3, 2));
  const int a1 = 0;
  const auto chain = fit_theta_chain_randomized(d, PsiTarget::randomized(a1, 1, 1, 0), LearnerSpec::make_tabular());
  const Index n = d.n();
  std::vector<Key> k4(n), k3(n);
  for (Index i = 0; i < n; ++i) {
    k4[i] = {d.a()[i], d.z()(i, 0), d.m()(i, 0), d.w()(i, 0)};
    k3[i] = {d.a()[i], 0.0, d.m()(i, 0), d.w()(i, 0)};
  }
  const auto theta4 = cell_means(k4, d.y());
  Vector b4(n);
  for (Index i = 0; i < n; ++i) b4[i] = theta4.at({double(a1), d.zpi()(i, 0), d.m()(i, 0), d.w()(i, 0)});
  const auto theta3 = cell_means(k3, b4);
  for (const auto& [k, v] : theta3) {
    const auto [a, unused, m, w] = k;
    EXPECT_NEAR(chain[1].predict(row({a, m, w}))[0], v, 1e-12);
  }
}

TEST(ThetaChain, IdentityPoliciesReproduceSampleMean) {
  const auto d = discrete_sample(4, 2000, 3, 3, 2);
  const auto id = PolicySpec::identity_policy();
  const auto chain = fit_theta_chain_natural(d, PsiTarget::natural(id, id, id), LearnerSpec::make_tabular());
  const Vector b1 = chain[2].predict(design(d, Layout::AW));
  EXPECT_NEAR(b1.mean(), d.y().mean(), 1e-12);
}

TEST(ThetaChain, NaturalAndRandomizedAgreeWhenOutcomeIgnoresZ) {
  Rng rng(5);
  auto g = oracle::DiscreteDGP::random(rng, 2, 2, 2);
  for (int a = 0; a < 2; ++a)
    for (int m = 0; m < 2; ++m)
      for (int w = 0; w < 2; ++w) g.ey[a][1][m][w] = g.ey[a][0][m][w];
  const auto d0 = g.sample(200000, rng);
  const auto d = d0.with_zpi(d0.z());
  // psi^R(a1, a2, a3, a4) = psi^N(a1, a3, a4) when Y does not depend on Z.
  const auto nat = fit_theta_chain_natural(d, PsiTarget::natural(1, 0, 1), LearnerSpec::make_tabular());
  const auto ran = fit_theta_chain_randomized(d, PsiTarget::randomized(1, 1, 0, 1), LearnerSpec::make_tabular());
  for (double a : {0.0, 1.0})
    for (double w : {0.0, 1.0}) EXPECT_NEAR(nat[2].predict(row({a, w}))[0], ran[3].predict(row({a, w}))[0], 0.02);
  EXPECT_NEAR(oracle::exact_psi_natural(g, 1, 0, 1), oracle::exact_psi_randomized(g, 1, 1, 0, 1), 1e-12);
}

TEST(AlphaChain, BalancedTreatmentGivesTwo) {
  std::vector<std::array<double, 5>> rows;
  for (int w = 0; w < 3; ++w)
    for (int rep = 0; rep < 4 + w; ++rep)
      for (int a = 0; a < 2; ++a) rows.push_back({double(w), double(a), double(rep % 2), double(rep % 3 == 0), 0.0});
  const auto d = from_rows(rows);
  for (int a3 : {0, 1}) {
    const auto chain = fit_alpha_chain_natural(d, PsiTarget::natural(1, 1, a3), LearnerSpec::make_tabular(), 500);
    for (double w : {0.0, 1.0, 2.0}) {
      EXPECT_NEAR(chain[0].predict(row({double(a3), w}))[0], 2.0, 1e-12);
      EXPECT_NEAR(chain[0].predict(row({double(1 - a3), w}))[0], 0.0, 1e-12);
    }
  }
}

TEST(AlphaChain, NaturalSecondRepresenterMatchesFrequencies) {
  const auto d = discrete_sample(6, 4000, 2, 3, 2);
  const int a2 = 1, a3 = 0;
  const auto chain = fit_alpha_chain_natural(d, PsiTarget::natural(0, a2, a3), LearnerSpec::make_tabular(), 1e6);
  std::map<std::tuple<int, int, int>, double> n_azw;
  std::map<std::pair<int, int>, double> n_aw;
  for (Index i = 0; i < d.n(); ++i) {
    const int a = int(d.a()[i]), z = int(d.z()(i, 0)), w = int(d.w()(i, 0));
    n_azw[{a, z, w}] += 1;
    n_aw[{a, w}] += 1;
  }
  for (int w = 0; w < 2; ++w) {
    const double p_a2 = n_aw[{a2, w}] / (n_aw[{0, w}] + n_aw[{1, w}]);
    for (int z = 0; z < 3; ++z) {
      const double pz_a3 = n_azw[{a3, z, w}] / n_aw[{a3, w}];
      const double pz_a2 = n_azw[{a2, z, w}] / n_aw[{a2, w}];
      const double expected = pz_a3 / (pz_a2 * p_a2);
      EXPECT_NEAR(chain[1].predict(row({double(a2), double(z), double(w)}))[0], expected, 1e-9);
      EXPECT_NEAR(chain[1].predict(row({double(1 - a2), double(z), double(w)}))[0], 0.0, 1e-12);
    }
  }
}

TEST(AlphaChain, IndependentMediatorsCollapseToFirstRepresenter) {
  // Each (z, m) pattern appears equally often under A = 0 and A = 1 within w.
  std::vector<std::array<double, 5>> rows;
  for (int w = 0; w < 2; ++w)
    for (int z = 0; z < 2; ++z)
      for (int m = 0; m < 3; ++m)
        for (int rep = 0; rep < 1 + z + m; ++rep) {
          rows.push_back({double(w), 1.0, double(z), double(m), 0.0});
          for (int k = 0; k < 1 + w; ++k) rows.push_back({double(w), 0.0, double(z), double(m), 0.0});
        }
  const auto d = from_rows(rows);
  const auto chain = fit_alpha_chain_natural(d, PsiTarget::natural(1, 1, 1), LearnerSpec::make_tabular(), 1e6);
  for (int w = 0; w < 2; ++w)
    for (int z = 0; z < 2; ++z)
      for (int m = 0; m < 3; ++m) {
        const double a1 = chain[0].predict(row({1.0, double(w)}))[0];
        EXPECT_NEAR(chain[2].predict(row({1.0, double(z), double(m), double(w)}))[0], a1, 1e-12);
      }
}

TEST(AlphaChain, RandomizedNullIntermediate) {
  Rng rng(7);
  auto g = oracle::DiscreteDGP::random(rng, 2, 1, 3);
  const auto d = with_permuted_z(g.sample(5000, rng));
  const int a2 = 1, a3 = 0;
  const auto chain =
      fit_alpha_chain_randomized(d, PsiTarget::randomized(0, a2, a3, 1), LearnerSpec::make_tabular(), 1e6);
  std::map<std::tuple<int, int, int>, double> n_amw;
  std::map<std::pair<int, int>, double> n_aw;
  for (Index i = 0; i < d.n(); ++i) {
    n_amw[{int(d.a()[i]), int(d.m()(i, 0)), int(d.w()(i, 0))}] += 1;
    n_aw[{int(d.a()[i]), int(d.w()(i, 0))}] += 1;
  }
  for (int w = 0; w < 2; ++w)
    for (int m = 0; m < 3; ++m) {
      const double pm_a3 = n_amw[{a3, m, w}] / n_aw[{a3, w}];
      const double pm_a2 = n_amw[{a2, m, w}] / n_aw[{a2, w}];
      const double pa2 = n_aw[{a2, w}] / (n_aw[{0, w}] + n_aw[{1, w}]);
      EXPECT_NEAR(chain[2].predict(row({double(a2), double(m), double(w)}))[0], pm_a3 / (pa2 * pm_a2), 1e-9);
    }
}

TEST(AlphaChain, RandomizedAllIndependentGivesTwoOnTargetArm) {
  std::vector<std::array<double, 5>> rows;
  for (int w = 0; w < 2; ++w)
    for (int z = 0; z < 2; ++z)
      for (int m = 0; m < 2; ++m)
        for (int rep = 0; rep < 2 + z + w; ++rep)
          for (int a = 0; a < 2; ++a) rows.push_back({double(w), double(a), double(z), double(m), double(rep)});
  const auto d = with_permuted_z(from_rows(rows));
  const std::vector<int> L{1, 0, 1, 0};
  const auto chain = fit_alpha_chain_randomized(d, PsiTarget::randomized(L[0], L[1], L[2], L[3]),
                                                LearnerSpec::make_tabular(), 1e6);
  // alpha_1 on A = a4, alpha_2 on A = a3, alpha_3 on A = a2.
  const Vector a1 = chain[0].predict(design(d, Layout::AW));
  const Vector a2 = chain[1].predict(design(d, Layout::AZW));
  const Vector a3 = chain[2].predict(design(d, Layout::AMW));
  for (Index i = 0; i < d.n(); ++i) {
    EXPECT_NEAR(a1[i], d.a()[i] == L[3] ? 2.0 : 0.0, 1e-12);
    EXPECT_NEAR(a2[i], d.a()[i] == L[2] ? 2.0 : 0.0, 1e-12);
    EXPECT_NEAR(a3[i], d.a()[i] == L[1] ? 2.0 : 0.0, 1e-12);
  }
}

TEST(AlphaChain, ClippedIntoBounds) {
  const auto d = discrete_sample(8, 300, 2, 2, 2);
  NuisanceOptions opt;
  opt.alpha_max = 1.5;
  ChainFitter fitter(d, opt);
  const auto s = fitter.fit(PsiTarget::natural(1, 0, 1));
  const std::vector<Matrix> x{design(d, Layout::AW), design(d, Layout::AZW), design(d, Layout::AZMW)};
  for (std::size_t k = 1; k <= 3; ++k) {
    const Vector a = s.alpha_at(k, x[k - 1]);
    EXPECT_GE(a.minCoeff(), 0.0);
    EXPECT_LE(a.maxCoeff(), 1.5);
  }
}

TEST(AlphaChain, RieszIncapableLearnerRejected) {
  const auto d = discrete_sample(9, 200);
  EXPECT_THROW(fit_alpha_chain_natural(d, PsiTarget::natural(1, 0, 0), LearnerSpec::make_ensemble(), 500),
               ConfigError);
}

TEST(Chains, RandomizedTargetNeedsPermutedZ) {
  const auto d = discrete_sample(10, 200);
  EXPECT_THROW(fit_theta_chain_randomized(d, PsiTarget::randomized(1, 1, 0, 0), LearnerSpec::make_ridge()),
               ConfigError);
}

TEST(Chains, FitOrderAndSharing) {
  const auto d = with_permuted_z(discrete_sample(11, 500));
  NuisanceCache cache;
  ChainFitter fitter(d, tabular_options(), 1, &cache);
  const auto s1 = fitter.fit(PsiTarget::natural(1, 0, 0));
  const std::vector<std::string> expected{"fit:theta:Y|AZMW", "fit:theta:N2|1", "fit:theta:N1|1,0",
                                          "fit:alpha:1|0",    "fit:alpha:2|0,0", "fit:alpha:N3|1,0,0"};
  EXPECT_EQ(s1.fit_log, expected);
  const auto s2 = fitter.fit(PsiTarget::randomized(1, 1, 0, 0));
  EXPECT_EQ(s2.fit_log.front(), "reuse:theta:Y|AZMW");
  EXPECT_NE(std::find(s2.fit_log.begin(), s2.fit_log.end(), "reuse:alpha:1|0"), s2.fit_log.end());
  EXPECT_NE(std::find(s2.fit_log.begin(), s2.fit_log.end(), "reuse:alpha:2|0,0"), s2.fit_log.end());
}

TEST(Gradient, ConstantOutcomeHasNoResidual) {
  MediationDataset base = discrete_sample(12, 300);
  const MediationDataset d(base.roles(), base.w(), base.a(), base.z(), base.m(), Vector::Constant(base.n(), -1.25),
                           TreatmentKind::binary);
  ChainFitter fitter(d, NuisanceOptions{});
  const auto g = evaluate_gradient(fitter.fit(PsiTarget::natural(0, 1, 0)), d);
  for (Index i = 0; i < d.n(); ++i) EXPECT_NEAR(g.phi[i], -1.25, 1e-8);
  for (std::size_t k = 1; k < g.terms.size(); ++k) EXPECT_LE(g.terms[k].cwiseAbs().maxCoeff(), 1e-8);
}
