#include <gtest/gtest.h>

#include "mediation/effects.hpp"
#include "mediation/oracle.hpp"
#include "mediation/permute.hpp"

using namespace mediation;

namespace {

MediationDataset discrete_with_zpi(std::uint64_t seed, Index n) {
  Rng rng(seed);
  const auto d = oracle::DiscreteDGP::random(rng, 2, 2, 2).sample(n, rng);
  return apply_permutation(d, plan_permutation(d));
}

EffectRequest request(EffectFamily f) {
  EffectRequest r;
  r.family = f;
  return r;
}

} // namespace

TEST(Resolve, NaturalTargets) {
  const auto c = resolve_targets(request(EffectFamily::natural));
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0].name, "NDE");
  EXPECT_EQ(c[0].terms[0].second, PsiTarget::natural(1, 0, 0));
  EXPECT_EQ(c[0].terms[1].second, PsiTarget::natural(0, 0, 0));
  EXPECT_EQ(c[0].terms[1].first, -1.0);
  EXPECT_EQ(c[1].name, "NIE");
  EXPECT_EQ(c[1].terms[0].second, PsiTarget::natural(1, 1, 1));
  EXPECT_EQ(c[1].terms[1].second, PsiTarget::natural(1, 0, 0));
}

TEST(Resolve, DecisionTheoreticMatchesNatural) {
  const auto n = resolve_targets(request(EffectFamily::natural));
  const auto dt = resolve_targets(request(EffectFamily::decision_theoretic));
  ASSERT_EQ(n.size(), dt.size());
  for (std::size_t k = 0; k < n.size(); ++k) EXPECT_EQ(n[k].terms, dt[k].terms);
}

TEST(Resolve, RecantingTwinsWithPolicies) {
  EffectRequest r = request(EffectFamily::recanting_twins);
  r.mtp = true;
  r.d0 = PolicySpec::identity_policy();
  r.d1 = PolicySpec::shift(0.5);
  const auto c = resolve_targets(r);
  ASSERT_EQ(c[0].name, "RT1");
  EXPECT_EQ(c[0].terms[0].second, PsiTarget::natural(r.d1, r.d1, r.d1));
  EXPECT_EQ(c[0].terms[1].second, PsiTarget::natural(r.d0, r.d1, r.d1));
  EXPECT_EQ(c[1].terms[0].second, PsiTarget::randomized(r.d0, r.d1, r.d1, r.d1));
  EXPECT_EQ(c[2].terms[1].second, PsiTarget::randomized(r.d0, r.d0, r.d1, r.d0));
  EXPECT_EQ(c[3].terms[0].second, PsiTarget::natural(r.d0, r.d1, r.d0));
  EXPECT_EQ(c[4].name, "IC");
}

TEST(Resolve, MtpOnlyForSupportedFamilies) {
  EffectRequest r = request(EffectFamily::natural);
  r.mtp = true;
  EXPECT_THROW(resolve_targets(r), ConfigError);
}

TEST(RunEffects, DecompositionsAreExact) {
  const auto d = discrete_with_zpi(1, 1500);
  std::vector<EffectRequest> reqs;
  for (auto f : {EffectFamily::natural, EffectFamily::organic, EffectFamily::interventional,
                 EffectFamily::recanting_twins})
    reqs.push_back(request(f));
  const auto rep = run_effects(d, reqs, NuisanceOptions{}, make_folds(d.n(), 5, 1));
  for (const auto& [k, v] : rep.residuals) EXPECT_LE(std::abs(v), 1e-10) << k;
  EXPECT_EQ(rep.residuals.size(), 4u);
}

TEST(RunEffects, FamilyEquivalences) {
  const auto d = discrete_with_zpi(2, 800);
  const auto folds = make_folds(d.n(), 4, 2);
  const auto nat = run_effects(d, request(EffectFamily::natural), NuisanceOptions{}, folds);
  const auto dt = run_effects(d, request(EffectFamily::decision_theoretic), NuisanceOptions{}, folds);
  EXPECT_EQ(nat.effect("NDE").estimate, dt.effect("DTDE").estimate);
  EXPECT_EQ(nat.effect("NIE").std_error, dt.effect("DTIE").std_error);
  const auto rt = run_effects(d, request(EffectFamily::recanting_twins), NuisanceOptions{}, folds);
  const auto se = run_effects(d, request(EffectFamily::separable), NuisanceOptions{}, folds);
  for (int k = 1; k <= 4; ++k)
    EXPECT_EQ(rt.effect("RT" + std::to_string(k)).estimate, se.effect("SE" + std::to_string(k)).estimate);
}

TEST(RunEffects, NullEffectsWithinThreeSe) {
  Rng rng(3);
  const Index n = 3000;
  Matrix w(n, 1), z(n, 1), m(n, 1);
  Vector a(n), y(n);
  for (Index i = 0; i < n; ++i) {
    w(i, 0) = rng.normal();
    a[i] = rng.bernoulli(0.5);
    z(i, 0) = rng.normal() + 0.5 * a[i];
    m(i, 0) = rng.normal() + 0.5 * z(i, 0);
    y[i] = w(i, 0) + rng.normal();
  }
  ColumnRoles roles;
  roles.covariates = {"w"};
  roles.treatment = "a";
  roles.intermediate = {"z"};
  roles.mediators = {"m"};
  roles.outcome = "y";
  MediationDataset d(roles, w, a, z, m, y, TreatmentKind::binary);
  d = apply_permutation(d, plan_permutation(d));
  const auto rep = run_effects(d, {request(EffectFamily::natural), request(EffectFamily::recanting_twins)},
                               NuisanceOptions{}, make_folds(n, 5, 3));
  for (const auto& e : rep.effects) EXPECT_LE(std::abs(e.estimate), 3.0 * e.std_error) << e.name;
}

TEST(RunEffects, ProportionMediated) {
  const auto d = discrete_with_zpi(4, 1000);
  EffectRequest r = request(EffectFamily::natural);
  r.include_proportion_mediated = true;
  const auto rep = run_effects(d, r, NuisanceOptions{}, make_folds(d.n(), 5, 4));
  ASSERT_TRUE(rep.has("proportion_mediated:NIE"));
  EXPECT_NEAR(rep.effect("proportion_mediated:NIE").estimate,
              rep.effect("NIE").estimate / rep.effect("ATE").estimate, 1e-12);
}

TEST(RunEffects, InterventionalNeedsZ) {
  Rng rng(5);
  auto d = oracle::DiscreteDGP::random(rng, 2, 2, 2).sample(200, rng);
  EXPECT_THROW(run_effects(d, request(EffectFamily::interventional), NuisanceOptions{}, make_folds(200, 2, 1)),
               ConfigError);
}

TEST(RunEffects, SharedNuisancesAcrossFamilies) {
  const auto d = discrete_with_zpi(6, 600);
  const auto rep = run_effects(d, {request(EffectFamily::natural), request(EffectFamily::recanting_twins)},
                               NuisanceOptions{}, make_folds(d.n(), 3, 6));
  for (const auto& f : rep.crossfit.folds) EXPECT_GT(f.reused, 0u);
}
