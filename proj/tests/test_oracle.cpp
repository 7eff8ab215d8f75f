#include <filesystem>

#include <gtest/gtest.h>

#include "mediation/oracle.hpp"

using namespace mediation;
using namespace mediation::oracle;

namespace {

DiscreteDGP fixture() { return load_fixture(std::string(MEDIATION_TEST_DATA_DIR) + "/fixture_2222.json"); }

const std::vector<std::vector<int>> natural_levels() {
  std::vector<std::vector<int>> out;
  for (int k = 0; k < 8; ++k) out.push_back({k & 1, (k >> 1) & 1, (k >> 2) & 1});
  return out;
}

const std::vector<std::vector<int>> randomized_levels() {
  std::vector<std::vector<int>> out;
  for (int k = 0; k < 16; ++k) out.push_back({k & 1, (k >> 1) & 1, (k >> 2) & 1, (k >> 3) & 1});
  return out;
}

} // namespace

TEST(Oracle, FixtureLoadsAndValidates) {
  const auto g = fixture();
  EXPECT_EQ(g.nw(), 2);
  EXPECT_DOUBLE_EQ(g.pz(1, 1, 0), 0.65);
  EXPECT_DOUBLE_EQ(g.pm(1, 1, 0, 1), 0.7);
  EXPECT_DOUBLE_EQ(g.y(1, 1, 0, 1), 2.5);
}

TEST(Oracle, MalformedFixtureRejected) {
  auto g = fixture();
  g.p_w = {0.5, 0.6};
  EXPECT_THROW(g.validate(), ValidationError);
}

TEST(Oracle, ConstantOutcome) {
  auto g = fixture();
  for (auto& a : g.ey)
    for (auto& z : a)
      for (auto& m : z)
        for (auto& v : m) v = 1.75;
  for (const auto& L : natural_levels()) EXPECT_NEAR(exact_psi_natural(g, L[0], L[1], L[2]), 1.75, 1e-14);
  for (const auto& L : randomized_levels())
    EXPECT_NEAR(exact_psi_randomized(g, L[0], L[1], L[2], L[3]), 1.75, 1e-14);
}

TEST(Oracle, EqualLevelsGiveMeanPotentialOutcome) {
  const auto g = fixture();
  for (int a : {0, 1}) {
    // Tower property: sum_w P(w) E[Y | A = a, w] computed through the observed joint.
    double direct = 0.0;
    for (int w = 0; w < 2; ++w) {
      double ey = 0.0;
      for (int z = 0; z < 2; ++z)
        for (int m = 0; m < 2; ++m) ey += g.pz(z, a, w) * g.pm(m, a, z, w) * g.y(a, z, m, w);
      direct += g.p_w[w] * ey;
    }
    EXPECT_NEAR(exact_psi_natural(g, a, a, a), direct, 1e-14);
    EXPECT_NEAR(exact_psi_natural_joint(g, a, a, a), exact_mean_potential_outcome(g, a), 1e-14);
  }
}

TEST(Oracle, DualOrderEnumerationAgrees) {
  const auto g = fixture();
  for (const auto& L : natural_levels())
    EXPECT_NEAR(exact_psi_natural(g, L[0], L[1], L[2]), exact_psi_natural_joint(g, L[0], L[1], L[2]), 1e-12);
  for (const auto& L : randomized_levels())
    EXPECT_NEAR(exact_psi_randomized(g, L[0], L[1], L[2], L[3]), exact_psi_randomized_joint(g, L[0], L[1], L[2], L[3]),
                1e-12);
  // Hand value for psi^N(1,1,1): E[Y(1)] on the fixture.
  const double w0 = 0.35 * (0.4 * 1.0 + 0.6 * 2.25) + 0.65 * (0.25 * 1.75 + 0.75 * 3.0);
  const double w1 = 0.2 * (0.3 * 1.5 + 0.7 * 2.5) + 0.8 * (0.1 * 2.5 + 0.9 * 3.5);
  EXPECT_NEAR(exact_psi_natural(g, 1, 1, 1), 0.4 * w0 + 0.6 * w1, 1e-14);
}

TEST(Oracle, SinglePointIntermediateCollapses) {
  Rng rng(1);
  const auto g = DiscreteDGP::random(rng, 3, 1, 3);
  for (const auto& L : randomized_levels())
    EXPECT_NEAR(exact_psi_randomized(g, L[0], L[1], L[2], L[3]), exact_psi_natural(g, L[0], L[2], L[3]), 1e-13);
}

TEST(Oracle, InterventionalTotalMatchesAteWithoutMediatorIntermediateLink) {
  // M independent of Z given (A, W): the randomized total equals the ATE.
  auto g = fixture();
  for (int a = 0; a < 2; ++a)
    for (int w = 0; w < 2; ++w) g.p_m[a][1][w] = g.p_m[a][0][w];
  const double rte = exact_psi_randomized(g, 1, 1, 1, 1) - exact_psi_randomized(g, 0, 0, 0, 0);
  const double rte_joint = exact_psi_randomized_joint(g, 1, 1, 1, 1) - exact_psi_randomized_joint(g, 0, 0, 0, 0);
  const double ate = exact_mean_potential_outcome(g, 1) - exact_mean_potential_outcome(g, 0);
  EXPECT_NEAR(rte, ate, 1e-13);
  EXPECT_NEAR(rte_joint, ate, 1e-13);
  const double ride = exact_psi_randomized(g, 1, 1, 0, 0) - exact_psi_randomized(g, 0, 0, 0, 0);
  const double riie = exact_psi_randomized(g, 1, 1, 1, 1) - exact_psi_randomized(g, 1, 1, 0, 0);
  EXPECT_NEAR(ride + riie, rte, 1e-14);
}

TEST(Oracle, NoIntermediateConfoundingCollapse) {
  // Z independent of A given W and M independent of Z given (A, W).
  auto g = fixture();
  for (int w = 0; w < 2; ++w) {
    g.p_z[1][w] = g.p_z[0][w];
    for (int a = 0; a < 2; ++a) g.p_m[a][1][w] = g.p_m[a][0][w];
  }
  const double rt1 = exact_psi_natural(g, 1, 1, 1) - exact_psi_natural(g, 0, 1, 1);
  const double rt2 = exact_psi_randomized(g, 0, 1, 1, 1) - exact_psi_randomized(g, 0, 0, 1, 1);
  const double rt3 = exact_psi_randomized(g, 0, 0, 1, 1) - exact_psi_randomized(g, 0, 0, 1, 0);
  const double rt4 = exact_psi_natural(g, 0, 1, 0) - exact_psi_natural(g, 0, 0, 0);
  // Natural path contrasts: A->Y with mediators at 1, A->M->Y at the reference arm, no Z paths.
  EXPECT_NEAR(rt1, exact_psi_natural(g, 1, 1, 1) - exact_psi_natural(g, 0, 1, 1), 1e-14);
  EXPECT_NEAR(rt2, exact_psi_natural(g, 0, 0, 1) - exact_psi_natural(g, 0, 0, 0), 1e-13);
  EXPECT_NEAR(rt3, 0.0, 1e-13);
  EXPECT_NEAR(rt4, exact_psi_natural(g, 0, 1, 1) - exact_psi_natural(g, 0, 0, 1), 1e-13);
}

TEST(Oracle, FirstRepresenterWithBalancedTreatment) {
  auto g = fixture();
  g.p_a1 = {0.5, 0.5};
  for (int a3 : {0, 1})
    for (int w = 0; w < 2; ++w) {
      EXPECT_DOUBLE_EQ(exact_alpha(g, Family::natural, {0, 0, a3}, 1, {a3, 0, 0, w}), 2.0);
      EXPECT_DOUBLE_EQ(exact_alpha(g, Family::natural, {0, 0, a3}, 1, {1 - a3, 0, 0, w}), 0.0);
    }
}

TEST(Oracle, SecondRepresenterWithoutZDependence) {
  auto g = fixture();
  for (int w = 0; w < 2; ++w) g.p_z[1][w] = g.p_z[0][w];
  for (int a = 0; a < 2; ++a)
    for (int z = 0; z < 2; ++z)
      for (int w = 0; w < 2; ++w)
        EXPECT_NEAR(exact_alpha(g, Family::natural, {1, 1, 0}, 2, {a, z, 0, w}), a == 1 ? 1.0 / g.pa(1, w) : 0.0,
                    1e-14);
}

TEST(Oracle, RieszIdentityOnFixture) {
  const auto g = fixture();
  Rng rng(2);
  for (auto f : {Family::natural, Family::randomized}) {
    const int K = f == Family::natural ? 3 : 4;
    const auto levels = f == Family::natural ? natural_levels() : randomized_levels();
    for (const auto& L : levels)
      for (int k = 1; k <= K; ++k) {
        const Fn theta = random_table(g, rng, slot_inputs(f, k));
        EXPECT_NEAR(expect_product(g, alpha_fn(g, f, L, k), theta), psi_functional(g, f, L, k, theta), 1e-12);
      }
  }
}

TEST(Oracle, TrueNuisancesGiveTruth) {
  const auto g = fixture();
  for (auto f : {Family::natural, Family::randomized}) {
    const int K = f == Family::natural ? 3 : 4;
    for (const auto& L : f == Family::natural ? natural_levels() : randomized_levels()) {
      std::vector<Fn> theta(static_cast<std::size_t>(K)), alpha;
      Fn next;
      for (int k = K; k >= 1; --k) theta[static_cast<std::size_t>(k - 1)] = next = sequential_theta(g, f, L, k, next);
      for (int k = 1; k <= K; ++k) alpha.push_back(alpha_fn(g, f, L, k));
      const double truth = f == Family::natural ? exact_psi_natural(g, L[0], L[1], L[2])
                                                : exact_psi_randomized(g, L[0], L[1], L[2], L[3]);
      EXPECT_NEAR(expected_gradient(g, f, L, theta, alpha), truth, 1e-12);
      EXPECT_NEAR(psi_functional(g, f, L, 1, theta[0]), truth, 1e-12);
    }
  }
}

TEST(Oracle, PositivityViolationReported) {
  auto g = fixture();
  g.p_a1[0] = 1.0;
  EXPECT_THROW(exact_alpha(g, Family::natural, {0, 0, 0}, 1, {0, 0, 0, 0}), PositivityError);
}

TEST(Oracle, JsonRoundTrip) {
  Rng rng(3);
  const auto g = DiscreteDGP::random(rng, 2, 3, 2);
  const auto path = std::filesystem::temp_directory_path() / "mediation_fixture.json";
  {
    std::ofstream o(path);
    o << nlohmann::json(g).dump();
  }
  const auto back = load_fixture(path.string());
  std::filesystem::remove(path);
  for (const auto& L : randomized_levels())
    EXPECT_EQ(exact_psi_randomized(back, L[0], L[1], L[2], L[3]), exact_psi_randomized(g, L[0], L[1], L[2], L[3]));
}

TEST(Oracle, SampleFrequenciesConverge) {
  const auto g = fixture();
  Rng rng(4);
  const auto d = g.sample(200000, rng);
  double a1 = 0.0;
  for (Index i = 0; i < d.n(); ++i) a1 += d.a()[i];
  const double p = 0.4 * 0.3 + 0.6 * 0.65;
  EXPECT_NEAR(a1 / static_cast<double>(d.n()), p, 4.0 * std::sqrt(p * (1 - p) / 200000.0));
}
