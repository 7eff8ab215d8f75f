#ifndef MEDIATION_ORACLE_HPP
#define MEDIATION_ORACLE_HPP

#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mediation/data.hpp"
#include "mediation/random.hpp"

// Exact enumeration over fully specified discrete distributions. Nothing here
// calls into the estimation code path.

namespace mediation::oracle {

/// Binary A; scalar W, Z, M with finite labelled supports.
/// p_z[a][w][z], p_m[a][z][w][m], ey[a][z][m][w].
struct DiscreteDGP {
  std::vector<double> w_values, z_values, m_values;
  std::vector<double> p_w;
  std::vector<double> p_a1; // P(A=1 | w)
  std::vector<std::vector<std::vector<double>>> p_z;
  std::vector<std::vector<std::vector<std::vector<double>>>> p_m;
  std::vector<std::vector<std::vector<std::vector<double>>>> ey;
  /// Y = E[Y|a,z,m,w] +/- y_spread with probability 1/2 each.
  double y_spread = 1.0;

  int nw() const { return static_cast<int>(w_values.size()); }
  int nz() const { return static_cast<int>(z_values.size()); }
  int nm() const { return static_cast<int>(m_values.size()); }

  double pa(int a, int w) const { return a == 1 ? p_a1[w] : 1.0 - p_a1[w]; }
  double pz(int z, int a, int w) const { return p_z[a][w][z]; }
  double pm(int m, int a, int z, int w) const { return p_m[a][z][w][m]; }
  double y(int a, int z, int m, int w) const { return ey[a][z][m][w]; }

  void validate() const {
    auto fail = [](const std::string& what) { throw ValidationError("oracle", what); };
    auto check_row = [&](const std::vector<double>& row, const std::string& name) {
      double s = 0.0;
      for (double p : row) {
        if (!(p >= 0.0)) fail(name + " has a negative probability");
        s += p;
      }
      if (std::fabs(s - 1.0) > 1e-12) fail(name + " does not sum to 1");
    };
    if (nw() < 1 || nz() < 1 || nm() < 1) fail("empty support");
    if (static_cast<int>(p_w.size()) != nw() || static_cast<int>(p_a1.size()) != nw()) fail("table shape mismatch");
    check_row(p_w, "P(W)");
    for (int w = 0; w < nw(); ++w)
      if (!(p_a1[w] >= 0.0 && p_a1[w] <= 1.0)) fail("P(A=1|W) outside [0,1]");
    if (p_z.size() != 2 || p_m.size() != 2 || ey.size() != 2) fail("table shape mismatch");
    for (int a = 0; a < 2; ++a) {
      if (static_cast<int>(p_z[a].size()) != nw()) fail("P(Z|A,W) shape mismatch");
      for (int w = 0; w < nw(); ++w) {
        if (static_cast<int>(p_z[a][w].size()) != nz()) fail("P(Z|A,W) shape mismatch");
        check_row(p_z[a][w], "P(Z|A,W)");
      }
      if (static_cast<int>(p_m[a].size()) != nz() || static_cast<int>(ey[a].size()) != nz())
        fail("table shape mismatch");
      for (int z = 0; z < nz(); ++z) {
        if (static_cast<int>(p_m[a][z].size()) != nw() || static_cast<int>(ey[a][z].size()) != nm())
          fail("table shape mismatch");
        for (int w = 0; w < nw(); ++w) {
          if (static_cast<int>(p_m[a][z][w].size()) != nm()) fail("P(M|A,Z,W) shape mismatch");
          check_row(p_m[a][z][w], "P(M|A,Z,W)");
        }
        for (int m = 0; m < nm(); ++m)
          if (static_cast<int>(ey[a][z][m].size()) != nw()) fail("E[Y|A,Z,M,W] shape mismatch");
      }
    }
  }

  /// Random fixture with every probability at least `floor` before normalization.
  static DiscreteDGP random(Rng& rng, int nw, int nz, int nm, double floor = 0.15) {
    auto simplex = [&](int k) {
      std::vector<double> p(static_cast<std::size_t>(k));
      double s = 0.0;
      for (auto& v : p) s += (v = floor + rng.uniform());
      for (auto& v : p) v /= s;
      return p;
    };
    DiscreteDGP g;
    for (int w = 0; w < nw; ++w) g.w_values.push_back(w);
    for (int z = 0; z < nz; ++z) g.z_values.push_back(z);
    for (int m = 0; m < nm; ++m) g.m_values.push_back(m);
    g.p_w = simplex(nw);
    for (int w = 0; w < nw; ++w) g.p_a1.push_back(0.2 + 0.6 * rng.uniform());
    g.p_z.assign(2, {});
    g.p_m.assign(2, {});
    g.ey.assign(2, {});
    for (int a = 0; a < 2; ++a) {
      for (int w = 0; w < nw; ++w) g.p_z[a].push_back(simplex(nz));
      g.p_m[a].assign(static_cast<std::size_t>(nz), {});
      g.ey[a].assign(static_cast<std::size_t>(nz), {});
      for (int z = 0; z < nz; ++z) {
        for (int w = 0; w < nw; ++w) g.p_m[a][z].push_back(simplex(nm));
        g.ey[a][z].assign(static_cast<std::size_t>(nm), std::vector<double>(static_cast<std::size_t>(nw)));
        for (int m = 0; m < nm; ++m)
          for (int w = 0; w < nw; ++w) g.ey[a][z][m][w] = 4.0 * rng.uniform() - 2.0;
      }
    }
    return g;
  }

  /// Draws n iid rows; columns w, a, z, m, y.
  MediationDataset sample(Index n, Rng& rng) const {
    auto draw = [&](const std::vector<double>& p) {
      const double u = rng.uniform();
      double c = 0.0;
      for (std::size_t k = 0; k + 1 < p.size(); ++k)
        if (u < (c += p[k])) return static_cast<int>(k);
      return static_cast<int>(p.size() - 1);
    };
    Matrix W(n, 1), Z(n, 1), M(n, 1);
    Vector A(n), Y(n);
    for (Index i = 0; i < n; ++i) {
      const int w = draw(p_w);
      const int a = rng.uniform() < p_a1[w] ? 1 : 0;
      const int z = draw(p_z[a][w]);
      const int m = draw(p_m[a][z][w]);
      W(i, 0) = w_values[w];
      A[i] = a;
      Z(i, 0) = z_values[z];
      M(i, 0) = m_values[m];
      Y[i] = ey[a][z][m][w] + (rng.uniform() < 0.5 ? -y_spread : y_spread);
    }
    ColumnRoles roles;
    roles.covariates = {"w"};
    roles.treatment = "a";
    roles.intermediate = {"z"};
    roles.mediators = {"m"};
    roles.outcome = "y";
    return MediationDataset(roles, W, A, Z, M, Y, TreatmentKind::binary);
  }

  /// Support indices of a sampled row.
  int w_index(double v) const { return index_of(w_values, v, "w"); }
  int z_index(double v) const { return index_of(z_values, v, "z"); }
  int m_index(double v) const { return index_of(m_values, v, "m"); }

private:
  static int index_of(const std::vector<double>& s, double v, const char* name) {
    for (std::size_t k = 0; k < s.size(); ++k)
      if (s[k] == v) return static_cast<int>(k);
    throw ArgumentError("oracle", std::string("value outside the support of ") + name);
  }
};

inline void to_json(nlohmann::json& j, const DiscreteDGP& g) {
  j = nlohmann::json{{"w", g.w_values},   {"z", g.z_values},       {"m", g.m_values},
                     {"p_w", g.p_w},      {"p_a1_given_w", g.p_a1}, {"p_z_given_aw", g.p_z},
                     {"p_m_given_azw", g.p_m}, {"e_y_given_azmw", g.ey}, {"y_spread", g.y_spread}};
}

inline void from_json(const nlohmann::json& j, DiscreteDGP& g) {
  try {
    j.at("w").get_to(g.w_values);
    j.at("z").get_to(g.z_values);
    j.at("m").get_to(g.m_values);
    j.at("p_w").get_to(g.p_w);
    j.at("p_a1_given_w").get_to(g.p_a1);
    j.at("p_z_given_aw").get_to(g.p_z);
    j.at("p_m_given_azw").get_to(g.p_m);
    j.at("e_y_given_azmw").get_to(g.ey);
    g.y_spread = j.value("y_spread", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("oracle", std::string("fixture: ") + e.what());
  }
  g.validate();
}

inline DiscreteDGP load_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("oracle", "cannot open fixture " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("oracle", path + ": " + e.what());
  }
  return j.get<DiscreteDGP>();
}

inline void check_levels(const std::vector<int>& levels) {
  for (int a : levels)
    if (a != 0 && a != 1) throw ArgumentError("oracle", "treatment level outside {0,1}");
}

/// E_W E_{Z|a3,W} E_{M|a2,Z,W} E[Y | a1, Z, M, W].
inline double exact_psi_natural(const DiscreteDGP& g, int a1, int a2, int a3) {
  check_levels({a1, a2, a3});
  double total = 0.0;
  for (int w = 0; w < g.nw(); ++w) {
    double over_z = 0.0;
    for (int z = 0; z < g.nz(); ++z) {
      double over_m = 0.0;
      for (int m = 0; m < g.nm(); ++m) over_m += g.pm(m, a2, z, w) * g.y(a1, z, m, w);
      over_z += g.pz(z, a3, w) * over_m;
    }
    total += g.p_w[w] * over_z;
  }
  return total;
}

/// Same value, summed as a flat joint in (m, z, w) order.
inline double exact_psi_natural_joint(const DiscreteDGP& g, int a1, int a2, int a3) {
  check_levels({a1, a2, a3});
  double total = 0.0;
  for (int m = 0; m < g.nm(); ++m)
    for (int z = 0; z < g.nz(); ++z)
      for (int w = 0; w < g.nw(); ++w) total += g.y(a1, z, m, w) * g.pm(m, a2, z, w) * g.pz(z, a3, w) * g.p_w[w];
  return total;
}

/// E_W E_{Z|a4,W} E_{M|a3,Z,W} E_{Z'|a2,W} E[Y | a1, Z', M, W].
inline double exact_psi_randomized(const DiscreteDGP& g, int a1, int a2, int a3, int a4) {
  check_levels({a1, a2, a3, a4});
  double total = 0.0;
  for (int w = 0; w < g.nw(); ++w) {
    double over_z = 0.0;
    for (int z = 0; z < g.nz(); ++z) {
      double over_m = 0.0;
      for (int m = 0; m < g.nm(); ++m) {
        double over_zp = 0.0;
        for (int zp = 0; zp < g.nz(); ++zp) over_zp += g.pz(zp, a2, w) * g.y(a1, zp, m, w);
        over_m += g.pm(m, a3, z, w) * over_zp;
      }
      over_z += g.pz(z, a4, w) * over_m;
    }
    total += g.p_w[w] * over_z;
  }
  return total;
}

/// Same value, via the marginal mediator law P_{a3,a4}(m | w) first.
inline double exact_psi_randomized_joint(const DiscreteDGP& g, int a1, int a2, int a3, int a4) {
  check_levels({a1, a2, a3, a4});
  double total = 0.0;
  for (int w = 0; w < g.nw(); ++w)
    for (int m = 0; m < g.nm(); ++m) {
      double pm_marg = 0.0;
      for (int z = 0; z < g.nz(); ++z) pm_marg += g.pm(m, a3, z, w) * g.pz(z, a4, w);
      for (int zp = 0; zp < g.nz(); ++zp) total += g.p_w[w] * pm_marg * g.pz(zp, a2, w) * g.y(a1, zp, m, w);
    }
  return total;
}

/// E[Y(a)] by the g-formula over the observed joint.
inline double exact_mean_potential_outcome(const DiscreteDGP& g, int a) {
  double total = 0.0;
  for (int w = 0; w < g.nw(); ++w)
    for (int z = 0; z < g.nz(); ++z)
      for (int m = 0; m < g.nm(); ++m) total += g.p_w[w] * g.pz(z, a, w) * g.pm(m, a, z, w) * g.y(a, z, m, w);
  return total;
}

enum class Family { natural, randomized };

/// A point (a, z, m, w) as support indices; unused coordinates are ignored.
struct Point {
  int a = 0, z = 0, m = 0, w = 0;
};

namespace detail {
inline double positive(double p, const std::string& cell) {
  if (!(p > 0.0)) throw PositivityError("oracle", "zero probability in the denominator at " + cell);
  return p;
}
inline std::string cell(const Point& x) {
  return "(a=" + std::to_string(x.a) + ", z=" + std::to_string(x.z) + ", m=" + std::to_string(x.m) +
         ", w=" + std::to_string(x.w) + ")";
}
/// P_{a3, a4}(m | w) = sum_z P(m | a3, z, w) P(z | a4, w).
inline double mediator_mix(const DiscreteDGP& g, int m, int a3, int a4, int w) {
  double s = 0.0;
  for (int z = 0; z < g.nz(); ++z) s += g.pm(m, a3, z, w) * g.pz(z, a4, w);
  return s;
}
} // namespace detail

/// Closed-form Riesz representer alpha_k at `x`; `levels` = (a1, ..., aK).
inline double exact_alpha(const DiscreteDGP& g, Family f, const std::vector<int>& levels, int k, const Point& x) {
  check_levels(levels);
  const std::size_t K = f == Family::natural ? 3 : 4;
  if (levels.size() != K || k < 1 || k > static_cast<int>(K)) throw ArgumentError("oracle", "bad alpha index");
  const std::string c = detail::cell(x);
  const int a = x.a, z = x.z, m = x.m, w = x.w;
  auto lv = [&](int j) { return levels[static_cast<std::size_t>(j - 1)]; };
  auto ind = [&](int j) { return a == lv(j) ? 1.0 : 0.0; };
  const double paw = detail::positive(g.pa(a, w), "P(a|w) " + c);
  if (f == Family::natural) {
    switch (k) {
    case 1: return ind(3) / paw;
    case 2: return ind(2) / paw * g.pz(z, lv(3), w) / detail::positive(g.pz(z, a, w), "P(z|a,w) " + c);
    default:
      return ind(1) / paw * g.pm(m, lv(2), z, w) / detail::positive(g.pm(m, a, z, w), "P(m|a,z,w) " + c) *
             g.pz(z, lv(3), w) / detail::positive(g.pz(z, a, w), "P(z|a,w) " + c);
    }
  }
  switch (k) {
  case 1: return ind(4) / paw;
  case 2: return ind(3) / paw * g.pz(z, lv(4), w) / detail::positive(g.pz(z, a, w), "P(z|a,w) " + c);
  case 3: {
    double pm_aw = 0.0;
    for (int zz = 0; zz < g.nz(); ++zz) pm_aw += g.pm(m, a, zz, w) * g.pz(zz, a, w);
    return ind(2) / paw * detail::mediator_mix(g, m, lv(3), lv(4), w) / detail::positive(pm_aw, "P(m|a,w) " + c);
  }
  default:
    return ind(1) / paw * g.pz(z, lv(2), w) / detail::positive(g.pz(z, a, w), "P(z|a,w) " + c) *
           detail::mediator_mix(g, m, lv(3), lv(4), w) / detail::positive(g.pm(m, a, z, w), "P(m|a,z,w) " + c);
  }
}

/// A real function of (a, z, m, w) support indices; coordinates outside the
/// function's argument list are ignored by convention.
using Fn = std::function<double(const Point&)>;

/// Psi_k(theta): the nested expectation that alpha_k represents.
inline double psi_functional(const DiscreteDGP& g, Family f, const std::vector<int>& L, int k, const Fn& theta) {
  check_levels(L);
  double total = 0.0;
  auto lv = [&](int j) { return L[static_cast<std::size_t>(j - 1)]; };
  for (int w = 0; w < g.nw(); ++w) {
    double inner = 0.0;
    if (k == 1) {
      inner = theta({f == Family::natural ? lv(3) : lv(4), 0, 0, w});
    } else if (f == Family::natural) {
      for (int z = 0; z < g.nz(); ++z) {
        double over_m = 0.0;
        if (k == 2)
          over_m = theta({lv(2), z, 0, w});
        else
          for (int m = 0; m < g.nm(); ++m) over_m += g.pm(m, lv(2), z, w) * theta({lv(1), z, m, w});
        inner += g.pz(z, lv(3), w) * over_m;
      }
    } else {
      for (int z = 0; z < g.nz(); ++z) {
        double over_m = 0.0;
        if (k == 2) {
          over_m = theta({lv(3), z, 0, w});
        } else {
          for (int m = 0; m < g.nm(); ++m) {
            double v = 0.0;
            if (k == 3)
              v = theta({lv(2), 0, m, w});
            else
              for (int zp = 0; zp < g.nz(); ++zp) v += g.pz(zp, lv(2), w) * theta({lv(1), zp, m, w});
            over_m += g.pm(m, lv(3), z, w) * v;
          }
        }
        inner += g.pz(z, lv(4), w) * over_m;
      }
    }
    total += g.p_w[w] * inner;
  }
  return total;
}

/// E[alpha(X) theta(X)] over the observed joint of (A, Z, M, W).
inline double expect_product(const DiscreteDGP& g, const Fn& alpha, const Fn& theta) {
  double total = 0.0;
  for (int w = 0; w < g.nw(); ++w)
    for (int a = 0; a < 2; ++a)
      for (int z = 0; z < g.nz(); ++z)
        for (int m = 0; m < g.nm(); ++m) {
          const Point x{a, z, m, w};
          total += g.p_w[w] * g.pa(a, w) * g.pz(z, a, w) * g.pm(m, a, z, w) * alpha(x) * theta(x);
        }
  return total;
}

inline Fn alpha_fn(const DiscreteDGP& g, Family f, std::vector<int> levels, int k) {
  return [&g, f, levels = std::move(levels), k](const Point& x) { return exact_alpha(g, f, levels, k, x); };
}

/// theta_k = E[b_{k+1} | X_k], where b_{k+1} is built from `next` (theta_{k+1},
/// possibly misspecified) at the slot level. For k = K this is E[Y | A,Z,M,W].
inline Fn sequential_theta(const DiscreteDGP& g, Family f, const std::vector<int>& L, int k, Fn next) {
  check_levels(L);
  const int K = f == Family::natural ? 3 : 4;
  auto lv = [L](int j) { return L[static_cast<std::size_t>(j - 1)]; };
  if (k == K) return [&g](const Point& x) { return g.y(x.a, x.z, x.m, x.w); };
  if (f == Family::natural) {
    if (k == 2)
      return [&g, next, a1 = lv(1)](const Point& x) {
        double s = 0.0;
        for (int m = 0; m < g.nm(); ++m) s += g.pm(m, x.a, x.z, x.w) * next({a1, x.z, m, x.w});
        return s;
      };
    return [&g, next, a2 = lv(2)](const Point& x) {
      double s = 0.0;
      for (int z = 0; z < g.nz(); ++z) s += g.pz(z, x.a, x.w) * next({a2, z, 0, x.w});
      return s;
    };
  }
  if (k == 3)
    return [&g, next, a1 = lv(1)](const Point& x) {
      double s = 0.0;
      for (int zp = 0; zp < g.nz(); ++zp) s += g.pz(zp, x.a, x.w) * next({a1, zp, x.m, x.w});
      return s;
    };
  if (k == 2)
    return [&g, next, a2 = lv(2)](const Point& x) {
      double s = 0.0;
      for (int m = 0; m < g.nm(); ++m) s += g.pm(m, x.a, x.z, x.w) * next({a2, 0, m, x.w});
      return s;
    };
  return [&g, next, a3 = lv(3)](const Point& x) {
    double s = 0.0;
    for (int z = 0; z < g.nz(); ++z) s += g.pz(z, x.a, x.w) * next({a3, z, 0, x.w});
    return s;
  };
}

/// Exact E[phi-bar] for nuisances theta = (theta_1..theta_K), alpha = (alpha_1..alpha_K).
/// The randomized alpha_3 term integrates Z^pi against P(z | A, W)
/// independently of (Z, M).
inline double expected_gradient(const DiscreteDGP& g, Family f, const std::vector<int>& L, const std::vector<Fn>& theta,
                                 const std::vector<Fn>& alpha) {
  check_levels(L);
  auto lv = [&](int j) { return L[static_cast<std::size_t>(j - 1)]; };
  auto th = [&](int k) -> const Fn& { return theta[static_cast<std::size_t>(k - 1)]; };
  auto al = [&](int k) -> const Fn& { return alpha[static_cast<std::size_t>(k - 1)]; };
  double total = 0.0;
  for (int w = 0; w < g.nw(); ++w)
    for (int a = 0; a < 2; ++a)
      for (int z = 0; z < g.nz(); ++z)
        for (int m = 0; m < g.nm(); ++m) {
          const double p = g.p_w[w] * g.pa(a, w) * g.pz(z, a, w) * g.pm(m, a, z, w);
          const Point x{a, z, m, w};
          const double ybar = g.y(a, z, m, w);
          double phi;
          if (f == Family::natural) {
            const double b3 = th(3)({lv(1), z, m, w});
            const double b2 = th(2)({lv(2), z, 0, w});
            const double b1 = th(1)({lv(3), 0, 0, w});
            phi = al(3)(x) * (ybar - th(3)(x)) + al(2)(x) * (b3 - th(2)(x)) + al(1)(x) * (b2 - th(1)(x)) + b1;
          } else {
            double b4 = 0.0;
            for (int zp = 0; zp < g.nz(); ++zp) b4 += g.pz(zp, a, w) * th(4)({lv(1), zp, m, w});
            const double b3 = th(3)({lv(2), 0, m, w});
            const double b2 = th(2)({lv(3), z, 0, w});
            const double b1 = th(1)({lv(4), 0, 0, w});
            phi = al(4)(x) * (ybar - th(4)(x)) + al(3)(x) * (b4 - th(3)(x)) + al(2)(x) * (b3 - th(2)(x)) +
                  al(1)(x) * (b2 - th(1)(x)) + b1;
          }
          total += p * phi;
        }
  return total;
}

/// Coordinates alpha_k / theta_k depend on: (uses z, uses m).
inline std::pair<bool, bool> slot_inputs(Family f, int k) {
  if (k == 1) return {false, false};
  if (k == 2) return {true, false};
  if (f == Family::randomized && k == 3) return {false, true};
  return {true, true};
}

/// Random table of (a, [z], [m], w); used as a misspecified nuisance.
inline Fn random_table(const DiscreteDGP& g, Rng& rng, std::pair<bool, bool> inputs, double lo = -2.0,
                       double hi = 2.0) {
  auto t = std::make_shared<std::vector<double>>(static_cast<std::size_t>(2 * g.nz() * g.nm() * g.nw()));
  for (auto& v : *t) v = lo + (hi - lo) * rng.uniform();
  const int nz = g.nz(), nm = g.nm(), nw = g.nw();
  const auto [use_z, use_m] = inputs;
  return [t, nz, nm, nw, use_z, use_m](const Point& x) {
    const int z = use_z ? x.z : 0, m = use_m ? x.m : 0;
    return (*t)[static_cast<std::size_t>(((x.a * nz + z) * nm + m) * nw + x.w)];
  };
}

} // namespace mediation::oracle

#endif // MEDIATION_ORACLE_HPP
