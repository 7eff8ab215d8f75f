#ifndef MEDIATION_EFFECTS_HPP
#define MEDIATION_EFFECTS_HPP

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "mediation/estimator.hpp"

namespace mediation {

enum class EffectFamily { natural, decision_theoretic, organic, interventional, recanting_twins, separable };

inline const char* to_string(EffectFamily f) {
  switch (f) {
  case EffectFamily::natural: return "natural";
  case EffectFamily::decision_theoretic: return "decision_theoretic";
  case EffectFamily::organic: return "organic";
  case EffectFamily::interventional: return "interventional";
  case EffectFamily::recanting_twins: return "recanting_twins";
  case EffectFamily::separable: return "separable";
  }
  return "?";
}

inline EffectFamily effect_family_from_string(const std::string& s) {
  for (auto f : {EffectFamily::natural, EffectFamily::decision_theoretic, EffectFamily::organic,
                 EffectFamily::interventional, EffectFamily::recanting_twins, EffectFamily::separable})
    if (s == to_string(f)) return f;
  throw ConfigError("effects", "unknown effect family '" + s + "'");
}

struct EffectRequest {
  EffectFamily family = EffectFamily::natural;
  /// Modified treatment policies in place of the levels 0 and 1.
  bool mtp = false;
  PolicySpec d0 = PolicySpec::set(0.0);
  PolicySpec d1 = PolicySpec::set(1.0);
  /// Intermediate-confounding remainder (recanting_twins / separable).
  bool include_ic = true;
  bool include_proportion_mediated = false;
  /// Organic effects with the slots psi^N(0,1,0) instead of psi^N(1,0,1).
  bool organic_alternative = false;

  bool needs_z() const {
    return family == EffectFamily::interventional || family == EffectFamily::recanting_twins ||
           family == EffectFamily::separable;
  }

  void validate() const {
    if (mtp && family != EffectFamily::interventional && family != EffectFamily::recanting_twins)
      throw ConfigError("effects", std::string("mtp mode is defined only for interventional and recanting_twins "
                                               "effects, not ") + to_string(family));
  }
};

struct NamedContrast {
  std::string name;
  /// Path label where one applies (e.g. "A->M->Y").
  std::string path;
  std::vector<std::pair<double, PsiTarget>> terms;
};

/// The psi contrasts defining each effect of the requested family, followed
/// by the family's total effect.
inline std::vector<NamedContrast> resolve_targets(const EffectRequest& r) {
  r.validate();
  auto lv = [&](int bit) { return bit ? (r.mtp ? r.d1 : PolicySpec::set(1.0)) : (r.mtp ? r.d0 : PolicySpec::set(0.0)); };
  auto N = [&](int a1, int a2, int a3) { return PsiTarget::natural(lv(a1), lv(a2), lv(a3)); };
  auto R = [&](int a1, int a2, int a3, int a4) { return PsiTarget::randomized(lv(a1), lv(a2), lv(a3), lv(a4)); };
  auto diff = [](std::string name, PsiTarget p, PsiTarget q, std::string path = {}) {
    return NamedContrast{std::move(name), std::move(path), {{1.0, std::move(p)}, {-1.0, std::move(q)}}};
  };
  std::vector<NamedContrast> out;
  switch (r.family) {
  case EffectFamily::natural:
  case EffectFamily::decision_theoretic: {
    const bool dt = r.family == EffectFamily::decision_theoretic;
    out.push_back(diff(dt ? "DTDE" : "NDE", N(1, 0, 0), N(0, 0, 0)));
    out.push_back(diff(dt ? "DTIE" : "NIE", N(1, 1, 1), N(1, 0, 0)));
    out.push_back(diff("ATE", N(1, 1, 1), N(0, 0, 0)));
    break;
  }
  case EffectFamily::organic: {
    const PsiTarget mid = r.organic_alternative ? N(0, 1, 0) : N(1, 0, 1);
    out.push_back(diff("ODE", mid, N(0, 0, 0)));
    out.push_back(diff("OIE", N(1, 1, 1), mid));
    out.push_back(diff("ATE", N(1, 1, 1), N(0, 0, 0)));
    break;
  }
  case EffectFamily::interventional:
    out.push_back(diff("RIDE", R(1, 1, 0, 0), R(0, 0, 0, 0)));
    out.push_back(diff("RIIE", R(1, 1, 1, 1), R(1, 1, 0, 0)));
    out.push_back(diff("RTE", R(1, 1, 1, 1), R(0, 0, 0, 0)));
    break;
  case EffectFamily::recanting_twins:
  case EffectFamily::separable: {
    const std::string p = r.family == EffectFamily::separable ? "SE" : "RT";
    out.push_back(diff(p + "1", N(1, 1, 1), N(0, 1, 1), "A->Y"));
    out.push_back(diff(p + "2", R(0, 1, 1, 1), R(0, 0, 1, 1), "A->Z->Y"));
    out.push_back(diff(p + "3", R(0, 0, 1, 1), R(0, 0, 1, 0), "A->Z->M->Y"));
    out.push_back(diff(p + "4", N(0, 1, 0), N(0, 0, 0), "A->M->Y"));
    if (r.include_ic) {
      // ATE minus the four path contrasts.
      NamedContrast ic{"IC", "intermediate confounding", {{1.0, N(1, 1, 1)}, {-1.0, N(0, 0, 0)}}};
      for (std::size_t j = 0; j < 4; ++j)
        for (const auto& [c, t] : out[j].terms) ic.terms.push_back({-c, t});
      out.push_back(std::move(ic));
    }
    out.push_back(diff("ATE", N(1, 1, 1), N(0, 0, 0)));
    break;
  }
  }
  return out;
}

/// Name of the effect whose ratio to the total is reported as the proportion
/// mediated.
inline std::string mediated_effect_name(const EffectRequest& r) {
  switch (r.family) {
  case EffectFamily::natural: return "NIE";
  case EffectFamily::decision_theoretic: return "DTIE";
  case EffectFamily::organic: return "OIE";
  case EffectFamily::interventional: return "RIIE";
  case EffectFamily::recanting_twins: return "RT4";
  case EffectFamily::separable: return "SE4";
  }
  return {};
}

inline std::string total_effect_name(const EffectRequest& r) {
  return r.family == EffectFamily::interventional ? "RTE" : "ATE";
}

/// Distinct targets referenced by `contrasts`, in first-use order.
inline std::vector<PsiTarget> distinct_targets(const std::vector<NamedContrast>& contrasts) {
  std::vector<PsiTarget> out;
  for (const auto& c : contrasts)
    for (const auto& [coef, t] : c.terms)
      if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  return out;
}

struct EffectReport {
  std::vector<EffectRequest> requests;
  std::vector<EffectEstimate> effects;
  std::vector<std::string> paths;
  /// Per-target psi estimates with their own Wald summaries.
  std::vector<EffectEstimate> psi;
  /// Sum of the decomposition minus the total, per identity.
  std::map<std::string, double> residuals;
  std::vector<std::string> warnings;
  CrossFitResult crossfit;
  Index n = 0;
  int folds = 0;

  const EffectEstimate& effect(const std::string& name) const {
    for (const auto& e : effects)
      if (e.name == name) return e;
    throw ArgumentError("effects", "no effect named '" + name + "' in report");
  }
  bool has(const std::string& name) const {
    for (const auto& e : effects)
      if (e.name == name) return true;
    return false;
  }
};

/// Estimates the effects of several families on one dataset; targets shared
/// between families use the same fitted nuisances.
inline EffectReport run_effects(const MediationDataset& d, const std::vector<EffectRequest>& requests,
                                const NuisanceOptions& opt, const FoldPlan& folds, double level = 0.95,
                                int threads = 1) {
  if (requests.empty()) throw ConfigError("effects", "no effect family requested");
  std::vector<NamedContrast> contrasts;
  for (const auto& r : requests) {
    r.validate();
    if (r.needs_z() && !d.has_z())
      throw ConfigError("effects", std::string(to_string(r.family)) + " effects require an intermediate (Z) column");
    for (auto& c : resolve_targets(r)) {
      auto same = std::find_if(contrasts.begin(), contrasts.end(), [&](const NamedContrast& x) { return x.name == c.name; });
      if (same == contrasts.end()) {
        contrasts.push_back(std::move(c));
        continue;
      }
      if (same->terms != c.terms)
        throw ConfigError("effects", "requests define '" + c.name + "' differently; run them separately");
    }
  }
  const auto targets = distinct_targets(contrasts);
  EffectReport rep;
  rep.requests = requests;
  rep.n = d.n();
  rep.folds = folds.J;
  rep.crossfit = estimate_targets(d, targets, opt, folds, threads);
  auto values_of = [&](const PsiTarget& t) -> const GradientValues* {
    for (const auto& g : rep.crossfit.values)
      if (g.target == t) return &g;
    throw ArgumentError("effects", "missing target " + t.key());
  };
  for (const auto& g : rep.crossfit.values)
    rep.psi.push_back(wald(g.target.key(), g.estimate(), (g.phi.array() - g.estimate()).matrix(), level));
  for (const auto& c : contrasts) {
    std::vector<std::pair<double, const GradientValues*>> parts;
    for (const auto& [coef, t] : c.terms) parts.push_back({coef, values_of(t)});
    rep.effects.push_back(contrast(c.name, parts, level));
    rep.paths.push_back(c.path);
  }
  auto est = [&](const std::string& name) { return rep.effect(name).estimate; };
  for (const auto& r : requests) {
    switch (r.family) {
    case EffectFamily::natural: rep.residuals["NDE+NIE-ATE"] = est("NDE") + est("NIE") - est("ATE"); break;
    case EffectFamily::decision_theoretic:
      rep.residuals["DTDE+DTIE-ATE"] = est("DTDE") + est("DTIE") - est("ATE");
      break;
    case EffectFamily::organic: rep.residuals["ODE+OIE-ATE"] = est("ODE") + est("OIE") - est("ATE"); break;
    case EffectFamily::interventional:
      rep.residuals["RIDE+RIIE-RTE"] = est("RIDE") + est("RIIE") - est("RTE");
      break;
    case EffectFamily::recanting_twins:
    case EffectFamily::separable: {
      const std::string p = r.family == EffectFamily::separable ? "SE" : "RT";
      if (r.include_ic)
        rep.residuals["sum" + p + "+IC-ATE"] =
            est(p + "1") + est(p + "2") + est(p + "3") + est(p + "4") + est("IC") - est("ATE");
      break;
    }
    }
    if (r.include_proportion_mediated) {
      const EffectEstimate num = rep.effect(mediated_effect_name(r));
      const EffectEstimate den = rep.effect(total_effect_name(r));
      rep.effects.push_back(ratio_contrast(num, den, "proportion_mediated:" + num.name));
      rep.paths.push_back(num.name + "/" + den.name);
    }
  }
  for (const auto& f : rep.crossfit.folds)
    for (const auto& w : f.warnings) rep.warnings.push_back(w);
  return rep;
}

inline EffectReport run_effects(const MediationDataset& d, const EffectRequest& request, const NuisanceOptions& opt,
                                const FoldPlan& folds, double level = 0.95, int threads = 1) {
  return run_effects(d, std::vector<EffectRequest>{request}, opt, folds, level, threads);
}

} // namespace mediation

#endif // MEDIATION_EFFECTS_HPP
