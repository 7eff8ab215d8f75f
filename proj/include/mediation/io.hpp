#ifndef MEDIATION_IO_HPP
#define MEDIATION_IO_HPP

#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "mediation/effects.hpp"
#include "mediation/permute.hpp"
#include "mediation/sim.hpp"
#include "mediation/version.hpp"

// JSON forms of configuration objects and reports. Readers are strict:
// unknown keys and wrong types raise a ConfigError naming the field.

namespace mediation::io {

using json = nlohmann::json;

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config", where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ConfigError("config", where + "." + k + ": unknown field");
}

template <typename T>
T get(const json& j, const std::string& key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config", where + "." + key + ": wrong type");
  }
}

inline std::string field(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

} // namespace detail

// ---- policies -------------------------------------------------------------

inline json to_json(const PolicySpec& p) {
  json j;
  switch (p.kind) {
  case PolicySpec::Kind::set_value: j = {{"kind", "set"}, {"value", p.value}}; break;
  case PolicySpec::Kind::identity: j = {{"kind", "identity"}}; break;
  case PolicySpec::Kind::additive_shift: j = {{"kind", "shift"}, {"amount", p.amount}}; break;
  case PolicySpec::Kind::multiplicative_shift: j = {{"kind", "scale"}, {"factor", p.amount}}; break;
  }
  if (std::holds_alternative<double>(p.cap)) j["cap"] = std::get<double>(p.cap);
  if (std::holds_alternative<std::string>(p.cap)) j["cap"] = std::get<std::string>(p.cap);
  if (!p.description.empty()) j["description"] = p.description;
  return j;
}

inline PolicySpec policy_from_json(const json& j, const std::string& where) {
  if (j.is_number()) return PolicySpec::set(j.get<double>());
  detail::check_keys(j, where, {"kind", "value", "amount", "factor", "cap", "description"});
  const std::string kind = detail::get<std::string>(j, "kind", where, "");
  PolicySpec p;
  if (kind == "set") {
    if (!j.contains("value")) throw ConfigError("config", where + ".value: required for kind 'set'");
    p = PolicySpec::set(detail::get<double>(j, "value", where, 0.0));
  } else if (kind == "identity") {
    p = PolicySpec::identity_policy();
  } else if (kind == "shift") {
    p = PolicySpec::shift(detail::get<double>(j, "amount", where, 0.0));
  } else if (kind == "scale") {
    p = PolicySpec::scale(detail::get<double>(j, "factor", where, 1.0));
  } else {
    throw ConfigError("config", where + ".kind: expected set, identity, shift or scale");
  }
  if (j.contains("cap")) {
    if (j["cap"].is_number())
      p.cap = j["cap"].get<double>();
    else if (j["cap"].is_string())
      p.cap = j["cap"].get<std::string>();
    else
      throw ConfigError("config", where + ".cap: expected a number or a column name");
  }
  p.description = detail::get<std::string>(j, "description", where, "");
  return p;
}

// ---- learners -------------------------------------------------------------

inline json to_json(const learn::LearnerSpec& s) {
  json j{{"kind", learn::to_string(s.kind)}};
  switch (s.kind) {
  case learn::LearnerSpec::Kind::ridge:
    j["lambda"] = s.ridge.lambda;
    j["quadratic"] = s.ridge.quadratic;
    break;
  case learn::LearnerSpec::Kind::tabular_exact: j["max_levels"] = s.tabular.max_levels; break;
  case learn::LearnerSpec::Kind::mlp:
    j["hidden"] = s.mlp.hidden;
    j["epochs"] = s.mlp.epochs;
    j["batch_size"] = s.mlp.batch_size;
    j["step_size"] = s.mlp.step_size;
    j["clip_norm"] = s.mlp.clip_norm;
    break;
  case learn::LearnerSpec::Kind::ensemble: {
    j["holdout_fraction"] = s.ensemble.holdout_fraction;
    j["refit"] = s.ensemble.refit;
    json members = json::array();
    for (const auto& m : s.resolved_members()) members.push_back(to_json(m));
    j["members"] = members;
    break;
  }
  }
  return j;
}

inline learn::LearnerSpec learner_from_json(const json& j, const std::string& where) {
  if (j.is_string()) {
    learn::LearnerSpec s;
    try {
      s.kind = learn::learner_kind_from_string(j.get<std::string>());
    } catch (const ConfigError&) {
      throw ConfigError("config", where + ": unknown learner kind '" + j.get<std::string>() + "'");
    }
    return s;
  }
  detail::check_keys(j, where, {"kind", "lambda", "quadratic", "max_levels", "hidden", "epochs", "batch_size",
                                "step_size", "clip_norm", "holdout_fraction", "refit", "members"});
  learn::LearnerSpec s;
  const std::string kind = detail::get<std::string>(j, "kind", where, "ridge");
  try {
    s.kind = learn::learner_kind_from_string(kind);
  } catch (const ConfigError&) {
    throw ConfigError("config", where + ".kind: unknown learner kind '" + kind + "'");
  }
  s.ridge.lambda = detail::get<double>(j, "lambda", where, s.ridge.lambda);
  s.ridge.quadratic = detail::get<bool>(j, "quadratic", where, s.ridge.quadratic);
  s.tabular.max_levels = detail::get<int>(j, "max_levels", where, s.tabular.max_levels);
  s.mlp.hidden = detail::get<std::vector<int>>(j, "hidden", where, s.mlp.hidden);
  s.mlp.epochs = detail::get<int>(j, "epochs", where, s.mlp.epochs);
  s.mlp.batch_size = detail::get<int>(j, "batch_size", where, s.mlp.batch_size);
  s.mlp.step_size = detail::get<double>(j, "step_size", where, s.mlp.step_size);
  s.mlp.clip_norm = detail::get<double>(j, "clip_norm", where, s.mlp.clip_norm);
  s.ensemble.holdout_fraction = detail::get<double>(j, "holdout_fraction", where, s.ensemble.holdout_fraction);
  s.ensemble.refit = detail::get<bool>(j, "refit", where, s.ensemble.refit);
  if (j.contains("members")) {
    if (!j["members"].is_array()) throw ConfigError("config", where + ".members: expected an array");
    for (std::size_t k = 0; k < j["members"].size(); ++k)
      s.members.push_back(learner_from_json(j["members"][k], where + ".members[" + std::to_string(k) + "]"));
  }
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("config", where + ": " + e.what());
  }
  return s;
}

// ---- column roles -------------------------------------------------------------

inline json to_json(const ColumnRoles& r) {
  return {{"covariates", r.covariates}, {"treatment", r.treatment}, {"intermediate", r.intermediate},
          {"mediators", r.mediators},   {"outcome", r.outcome},     {"auxiliary", r.auxiliary}};
}

inline ColumnRoles roles_from_json(const json& j, const std::string& where) {
  detail::check_keys(j, where, {"covariates", "treatment", "intermediate", "mediators", "outcome", "auxiliary"});
  ColumnRoles r;
  r.covariates = detail::get<std::vector<std::string>>(j, "covariates", where, {});
  r.treatment = detail::get<std::string>(j, "treatment", where, "");
  r.intermediate = detail::get<std::vector<std::string>>(j, "intermediate", where, {});
  r.mediators = detail::get<std::vector<std::string>>(j, "mediators", where, {});
  r.outcome = detail::get<std::string>(j, "outcome", where, "");
  r.auxiliary = detail::get<std::vector<std::string>>(j, "auxiliary", where, {});
  return r;
}

// ---- estimates and reports -------------------------------------------------

inline json to_json(const EffectEstimate& e) {
  return {{"name", e.name},         {"estimate", e.estimate}, {"std_error", e.std_error},
          {"ci_low", e.ci_low},     {"ci_high", e.ci_high},   {"level", e.level},
          {"n", static_cast<long long>(e.n)}};
}

inline json to_json(const EffectReport& r) {
  json j;
  json effects = json::array();
  for (std::size_t k = 0; k < r.effects.size(); ++k) {
    json e = to_json(r.effects[k]);
    if (!r.paths[k].empty()) e["path"] = r.paths[k];
    effects.push_back(e);
  }
  j["effects"] = effects;
  json psi = json::array();
  for (const auto& p : r.psi) psi.push_back(to_json(p));
  j["psi"] = psi;
  j["decomposition_residuals"] = r.residuals;
  json folds = json::array();
  for (const auto& f : r.crossfit.folds)
    folds.push_back({{"fold", f.fold},
                     {"train_rows", static_cast<long long>(f.train_rows)},
                     {"arm0", static_cast<long long>(f.chain.arm0)},
                     {"arm1", static_cast<long long>(f.chain.arm1)},
                     {"pseudo_outcome_excess", f.chain.pseudo_outcome_excess},
                     {"nuisances_fitted", f.fitted},
                     {"nuisances_reused", f.reused}});
  json orth = json::object();
  for (std::size_t t = 0; t < r.crossfit.values.size(); ++t) orth[r.crossfit.values[t].target.key()] = r.crossfit.orthogonality[t];
  j["diagnostics"] = {{"folds", folds}, {"residual_term_means", orth}};
  j["warnings"] = r.warnings;
  j["n"] = static_cast<long long>(r.n);
  return j;
}

/// Flat table: effect, path, estimate, std_error, ci_low, ci_high.
inline std::string report_csv(const EffectReport& r) {
  std::string out = "effect,path,estimate,std_error,ci_low,ci_high\n";
  for (std::size_t k = 0; k < r.effects.size(); ++k) {
    const auto& e = r.effects[k];
    out += e.name + "," + r.paths[k] + "," + csv_detail::format_number(e.estimate) + "," +
           csv_detail::format_number(e.std_error) + "," + csv_detail::format_number(e.ci_low) + "," +
           csv_detail::format_number(e.ci_high) + "\n";
  }
  return out;
}

inline json to_json(const PermutationDiagnostics& d) {
  return {{"total_cost", d.total_cost},
          {"derangement", d.derangement},
          {"approximate", d.approximate},
          {"strata", static_cast<long long>(d.strata)},
          {"singleton_strata", static_cast<long long>(d.singleton_strata)},
          {"max_stratum_discrepancy", d.max_stratum_discrepancy},
          {"mean_stratum_discrepancy", d.mean_stratum_discrepancy}};
}

inline json to_json(const sim::SimReport& r) {
  json j;
  json metrics = json::array();
  for (const auto& name : r.names) {
    const auto& m = r.metrics.at(name);
    metrics.push_back({{"name", name},
                       {"label", sim::table_label(name)},
                       {"truth", m.truth},
                       {"truth_mc_se", m.truth_mc_se},
                       {"bias", m.bias},
                       {"sqrt_n_bias", m.sqrt_n_bias},
                       {"nmse", m.nmse},
                       {"coverage", m.coverage},
                       {"mean_std_error", m.mean_se},
                       {"sd_estimate", m.sd_estimate},
                       {"reps", m.reps}});
  }
  j["metrics"] = metrics;
  json truths = json::object();
  for (const auto& [k, v] : r.truths.effects) truths[k] = {{"value", v.value}, {"mc_se", v.mc_se}};
  j["truths"] = {{"effects", truths},
                 {"mc_n", static_cast<long long>(r.truths.mc_n)},
                 {"seed", r.truths.seed},
                 {"ate_forward", {{"value", r.truths.ate_forward.value}, {"mc_se", r.truths.ate_forward.mc_se}}}};
  j["failures"] = r.failures;
  j["failure_messages"] = r.failure_messages;
  return j;
}

/// Rows Bias, sqrt(n)-Bias, nMSE, Coverage; one column per effect.
inline std::string simulation_table_csv(const sim::SimReport& r) {
  std::string out = "n,metric";
  for (const auto& name : r.names) out += "," + sim::table_label(name);
  out += "\n";
  const std::string n = std::to_string(r.config.n);
  auto row = [&](const char* label, double sim::Metrics::*field) {
    out += n + "," + label;
    for (const auto& name : r.names) out += "," + csv_detail::format_number(r.metrics.at(name).*field);
    out += "\n";
  };
  row("Bias", &sim::Metrics::bias);
  row("sqrt(n)-Bias", &sim::Metrics::sqrt_n_bias);
  row("nMSE", &sim::Metrics::nmse);
  row("Coverage", &sim::Metrics::coverage);
  return out;
}

// ---- run configurations ---------------------------------------------------

inline json to_json(const EffectRequest& r) {
  json j{{"family", to_string(r.family)}, {"include_ic", r.include_ic},
         {"proportion_mediated", r.include_proportion_mediated}};
  if (r.mtp) j["mtp"] = {{"d0", to_json(r.d0)}, {"d1", to_json(r.d1)}};
  if (r.family == EffectFamily::organic) j["organic_alternative"] = r.organic_alternative;
  return j;
}

inline EffectRequest effect_request_from_json(const json& j, const std::string& where) {
  EffectRequest r;
  if (j.is_string()) {
    try {
      r.family = effect_family_from_string(j.get<std::string>());
    } catch (const ConfigError&) {
      throw ConfigError("config", where + ": unknown effect family '" + j.get<std::string>() + "'");
    }
    return r;
  }
  detail::check_keys(j, where, {"family", "include_ic", "proportion_mediated", "mtp", "organic_alternative"});
  const std::string fam = detail::get<std::string>(j, "family", where, "");
  try {
    r.family = effect_family_from_string(fam);
  } catch (const ConfigError&) {
    throw ConfigError("config", where + ".family: unknown effect family '" + fam + "'");
  }
  r.include_ic = detail::get<bool>(j, "include_ic", where, r.include_ic);
  r.include_proportion_mediated = detail::get<bool>(j, "proportion_mediated", where, false);
  r.organic_alternative = detail::get<bool>(j, "organic_alternative", where, false);
  if (j.contains("mtp")) {
    const json& m = j["mtp"];
    const std::string mw = where + ".mtp";
    detail::check_keys(m, mw, {"d0", "d1"});
    if (!m.contains("d0") || !m.contains("d1")) throw ConfigError("config", mw + ": both d0 and d1 are required");
    r.mtp = true;
    r.d0 = policy_from_json(m["d0"], mw + ".d0");
    r.d1 = policy_from_json(m["d1"], mw + ".d1");
  }
  try {
    r.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("config", where + ": " + e.what());
  }
  return r;
}

inline std::vector<EffectRequest> effect_requests_from_json(const json& j, const std::string& where) {
  std::vector<EffectRequest> out;
  if (j.is_array()) {
    for (std::size_t k = 0; k < j.size(); ++k)
      out.push_back(effect_request_from_json(j[k], where + "[" + std::to_string(k) + "]"));
  } else {
    out.push_back(effect_request_from_json(j, where));
  }
  if (out.empty()) throw ConfigError("config", where + ": at least one effect family is required");
  return out;
}

/// Shared estimation settings of the estimate and simulate commands.
struct EstimationSettings {
  std::vector<EffectRequest> effects{EffectRequest{}};
  NuisanceOptions nuisance;
  int folds = 5;
  double level = 0.95;
  int threads = 1;
  std::uint64_t seed = 1;
  PermuteOptions permute;
  /// Solve the permutation within each fold instead of over the whole sample.
  bool permute_per_fold = false;
};

inline void read_settings(const json& j, EstimationSettings& s) {
  if (j.contains("effects")) s.effects = effect_requests_from_json(j["effects"], "effects");
  if (j.contains("theta_learner")) s.nuisance.theta_learner = learner_from_json(j["theta_learner"], "theta_learner");
  if (j.contains("alpha_learner")) s.nuisance.alpha_learner = learner_from_json(j["alpha_learner"], "alpha_learner");
  s.nuisance.alpha_max = detail::get<double>(j, "alpha_max", "", s.nuisance.alpha_max);
  s.nuisance.clip_nonnegative = detail::get<bool>(j, "clip_alpha_nonnegative", "", s.nuisance.clip_nonnegative);
  s.folds = detail::get<int>(j, "folds", "", s.folds);
  s.level = detail::get<double>(j, "level", "", s.level);
  s.threads = detail::get<int>(j, "threads", "", s.threads);
  s.seed = detail::get<std::uint64_t>(j, "seed", "", s.seed);
  if (j.contains("permutation")) {
    const json& p = j["permutation"];
    detail::check_keys(p, "permutation", {"exact_limit", "block_size", "per_fold"});
    s.permute.exact_limit = detail::get<Index>(p, "exact_limit", "permutation", s.permute.exact_limit);
    s.permute.block_size = detail::get<Index>(p, "block_size", "permutation", s.permute.block_size);
    s.permute_per_fold = detail::get<bool>(p, "per_fold", "permutation", s.permute_per_fold);
  }
}

inline void validate_settings(const EstimationSettings& s) {
  if (s.folds < 1) throw ConfigError("config", "folds: must be >= 1");
  if (!(s.level > 0.0 && s.level < 1.0)) throw ConfigError("config", "level: must lie in (0, 1)");
  if (s.threads < 1) throw ConfigError("config", "threads: must be >= 1");
  if (s.permute.block_size < 2) throw ConfigError("config", "permutation.block_size: must be >= 2");
  try {
    s.nuisance.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("config", e.what());
  }
}

inline json settings_json(const EstimationSettings& s) {
  json effects = json::array();
  for (const auto& r : s.effects) effects.push_back(to_json(r));
  return {{"effects", effects},
          {"theta_learner", to_json(s.nuisance.theta_learner)},
          {"alpha_learner", to_json(s.nuisance.alpha_learner)},
          {"alpha_max", s.nuisance.alpha_max},
          {"clip_alpha_nonnegative", s.nuisance.clip_nonnegative},
          {"folds", s.folds},
          {"level", s.level},
          {"threads", s.threads},
          {"seed", s.seed},
          {"permutation",
           {{"exact_limit", s.permute.exact_limit}, {"block_size", s.permute.block_size}, {"per_fold", s.permute_per_fold}}}};
}

struct EstimateConfig {
  EstimationSettings settings;
  std::string data;
  ColumnRoles columns;
  TreatmentKind treatment_kind = TreatmentKind::binary;
  /// Optional path for per-row gradient values.
  std::string gradients;
};

inline EstimateConfig estimate_config_from_json(const json& j) {
  detail::check_keys(j, "config",
                     {"data", "columns", "treatment_kind", "effects", "theta_learner", "alpha_learner", "alpha_max",
                      "clip_alpha_nonnegative", "folds", "level", "threads", "seed", "permutation", "gradients"});
  EstimateConfig c;
  read_settings(j, c.settings);
  c.data = detail::get<std::string>(j, "data", "", "");
  if (j.contains("columns")) c.columns = roles_from_json(j["columns"], "columns");
  const std::string kind = detail::get<std::string>(j, "treatment_kind", "", "binary");
  if (kind == "binary")
    c.treatment_kind = TreatmentKind::binary;
  else if (kind == "continuous")
    c.treatment_kind = TreatmentKind::continuous;
  else
    throw ConfigError("config", "treatment_kind: expected binary or continuous");
  c.gradients = detail::get<std::string>(j, "gradients", "", "");
  return c;
}

inline json to_json(const EstimateConfig& c) {
  json j = settings_json(c.settings);
  j["data"] = c.data;
  j["columns"] = to_json(c.columns);
  j["treatment_kind"] = to_string(c.treatment_kind);
  if (!c.gradients.empty()) j["gradients"] = c.gradients;
  return j;
}

struct SimulateConfig {
  EstimationSettings settings;
  sim::SimConfig sim;
  Index mc_n = 1000000;
  std::uint64_t truth_seed = 20240601;
  std::string truth_cache;
};

inline SimulateConfig simulate_config_from_json(const json& j) {
  detail::check_keys(j, "config",
                     {"n", "reps", "natural_mode", "params", "mc_n", "truth_seed", "truth_cache", "effects",
                      "theta_learner", "alpha_learner", "alpha_max", "clip_alpha_nonnegative", "folds", "level",
                      "threads", "seed", "permutation"});
  SimulateConfig c;
  c.settings.effects = {EffectRequest{EffectFamily::recanting_twins}, EffectRequest{EffectFamily::interventional}};
  read_settings(j, c.settings);
  c.sim.n = detail::get<Index>(j, "n", "", c.sim.n);
  c.sim.reps = detail::get<int>(j, "reps", "", c.sim.reps);
  c.sim.natural_mode = detail::get<bool>(j, "natural_mode", "", false);
  c.sim.seed = c.settings.seed;
  if (j.contains("params")) {
    const json& p = j["params"];
    detail::check_keys(p, "params", {"epsilon", "lambda1", "lambda2", "gamma1", "gamma2"});
    auto& q = c.sim.params;
    q.epsilon = detail::get<double>(p, "epsilon", "params", q.epsilon);
    q.lambda1 = detail::get<double>(p, "lambda1", "params", q.lambda1);
    q.lambda2 = detail::get<double>(p, "lambda2", "params", q.lambda2);
    q.gamma1 = detail::get<double>(p, "gamma1", "params", q.gamma1);
    q.gamma2 = detail::get<double>(p, "gamma2", "params", q.gamma2);
  }
  c.mc_n = detail::get<Index>(j, "mc_n", "", c.mc_n);
  c.truth_seed = detail::get<std::uint64_t>(j, "truth_seed", "", c.truth_seed);
  c.truth_cache = detail::get<std::string>(j, "truth_cache", "", "");
  return c;
}

inline json to_json(const SimulateConfig& c) {
  json j = settings_json(c.settings);
  const auto& q = c.sim.params;
  j["n"] = static_cast<long long>(c.sim.n);
  j["reps"] = c.sim.reps;
  j["natural_mode"] = c.sim.natural_mode;
  j["params"] = {{"epsilon", q.epsilon}, {"lambda1", q.lambda1}, {"lambda2", q.lambda2}, {"gamma1", q.gamma1},
                 {"gamma2", q.gamma2}};
  j["mc_n"] = static_cast<long long>(c.mc_n);
  j["truth_seed"] = c.truth_seed;
  if (!c.truth_cache.empty()) j["truth_cache"] = c.truth_cache;
  return j;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", "malformed JSON in '" + path + "': " + e.what());
  }
}

} // namespace mediation::io

#endif // MEDIATION_IO_HPP
