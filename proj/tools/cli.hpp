#ifndef MEDIATION_TOOLS_CLI_HPP
#define MEDIATION_TOOLS_CLI_HPP

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mediation/mediation.hpp"

namespace mediation::cli {

using io::json;

struct Flags {
  std::string config, data, out, csv, gradients, truth_cache;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads, folds, reps;
  std::optional<long long> n, mc_n;
  std::vector<std::string> families;
  bool natural_mode = false;
  bool quiet = false;
};

namespace detail {

inline void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cli", "cannot open output file '" + path + "'");
  f << text;
  if (!f) throw Error("cli", "failed writing output file '" + path + "'");
}

inline std::vector<EffectRequest> families_from_flags(const std::vector<std::string>& names) {
  std::vector<EffectRequest> out;
  for (const auto& f : names) {
    EffectRequest r;
    try {
      r.family = effect_family_from_string(f);
    } catch (const ConfigError&) {
      throw ConfigError("config", "--family: unknown effect family '" + f + "'");
    }
    out.push_back(r);
  }
  return out;
}

inline void apply_shared(const Flags& fl, io::EstimationSettings& s) {
  if (fl.seed) s.seed = *fl.seed;
  if (fl.threads) s.threads = *fl.threads;
  if (fl.folds) s.folds = *fl.folds;
  if (!fl.families.empty()) s.effects = families_from_flags(fl.families);
}

inline json envelope(const std::string& command, json config) {
  return {{"tool", "mediation"}, {"version", version_string}, {"command", command}, {"config", std::move(config)}};
}

inline io::EstimateConfig estimate_config(const Flags& fl) {
  io::EstimateConfig c;
  if (!fl.config.empty()) c = io::estimate_config_from_json(io::read_json_file(fl.config));
  apply_shared(fl, c.settings);
  if (!fl.data.empty()) c.data = fl.data;
  if (!fl.gradients.empty()) c.gradients = fl.gradients;
  if (c.data.empty()) throw ConfigError("config", "data: a data file is required (--data or config field 'data')");
  try {
    c.columns.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("config", std::string("columns: ") + e.what());
  }
  io::validate_settings(c.settings);
  return c;
}

inline PermutationPlan plan_for(const io::EstimateConfig& c, const MediationDataset& d, const FoldPlan& folds) {
  return c.settings.permute_per_fold ? plan_permutation_by_fold(d, folds, c.settings.permute)
                                     : plan_permutation(d, c.settings.permute);
}

inline int run_estimate(const Flags& fl, std::ostream& out) {
  const io::EstimateConfig c = estimate_config(fl);
  bool needs_z = false;
  for (const auto& r : c.settings.effects) needs_z = needs_z || r.needs_z();
  MediationDataset d = load_csv(c.data, c.columns, c.treatment_kind);
  const FoldPlan folds = make_folds(d.n(), c.settings.folds, derive_seed(c.settings.seed, 1));
  std::optional<PermutationDiagnostics> diag;
  if (needs_z && d.has_z()) {
    const PermutationPlan plan = plan_for(c, d, folds);
    d = apply_permutation(d, plan);
    diag = diagnose_permutation(d, plan);
  }
  NuisanceOptions nopt = c.settings.nuisance;
  nopt.seed = derive_seed(c.settings.seed, 2);
  const EffectReport rep = run_effects(d, c.settings.effects, nopt, folds, c.settings.level, c.settings.threads);

  json j = envelope("estimate", io::to_json(c));
  j["result"] = io::to_json(rep);
  if (diag) j["result"]["permutation"] = io::to_json(*diag);
  write_text(fl.out, j.dump(2) + "\n", out);
  if (!fl.csv.empty()) write_text(fl.csv, io::report_csv(rep), out);
  if (!c.gradients.empty()) {
    std::string text;
    for (const auto& g : rep.crossfit.values) text += "# " + g.target.key() + "\n" + gradient_csv(g);
    write_text(c.gradients, text, out);
  }
  return 0;
}

inline int run_simulate(const Flags& fl, std::ostream& out, std::ostream& err) {
  io::SimulateConfig c;
  if (!fl.config.empty()) c = io::simulate_config_from_json(io::read_json_file(fl.config));
  apply_shared(fl, c.settings);
  c.sim.seed = c.settings.seed;
  if (fl.n) c.sim.n = static_cast<Index>(*fl.n);
  if (fl.reps) c.sim.reps = *fl.reps;
  if (fl.natural_mode) c.sim.natural_mode = true;
  if (fl.mc_n) c.mc_n = static_cast<Index>(*fl.mc_n);
  if (!fl.truth_cache.empty()) c.truth_cache = fl.truth_cache;
  io::validate_settings(c.settings);
  if (c.sim.reps < 1) throw ConfigError("config", "reps: must be >= 1");
  if (c.sim.n < 2) throw ConfigError("config", "n: must be >= 2");
  if (c.mc_n < 2) throw ConfigError("config", "mc_n: must be >= 2");
  if (c.settings.permute_per_fold) throw ConfigError("config", "permutation.per_fold: not supported by simulate");

  sim::ReplicateOptions ro;
  ro.nuisance = c.settings.nuisance;
  ro.folds = c.settings.folds;
  ro.threads = c.settings.threads;
  ro.level = c.settings.level;
  ro.mc_n = c.mc_n;
  ro.truth_seed = c.truth_seed;
  ro.truth_cache_dir = c.truth_cache;
  ro.permute = c.settings.permute;
  if (!fl.quiet)
    ro.progress = [&err](int done, int total) {
      if (done == total || done % 10 == 0) err << "simulate: " << done << "/" << total << " replications\n";
    };
  const sim::SimReport rep = sim::replicate(c.sim, c.settings.effects, ro);

  json j = envelope("simulate", io::to_json(c));
  j["result"] = io::to_json(rep);
  write_text(fl.out, j.dump(2) + "\n", out);
  if (!fl.csv.empty()) write_text(fl.csv, io::simulation_table_csv(rep), out);
  return 0;
}

inline int run_permute_check(const Flags& fl, std::ostream& out) {
  io::EstimateConfig c = estimate_config(fl);
  MediationDataset d = load_csv(c.data, c.columns, c.treatment_kind);
  if (!d.has_z()) throw ConfigError("config", "columns.intermediate: permute-check needs at least one Z column");
  const FoldPlan folds = make_folds(d.n(), c.settings.folds, derive_seed(c.settings.seed, 1));
  const PermutationPlan plan = plan_for(c, d, folds);
  const PermutationDiagnostics diag = diagnose_permutation(d, plan);
  json j = envelope("permute-check", io::to_json(c));
  j["result"] = io::to_json(diag);
  write_text(fl.out, j.dump(2) + "\n", out);
  return 0;
}

} // namespace detail

/// Parses argv and runs one subcommand. Exit codes: 0 success, 2
/// configuration error, 1 runtime failure.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Cross-fitted causal mediation effect estimation", "mediation"};
  app.set_version_flag("--version", std::string(version_string));
  app.require_subcommand(1);
  Flags fl;

  auto shared = [&](CLI::App* sub) {
    sub->add_option("--config", fl.config, "JSON run configuration");
    sub->add_option("--seed", fl.seed, "Master seed");
    sub->add_option("--threads", fl.threads, "Worker thread cap");
    sub->add_option("--out", fl.out, "JSON report path (default stdout)");
    sub->add_option("--folds", fl.folds, "Cross-fitting folds J");
  };
  auto* est = app.add_subcommand("estimate", "Estimate mediation effects on a CSV dataset");
  shared(est);
  est->add_option("--data", fl.data, "CSV input");
  est->add_option("--family", fl.families, "Effect family (repeatable)");
  est->add_option("--csv", fl.csv, "Effects table CSV path");
  est->add_option("--gradients", fl.gradients, "Per-row gradient CSV path");

  auto* simc = app.add_subcommand("simulate", "Replicate the simulation study");
  shared(simc);
  simc->add_option("--n", fl.n, "Sample size");
  simc->add_option("--reps", fl.reps, "Replications");
  simc->add_option("--family", fl.families, "Effect family (repeatable)");
  simc->add_flag("--natural-mode", fl.natural_mode, "Set epsilon = lambda1 = 0");
  simc->add_option("--mc-n", fl.mc_n, "Monte Carlo draws for truths");
  simc->add_option("--truth-cache", fl.truth_cache, "Directory caching truth values");
  simc->add_option("--csv", fl.csv, "Simulation table CSV path");
  simc->add_flag("--quiet", fl.quiet, "No progress output");

  auto* perm = app.add_subcommand("permute-check", "Build Z^pi and report permutation diagnostics");
  shared(perm);
  perm->add_option("--data", fl.data, "CSV input");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  const std::string command = est->parsed() ? "estimate" : simc->parsed() ? "simulate" : "permute-check";
  try {
    if (est->parsed()) return detail::run_estimate(fl, out);
    if (simc->parsed()) return detail::run_simulate(fl, out, err);
    if (perm->parsed()) return detail::run_permute_check(fl, out);
  } catch (const Error& e) {
    err << "error [" << e.module() << "] in " << command << ": " << e.what() << "\n";
    return e.is_configuration() ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error [cli] in " << command << ": " << e.what() << "\n";
    return 1;
  }
  return 1;
}

} // namespace mediation::cli

#endif // MEDIATION_TOOLS_CLI_HPP
