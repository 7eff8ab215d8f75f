#ifndef MEDIATION_SIM_HPP
#define MEDIATION_SIM_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mediation/effects.hpp"
#include "mediation/normal.hpp"
#include "mediation/permute.hpp"
#include "mediation/random.hpp"

namespace mediation::sim {

struct Parameters {
  double epsilon = 0.5;
  double lambda1 = 0.4;
  double lambda2 = 0.6;
  double gamma1 = 0.6;
  double gamma2 = 0.4;
};

struct SimConfig {
  Parameters params;
  Index n = 1000;
  int reps = 200;
  std::uint64_t seed = 1;
  /// Forces epsilon = lambda1 = 0.
  bool natural_mode = false;

  Parameters effective() const {
    Parameters p = params;
    if (natural_mode) p.epsilon = p.lambda1 = 0.0;
    return p;
  }

  void validate() const {
    if (reps < 1) throw ConfigError("sim", "reps must be >= 1");
    if (n < 2) throw ConfigError("sim", "n must be >= 2");
  }
};

/// Conditional laws of the simulation design.
struct Model {
  Parameters p;

  static double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }
  static normal::Truncated tn(double mu) { return {-1.0, 1.0, mu, 1.0}; }

  double prop(const double* w) const { return expit(0.5 * w[0] + 0.5 * w[1] - 1.0); }
  normal::Truncated z1(double a, const double* w) const { return tn(-0.4 + p.epsilon * a + 0.2 * w[2] * w[2]); }
  normal::Truncated z2(double a, const double* w) const { return tn(0.2 - p.epsilon * a + 0.5 * std::sin(w[1])); }
  normal::Truncated m1(double a, double z1v, const double* w) const {
    return tn(-0.5 + p.lambda1 * z1v + p.lambda2 * a + 0.4 * w[1] + 0.2 * w[2]);
  }
  normal::Truncated m2(double a, double z2v, const double* w) const {
    return tn(-0.5 + p.lambda1 * z2v + p.lambda2 * a + 0.4 * w[0] + 0.2 * w[2]);
  }
  double ey(double a, double z1v, double z2v, double m1v, double m2v, const double* w) const {
    return 0.2 * m1v + 0.2 * m2v + p.gamma1 * z1v / 2.0 + p.gamma1 * z2v / 2.0 + p.gamma2 * a -
           0.5 * std::cos(w[0]) - 1.5;
  }
};

inline ColumnRoles default_roles() {
  ColumnRoles r;
  r.covariates = {"w1", "w2", "w3"};
  r.treatment = "a";
  r.intermediate = {"z1", "z2"};
  r.mediators = {"m1", "m2"};
  r.outcome = "y";
  return r;
}

/// One dataset of size config.n from `seed`.
inline MediationDataset draw_dgp(const SimConfig& config, std::uint64_t seed) {
  config.validate();
  const Model model{config.effective()};
  const Index n = config.n;
  Rng rng(seed);
  Matrix W(n, 3), Z(n, 2), M(n, 2);
  Vector A(n), Y(n);
  double w[3];
  for (Index i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) w[j] = W(i, j) = rng.beta_integer(2, 3);
    const double a = rng.bernoulli(model.prop(w)) ? 1.0 : 0.0;
    A[i] = a;
    Z(i, 0) = model.z1(a, w).inverse(rng.uniform());
    Z(i, 1) = model.z2(a, w).inverse(rng.uniform());
    M(i, 0) = model.m1(a, Z(i, 0), w).inverse(rng.uniform());
    M(i, 1) = model.m2(a, Z(i, 1), w).inverse(rng.uniform());
    Y[i] = rng.normal(model.ey(a, Z(i, 0), Z(i, 1), M(i, 0), M(i, 1), w), 1.0);
  }
  return MediationDataset(default_roles(), W, A, Z, M, Y, TreatmentKind::binary);
}

inline MediationDataset draw_dgp(const SimConfig& config) { return draw_dgp(config, config.seed); }

struct Truth {
  double value = 0.0;
  double mc_se = 0.0;
};

struct TruthTable {
  std::map<std::string, Truth> effects;
  std::map<std::string, Truth> psi;
  Index mc_n = 0;
  std::uint64_t seed = 0;
  /// E[Y(1) - Y(0)] from a separate full forward simulation.
  Truth ate_forward;
};

namespace detail {

/// psi^N(a1,a2,a3) for one outer draw: W fixed, Z drawn from the a3 arm with
/// common uniforms, the mediator and outcome layers integrated exactly.
inline double psi_natural_draw(const Model& md, const double* w, double u1, double u2, int a1, int a2, int a3) {
  const double z1 = md.z1(a3, w).inverse(u1), z2 = md.z2(a3, w).inverse(u2);
  return md.ey(a1, z1, z2, md.m1(a2, z1, w).mean(), md.m2(a2, z2, w).mean(), w);
}

/// psi^R(a1..a4): Z from the a4 arm drives the mediators at a3; the outcome's
/// Z argument is an independent draw from the a2 arm, integrated exactly.
inline double psi_randomized_draw(const Model& md, const double* w, double u1, double u2, int a1, int a2, int a3,
                                  int a4) {
  const double z1 = md.z1(a4, w).inverse(u1), z2 = md.z2(a4, w).inverse(u2);
  return md.ey(a1, md.z1(a2, w).mean(), md.z2(a2, w).mean(), md.m1(a3, z1, w).mean(), md.m2(a3, z2, w).mean(), w);
}

inline std::string params_key(const Parameters& p, Index mc_n, std::uint64_t seed) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "eps=%.17g_l1=%.17g_l2=%.17g_g1=%.17g_g2=%.17g_mc=%lld_seed=%llu", p.epsilon,
                p.lambda1, p.lambda2, p.gamma1, p.gamma2, static_cast<long long>(mc_n),
                static_cast<unsigned long long>(seed));
  return buf;
}

} // namespace detail

inline void to_json(nlohmann::json& j, const Truth& t) { j = {{"value", t.value}, {"mc_se", t.mc_se}}; }
inline void from_json(const nlohmann::json& j, Truth& t) {
  j.at("value").get_to(t.value);
  j.at("mc_se").get_to(t.mc_se);
}

/// Monte Carlo truths of every effect in `requests` (binary levels only).
/// W and Z are sampled; M and the outcome are integrated in closed form
/// through truncated-normal means. Cached under `cache_dir` when non-empty.
inline TruthTable truth_values(const SimConfig& config, const std::vector<EffectRequest>& requests, Index mc_n,
                               std::uint64_t seed, const std::string& cache_dir = {}) {
  const Parameters p = config.effective();
  std::vector<NamedContrast> contrasts;
  for (const auto& r : requests) {
    if (r.mtp) throw ConfigError("sim", "truth values are defined for binary levels only");
    for (auto& c : resolve_targets(r))
      if (std::none_of(contrasts.begin(), contrasts.end(), [&](const NamedContrast& x) { return x.name == c.name; }))
        contrasts.push_back(std::move(c));
  }
  const auto targets = distinct_targets(contrasts);

  std::filesystem::path cache_file;
  nlohmann::json cached;
  if (!cache_dir.empty()) {
    cache_file = std::filesystem::path(cache_dir) / ("truth_" + detail::params_key(p, mc_n, seed) + ".json");
    std::ifstream in(cache_file);
    if (in) {
      try {
        in >> cached;
      } catch (const nlohmann::json::exception&) {
        cached = nlohmann::json();
      }
    }
  }

  TruthTable out;
  out.mc_n = mc_n;
  out.seed = seed;
  bool complete = cached.is_object() && cached.contains("effects") && cached.contains("psi");
  if (complete)
    for (const auto& c : contrasts) complete = complete && cached["effects"].contains(c.name);
  if (complete) {
    for (auto& [k, v] : cached["effects"].items()) out.effects[k] = v.get<Truth>();
    for (auto& [k, v] : cached["psi"].items()) out.psi[k] = v.get<Truth>();
    out.ate_forward = cached.at("ate_forward").get<Truth>();
    return out;
  }

  const Model md{p};
  const std::size_t T = targets.size();
  std::vector<double> sum(T, 0.0), sum2(T, 0.0);
  std::vector<double> csum(contrasts.size(), 0.0), csum2(contrasts.size(), 0.0);
  std::vector<double> val(T);
  Rng rng(seed);
  double w[3];
  for (Index i = 0; i < mc_n; ++i) {
    for (int j = 0; j < 3; ++j) w[j] = rng.beta_integer(2, 3);
    const double u1 = rng.uniform(), u2 = rng.uniform();
    for (std::size_t t = 0; t < T; ++t) {
      const auto& L = targets[t].levels;
      auto lv = [&](std::size_t k) { return static_cast<int>(L[k].value); };
      val[t] = targets[t].family == Family::natural
                   ? detail::psi_natural_draw(md, w, u1, u2, lv(0), lv(1), lv(2))
                   : detail::psi_randomized_draw(md, w, u1, u2, lv(0), lv(1), lv(2), lv(3));
      sum[t] += val[t];
      sum2[t] += val[t] * val[t];
    }
    for (std::size_t c = 0; c < contrasts.size(); ++c) {
      double v = 0.0;
      for (const auto& [coef, tgt] : contrasts[c].terms)
        v += coef * val[static_cast<std::size_t>(std::find(targets.begin(), targets.end(), tgt) - targets.begin())];
      csum[c] += v;
      csum2[c] += v * v;
    }
  }
  const double N = static_cast<double>(mc_n);
  auto summarize = [&](double s, double s2) {
    const double mean = s / N;
    const double var = std::max(0.0, (s2 - N * mean * mean) / std::max(1.0, N - 1.0));
    return Truth{mean, std::sqrt(var / N)};
  };
  for (std::size_t t = 0; t < T; ++t) out.psi[targets[t].key()] = summarize(sum[t], sum2[t]);
  for (std::size_t c = 0; c < contrasts.size(); ++c) out.effects[contrasts[c].name] = summarize(csum[c], csum2[c]);

  // Full forward simulation of Y(1) - Y(0) with an independent stream.
  Rng fwd(derive_seed(seed, 0xf0d));
  double fs = 0.0, fs2 = 0.0;
  for (Index i = 0; i < mc_n; ++i) {
    for (int j = 0; j < 3; ++j) w[j] = fwd.beta_integer(2, 3);
    double y[2];
    for (int a = 0; a < 2; ++a) {
      const double z1 = md.z1(a, w).inverse(fwd.uniform()), z2 = md.z2(a, w).inverse(fwd.uniform());
      const double m1 = md.m1(a, z1, w).inverse(fwd.uniform()), m2 = md.m2(a, z2, w).inverse(fwd.uniform());
      y[a] = fwd.normal(md.ey(a, z1, z2, m1, m2, w), 1.0);
    }
    const double d = y[1] - y[0];
    fs += d;
    fs2 += d * d;
  }
  out.ate_forward = summarize(fs, fs2);

  if (!cache_file.empty()) {
    nlohmann::json j;
    j["key"] = detail::params_key(p, mc_n, seed);
    for (const auto& [k, v] : out.effects) j["effects"][k] = v;
    for (const auto& [k, v] : out.psi) j["psi"][k] = v;
    j["ate_forward"] = out.ate_forward;
    std::error_code ec;
    std::filesystem::create_directories(cache_file.parent_path(), ec);
    std::ofstream o(cache_file);
    if (o) o << j.dump(2) << '\n';
  }
  return out;
}

struct Metrics {
  double truth = 0.0;
  double truth_mc_se = 0.0;
  double bias = 0.0;
  double sqrt_n_bias = 0.0;
  double nmse = 0.0;
  double coverage = 0.0;
  double mean_se = 0.0;
  double sd_estimate = 0.0;
  int reps = 0;
};

struct SimReport {
  SimConfig config;
  std::vector<EffectRequest> requests;
  int folds = 5;
  TruthTable truths;
  /// Ordered effect names and their metrics.
  std::vector<std::string> names;
  std::map<std::string, Metrics> metrics;
  /// estimates[name][rep], std_errors[name][rep].
  std::map<std::string, std::vector<double>> estimates, std_errors;
  int failures = 0;
  std::vector<std::string> failure_messages;
  double seconds = 0.0;
};

struct ReplicateOptions {
  NuisanceOptions nuisance;
  int folds = 5;
  int threads = 1;
  double level = 0.95;
  Index mc_n = 1000000;
  std::uint64_t truth_seed = 20240601;
  std::string truth_cache_dir;
  PermuteOptions permute;
  /// Called after each finished replication with (done, total).
  std::function<void(int, int)> progress;
};

/// Runs config.reps independent replications and aggregates bias, sqrt(n)
/// bias, nMSE and Wald coverage against Monte Carlo truths.
inline SimReport replicate(const SimConfig& config, const std::vector<EffectRequest>& requests,
                           const ReplicateOptions& opt) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  SimReport rep;
  rep.config = config;
  rep.requests = requests;
  rep.folds = opt.folds;
  rep.truths = truth_values(config, requests, opt.mc_n, opt.truth_seed, opt.truth_cache_dir);
  for (const auto& r : requests)
    for (const auto& c : resolve_targets(r))
      if (std::find(rep.names.begin(), rep.names.end(), c.name) == rep.names.end()) rep.names.push_back(c.name);
  bool needs_z = false;
  for (const auto& r : requests) needs_z = needs_z || r.needs_z();

  const int R = config.reps;
  std::vector<std::map<std::string, EffectEstimate>> results(static_cast<std::size_t>(R));
  std::vector<std::string> errors(static_cast<std::size_t>(R));
  std::mutex mu;
  int done = 0;
  parallel_for(R, opt.threads, [&](int r) {
    const std::uint64_t rs = derive_seed(config.seed, static_cast<std::uint64_t>(r));
    try {
      MediationDataset d = draw_dgp(config, rs);
      if (needs_z) d = apply_permutation(d, plan_permutation(d, opt.permute));
      NuisanceOptions nopt = opt.nuisance;
      nopt.seed = derive_seed(rs, 2);
      const FoldPlan folds = make_folds(d.n(), opt.folds, derive_seed(rs, 1));
      const EffectReport er = run_effects(d, requests, nopt, folds, opt.level, 1);
      for (const auto& e : er.effects) results[static_cast<std::size_t>(r)][e.name] = e;
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(r)] = e.what();
    }
    if (opt.progress) {
      std::lock_guard<std::mutex> lock(mu);
      opt.progress(++done, R);
    }
  });

  const double n = static_cast<double>(config.n);
  for (const auto& name : rep.names) {
    Metrics m;
    const Truth& t = rep.truths.effects.at(name);
    m.truth = t.value;
    m.truth_mc_se = t.mc_se;
    double s = 0.0, s2 = 0.0, se = 0.0, est_sum = 0.0, est_sum2 = 0.0;
    int covered = 0;
    for (int r = 0; r < R; ++r) {
      if (!errors[static_cast<std::size_t>(r)].empty()) continue;
      const EffectEstimate& e = results[static_cast<std::size_t>(r)].at(name);
      const double err = e.estimate - t.value;
      s += err;
      s2 += err * err;
      se += e.std_error;
      est_sum += e.estimate;
      est_sum2 += e.estimate * e.estimate;
      if (e.ci_low <= t.value && t.value <= e.ci_high) ++covered;
      rep.estimates[name].push_back(e.estimate);
      rep.std_errors[name].push_back(e.std_error);
      ++m.reps;
    }
    if (m.reps > 0) {
      const double k = static_cast<double>(m.reps);
      m.bias = s / k;
      m.sqrt_n_bias = std::sqrt(n) * m.bias;
      m.nmse = n * s2 / k;
      m.coverage = covered / k;
      m.mean_se = se / k;
      const double mean = est_sum / k;
      m.sd_estimate = m.reps > 1 ? std::sqrt(std::max(0.0, (est_sum2 - k * mean * mean) / (k - 1.0))) : 0.0;
    }
    rep.metrics[name] = m;
  }
  for (int r = 0; r < R; ++r)
    if (!errors[static_cast<std::size_t>(r)].empty()) {
      ++rep.failures;
      rep.failure_messages.push_back("rep " + std::to_string(r) + ": " + errors[static_cast<std::size_t>(r)]);
    }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Column label used in the simulation table for an effect name.
inline std::string table_label(const std::string& name) {
  static const std::map<std::string, std::string> labels{{"RT1", "AY"},   {"RT2", "AZY"},
                                                         {"RT3", "AZMY"}, {"RT4", "AMY"},
                                                         {"IC", "Int. Confounder"}, {"RIDE", "IDE"},
                                                         {"RIIE", "IIE"}};
  const auto it = labels.find(name);
  return it == labels.end() ? name : it->second;
}

} // namespace mediation::sim

#endif // MEDIATION_SIM_HPP
