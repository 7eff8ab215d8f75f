#ifndef MEDIATION_ESTIMATOR_HPP
#define MEDIATION_ESTIMATOR_HPP

#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>
#include <utility>

#include "mediation/normal.hpp"
#include "mediation/nuisance.hpp"

namespace mediation {

/// Cross-fitted per-row uncentered gradient of one target.
struct GradientValues {
  PsiTarget target;
  Vector phi;
  /// terms[0] = b_1 plug-in; terms[k] = alpha_k residual term.
  std::vector<Vector> terms;

  Index n() const { return phi.size(); }
  double estimate() const { return phi.mean(); }

  std::vector<std::string> term_names() const {
    std::vector<std::string> out{"b1"};
    for (std::size_t k = 1; k < terms.size(); ++k) out.push_back("alpha" + std::to_string(k) + "_residual");
    return out;
  }
};

struct EffectEstimate {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double level = 0.95;
  Index n = 0;
  Vector eif;
};

/// Wald summary of an estimate with per-row influence values `eif`
/// (centered): SE = sqrt(sample variance / n).
inline EffectEstimate wald(std::string name, double estimate, Vector eif, double level = 0.95) {
  EffectEstimate e;
  e.name = std::move(name);
  e.estimate = estimate;
  e.level = level;
  e.n = eif.size();
  const double n = static_cast<double>(e.n);
  double var = 0.0;
  if (e.n > 1) var = (eif.array() - eif.mean()).square().sum() / (n - 1.0);
  e.std_error = e.n > 0 ? std::sqrt(var / n) : 0.0;
  const double z = normal::critical_value(level);
  e.ci_low = estimate - z * e.std_error;
  e.ci_high = estimate + z * e.std_error;
  e.eif = std::move(eif);
  return e;
}

/// sum_t c_t * psi_t with the matching combination of centered gradients.
inline EffectEstimate contrast(const std::string& name, const std::vector<std::pair<double, const GradientValues*>>& parts,
                               double level = 0.95) {
  if (parts.empty()) throw ArgumentError("estimator", "contrast needs at least one target");
  const Index n = parts.front().second->n();
  double estimate = 0.0;
  Vector eif = Vector::Zero(n);
  for (const auto& [c, g] : parts) {
    if (g->n() != n) throw ArgumentError("estimator", "contrast over gradients with different row counts");
    const double m = g->estimate();
    estimate += c * m;
    eif.array() += c * (g->phi.array() - m);
  }
  return wald(name, estimate, std::move(eif), level);
}

/// Delta method for numer / denom.
inline EffectEstimate ratio_contrast(const EffectEstimate& numer, const EffectEstimate& denom, std::string name = {}) {
  if (denom.estimate == 0.0) throw UndefinedRatio("estimator", "ratio contrast with a zero denominator");
  if (numer.eif.size() != denom.eif.size()) throw ArgumentError("estimator", "ratio over estimates with different n");
  const double r = numer.estimate / denom.estimate;
  Vector eif = (numer.eif - r * denom.eif) / denom.estimate;
  if (name.empty()) name = numer.name + "/" + denom.name;
  return wald(std::move(name), r, std::move(eif), numer.level);
}

struct FoldDiagnostics {
  int fold = 0;
  Index train_rows = 0;
  ChainDiagnostics chain;
  std::size_t fitted = 0;
  std::size_t reused = 0;
  std::vector<std::string> warnings;
};

struct CrossFitResult {
  std::vector<GradientValues> values;
  std::vector<FoldDiagnostics> folds;
  /// Per target, the mean of each residual term (near 0 when nuisances are good).
  std::vector<std::vector<double>> orthogonality;
  /// Fit order per fold and target.
  std::vector<std::vector<std::vector<std::string>>> fit_logs;
};

/// Runs `work(j)` for j in [0, count) on at most `threads` workers; the first
/// exception is rethrown after all workers stop.
template <typename F>
void parallel_for(int count, int threads, F&& work) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int j = 0; j < count; ++j) work(j);
    return;
  }
  std::mutex mu;
  int next = 0;
  std::exception_ptr error;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        int j;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (next >= count || error) return;
          j = next++;
        }
        try {
          work(j);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// Cross-fitted one-step estimation of several targets. Nuisances are fitted
/// once per training fold and shared by every target that needs them.
inline CrossFitResult estimate_targets(const MediationDataset& d, const std::vector<PsiTarget>& targets,
                                       const NuisanceOptions& opt, const FoldPlan& folds, int threads = 1) {
  opt.validate();
  if (folds.n() != d.n()) throw ArgumentError("estimator", "fold plan size does not match the dataset");
  for (const auto& t : targets) t.validate(d);
  const std::size_t T = targets.size();
  const int J = folds.J;
  CrossFitResult out;
  out.values.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    out.values[t].target = targets[t];
    out.values[t].phi = Vector::Zero(d.n());
    out.values[t].terms.assign(targets[t].arity() + 1, Vector::Zero(d.n()));
  }
  out.folds.resize(static_cast<std::size_t>(J));
  out.fit_logs.assign(static_cast<std::size_t>(J), std::vector<std::vector<std::string>>(T));

  parallel_for(J, threads, [&](int j) {
    const auto train_rows = folds.training(j);
    const auto valid_rows = folds.validation(j);
    const MediationDataset train = d.subset(train_rows);
    const MediationDataset valid = d.subset(valid_rows);
    NuisanceCache cache;
    ChainFitter fitter(train, opt, derive_seed(opt.seed, static_cast<std::uint64_t>(j)), &cache);
    FoldDiagnostics& fd = out.folds[static_cast<std::size_t>(j)];
    fd.fold = j;
    fd.train_rows = train.n();
    for (std::size_t t = 0; t < T; ++t) {
      NuisanceSet s;
      try {
        s = fitter.fit(targets[t]);
      } catch (const ConfigError& e) {
        throw ConfigError(e.module(), "fold " + std::to_string(j) + ", target " + targets[t].key() + ": " + e.what());
      } catch (const Error& e) {
        throw Error(e.module(), "fold " + std::to_string(j) + ", target " + targets[t].key() + ": " + e.what());
      }
      out.fit_logs[static_cast<std::size_t>(j)][t] = s.fit_log;
      const GradientTerms g = evaluate_gradient(s, valid);
      for (std::size_t r = 0; r < valid_rows.size(); ++r) {
        const Index i = valid_rows[r];
        out.values[t].phi[i] = g.phi[static_cast<Index>(r)];
        for (std::size_t k = 0; k < g.terms.size(); ++k) out.values[t].terms[k][i] = g.terms[k][static_cast<Index>(r)];
      }
    }
    fd.chain = fitter.diagnostics();
    fd.fitted = cache.misses();
    fd.reused = cache.hits();
    if (d.treatment_kind() == TreatmentKind::binary && (fd.chain.arm0 == 0 || fd.chain.arm1 == 0))
      fd.warnings.push_back("fold " + std::to_string(j) + " training set has an empty treatment arm (A=0: " +
                            std::to_string(fd.chain.arm0) + ", A=1: " + std::to_string(fd.chain.arm1) + ")");
  });

  out.orthogonality.resize(T);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 1; k < out.values[t].terms.size(); ++k)
      out.orthogonality[t].push_back(out.values[t].terms[k].mean());
  return out;
}

inline GradientValues estimate_psi(const MediationDataset& d, const PsiTarget& target, const NuisanceOptions& opt,
                                   const FoldPlan& folds, int threads = 1) {
  return std::move(estimate_targets(d, {target}, opt, folds, threads).values.front());
}

inline GradientValues estimate_psi(const MediationDataset& d, const PsiTarget& target,
                                   const learn::LearnerSpec& learner, const FoldPlan& folds, double alpha_max) {
  NuisanceOptions opt;
  opt.theta_learner = learner;
  opt.alpha_learner = learner;
  opt.alpha_max = alpha_max;
  return estimate_psi(d, target, opt, folds);
}

/// CSV with columns row, b1, alpha residual terms, phi.
inline std::string gradient_csv(const GradientValues& g) {
  std::ostringstream os;
  os << "row";
  for (const auto& name : g.term_names()) os << ',' << name;
  os << ",phi\n";
  for (Index i = 0; i < g.n(); ++i) {
    os << i;
    for (const auto& t : g.terms) os << ',' << csv_detail::format_number(t[i]);
    os << ',' << csv_detail::format_number(g.phi[i]) << '\n';
  }
  return os.str();
}

} // namespace mediation

#endif // MEDIATION_ESTIMATOR_HPP
