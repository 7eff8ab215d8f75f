#ifndef MEDIATION_NUISANCE_HPP
#define MEDIATION_NUISANCE_HPP

#include <algorithm>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mediation/data.hpp"
#include "mediation/learn.hpp"
#include "mediation/policy.hpp"
#include "mediation/random.hpp"

namespace mediation {

enum class Family { natural, randomized };

inline const char* to_string(Family f) { return f == Family::natural ? "natural" : "randomized"; }

/// psi^N(a1,a2,a3) or psi^R(a1,a2,a3,a4); each slot is a fixed level or a
/// treatment policy.
struct PsiTarget {
  Family family = Family::natural;
  std::vector<PolicySpec> levels;

  static PsiTarget natural(PolicySpec a1, PolicySpec a2, PolicySpec a3) {
    return {Family::natural, {std::move(a1), std::move(a2), std::move(a3)}};
  }
  static PsiTarget natural(double a1, double a2, double a3) {
    return natural(PolicySpec::set(a1), PolicySpec::set(a2), PolicySpec::set(a3));
  }
  static PsiTarget randomized(PolicySpec a1, PolicySpec a2, PolicySpec a3, PolicySpec a4) {
    return {Family::randomized, {std::move(a1), std::move(a2), std::move(a3), std::move(a4)}};
  }
  static PsiTarget randomized(double a1, double a2, double a3, double a4) {
    return randomized(PolicySpec::set(a1), PolicySpec::set(a2), PolicySpec::set(a3), PolicySpec::set(a4));
  }

  std::size_t arity() const { return family == Family::natural ? 3 : 4; }

  const PolicySpec& level(std::size_t k) const { return levels.at(k - 1); }

  std::string key() const {
    std::string s = family == Family::natural ? "N(" : "R(";
    for (std::size_t k = 0; k < levels.size(); ++k) s += (k ? "," : "") + levels[k].key();
    return s + ")";
  }

  void validate(const MediationDataset& d) const {
    if (levels.size() != arity())
      throw ConfigError("nuisance", key() + ": expected " + std::to_string(arity()) + " treatment slots");
    if (family == Family::randomized) {
      if (!d.has_z()) throw ConfigError("nuisance", key() + ": randomized targets require an intermediate (Z) block");
      if (!d.has_zpi()) throw ConfigError("nuisance", key() + ": randomized targets require the permuted Z block");
    }
    for (const auto& l : levels) {
      if (l.kind == PolicySpec::Kind::set_value && d.treatment_kind() == TreatmentKind::binary &&
          l.value != 0.0 && l.value != 1.0)
        throw ConfigError("nuisance", key() + ": level " + l.key() + " outside the binary treatment support");
    }
  }

  friend bool operator==(const PsiTarget& x, const PsiTarget& y) { return x.key() == y.key(); }
};

struct NuisanceOptions {
  learn::LearnerSpec theta_learner = learn::LearnerSpec::make_ridge();
  learn::LearnerSpec alpha_learner = learn::LearnerSpec::make_ridge();
  double alpha_max = 500.0;
  /// Clamp alpha predictions below at 0 before the cap.
  bool clip_nonnegative = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(alpha_max > 0.0)) throw ConfigError("nuisance", "alpha_max must be > 0");
    theta_learner.validate();
    alpha_learner.validate();
    if (!alpha_learner.supports_riesz())
      throw ConfigError("nuisance", std::string("alpha_learner: ") + learn::to_string(alpha_learner.kind) +
                                        " cannot fit Riesz losses");
  }
};

inline Vector clip_alpha(Vector a, double alpha_max, bool nonnegative = true) {
  for (Index i = 0; i < a.size(); ++i) a[i] = std::min(nonnegative ? std::max(a[i], 0.0) : a[i], alpha_max);
  return a;
}

/// Fitted nuisances for one target on one training set.
/// theta = (theta_K, ..., theta_1); alpha = (alpha_1, ..., alpha_K).
struct NuisanceSet {
  PsiTarget target;
  std::vector<learn::Predictor> theta;
  std::vector<learn::Predictor> alpha;
  double alpha_max = 500.0;
  bool clip_nonnegative = true;
  /// Keys in the order they were fitted or reused ("fit:" / "reuse:").
  std::vector<std::string> fit_log;

  const learn::Predictor& theta_k(std::size_t k) const { return theta.at(theta.size() - k); }
  const learn::Predictor& alpha_k(std::size_t k) const { return alpha.at(k - 1); }
  Vector alpha_at(std::size_t k, const Matrix& x) const {
    return clip_alpha(alpha_k(k).predict(x), alpha_max, clip_nonnegative);
  }
};

/// Predictors already fitted on one training set, shared across targets.
class NuisanceCache {
public:
  learn::Predictor get_or_fit(const std::string& key, const std::function<learn::Predictor()>& make,
                              std::vector<std::string>* log) {
    auto it = map_.find(key);
    if (it != map_.end()) {
      ++hits_;
      if (log) log->push_back("reuse:" + key);
      return it->second;
    }
    ++misses_;
    learn::Predictor p = make();
    if (log) log->push_back("fit:" + key);
    map_.emplace(key, p);
    return p;
  }
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }
  std::size_t size() const { return map_.size(); }

private:
  std::unordered_map<std::string, learn::Predictor> map_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

/// Treatment values d(A_i, W_i) for every row; binary data must stay in {0,1}.
inline Vector policy_values(const PolicySpec& p, const MediationDataset& d) {
  Vector v = p.apply(d);
  if (d.treatment_kind() == TreatmentKind::binary)
    for (Index i = 0; i < v.size(); ++i)
      if (v[i] != 0.0 && v[i] != 1.0)
        throw ValidationError("nuisance", "policy " + p.label() + " maps row " + std::to_string(i) +
                                              " outside the binary treatment support");
  return v;
}

/// Design matrix with the treatment column replaced.
inline Matrix with_treatment(Matrix x, const Vector& a) {
  x.col(0) = a;
  return x;
}

struct ChainDiagnostics {
  /// Training rows with A = 0 and A = 1 (binary treatment only).
  Index arm0 = 0;
  Index arm1 = 0;
  /// Largest distance of a pseudo-outcome outside [min Y, max Y].
  double pseudo_outcome_excess = 0.0;
};

/// Sequential theta and alpha fits for one training set.
class ChainFitter {
public:
  ChainFitter(const MediationDataset& train, NuisanceOptions opt, std::uint64_t fold_seed = 0,
              NuisanceCache* cache = nullptr)
      : d_(train), opt_(std::move(opt)), seed_(fold_seed), cache_(cache) {
    opt_.validate();
    if (d_.treatment_kind() == TreatmentKind::binary) {
      diag_.arm1 = static_cast<Index>((d_.a().array() == 1.0).count());
      diag_.arm0 = d_.n() - diag_.arm1;
    }
    y_min_ = d_.y().minCoeff();
    y_max_ = d_.y().maxCoeff();
  }

  NuisanceSet fit(const PsiTarget& t) {
    t.validate(d_);
    NuisanceSet s;
    s.target = t;
    s.alpha_max = opt_.alpha_max;
    s.clip_nonnegative = opt_.clip_nonnegative;
    s.theta = theta_chain(t, &s.fit_log);
    s.alpha = alpha_chain(t, &s.fit_log);
    return s;
  }

  std::vector<learn::Predictor> theta_chain(const PsiTarget& t, std::vector<std::string>* log = nullptr) {
    t.validate(d_);
    return t.family == Family::natural ? theta_natural(t, log) : theta_randomized(t, log);
  }

  std::vector<learn::Predictor> alpha_chain(const PsiTarget& t, std::vector<std::string>* log = nullptr) {
    t.validate(d_);
    return t.family == Family::natural ? alpha_natural(t, log) : alpha_randomized(t, log);
  }

  const ChainDiagnostics& diagnostics() const { return diag_; }

private:
  learn::Predictor obtain(const std::string& key, const std::function<learn::Predictor()>& make,
                          std::vector<std::string>* log) {
    if (cache_) return cache_->get_or_fit(key, make, log);
    learn::Predictor p = make();
    if (log) log->push_back("fit:" + key);
    return p;
  }

  learn::Predictor regress(const std::string& key, const Matrix& x, const std::function<Vector()>& target,
                           std::vector<std::string>* log) {
    return obtain(
        key,
        [&] {
          const Vector y = target();
          const learn::LearnerSpec spec = learn::seeded(opt_.theta_learner, derive_seed(seed_, stable_hash(key)));
          try {
            return learn::fit(spec, x, learn::LossSpec::squared_error(), &y);
          } catch (const TrainingDivergence& e) {
            throw TrainingDivergence(e.epoch(), key + ": " + e.what());
          }
        },
        log);
  }

  learn::Predictor riesz(const std::string& key, const Matrix& x, const std::function<learn::LossSpec()>& loss,
                         std::vector<std::string>* log) {
    return obtain(
        key,
        [&] {
          const learn::LearnerSpec spec = learn::seeded(opt_.alpha_learner, derive_seed(seed_, stable_hash(key)));
          try {
            return learn::fit(spec, x, loss());
          } catch (const TrainingDivergence& e) {
            throw TrainingDivergence(e.epoch(), key + ": " + e.what());
          }
        },
        log);
  }

  Vector pseudo(const learn::Predictor& p, const Matrix& x) {
    Vector b = p.predict(x);
    for (Index i = 0; i < b.size(); ++i)
      diag_.pseudo_outcome_excess =
          std::max({diag_.pseudo_outcome_excess, b[i] - y_max_, y_min_ - b[i]});
    return b;
  }

  Vector clipped(const learn::Predictor& p, const Matrix& x) const {
    return clip_alpha(p.predict(x), opt_.alpha_max, opt_.clip_nonnegative);
  }

  Vector level(const PsiTarget& t, std::size_t k) const { return policy_values(t.level(k), d_); }

  static std::string join(const PsiTarget& t, std::initializer_list<std::size_t> slots) {
    std::string s;
    for (std::size_t k : slots) s += (s.empty() ? "" : ",") + t.level(k).key();
    return s;
  }

  std::vector<learn::Predictor> theta_natural(const PsiTarget& t, std::vector<std::string>* log) {
    const Matrix x3 = design(d_, Layout::AZMW), x2 = design(d_, Layout::AZW), x1 = design(d_, Layout::AW);
    const auto th3 = regress("theta:Y|AZMW", x3, [&] { return d_.y(); }, log);
    const auto th2 = regress("theta:N2|" + join(t, {1}), x2, [&] { return pseudo(th3, with_treatment(x3, level(t, 1))); }, log);
    const auto th1 =
        regress("theta:N1|" + join(t, {1, 2}), x1, [&] { return pseudo(th2, with_treatment(x2, level(t, 2))); }, log);
    return {th3, th2, th1};
  }

  std::vector<learn::Predictor> theta_randomized(const PsiTarget& t, std::vector<std::string>* log) {
    const Matrix x4 = design(d_, Layout::AZMW), x3 = design(d_, Layout::AMW), x2 = design(d_, Layout::AZW),
                 x1 = design(d_, Layout::AW);
    const auto th4 = regress("theta:Y|AZMW", x4, [&] { return d_.y(); }, log);
    const auto th3 = regress(
        "theta:R3|" + join(t, {1}), x3,
        [&] { return pseudo(th4, with_treatment(design(d_, Layout::AZMW, ZSource::permuted), level(t, 1))); }, log);
    const auto th2 =
        regress("theta:R2|" + join(t, {1, 2}), x2, [&] { return pseudo(th3, with_treatment(x3, level(t, 2))); }, log);
    const auto th1 = regress("theta:R1|" + join(t, {1, 2, 3}), x1,
                             [&] { return pseudo(th2, with_treatment(x2, level(t, 3))); }, log);
    return {th4, th3, th2, th1};
  }

  std::vector<learn::Predictor> alpha_natural(const PsiTarget& t, std::vector<std::string>* log) {
    const Matrix x1 = design(d_, Layout::AW), x2 = design(d_, Layout::AZW), x3 = design(d_, Layout::AZMW);
    const auto al1 = riesz("alpha:1|" + join(t, {3}), x1, [&] {
      return learn::LossSpec::riesz(with_treatment(x1, level(t, 3)), Vector::Ones(d_.n()));
    }, log);
    const auto al2 = riesz("alpha:2|" + join(t, {2, 3}), x2, [&] {
      return learn::LossSpec::riesz(with_treatment(x2, level(t, 2)), clipped(al1, x1));
    }, log);
    const auto al3 = riesz("alpha:N3|" + join(t, {1, 2, 3}), x3, [&] {
      return learn::LossSpec::riesz(with_treatment(x3, level(t, 1)), clipped(al2, x2));
    }, log);
    return {al1, al2, al3};
  }

  std::vector<learn::Predictor> alpha_randomized(const PsiTarget& t, std::vector<std::string>* log) {
    const Matrix x1 = design(d_, Layout::AW), x2 = design(d_, Layout::AZW), x3 = design(d_, Layout::AMW),
                 x4 = design(d_, Layout::AZMW);
    const auto al1 = riesz("alpha:1|" + join(t, {4}), x1, [&] {
      return learn::LossSpec::riesz(with_treatment(x1, level(t, 4)), Vector::Ones(d_.n()));
    }, log);
    const auto al2 = riesz("alpha:2|" + join(t, {3, 4}), x2, [&] {
      return learn::LossSpec::riesz(with_treatment(x2, level(t, 3)), clipped(al1, x1));
    }, log);
    const auto al3 = riesz("alpha:R3|" + join(t, {2, 3, 4}), x3, [&] {
      return learn::LossSpec::riesz(with_treatment(x3, level(t, 2)), clipped(al2, x2));
    }, log);
    const auto al4 = riesz("alpha:R4|" + join(t, {1, 2, 3, 4}), x4, [&] {
      return learn::LossSpec::riesz(with_treatment(design(d_, Layout::AZMW, ZSource::permuted), level(t, 1)),
                                    clipped(al3, x3));
    }, log);
    return {al1, al2, al3, al4};
  }

  const MediationDataset& d_;
  NuisanceOptions opt_;
  std::uint64_t seed_;
  NuisanceCache* cache_;
  ChainDiagnostics diag_;
  double y_min_ = 0.0;
  double y_max_ = 0.0;
};

inline std::vector<learn::Predictor> fit_theta_chain_natural(const MediationDataset& train, const PsiTarget& target,
                                                             const learn::LearnerSpec& learner) {
  if (target.family != Family::natural) throw ArgumentError("nuisance", "expected a natural target");
  NuisanceOptions opt;
  opt.theta_learner = learner;
  return ChainFitter(train, opt).theta_chain(target);
}

inline std::vector<learn::Predictor> fit_theta_chain_randomized(const MediationDataset& train, const PsiTarget& target,
                                                                const learn::LearnerSpec& learner) {
  if (target.family != Family::randomized) throw ArgumentError("nuisance", "expected a randomized target");
  NuisanceOptions opt;
  opt.theta_learner = learner;
  return ChainFitter(train, opt).theta_chain(target);
}

inline std::vector<learn::Predictor> fit_alpha_chain_natural(const MediationDataset& train, const PsiTarget& target,
                                                             const learn::LearnerSpec& learner, double alpha_max) {
  if (target.family != Family::natural) throw ArgumentError("nuisance", "expected a natural target");
  NuisanceOptions opt;
  opt.alpha_learner = learner;
  opt.alpha_max = alpha_max;
  return ChainFitter(train, opt).alpha_chain(target);
}

inline std::vector<learn::Predictor> fit_alpha_chain_randomized(const MediationDataset& train, const PsiTarget& target,
                                                                const learn::LearnerSpec& learner, double alpha_max) {
  if (target.family != Family::randomized) throw ArgumentError("nuisance", "expected a randomized target");
  NuisanceOptions opt;
  opt.alpha_learner = learner;
  opt.alpha_max = alpha_max;
  return ChainFitter(train, opt).alpha_chain(target);
}

/// Per-row terms of the uncentered gradient on `d` (rows outside training).
/// terms[0] is the plug-in b_1; terms[k] for k >= 1 is alpha_k * (b_{k+1} - theta_k),
/// with b_{K+1} = Y.
struct GradientTerms {
  std::vector<Vector> terms;
  Vector phi;
};

inline GradientTerms evaluate_gradient(const NuisanceSet& s, const MediationDataset& d) {
  const PsiTarget& t = s.target;
  t.validate(d);
  const std::size_t K = t.arity();
  // x[k] is the design of theta_k / alpha_k; cf[k] the design where b_k is evaluated.
  std::vector<Matrix> x(K + 1), cf(K + 1);
  if (t.family == Family::natural) {
    x[1] = design(d, Layout::AW);
    x[2] = design(d, Layout::AZW);
    x[3] = design(d, Layout::AZMW);
    cf[1] = with_treatment(x[1], policy_values(t.level(3), d));
    cf[2] = with_treatment(x[2], policy_values(t.level(2), d));
    cf[3] = with_treatment(x[3], policy_values(t.level(1), d));
  } else {
    x[1] = design(d, Layout::AW);
    x[2] = design(d, Layout::AZW);
    x[3] = design(d, Layout::AMW);
    x[4] = design(d, Layout::AZMW);
    cf[1] = with_treatment(x[1], policy_values(t.level(4), d));
    cf[2] = with_treatment(x[2], policy_values(t.level(3), d));
    cf[3] = with_treatment(x[3], policy_values(t.level(2), d));
    cf[4] = with_treatment(design(d, Layout::AZMW, ZSource::permuted), policy_values(t.level(1), d));
  }
  GradientTerms g;
  g.terms.resize(K + 1);
  g.terms[0] = s.theta_k(1).predict(cf[1]);
  for (std::size_t k = 1; k <= K; ++k) {
    const Vector next = (k == K) ? d.y() : s.theta_k(k + 1).predict(cf[k + 1]);
    g.terms[k] = s.alpha_at(k, x[k]).cwiseProduct(next - s.theta_k(k).predict(x[k]));
  }
  g.phi = g.terms[0];
  for (std::size_t k = 1; k <= K; ++k) g.phi += g.terms[k];
  return g;
}

} // namespace mediation

#endif // MEDIATION_NUISANCE_HPP
