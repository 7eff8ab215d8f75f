#ifndef MEDIATION_LEARN_LEARNER_HPP
#define MEDIATION_LEARN_LEARNER_HPP

#include <memory>
#include <string>
#include <vector>

#include "mediation/data.hpp"

namespace mediation::learn {

/// One linear term of a Riesz loss: b_i(alpha) = weights[i] * alpha(counterfactual.row(i)).
struct RieszTerm {
  Matrix counterfactual;
  Vector weights;
};

/// Squared error, or the Riesz loss mean_i[alpha(x_i)^2 - 2 b_i(alpha)] with
/// b_i(alpha) = sum over terms of weights[i] * alpha(counterfactual.row(i)).
struct LossSpec {
  enum class Kind { squared_error, riesz };
  Kind kind = Kind::squared_error;
  std::vector<RieszTerm> terms;

  static LossSpec squared_error() { return {}; }
  static LossSpec riesz(Matrix counterfactual, Vector weights) {
    LossSpec s;
    s.kind = Kind::riesz;
    s.terms.push_back({std::move(counterfactual), std::move(weights)});
    return s;
  }
  bool is_riesz() const { return kind == Kind::riesz; }
};

struct RidgeParams {
  double lambda = 1e-3;
  /// Adds squares and pairwise products of the standardized features.
  bool quadratic = true;
};

struct MlpParams {
  std::vector<int> hidden{32, 32};
  int epochs = 200;
  int batch_size = 256;
  double step_size = 1e-3;
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
};

struct TabularParams {
  /// A column with more distinct values than this is treated as continuous.
  int max_levels = 64;
};

struct EnsembleParams {
  double holdout_fraction = 0.2;
  /// Refit the members with positive weight on the full training set.
  bool refit = false;
  std::uint64_t seed = 0;
};

struct LearnerSpec {
  enum class Kind { ridge, tabular_exact, mlp, ensemble };
  Kind kind = Kind::ridge;
  RidgeParams ridge;
  MlpParams mlp;
  TabularParams tabular;
  EnsembleParams ensemble;
  /// Ensemble members; defaults to {ridge, mlp} when empty.
  std::vector<LearnerSpec> members;

  static LearnerSpec make_ridge(double lambda = 1e-3, bool quadratic = true) {
    LearnerSpec s;
    s.kind = Kind::ridge;
    s.ridge = {lambda, quadratic};
    return s;
  }
  static LearnerSpec make_tabular() {
    LearnerSpec s;
    s.kind = Kind::tabular_exact;
    return s;
  }
  static LearnerSpec make_mlp(MlpParams p = {}) {
    LearnerSpec s;
    s.kind = Kind::mlp;
    s.mlp = std::move(p);
    return s;
  }
  static LearnerSpec make_ensemble(std::vector<LearnerSpec> m = {}) {
    LearnerSpec s;
    s.kind = Kind::ensemble;
    s.members = std::move(m);
    return s;
  }

  bool supports_riesz() const { return kind != Kind::ensemble; }

  std::vector<LearnerSpec> resolved_members() const {
    if (!members.empty()) return members;
    return {make_ridge(), make_mlp(mlp)};
  }

  void validate() const {
    switch (kind) {
    case Kind::ridge:
      if (!(ridge.lambda >= 0.0)) throw ConfigError("learn", "ridge.lambda must be >= 0");
      break;
    case Kind::tabular_exact:
      if (tabular.max_levels < 1) throw ConfigError("learn", "tabular.max_levels must be >= 1");
      break;
    case Kind::mlp:
      if (mlp.hidden.empty()) throw ConfigError("learn", "mlp.hidden must list at least one layer");
      for (int w : mlp.hidden)
        if (w < 1) throw ConfigError("learn", "mlp.hidden widths must be >= 1");
      if (mlp.epochs < 1) throw ConfigError("learn", "mlp.epochs must be >= 1");
      if (mlp.batch_size < 1) throw ConfigError("learn", "mlp.batch_size must be >= 1");
      if (!(mlp.step_size > 0.0)) throw ConfigError("learn", "mlp.step_size must be > 0");
      if (!(mlp.clip_norm > 0.0)) throw ConfigError("learn", "mlp.clip_norm must be > 0");
      break;
    case Kind::ensemble:
      if (!(ensemble.holdout_fraction > 0.0 && ensemble.holdout_fraction < 1.0))
        throw ConfigError("learn", "ensemble.holdout_fraction must lie in (0,1)");
      for (const auto& m : resolved_members()) {
        if (m.kind == Kind::ensemble) throw ConfigError("learn", "ensemble members cannot be ensembles");
        m.validate();
      }
      break;
    }
  }
};

inline const char* to_string(LearnerSpec::Kind k) {
  switch (k) {
  case LearnerSpec::Kind::ridge: return "ridge";
  case LearnerSpec::Kind::tabular_exact: return "tabular_exact";
  case LearnerSpec::Kind::mlp: return "mlp";
  case LearnerSpec::Kind::ensemble: return "ensemble";
  }
  return "?";
}

inline LearnerSpec::Kind learner_kind_from_string(const std::string& s) {
  if (s == "ridge") return LearnerSpec::Kind::ridge;
  if (s == "tabular_exact") return LearnerSpec::Kind::tabular_exact;
  if (s == "mlp") return LearnerSpec::Kind::mlp;
  if (s == "ensemble") return LearnerSpec::Kind::ensemble;
  throw ConfigError("learn", "unknown learner kind '" + s + "'");
}

/// Fitted function of a feature row.
class Model {
public:
  virtual ~Model() = default;
  virtual Vector predict(const Matrix& x) const = 0;
};

class Predictor {
public:
  Predictor() = default;
  Predictor(std::shared_ptr<const Model> model, Index width, std::string kind, std::vector<double> trace = {})
      : model_(std::move(model)), width_(width), kind_(std::move(kind)), trace_(std::move(trace)) {}

  Vector predict(const Matrix& x) const {
    if (!model_) throw ArgumentError("learn", "predict on an empty predictor");
    if (x.cols() != width_)
      throw ArgumentError("learn", "feature width " + std::to_string(x.cols()) + " does not match training width " +
                                       std::to_string(width_));
    return model_->predict(x);
  }

  bool empty() const { return !model_; }
  Index width() const { return width_; }
  const std::string& kind() const { return kind_; }
  /// Per-epoch training loss (mlp), or the final loss for closed-form fits.
  const std::vector<double>& trace() const { return trace_; }
  const Model* model() const { return model_.get(); }

private:
  std::shared_ptr<const Model> model_;
  Index width_ = 0;
  std::string kind_;
  std::vector<double> trace_;
};

/// Empirical value of `loss` for fitted values `fx` = alpha(X) (Riesz) or
/// predictions (squared error).
inline double empirical_loss(const Predictor& p, const Matrix& x, const LossSpec& loss, const Vector* y) {
  const Vector fx = p.predict(x);
  const double n = static_cast<double>(x.rows());
  if (!loss.is_riesz()) return (fx - *y).squaredNorm() / n;
  double value = fx.squaredNorm();
  for (const auto& t : loss.terms) value -= 2.0 * t.weights.dot(p.predict(t.counterfactual));
  return value / n;
}

/// Mean and population standard deviation per column; constant columns get
/// scale 1 so they map to 0.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Matrix& x) {
    Standardizer s;
    const double n = static_cast<double>(std::max<Index>(x.rows(), 1));
    s.mean = x.colwise().mean();
    s.scale.resize(x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
      const double var = (x.col(j).array() - s.mean[j]).square().sum() / n;
      s.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
  }
  Matrix apply(const Matrix& x) const {
    return (x.rowwise() - mean).array().rowwise() / scale.array();
  }
};

inline void check_fit_inputs(const Matrix& x, const LossSpec& loss, const Vector* y) {
  if (x.rows() == 0) throw ArgumentError("learn", "fit on an empty feature matrix");
  if (!x.allFinite()) throw ArgumentError("learn", "non-finite feature value");
  if (loss.is_riesz()) {
    if (loss.terms.empty()) throw ArgumentError("learn", "riesz loss without linear terms");
    for (const auto& t : loss.terms) {
      if (t.counterfactual.rows() != x.rows() || t.counterfactual.cols() != x.cols() || t.weights.size() != x.rows())
        throw ArgumentError("learn", "riesz term shape does not match the feature matrix");
      if (!t.counterfactual.allFinite() || !t.weights.allFinite())
        throw ArgumentError("learn", "non-finite riesz term");
    }
  } else {
    if (!y) throw ArgumentError("learn", "squared error requires a target vector");
    if (y->size() != x.rows()) throw ArgumentError("learn", "target length does not match rows");
    if (!y->allFinite()) throw ArgumentError("learn", "non-finite target value");
  }
}

} // namespace mediation::learn

#endif // MEDIATION_LEARN_LEARNER_HPP
