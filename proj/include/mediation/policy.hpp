#ifndef MEDIATION_POLICY_HPP
#define MEDIATION_POLICY_HPP

#include <cstdio>
#include <limits>
#include <string>
#include <variant>

#include "mediation/data.hpp"

namespace mediation {

/// A treatment policy d(a, w): maps the natural treatment value (and the
/// covariates, through an optional per-row cap) to a post-intervention value.
/// Binary set-to-level interventions are `set_value(0)` / `set_value(1)`.
struct PolicySpec {
  enum class Kind { set_value, identity, additive_shift, multiplicative_shift };

  Kind kind = Kind::identity;
  double value = 0.0;  ///< set_value level
  double amount = 0.0; ///< additive delta or multiplicative factor
  /// Upper bound u(w): none, a constant, or an auxiliary column name.
  std::variant<std::monostate, double, std::string> cap;
  std::string description;

  static PolicySpec set(double v) {
    PolicySpec p;
    p.kind = Kind::set_value;
    p.value = v;
    return p;
  }
  static PolicySpec identity_policy() { return PolicySpec{}; }
  static PolicySpec shift(double delta) {
    PolicySpec p;
    p.kind = Kind::additive_shift;
    p.amount = delta;
    return p;
  }
  static PolicySpec scale(double factor) {
    PolicySpec p;
    p.kind = Kind::multiplicative_shift;
    p.amount = factor;
    return p;
  }
  PolicySpec with_cap(std::variant<std::monostate, double, std::string> c) const {
    PolicySpec p = *this;
    p.cap = std::move(c);
    return p;
  }

  bool is_level(double v) const { return kind == Kind::set_value && value == v; }

  /// Canonical text used for cache keys and reports.
  std::string key() const {
    auto num = [](double x) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", x);
      return std::string(buf);
    };
    std::string cap_text;
    if (std::holds_alternative<double>(cap)) cap_text = "|cap=" + num(std::get<double>(cap));
    if (std::holds_alternative<std::string>(cap)) cap_text = "|cap=" + std::get<std::string>(cap);
    switch (kind) {
    case Kind::set_value: return num(value);
    case Kind::identity: return "identity";
    case Kind::additive_shift: return "add(" + num(amount) + cap_text + ")";
    case Kind::multiplicative_shift: return "mul(" + num(amount) + cap_text + ")";
    }
    return "?";
  }

  std::string label() const { return description.empty() ? key() : description; }

  /// d(A_i, W_i) for the given rows of `data`.
  Vector apply(const MediationDataset& data, const std::vector<Index>& rows) const {
    Vector out(static_cast<Index>(rows.size()));
    const Vector& a = data.a();
    const Vector* cap_col = nullptr;
    double cap_const = std::numeric_limits<double>::infinity();
    if (std::holds_alternative<double>(cap)) cap_const = std::get<double>(cap);
    if (std::holds_alternative<std::string>(cap)) cap_col = &data.auxiliary(std::get<std::string>(cap));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const Index i = rows[k];
      const double ai = a[i];
      const double u = cap_col ? (*cap_col)[i] : cap_const;
      double d = ai;
      switch (kind) {
      case Kind::set_value: d = value; break;
      case Kind::identity: d = ai; break;
      case Kind::additive_shift: d = (ai + amount < u) ? ai + amount : ai; break;
      case Kind::multiplicative_shift: d = (ai * amount < u) ? ai * amount : ai; break;
      }
      out[static_cast<Index>(k)] = d;
    }
    return out;
  }

  Vector apply(const MediationDataset& data) const {
    std::vector<Index> rows(static_cast<std::size_t>(data.n()));
    for (Index i = 0; i < data.n(); ++i) rows[static_cast<std::size_t>(i)] = i;
    return apply(data, rows);
  }

  friend bool operator==(const PolicySpec& x, const PolicySpec& y) { return x.key() == y.key(); }
};

} // namespace mediation

#endif // MEDIATION_POLICY_HPP
