#ifndef MEDIATION_DATA_HPP
#define MEDIATION_DATA_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mediation/errors.hpp"
#include "mediation/random.hpp"

namespace mediation {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class TreatmentKind { binary, continuous };

inline std::string to_string(TreatmentKind k) {
  return k == TreatmentKind::binary ? "binary" : "continuous";
}

/// Which observed column plays which role. `auxiliary` lists extra numeric
/// columns to carry along (e.g. per-row policy caps); they take no part in
/// any regression.
struct ColumnRoles {
  std::vector<std::string> covariates;
  std::string treatment;
  std::vector<std::string> intermediate;
  std::vector<std::string> mediators;
  std::string outcome;
  std::vector<std::string> auxiliary;

  std::vector<std::string> all_columns() const {
    std::vector<std::string> out = covariates;
    out.push_back(treatment);
    out.insert(out.end(), intermediate.begin(), intermediate.end());
    out.insert(out.end(), mediators.begin(), mediators.end());
    out.push_back(outcome);
    out.insert(out.end(), auxiliary.begin(), auxiliary.end());
    return out;
  }

  /// Role lists must be disjoint and the scalar roles named.
  void validate() const {
    if (treatment.empty()) throw ValidationError("data", "treatment column not named");
    if (outcome.empty()) throw ValidationError("data", "outcome column not named");
    if (mediators.empty()) throw ValidationError("data", "at least one mediator column is required");
    std::set<std::string> seen;
    for (const auto& c : all_columns()) {
      if (!seen.insert(c).second)
        throw ValidationError("data", "column '" + c + "' is assigned to more than one role");
    }
  }
};

/// Column-role-tagged sample (W, A, Z, Z^pi, M, Y). Immutable once built:
/// `with_zpi` returns a new dataset.
class MediationDataset {
public:
  MediationDataset() = default;

  MediationDataset(ColumnRoles roles, Matrix w, Vector a, Matrix z, Matrix m, Vector y,
                   TreatmentKind kind, std::map<std::string, Vector> auxiliary = {})
      : roles_(std::move(roles)), w_(std::move(w)), a_(std::move(a)), z_(std::move(z)),
        m_(std::move(m)), y_(std::move(y)), kind_(kind), aux_(std::move(auxiliary)) {
    roles_.validate();
    const Index n = a_.size();
    auto check_rows = [n](Index rows, const char* block) {
      if (rows != n)
        throw ValidationError("data", std::string("block ") + block + " has mismatched row count");
    };
    check_rows(w_.rows(), "W");
    check_rows(z_.rows(), "Z");
    check_rows(m_.rows(), "M");
    check_rows(y_.size(), "Y");
    if (w_.cols() != static_cast<Index>(roles_.covariates.size()) ||
        z_.cols() != static_cast<Index>(roles_.intermediate.size()) ||
        m_.cols() != static_cast<Index>(roles_.mediators.size()))
      throw ValidationError("data", "block widths do not match the column roles");
    for (const auto& [name, col] : aux_) check_rows(col.size(), name.c_str());

    auto finite = [](const auto& x) { return x.size() == 0 || x.allFinite(); };
    if (!finite(w_) || !finite(a_) || !finite(z_) || !finite(m_) || !finite(y_))
      throw ValidationError("data", "dataset contains non-finite values");
    if (kind_ == TreatmentKind::binary) {
      for (Index i = 0; i < n; ++i) {
        if (a_[i] != 0.0 && a_[i] != 1.0)
          throw ValidationError("data", "binary treatment declared but row " +
                                            std::to_string(i + 1) + " has A = " +
                                            std::to_string(a_[i]));
      }
    }
  }

  Index n() const { return a_.size(); }
  const ColumnRoles& roles() const { return roles_; }
  TreatmentKind treatment_kind() const { return kind_; }

  const Matrix& w() const { return w_; }
  const Vector& a() const { return a_; }
  const Matrix& z() const { return z_; }
  const Matrix& m() const { return m_; }
  const Vector& y() const { return y_; }

  bool has_z() const { return z_.cols() > 0; }
  bool has_zpi() const { return zpi_.has_value(); }
  const Matrix& zpi() const {
    if (!zpi_) throw ConfigError("data", "Z^pi has not been constructed for this dataset");
    return *zpi_;
  }

  const Vector& auxiliary(const std::string& name) const {
    auto it = aux_.find(name);
    if (it == aux_.end())
      throw SchemaError(name, "auxiliary column '" + name + "' was not loaded");
    return it->second;
  }
  const std::map<std::string, Vector>& auxiliary_columns() const { return aux_; }

  /// Attach Z^pi. It must be a row permutation of Z.
  MediationDataset with_zpi(Matrix zpi) const {
    if (zpi.rows() != z_.rows() || zpi.cols() != z_.cols())
      throw ArgumentError("data", "Z^pi must have the same shape as Z");
    if (!is_row_permutation(z_, zpi))
      throw ValidationError("data", "Z^pi is not a row permutation of Z");
    MediationDataset out = *this;
    out.zpi_ = std::move(zpi);
    return out;
  }

  MediationDataset without_zpi() const {
    MediationDataset out = *this;
    out.zpi_.reset();
    return out;
  }

  /// Rows `idx` as a new dataset (Z^pi carried along when present).
  MediationDataset subset(const std::vector<Index>& idx) const {
    std::map<std::string, Vector> aux;
    for (const auto& [k, v] : aux_) aux[k] = v(idx);
    MediationDataset out(roles_, w_(idx, Eigen::all), a_(idx), z_(idx, Eigen::all),
                         m_(idx, Eigen::all), y_(idx), kind_, std::move(aux));
    if (zpi_) out.zpi_ = (*zpi_)(idx, Eigen::all);
    return out;
  }

  friend bool operator==(const MediationDataset& x, const MediationDataset& y) {
    auto same = [](const auto& p, const auto& q) {
      return p.rows() == q.rows() && p.cols() == q.cols() && (p.size() == 0 || p == q);
    };
    return x.roles_.all_columns() == y.roles_.all_columns() && x.kind_ == y.kind_ &&
           same(x.w_, y.w_) && same(x.a_, y.a_) && same(x.z_, y.z_) && same(x.m_, y.m_) &&
           same(x.y_, y.y_) && x.zpi_.has_value() == y.zpi_.has_value() &&
           (!x.zpi_ || same(*x.zpi_, *y.zpi_));
  }

  static bool is_row_permutation(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    auto rows_of = [](const Matrix& m) {
      std::vector<std::vector<double>> r;
      r.reserve(static_cast<std::size_t>(m.rows()));
      for (Index i = 0; i < m.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
        r.push_back(std::move(row));
      }
      std::sort(r.begin(), r.end());
      return r;
    };
    return rows_of(a) == rows_of(b);
  }

private:
  ColumnRoles roles_;
  Matrix w_;
  Vector a_;
  Matrix z_;
  Matrix m_;
  Vector y_;
  std::optional<Matrix> zpi_;
  TreatmentKind kind_ = TreatmentKind::binary;
  std::map<std::string, Vector> aux_;
};

// ---------------------------------------------------------------------------
// Design matrices. Column 0 is always the treatment, so counterfactual
// evaluation only ever rewrites that column (plus the Z block swap to Z^pi).

enum class Layout { AW, AZW, AMW, AZMW };

inline const char* to_string(Layout l) {
  switch (l) {
  case Layout::AW: return "A,W";
  case Layout::AZW: return "A,Z,W";
  case Layout::AMW: return "A,M,W";
  case Layout::AZMW: return "A,Z,M,W";
  }
  return "?";
}

enum class ZSource { observed, permuted };

inline Matrix design(const MediationDataset& d, Layout layout, ZSource zs = ZSource::observed) {
  const bool with_z = layout == Layout::AZW || layout == Layout::AZMW;
  const bool with_m = layout == Layout::AMW || layout == Layout::AZMW;
  const Matrix& z = (zs == ZSource::permuted) ? d.zpi() : d.z();
  const Index cols = 1 + (with_z ? z.cols() : 0) + (with_m ? d.m().cols() : 0) + d.w().cols();
  Matrix x(d.n(), cols);
  Index c = 0;
  x.col(c++) = d.a();
  if (with_z) {
    x.middleCols(c, z.cols()) = z;
    c += z.cols();
  }
  if (with_m) {
    x.middleCols(c, d.m().cols()) = d.m();
    c += d.m().cols();
  }
  x.middleCols(c, d.w().cols()) = d.w();
  return x;
}

// ---------------------------------------------------------------------------
// Fold plan.

/// Random balanced partition of {0..n-1} into J prediction sets.
struct FoldPlan {
  int J = 0;
  std::vector<int> assignment;
  std::uint64_t seed = 0;

  Index n() const { return static_cast<Index>(assignment.size()); }

  std::vector<Index> validation(int j) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (J == 1 || assignment[i] == j) out.push_back(static_cast<Index>(i));
    return out;
  }

  /// Training rows T_j. With J = 1 this is every row (in-sample fit).
  std::vector<Index> training(int j) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (J == 1 || assignment[i] != j) out.push_back(static_cast<Index>(i));
    return out;
  }

  /// Degenerate single-fold plan: nuisances fit and evaluated on all rows.
  static FoldPlan in_sample(Index n) {
    FoldPlan p;
    p.J = 1;
    p.assignment.assign(static_cast<std::size_t>(n), 0);
    return p;
  }
};

inline FoldPlan make_folds(Index n, int J, std::uint64_t seed) {
  if (J < 2 || static_cast<Index>(J) > n)
    throw ArgumentError("data", "fold count J=" + std::to_string(J) + " must satisfy 2 <= J <= n=" +
                                    std::to_string(n));
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0xf01d));
  rng.shuffle(order);
  FoldPlan plan;
  plan.J = J;
  plan.seed = seed;
  plan.assignment.resize(order.size());
  for (std::size_t k = 0; k < order.size(); ++k)
    plan.assignment[order[k]] = static_cast<int>(k % static_cast<std::size_t>(J));
  return plan;
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180).

namespace csv_detail {

/// Splits a CSV document into records. Handles quoted fields, doubled
/// quotes, and CRLF line endings.
inline std::vector<std::vector<std::string>> parse(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t i = 0;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3; // BOM
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) throw ParseError(records.size(), "unterminated quoted field");
  if (field_started || !record.empty()) end_record();
  // Drop blank trailing lines.
  while (!records.empty() && records.back().size() == 1 && records.back()[0].empty())
    records.pop_back();
  return records;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view s, std::size_t row, const std::string& column) {
  s = trim(s);
  if (s.empty())
    throw ParseError(row, "missing value in column '" + column + "' at row " + std::to_string(row));
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ParseError(row, "non-numeric value '" + std::string(s) + "' in column '" + column +
                              "' at row " + std::to_string(row));
  return v;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace csv_detail

inline MediationDataset parse_csv(std::string_view text, const ColumnRoles& roles,
                                  TreatmentKind kind = TreatmentKind::binary) {
  roles.validate();
  const auto records = csv_detail::parse(text);
  if (records.empty()) throw ParseError(0, "CSV input is empty (header row required)");
  const auto& header = records.front();
  std::map<std::string, std::size_t> where;
  for (std::size_t j = 0; j < header.size(); ++j)
    where.emplace(std::string(csv_detail::trim(header[j])), j);

  auto column_index = [&](const std::string& name) {
    auto it = where.find(name);
    if (it == where.end()) throw SchemaError(name, "column '" + name + "' not found in CSV header");
    return it->second;
  };
  for (const auto& c : roles.all_columns()) column_index(c);

  const Index n = static_cast<Index>(records.size()) - 1;
  auto read = [&](const std::vector<std::string>& names) {
    Matrix out(n, static_cast<Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
      const std::size_t src = column_index(names[j]);
      for (Index i = 0; i < n; ++i) {
        const auto& rec = records[static_cast<std::size_t>(i) + 1];
        const std::size_t row = static_cast<std::size_t>(i) + 1;
        if (rec.size() != header.size())
          throw ParseError(row, "row " + std::to_string(row) + " has " + std::to_string(rec.size()) +
                                    " fields, header has " + std::to_string(header.size()));
        out(i, static_cast<Index>(j)) = csv_detail::parse_number(rec[src], row, names[j]);
      }
    }
    return out;
  };

  Matrix w = read(roles.covariates);
  Vector a = read({roles.treatment}).col(0);
  Matrix z = read(roles.intermediate);
  Matrix m = read(roles.mediators);
  Vector y = read({roles.outcome}).col(0);
  std::map<std::string, Vector> aux;
  for (const auto& c : roles.auxiliary) aux[c] = read({c}).col(0);
  return MediationDataset(roles, std::move(w), std::move(a), std::move(z), std::move(m), std::move(y),
                          kind, std::move(aux));
}

inline MediationDataset load_csv(const std::string& path, const ColumnRoles& roles,
                                 TreatmentKind kind = TreatmentKind::binary) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("data", "cannot open data file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), roles, kind);
}

/// Role columns (and auxiliary columns) in role order, 17 significant digits.
inline std::string to_csv(const MediationDataset& d) {
  const auto& r = d.roles();
  std::vector<std::string> names;
  std::vector<const double*> cols;
  auto add_block = [&](const std::vector<std::string>& nm, const Matrix& block) {
    for (std::size_t j = 0; j < nm.size(); ++j) {
      names.push_back(nm[j]);
      cols.push_back(block.col(static_cast<Index>(j)).data());
    }
  };
  add_block(r.covariates, d.w());
  names.push_back(r.treatment);
  cols.push_back(d.a().data());
  add_block(r.intermediate, d.z());
  add_block(r.mediators, d.m());
  names.push_back(r.outcome);
  cols.push_back(d.y().data());
  for (const auto& c : r.auxiliary) {
    names.push_back(c);
    cols.push_back(d.auxiliary(c).data());
  }
  std::string out;
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (j) out += ',';
    const bool needs_quote = names[j].find_first_of(",\"\n\r") != std::string::npos;
    if (needs_quote) {
      out += '"';
      for (char ch : names[j]) {
        if (ch == '"') out += '"';
        out += ch;
      }
      out += '"';
    } else {
      out += names[j];
    }
  }
  out += '\n';
  for (Index i = 0; i < d.n(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (j) out += ',';
      out += csv_detail::format_number(cols[j][i]);
    }
    out += '\n';
  }
  return out;
}

inline void write_csv(const std::string& path, const MediationDataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("data", "cannot write '" + path + "'");
  out << to_csv(d);
}

} // namespace mediation

#endif // MEDIATION_DATA_HPP
