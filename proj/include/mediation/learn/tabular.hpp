#ifndef MEDIATION_LEARN_TABULAR_HPP
#define MEDIATION_LEARN_TABULAR_HPP

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <unordered_map>

#include "mediation/learn/learner.hpp"

namespace mediation::learn {

/// Mixed-radix code of the cell a row falls in, over the levels observed in
/// training. Rows holding an unobserved value have no code.
class CellCoder {
public:
  CellCoder() = default;

  static CellCoder fit(const Matrix& x, int max_levels) {
    CellCoder c;
    c.levels_.resize(static_cast<std::size_t>(x.cols()));
    c.strides_.resize(static_cast<std::size_t>(x.cols()));
    std::uint64_t stride = 1;
    for (Index j = 0; j < x.cols(); ++j) {
      auto& lv = c.levels_[static_cast<std::size_t>(j)];
      lv.assign(x.col(j).data(), x.col(j).data() + x.rows());
      std::sort(lv.begin(), lv.end());
      lv.erase(std::unique(lv.begin(), lv.end()), lv.end());
      if (static_cast<int>(lv.size()) > max_levels)
        throw ArgumentError("learn", "tabular_exact requires discrete features; column " + std::to_string(j) +
                                         " has more than " + std::to_string(max_levels) + " distinct values");
      c.strides_[static_cast<std::size_t>(j)] = stride;
      if (stride > std::numeric_limits<std::uint64_t>::max() / lv.size())
        throw ArgumentError("learn", "tabular_exact: too many feature cells to index");
      stride *= lv.size();
    }
    return c;
  }

  std::optional<std::uint64_t> code(const Matrix& x, Index i) const {
    std::uint64_t out = 0;
    for (std::size_t j = 0; j < levels_.size(); ++j) {
      const auto& lv = levels_[j];
      const double v = x(i, static_cast<Index>(j));
      const auto it = std::lower_bound(lv.begin(), lv.end(), v);
      if (it == lv.end() || *it != v) return std::nullopt;
      out += static_cast<std::uint64_t>(it - lv.begin()) * strides_[j];
    }
    return out;
  }

private:
  std::vector<std::vector<double>> levels_;
  std::vector<std::uint64_t> strides_;
};

class TabularModel final : public Model {
public:
  TabularModel(CellCoder coder, std::unordered_map<std::uint64_t, double> values, double fallback)
      : coder_(std::move(coder)), values_(std::move(values)), fallback_(fallback) {}

  Vector predict(const Matrix& x) const override {
    Vector out(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
      const auto c = coder_.code(x, i);
      if (!c) {
        out[i] = fallback_;
        continue;
      }
      const auto it = values_.find(*c);
      out[i] = (it == values_.end()) ? fallback_ : it->second;
    }
    return out;
  }

  std::size_t cells() const { return values_.size(); }

private:
  CellCoder coder_;
  std::unordered_map<std::uint64_t, double> values_;
  double fallback_;
};

/// Exact empirical risk minimizer over all functions of the discrete cells.
/// Squared error: cell means (unseen cells predict the overall mean).
/// Riesz: alpha(c) = (sum of linear-term weights landing in c) / n_c, the
/// per-cell stationarity condition; cells without training rows predict 0.
inline Predictor fit_tabular(const TabularParams& params, const Matrix& x, const LossSpec& loss, const Vector* y) {
  check_fit_inputs(x, loss, y);
  CellCoder coder = CellCoder::fit(x, params.max_levels);
  std::unordered_map<std::uint64_t, double> sums;
  std::unordered_map<std::uint64_t, double> counts;
  std::vector<std::uint64_t> codes(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) {
    codes[static_cast<std::size_t>(i)] = *coder.code(x, i);
    counts[codes[static_cast<std::size_t>(i)]] += 1.0;
  }
  double fallback = 0.0;
  if (loss.is_riesz()) {
    for (const auto& t : loss.terms)
      for (Index i = 0; i < x.rows(); ++i) {
        const auto c = coder.code(t.counterfactual, i);
        if (c && counts.count(*c)) sums[*c] += t.weights[i];
      }
  } else {
    for (Index i = 0; i < x.rows(); ++i) sums[codes[static_cast<std::size_t>(i)]] += (*y)[i];
    fallback = y->mean();
  }
  std::unordered_map<std::uint64_t, double> values;
  values.reserve(counts.size());
  for (const auto& [c, n] : counts) {
    const auto it = sums.find(c);
    values[c] = (it == sums.end() ? 0.0 : it->second) / n;
  }
  auto model = std::make_shared<TabularModel>(std::move(coder), std::move(values), fallback);
  Predictor p(model, x.cols(), "tabular_exact");
  return Predictor(model, x.cols(), "tabular_exact", {empirical_loss(p, x, loss, y)});
}

} // namespace mediation::learn

#endif // MEDIATION_LEARN_TABULAR_HPP
