#ifndef MEDIATION_LEARN_MLP_HPP
#define MEDIATION_LEARN_MLP_HPP

#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "mediation/learn/learner.hpp"
#include "mediation/random.hpp"

namespace mediation::learn {

/// Fully connected network with rectifier hidden layers and a linear output.
struct MlpNetwork {
  std::vector<Matrix> weights; // fan_in x fan_out
  std::vector<Eigen::RowVectorXd> biases;

  static MlpNetwork init(Index inputs, const std::vector<int>& hidden, double output_bias, Rng& rng) {
    MlpNetwork net;
    Index fan_in = inputs;
    std::vector<Index> widths(hidden.begin(), hidden.end());
    widths.push_back(1);
    for (Index w : widths) {
      Matrix W(fan_in, w);
      const double sd = std::sqrt(2.0 / static_cast<double>(std::max<Index>(fan_in, 1)));
      for (Index c = 0; c < W.cols(); ++c)
        for (Index r = 0; r < W.rows(); ++r) W(r, c) = sd * rng.normal();
      net.weights.push_back(std::move(W));
      net.biases.push_back(Eigen::RowVectorXd::Zero(w));
      fan_in = w;
    }
    net.biases.back()[0] = output_bias;
    return net;
  }

  std::size_t layers() const { return weights.size(); }

  /// Forward pass keeping pre-activations for backpropagation.
  Vector forward(const Matrix& x, std::vector<Matrix>& pre, std::vector<Matrix>& act) const {
    pre.resize(layers());
    act.resize(layers());
    const Matrix* h = &x;
    for (std::size_t l = 0; l < layers(); ++l) {
      pre[l].noalias() = *h * weights[l];
      pre[l].rowwise() += biases[l];
      if (l + 1 < layers())
        act[l] = pre[l].cwiseMax(0.0);
      else
        act[l] = pre[l];
      h = &act[l];
    }
    return act.back().col(0);
  }

  Vector predict(const Matrix& x) const {
    std::vector<Matrix> pre, act;
    return forward(x, pre, act);
  }

  /// Accumulates parameter gradients given dLoss/dOutput for each row.
  void backward(const Matrix& x, const std::vector<Matrix>& pre, const std::vector<Matrix>& act, const Vector& g_out,
                std::vector<Matrix>& gw, std::vector<Eigen::RowVectorXd>& gb) const {
    Matrix g = g_out;
    for (std::size_t l = layers(); l-- > 0;) {
      const Matrix& input = (l == 0) ? x : act[l - 1];
      gw[l].noalias() += input.transpose() * g;
      gb[l] += g.colwise().sum();
      if (l > 0) {
        Matrix next = g * weights[l].transpose();
        next.array() *= (pre[l - 1].array() > 0.0).cast<double>();
        g.swap(next);
      }
    }
  }
};

class MlpModel final : public Model {
public:
  MlpModel(Standardizer sx, MlpNetwork net, double y_mean, double y_scale)
      : sx_(std::move(sx)), net_(std::move(net)), y_mean_(y_mean), y_scale_(y_scale) {}

  Vector predict(const Matrix& x) const override {
    return (net_.predict(sx_.apply(x)).array() * y_scale_ + y_mean_).matrix();
  }

private:
  Standardizer sx_;
  MlpNetwork net_;
  double y_mean_;
  double y_scale_;
};

/// Minibatch Adam on the exact sample objective. The Riesz linear terms are
/// evaluated at the counterfactual rows of each minibatch on every step.
inline Predictor fit_mlp(const MlpParams& params, const Matrix& x, const LossSpec& loss, const Vector* y) {
  check_fit_inputs(x, loss, y);
  const Index n = x.rows();
  const bool riesz = loss.is_riesz();
  const Standardizer sx = Standardizer::fit(x);
  const Matrix xs = sx.apply(x);
  std::vector<Matrix> cfs;
  for (const auto& t : loss.terms) cfs.push_back(sx.apply(t.counterfactual));

  double y_mean = 0.0, y_scale = 1.0;
  Vector ys;
  if (!riesz) {
    y_mean = y->mean();
    const double var = (y->array() - y_mean).square().mean();
    y_scale = var > 0.0 ? std::sqrt(var) : 1.0;
    ys = (y->array() - y_mean) / y_scale;
  }

  Rng rng(derive_seed(params.seed, 0x6d6c70));
  MlpNetwork net = MlpNetwork::init(x.cols(), params.hidden, riesz ? 1.0 : 0.0, rng);
  const std::size_t L = net.layers();
  std::vector<Matrix> m_w(L), v_w(L), g_w(L);
  std::vector<Eigen::RowVectorXd> m_b(L), v_b(L), g_b(L);
  for (std::size_t l = 0; l < L; ++l) {
    m_w[l] = v_w[l] = g_w[l] = Matrix::Zero(net.weights[l].rows(), net.weights[l].cols());
    m_b[l] = v_b[l] = g_b[l] = Eigen::RowVectorXd::Zero(net.biases[l].size());
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(params.epochs));
  std::vector<Matrix> pre, act, pre_cf, act_cf;
  const Index batch = std::min<Index>(params.batch_size, n);
  const std::size_t T = loss.terms.size();

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (Index start = 0; start < n; start += batch) {
      const Index b = std::min(batch, n - start);
      std::vector<Index> idx(order.begin() + start, order.begin() + start + b);
      const Matrix xb = xs(idx, Eigen::all);
      for (std::size_t l = 0; l < L; ++l) {
        g_w[l].setZero();
        g_b[l].setZero();
      }
      const double inv_b = 1.0 / static_cast<double>(b);
      const Vector out = net.forward(xb, pre, act);
      double batch_loss;
      if (riesz) {
        batch_loss = out.squaredNorm() * inv_b;
        net.backward(xb, pre, act, 2.0 * inv_b * out, g_w, g_b);
        for (std::size_t t = 0; t < T; ++t) {
          const Matrix xc = cfs[t](idx, Eigen::all);
          const Vector w = loss.terms[t].weights(idx);
          const Vector out_cf = net.forward(xc, pre_cf, act_cf);
          batch_loss -= 2.0 * inv_b * w.dot(out_cf);
          net.backward(xc, pre_cf, act_cf, -2.0 * inv_b * w, g_w, g_b);
        }
      } else {
        const Vector r = out - ys(idx);
        batch_loss = r.squaredNorm() * inv_b;
        net.backward(xb, pre, act, 2.0 * inv_b * r, g_w, g_b);
      }
      if (!std::isfinite(batch_loss)) throw TrainingDivergence(epoch, "mlp loss became non-finite at epoch " + std::to_string(epoch));
      epoch_loss += batch_loss * static_cast<double>(b);

      double norm2 = 0.0;
      for (std::size_t l = 0; l < L; ++l) norm2 += g_w[l].squaredNorm() + g_b[l].squaredNorm();
      const double norm = std::sqrt(norm2);
      if (!std::isfinite(norm)) throw TrainingDivergence(epoch, "mlp gradient became non-finite at epoch " + std::to_string(epoch));
      const double shrink = norm > params.clip_norm ? params.clip_norm / norm : 1.0;

      b1t *= beta1;
      b2t *= beta2;
      const double lr = params.step_size * std::sqrt(1.0 - b2t) / (1.0 - b1t);
      for (std::size_t l = 0; l < L; ++l) {
        g_w[l] *= shrink;
        g_b[l] *= shrink;
        m_w[l] = beta1 * m_w[l] + (1.0 - beta1) * g_w[l];
        v_w[l] = beta2 * v_w[l] + (1.0 - beta2) * g_w[l].cwiseAbs2();
        m_b[l] = beta1 * m_b[l] + (1.0 - beta1) * g_b[l];
        v_b[l] = beta2 * v_b[l] + (1.0 - beta2) * g_b[l].cwiseAbs2();
        net.weights[l].array() -= lr * m_w[l].array() / (v_w[l].array().sqrt() + eps);
        net.biases[l].array() -= lr * m_b[l].array() / (v_b[l].array().sqrt() + eps);
      }
    }
    epoch_loss /= static_cast<double>(n);
    if (!riesz) epoch_loss *= y_scale * y_scale;
    trace.push_back(epoch_loss);
  }
  auto model = std::make_shared<MlpModel>(sx, std::move(net), y_mean, y_scale);
  return Predictor(model, x.cols(), "mlp", std::move(trace));
}

} // namespace mediation::learn

#endif // MEDIATION_LEARN_MLP_HPP
