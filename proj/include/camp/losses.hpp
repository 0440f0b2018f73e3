#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "camp/autodiff.hpp"
#include "camp/errors.hpp"
#include "camp/tensor.hpp"

namespace camp {

inline constexpr double kDiceSmoothing = 1e-7;

/// Inputs of the adaptive sparse regularizer: target rate and the bounds
/// between which the regularization strength moves.
struct SparsityConfig {
  double p = 0.2;
  double beta_min = 1.00;
  double beta_max = 5.00;
  double epsilon = 1e-7;

  void validate() const {
    if (!(p > 0.0 && p < 1.0)) throw numeric_error("sparsity: p must lie in (0,1)");
    if (!(beta_min <= beta_max)) throw numeric_error("sparsity: beta_min must be <= beta_max");
    if (!(epsilon > 0.0)) throw numeric_error("sparsity: epsilon must be positive");
  }
};

struct RegularizerOutput {
  std::vector<double> p_hat;  // per-unit mean activation
  double local_std = 0.0;     // whole-matrix std; diagnostic only, never used
  double sum_kl = 0.0;
  double beta2 = 0.0;
  double r = 0.0;
};

// ---- plain evaluations ----

/// Dice overlap 2*sum(G*T) / (sum(G^2) + sum(T^2) + smoothing).
template <class T>
double dice_coefficient(const Tensor<T>& g, const Tensor<T>& t) {
  if (!g.same_shape(t)) throw numeric_error("dice: shape mismatch");
  double sgt = 0.0, sgg = 0.0, stt = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double a = static_cast<double>(g[i]);
    const double b = static_cast<double>(t[i]);
    sgt += a * b;
    sgg += a * a;
    stt += b * b;
  }
  return 2.0 * sgt / (sgg + stt + kDiceSmoothing);
}

template <class T>
double dice_loss_value(const Tensor<T>& g, const Tensor<T>& t) {
  return 1.0 - dice_coefficient(g, t);
}

/// Root-mean-square pixel difference.
template <class T>
double rmse(const Tensor<T>& o, const Tensor<T>& g) {
  if (!o.same_shape(g)) throw numeric_error("rmse: shape mismatch");
  if (o.size() == 0) throw numeric_error("rmse: empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double d = static_cast<double>(o[i]) - static_cast<double>(g[i]);
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(o.size()));
}

/// Bernoulli KL divergence p*ln(p/q) + (1-p)*ln((1-p)/(1-q)), natural log;
/// both rates are clamped to [eps, 1-eps].
inline double kl_bernoulli(double p, double p_hat, double eps = 1e-7) {
  p = std::clamp(p, eps, 1.0 - eps);
  p_hat = std::clamp(p_hat, eps, 1.0 - eps);
  return p * std::log(p / p_hat) + (1.0 - p) * std::log((1.0 - p) / (1.0 - p_hat));
}

/// Mean binary cross-entropy; predictions clamped to [eps, 1-eps].
inline double bce_value(const std::vector<double>& preds, const std::vector<int>& labels,
                        double eps = 1e-7) {
  if (preds.size() != labels.size() || preds.empty())
    throw numeric_error("bce: prediction/label count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double q = std::clamp(preds[i], eps, 1.0 - eps);
    s -= labels[i] ? std::log(q) : std::log(1.0 - q);
  }
  return s / static_cast<double>(preds.size());
}

/// Evaluates the adaptive sparse regularizer on an activation matrix
/// [batch, units]: per-unit batch means, their total Bernoulli KL deviation
/// from the target rate, the KL-driven strength beta2 (clamped to its
/// bounds) and the penalty R = beta2 * sum_kl.
template <class T>
RegularizerOutput adaptive_sparse_stats(const Tensor<T>& acts, const SparsityConfig& cfg) {
  cfg.validate();
  if (acts.rank() != 2 || acts.size() == 0)
    throw numeric_error("adaptive_sparse_regularizer: empty activation matrix");
  const std::size_t batch = acts.dim(0), units = acts.dim(1);
  RegularizerOutput out;
  out.p_hat.resize(units, 0.0);
  double total_mean = 0.0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t u = 0; u < units; ++u) out.p_hat[u] += static_cast<double>(acts[b * units + u]);
  for (std::size_t u = 0; u < units; ++u) {
    out.p_hat[u] /= static_cast<double>(batch);
    total_mean += out.p_hat[u];
  }
  total_mean /= static_cast<double>(units);
  double sq = 0.0;
  for (std::size_t i = 0; i < acts.size(); ++i) {
    const double d = static_cast<double>(acts[i]) - total_mean;
    sq += d * d;
  }
  out.local_std = std::sqrt(sq / static_cast<double>(acts.size()));
  for (std::size_t u = 0; u < units; ++u)
    out.sum_kl += kl_bernoulli(cfg.p, out.p_hat[u], cfg.epsilon);
  const double raw = cfg.beta_min + (cfg.beta_max - cfg.beta_min) * out.sum_kl;
  out.beta2 = std::clamp(raw, cfg.beta_min, cfg.beta_max);
  out.r = out.beta2 * out.sum_kl;
  return out;
}

inline double combined_loss(double l_recon, double r) {
  if (!std::isfinite(l_recon) || !std::isfinite(r))
    throw numeric_error("combined_loss: non-finite term");
  return l_recon + r;
}

// ---- graph operations ----

/// 1 - dice_coefficient(generated, target); differentiable w.r.t. generated.
template <class T>
int dice_loss(Graph<T>& g, int gen, const Tensor<T>& target) {
  const Tensor<T>& v = g.value(gen);
  if (!v.same_shape(target)) throw numeric_error("dice_loss: shape mismatch");
  double sgt = 0.0, sgg = 0.0, stt = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double a = static_cast<double>(v[i]);
    const double b = static_cast<double>(target[i]);
    sgt += a * b;
    sgg += a * a;
    stt += b * b;
  }
  const double denom = sgg + stt + kDiceSmoothing;
  const double coef = 2.0 * sgt / denom;
  Tensor<T> out({1});
  out[0] = static_cast<T>(1.0 - coef);

  auto tgt = std::make_shared<Tensor<T>>(target);
  const int id = g.add("dice_loss", {gen}, std::move(out));
  g.set_back(id, [id, gen, tgt, sgt, denom](Graph<T>& gg) {
    if (!gg.needs_grad(gen)) return;
    const T up = gg.grad(id)[0];
    const Tensor<T>& v2 = gg.value(gen);
    Tensor<T>& gi = gg.grad(gen);
    const double inv2 = 1.0 / (denom * denom);
    for (std::size_t i = 0; i < v2.size(); ++i) {
      const double dcoef =
          2.0 * (static_cast<double>((*tgt)[i]) * denom - 2.0 * sgt * static_cast<double>(v2[i])) *
          inv2;
      gi[i] += up * static_cast<T>(-dcoef);
    }
  });
  return id;
}

/// Mean squared error against a constant target.
template <class T>
int mse_loss(Graph<T>& g, int gen, const Tensor<T>& target) {
  const Tensor<T>& v = g.value(gen);
  if (!v.same_shape(target)) throw numeric_error("mse_loss: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = static_cast<double>(v[i]) - static_cast<double>(target[i]);
    s += d * d;
  }
  Tensor<T> out({1});
  out[0] = static_cast<T>(s / static_cast<double>(v.size()));

  auto tgt = std::make_shared<Tensor<T>>(target);
  const int id = g.add("mse_loss", {gen}, std::move(out));
  g.set_back(id, [id, gen, tgt](Graph<T>& gg) {
    if (!gg.needs_grad(gen)) return;
    const T up = gg.grad(id)[0];
    const Tensor<T>& v2 = gg.value(gen);
    Tensor<T>& gi = gg.grad(gen);
    const T scale = static_cast<T>(2.0 / static_cast<double>(v2.size()));
    for (std::size_t i = 0; i < v2.size(); ++i) gi[i] += up * scale * (v2[i] - (*tgt)[i]);
  });
  return id;
}

/// Mean binary cross-entropy of a [N] or [N,1] prediction node against 0/1
/// labels. Predictions are clamped to [eps, 1-eps]; the clamp region carries
/// zero gradient.
template <class T>
int bce_loss(Graph<T>& g, int pred, std::vector<int> labels, double eps = 1e-7) {
  const Tensor<T>& v = g.value(pred);
  if (v.size() != labels.size()) throw numeric_error("bce_loss: prediction/label count mismatch");
  if (labels.empty()) throw numeric_error("bce_loss: empty batch");
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double q = std::clamp(static_cast<double>(v[i]), eps, 1.0 - eps);
    s -= labels[i] ? std::log(q) : std::log(1.0 - q);
  }
  Tensor<T> out({1});
  out[0] = static_cast<T>(s / static_cast<double>(v.size()));

  auto lab = std::make_shared<std::vector<int>>(std::move(labels));
  const int id = g.add("bce_loss", {pred}, std::move(out));
  g.set_back(id, [id, pred, lab, eps](Graph<T>& gg) {
    if (!gg.needs_grad(pred)) return;
    const T up = gg.grad(id)[0];
    const Tensor<T>& v2 = gg.value(pred);
    Tensor<T>& gi = gg.grad(pred);
    const double invn = 1.0 / static_cast<double>(v2.size());
    for (std::size_t i = 0; i < v2.size(); ++i) {
      const double q = static_cast<double>(v2[i]);
      if (q <= eps || q >= 1.0 - eps) continue;
      const double d = (*lab)[i] ? -1.0 / q : 1.0 / (1.0 - q);
      gi[i] += up * static_cast<T>(d * invn);
    }
  });
  return id;
}

/// Adaptive sparse penalty node over a [batch, units] activation matrix.
/// beta2 is differentiated through (no stop-gradient); outside the clamp
/// bounds its derivative w.r.t. sum_kl is zero.
template <class T>
int adaptive_sparse_regularizer(Graph<T>& g, int acts, const SparsityConfig& cfg,
                                RegularizerOutput* diag = nullptr) {
  const Tensor<T>& a = g.value(acts);
  RegularizerOutput stats = adaptive_sparse_stats(a, cfg);
  if (diag) *diag = stats;

  Tensor<T> out({1});
  out[0] = static_cast<T>(stats.r);
  const std::size_t batch = a.dim(0), units = a.dim(1);
  const double raw = cfg.beta_min + (cfg.beta_max - cfg.beta_min) * stats.sum_kl;
  const double dbeta_dsum = (raw > cfg.beta_min && raw < cfg.beta_max)
                                ? (cfg.beta_max - cfg.beta_min)
                                : 0.0;
  const double dr_dsum = stats.beta2 + stats.sum_kl * dbeta_dsum;

  auto p_hat = std::make_shared<std::vector<double>>(stats.p_hat);
  const int id = g.add("adaptive_sparse_regularizer", {acts}, std::move(out));
  g.set_back(id, [id, acts, p_hat, cfg, dr_dsum, batch, units](Graph<T>& gg) {
    if (!gg.needs_grad(acts)) return;
    const T up = gg.grad(id)[0];
    Tensor<T>& gi = gg.grad(acts);
    const double p = cfg.p;
    const double invb = 1.0 / static_cast<double>(batch);
    for (std::size_t u = 0; u < units; ++u) {
      const double q = (*p_hat)[u];
      if (q <= cfg.epsilon || q >= 1.0 - cfg.epsilon) continue;  // clamped: no gradient
      const double dkl = -p / q + (1.0 - p) / (1.0 - q);
      const T per_elem = static_cast<T>(dr_dsum * dkl * invb);
      for (std::size_t b = 0; b < batch; ++b) gi[b * units + u] += up * per_elem;
    }
  });
  return id;
}

}  // namespace camp
