#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "camp/autodiff.hpp"
#include "camp/errors.hpp"
#include "camp/rng.hpp"
#include "camp/tensor.hpp"

namespace camp {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checks = 0;
  std::size_t resampled = 0;  // coordinates rejected for straddling a kink
};

/// Identifies the piecewise-linear branch a forward pass took: the sign of
/// every LeakyReLU input and the argmax of every pooling window. Checked
/// coordinates whose +/-h evaluations land on different branches are not
/// differentiable points and get resampled.
inline std::vector<std::int64_t> kink_signature(const Graph<double>& g) {
  std::vector<std::int64_t> sig;
  for (std::size_t id = 0; id < g.node_count(); ++id) {
    const std::string kind = g.kind(static_cast<int>(id));
    if (kind == "leaky_relu") {
      const Tensor<double>& in = g.value(g.parents(static_cast<int>(id))[0]);
      std::int64_t acc = 0;
      for (std::size_t i = 0; i < in.size(); ++i) {
        acc = acc * 31 + (in[i] > 0.0 ? 1 : 0);
        if ((i & 63) == 63) {
          sig.push_back(acc);
          acc = 0;
        }
      }
      sig.push_back(acc);
    } else if (kind == "maxpool2d") {
      const Tensor<double>& in = g.value(g.parents(static_cast<int>(id))[0]);
      const std::size_t N = in.dim(0), H = in.dim(1), W = in.dim(2), C = in.dim(3);
      std::int64_t acc = 0;
      std::size_t count = 0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t oy = 0; oy < H / 2; ++oy)
          for (std::size_t ox = 0; ox < W / 2; ++ox)
            for (std::size_t c = 0; c < C; ++c) {
              int best = 0;
              double bv = in.at4(n, oy * 2, ox * 2, c);
              int w = 0;
              for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx, ++w) {
                  const double v = in.at4(n, oy * 2 + dy, ox * 2 + dx, c);
                  if (v > bv) {
                    bv = v;
                    best = w;
                  }
                }
              acc = acc * 5 + best;
              if ((++count & 31) == 0) {
                sig.push_back(acc);
                acc = 0;
              }
            }
      sig.push_back(acc);
    }
  }
  return sig;
}

/// Central finite-difference verification of reverse-mode gradients, always
/// at 64-bit precision. `build(graph, leaf_ids)` must construct the forward
/// pass over fresh leaves holding `inputs` and return a scalar root id.
/// Coordinates are sampled per tensor (all of them when samples <= 0 or the
/// tensor is small); relative error is |a - n| / max(|a|, |n|, 1e-8).
/// When `avoid_kinks` is set, coordinates whose perturbed passes change
/// branch (LeakyReLU sign or pool argmax) are resampled.
template <class Build>
GradCheckReport gradcheck_many(Build&& build, const std::vector<Tensor<double>>& inputs,
                               int samples_per_tensor, std::uint64_t seed, double h = 1e-5,
                               bool avoid_kinks = false) {
  std::vector<std::int64_t> base_sig;
  auto eval = [&](const std::vector<Tensor<double>>& vals, bool with_grad,
                  std::vector<Tensor<double>>* grads,
                  std::vector<std::int64_t>* sig) -> double {
    Graph<double> g;
    std::vector<int> ids;
    ids.reserve(vals.size());
    for (const auto& v : vals) ids.push_back(g.leaf(v, with_grad));
    const int root = build(g, ids);
    const double out = g.value(root)[0];
    if (!std::isfinite(out)) throw numeric_error("gradcheck: non-finite forward value");
    if (sig) *sig = kink_signature(g);
    if (with_grad) {
      g.backward(root);
      grads->clear();
      for (int id : ids) grads->push_back(g.grad(id));
    }
    return out;
  };

  std::vector<Tensor<double>> analytic;
  eval(inputs, true, &analytic, avoid_kinks ? &base_sig : nullptr);

  Rng rng(seed);
  GradCheckReport report;
  std::vector<Tensor<double>> work = inputs;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const std::size_t n = inputs[t].size();
    const bool exhaustive =
        samples_per_tensor <= 0 || static_cast<std::size_t>(samples_per_tensor) >= n;
    const std::size_t want = exhaustive ? n : static_cast<std::size_t>(samples_per_tensor);
    std::size_t done = 0;
    std::size_t cursor = 0;
    int budget = static_cast<int>(want) * 16;  // resample allowance
    while (done < want && budget-- > 0) {
      const std::size_t c = exhaustive ? cursor++ : rng.below(n);
      if (exhaustive && cursor > n) break;

      const double saved = work[t][c];
      std::vector<std::int64_t> sp, sm;
      work[t][c] = saved + h;
      const double fp = eval(work, false, nullptr, avoid_kinks ? &sp : nullptr);
      work[t][c] = saved - h;
      const double fm = eval(work, false, nullptr, avoid_kinks ? &sm : nullptr);
      work[t][c] = saved;
      if (avoid_kinks && (sp != base_sig || sm != base_sig)) {
        ++report.resampled;
        if (exhaustive) ++done;  // exhaustive mode: skip, do not retry elsewhere
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[t][c];
      if (!std::isfinite(numeric) || !std::isfinite(a))
        throw numeric_error("gradcheck: non-finite gradient");
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.checks;
      ++done;
    }
  }
  return report;
}

/// Single-tensor convenience wrapper.
template <class Build>
GradCheckReport gradcheck_one(Build&& build, const Tensor<double>& input, int samples,
                              std::uint64_t seed, double h = 1e-5, bool avoid_kinks = false) {
  return gradcheck_many(
      [&](Graph<double>& g, const std::vector<int>& ids) { return build(g, ids[0]); },
      std::vector<Tensor<double>>{input}, samples, seed, h, avoid_kinks);
}

/// Scalar head for gradient checks: a fixed random +/-1-weighted sum of a
/// node's elements. Exercises the whole Jacobian and keeps parameter
/// gradients well away from the relative-error floor, unlike flat training
/// losses whose deep-layer gradients can sit near 1e-8.
template <class T>
int weighted_sum_probe(Graph<T>& g, int node, std::uint64_t seed) {
  Rng rng(seed);
  const Tensor<T>& v = g.value(node);
  auto w = std::make_shared<Tensor<T>>(v.shape());
  for (std::size_t i = 0; i < w->size(); ++i)
    (*w)[i] = rng.below(2) ? T{1} : T{-1};
  Tensor<T> out({1});
  T s{};
  for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * (*w)[i];
  out[0] = s;
  const int id = g.add("probe", {node}, std::move(out));
  g.set_back(id, [id, node, w](Graph<T>& gg) {
    if (!gg.needs_grad(node)) return;
    const T up = gg.grad(id)[0];
    Tensor<T>& gi = gg.grad(node);
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += up * (*w)[i];
  });
  return id;
}

/// Random tensor with entries in [lo, hi]; entries closer than `kink_margin`
/// to zero are resampled so finite differences stay clear of LeakyReLU kinks.
inline Tensor<double> random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                                    double hi = 1.0, double kink_margin = 1e-3) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) {
    double v = rng.uniform(lo, hi);
    while (kink_margin > 0.0 && std::abs(v) < kink_margin) v = rng.uniform(lo, hi);
    t[i] = v;
  }
  return t;
}

}  // namespace camp
