#pragma once

// Finite-difference verification of every differentiable operation plus both
// full models at a reduced input scale. Backs the `gradcheck` CLI subcommand
// and the acceptance suite.

#include <string>
#include <vector>

#include "camp/gradcheck.hpp"
#include "camp/losses.hpp"
#include "camp/model.hpp"
#include "camp/nn_ops.hpp"

namespace camp {

struct GradCheckRow {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t checks = 0;
  bool pass = false;
};

inline std::vector<GradCheckRow> run_gradcheck_suite(int model_scale = 32,
                                                     double tolerance = 1e-4,
                                                     std::uint64_t seed = 1234) {
  std::vector<GradCheckRow> rows;
  Rng rng(seed);
  auto record = [&](const std::string& name, const GradCheckReport& r) {
    rows.push_back({name, r.max_rel_err, r.checks, r.max_rel_err < tolerance && r.checks > 0});
  };

  record("leaky_relu", gradcheck_one(
      [](Graph<double>& g, int x) { return weighted_sum_probe(g, leaky_relu(g, x, 0.01), 11); },
      random_tensor({4, 9}, rng), 0, seed + 1));

  record("sigmoid", gradcheck_one(
      [](Graph<double>& g, int x) { return weighted_sum_probe(g, sigmoid(g, x), 12); },
      random_tensor({4, 9}, rng, -2.0, 2.0), 0, seed + 2));

  record("dropout", gradcheck_one(
      [](Graph<double>& g, int x) {
        Rng mask_rng(4242);
        return weighted_sum_probe(g, dropout(g, x, 0.3, true, mask_rng), 13);
      },
      random_tensor({6, 6}, rng), 0, seed + 3));

  record("dense", gradcheck_many(
      [](Graph<double>& g, const std::vector<int>& ids) {
        return weighted_sum_probe(g, dense(g, ids[0], ids[1], ids[2]), 14);
      },
      {random_tensor({3, 6}, rng), random_tensor({6, 4}, rng), random_tensor({4}, rng)}, 0,
      seed + 4));

  for (const int stride : {1, 2}) {
    record("conv2d/s" + std::to_string(stride),
           gradcheck_many(
               [stride](Graph<double>& g, const std::vector<int>& ids) {
                 return weighted_sum_probe(
                     g, conv2d(g, ids[0], ids[1], ids[2], stride, Padding::same), 15);
               },
               {random_tensor({2, 6, 6, 2}, rng), random_tensor({3, 3, 2, 3}, rng),
                random_tensor({3}, rng)},
               0, seed + 5));
    record("conv2d_transpose/s" + std::to_string(stride),
           gradcheck_many(
               [stride](Graph<double>& g, const std::vector<int>& ids) {
                 return weighted_sum_probe(g, conv2d_transpose(g, ids[0], ids[1], ids[2], stride),
                                           16);
               },
               {random_tensor({1, 3, 3, 2}, rng), random_tensor({3, 3, 3, 2}, rng),
                random_tensor({3}, rng)},
               0, seed + 6));
  }

  record("maxpool2d", gradcheck_one(
      [](Graph<double>& g, int x) { return weighted_sum_probe(g, maxpool2d(g, x), 17); },
      random_tensor({1, 6, 6, 2}, rng), 0, seed + 7, 1e-5, true));

  record("batchnorm2d/train", gradcheck_many(
      [](Graph<double>& g, const std::vector<int>& ids) {
        Tensor<double> rm({2}), rv = Tensor<double>::full({2}, 1.0);
        return weighted_sum_probe(g, batchnorm2d(g, ids[0], ids[1], ids[2], rm, rv, true), 18);
      },
      {random_tensor({2, 4, 4, 2}, rng), random_tensor({2}, rng, 0.5, 1.5),
       random_tensor({2}, rng, -0.5, 0.5)},
      0, seed + 8));

  record("batchnorm2d/infer", gradcheck_many(
      [](Graph<double>& g, const std::vector<int>& ids) {
        Tensor<double> rm = Tensor<double>::full({2}, 0.1);
        Tensor<double> rv = Tensor<double>::full({2}, 0.9);
        return weighted_sum_probe(g, batchnorm2d(g, ids[0], ids[1], ids[2], rm, rv, false), 19);
      },
      {random_tensor({1, 4, 4, 2}, rng), random_tensor({2}, rng, 0.5, 1.5),
       random_tensor({2}, rng, -0.5, 0.5)},
      0, seed + 9));

  record("dice_loss", gradcheck_one(
      [&rng](Graph<double>& g, int x) {
        Rng trng(555);
        return dice_loss(g, x, random_tensor({3, 5}, trng, 0.1, 0.9, 0.0));
      },
      random_tensor({3, 5}, rng, 0.1, 0.9, 0.0), 0, seed + 10));

  record("mse_loss", gradcheck_one(
      [](Graph<double>& g, int x) {
        Rng trng(556);
        return mse_loss(g, x, random_tensor({3, 5}, trng, 0.1, 0.9, 0.0));
      },
      random_tensor({3, 5}, rng, 0.1, 0.9, 0.0), 0, seed + 11));

  record("bce_loss", gradcheck_one(
      [](Graph<double>& g, int x) { return bce_loss(g, x, {1, 0, 1, 1, 0, 0}); },
      random_tensor({6}, rng, 0.05, 0.95, 0.0), 0, seed + 12));

  record("adaptive_sparse_regularizer", gradcheck_one(
      [](Graph<double>& g, int x) {
        return adaptive_sparse_regularizer(g, x, SparsityConfig{}, nullptr);
      },
      random_tensor({4, 8}, rng, 0.05, 0.95, 0.0), 0, seed + 13));

  // full models at reduced scale, probe head over the network output
  {
    BuildOptions opts;
    opts.input_size = model_scale;
    auto model = build_camp1<double>(9, opts);
    const auto input = random_tensor({1, static_cast<std::size_t>(model_scale),
                                      static_cast<std::size_t>(model_scale), 1},
                                     rng, 0.05, 0.95, 0.0);
    std::vector<Tensor<double>> packed;
    for (const auto& p : model.params) packed.push_back(p.value);
    record("camp1@" + std::to_string(model_scale),
           gradcheck_many(
               [&](Graph<double>& g, const std::vector<int>& ids) {
                 auto fr = model.forward(g, input, Mode::infer, nullptr, &ids);
                 return weighted_sum_probe(g, fr.output, 20);
               },
               packed, 24, seed + 14, 1e-5, true));
  }
  {
    BuildOptions opts;
    opts.input_size = model_scale;
    auto model = build_camp2<double>(10, opts);
    const auto input = random_tensor({2, static_cast<std::size_t>(model_scale),
                                      static_cast<std::size_t>(model_scale), 1},
                                     rng, 0.05, 0.95, 0.0);
    std::vector<Tensor<double>> packed;
    for (const auto& p : model.params) packed.push_back(p.value);
    record("camp2@" + std::to_string(model_scale),
           gradcheck_many(
               [&](Graph<double>& g, const std::vector<int>& ids) {
                 Rng drop_rng(777);  // identical dropout masks across evaluations
                 auto fr = model.forward(g, input, Mode::train, &drop_rng, &ids);
                 const int probe_out = weighted_sum_probe(g, fr.output, 21);
                 const int reg =
                     adaptive_sparse_regularizer(g, fr.taps.at("dense1"), SparsityConfig{});
                 return add(g, probe_out, reg);
               },
               packed, 24, seed + 15, 1e-5, true));
  }
  return rows;
}

}  // namespace camp
