#include <catch_amalgamated.hpp>

#include "camp/gradcheck.hpp"
#include "camp/nn_ops.hpp"

using namespace camp;

namespace {

// Probe scalar: fixed-random weighted sum of a node's output, so the whole
// Jacobian is exercised.
int probe(Graph<double>& g, int node, std::uint64_t seed) {
  Rng rng(seed);
  const Tensor<double>& v = g.value(node);
  Tensor<double> w(v.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-1.0, 1.0);
  // weighted sum realized through existing ops: elementwise product via a
  // dense-like contraction would need a new op, so use a dedicated node.
  Tensor<double> out({1});
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * w[i];
  out[0] = s;
  auto wp = std::make_shared<Tensor<double>>(std::move(w));
  const int id = g.add("probe", {node}, std::move(out));
  g.set_back(id, [id, node, wp](Graph<double>& gg) {
    if (!gg.needs_grad(node)) return;
    const double up = gg.grad(id)[0];
    Tensor<double>& gi = gg.grad(node);
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += up * (*wp)[i];
  });
  return id;
}

}  // namespace

TEST_CASE("leaky_relu: forward examples and identity at alpha 1") {
  Graph<double> g;
  Tensor<double> in({2});
  in[0] = 2.0;
  in[1] = -2.0;
  const int y = leaky_relu(g, g.leaf(in, false), 0.01);
  REQUIRE(g.value(y)[0] == 2.0);
  REQUIRE(g.value(y)[1] == Catch::Approx(-0.02));

  Graph<double> g2;
  const int y2 = leaky_relu(g2, g2.leaf(in, false), 1.0);
  REQUIRE(g2.value(y2)[0] == 2.0);
  REQUIRE(g2.value(y2)[1] == -2.0);
}

TEST_CASE("sigmoid: midpoint and symmetry") {
  Graph<double> g;
  Tensor<double> in({3});
  in[0] = 0.0;
  in[1] = 4.2;
  in[2] = -4.2;
  const int y = sigmoid(g, g.leaf(in, false));
  REQUIRE(g.value(y)[0] == Catch::Approx(0.5).epsilon(1e-15));
  REQUIRE(g.value(y)[1] + g.value(y)[2] == Catch::Approx(1.0).epsilon(1e-12));
  // stable for very negative inputs
  Graph<double> g2;
  Tensor<double> ext({1});
  ext[0] = -745.0;
  const int y2 = sigmoid(g2, g2.leaf(ext, false));
  REQUIRE(std::isfinite(g2.value(y2)[0]));
  REQUIRE(g2.value(y2)[0] >= 0.0);
}

TEST_CASE("dropout: rate 0 and infer mode are the identity") {
  Rng rng(13);
  Graph<double> g;
  const int x = g.leaf(random_tensor({4, 5}, rng), false);
  REQUIRE(dropout(g, x, 0.0, true, rng) == x);
  REQUIRE(dropout(g, x, 0.7, false, rng) == x);
}

TEST_CASE("dropout: empirical keep fraction within 0.003 of 1-rate over 1e6 elements") {
  Rng rng(14);
  const double rate = 0.25;
  Tensor<double> big = Tensor<double>::full({1000, 1000}, 1.0);
  Graph<double> g;
  const int y = dropout(g, g.leaf(std::move(big), false), rate, true, rng);
  std::size_t kept = 0;
  const auto& out = g.value(y);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i] != 0.0) {
      REQUIRE(out[i] == Catch::Approx(1.0 / (1.0 - rate)).epsilon(1e-12));
      ++kept;
    }
  const double frac = static_cast<double>(kept) / static_cast<double>(out.size());
  REQUIRE(frac == Catch::Approx(1.0 - rate).margin(0.003));
}

TEST_CASE("backward: running twice without re-forward is rejected") {
  Graph<double> g;
  const int x = g.leaf(Tensor<double>::full({1}, 2.0), true);
  const int y = sigmoid(g, x);
  g.backward(y);
  REQUIRE_THROWS_AS(g.backward(y), numeric_error);
}

TEST_CASE("backward: non-scalar root rejected; node kinds recorded in order") {
  Graph<double> g;
  const int x = g.leaf(Tensor<double>::full({2, 2}, 1.0), true);
  const int y = leaky_relu(g, x, 0.5);
  REQUIRE_THROWS_AS(g.backward(y), numeric_error);
  REQUIRE(std::string(g.kind(x)) == "leaf");
  REQUIRE(std::string(g.kind(y)) == "leaky_relu");
  REQUIRE(g.parents(y) == std::vector<int>{x});
}

TEST_CASE("gradcheck: leaky_relu against central differences") {
  Rng rng(15);
  const auto r = gradcheck_one(
      [](Graph<double>& g, int x) { return probe(g, leaky_relu(g, x, 0.01), 77); },
      random_tensor({3, 7}, rng), 0, 16);
  REQUIRE(r.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck: sigmoid") {
  Rng rng(17);
  const auto r = gradcheck_one(
      [](Graph<double>& g, int x) { return probe(g, sigmoid(g, x), 78); },
      random_tensor({4, 4}, rng, -2.0, 2.0), 0, 18);
  REQUIRE(r.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck: dense layer (input, weights, bias) below 1e-6") {
  Rng rng(19);
  std::vector<Tensor<double>> inputs{random_tensor({3, 6}, rng), random_tensor({6, 4}, rng),
                                     random_tensor({4}, rng)};
  const auto r = gradcheck_many(
      [](Graph<double>& g, const std::vector<int>& ids) {
        return probe(g, dense(g, ids[0], ids[1], ids[2]), 79);
      },
      inputs, 0, 20);
  REQUIRE(r.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck: conv2d below 1e-5") {
  Rng rng(21);
  std::vector<Tensor<double>> inputs{random_tensor({2, 5, 5, 2}, rng),
                                     random_tensor({3, 3, 2, 3}, rng), random_tensor({3}, rng)};
  for (const auto stride : {1, 2}) {
    const auto r = gradcheck_many(
        [stride](Graph<double>& g, const std::vector<int>& ids) {
          return probe(g, conv2d(g, ids[0], ids[1], ids[2], stride, Padding::same), 80);
        },
        inputs, 0, 22);
    REQUIRE(r.max_rel_err < 1e-5);
  }
}

TEST_CASE("gradcheck: conv2d_transpose below 1e-5") {
  Rng rng(23);
  std::vector<Tensor<double>> inputs{random_tensor({1, 3, 3, 2}, rng),
                                     random_tensor({3, 3, 3, 2}, rng), random_tensor({3}, rng)};
  for (const auto stride : {1, 2}) {
    const auto r = gradcheck_many(
        [stride](Graph<double>& g, const std::vector<int>& ids) {
          return probe(g, conv2d_transpose(g, ids[0], ids[1], ids[2], stride), 81);
        },
        inputs, 0, 24);
    REQUIRE(r.max_rel_err < 1e-5);
  }
}

TEST_CASE("gradcheck: maxpool routes through argmax") {
  Rng rng(25);
  const auto r = gradcheck_one(
      [](Graph<double>& g, int x) { return probe(g, maxpool2d(g, x), 82); },
      random_tensor({1, 4, 4, 2}, rng), 0, 26);
  REQUIRE(r.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck: batchnorm train mode differentiates through batch statistics") {
  Rng rng(27);
  std::vector<Tensor<double>> inputs{random_tensor({2, 3, 3, 2}, rng),
                                     random_tensor({2}, rng, 0.5, 1.5),
                                     random_tensor({2}, rng, -0.5, 0.5)};
  const auto r = gradcheck_many(
      [](Graph<double>& g, const std::vector<int>& ids) {
        Tensor<double> rm({2}), rv = Tensor<double>::full({2}, 1.0);
        return probe(g, batchnorm2d(g, ids[0], ids[1], ids[2], rm, rv, true), 83);
      },
      inputs, 0, 28);
  REQUIRE(r.max_rel_err < 1e-5);
}

TEST_CASE("gradcheck: batchnorm infer mode") {
  Rng rng(29);
  std::vector<Tensor<double>> inputs{random_tensor({1, 4, 4, 2}, rng),
                                     random_tensor({2}, rng, 0.5, 1.5),
                                     random_tensor({2}, rng, -0.5, 0.5)};
  const auto r = gradcheck_many(
      [](Graph<double>& g, const std::vector<int>& ids) {
        Tensor<double> rm = Tensor<double>::full({2}, 0.1);
        Tensor<double> rv = Tensor<double>::full({2}, 0.9);
        return probe(g, batchnorm2d(g, ids[0], ids[1], ids[2], rm, rv, false), 84);
      },
      inputs, 0, 30);
  REQUIRE(r.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck: dropout train mode with a replayed mask") {
  Rng rng(31);
  const auto r = gradcheck_one(
      [](Graph<double>& g, int x) {
        Rng mask_rng(999);  // identical mask for every evaluation
        return probe(g, dropout(g, x, 0.3, true, mask_rng), 85);
      },
      random_tensor({6, 6}, rng), 0, 32);
  REQUIRE(r.max_rel_err < 1e-6);
}
