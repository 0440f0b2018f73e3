#include <catch_amalgamated.hpp>

#include <cmath>

#include "camp/metrics.hpp"
#include "camp/rng.hpp"

using namespace camp;

TEST_CASE("confusion: basic thresholding") {
  const ConfusionMatrix cm = confusion({0.9, 0.1}, {1, 0}, 0.5);
  REQUIRE(cm.tp == 1);
  REQUIRE(cm.tn == 1);
  REQUIRE(cm.fp == 0);
  REQUIRE(cm.fn == 0);
}

TEST_CASE("confusion: perfect scores give a perfect matrix") {
  const ConfusionMatrix cm = confusion({1.0, 0.0, 1.0, 0.0}, {1, 0, 1, 0});
  REQUIRE(cm.tp == 2);
  REQUIRE(cm.tn == 2);
  REQUIRE(cm.fp + cm.fn == 0);
  REQUIRE(accuracy(cm) == 1.0);
}

TEST_CASE("confusion: agrees with brute-force counting on 1000 random pairs") {
  Rng rng(101);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 1000; ++i) {
    scores.push_back(rng.uniform());
    labels.push_back(rng.below(2) == 1 ? 1 : 0);
  }
  const double t = 0.37;
  const ConfusionMatrix cm = confusion(scores, labels, t);
  long long tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= t && labels[i] == 1) ++tp;
    if (scores[i] >= t && labels[i] == 0) ++fp;
    if (scores[i] < t && labels[i] == 0) ++tn;
    if (scores[i] < t && labels[i] == 1) ++fn;
  }
  REQUIRE(cm.tp == tp);
  REQUIRE(cm.fp == fp);
  REQUIRE(cm.tn == tn);
  REQUIRE(cm.fn == fn);
}

TEST_CASE("metric formulas on fixed matrices") {
  ConfusionMatrix cm;
  cm.tp = 50;
  cm.tn = 40;
  cm.fp = 5;
  cm.fn = 5;
  REQUIRE(*accuracy(cm) == Catch::Approx(0.9).epsilon(1e-12));
  REQUIRE(*sensitivity(cm) == Catch::Approx(50.0 / 55.0).epsilon(1e-12));
  REQUIRE(*sensitivity(cm) == Catch::Approx(0.9091).margin(5e-5));
  REQUIRE(*specificity(cm) == Catch::Approx(40.0 / 45.0).epsilon(1e-12));
  REQUIRE(*specificity(cm) == Catch::Approx(0.8889).margin(5e-5));

  ConfusionMatrix perfect_sens{10, 3, 1, 0};
  REQUIRE(*sensitivity(perfect_sens) == 1.0);
  ConfusionMatrix perfect_spec{1, 0, 10, 3};
  REQUIRE(*specificity(perfect_spec) == 1.0);
}

TEST_CASE("metrics: undefined markers on zero denominators") {
  REQUIRE_FALSE(accuracy(ConfusionMatrix{}).has_value());
  REQUIRE_FALSE(sensitivity(ConfusionMatrix{0, 5, 5, 0}).has_value());
  REQUIRE_FALSE(specificity(ConfusionMatrix{5, 0, 0, 5}).has_value());
  REQUIRE_FALSE(precision(ConfusionMatrix{0, 0, 5, 5}).has_value());
  REQUIRE_FALSE(f1_score(ConfusionMatrix{0, 0, 5, 5}).has_value());
}

TEST_CASE("metrics: Eq formulas hold on random matrices, f1 is the harmonic mean") {
  Rng rng(55);
  for (int trial = 0; trial < 500; ++trial) {
    ConfusionMatrix cm;
    cm.tp = static_cast<long long>(rng.below(50));
    cm.fp = static_cast<long long>(rng.below(50));
    cm.tn = static_cast<long long>(rng.below(50));
    cm.fn = static_cast<long long>(rng.below(50));
    if (cm.total() == 0) continue;
    REQUIRE(*accuracy(cm) ==
            Catch::Approx(static_cast<double>(cm.tp + cm.tn) / cm.total()).epsilon(1e-12));
    if (cm.tp + cm.fn > 0)
      REQUIRE(*sensitivity(cm) ==
              Catch::Approx(static_cast<double>(cm.tp) / (cm.tp + cm.fn)).epsilon(1e-12));
    if (cm.tn + cm.fp > 0)
      REQUIRE(*specificity(cm) ==
              Catch::Approx(static_cast<double>(cm.tn) / (cm.tn + cm.fp)).epsilon(1e-12));
    const auto p = precision(cm), s = sensitivity(cm), f = f1_score(cm);
    if (p && s && *p + *s > 0)
      REQUIRE(*f == Catch::Approx(2.0 * *p * *s / (*p + *s)).epsilon(1e-12));
  }
}

TEST_CASE("roc: perfectly separated scores reach AUC 1") {
  const RocCurve c = roc_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
  REQUIRE(c.auc.has_value());
  REQUIRE(*c.auc == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("roc: label-independent scores give AUC 0.5") {
  const RocCurve c = roc_auc({0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0});
  REQUIRE(*c.auc == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("roc: single-class input is undefined") {
  REQUIRE_FALSE(roc_auc({0.1, 0.9}, {1, 1}).auc.has_value());
}

TEST_CASE("roc: trapezoidal AUC equals the pairwise Mann-Whitney oracle") {
  Rng rng(202);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 200; ++i) {
      // quantized scores force plenty of ties
      scores.push_back(static_cast<double>(rng.below(20)) / 20.0);
      labels.push_back(rng.below(2) == 1 ? 1 : 0);
    }
    long long pos = 0, neg = 0;
    for (int l : labels) l ? ++pos : ++neg;
    if (pos == 0 || neg == 0) continue;
    double concordant = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i)
      for (std::size_t j = 0; j < scores.size(); ++j) {
        if (labels[i] != 1 || labels[j] != 0) continue;
        if (scores[i] > scores[j])
          concordant += 1.0;
        else if (scores[i] == scores[j])
          concordant += 0.5;
      }
    const double oracle = concordant / (static_cast<double>(pos) * static_cast<double>(neg));
    const RocCurve c = roc_auc(scores, labels);
    REQUIRE(*c.auc == Catch::Approx(oracle).margin(1e-12));
  }
}

TEST_CASE("roc: AUC invariant under strictly monotone score transforms") {
  Rng rng(303);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) {
    scores.push_back(rng.uniform());
    labels.push_back(rng.below(2) == 1 ? 1 : 0);
  }
  const double base = *roc_auc(scores, labels).auc;
  std::vector<double> transformed;
  for (double s : scores) transformed.push_back(std::exp(3.0 * s) - 0.5);
  REQUIRE(*roc_auc(transformed, labels).auc == Catch::Approx(base).margin(1e-12));
}

TEST_CASE("threshold consistency: sensitivity nonincreasing, specificity nondecreasing") {
  Rng rng(404);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 300; ++i) {
    scores.push_back(rng.uniform());
    labels.push_back(rng.below(2) == 1 ? 1 : 0);
  }
  double prev_sens = 2.0, prev_spec = -1.0;
  for (double t = 0.0; t <= 1.0001; t += 0.05) {
    const ConfusionMatrix cm = confusion(scores, labels, t);
    const double sens = sensitivity(cm).value_or(0.0);
    const double spec = specificity(cm).value_or(1.0);
    REQUIRE(sens <= prev_sens + 1e-12);
    REQUIRE(spec >= prev_spec - 1e-12);
    prev_sens = sens;
    prev_spec = spec;
  }
}

TEST_CASE("aggregate_patient: mean default, max behind the flag, permutation invariant") {
  std::map<std::string, std::vector<double>> groups;
  groups["solo"] = {0.7};
  groups["pair"] = {0.2, 0.8};
  auto mean = aggregate_patient(groups);
  REQUIRE(mean["solo"] == 0.7);
  REQUIRE(mean["pair"] == Catch::Approx(0.5));
  auto mx = aggregate_patient(groups, Aggregate::max);
  REQUIRE(mx["pair"] == 0.8);

  groups["pair"] = {0.8, 0.2};
  REQUIRE(aggregate_patient(groups)["pair"] == Catch::Approx(0.5));
}
