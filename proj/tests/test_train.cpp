#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "camp/train.hpp"

using namespace camp;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static fs::path dir = [] {
    auto p = fs::temp_directory_path() / "camp_test_train";
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// tiny reconstruction targets: blurred random blobs on [0,1]
std::vector<Tensor<float>> toy_slices(int count, int size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor<float>> out;
  for (int i = 0; i < count; ++i) {
    Tensor<float> t({static_cast<std::size_t>(size), static_cast<std::size_t>(size)});
    const double cx = rng.uniform(0.3, 0.7) * size;
    const double cy = rng.uniform(0.3, 0.7) * size;
    const double rad = rng.uniform(0.2, 0.35) * size;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double d2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (rad * rad);
        t[static_cast<std::size_t>(y) * size + x] =
            d2 <= 1.0 ? static_cast<float>(0.7 * (1.0 - 0.5 * d2)) : 0.05f;
      }
    out.push_back(std::move(t));
  }
  return out;
}

// texture-vs-smooth labeled squares, the classifier's learnable toy task
std::vector<LabeledSlice> toy_labeled(int count, int size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledSlice> out;
  for (int i = 0; i < count; ++i) {
    LabeledSlice d;
    d.label = i % 2;
    d.patient_id = "p" + std::to_string(i);
    d.image = Tensor<float>({static_cast<std::size_t>(size), static_cast<std::size_t>(size)});
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double v = 0.35 + 0.02 * rng.normal();
        if (x > size / 4 && x < 3 * size / 4 && y > size / 4 && y < 3 * size / 4) {
          if (d.label == 1)
            v = ((x / 2 + y / 2) % 2 == 0) ? 0.75 : 0.35;
          else
            v = 0.55;
        }
        d.image[static_cast<std::size_t>(y) * size + x] =
            static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

TEST_CASE("gaussian noise: sigma 0 identity, clamped range, empirical std") {
  Rng rng(1);
  Tensor<float> batch({100, 100});
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = 0.5f;
  const auto same = add_gaussian_noise(batch, 0.0, rng);
  for (std::size_t i = 0; i < batch.size(); ++i) REQUIRE(same[i] == batch[i]);

  // mean 0.5 keeps clamping negligible at sigma 0.05
  Tensor<float> big({1000, 1000});
  big.fill(0.5f);
  const auto noisy = add_gaussian_noise(big, 0.05, rng);
  double mean = 0.0;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    REQUIRE(noisy[i] >= 0.0f);
    REQUIRE(noisy[i] <= 1.0f);
    mean += noisy[i] - big[i];
  }
  mean /= static_cast<double>(noisy.size());
  double var = 0.0;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    const double d = (noisy[i] - big[i]) - mean;
    var += d * d;
  }
  const double std_dev = std::sqrt(var / static_cast<double>(noisy.size()));
  REQUIRE(std_dev == Catch::Approx(0.05).epsilon(0.02));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  std::vector<Parameter<float>> params(1);
  params[0].name = "w";
  params[0].value = Tensor<float>::full({4}, 2.5f);
  params[0].grad = Tensor<float>({4});
  Adam<float> opt(0.1);
  opt.step(params);
  for (std::size_t i = 0; i < 4; ++i) REQUIRE(params[0].value[i] == 2.5f);
}

TEST_CASE("adam: first bias-corrected step moves by about -lr") {
  std::vector<Parameter<float>> params(1);
  params[0].name = "w";
  params[0].value = Tensor<float>::full({1}, 1.0f);
  params[0].grad = Tensor<float>::full({1}, 1.0f);
  Adam<float> opt(0.1);
  opt.step(params);
  REQUIRE(params[0].value[0] == Catch::Approx(0.9).margin(1e-6));
}

TEST_CASE("adam: converges on a quadratic bowl within 500 steps") {
  std::vector<Parameter<float>> params(1);
  params[0].name = "x";
  params[0].value = Tensor<float>::full({1}, 5.0f);
  params[0].grad = Tensor<float>({1});
  Adam<float> opt(0.05);
  for (int i = 0; i < 500; ++i) {
    params[0].grad[0] = 2.0f * (params[0].value[0] - 3.0f);
    opt.step(params);
  }
  REQUIRE(params[0].value[0] == Catch::Approx(3.0).margin(1e-2));
}

TEST_CASE("adam: non-finite gradient aborts naming the parameter") {
  std::vector<Parameter<float>> params(1);
  params[0].name = "dense1.weight";
  params[0].value = Tensor<float>::full({1}, 1.0f);
  params[0].grad = Tensor<float>::full({1}, std::numeric_limits<float>::quiet_NaN());
  Adam<float> opt(0.1);
  REQUIRE_THROWS_WITH(opt.step(params), Catch::Matchers::ContainsSubstring("dense1.weight"));
}

TEST_CASE("kfold: 10 patients with k=10 validates one patient per fold") {
  DatasetManifest m;
  for (int i = 0; i < 10; ++i)
    m.entries.push_back({"p" + std::to_string(i), Modality::FLAIR, "x", 1});
  const FoldPlan plan = kfold_split(m, 10, 4);
  for (int f = 0; f < 10; ++f) {
    REQUIRE(plan.val_patients[f].size() == 1);
    REQUIRE(plan.train_patients[f].size() == 9);
  }
}

TEST_CASE("kfold: folds are disjoint and cover all patients") {
  Rng rng(9);
  for (const int n : {7, 23, 64}) {
    for (const int k : {2, 5, 7}) {
      DatasetManifest m;
      for (int i = 0; i < n; ++i)
        m.entries.push_back({"p" + std::to_string(i), Modality::T1w, "x", 0});
      const FoldPlan plan = kfold_split(m, k, rng.next_u64());
      std::set<std::string> seen;
      for (int f = 0; f < k; ++f) {
        for (const auto& p : plan.val_patients[f]) REQUIRE(seen.insert(p).second);
        std::set<std::string> train(plan.train_patients[f].begin(),
                                    plan.train_patients[f].end());
        for (const auto& p : plan.val_patients[f]) REQUIRE_FALSE(train.count(p));
        REQUIRE(plan.train_patients[f].size() + plan.val_patients[f].size() ==
                static_cast<std::size_t>(n));
      }
      REQUIRE(seen.size() == static_cast<std::size_t>(n));
    }
  }
}

TEST_CASE("kfold: 585 patients into 10 folds gives sizes 58 and 59") {
  DatasetManifest m;
  for (int i = 0; i < 585; ++i)
    m.entries.push_back({"p" + std::to_string(i), Modality::T2w, "x", 1});
  const FoldPlan plan = kfold_split(m, 10, 11);
  int n58 = 0, n59 = 0;
  for (int f = 0; f < 10; ++f) {
    REQUIRE((plan.val_patients[f].size() == 58 || plan.val_patients[f].size() == 59));
    plan.val_patients[f].size() == 58 ? ++n58 : ++n59;
  }
  REQUIRE(n58 == 5);
  REQUIRE(n59 == 5);
  REQUIRE_THROWS_AS(kfold_split(m, 586, 1), data_error);
}

TEST_CASE("autoencoder: loss finite per epoch and improves on a tiny overfit set") {
  TrainConfig cfg;
  cfg.input_size = 32;
  cfg.epochs = 25;
  cfg.batch_size = 4;
  cfg.seed = 5;
  auto model = build_camp1<float>(cfg.seed, cfg.build_options());
  const auto slices = toy_slices(8, 32, 21);
  const auto outcome = train_autoencoder(model, slices, {}, cfg);
  REQUIRE(outcome.log.size() == 25);
  for (const auto& e : outcome.log) {
    REQUIRE(std::isfinite(*e.loss));
    REQUIRE(std::isfinite(*e.rmse));
  }
  REQUIRE(*outcome.log.back().loss < *outcome.log.front().loss);
  REQUIRE(outcome.final_train_rmse < *outcome.log.front().rmse);
}

TEST_CASE("autoencoder: equal seeds give byte-identical checkpoints and logs") {
  TrainConfig cfg;
  cfg.input_size = 32;
  cfg.epochs = 4;
  cfg.batch_size = 4;
  cfg.seed = 42;
  const auto slices = toy_slices(6, 32, 7);

  auto run = [&](const std::string& tag) {
    auto model = build_camp1<float>(cfg.seed, cfg.build_options());
    const auto outcome = train_autoencoder(model, slices, slices, cfg);
    const auto ckpt = temp_dir() / (tag + ".ckpt");
    const auto log = temp_dir() / (tag + ".csv");
    save_checkpoint(model, ckpt.string());
    write_train_log(outcome.log, log.string());
    return std::pair{slurp(ckpt), slurp(log)};
  };
  const auto [c1, l1] = run("r1");
  const auto [c2, l2] = run("r2");
  REQUIRE(c1 == c2);
  REQUIRE(l1 == l2);
  REQUIRE_FALSE(c1.empty());
  // validation rows present alongside train rows
  REQUIRE(l1.find("val") != std::string::npos);
}

TEST_CASE("classifier: learns the texture toy task; beta2 bounded at every step") {
  TrainConfig cfg;
  cfg.input_size = 32;
  cfg.epochs = 100;
  cfg.batch_size = 8;
  cfg.seed = 3;
  cfg.learning_rate = 1e-3;
  auto camp1 = build_camp1<float>(cfg.seed, cfg.build_options());
  auto model = build_camp2<float>(cfg.seed, cfg.build_options());
  transfer_encoder_weights(camp1, model);
  const auto data = toy_labeled(16, 32, 13);
  const auto outcome = train_classifier(model, data, cfg);
  REQUIRE(outcome.steps.size() == 100u * 2u);  // 16 slices / batch 8
  for (const auto& s : outcome.steps) {
    REQUIRE(s.beta2 >= 1.0);
    REQUIRE(s.beta2 <= 5.0);
    REQUIRE(s.sum_kl >= 0.0);
  }
  REQUIRE(outcome.final_train_accuracy > 0.8);
  for (const auto& e : outcome.log) {
    REQUIRE(std::isfinite(*e.loss));
    REQUIRE(e.accuracy.has_value());
    REQUIRE(e.sum_kl.has_value());
    REQUIRE(e.beta2.has_value());
  }
}

TEST_CASE("classifier: freeze_transferred keeps encoder weights bitwise unchanged") {
  TrainConfig cfg;
  cfg.input_size = 32;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 9;
  cfg.freeze_transferred = true;
  auto camp1 = build_camp1<float>(1, cfg.build_options());
  auto model = build_camp2<float>(2, cfg.build_options());
  transfer_encoder_weights(camp1, model);
  const auto before_k = model.param("enc_conv1.kernel").value;
  const auto before_b = model.param("enc_conv2.bias").value;
  const auto dense_before = model.param("dense1.weight").value;
  train_classifier(model, toy_labeled(8, 32, 4), cfg);
  for (std::size_t i = 0; i < before_k.size(); ++i)
    REQUIRE(model.param("enc_conv1.kernel").value[i] == before_k[i]);
  for (std::size_t i = 0; i < before_b.size(); ++i)
    REQUIRE(model.param("enc_conv2.bias").value[i] == before_b[i]);
  bool dense_moved = false;
  for (std::size_t i = 0; i < dense_before.size(); ++i)
    if (model.param("dense1.weight").value[i] != dense_before[i]) dense_moved = true;
  REQUIRE(dense_moved);
}

TEST_CASE("classifier: equal seeds give byte-identical checkpoints (dropout and batchnorm active)") {
  TrainConfig cfg;
  cfg.input_size = 32;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 77;
  const auto data = toy_labeled(8, 32, 6);
  auto run = [&](const std::string& tag) {
    auto camp1 = build_camp1<float>(cfg.seed, cfg.build_options());
    auto model = build_camp2<float>(cfg.seed, cfg.build_options());
    transfer_encoder_weights(camp1, model);
    train_classifier(model, data, cfg);
    const auto ckpt = temp_dir() / (tag + ".ckpt");
    save_checkpoint(model, ckpt.string());
    return slurp(ckpt);
  };
  REQUIRE(run("c1") == run("c2"));
}

TEST_CASE("train log: empty fields for metrics that do not apply") {
  std::vector<EpochLog> log(1);
  log[0].epoch = 1;
  log[0].split = "train";
  log[0].loss = 0.25;
  log[0].rmse = 0.1;
  const auto path = temp_dir() / "fields.csv";
  write_train_log(log, path.string());
  REQUIRE(slurp(path) == "epoch,split,loss,rmse,accuracy,sum_kl,beta2\n1,train,0.25,0.1,,,\n");
}
