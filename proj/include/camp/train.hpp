#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "camp/checkpoint.hpp"
#include "camp/csv.hpp"
#include "camp/errors.hpp"
#include "camp/image.hpp"
#include "camp/losses.hpp"
#include "camp/manifest.hpp"
#include "camp/metrics.hpp"
#include "camp/model.hpp"
#include "camp/nn_ops.hpp"
#include "camp/optimizer.hpp"
#include "camp/rng.hpp"

namespace camp {

enum class PhaseOneLoss { dice, mse };

struct TrainConfig {
  int epochs = 50;
  int batch_size = 8;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double noise_sigma = 0.05;  // input corruption on the [0,1] scale
  int folds = 10;
  PhaseOneLoss loss = PhaseOneLoss::dice;
  SparsityConfig sparsity;
  bool freeze_transferred = false;
  int input_size = 256;
  double lrelu_alpha = 0.01;
  double dropout_rate = 0.25;
  bool dropout_enabled = true;

  void validate() const {
    if (epochs < 1 || batch_size < 1 || folds < 1)
      throw usage_error("train config: counts must be >= 1");
    if (!(learning_rate > 0)) throw usage_error("train config: learning_rate must be positive");
    if (noise_sigma < 0) throw usage_error("train config: noise_sigma must be >= 0");
    sparsity.validate();
  }

  BuildOptions build_options() const {
    BuildOptions o;
    o.input_size = input_size;
    o.lrelu_alpha = lrelu_alpha;
    o.dropout_rate = dropout_rate;
    o.dropout_enabled = dropout_enabled;
    return o;
  }
};

struct EpochLog {
  int epoch = 0;
  std::string split;  // "train" or "val"
  std::optional<double> loss, rmse, accuracy, sum_kl, beta2;
};

inline constexpr const char* kTrainLogHeader = "epoch,split,loss,rmse,accuracy,sum_kl,beta2";

inline void write_train_log(const std::vector<EpochLog>& log, const std::string& path) {
  CsvWriter out(path, kTrainLogHeader);
  auto fmt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& e : log)
    out.row({std::to_string(e.epoch), e.split, fmt(e.loss), fmt(e.rmse), fmt(e.accuracy),
             fmt(e.sum_kl), fmt(e.beta2)});
  out.close();
}

/// [0,255] slice to a [H,W] float tensor on the [0,1] scale.
inline Tensor<float> slice_to_tensor(const GraySlice& s) {
  Tensor<float> t({static_cast<std::size_t>(s.height), static_cast<std::size_t>(s.width)});
  for (std::size_t i = 0; i < s.data.size(); ++i)
    t[i] = static_cast<float>(s.data[i]) * (1.0f / 255.0f);
  return t;
}

/// Adds i.i.d. zero-mean Gaussian noise (std sigma) and clamps to [0,1];
/// denoising targets stay the clean batch.
template <class T>
Tensor<T> add_gaussian_noise(const Tensor<T>& batch, double sigma, Rng& rng) {
  Tensor<T> out(batch.shape());
  if (sigma == 0.0) {
    out = batch;
    return out;
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double v = static_cast<double>(batch[i]) + sigma * rng.normal();
    out[i] = static_cast<T>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

namespace detail {

inline Tensor<float> gather_batch(const std::vector<Tensor<float>>& slices,
                                  const std::vector<std::size_t>& order, std::size_t first,
                                  std::size_t count, int input_size) {
  Tensor<float> batch({count, static_cast<std::size_t>(input_size),
                       static_cast<std::size_t>(input_size), 1});
  const std::size_t plane = static_cast<std::size_t>(input_size) * input_size;
  for (std::size_t b = 0; b < count; ++b) {
    const Tensor<float>& s = slices[order[first + b]];
    if (s.size() != plane)
      throw data_error("training: slice has " + std::to_string(s.size()) +
                       " pixels, expected " + std::to_string(plane));
    std::copy(s.data(), s.data() + plane, batch.data() + b * plane);
  }
  return batch;
}

}  // namespace detail

struct AutoencoderOutcome {
  std::vector<EpochLog> log;
  double final_train_rmse = 0.0;
  int epochs_run = 0;
};

/// Phase-I training: corrupted inputs, clean targets, configured
/// reconstruction loss, per-epoch train (and optional validation) RMSE.
/// Fully deterministic given (model seed, config, data): fixed shuffle
/// order, seeded noise. `stop_rmse`, when positive, ends training early
/// once the epoch's train RMSE falls below it.
inline AutoencoderOutcome train_autoencoder(ModelGraph<float>& model,
                                            const std::vector<Tensor<float>>& train_slices,
                                            const std::vector<Tensor<float>>& val_slices,
                                            const TrainConfig& cfg, double stop_rmse = 0.0) {
  cfg.validate();
  if (model.arch != "camp1") throw usage_error("train_autoencoder: model must be camp1");
  if (train_slices.empty()) throw data_error("train_autoencoder: empty dataset");

  Rng rng(splitmix64(cfg.seed ^ 0x7261696e5f616560ULL));
  Adam<float> opt(cfg.learning_rate);
  AutoencoderOutcome out;

  std::vector<std::size_t> order(train_slices.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0, rmse_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t first = 0; first < order.size();
         first += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count =
          std::min<std::size_t>(cfg.batch_size, order.size() - first);
      const Tensor<float> clean =
          detail::gather_batch(train_slices, order, first, count, cfg.input_size);
      const Tensor<float> noisy = add_gaussian_noise(clean, cfg.noise_sigma, rng);

      Graph<float> g;
      auto fr = model.forward(g, noisy, Mode::train, &rng);
      const int loss_node = cfg.loss == PhaseOneLoss::dice ? dice_loss(g, fr.output, clean)
                                                           : mse_loss(g, fr.output, clean);
      const double loss = g.value(loss_node)[0];
      if (!std::isfinite(loss)) throw numeric_error("train_autoencoder: non-finite loss");
      g.backward(loss_node);
      model.collect_gradients(g, fr);
      opt.step(model.params);

      loss_sum += loss * static_cast<double>(count);
      rmse_sum += rmse(g.value(fr.output), clean) * static_cast<double>(count);
      seen += count;
    }
    EpochLog tl;
    tl.epoch = epoch;
    tl.split = "train";
    tl.loss = loss_sum / static_cast<double>(seen);
    tl.rmse = rmse_sum / static_cast<double>(seen);
    out.log.push_back(tl);
    out.final_train_rmse = *tl.rmse;
    out.epochs_run = epoch;

    if (!val_slices.empty()) {
      double vloss = 0.0, vrmse = 0.0;
      std::vector<std::size_t> vorder(val_slices.size());
      for (std::size_t i = 0; i < vorder.size(); ++i) vorder[i] = i;
      for (std::size_t first = 0; first < vorder.size();
           first += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t count =
            std::min<std::size_t>(cfg.batch_size, vorder.size() - first);
        const Tensor<float> clean =
            detail::gather_batch(val_slices, vorder, first, count, cfg.input_size);
        Graph<float> g;
        auto fr = model.forward(g, clean, Mode::infer);
        const int loss_node = cfg.loss == PhaseOneLoss::dice ? dice_loss(g, fr.output, clean)
                                                             : mse_loss(g, fr.output, clean);
        vloss += g.value(loss_node)[0] * static_cast<double>(count);
        vrmse += rmse(g.value(fr.output), clean) * static_cast<double>(count);
      }
      EpochLog vl;
      vl.epoch = epoch;
      vl.split = "val";
      vl.loss = vloss / static_cast<double>(val_slices.size());
      vl.rmse = vrmse / static_cast<double>(val_slices.size());
      out.log.push_back(vl);
    }

    if (stop_rmse > 0.0 && out.final_train_rmse < stop_rmse) break;
  }
  return out;
}

struct LabeledSlice {
  Tensor<float> image;  // [H,W] on the [0,1] scale
  int label = 0;
  std::string patient_id;
  Modality modality = Modality::FLAIR;
  std::string path;
};

struct StepStats {
  double sum_kl = 0.0;
  double beta2 = 0.0;
};

/// Re-estimates batch-norm running statistics from the dropout-free
/// activation distribution. Training feeds the normalization layers
/// dropout-inflated variances (dropout sits between each pooling stage and
/// the next normalization), so the momentum-averaged statistics would
/// otherwise mismatch what inference sees and shift every score toward a
/// constant. One deterministic pass over the training set replaces them
/// with exact dataset moments.
inline void refresh_batchnorm_stats(ModelGraph<float>& model,
                                    const std::vector<Tensor<float>>& images, int batch_size) {
  std::vector<std::pair<int, int>> bn_layers;  // (bn layer index, input tap layer index)
  for (std::size_t i = 0; i < model.layers.size(); ++i)
    if (model.layers[i].kind == LayerKind::batchnorm)
      bn_layers.push_back({static_cast<int>(i), static_cast<int>(i) - 1});
  if (bn_layers.empty() || images.empty()) return;

  const bool had_dropout = model.dropout_enabled;
  model.dropout_enabled = false;
  std::map<int, std::vector<double>> sums, sq_sums;
  std::map<int, std::size_t> counts;
  std::vector<std::size_t> order(images.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng unused_rng(0);
  for (std::size_t first = 0; first < order.size();
       first += static_cast<std::size_t>(batch_size)) {
    const std::size_t count = std::min<std::size_t>(batch_size, order.size() - first);
    const Tensor<float> batch =
        detail::gather_batch(images, order, first, count, model.input_size);
    Graph<float> g;
    auto fr = model.forward(g, batch, Mode::train, &unused_rng);
    for (const auto& [bn, input_layer] : bn_layers) {
      const Tensor<float>& act = g.value(fr.taps.at(model.layers[input_layer].name));
      const int C = static_cast<int>(act.dim(3));
      auto& s = sums[bn];
      auto& q = sq_sums[bn];
      if (s.empty()) {
        s.assign(C, 0.0);
        q.assign(C, 0.0);
      }
      const std::size_t M = act.size() / C;
      for (std::size_t m = 0; m < M; ++m)
        for (int c = 0; c < C; ++c) {
          const double v = act[m * C + c];
          s[c] += v;
          q[c] += v * v;
        }
      counts[bn] += M;
    }
  }
  for (const auto& [bn, input_layer] : bn_layers) {
    (void)input_layer;
    const auto& idx = model.layers[bn].param_indices;
    Tensor<float>& rm = model.params[idx[2]].value;
    Tensor<float>& rv = model.params[idx[3]].value;
    const double n = static_cast<double>(counts[bn]);
    for (std::size_t c = 0; c < rm.size(); ++c) {
      const double mean = sums[bn][c] / n;
      rm[c] = static_cast<float>(mean);
      rv[c] = static_cast<float>(std::max(sq_sums[bn][c] / n - mean * mean, 0.0));
    }
  }
  model.dropout_enabled = had_dropout;
}

/// Infer-mode probability for each slice.
inline std::vector<double> score_slices(ModelGraph<float>& model,
                                        const std::vector<LabeledSlice>& data,
                                        int batch_size = 16) {
  std::vector<Tensor<float>> images;
  images.reserve(data.size());
  for (const auto& d : data) images.push_back(d.image);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> scores;
  scores.reserve(data.size());
  for (std::size_t first = 0; first < order.size();
       first += static_cast<std::size_t>(batch_size)) {
    const std::size_t count = std::min<std::size_t>(batch_size, order.size() - first);
    const Tensor<float> batch =
        detail::gather_batch(images, order, first, count, model.input_size);
    Graph<float> g;
    auto fr = model.forward(g, batch, Mode::infer);
    for (std::size_t b = 0; b < count; ++b)
      scores.push_back(static_cast<double>(g.value(fr.output)[b]));
  }
  return scores;
}

struct ClassifierOutcome {
  std::vector<EpochLog> log;
  std::vector<StepStats> steps;
  double final_train_accuracy = 0.0;  // infer-mode pass over the training set
};

/// Phase-II training: binary cross-entropy plus the adaptive sparse penalty
/// on the Dense(64) sigmoid activations. The model must already carry the
/// transferred encoder weights; with freeze_transferred the four encoder
/// tensors are excluded from optimization.
inline ClassifierOutcome train_classifier(ModelGraph<float>& model,
                                          const std::vector<LabeledSlice>& data,
                                          const TrainConfig& cfg) {
  cfg.validate();
  if (model.arch != "camp2") throw usage_error("train_classifier: model must be camp2");
  if (data.empty()) throw data_error("train_classifier: empty dataset");

  if (cfg.freeze_transferred)
    for (const char* name : kTransferredParams) model.param(name).trainable = false;

  Rng rng(splitmix64(cfg.seed ^ 0x636c665f74726169ULL));
  Adam<float> opt(cfg.learning_rate);
  ClassifierOutcome out;

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<Tensor<float>> images;
  images.reserve(data.size());
  for (const auto& d : data) images.push_back(d.image);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0, kl_sum = 0.0, beta_sum = 0.0;
    std::size_t correct = 0, seen = 0, batches = 0;
    for (std::size_t first = 0; first < order.size();
         first += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count =
          std::min<std::size_t>(cfg.batch_size, order.size() - first);
      const Tensor<float> batch =
          detail::gather_batch(images, order, first, count, cfg.input_size);
      std::vector<int> labels(count);
      for (std::size_t b = 0; b < count; ++b) labels[b] = data[order[first + b]].label;

      Graph<float> g;
      auto fr = model.forward(g, batch, Mode::train, &rng);
      RegularizerOutput diag;
      const int reg = adaptive_sparse_regularizer(g, fr.taps.at("dense1"), cfg.sparsity, &diag);
      const int loss_node = add(g, bce_loss(g, fr.output, labels), reg);
      const double loss = g.value(loss_node)[0];
      if (!std::isfinite(loss)) throw numeric_error("train_classifier: non-finite loss");
      g.backward(loss_node);
      model.collect_gradients(g, fr);
      opt.step(model.params);

      for (std::size_t b = 0; b < count; ++b) {
        const bool pred = g.value(fr.output)[b] >= 0.5f;
        if (pred == (labels[b] == 1)) ++correct;
      }
      out.steps.push_back({diag.sum_kl, diag.beta2});
      loss_sum += loss * static_cast<double>(count);
      kl_sum += diag.sum_kl;
      beta_sum += diag.beta2;
      seen += count;
      ++batches;
    }
    EpochLog tl;
    tl.epoch = epoch;
    tl.split = "train";
    tl.loss = loss_sum / static_cast<double>(seen);
    tl.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    tl.sum_kl = kl_sum / static_cast<double>(batches);
    tl.beta2 = beta_sum / static_cast<double>(batches);
    out.log.push_back(tl);
  }
  refresh_batchnorm_stats(model, images, cfg.batch_size);
  {
    // deterministic end-of-training accuracy, dropout off
    const std::vector<double> scores = score_slices(model, data);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
      if ((scores[i] >= 0.5) == (data[i].label == 1)) ++correct;
    out.final_train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  }
  return out;
}

struct FoldPlan {
  std::vector<std::vector<std::string>> train_patients;
  std::vector<std::vector<std::string>> val_patients;
};

/// Patient-level k-fold split: patients shuffled by seed, dealt round-robin.
inline FoldPlan kfold_split(const DatasetManifest& manifest, int k, std::uint64_t seed) {
  std::vector<std::string> patients = manifest.patients();
  if (k < 1 || static_cast<std::size_t>(k) > patients.size())
    throw data_error("kfold_split: k=" + std::to_string(k) + " with " +
                     std::to_string(patients.size()) + " patients");
  Rng rng(splitmix64(seed ^ 0x6b666f6c645f7370ULL));
  rng.shuffle(patients.begin(), patients.end());
  FoldPlan plan;
  plan.train_patients.resize(k);
  plan.val_patients.resize(k);
  for (std::size_t i = 0; i < patients.size(); ++i)
    plan.val_patients[i % k].push_back(patients[i]);
  for (int f = 0; f < k; ++f) {
    std::set<std::string> val(plan.val_patients[f].begin(), plan.val_patients[f].end());
    for (const auto& p : patients)
      if (!val.count(p)) plan.train_patients[f].push_back(p);
  }
  return plan;
}

struct CrossValidationOutcome {
  std::vector<ClassifierOutcome> folds;
  std::map<std::string, double> patient_scores;  // pooled validation scores
  std::map<std::string, int> patient_labels;
  double mean_train_accuracy = 0.0;
  double heldout_patient_accuracy = 0.0;
};

/// Runs patient-level k-fold cross-validation of the classifier. Each fold
/// builds a fresh camp2 from a fold-derived seed, transfers the encoder from
/// `camp1`, trains on the fold's training patients and scores its validation
/// patients; validation scores are pooled across folds and aggregated per
/// patient by the mean rule.
inline CrossValidationOutcome cross_validate_classifier(const std::vector<LabeledSlice>& data,
                                                        const ModelGraph<float>& camp1,
                                                        const TrainConfig& cfg) {
  cfg.validate();
  DatasetManifest pseudo;
  for (const auto& d : data) {
    ManifestEntry e;
    e.patient_id = d.patient_id;
    e.modality = d.modality;
    e.slice_path = d.path.empty() ? d.patient_id + "/" + std::to_string(pseudo.entries.size())
                                  : d.path;
    e.label = d.label;
    pseudo.entries.push_back(std::move(e));
  }
  const FoldPlan plan = kfold_split(pseudo, cfg.folds, cfg.seed);

  CrossValidationOutcome out;
  std::map<std::string, std::vector<double>> pooled;
  for (int f = 0; f < cfg.folds; ++f) {
    std::set<std::string> val(plan.val_patients[f].begin(), plan.val_patients[f].end());
    std::vector<LabeledSlice> train_set, val_set;
    for (const auto& d : data) (val.count(d.patient_id) ? val_set : train_set).push_back(d);
    // leakage guard: no validation patient may appear in the training stream
    for (const auto& d : train_set)
      if (val.count(d.patient_id))
        throw numeric_error("cross_validate: patient leakage in fold " + std::to_string(f));

    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = splitmix64(cfg.seed + 0x666f6c64ULL * (f + 1));
    auto model = build_camp2<float>(fold_cfg.seed, cfg.build_options());
    transfer_encoder_weights(camp1, model);
    out.folds.push_back(train_classifier(model, train_set, fold_cfg));
    out.mean_train_accuracy += out.folds.back().final_train_accuracy;

    const std::vector<double> scores = score_slices(model, val_set);
    for (std::size_t i = 0; i < val_set.size(); ++i) {
      pooled[val_set[i].patient_id].push_back(scores[i]);
      out.patient_labels[val_set[i].patient_id] = val_set[i].label;
    }
  }
  out.mean_train_accuracy /= static_cast<double>(cfg.folds);
  out.patient_scores = aggregate_patient(pooled);
  long long correct = 0;
  for (const auto& [patient, score] : out.patient_scores)
    if ((score >= 0.5) == (out.patient_labels[patient] == 1)) ++correct;
  out.heldout_patient_accuracy =
      static_cast<double>(correct) / static_cast<double>(out.patient_scores.size());
  return out;
}

}  // namespace camp
