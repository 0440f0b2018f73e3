// camp — two-phase MRI pipeline: slice quality gating and enhancement,
// convolutional-autoencoder feature learning, and MGMT methylation
// classification with an adaptive KL-sparsity penalty.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "camp/activation_maps.hpp"
#include "camp/checkpoint.hpp"
#include "camp/csv.hpp"
#include "camp/errors.hpp"
#include "camp/gradcheck_suite.hpp"
#include "camp/image.hpp"
#include "camp/manifest.hpp"
#include "camp/metrics.hpp"
#include "camp/model.hpp"
#include "camp/preprocess.hpp"
#include "camp/synth.hpp"
#include "camp/train.hpp"
#include "camp/version.hpp"

namespace fs = std::filesystem;
using namespace camp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Every run writes its fully resolved configuration next to its outputs;
// re-running `camp <subcommand> --config <out>/run_manifest.txt` reproduces
// the outputs byte for byte.
void write_run_manifest(const std::string& out_dir, const std::string& subcommand,
                        const KeyValues& kv) {
  fs::create_directories(out_dir);
  const auto path = fs::path(out_dir) / "run_manifest.txt";
  std::ofstream out(path);
  if (!out) throw data_error(path.string() + ": cannot write run manifest");
  out << "subcommand=" << subcommand << "\n";
  out << "tool-version=" << kVersion << "\n";
  for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
  out.close();
  if (!out) throw data_error(path.string() + ": I/O failure");
}

std::string abs_path(const std::string& p) { return fs::absolute(p).string(); }

// Flat key=value config support. The file's keys mirror the subcommand's
// long flags one-to-one; values given as flags override the file (the file's
// arguments are injected first and every option takes the last value).
// Unknown keys are errors. A run_manifest.txt is itself a valid config.
std::vector<std::string> config_file_args(const CLI::App* sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error(path + ": cannot open config file");
  std::vector<std::string> args;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw usage_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = line.substr(first, eq - first);
    const std::string value = line.substr(eq + 1);
    if (key == "tool-version") continue;  // informational stamp
    if (key == "subcommand") {
      if (value != sub->get_name())
        throw usage_error(path + ": config was written by subcommand \"" + value +
                          "\", not \"" + sub->get_name() + "\"");
      continue;
    }
    if (key == "config")
      throw usage_error(path + ":" + std::to_string(lineno) + ": config files cannot nest");
    const CLI::App* s = sub;
    if (s->get_option_no_throw("--" + key) == nullptr)
      throw usage_error(path + ":" + std::to_string(lineno) + ": unknown key \"" + key + "\"");
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

// Rewrites argv so that `<sub> ... --config FILE ...` becomes
// `<sub> <file args...> <remaining args...>`.
std::vector<std::string> expand_config(const CLI::App& app, int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty()) return args;
  const CLI::App* sub = nullptr;
  for (const auto* s : app.get_subcommands(nullptr))
    if (s->get_name() == args[0]) sub = s;
  if (sub == nullptr) return args;

  std::string config_path;
  std::vector<std::string> rest{args[0]};
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw usage_error("--config needs a file argument");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config_path.empty()) return args;
  const auto injected = config_file_args(sub, config_path);
  std::vector<std::string> out{rest[0]};
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

void take_last_everywhere(CLI::App* sub) {
  for (CLI::Option* opt : sub->get_options())
    if (opt->get_expected_min() <= 1) opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

std::vector<Modality> parse_modality_selection(const std::string& s) {
  if (s == "all")
    return {Modality::FLAIR, Modality::T1w, Modality::T1wCE, Modality::T2w};
  return {parse_modality(s)};
}

struct LoadedDataset {
  std::vector<LabeledSlice> slices;
  int size = 0;
};

LoadedDataset load_dataset(const DatasetManifest& manifest, const std::vector<Modality>& mods,
                           bool require_labels, int expected_size) {
  LoadedDataset out;
  for (const auto& e : manifest.entries) {
    bool wanted = false;
    for (const Modality m : mods) wanted = wanted || m == e.modality;
    if (!wanted) continue;
    if (require_labels && !e.label)
      throw data_error(e.slice_path + ": unlabeled slice for patient " + e.patient_id);
    GraySlice s = read_slice(e.slice_path);
    if (s.width != s.height)
      throw data_error(e.slice_path + ": non-square slice " + std::to_string(s.width) + "x" +
                       std::to_string(s.height));
    if (expected_size > 0 && s.width != expected_size)
      throw data_error(e.slice_path + ": slice is " + std::to_string(s.width) +
                       ", expected --size " + std::to_string(expected_size) +
                       " (run `camp preprocess` with --target-size first)");
    LabeledSlice d;
    d.image = slice_to_tensor(s);
    d.label = e.label.value_or(0);
    d.patient_id = e.patient_id;
    d.modality = e.modality;
    d.path = e.slice_path;
    out.size = s.width;
    out.slices.push_back(std::move(d));
  }
  if (out.slices.empty()) throw data_error("no slices matched the modality selection");
  return out;
}

std::string fmt_metric(const std::optional<double>& v) {
  return v ? format_double(*v, 6) : std::string("undefined");
}

void write_metrics_files(const std::vector<double>& scores, const std::vector<int>& labels,
                         double threshold, const std::string& stem) {
  const ConfusionMatrix cm = confusion(scores, labels, threshold);
  const MetricsReport r = compute_metrics(scores, labels, threshold);
  {
    CsvWriter csv(stem + ".csv", "metric,value");
    auto put = [&](const char* name, const std::optional<double>& v) {
      csv.row({name, v ? format_double(*v) : ""});
    };
    put("accuracy", r.accuracy);
    put("sensitivity", r.sensitivity);
    put("specificity", r.specificity);
    put("precision", r.precision);
    put("f1", r.f1);
    put("auc", r.auc);
    csv.row({"threshold", format_double(threshold)});
    csv.row({"tp", std::to_string(cm.tp)});
    csv.row({"fp", std::to_string(cm.fp)});
    csv.row({"tn", std::to_string(cm.tn)});
    csv.row({"fn", std::to_string(cm.fn)});
    csv.close();
  }
  {
    std::ofstream txt(stem + ".txt");
    txt << "cases:       " << scores.size() << "\n";
    txt << "threshold:   " << format_double(threshold) << "\n";
    txt << "confusion:   tp=" << cm.tp << " fp=" << cm.fp << " tn=" << cm.tn << " fn=" << cm.fn
        << "\n";
    txt << "accuracy:    " << fmt_metric(r.accuracy) << "\n";
    txt << "sensitivity: " << fmt_metric(r.sensitivity) << "\n";
    txt << "specificity: " << fmt_metric(r.specificity) << "\n";
    txt << "precision:   " << fmt_metric(r.precision) << "\n";
    txt << "f1:          " << fmt_metric(r.f1) << "\n";
    txt << "auc:         " << fmt_metric(r.auc) << "\n";
  }
  const RocCurve roc = roc_auc(scores, labels);
  CsvWriter rc(stem + "_roc.csv", "threshold,fpr,tpr");
  for (const auto& p : roc.points)
    rc.row({std::isinf(p.threshold) ? "inf" : format_double(p.threshold), format_double(p.fpr),
            format_double(p.tpr)});
  rc.close();
}

// ---- subcommand payloads ----

struct SynthArgs {
  std::string out;
  int patients = 8;
  int slices = 4;
  int size = 256;
  std::uint64_t seed = 0;
  std::string rule = "texture";
};

int run_synth(const SynthArgs& a) {
  PhantomSpec spec;
  spec.n_patients = a.patients;
  spec.slices_per_patient = a.slices;
  spec.size = a.size;
  spec.seed = a.seed;
  spec.rule = a.rule == "texture" ? PhantomSpec::LabelRule::texture
                                  : PhantomSpec::LabelRule::intensity;
  const auto manifest = generate_phantoms(spec, a.out);
  write_run_manifest(a.out, "synth",
                     {{"out", abs_path(a.out)},
                      {"patients", std::to_string(a.patients)},
                      {"slices", std::to_string(a.slices)},
                      {"size", std::to_string(a.size)},
                      {"seed", std::to_string(a.seed)},
                      {"rule", a.rule}});
  std::printf("synth: %d patients x %d slices x 4 modalities at %dx%d -> %s (%zu slices)\n",
              a.patients, a.slices, a.size, a.size, a.out.c_str(), manifest.entries.size());
  return kExitOk;
}

struct PreprocessArgs {
  std::string manifest;
  std::string out;
  double entropy_threshold = 1.3;
  double snr_threshold = 5.0;
  std::vector<int> bg{0, 0, 16, 16};
  int target_size = 256;
};

int run_preprocess(const PreprocessArgs& a) {
  if (a.bg.size() != 4) throw usage_error("--bg expects x,y,w,h");
  PreprocessConfig cfg;
  cfg.entropy_threshold = a.entropy_threshold;
  cfg.snr_threshold = a.snr_threshold;
  cfg.background_region = Rect{a.bg[0], a.bg[1], a.bg[2], a.bg[3]};
  cfg.target_size = a.target_size;

  const DatasetManifest manifest = load_manifest(a.manifest);
  fs::create_directories(fs::path(a.out) / "slices");
  CsvWriter quality((fs::path(a.out) / "quality.csv").string(), kQualityHeader);
  DatasetManifest kept;
  std::map<std::pair<std::string, int>, int> slice_index;
  std::size_t selected = 0;
  for (const auto& e : manifest.entries) {
    const int idx = slice_index[{e.patient_id, static_cast<int>(e.modality)}]++;
    GraySlice s = read_slice(e.slice_path);
    s = resize_bilinear(s, cfg.target_size, cfg.target_size);
    const SliceQuality q = slice_quality(s, cfg);
    quality.row({e.patient_id, modality_name(e.modality), std::to_string(idx),
                 format_double(q.entropy_bits), format_double(q.snr_db),
                 q.selected ? "1" : "0"});
    if (!q.selected) continue;
    ++selected;
    const GraySlice enhanced = histogram_equalize(s);
    char name[160];
    std::snprintf(name, sizeof name, "%s_%s_%03d.pgm", e.patient_id.c_str(),
                  modality_name(e.modality), idx);
    const auto out_path = fs::path(a.out) / "slices" / name;
    write_slice(enhanced, out_path.string());
    ManifestEntry ne = e;
    ne.slice_path = out_path.string();
    kept.entries.push_back(std::move(ne));
  }
  quality.close();
  save_manifest(kept, (fs::path(a.out) / "manifest.csv").string());
  write_run_manifest(a.out, "preprocess",
                     {{"manifest", abs_path(a.manifest)},
                      {"out", abs_path(a.out)},
                      {"entropy-threshold", format_double(a.entropy_threshold)},
                      {"snr-threshold", format_double(a.snr_threshold)},
                      {"bg",
                       std::to_string(a.bg[0]) + "," + std::to_string(a.bg[1]) + "," +
                           std::to_string(a.bg[2]) + "," + std::to_string(a.bg[3])},
                      {"target-size", std::to_string(a.target_size)}});
  std::printf("preprocess: %zu/%zu slices retained -> %s\n", selected, manifest.entries.size(),
              a.out.c_str());
  return kExitOk;
}

struct TrainCommonArgs {
  std::string manifest;
  std::string out;
  int epochs = 50;
  int batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int size = 256;
  double alpha = 0.01;
  std::string modality = "all";
  bool pooled = false;
};

TrainConfig to_config(const TrainCommonArgs& a) {
  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.learning_rate = a.lr;
  cfg.seed = a.seed;
  cfg.input_size = a.size;
  cfg.lrelu_alpha = a.alpha;
  return cfg;
}

KeyValues common_kv(const TrainCommonArgs& a) {
  return {{"manifest", abs_path(a.manifest)}, {"out", abs_path(a.out)},
          {"epochs", std::to_string(a.epochs)}, {"batch-size", std::to_string(a.batch_size)},
          {"lr", format_double(a.lr)},          {"seed", std::to_string(a.seed)},
          {"size", std::to_string(a.size)},     {"alpha", format_double(a.alpha)},
          {"modality", a.modality},             {"pooled", a.pooled ? "true" : "false"}};
}

struct TrainAeArgs : TrainCommonArgs {
  double noise_sigma = 0.05;
  std::string loss = "dice";
  double stop_rmse = 0.0;
};

int run_train_ae(const TrainAeArgs& a) {
  const DatasetManifest manifest = load_manifest(a.manifest);
  TrainConfig cfg = to_config(static_cast<const TrainCommonArgs&>(a));
  cfg.noise_sigma = a.noise_sigma;
  cfg.loss = a.loss == "dice" ? PhaseOneLoss::dice : PhaseOneLoss::mse;
  fs::create_directories(a.out);

  struct Job {
    std::string tag;
    std::vector<Modality> mods;
  };
  std::vector<Job> jobs;
  if (a.pooled)
    jobs.push_back({"pooled", parse_modality_selection("all")});
  else
    for (const Modality m : parse_modality_selection(a.modality))
      jobs.push_back({modality_name(m), {m}});

  for (const auto& job : jobs) {
    const LoadedDataset data = load_dataset(manifest, job.mods, false, cfg.input_size);
    std::vector<Tensor<float>> slices;
    for (const auto& d : data.slices) slices.push_back(d.image);
    auto model = build_camp1<float>(cfg.seed, cfg.build_options());
    const auto outcome = train_autoencoder(model, slices, {}, cfg, a.stop_rmse);
    const auto ckpt = fs::path(a.out) / ("camp1_" + job.tag + ".ckpt");
    const auto log = fs::path(a.out) / ("train_ae_" + job.tag + ".csv");
    save_checkpoint(model, ckpt.string());
    write_train_log(outcome.log, log.string());
    std::printf("train-ae %s: %zu slices, %d epochs, final train rmse %.5f -> %s\n",
                job.tag.c_str(), slices.size(), outcome.epochs_run, outcome.final_train_rmse,
                ckpt.string().c_str());
  }

  KeyValues kv = common_kv(a);
  kv.push_back({"noise-sigma", format_double(a.noise_sigma)});
  kv.push_back({"loss", a.loss});
  kv.push_back({"stop-rmse", format_double(a.stop_rmse)});
  write_run_manifest(a.out, "train-ae", kv);
  return kExitOk;
}

struct TrainClfArgs : TrainCommonArgs {
  std::string camp1;
  double sparsity_p = 0.2;
  double beta_min = 1.0;
  double beta_max = 5.0;
  double dropout = 0.25;
  bool no_dropout = false;
  bool freeze_transferred = false;
};

int run_train_clf(const TrainClfArgs& a) {
  const DatasetManifest manifest = load_manifest(a.manifest);
  TrainConfig cfg = to_config(static_cast<const TrainCommonArgs&>(a));
  cfg.sparsity.p = a.sparsity_p;
  cfg.sparsity.beta_min = a.beta_min;
  cfg.sparsity.beta_max = a.beta_max;
  cfg.dropout_rate = a.dropout;
  cfg.dropout_enabled = !a.no_dropout;
  cfg.freeze_transferred = a.freeze_transferred;
  fs::create_directories(a.out);

  struct Job {
    std::string tag;
    std::vector<Modality> mods;
  };
  std::vector<Job> jobs;
  if (a.pooled)
    jobs.push_back({"pooled", parse_modality_selection("all")});
  else
    for (const Modality m : parse_modality_selection(a.modality))
      jobs.push_back({modality_name(m), {m}});

  const auto camp1 = load_checkpoint<float>(a.camp1, "camp1", cfg.build_options());
  if (camp1.input_size != cfg.input_size)
    throw data_error(a.camp1 + ": checkpoint is for input size " +
                     std::to_string(camp1.input_size) + ", --size is " +
                     std::to_string(cfg.input_size));

  for (const auto& job : jobs) {
    const LoadedDataset data = load_dataset(manifest, job.mods, true, cfg.input_size);
    auto model = build_camp2<float>(cfg.seed, cfg.build_options());
    transfer_encoder_weights(camp1, model);
    const auto outcome = train_classifier(model, data.slices, cfg);
    const auto ckpt = fs::path(a.out) / ("camp2_" + job.tag + ".ckpt");
    const auto log = fs::path(a.out) / ("train_clf_" + job.tag + ".csv");
    save_checkpoint(model, ckpt.string());
    write_train_log(outcome.log, log.string());
    std::printf("train-clf %s: %zu slices, %d epochs, train accuracy %.4f -> %s\n",
                job.tag.c_str(), data.slices.size(), cfg.epochs, outcome.final_train_accuracy,
                ckpt.string().c_str());
  }

  KeyValues kv = common_kv(a);
  kv.push_back({"camp1", abs_path(a.camp1)});
  kv.push_back({"sparsity-p", format_double(a.sparsity_p)});
  kv.push_back({"beta-min", format_double(a.beta_min)});
  kv.push_back({"beta-max", format_double(a.beta_max)});
  kv.push_back({"dropout", format_double(a.dropout)});
  kv.push_back({"no-dropout", a.no_dropout ? "true" : "false"});
  kv.push_back({"freeze-transferred", a.freeze_transferred ? "true" : "false"});
  write_run_manifest(a.out, "train-clf", kv);
  return kExitOk;
}

struct PredictArgs {
  std::string manifest;
  std::string checkpoint;
  std::string out;
  std::string modality = "all";
  std::string aggregate = "mean";
};

int run_predict(const PredictArgs& a) {
  const DatasetManifest manifest = load_manifest(a.manifest);
  auto model = load_checkpoint<float>(a.checkpoint, "camp2");
  const LoadedDataset data =
      load_dataset(manifest, parse_modality_selection(a.modality), false, model.input_size);
  const std::vector<double> scores = score_slices(model, data.slices);

  fs::create_directories(a.out);
  CsvWriter sw((fs::path(a.out) / "slice_scores.csv").string(),
               "patient_id,modality,slice_path,score,label");
  std::map<std::string, std::vector<double>> grouped;
  std::map<std::string, std::optional<int>> labels;
  for (std::size_t i = 0; i < data.slices.size(); ++i) {
    const auto& d = data.slices[i];
    const auto lbl = manifest.patient_label(d.patient_id);
    sw.row({d.patient_id, modality_name(d.modality), d.path, format_double(scores[i]),
            lbl ? std::to_string(*lbl) : ""});
    grouped[d.patient_id].push_back(scores[i]);
    labels[d.patient_id] = lbl;
  }
  sw.close();

  const auto agg =
      aggregate_patient(grouped, a.aggregate == "max" ? Aggregate::max : Aggregate::mean);
  CsvWriter pw((fs::path(a.out) / "patient_scores.csv").string(), "patient_id,score,label");
  for (const auto& [patient, score] : agg)
    pw.row({patient, format_double(score),
            labels[patient] ? std::to_string(*labels[patient]) : ""});
  pw.close();

  write_run_manifest(a.out, "predict",
                     {{"manifest", abs_path(a.manifest)},
                      {"checkpoint", abs_path(a.checkpoint)},
                      {"out", abs_path(a.out)},
                      {"modality", a.modality},
                      {"aggregate", a.aggregate}});
  std::printf("predict: %zu slices, %zu patients -> %s\n", data.slices.size(), agg.size(),
              a.out.c_str());
  return kExitOk;
}

struct EvaluateArgs {
  std::string predictions;
  std::string out;
  double threshold = 0.5;
  std::string aggregate = "mean";
};

int run_evaluate(const EvaluateArgs& a) {
  const auto rows = read_csv(a.predictions, "patient_id,modality,slice_path,score,label");
  std::vector<double> slice_scores;
  std::vector<int> slice_labels;
  std::map<std::string, std::vector<double>> grouped;
  std::map<std::string, int> patient_labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 5)
      throw data_error(a.predictions + ":" + std::to_string(i + 2) + ": expected 5 fields");
    if (f[4].empty())
      throw data_error(a.predictions + ":" + std::to_string(i + 2) +
                       ": unlabeled row; evaluation needs labels");
    const double score = std::stod(f[3]);
    const int label = std::stoi(f[4]);
    slice_scores.push_back(score);
    slice_labels.push_back(label);
    grouped[f[0]].push_back(score);
    patient_labels[f[0]] = label;
  }
  if (slice_scores.empty()) throw data_error(a.predictions + ": no rows");

  fs::create_directories(a.out);
  write_metrics_files(slice_scores, slice_labels, a.threshold,
                      (fs::path(a.out) / "metrics_slice").string());

  const auto agg =
      aggregate_patient(grouped, a.aggregate == "max" ? Aggregate::max : Aggregate::mean);
  std::vector<double> pscores;
  std::vector<int> plabels;
  for (const auto& [patient, score] : agg) {
    pscores.push_back(score);
    plabels.push_back(patient_labels[patient]);
  }
  write_metrics_files(pscores, plabels, a.threshold,
                      (fs::path(a.out) / "metrics_patient").string());

  write_run_manifest(a.out, "evaluate",
                     {{"predictions", abs_path(a.predictions)},
                      {"out", abs_path(a.out)},
                      {"threshold", format_double(a.threshold)},
                      {"aggregate", a.aggregate}});
  const auto acc = compute_metrics(pscores, plabels, a.threshold).accuracy;
  std::printf("evaluate: %zu slices, %zu patients, patient accuracy %s -> %s\n",
              slice_scores.size(), pscores.size(), fmt_metric(acc).c_str(), a.out.c_str());
  return kExitOk;
}

struct ActivationsArgs {
  std::string checkpoint;
  std::string slice;
  std::string layer;
  std::string out;
};

int run_activations(const ActivationsArgs& a) {
  auto model = load_checkpoint<float>(a.checkpoint);
  const GraySlice s = read_slice(a.slice);
  const auto files = export_activation_maps(model, s, a.layer, a.out);
  write_run_manifest(a.out, "activations",
                     {{"checkpoint", abs_path(a.checkpoint)},
                      {"slice", abs_path(a.slice)},
                      {"layer", a.layer},
                      {"out", abs_path(a.out)}});
  std::printf("activations: %zu channel maps of layer %s -> %s\n", files.size(),
              a.layer.c_str(), a.out.c_str());
  return kExitOk;
}

struct GradcheckArgs {
  int scale = 32;
  double tolerance = 1e-4;
  std::uint64_t seed = 1234;
};

int run_gradcheck(const GradcheckArgs& a) {
  if (a.scale % 8 != 0 || a.scale < 8)
    throw usage_error("--scale must be a positive multiple of 8");
  const auto rows = run_gradcheck_suite(a.scale, a.tolerance, a.seed);
  bool all_pass = true;
  std::printf("%-28s %12s %8s  %s\n", "op", "max_rel_err", "checks", "result");
  for (const auto& r : rows) {
    std::printf("%-28s %12.3e %8zu  %s\n", r.name.c_str(), r.max_rel_err, r.checks,
                r.pass ? "PASS" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  if (!all_pass) {
    std::fprintf(stderr, "gradcheck: FAIL (tolerance %.1e)\n", a.tolerance);
    return kExitNumeric;
  }
  std::printf("gradcheck: all %zu rows PASS (tolerance %.1e)\n", rows.size(), a.tolerance);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"camp: MRI slice gating, autoencoder feature learning and MGMT methylation "
               "classification with an adaptive sparse penalty"};
  app.require_subcommand(0, 1);
  app.set_version_flag("--version", std::string("camp ") + kVersion);

  // synth
  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "Generate a deterministic phantom dataset");
  synth->add_option("--out", synth_args.out, "Output directory")->required();
  synth->add_option("--patients", synth_args.patients, "Number of patients")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth->add_option("--slices", synth_args.slices, "Slices per patient and modality")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth->add_option("--size", synth_args.size, "Slice side in pixels (multiple of 4)")
      ->capture_default_str();
  synth->add_option("--seed", synth_args.seed, "Generator seed")
      ->envname("CAMP_SEED")
      ->capture_default_str();
  synth->add_option("--rule", synth_args.rule, "Label encoding: texture or intensity")
      ->check(CLI::IsMember({"texture", "intensity"}))
      ->capture_default_str();

  // preprocess
  PreprocessArgs pre_args;
  CLI::App* pre = app.add_subcommand(
      "preprocess", "Resize, quality-gate (entropy + SNR) and equalize manifest slices");
  pre->add_option("--manifest", pre_args.manifest, "Input manifest CSV")->required();
  pre->add_option("--out", pre_args.out, "Output directory")->required();
  pre->add_option("--entropy-threshold", pre_args.entropy_threshold,
                  "Keep slices with entropy above this many bits")
      ->capture_default_str();
  pre->add_option("--snr-threshold", pre_args.snr_threshold,
                  "Keep slices with SNR at or above this many dB")
      ->capture_default_str();
  pre->add_option("--bg", pre_args.bg, "Background rectangle x,y,w,h for noise estimation")
      ->delimiter(',')
      ->expected(4)
      ->capture_default_str();
  pre->add_option("--target-size", pre_args.target_size, "Resize slices to this side first")
      ->capture_default_str();

  // train-ae
  TrainAeArgs ae_args;
  CLI::App* ae = app.add_subcommand("train-ae",
                                    "Train the feature-learning autoencoder (denoising)");
  ae->add_option("--manifest", ae_args.manifest, "Input manifest CSV")->required();
  ae->add_option("--out", ae_args.out, "Output directory")->required();
  ae->add_option("--epochs", ae_args.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  ae->add_option("--batch-size", ae_args.batch_size)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ae->add_option("--lr", ae_args.lr, "Adam learning rate")->capture_default_str();
  ae->add_option("--seed", ae_args.seed)->envname("CAMP_SEED")->capture_default_str();
  ae->add_option("--size", ae_args.size, "Model input side; slices must match")
      ->capture_default_str();
  ae->add_option("--alpha", ae_args.alpha, "LeakyReLU slope")->capture_default_str();
  ae->add_option("--modality", ae_args.modality, "FLAIR, T1w, T1wCE, T2w or all")
      ->check(CLI::IsMember({"FLAIR", "T1w", "T1wCE", "T2w", "all"}))
      ->capture_default_str();
  ae->add_flag("--pooled", ae_args.pooled, "Train one model over all modalities");
  ae->add_option("--noise-sigma", ae_args.noise_sigma, "Input corruption std on [0,1]")
      ->capture_default_str();
  ae->add_option("--loss", ae_args.loss, "Reconstruction loss")
      ->check(CLI::IsMember({"dice", "mse"}))
      ->capture_default_str();
  ae->add_option("--stop-rmse", ae_args.stop_rmse,
                 "Stop early once train RMSE falls below this (0 disables)")
      ->capture_default_str();

  // train-clf
  TrainClfArgs clf_args;
  CLI::App* clf = app.add_subcommand(
      "train-clf", "Train the methylation classifier (transfer + BCE + adaptive sparsity)");
  clf->add_option("--manifest", clf_args.manifest, "Labeled manifest CSV")->required();
  clf->add_option("--camp1", clf_args.camp1, "Autoencoder checkpoint to transfer from")
      ->required();
  clf->add_option("--out", clf_args.out, "Output directory")->required();
  clf->add_option("--epochs", clf_args.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  clf->add_option("--batch-size", clf_args.batch_size)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  clf->add_option("--lr", clf_args.lr, "Adam learning rate")->capture_default_str();
  clf->add_option("--seed", clf_args.seed)->envname("CAMP_SEED")->capture_default_str();
  clf->add_option("--size", clf_args.size, "Model input side; slices must match")
      ->capture_default_str();
  clf->add_option("--alpha", clf_args.alpha, "LeakyReLU slope")->capture_default_str();
  clf->add_option("--modality", clf_args.modality, "FLAIR, T1w, T1wCE, T2w or all")
      ->check(CLI::IsMember({"FLAIR", "T1w", "T1wCE", "T2w", "all"}))
      ->capture_default_str();
  clf->add_flag("--pooled", clf_args.pooled, "Train one model over all modalities");
  clf->add_option("--sparsity-p", clf_args.sparsity_p, "Target sparsity rate")
      ->capture_default_str();
  clf->add_option("--beta-min", clf_args.beta_min)->capture_default_str();
  clf->add_option("--beta-max", clf_args.beta_max)->capture_default_str();
  clf->add_option("--dropout", clf_args.dropout, "Dropout rate after each pooling stage")
      ->capture_default_str();
  clf->add_flag("--no-dropout", clf_args.no_dropout, "Strict-table mode without dropout");
  clf->add_flag("--freeze-transferred", clf_args.freeze_transferred,
                "Keep transferred encoder weights fixed");

  // predict
  PredictArgs pred_args;
  CLI::App* pred =
      app.add_subcommand("predict", "Score slices and patients with a trained classifier");
  pred->add_option("--manifest", pred_args.manifest, "Manifest CSV")->required();
  pred->add_option("--checkpoint", pred_args.checkpoint, "camp2 checkpoint")->required();
  pred->add_option("--out", pred_args.out, "Output directory")->required();
  pred->add_option("--modality", pred_args.modality, "FLAIR, T1w, T1wCE, T2w or all")
      ->check(CLI::IsMember({"FLAIR", "T1w", "T1wCE", "T2w", "all"}))
      ->capture_default_str();
  pred->add_option("--aggregate", pred_args.aggregate, "Patient aggregation rule")
      ->check(CLI::IsMember({"mean", "max"}))
      ->capture_default_str();

  // evaluate
  EvaluateArgs eval_args;
  CLI::App* eval =
      app.add_subcommand("evaluate", "Compute metrics and ROC curves from slice scores");
  eval->add_option("--predictions", eval_args.predictions, "slice_scores.csv from predict")
      ->required();
  eval->add_option("--out", eval_args.out, "Output directory")->required();
  eval->add_option("--threshold", eval_args.threshold, "Decision threshold")
      ->capture_default_str();
  eval->add_option("--aggregate", eval_args.aggregate, "Patient aggregation rule")
      ->check(CLI::IsMember({"mean", "max"}))
      ->capture_default_str();

  // activations
  ActivationsArgs act_args;
  CLI::App* act = app.add_subcommand("activations",
                                     "Export per-channel activation maps of a conv layer");
  act->add_option("--checkpoint", act_args.checkpoint, "camp1 or camp2 checkpoint")->required();
  act->add_option("--slice", act_args.slice, "Input P5 slice")->required();
  act->add_option("--layer", act_args.layer, "Conv layer name (e.g. enc_conv1)")->required();
  act->add_option("--out", act_args.out, "Output directory")->required();

  // gradcheck
  GradcheckArgs gc_args;
  CLI::App* gc = app.add_subcommand(
      "gradcheck", "Finite-difference verification of every op and both models");
  gc->add_option("--scale", gc_args.scale, "Model input side for the full-model checks")
      ->capture_default_str();
  gc->add_option("--tolerance", gc_args.tolerance)->capture_default_str();
  gc->add_option("--seed", gc_args.seed)->envname("CAMP_SEED")->capture_default_str();

  for (CLI::App* sub : {synth, pre, ae, clf, pred, eval, act, gc}) {
    // consumed by expand_config before parsing; registered here for --help
    sub->add_option("--config", "Read options from a key=value file (flags override the file)");
    take_last_everywhere(sub);
  }

  try {
    std::vector<std::string> args = expand_config(app, argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const usage_error& e) {
    std::fprintf(stderr, "camp: %s\n", e.what());
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      return run_synth(synth_args);
    }
    if (pre->parsed()) {
      return run_preprocess(pre_args);
    }
    if (ae->parsed()) {
      return run_train_ae(ae_args);
    }
    if (clf->parsed()) {
      return run_train_clf(clf_args);
    }
    if (pred->parsed()) {
      return run_predict(pred_args);
    }
    if (eval->parsed()) {
      return run_evaluate(eval_args);
    }
    if (act->parsed()) {
      return run_activations(act_args);
    }
    if (gc->parsed()) {
      return run_gradcheck(gc_args);
    }
    std::fputs(app.help().c_str(), stdout);
    return kExitUsage;
  } catch (const usage_error& e) {
    std::fprintf(stderr, "camp: %s\n", e.what());
    return kExitUsage;
  } catch (const numeric_error& e) {
    std::fprintf(stderr, "camp: %s\n", e.what());
    return kExitNumeric;
  } catch (const data_error& e) {
    std::fprintf(stderr, "camp: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "camp: %s\n", e.what());
    return kExitData;
  }
}
