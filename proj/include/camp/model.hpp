#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "camp/autodiff.hpp"
#include "camp/errors.hpp"
#include "camp/nn_ops.hpp"
#include "camp/rng.hpp"
#include "camp/tensor.hpp"

namespace camp {

enum class Mode { train, infer };

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  void zero_grad() {
    if (!grad.same_shape(value)) grad = Tensor<T>(value.shape());
    grad.fill(T{});
  }
};

enum class LayerKind {
  input,
  conv,
  conv_transpose,
  maxpool,
  batchnorm,
  dense,
  activation,
  dropout,
  flatten,
  reshape
};

enum class Act { none, leaky_relu, sigmoid };

struct LayerSpec {
  LayerKind kind = LayerKind::input;
  std::string name;
  int kernel = 0;
  int stride = 1;
  int filters = 0;  // conv/conv_transpose output channels
  int units = 0;    // dense
  double rate = 0.0;
  Act act = Act::none;
  std::vector<std::size_t> out_shape;  // per sample, batch dim excluded
  long long param_count = 0;           // declared; includes batchnorm running stats
  std::vector<int> param_indices;      // into ModelGraph::params
};

template <class T>
struct ForwardResult {
  int output = -1;
  std::map<std::string, int> taps;   // layer name -> tape node (post-activation)
  std::vector<int> param_nodes;      // aligned with ModelGraph::params; -1 if not on tape
};

/// One of the two published architectures, realized as an ordered layer list
/// plus the named parameter set. `arch` is "camp1" (autoencoder) or "camp2"
/// (classifier); scaled-down variants keep the layer pattern and change only
/// the input size.
template <class T>
class ModelGraph {
 public:
  std::string arch;
  std::uint64_t build_seed = 0;
  int input_size = 256;
  double lrelu_alpha = 0.01;
  double dropout_rate = 0.25;
  bool dropout_enabled = true;
  std::vector<LayerSpec> layers;
  std::vector<Parameter<T>> params;

  std::string name() const {
    return input_size == 256 ? arch : arch + "@" + std::to_string(input_size);
  }

  Parameter<T>& param(const std::string& pname) {
    for (auto& p : params)
      if (p.name == pname) return p;
    throw numeric_error(arch + ": unknown parameter \"" + pname + "\"");
  }
  const Parameter<T>& param(const std::string& pname) const {
    return const_cast<ModelGraph*>(this)->param(pname);
  }

  long long total_param_count() const {
    long long t = 0;
    for (const auto& l : layers) t += l.param_count;
    return t;
  }

  /// Builds the forward tape for a [N,S,S,1] batch. In train mode dropout
  /// draws masks from `rng` and batch-norm updates its running statistics.
  /// `param_leaves`, when given, supplies pre-created tape leaves to use in
  /// place of this model's parameter values (one per parameter slot, in
  /// order); gradient checking drives the model through this hook.
  ForwardResult<T> forward(Graph<T>& g, const Tensor<T>& input, Mode mode, Rng* rng = nullptr,
                           const std::vector<int>* param_leaves = nullptr) {
    if (input.rank() != 4 || input.dim(3) != 1 ||
        input.dim(1) != static_cast<std::size_t>(input_size) ||
        input.dim(2) != static_cast<std::size_t>(input_size))
      throw numeric_error(arch + ": expected input [N," + std::to_string(input_size) + "," +
                          std::to_string(input_size) + ",1], got " +
                          Tensor<T>::shape_string(input.shape()));
    const bool train = mode == Mode::train;
    if (train && dropout_enabled && has_dropout() && rng == nullptr)
      throw numeric_error(arch + ": train-mode forward with dropout requires an rng");

    if (param_leaves && param_leaves->size() != params.size())
      throw numeric_error(arch + ": param_leaves must supply one node per parameter");

    ForwardResult<T> fr;
    fr.param_nodes.assign(params.size(), -1);
    auto leaf_of = [&](int pi) {
      if (fr.param_nodes[pi] < 0) {
        fr.param_nodes[pi] = param_leaves
                                 ? (*param_leaves)[pi]
                                 : g.leaf(params[pi].value, params[pi].trainable,
                                          params[pi].name.c_str());
        if (!g.value(fr.param_nodes[pi]).same_shape(params[pi].value))
          throw numeric_error(arch + ": substituted leaf shape mismatch for " + params[pi].name);
      }
      return fr.param_nodes[pi];
    };

    int cur = g.leaf(input, false, "input");
    for (const auto& l : layers) {
      switch (l.kind) {
        case LayerKind::input:
          break;
        case LayerKind::conv:
          cur = conv2d(g, cur, leaf_of(l.param_indices[0]), leaf_of(l.param_indices[1]), l.stride,
                       Padding::same);
          cur = apply_act(g, cur, l.act);
          break;
        case LayerKind::conv_transpose:
          cur = conv2d_transpose(g, cur, leaf_of(l.param_indices[0]), leaf_of(l.param_indices[1]),
                                 l.stride);
          cur = apply_act(g, cur, l.act);
          break;
        case LayerKind::maxpool:
          cur = maxpool2d(g, cur);
          break;
        case LayerKind::batchnorm:
          cur = batchnorm2d(g, cur, leaf_of(l.param_indices[0]), leaf_of(l.param_indices[1]),
                            params[l.param_indices[2]].value, params[l.param_indices[3]].value,
                            train);
          break;
        case LayerKind::dense:
          cur = dense(g, cur, leaf_of(l.param_indices[0]), leaf_of(l.param_indices[1]));
          cur = apply_act(g, cur, l.act);
          break;
        case LayerKind::dropout:
          if (dropout_enabled) cur = dropout(g, cur, l.rate, train, *rng);
          break;
        case LayerKind::flatten:
          cur = flatten(g, cur);
          break;
        case LayerKind::reshape: {
          std::vector<std::size_t> s{g.value(cur).dim(0)};
          s.insert(s.end(), l.out_shape.begin(), l.out_shape.end());
          cur = reshape(g, cur, std::move(s));
          break;
        }
        case LayerKind::activation:
          cur = apply_act(g, cur, l.act);
          break;
      }
      check_shape(g, cur, l);
      fr.taps[l.name] = cur;
    }
    fr.output = cur;
    return fr;
  }

  /// Copies tape gradients into the parameter slots after backward().
  void collect_gradients(Graph<T>& g, const ForwardResult<T>& fr) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (fr.param_nodes[i] < 0 || !params[i].trainable) continue;
      params[i].grad = g.grad(fr.param_nodes[i]);
    }
  }

  bool has_dropout() const {
    for (const auto& l : layers)
      if (l.kind == LayerKind::dropout) return true;
    return false;
  }

 private:
  int apply_act(Graph<T>& g, int x, Act a) const {
    switch (a) {
      case Act::none: return x;
      case Act::leaky_relu: return leaky_relu(g, x, static_cast<T>(lrelu_alpha));
      case Act::sigmoid: return sigmoid(g, x);
    }
    return x;
  }

  void check_shape(Graph<T>& g, int node, const LayerSpec& l) const {
    const auto& shape = g.value(node).shape();
    std::vector<std::size_t> got(shape.begin() + 1, shape.end());
    if (got != l.out_shape)
      throw numeric_error(arch + ": layer " + l.name + " produced " +
                          Tensor<T>::shape_string(shape) + ", declared per-sample shape is " +
                          Tensor<T>::shape_string(l.out_shape));
  }
};

struct BuildOptions {
  int input_size = 256;
  double lrelu_alpha = 0.01;
  double dropout_rate = 0.25;
  bool dropout_enabled = true;  // classifier only; adds zero parameters
};

namespace detail {

template <class T>
class ModelBuilder {
 public:
  ModelBuilder(const char* arch, std::uint64_t seed, const BuildOptions& opts)
      : rng_(seed) {
    m_.arch = arch;
    m_.build_seed = seed;
    m_.input_size = opts.input_size;
    m_.lrelu_alpha = opts.lrelu_alpha;
    m_.dropout_rate = opts.dropout_rate;
    m_.dropout_enabled = opts.dropout_enabled;
    h_ = w_ = opts.input_size;
    c_ = 1;
  }

  void input() { finish(layer(LayerKind::input, "input", 0)); }

  void conv(const std::string& name, int k, int filters, Act act) {
    LayerSpec& l = layer(LayerKind::conv, name,
                         static_cast<long long>(k) * k * c_ * filters + filters);
    l.kernel = k;
    l.stride = 1;
    l.filters = filters;
    l.act = act;
    l.param_indices = {
        add_param(name + ".kernel", he_uniform({size(k), size(k), size(c_), size(filters)}, k * k * c_)),
        add_param(name + ".bias", Tensor<T>({size(filters)}))};
    c_ = filters;
    finish(l);
  }

  void conv_transpose(const std::string& name, int k, int filters, int stride, Act act) {
    LayerSpec& l = layer(LayerKind::conv_transpose, name,
                         static_cast<long long>(k) * k * c_ * filters + filters);
    l.kernel = k;
    l.stride = stride;
    l.filters = filters;
    l.act = act;
    // kernel layout [k,k,C_out,C_in]: exact adjoint of conv2d
    l.param_indices = {
        add_param(name + ".kernel", he_uniform({size(k), size(k), size(filters), size(c_)}, k * k * c_)),
        add_param(name + ".bias", Tensor<T>({size(filters)}))};
    c_ = filters;
    h_ *= stride;
    w_ *= stride;
    finish(l);
  }

  void maxpool(const std::string& name) {
    LayerSpec& l = layer(LayerKind::maxpool, name, 0);
    h_ /= 2;
    w_ /= 2;
    finish(l);
  }

  void batchnorm(const std::string& name) {
    LayerSpec& l = layer(LayerKind::batchnorm, name, 4LL * c_);
    l.param_indices = {add_param(name + ".gamma", Tensor<T>::full({size(c_)}, T{1})),
                       add_param(name + ".beta", Tensor<T>({size(c_)})),
                       add_param(name + ".running_mean", Tensor<T>({size(c_)}), false),
                       add_param(name + ".running_var", Tensor<T>::full({size(c_)}, T{1}), false)};
    finish(l);
  }

  void dropout(const std::string& name) {
    LayerSpec& l = layer(LayerKind::dropout, name, 0);
    l.rate = m_.dropout_rate;
    finish(l);
  }

  void reshape_identity(const std::string& name) {
    LayerSpec& l = layer(LayerKind::reshape, name, 0);
    finish(l);
  }

  void flatten(const std::string& name) {
    LayerSpec& l = layer(LayerKind::flatten, name, 0);
    flat_ = h_ * w_ * c_;
    h_ = w_ = c_ = 0;
    l.out_shape = {size(flat_)};
  }

  void dense(const std::string& name, int units, Act act) {
    const int f = flat_;
    LayerSpec& l = layer(LayerKind::dense, name, static_cast<long long>(f) * units + units);
    l.units = units;
    l.act = act;
    l.param_indices = {add_param(name + ".weight", he_uniform({size(f), size(units)}, f)),
                       add_param(name + ".bias", Tensor<T>({size(units)}))};
    flat_ = units;
    l.out_shape = {size(units)};
  }

  ModelGraph<T> take() {
    // realized counts must match the declared ones layer by layer
    for (const auto& l : m_.layers) {
      long long realized = 0;
      for (int pi : l.param_indices) realized += static_cast<long long>(m_.params[pi].value.size());
      if (realized != l.param_count)
        throw numeric_error(m_.arch + ": layer " + l.name + " realized " +
                            std::to_string(realized) + " parameters, declared " +
                            std::to_string(l.param_count));
    }
    return std::move(m_);
  }

 private:
  LayerSpec& layer(LayerKind kind, const std::string& name, long long count) {
    LayerSpec l;
    l.kind = kind;
    l.name = name;
    l.param_count = count;
    m_.layers.push_back(std::move(l));
    return m_.layers.back();
  }

  void finish(LayerSpec& l) { l.out_shape = {size(h_), size(w_), size(c_)}; }

  int add_param(const std::string& name, Tensor<T> value, bool trainable = true) {
    Parameter<T> p;
    p.name = name;
    p.grad = Tensor<T>(value.shape());
    p.value = std::move(value);
    p.trainable = trainable;
    m_.params.push_back(std::move(p));
    return static_cast<int>(m_.params.size()) - 1;
  }

  Tensor<T> he_uniform(std::vector<std::size_t> shape, int fan_in) {
    Tensor<T> t(std::move(shape));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.size(); ++i)
      t[i] = static_cast<T>(rng_.uniform(-limit, limit));
    return t;
  }

  static std::size_t size(int v) { return static_cast<std::size_t>(v); }

  ModelGraph<T> m_;
  Rng rng_;
  int h_ = 0, w_ = 0, c_ = 0, flat_ = 0;
};

}  // namespace detail

/// Feature-learning autoencoder: 3x3 conv encoder (64 then 32 filters) with
/// 2x2 pooling, mirrored stride-2 transposed-conv decoder, sigmoid head.
/// He-uniform weights from the seed, zero biases.
template <class T>
ModelGraph<T> build_camp1(std::uint64_t seed, const BuildOptions& opts = {}) {
  if (opts.input_size < 4 || opts.input_size % 4 != 0)
    throw numeric_error("camp1: input size must be a positive multiple of 4");
  detail::ModelBuilder<T> b("camp1", seed, opts);
  b.input();
  b.conv("enc_conv1", 3, 64, Act::leaky_relu);
  b.maxpool("pool1");
  b.conv("enc_conv2", 3, 32, Act::leaky_relu);
  b.maxpool("pool2");
  b.conv_transpose("dec_tconv1", 3, 32, 2, Act::leaky_relu);
  b.conv_transpose("dec_tconv2", 3, 64, 2, Act::leaky_relu);
  b.conv("out_conv", 3, 1, Act::sigmoid);
  return b.take();
}

/// Methylation classifier: the autoencoder's encoder stack, batch-normalized
/// 2x2 conv blocks, then Dense(64)+Dense(1) with sigmoid activations.
/// Dropout after each pooling stage is optional and parameter-free.
template <class T>
ModelGraph<T> build_camp2(std::uint64_t seed, const BuildOptions& opts = {}) {
  if (opts.input_size < 8 || opts.input_size % 8 != 0)
    throw numeric_error("camp2: input size must be a positive multiple of 8");
  detail::ModelBuilder<T> b("camp2", seed, opts);
  b.input();
  b.conv("enc_conv1", 3, 64, Act::leaky_relu);
  b.maxpool("pool1");
  b.dropout("drop1");
  b.conv("enc_conv2", 3, 32, Act::leaky_relu);
  b.maxpool("pool2");
  b.dropout("drop2");
  b.reshape_identity("reshape");  // identity as printed in the layer table
  b.batchnorm("bn1");
  b.conv("mid_conv1", 2, 32, Act::leaky_relu);
  b.maxpool("pool3");
  b.dropout("drop3");
  b.batchnorm("bn2");
  b.conv("mid_conv2", 2, 64, Act::leaky_relu);
  b.flatten("flatten");
  b.dense("dense1", 64, Act::sigmoid);
  b.dense("dense2", 1, Act::sigmoid);
  return b.take();
}

template <class T>
ModelGraph<T> build_model(const std::string& arch, std::uint64_t seed,
                          const BuildOptions& opts = {}) {
  if (arch == "camp1") return build_camp1<T>(seed, opts);
  if (arch == "camp2") return build_camp2<T>(seed, opts);
  throw data_error("unknown architecture \"" + arch + "\" (expected camp1 or camp2)");
}

inline constexpr const char* kTransferredParams[] = {"enc_conv1.kernel", "enc_conv1.bias",
                                                     "enc_conv2.kernel", "enc_conv2.bias"};

/// Copies the two encoder convolutions (kernels and biases) from a trained
/// autoencoder into a classifier; every other target parameter is untouched.
template <class T>
void transfer_encoder_weights(const ModelGraph<T>& source, ModelGraph<T>& target) {
  if (source.arch != "camp1" || target.arch != "camp2")
    throw numeric_error("transfer: source must be camp1 and target camp2, got " + source.arch +
                        " -> " + target.arch);
  for (const char* name : kTransferredParams) {
    const Parameter<T>& s = source.param(name);
    Parameter<T>& t = target.param(name);
    if (!s.value.same_shape(t.value))
      throw numeric_error(std::string("transfer: shape mismatch for ") + name + ": " +
                          Tensor<T>::shape_string(s.value.shape()) + " vs " +
                          Tensor<T>::shape_string(t.value.shape()));
    t.value = s.value;
  }
}

struct LayerCount {
  std::string name;
  long long count = 0;
};

/// Per-layer and total parameter counts (batch-norm running statistics
/// included, matching the published tables).
template <class T>
std::pair<std::vector<LayerCount>, long long> count_parameters(const ModelGraph<T>& m) {
  std::vector<LayerCount> per;
  long long total = 0;
  for (const auto& l : m.layers) {
    long long realized = 0;
    for (int pi : l.param_indices) realized += static_cast<long long>(m.params[pi].value.size());
    if (realized != l.param_count)
      throw numeric_error(m.arch + ": layer " + l.name + " count drifted from declaration");
    per.push_back({l.name, realized});
    total += realized;
  }
  return {per, total};
}

}  // namespace camp
