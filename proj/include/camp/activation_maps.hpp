#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "camp/errors.hpp"
#include "camp/image.hpp"
#include "camp/model.hpp"
#include "camp/train.hpp"

namespace camp {

/// Layer names whose outputs can be exported as activation maps.
template <class T>
std::vector<std::string> conv_layer_names(const ModelGraph<T>& m) {
  std::vector<std::string> names;
  for (const auto& l : m.layers)
    if (l.kind == LayerKind::conv || l.kind == LayerKind::conv_transpose) names.push_back(l.name);
  return names;
}

/// Runs an infer-mode forward pass and writes one P5 image per channel of
/// the selected conv layer, each min-max scaled to [0,255] (constant
/// channels map to 0). Files are named "<layer>_<channel>.pgm".
inline std::vector<std::string> export_activation_maps(ModelGraph<float>& model,
                                                       const GraySlice& slice,
                                                       const std::string& layer,
                                                       const std::string& out_dir) {
  const auto known = conv_layer_names(model);
  if (std::find(known.begin(), known.end(), layer) == known.end()) {
    std::string options;
    for (const auto& n : known) options += (options.empty() ? "" : ", ") + n;
    throw data_error("unknown layer \"" + layer + "\" (conv layers: " + options + ")");
  }
  if (slice.width != model.input_size || slice.height != model.input_size)
    throw data_error("activation maps: slice is " + std::to_string(slice.width) + "x" +
                     std::to_string(slice.height) + ", model expects " +
                     std::to_string(model.input_size));

  const Tensor<float> plane = slice_to_tensor(slice);
  Tensor<float> input({1, plane.dim(0), plane.dim(1), 1});
  std::copy(plane.data(), plane.data() + plane.size(), input.data());

  Graph<float> g;
  const auto fr = model.forward(g, input, Mode::infer);
  const Tensor<float>& act = g.value(fr.taps.at(layer));
  const int H = static_cast<int>(act.dim(1));
  const int W = static_cast<int>(act.dim(2));
  const int C = static_cast<int>(act.dim(3));

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> files;
  for (int c = 0; c < C; ++c) {
    float lo = act.at4(0, 0, 0, c), hi = lo;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const float v = act.at4(0, y, x, c);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    GraySlice img{W, H, std::vector<std::uint8_t>(static_cast<std::size_t>(W) * H, 0)};
    if (hi > lo) {
      const float scale = 255.0f / (hi - lo);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const long r = std::lround((act.at4(0, y, x, c) - lo) * scale);
          img.data[static_cast<std::size_t>(y) * W + x] =
              static_cast<std::uint8_t>(std::clamp(r, 0L, 255L));
        }
    }
    char name[128];
    std::snprintf(name, sizeof name, "%s_%03d.pgm", layer.c_str(), c);
    const auto path = fs::path(out_dir) / name;
    write_slice(img, path.string());
    files.push_back(path.string());
  }
  return files;
}

}  // namespace camp
