#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "camp/errors.hpp"
#include "camp/image.hpp"

namespace camp {

struct Rect {
  int x = 0, y = 0, w = 16, h = 16;
};

struct PreprocessConfig {
  double entropy_threshold = 1.3;  // bits
  double snr_threshold = 5.0;      // dB
  Rect background_region{0, 0, 16, 16};
  int target_size = 256;
};

struct SliceQuality {
  double entropy_bits = 0.0;
  double snr_db = 0.0;  // may be +/-infinity
  bool selected = false;
};

inline constexpr const char* kQualityHeader =
    "patient_id,modality,slice_index,entropy_bits,snr_db,selected";

/// Shannon entropy over the 256-level intensity histogram, in bits.
inline double shannon_entropy(const GraySlice& s) {
  validate_slice(s, "shannon_entropy");
  if (s.data.empty()) throw data_error("shannon_entropy: empty slice");
  std::array<std::size_t, 256> hist{};
  for (std::uint8_t v : s.data) ++hist[v];
  const double total = static_cast<double>(s.data.size());
  double h = 0.0;
  for (std::size_t c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log2(p);
  }
  return h;
}

/// Decibel signal-to-noise ratio: 10*log10(e / var) where e is the squared
/// mean intensity of the whole slice and var is the population variance of
/// the flat background rectangle. Zero-noise slices return +infinity, slices
/// with zero mean return -infinity.
inline double snr_db(const GraySlice& s, const Rect& background) {
  validate_slice(s, "snr_db");
  if (background.x < 0 || background.y < 0 || background.w <= 0 || background.h <= 0 ||
      background.x + background.w > s.width || background.y + background.h > s.height)
    throw data_error("snr_db: background rectangle outside slice bounds");
  if (static_cast<long long>(background.w) * background.h < 4)
    throw data_error("snr_db: background rectangle area must be >= 4 pixels");

  double sum = 0.0;
  for (std::uint8_t v : s.data) sum += v;
  const double mean = sum / static_cast<double>(s.data.size());
  const double signal = mean * mean;

  double bsum = 0.0;
  const std::size_t bn = static_cast<std::size_t>(background.w) * background.h;
  for (int y = background.y; y < background.y + background.h; ++y)
    for (int x = background.x; x < background.x + background.w; ++x) bsum += s.at(x, y);
  const double bmean = bsum / static_cast<double>(bn);
  double var = 0.0;
  for (int y = background.y; y < background.y + background.h; ++y)
    for (int x = background.x; x < background.x + background.w; ++x) {
      const double d = s.at(x, y) - bmean;
      var += d * d;
    }
  var /= static_cast<double>(bn);

  if (signal == 0.0) return -std::numeric_limits<double>::infinity();
  if (var == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / var);
}

inline SliceQuality slice_quality(const GraySlice& s, const PreprocessConfig& cfg) {
  SliceQuality q;
  q.entropy_bits = shannon_entropy(s);
  q.snr_db = snr_db(s, cfg.background_region);
  q.selected = q.entropy_bits > cfg.entropy_threshold && q.snr_db >= cfg.snr_threshold;
  return q;
}

/// Applies the two-pronged quality gate to every slice of a volume. Returns
/// the retained slices (original order) plus one quality record per input.
inline std::pair<Volume, std::vector<SliceQuality>> select_slices(const Volume& v,
                                                                  const PreprocessConfig& cfg) {
  if (v.slices.empty()) throw data_error("select_slices: empty volume");
  Volume kept{v.patient_id, v.modality, {}};
  std::vector<SliceQuality> qualities;
  qualities.reserve(v.slices.size());
  for (const auto& s : v.slices) {
    SliceQuality q = slice_quality(s, cfg);
    if (q.selected) kept.slices.push_back(s);
    qualities.push_back(q);
  }
  return {std::move(kept), std::move(qualities)};
}

/// Classic histogram equalization: T(v) = round(255 * (cdf(v) - cdf_min) /
/// (Npix - cdf_min)). Constant slices map to all-zero.
inline GraySlice histogram_equalize(const GraySlice& s) {
  validate_slice(s, "histogram_equalize");
  if (s.data.empty()) throw data_error("histogram_equalize: empty slice");
  std::array<std::size_t, 256> hist{};
  for (std::uint8_t v : s.data) ++hist[v];
  std::array<std::size_t, 256> cdf{};
  std::size_t run = 0;
  std::size_t cdf_min = 0;
  for (int v = 0; v < 256; ++v) {
    run += hist[v];
    cdf[v] = run;
    if (cdf_min == 0 && hist[v] > 0) cdf_min = hist[v];
  }
  const std::size_t n = s.data.size();
  std::array<std::uint8_t, 256> lut{};
  if (n == cdf_min) {
    // Single occupied level: the formula degenerates to 0/0; map to 0.
    lut.fill(0);
  } else {
    const double denom = static_cast<double>(n - cdf_min);
    for (int v = 0; v < 256; ++v) {
      const double t = 255.0 * (static_cast<double>(cdf[v]) - static_cast<double>(cdf_min)) / denom;
      const long r = std::lround(t);
      lut[v] = static_cast<std::uint8_t>(std::clamp(r, 0L, 255L));
    }
  }
  GraySlice out = s;
  for (auto& px : out.data) px = lut[px];
  return out;
}

}  // namespace camp
