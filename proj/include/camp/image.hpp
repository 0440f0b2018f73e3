#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "camp/errors.hpp"

namespace camp {

/// One 2D grayscale MRI slice, row-major 8-bit intensities.
struct GraySlice {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  std::size_t pixel_count() const { return data.size(); }
  std::uint8_t at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
};

inline void validate_slice(const GraySlice& s, const std::string& context) {
  if (s.width < 0 || s.height < 0)
    throw data_error(context + ": negative dimensions");
  if (s.data.size() != static_cast<std::size_t>(s.width) * static_cast<std::size_t>(s.height))
    throw data_error(context + ": data length " + std::to_string(s.data.size()) +
                     " != " + std::to_string(s.width) + "x" + std::to_string(s.height));
}

enum class Modality { FLAIR, T1w, T1wCE, T2w };

inline const char* modality_name(Modality m) {
  switch (m) {
    case Modality::FLAIR: return "FLAIR";
    case Modality::T1w: return "T1w";
    case Modality::T1wCE: return "T1wCE";
    case Modality::T2w: return "T2w";
  }
  return "?";
}

inline Modality parse_modality(const std::string& s) {
  if (s == "FLAIR") return Modality::FLAIR;
  if (s == "T1w") return Modality::T1w;
  if (s == "T1wCE") return Modality::T1wCE;
  if (s == "T2w") return Modality::T2w;
  throw data_error("unknown modality \"" + s + "\" (expected FLAIR, T1w, T1wCE or T2w)");
}

inline constexpr Modality kAllModalities[] = {Modality::FLAIR, Modality::T1w,
                                              Modality::T1wCE, Modality::T2w};

/// Per-patient, per-modality ordered slice stack.
struct Volume {
  std::string patient_id;
  Modality modality = Modality::FLAIR;
  std::vector<GraySlice> slices;
};

namespace detail {

// Reads one PGM header token, skipping whitespace and '#' comments.
// `offset` tracks the absolute byte position for error messages.
inline std::string pnm_token(std::istream& in, std::size_t& offset, const std::string& path) {
  int c = in.get();
  for (;;) {
    while (c != EOF && std::isspace(c)) {
      ++offset;
      c = in.get();
    }
    if (c == '#') {
      while (c != EOF && c != '\n') {
        ++offset;
        c = in.get();
      }
      continue;
    }
    break;
  }
  if (c == EOF) throw data_error(path + ": malformed header, unexpected end of file at byte " +
                                 std::to_string(offset));
  std::string tok;
  while (c != EOF && !std::isspace(c)) {
    tok += static_cast<char>(c);
    ++offset;
    c = in.get();
  }
  if (c == EOF)
    throw data_error(path + ": malformed header, unexpected end of file at byte " +
                     std::to_string(offset));
  ++offset;  // the single whitespace terminating the token
  return tok;
}

inline int pnm_int(std::istream& in, std::size_t& offset, const std::string& path,
                   const char* what) {
  const std::size_t at = offset;
  const std::string tok = pnm_token(in, offset, path);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v < 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw data_error(path + ": malformed header, bad " + std::string(what) + " \"" + tok +
                     "\" near byte " + std::to_string(at));
  }
}

}  // namespace detail

/// Reads a binary portable graymap (P5, maxval 255).
inline GraySlice read_slice(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error(path + ": cannot open file");
  std::size_t offset = 0;
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '5')
    throw data_error(path + ": unsupported magic \"" + std::string(magic, magic + in.gcount()) +
                     "\" at byte 0 (want P5)");
  offset = 2;
  GraySlice s;
  s.width = detail::pnm_int(in, offset, path, "width");
  s.height = detail::pnm_int(in, offset, path, "height");
  const std::size_t maxval_at = offset;
  const int maxval = detail::pnm_int(in, offset, path, "maxval");
  if (maxval != 255)
    throw data_error(path + ": maxval " + std::to_string(maxval) + " at byte " +
                     std::to_string(maxval_at) + " (only 255 supported)");
  const std::size_t n = static_cast<std::size_t>(s.width) * static_cast<std::size_t>(s.height);
  s.data.resize(n);
  in.read(reinterpret_cast<char*>(s.data.data()), static_cast<std::streamsize>(n));
  const std::size_t got = static_cast<std::size_t>(in.gcount());
  if (got != n)
    throw data_error(path + ": truncated payload at byte " + std::to_string(offset + got) +
                     " (expected " + std::to_string(n) + " pixels, got " + std::to_string(got) +
                     ")");
  return s;
}

/// Writes the canonical P5 form: "P5\n<w> <h>\n255\n" followed by raw rows.
inline void write_slice(const GraySlice& s, const std::string& path) {
  validate_slice(s, "write_slice(" + path + ")");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error(path + ": cannot open file for writing");
  out << "P5\n" << s.width << ' ' << s.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(s.data.data()),
            static_cast<std::streamsize>(s.data.size()));
  out.close();
  if (!out) throw data_error(path + ": I/O failure while writing");
}

/// Bilinear resample with half-pixel-centered sampling. Output intensities
/// are rounded to nearest and clamped to [0, 255].
inline GraySlice resize_bilinear(const GraySlice& s, int out_w, int out_h) {
  validate_slice(s, "resize_bilinear");
  if (s.width == 0 || s.height == 0) throw data_error("resize_bilinear: zero-sized input");
  if (out_w < 1 || out_h < 1) throw data_error("resize_bilinear: output dimensions must be >= 1");

  GraySlice out;
  out.width = out_w;
  out.height = out_h;
  out.data.resize(static_cast<std::size_t>(out_w) * out_h);

  const double sx = static_cast<double>(s.width) / out_w;
  const double sy = static_cast<double>(s.height) / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(s.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, s.height - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(s.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, s.width - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * s.at(x0, y0) + wx * s.at(x1, y0);
      const double bot = (1.0 - wx) * s.at(x0, y1) + wx * s.at(x1, y1);
      const double v = (1.0 - wy) * top + wy * bot;
      const long r = std::lround(v);
      out.data[static_cast<std::size_t>(oy) * out_w + ox] =
          static_cast<std::uint8_t>(std::clamp(r, 0L, 255L));
    }
  }
  return out;
}

}  // namespace camp
