#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "camp/errors.hpp"
#include "camp/model.hpp"

namespace camp {

// Checkpoint layout (all integers little-endian):
//   magic "CAMP", format version u16, model name (u32 length + UTF-8),
//   build seed u64, tensor count u32; then per tensor: name (u32 length +
//   UTF-8), rank u8, extents u32 each, payload as 32-bit floats, row-major.
inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

template <class U>
void write_le(std::ostream& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <class U>
U read_le(std::istream& in, const std::string& path) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const int c = in.get();
    if (c == EOF) throw data_error(path + ": truncated checkpoint");
    v |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, const std::string& path) {
  const auto n = read_le<std::uint32_t>(in, path);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (in.gcount() != static_cast<std::streamsize>(n))
    throw data_error(path + ": truncated checkpoint");
  return s;
}

}  // namespace detail

template <class T>
void save_checkpoint(const ModelGraph<T>& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error(path + ": cannot open for writing");
  out.write("CAMP", 4);
  detail::write_le<std::uint16_t>(out, kCheckpointVersion);
  detail::write_string(out, m.name());
  detail::write_le<std::uint64_t>(out, m.build_seed);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.params.size()));
  std::vector<char> buf;
  for (const auto& p : m.params) {
    detail::write_string(out, p.name);
    out.put(static_cast<char>(p.value.rank()));
    for (std::size_t d = 0; d < p.value.rank(); ++d)
      detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.dim(d)));
    buf.resize(p.value.size() * 4);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const float f = static_cast<float>(p.value[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      buf[i * 4 + 0] = static_cast<char>(bits & 0xff);
      buf[i * 4 + 1] = static_cast<char>((bits >> 8) & 0xff);
      buf[i * 4 + 2] = static_cast<char>((bits >> 16) & 0xff);
      buf[i * 4 + 3] = static_cast<char>((bits >> 24) & 0xff);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  out.close();
  if (!out) throw data_error(path + ": I/O failure while writing checkpoint");
}

/// Rebuilds the named architecture at the stored seed and restores every
/// tensor (parameters and batch-norm running statistics) bitwise.
/// `expected_arch`, when non-empty, must match the stored model ("camp1" or
/// "camp2"); hyperparameters that are not tensors (LeakyReLU slope, dropout)
/// come from `opts`.
template <class T>
ModelGraph<T> load_checkpoint(const std::string& path, const std::string& expected_arch = "",
                              BuildOptions opts = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error(path + ": cannot open checkpoint");
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "CAMP", 4) != 0)
    throw data_error(path + ": bad checkpoint magic");
  const auto version = detail::read_le<std::uint16_t>(in, path);
  if (version != kCheckpointVersion)
    throw data_error(path + ": unsupported checkpoint version " + std::to_string(version));
  const std::string name = detail::read_string(in, path);
  const auto seed = detail::read_le<std::uint64_t>(in, path);
  const auto tensor_count = detail::read_le<std::uint32_t>(in, path);

  std::string arch = name;
  int scale = 256;
  if (const auto at = name.find('@'); at != std::string::npos) {
    arch = name.substr(0, at);
    try {
      scale = std::stoi(name.substr(at + 1));
    } catch (const std::exception&) {
      throw data_error(path + ": malformed model name \"" + name + "\"");
    }
  }
  if (!expected_arch.empty() && arch != expected_arch)
    throw data_error(path + ": checkpoint holds \"" + arch + "\", expected \"" + expected_arch +
                     "\"");
  opts.input_size = scale;
  ModelGraph<T> m = build_model<T>(arch, seed, opts);
  if (tensor_count != m.params.size())
    throw data_error(path + ": checkpoint has " + std::to_string(tensor_count) +
                     " tensors, architecture " + name + " expects " +
                     std::to_string(m.params.size()));

  for (std::uint32_t t = 0; t < tensor_count; ++t) {
    const std::string pname = detail::read_string(in, path);
    const int rank = in.get();
    if (rank == EOF) throw data_error(path + ": truncated checkpoint");
    std::vector<std::size_t> shape;
    for (int d = 0; d < rank; ++d)
      shape.push_back(detail::read_le<std::uint32_t>(in, path));
    Parameter<T>& p = m.param(pname);
    if (p.value.shape() != shape)
      throw data_error(path + ": tensor " + pname + " has shape " +
                       Tensor<T>::shape_string(shape) + ", architecture " + name + " expects " +
                       Tensor<T>::shape_string(p.value.shape()));
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const auto bits = detail::read_le<std::uint32_t>(in, path);
      float f;
      std::memcpy(&f, &bits, 4);
      p.value[i] = static_cast<T>(f);
    }
  }
  return m;
}

}  // namespace camp
