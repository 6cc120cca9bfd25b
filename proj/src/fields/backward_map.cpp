#include "doctr/fields/backward_map.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace doctr {

BackwardMap::BackwardMap(int h, int w)
    : height(h), width(w), u(static_cast<std::size_t>(h) * w, 0.0f), v(static_cast<std::size_t>(h) * w, 0.0f) {
  if (h < 1 || w < 1) throw ArgumentError("BackwardMap extents must be positive");
}

BackwardMap identity_map(int height, int width) {
  BackwardMap m(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      m.u[m.index(y, x)] = width > 1 ? static_cast<float>(static_cast<double>(x) / (width - 1)) : 0.0f;
      m.v[m.index(y, x)] = height > 1 ? static_cast<float>(static_cast<double>(y) / (height - 1)) : 0.0f;
    }
  }
  return m;
}

namespace detail {

AxisTap axis_tap(double pos, int extent) {
  AxisTap t;
  const double hi = static_cast<double>(extent - 1);
  t.clamped = !(pos >= 0.0 && pos <= hi);
  const double p = std::isfinite(pos) ? std::clamp(pos, 0.0, hi) : 0.0;
  // Relative float32 rounding of a normalized coordinate, scaled to pixels.
  const double tol = std::max(hi, 1.0) * 0x1.0p-21;
  t.i0 = static_cast<int>(std::floor(p));
  t.frac = p - t.i0;
  if (t.frac > 1.0 - tol) {
    t.i0 += 1;
    t.frac = 0.0;
  } else if (t.frac < tol) {
    t.frac = 0.0;
  }
  t.i0 = std::min(t.i0, extent - 1);
  t.i1 = std::min(t.i0 + 1, extent - 1);
  return t;
}

}  // namespace detail

void bilinear_sample(const Image& src, double x, double y, std::span<float> out) {
  if (src.empty()) throw ArgumentError("bilinear_sample: empty source");
  const auto tx = detail::axis_tap(x, src.width);
  const auto ty = detail::axis_tap(y, src.height);
  const float fx = static_cast<float>(tx.frac), fy = static_cast<float>(ty.frac);
  const float w00 = (1.0f - fx) * (1.0f - fy), w01 = fx * (1.0f - fy);
  const float w10 = (1.0f - fx) * fy, w11 = fx * fy;
  for (int c = 0; c < src.channels; ++c) {
    out[static_cast<std::size_t>(c)] = w00 * src.at(ty.i0, tx.i0, c) + w01 * src.at(ty.i0, tx.i1, c) +
                                       w10 * src.at(ty.i1, tx.i0, c) + w11 * src.at(ty.i1, tx.i1, c);
  }
}

Image warp_image(const Image& src, const BackwardMap& map) {
  if (src.empty()) throw ArgumentError("warp_image: empty source");
  Image out(map.height, map.width, src.channels);
  const double sx = src.width - 1, sy = src.height - 1;
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const auto i = map.index(y, x);
      const std::size_t base = i * static_cast<std::size_t>(src.channels);
      bilinear_sample(src, static_cast<double>(map.u[i]) * sx, static_cast<double>(map.v[i]) * sy,
                      std::span<float>(out.data.data() + base, static_cast<std::size_t>(src.channels)));
    }
  }
  return out;
}

BackwardMap resize_map(const BackwardMap& map, int height, int width) {
  if (height < 1 || width < 1) throw ArgumentError("resize_map: target extent must be positive");
  if (height == map.height && width == map.width) return map;
  Image planes(map.height, map.width, 2);
  for (std::size_t i = 0; i < map.u.size(); ++i) {
    planes.data[2 * i] = map.u[i];
    planes.data[2 * i + 1] = map.v[i];
  }
  const Image r = resize_image(planes, height, width);
  BackwardMap out(height, width);
  for (std::size_t i = 0; i < out.u.size(); ++i) {
    out.u[i] = r.data[2 * i];
    out.v[i] = r.data[2 * i + 1];
  }
  return out;
}

double map_l1(const BackwardMap& a, const BackwardMap& b) {
  if (a.height != b.height || a.width != b.width) throw DimensionError("map_l1: extent mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.u.size(); ++i) {
    s += std::abs(static_cast<double>(a.u[i]) - b.u[i]) + std::abs(static_cast<double>(a.v[i]) - b.v[i]);
  }
  return s / (2.0 * static_cast<double>(a.u.size()));
}

template <typename T>
Tensor<T> map_to_tensor(const BackwardMap& map) {
  std::vector<T> d(map.u.size() * 2);
  for (std::size_t i = 0; i < map.u.size(); ++i) {
    d[2 * i] = static_cast<T>(map.u[i]);
    d[2 * i + 1] = static_cast<T>(map.v[i]);
  }
  return Tensor<T>(Shape{map.height, map.width, 2}, std::move(d));
}

template <typename T>
BackwardMap map_from_tensor(const Tensor<T>& t) {
  if (t.rank() != 3 || t.dim(2) != 2) throw DimensionError("map_from_tensor expects H x W x 2, got " + shape_string(t.shape()));
  BackwardMap m(static_cast<int>(t.dim(0)), static_cast<int>(t.dim(1)));
  const auto d = t.data();
  for (std::size_t i = 0; i < m.u.size(); ++i) {
    m.u[i] = static_cast<float>(d[2 * i]);
    m.v[i] = static_cast<float>(d[2 * i + 1]);
  }
  return m;
}

template Tensor<float> map_to_tensor<float>(const BackwardMap&);
template Tensor<double> map_to_tensor<double>(const BackwardMap&);
template BackwardMap map_from_tensor<float>(const Tensor<float>&);
template BackwardMap map_from_tensor<double>(const Tensor<double>&);

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                              static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b.data(), 4);
}

void put_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in) throw IoError("BMAP: unexpected end of data");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& in) {
  const std::uint32_t bits = get_u32(in);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

void write_bmap(std::ostream& out, const BackwardMap& map) {
  out.write("BMAP", 4);
  put_u32(out, static_cast<std::uint32_t>(map.height));
  put_u32(out, static_cast<std::uint32_t>(map.width));
  out.put(static_cast<char>(1));
  for (std::size_t i = 0; i < map.u.size(); ++i) {
    put_f32(out, map.u[i]);
    put_f32(out, map.v[i]);
  }
  if (!out) throw IoError("BMAP: write failed");
}

BackwardMap read_bmap(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "BMAP", 4) != 0) throw IoError("BMAP: bad magic");
  const std::uint32_t h = get_u32(in);
  const std::uint32_t w = get_u32(in);
  const int flag = in.get();
  if (!in) throw IoError("BMAP: truncated header");
  if (flag != 1) throw IoError("BMAP: only normalized coordinates (flag 1) are supported");
  if (h == 0 || w == 0 || h > (1u << 16) || w > (1u << 16)) throw IoError("BMAP: implausible extent");
  BackwardMap m(static_cast<int>(h), static_cast<int>(w));
  for (std::size_t i = 0; i < m.u.size(); ++i) {
    m.u[i] = get_f32(in);
    m.v[i] = get_f32(in);
  }
  return m;
}

void write_bmap(const std::filesystem::path& path, const BackwardMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_bmap(out, map);
}

BackwardMap read_bmap(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_bmap(in);
}

}  // namespace doctr
