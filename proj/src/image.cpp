#include "doctr/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace doctr {

Image::Image(int h, int w, int c, float fill)
    : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {
  if (h < 0 || w < 0 || c < 0) throw DimensionError("negative image extent");
}

Image resize_image(const Image& src, int height, int width) {
  if (src.empty()) throw ArgumentError("resize_image: empty source");
  if (height < 1 || width < 1) throw ArgumentError("resize_image: target extent must be positive");
  if (height == src.height && width == src.width) return src;
  Image out(height, width, src.channels);
  const double sy = height > 1 ? static_cast<double>(src.height - 1) / (height - 1) : 0.0;
  const double sx = width > 1 ? static_cast<double>(src.width - 1) / (width - 1) : 0.0;
  for (int y = 0; y < height; ++y) {
    const double fy = y * sy;
    const int y0 = std::min(static_cast<int>(fy), src.height - 1);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = x * sx;
      const int x0 = std::min(static_cast<int>(fx), src.width - 1);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = (1 - tx) * src.at(y0, x0, c) + tx * src.at(y0, x1, c);
        const double bot = (1 - tx) * src.at(y1, x0, c) + tx * src.at(y1, x1, c);
        out.at(y, x, c) = static_cast<float>((1 - ty) * top + ty * bot);
      }
    }
  }
  return out;
}

Image to_gray(const Image& src) {
  if (src.channels == 1) return src;
  if (src.channels != 3) throw DimensionError("to_gray expects 1 or 3 channels");
  Image out(src.height, src.width, 1);
  for (std::size_t i = 0; i < src.pixel_count(); ++i) {
    out.data[i] = 0.299f * src.data[3 * i] + 0.587f * src.data[3 * i + 1] + 0.114f * src.data[3 * i + 2];
  }
  return out;
}

Image multiply_pixels(const Image& img, const Image& weight) {
  if (img.height != weight.height || img.width != weight.width || weight.channels != 1) {
    throw DimensionError("multiply_pixels: weight must be single-channel with the image's extent");
  }
  Image out = img;
  for (std::size_t i = 0; i < img.pixel_count(); ++i)
    for (int c = 0; c < img.channels; ++c) out.data[i * img.channels + c] *= weight.data[i];
  return out;
}

float max_abs_diff(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
    throw DimensionError("max_abs_diff: extent mismatch");
  }
  float m = 0.0f;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
  if (img.empty()) throw ArgumentError("image_to_tensor: empty image");
  return Tensor<T>(Shape{img.height, img.width, img.channels}, std::vector<T>(img.data.begin(), img.data.end()));
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t) {
  if (t.rank() != 3) throw DimensionError("tensor_to_image expects H x W x C, got " + shape_string(t.shape()));
  Image img(static_cast<int>(t.dim(0)), static_cast<int>(t.dim(1)), static_cast<int>(t.dim(2)));
  std::transform(t.data().begin(), t.data().end(), img.data.begin(), [](T v) { return static_cast<float>(v); });
  return img;
}

template Tensor<float> image_to_tensor<float>(const Image&);
template Tensor<double> image_to_tensor<double>(const Image&);
template Image tensor_to_image<float>(const Tensor<float>&);
template Image tensor_to_image<double>(const Tensor<double>&);

namespace {
std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

std::string next_token(std::istream& in) {
  std::string tok;
  while (in && tok.empty()) {
    int ch = in.get();
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    while (in && ch != EOF && !std::isspace(ch)) {
      tok.push_back(static_cast<char>(ch));
      ch = in.get();
    }
  }
  return tok;
}
}  // namespace

void write_pnm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw ArgumentError("write_pnm: only 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << "\n255\n";
  std::vector<char> bytes(img.data.size());
  std::transform(img.data.begin(), img.data.end(), bytes.begin(), [](float v) { return static_cast<char>(to_byte(v)); });
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string magic = next_token(in);
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw IoError(path.string() + ": unsupported PNM type '" + magic + "'");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(in));
    h = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed PNM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw IoError(path.string() + ": only 8-bit PNM files are supported");
  Image img(h, w, channels);
  std::vector<unsigned char> bytes(img.data.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw IoError(path.string() + ": truncated pixel data");
  std::transform(bytes.begin(), bytes.end(), img.data.begin(), [](unsigned char b) { return b / 255.0f; });
  return img;
}

Image quantize8(const Image& img) {
  Image out = img;
  for (auto& v : out.data) v = to_byte(v) / 255.0f;
  return out;
}

}  // namespace doctr
