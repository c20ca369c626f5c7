#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "dynanet/rng.hpp"
#include "dynanet/tensor.hpp"

namespace dynanet {

using Rgb = std::array<double, 3>;

enum class TextureKind { Stripes, Checker, Blobs, Noise };

std::string_view texture_kind_name(TextureKind kind);
TextureKind parse_texture_kind(std::string_view name);

struct TextureSpec {
  TextureKind kind = TextureKind::Stripes;
  // Feature size in pixels.
  Index scale = 4;
  std::array<Rgb, 2> palette{{{0.1, 0.1, 0.4}, {0.95, 0.85, 0.2}}};
  std::uint64_t seed = 0;
};

namespace detail {

// Pattern intensity in [0, 1] at every pixel, row-major size×size.
std::vector<double> texture_pattern(const TextureSpec& spec, Index size);

// Row-major H×W×3 RGB image in [0, 1] for content image `index` of a seeded set.
std::vector<double> content_pixels(Index size, std::uint64_t seed, std::size_t index);

}  // namespace detail

template <class Scalar>
Tensor<Scalar> gen_texture(const TextureSpec& spec, Index size) {
  const auto pattern = detail::texture_pattern(spec, size);
  Tensor<Scalar> img({3, size, size});
  for (Index c = 0; c < 3; ++c) {
    const double lo = spec.palette[0][static_cast<std::size_t>(c)];
    const double hi = spec.palette[1][static_cast<std::size_t>(c)];
    for (Index i = 0; i < size * size; ++i) {
      img[c * size * size + i] = static_cast<Scalar>(lo + (hi - lo) * pattern[static_cast<std::size_t>(i)]);
    }
  }
  return img;
}

// Smooth gradient backgrounds with a few flat shapes, values in [0, 1].
template <class Scalar>
std::vector<Tensor<Scalar>> gen_content(std::size_t n, Index size, std::uint64_t seed) {
  if (size < 8) throw ConfigError("content images must be at least 8 pixels wide");
  std::vector<Tensor<Scalar>> images;
  for (std::size_t k = 0; k < n; ++k) {
    const auto px = detail::content_pixels(size, seed, k);
    Tensor<Scalar> img({3, size, size});
    for (Index y = 0; y < size; ++y) {
      for (Index x = 0; x < size; ++x) {
        for (Index c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<Scalar>(px[static_cast<std::size_t>((y * size + x) * 3 + c)]);
      }
    }
    images.push_back(std::move(img));
  }
  return images;
}

// ---------------------------------------------------------------------------
// 8-bit RGB conversion and binary PPM (P6, maxval 255).

inline std::uint8_t quantize_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Row-major RGB bytes (H·W·3) of a 3×H×W image.
template <class Scalar>
std::string to_rgb_bytes(const Tensor<Scalar>& img) {
  if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("expected a 3xHxW image, got " + shape_string(img.shape()));
  const Index h = img.dim(1), w = img.dim(2);
  std::string bytes(static_cast<std::size_t>(h * w * 3), '\0');
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      for (Index c = 0; c < 3; ++c) {
        bytes[static_cast<std::size_t>((y * w + x) * 3 + c)] =
            static_cast<char>(quantize_byte(static_cast<double>(img.at(c, y, x))));
      }
    }
  }
  return bytes;
}

template <class Scalar>
Tensor<Scalar> from_rgb_bytes(std::string_view bytes, Index height, Index width) {
  if (static_cast<Index>(bytes.size()) != height * width * 3) throw ShapeError("RGB byte count does not match size");
  Tensor<Scalar> img({3, height, width});
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      for (Index c = 0; c < 3; ++c) {
        const auto b = static_cast<unsigned char>(bytes[static_cast<std::size_t>((y * width + x) * 3 + c)]);
        img.at(c, y, x) = static_cast<Scalar>(b) / Scalar(255);
      }
    }
  }
  return img;
}

// Rounds every value to the nearest 1/255 step.
template <class Scalar>
Tensor<Scalar> quantize(const Tensor<Scalar>& img) {
  return from_rgb_bytes<Scalar>(to_rgb_bytes(img), img.dim(1), img.dim(2));
}

struct PpmImage {
  Index width = 0;
  Index height = 0;
  std::string rgb;
};

std::string encode_ppm(const PpmImage& image);
PpmImage decode_ppm(std::string_view bytes);

void save_ppm_bytes(const PpmImage& image, const std::string& path);
PpmImage load_ppm_bytes(const std::string& path);

template <class Scalar>
void save_ppm(const Tensor<Scalar>& img, const std::string& path) {
  save_ppm_bytes(PpmImage{img.dim(2), img.dim(1), to_rgb_bytes(img)}, path);
}

template <class Scalar>
Tensor<Scalar> load_ppm(const std::string& path) {
  const auto image = load_ppm_bytes(path);
  return from_rgb_bytes<Scalar>(image.rgb, image.height, image.width);
}

// ---------------------------------------------------------------------------
// 1D regression oracle task: inputs on a grid in [0, 1], two target curves.

enum class RegressionKind { ConstantPair, SinePair };

template <class Scalar>
struct Regression1DTask {
  // 1×1×N tensors.
  Tensor<Scalar> grid;
  Tensor<Scalar> target0;
  Tensor<Scalar> target1;
};

template <class Scalar>
Regression1DTask<Scalar> make_regression_task(RegressionKind kind, Index n) {
  if (n < 16) throw ConfigError("regression task needs at least 16 points");
  Regression1DTask<Scalar> task{Tensor<Scalar>({1, 1, n}), Tensor<Scalar>({1, 1, n}), Tensor<Scalar>({1, 1, n})};
  for (Index i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(n - 1);
    task.grid[i] = static_cast<Scalar>(x);
    if (kind == RegressionKind::ConstantPair) {
      task.target0[i] = static_cast<Scalar>(0.2);
      task.target1[i] = static_cast<Scalar>(0.8);
    } else {
      const double phase = 2.0 * std::numbers::pi * x;
      task.target0[i] = static_cast<Scalar>(0.5 * (std::sin(phase) + 1.0));
      task.target1[i] = static_cast<Scalar>(0.5 * (std::sin(phase + std::numbers::pi / 2.0) + 1.0));
    }
  }
  return task;
}

}  // namespace dynanet
