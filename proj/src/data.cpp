#include "dynanet/data.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "dynanet/nn.hpp"

namespace dynanet {

std::string_view texture_kind_name(TextureKind kind) {
  switch (kind) {
    case TextureKind::Stripes: return "stripes";
    case TextureKind::Checker: return "checker";
    case TextureKind::Blobs: return "blobs";
    case TextureKind::Noise: return "noise";
  }
  return "?";
}

TextureKind parse_texture_kind(std::string_view name) {
  for (auto kind : {TextureKind::Stripes, TextureKind::Checker, TextureKind::Blobs, TextureKind::Noise}) {
    if (texture_kind_name(kind) == name) return kind;
  }
  throw ConfigError("unknown texture kind '" + std::string(name) + "'");
}

namespace detail {

namespace {

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

}  // namespace

std::vector<double> texture_pattern(const TextureSpec& spec, Index size) {
  if (size < 16) throw ConfigError("texture size must be at least 16");
  if (spec.scale < 1) throw ConfigError("texture scale must be positive");
  const bool periodic = spec.kind == TextureKind::Stripes || spec.kind == TextureKind::Checker;
  if (periodic && size % spec.scale != 0) {
    throw ConfigError("texture scale " + std::to_string(spec.scale) + " does not divide image size " +
                      std::to_string(size));
  }
  std::vector<double> t(static_cast<std::size_t>(size * size), 0.0);
  auto at = [&](Index y, Index x) -> double& { return t[static_cast<std::size_t>(y * size + x)]; };
  const Index s = spec.scale;
  Rng rng(spec.seed);
  switch (spec.kind) {
    case TextureKind::Stripes:
      for (Index y = 0; y < size; ++y)
        for (Index x = 0; x < size; ++x) at(y, x) = static_cast<double>((x / s) % 2);
      break;
    case TextureKind::Checker:
      for (Index y = 0; y < size; ++y)
        for (Index x = 0; x < size; ++x) at(y, x) = static_cast<double>((x / s + y / s) % 2);
      break;
    case TextureKind::Blobs: {
      const Index cells = std::max<Index>(1, size / s);
      const Index count = std::max<Index>(1, cells * cells / 2);
      for (Index b = 0; b < count; ++b) {
        const double cx = rng.uniform(0.0, static_cast<double>(size));
        const double cy = rng.uniform(0.0, static_cast<double>(size));
        const double r = static_cast<double>(s) * rng.uniform(0.5, 1.0);
        for (Index y = 0; y < size; ++y) {
          for (Index x = 0; x < size; ++x) {
            const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
            at(y, x) += std::exp(-(dx * dx + dy * dy) / (2.0 * r * r));
          }
        }
      }
      for (auto& v : t) v = std::clamp(v, 0.0, 1.0);
      break;
    }
    case TextureKind::Noise: {
      const Index cells = size / s + 2;
      std::vector<double> lattice(static_cast<std::size_t>(cells * cells));
      for (auto& v : lattice) v = rng.uniform();
      auto node = [&](Index y, Index x) { return lattice[static_cast<std::size_t>(y * cells + x)]; };
      for (Index y = 0; y < size; ++y) {
        for (Index x = 0; x < size; ++x) {
          const double fy = static_cast<double>(y) / static_cast<double>(s);
          const double fx = static_cast<double>(x) / static_cast<double>(s);
          const Index iy = static_cast<Index>(fy), ix = static_cast<Index>(fx);
          const double ty = smoothstep(fy - static_cast<double>(iy)), tx = smoothstep(fx - static_cast<double>(ix));
          const double top = node(iy, ix) + (node(iy, ix + 1) - node(iy, ix)) * tx;
          const double bottom = node(iy + 1, ix) + (node(iy + 1, ix + 1) - node(iy + 1, ix)) * tx;
          at(y, x) = top + (bottom - top) * ty;
        }
      }
      break;
    }
  }
  return t;
}

std::vector<double> content_pixels(Index size, std::uint64_t seed, std::size_t index) {
  Rng rng(mix_seed(seed, index));
  const double sz = static_cast<double>(size);
  std::vector<double> px(static_cast<std::size_t>(size * size * 3));
  auto color = [&] { return Rgb{rng.uniform(), rng.uniform(), rng.uniform()}; };

  const Rgb from = color(), to = color();
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (Index y = 0; y < size; ++y) {
    for (Index x = 0; x < size; ++x) {
      const double u = (static_cast<double>(x) - sz / 2.0) * ca + (static_cast<double>(y) - sz / 2.0) * sa;
      const double t = std::clamp(0.5 + u / sz, 0.0, 1.0);
      for (std::size_t c = 0; c < 3; ++c) px[static_cast<std::size_t>(y * size + x) * 3 + c] = from[c] + (to[c] - from[c]) * t;
    }
  }

  const int shapes = 2 + static_cast<int>(rng.below(3));
  for (int k = 0; k < shapes; ++k) {
    const bool circle = rng.uniform() < 0.5;
    const double cx = rng.uniform(0.0, sz), cy = rng.uniform(0.0, sz);
    const double r = rng.uniform(sz / 10.0, sz / 4.0);
    const double aspect = rng.uniform(0.5, 1.5);
    const Rgb fill = color();
    for (Index y = 0; y < size; ++y) {
      for (Index x = 0; x < size; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
        const bool inside = circle ? dx * dx + dy * dy <= r * r
                                   : std::abs(dx) <= r * aspect && std::abs(dy) <= r / aspect;
        if (!inside) continue;
        for (std::size_t c = 0; c < 3; ++c) px[static_cast<std::size_t>(y * size + x) * 3 + c] = fill[c];
      }
    }
  }
  return px;
}

}  // namespace detail

std::string encode_ppm(const PpmImage& image) {
  if (static_cast<Index>(image.rgb.size()) != image.width * image.height * 3) {
    throw ShapeError("PPM payload size does not match dimensions");
  }
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out += image.rgb;
  return out;
}

PpmImage decode_ppm(std::string_view bytes) {
  std::size_t pos = 0;
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("not a binary PPM (P6) file", 0);
  pos = 2;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    Index v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1 << 20)) throw FormatError(std::string("PPM ") + what + " too large", start);
      ++pos;
    }
    if (pos == start) throw FormatError(std::string("malformed PPM header: expected ") + what, start);
    return v;
  };
  PpmImage image;
  image.width = number("width");
  image.height = number("height");
  const std::size_t maxval_at = pos;
  const Index maxval = number("maxval");
  if (image.width < 1 || image.height < 1) throw FormatError("PPM dimensions must be positive", maxval_at);
  if (maxval != 255) throw FormatError("only maxval 255 is supported", maxval_at);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("malformed PPM header: missing separator before pixel data", pos);
  }
  ++pos;
  const auto need = static_cast<std::size_t>(image.width * image.height * 3);
  if (bytes.size() - pos < need) throw FormatError("truncated PPM pixel data", bytes.size());
  image.rgb = std::string(bytes.substr(pos, need));
  return image;
}

void save_ppm_bytes(const PpmImage& image, const std::string& path) { write_file(path, encode_ppm(image)); }

PpmImage load_ppm_bytes(const std::string& path) { return decode_ppm(read_file(path)); }

}  // namespace dynanet
