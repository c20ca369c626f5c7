#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "dynanet/ops.hpp"
#include "dynanet/rng.hpp"

namespace dynanet {

enum class BlockKind { ConvINRelu, ResidualBlock, UpsampleConv, OutputConv, TuningBlock };

std::string_view block_kind_name(BlockKind kind);

struct BlockSpec {
  BlockKind kind = BlockKind::ConvINRelu;
  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel = 3;
  Index stride = 1;
  // Nearest-neighbour factor applied before the conv of an UpsampleConv.
  Index upsample = 2;

  Index padding() const { return kernel / 2; }

  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

BlockSpec tuning_block(Index channels, Index kernel = 3);

// Main-network layout plus the positions where tuning-blocks attach.
// Insertion index i means "after the i-th main block" (1-based).
struct BackboneSpec {
  std::vector<BlockSpec> blocks;
  std::vector<Index> insertion_points;
  Index tuning_kernel = 3;

  Index in_channels() const { return blocks.front().in_channels; }
  // Channel count of the latent at an insertion index.
  Index channels_at(Index insertion) const { return blocks.at(static_cast<std::size_t>(insertion - 1)).out_channels; }

  // Throws ConfigError on an inconsistent layout.
  void validate() const;

  friend bool operator==(const BackboneSpec&, const BackboneSpec&) = default;
};

// Encoder / two residual blocks / decoder network for 3-channel images.
BackboneSpec image_backbone();

// Pointwise (1×1) network over a 1×1×N coordinate grid.
BackboneSpec regression_backbone(Index width = 16);

// Same as image_backbone() with no insertion points.
BackboneSpec fixed_backbone();

// Parameter names a block owns, in initialization order.
std::vector<std::string> block_param_names(const BlockSpec& spec, const std::string& prefix);

std::string main_prefix(std::size_t block);
std::string tuning_prefix(std::size_t insertion);

template <class Scalar>
struct Param {
  std::string name;
  Tensor<Scalar> value;
  bool trainable = true;

  friend bool operator==(const Param&, const Param&) = default;
};

// Named parameters in insertion order.
template <class Scalar>
class ParamStore {
 public:
  void add(std::string name, Tensor<Scalar> value, bool trainable = true) {
    if (index_.count(name)) throw UsageError("duplicate parameter name '" + name + "'");
    index_.emplace(name, params_.size());
    params_.push_back(Param<Scalar>{std::move(name), std::move(value), trainable});
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("unknown parameter '" + name + "'");
    return it->second;
  }

  Param<Scalar>& at(const std::string& name) { return params_[index_of(name)]; }
  const Param<Scalar>& at(const std::string& name) const { return params_[index_of(name)]; }
  Param<Scalar>& operator[](std::size_t i) { return params_[i]; }
  const Param<Scalar>& operator[](std::size_t i) const { return params_[i]; }

  std::size_t size() const { return params_.size(); }
  bool empty() const { return params_.empty(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  Index numel() const {
    Index n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.params_ == b.params_; }

 private:
  std::vector<Param<Scalar>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Parameter store entries recorded on a tape.
template <class Scalar>
class ParamVars {
 public:
  ParamVars() = default;

  // Trainable entries become gradient leaves when `with_grad` is set;
  // everything else is recorded as a constant.
  ParamVars(Tape<Scalar>& tape, const ParamStore<Scalar>& store, bool with_grad) {
    vars_.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
      const auto& p = store[i];
      vars_.push_back(tape.leaf(p.value, with_grad && p.trainable));
      index_.emplace(p.name, i);
    }
  }

  // Binds already-recorded variables under the given names.
  ParamVars(const std::vector<std::string>& names, std::vector<Var<Scalar>> vars) : vars_(std::move(vars)) {
    if (names.size() != vars_.size()) throw UsageError("ParamVars: name/variable count mismatch");
    for (std::size_t i = 0; i < names.size(); ++i) index_.emplace(names[i], i);
  }

  const Var<Scalar>& operator[](const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("parameter '" + name + "' is not bound");
    return vars_[it->second];
  }

  const std::vector<Var<Scalar>>& vars() const { return vars_; }

 private:
  std::vector<Var<Scalar>> vars_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

template <class Scalar>
void init_conv(ParamStore<Scalar>& store, Rng& rng, const std::string& name, Index out_ch, Index in_ch, Index kernel,
               bool zero) {
  Tensor<Scalar> w({out_ch, in_ch, kernel, kernel});
  if (!zero) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_ch * kernel * kernel));
    for (Index i = 0; i < w.size(); ++i) w[i] = static_cast<Scalar>(stddev * rng.normal());
  }
  store.add(name + ".weight", std::move(w));
  store.add(name + ".bias", Tensor<Scalar>({out_ch}));
}

template <class Scalar>
void init_norm(ParamStore<Scalar>& store, const std::string& name, Index channels) {
  store.add(name + ".gain", Tensor<Scalar>::constant({channels}, Scalar(1)));
  store.add(name + ".shift", Tensor<Scalar>({channels}));
}

}  // namespace detail

// He-normal conv kernels, zero biases, identity instance-norm affine. The
// last conv of a TuningBlock starts at zero so the block outputs zeros.
template <class Scalar>
void init_block(ParamStore<Scalar>& store, const BlockSpec& spec, const std::string& prefix, Rng& rng) {
  const Index k = spec.kernel;
  switch (spec.kind) {
    case BlockKind::ConvINRelu:
    case BlockKind::UpsampleConv:
      detail::init_conv(store, rng, prefix + "conv", spec.out_channels, spec.in_channels, k, false);
      detail::init_norm(store, prefix + "norm", spec.out_channels);
      break;
    case BlockKind::ResidualBlock:
      detail::init_conv(store, rng, prefix + "conv1", spec.out_channels, spec.in_channels, k, false);
      detail::init_norm(store, prefix + "norm1", spec.out_channels);
      detail::init_conv(store, rng, prefix + "conv2", spec.out_channels, spec.out_channels, k, false);
      detail::init_norm(store, prefix + "norm2", spec.out_channels);
      break;
    case BlockKind::OutputConv:
      detail::init_conv(store, rng, prefix + "conv", spec.out_channels, spec.in_channels, k, false);
      break;
    case BlockKind::TuningBlock:
      detail::init_conv(store, rng, prefix + "conv1", spec.out_channels, spec.in_channels, k, false);
      detail::init_conv(store, rng, prefix + "conv2", spec.out_channels, spec.out_channels, k, false);
      detail::init_conv(store, rng, prefix + "conv3", spec.out_channels, spec.out_channels, k, true);
      break;
  }
}

template <class Scalar>
ParamStore<Scalar> init_params(const BlockSpec& spec, std::uint64_t seed, const std::string& prefix = "") {
  ParamStore<Scalar> store;
  Rng rng(seed);
  init_block(store, spec, prefix, rng);
  return store;
}

// Main-network parameters only ("main.<i>.*").
template <class Scalar>
ParamStore<Scalar> init_params(const BackboneSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamStore<Scalar> store;
  Rng rng(seed);
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) init_block(store, spec.blocks[i], main_prefix(i), rng);
  return store;
}

// Tuning-block parameters for every insertion point ("tune.<l>.*").
template <class Scalar>
ParamStore<Scalar> init_tuning_params(const BackboneSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamStore<Scalar> store;
  Rng rng(seed);
  for (std::size_t l = 0; l < spec.insertion_points.size(); ++l) {
    init_block(store, tuning_block(spec.channels_at(spec.insertion_points[l]), spec.tuning_kernel), tuning_prefix(l),
               rng);
  }
  return store;
}

inline constexpr double kInstanceNormEps = 1e-5;

template <class Scalar>
Var<Scalar> forward_block(const BlockSpec& spec, const ParamVars<Scalar>& p, const std::string& prefix,
                          const Var<Scalar>& x) {
  if (x.value().rank() != 3 || x.shape()[0] != spec.in_channels) {
    throw ShapeError("block " + prefix + ": expected " + std::to_string(spec.in_channels) +
                     " input channels, got tensor " + shape_string(x.shape()));
  }
  const Index pad = spec.padding();
  const auto eps = static_cast<Scalar>(kInstanceNormEps);
  auto conv = [&](const Var<Scalar>& in, const std::string& name, Index stride) {
    return conv2d(in, p[prefix + name + ".weight"], p[prefix + name + ".bias"], stride, pad);
  };
  auto norm = [&](const Var<Scalar>& in, const std::string& name) {
    return instance_norm(in, p[prefix + name + ".gain"], p[prefix + name + ".shift"], eps);
  };
  switch (spec.kind) {
    case BlockKind::ConvINRelu:
      return relu(norm(conv(x, "conv", spec.stride), "norm"));
    case BlockKind::UpsampleConv:
      return relu(norm(conv(upsample_nearest(x, spec.upsample), "conv", 1), "norm"));
    case BlockKind::ResidualBlock: {
      auto inner = norm(conv(relu(norm(conv(x, "conv1", 1), "norm1")), "conv2", 1), "norm2");
      return add(x, inner);
    }
    case BlockKind::OutputConv:
      return squash(conv(x, "conv", 1));
    case BlockKind::TuningBlock:
      return conv(relu(conv(relu(conv(x, "conv1", 1)), "conv2", 1)), "conv3", 1);
  }
  throw ConfigError("unknown block kind");
}

// Marks parameters non-trainable. A pattern is an exact name or a prefix
// followed by '*'. Every pattern must match at least one parameter.
template <class Scalar>
void set_trainable(ParamStore<Scalar>& store, const std::vector<std::string>& patterns, bool trainable) {
  for (const auto& pattern : patterns) {
    const bool is_prefix = !pattern.empty() && pattern.back() == '*';
    const std::string_view stem = is_prefix ? std::string_view(pattern).substr(0, pattern.size() - 1) : pattern;
    bool matched = false;
    for (auto& p : store) {
      if (is_prefix ? std::string_view(p.name).starts_with(stem) : p.name == pattern) {
        p.trainable = trainable;
        matched = true;
      }
    }
    if (!matched) throw UsageError("freeze: no parameter matches '" + pattern + "'");
  }
}

template <class Scalar>
void freeze(ParamStore<Scalar>& store, const std::vector<std::string>& patterns) {
  set_trainable(store, patterns, false);
}

template <class Scalar>
void freeze_all(ParamStore<Scalar>& store) {
  for (auto& p : store) p.trainable = false;
}

// ---------------------------------------------------------------------------
// Weight files: little-endian "DYNW" container.

inline constexpr std::uint32_t kWeightsVersion = 1;

template <class Scalar>
constexpr std::uint8_t dtype_code() {
  static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>);
  return std::is_same_v<Scalar, float> ? 0 : 1;
}

namespace detail {

class ByteWriter {
 public:
  template <class UInt>
  void put(UInt v) {
    for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void put_bytes(std::string_view s) { bytes_.append(s); }
  template <class Real>
  void put_real(Real r) {
    using Bits = std::conditional_t<sizeof(Real) == 4, std::uint32_t, std::uint64_t>;
    Bits bits;
    std::memcpy(&bits, &r, sizeof(Real));
    put(bits);
  }
  std::string take() { return std::move(bytes_); }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <class UInt>
  UInt get(const char* what) {
    need(sizeof(UInt), what);
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
      v |= static_cast<UInt>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(UInt);
    return v;
  }
  std::string_view get_bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <class Real>
  Real get_real(const char* what) {
    using Bits = std::conditional_t<sizeof(Real) == 4, std::uint32_t, std::uint64_t>;
    const Bits bits = get<Bits>(what);
    Real r;
    std::memcpy(&r, &bits, sizeof(Real));
    return r;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated weight file while reading ") + what, pos_);
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <class Scalar>
std::string serialize_weights(const ParamStore<Scalar>& store) {
  detail::ByteWriter w;
  w.put_bytes("DYNW");
  w.put<std::uint32_t>(kWeightsVersion);
  w.put<std::uint8_t>(dtype_code<Scalar>());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(store.size()));
  for (const auto& p : store) {
    if (p.name.size() > 0xFFFF) throw UsageError("parameter name too long: " + p.name);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(p.name.size()));
    w.put_bytes(p.name);
    w.put<std::uint8_t>(p.trainable ? 1 : 0);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p.value.rank()));
    for (Index d : p.value.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (Index i = 0; i < p.value.size(); ++i) w.put_real(p.value[i]);
  }
  return w.take();
}

template <class Scalar>
ParamStore<Scalar> deserialize_weights(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.get_bytes(4, "magic") != "DYNW") throw FormatError("bad magic, not a DYNW weight file", 0);
  const std::size_t version_at = r.pos();
  if (const auto version = r.get<std::uint32_t>("version"); version != kWeightsVersion) {
    throw FormatError("unsupported weight file version " + std::to_string(version), version_at);
  }
  const std::size_t dtype_at = r.pos();
  if (const auto dtype = r.get<std::uint8_t>("dtype"); dtype != dtype_code<Scalar>()) {
    throw FormatError(std::string("dtype mismatch: file holds ") + (dtype == 0 ? "f32" : dtype == 1 ? "f64" : "?") +
                          " values, this build expects " + (dtype_code<Scalar>() == 0 ? "f32" : "f64"),
                      dtype_at);
  }
  const auto count = r.get<std::uint32_t>("tensor count");
  ParamStore<Scalar> store;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = r.get<std::uint16_t>("name length");
    const std::size_t name_at = r.pos();
    std::string name(r.get_bytes(name_len, "name"));
    if (store.contains(name)) throw FormatError("duplicate tensor name '" + name + "'", name_at);
    const std::size_t flag_at = r.pos();
    const auto trainable = r.get<std::uint8_t>("trainable flag");
    if (trainable > 1) throw FormatError("invalid trainable flag", flag_at);
    const std::size_t rank_at = r.pos();
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank == 0) throw FormatError("tensor '" + name + "' has rank 0", rank_at);
    Shape shape;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::size_t dim_at = r.pos();
      const auto dim = r.get<std::uint32_t>("dimension");
      if (dim == 0) throw FormatError("tensor '" + name + "' has a zero dimension", dim_at);
      shape.push_back(static_cast<Index>(dim));
    }
    Tensor<Scalar> value(shape);
    for (Index i = 0; i < value.size(); ++i) value[i] = r.template get_real<Scalar>("tensor data");
    store.add(std::move(name), std::move(value), trainable == 1);
  }
  if (!r.done()) throw FormatError("trailing bytes after last tensor", r.pos());
  return store;
}

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

template <class Scalar>
void save_weights(const ParamStore<Scalar>& store, const std::string& path) {
  write_file(path, serialize_weights(store));
}

template <class Scalar>
ParamStore<Scalar> load_weights(const std::string& path) {
  return deserialize_weights<Scalar>(read_file(path));
}

}  // namespace dynanet
