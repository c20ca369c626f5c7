#include "dynanet/nn.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

namespace dynanet {

std::string_view block_kind_name(BlockKind kind) {
  switch (kind) {
    case BlockKind::ConvINRelu: return "ConvINRelu";
    case BlockKind::ResidualBlock: return "ResidualBlock";
    case BlockKind::UpsampleConv: return "UpsampleConv";
    case BlockKind::OutputConv: return "OutputConv";
    case BlockKind::TuningBlock: return "TuningBlock";
  }
  return "?";
}

BlockSpec tuning_block(Index channels, Index kernel) {
  return BlockSpec{BlockKind::TuningBlock, channels, channels, kernel, 1, 1};
}

void BackboneSpec::validate() const {
  if (blocks.empty()) throw ConfigError("backbone has no blocks");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string where = "block " + std::to_string(i) + " (" + std::string(block_kind_name(b.kind)) + ")";
    if (b.in_channels < 1 || b.out_channels < 1) throw ConfigError(where + ": channel counts must be positive");
    if (b.kernel < 1 || b.kernel % 2 == 0) throw ConfigError(where + ": kernel size must be odd");
    if (b.stride < 1 || b.upsample < 1) throw ConfigError(where + ": stride and upsample must be positive");
    if (b.kind == BlockKind::TuningBlock) throw ConfigError(where + ": tuning-blocks cannot be main blocks");
    if (b.kind == BlockKind::ResidualBlock && (b.in_channels != b.out_channels || b.stride != 1)) {
      throw ConfigError(where + ": residual blocks keep channel count and resolution");
    }
    if (i > 0 && blocks[i - 1].out_channels != b.in_channels) {
      throw ConfigError(where + ": input channels do not match the previous block");
    }
  }
  Index prev = 0;
  for (Index p : insertion_points) {
    if (p <= prev || p > static_cast<Index>(blocks.size())) {
      throw ConfigError("insertion points must be strictly increasing within [1, " + std::to_string(blocks.size()) +
                        "]");
    }
    prev = p;
  }
  if (tuning_kernel < 1 || tuning_kernel % 2 == 0) throw ConfigError("tuning kernel size must be odd");
}

BackboneSpec image_backbone() {
  using K = BlockKind;
  BackboneSpec spec;
  spec.blocks = {
      {K::ConvINRelu, 3, 16, 3, 1, 1},    {K::ConvINRelu, 16, 32, 3, 2, 1},  {K::ConvINRelu, 32, 32, 3, 2, 1},
      {K::ResidualBlock, 32, 32, 3, 1, 1}, {K::ResidualBlock, 32, 32, 3, 1, 1}, {K::UpsampleConv, 32, 16, 3, 1, 2},
      {K::UpsampleConv, 16, 16, 3, 1, 2}, {K::OutputConv, 16, 3, 3, 1, 1},
  };
  // After the last downsampling block and after each residual block.
  spec.insertion_points = {3, 4, 5};
  spec.tuning_kernel = 3;
  return spec;
}

BackboneSpec fixed_backbone() {
  auto spec = image_backbone();
  spec.insertion_points.clear();
  return spec;
}

BackboneSpec regression_backbone(Index width) {
  using K = BlockKind;
  BackboneSpec spec;
  spec.blocks = {
      {K::ConvINRelu, 1, width, 1, 1, 1},       {K::ConvINRelu, width, width, 1, 1, 1},
      {K::ResidualBlock, width, width, 1, 1, 1}, {K::ResidualBlock, width, width, 1, 1, 1},
      {K::OutputConv, width, 1, 1, 1, 1},
  };
  spec.insertion_points = {2, 3, 4};
  spec.tuning_kernel = 1;
  return spec;
}

std::vector<std::string> block_param_names(const BlockSpec& spec, const std::string& prefix) {
  ParamStore<float> store;
  Rng rng(0);
  init_block(store, spec, prefix, rng);
  std::vector<std::string> names;
  for (const auto& p : store) names.push_back(p.name);
  return names;
}

std::string main_prefix(std::size_t block) { return "main." + std::to_string(block) + "."; }

std::string tuning_prefix(std::size_t insertion) { return "tune." + std::to_string(insertion) + "."; }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read error on '" + path + "'");
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write error on '" + path + "'");
}

}  // namespace dynanet
