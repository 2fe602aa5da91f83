#include "deepmad/arch.hpp"

#include <sstream>

namespace deepmad {

namespace {

std::string join_messages(const std::vector<Violation>& violations) {
  std::ostringstream os;
  os << "invalid network:";
  for (const auto& v : violations) {
    os << " [" << v.code;
    if (v.stage >= 0) os << " @stage " << v.stage;
    os << "] " << v.message << ";";
  }
  return os.str();
}

void check_kernel(int kernel, int stage, const char* what, std::vector<Violation>& out) {
  if (kernel < 1) {
    out.push_back({"kernel_nonpositive", std::string(what) + " kernel must be positive", stage});
  } else if (kernel % 2 == 0) {
    out.push_back({"kernel_not_odd", std::string(what) + " kernel must be odd", stage});
  }
}

}  // namespace

ValidationError::ValidationError(std::vector<Violation> violations)
    : std::runtime_error(join_messages(violations)), violations_(std::move(violations)) {}

std::string to_string(BlockType type) {
  switch (type) {
    case BlockType::PlainConvBNReLU: return "PlainConvBNReLU";
    case BlockType::ResNetBasic: return "ResNetBasic";
    case BlockType::ResNetBottleneck: return "ResNetBottleneck";
    case BlockType::MobileNetV2SE: return "MobileNetV2SE";
  }
  return "?";
}

std::string to_string(LayerRole role) {
  switch (role) {
    case LayerRole::Stem: return "stem";
    case LayerRole::Main: return "main";
    case LayerRole::Shortcut: return "shortcut";
    case LayerRole::SqueezeExcite: return "squeeze_excite";
    case LayerRole::Head: return "head";
    case LayerRole::Classifier: return "classifier";
  }
  return "?";
}

std::vector<Violation> validate(const NetworkSpec& net) {
  std::vector<Violation> out;
  if (net.input_resolution < 1) {
    out.push_back({"resolution_nonpositive", "input resolution must be positive", -1});
  }
  if (net.input_channels < 1) {
    out.push_back({"channels_nonpositive", "input channels must be positive", -1});
  }
  if (net.num_classes < 1) {
    out.push_back({"classes_nonpositive", "num_classes must be positive", -1});
  }
  if (net.head_channels < 0) {
    out.push_back({"head_negative", "head_channels must be >= 0 (0 disables the head conv)", -1});
  }
  if (net.stem.channels < 1) {
    out.push_back({"channels_nonpositive", "stem channels must be positive", -1});
  }
  check_kernel(net.stem.kernel, -1, "stem", out);
  if (net.stem.stride != 1 && net.stem.stride != 2) {
    out.push_back({"stride_invalid", "stem stride must be 1 or 2", -1});
  }
  if (net.stages.empty()) {
    out.push_back({"no_stages", "network needs at least one stage", -1});
  }

  int r = net.input_resolution;
  bool underflow_reported = false;
  auto downsample = [&](int stage) {
    if (r < 2 && !underflow_reported && net.input_resolution >= 1) {
      out.push_back({"resolution_underflow", "resolution underflow: downsampling a 1x1 feature map",
                     stage});
      underflow_reported = true;
    }
    r = detail::halve(r);
  };
  if (net.stem.stride == 2) downsample(-1);
  if (net.stem.max_pool) downsample(-1);

  std::int64_t c_in = net.stem.channels;
  for (int i = 0; i < static_cast<int>(net.stages.size()); ++i) {
    const StageSpec& s = net.stages[i];
    const BlockKind& b = s.block;
    if (s.depth < 1) out.push_back({"depth_nonpositive", "depth must be >= 1", i});
    if (s.width < 1) out.push_back({"width_nonpositive", "width must be >= 1", i});
    check_kernel(s.kernel, i, "stage", out);
    if (s.groups < 1) out.push_back({"groups_nonpositive", "groups must be >= 1", i});

    const bool shape_ok = s.width >= 1 && s.groups >= 1 && c_in >= 1;
    switch (b.type) {
      case BlockType::PlainConvBNReLU:
      case BlockType::ResNetBasic:
        if (shape_ok && (c_in % s.groups != 0 || s.width % s.groups != 0)) {
          out.push_back({"groups_not_divisor", "groups must divide input and output channels", i});
        }
        break;
      case BlockType::ResNetBottleneck:
        if (b.bottleneck_ratio < 1) {
          out.push_back({"ratio_invalid", "bottleneck ratio must be > 0", i});
        } else if (s.width >= 1 && s.width % b.bottleneck_ratio != 0) {
          out.push_back({"width_not_divisible", "width must be a multiple of the bottleneck ratio", i});
        } else if (shape_ok && (s.width / b.bottleneck_ratio) % s.groups != 0) {
          out.push_back({"groups_not_divisor", "groups must divide the bottleneck width", i});
        }
        break;
      case BlockType::MobileNetV2SE:
        if (b.expansion_ratio < 1) {
          out.push_back({"ratio_invalid", "expansion ratio must be > 0", i});
        }
        if (b.se_reduction < 0) {
          out.push_back({"ratio_invalid", "SE reduction ratio must be >= 1 (or 0 to disable SE)", i});
        }
        if (s.groups != 1) {
          out.push_back({"groups_unsupported",
                         "MobileNetV2SE stages take groups = 1; the depthwise conv is implicit", i});
        }
        break;
    }
    if (s.downsample) downsample(i);
    if (s.width >= 1) c_in = s.width;
  }
  return out;
}

std::vector<LayerDescriptor> expand(const NetworkSpec& net) {
  if (auto violations = validate(net); !violations.empty()) {
    throw ValidationError(std::move(violations));
  }
  std::vector<LayerDescriptor> layers;
  int r = net.input_resolution;
  const int stem_out = net.stem.stride == 2 ? detail::halve(r) : r;
  layers.push_back({net.input_channels, net.stem.channels, net.stem.kernel, 1, net.stem.stride, r,
                    stem_out, LayerRole::Stem, -1, -1, true, false});
  r = stem_out;
  if (net.stem.max_pool) r = detail::halve(r);

  std::int64_t c_in = net.stem.channels;
  for (int i = 0; i < static_cast<int>(net.stages.size()); ++i) {
    const StageSpec& s = net.stages[i];
    for (int blk = 0; blk < s.depth; ++blk) {
      const int stride = (blk == 0 && s.downsample) ? 2 : 1;
      const std::int64_t in = blk == 0 ? c_in : s.width;
      detail::expand_block<std::int64_t>(
          s.block, in, s.width, s.kernel, s.groups, stride, r,
          [&](const detail::ConvShape<std::int64_t>& c) {
            layers.push_back({c.c_in, c.c_out, c.kernel, c.groups, c.stride, c.r_in, c.r_out, c.role,
                              i, blk, c.batch_norm, c.bias});
          });
      if (stride == 2) r = detail::halve(r);
    }
    c_in = s.width;
  }
  if (net.head_channels > 0) {
    layers.push_back({c_in, net.head_channels, 1, 1, 1, r, r, LayerRole::Head, -1, -1, true, false});
    c_in = net.head_channels;
  }
  layers.push_back({c_in, net.num_classes, 1, 1, 1, 1, 1, LayerRole::Classifier, -1, -1, false, true});
  return layers;
}

int declared_strided_convs(const NetworkSpec& net) {
  int n = net.stem.stride == 2 ? 1 : 0;
  for (const auto& s : net.stages) n += s.downsample ? 1 : 0;
  return n;
}

std::vector<int> stage_resolutions(const NetworkSpec& net) {
  std::vector<int> out;
  int r = net.input_resolution;
  if (net.stem.stride == 2) r = detail::halve(r);
  if (net.stem.max_pool) r = detail::halve(r);
  for (const auto& s : net.stages) {
    if (s.downsample) r = detail::halve(r);
    out.push_back(r);
  }
  return out;
}

}  // namespace deepmad
