#pragma once

// Architecture data model: block-level network descriptions and their
// expansion into a flat list of convolution layers.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace deepmad {

enum class BlockType {
  PlainConvBNReLU,
  ResNetBasic,
  ResNetBottleneck,
  MobileNetV2SE,
};

/// Fixed structure of one block family. Only the fields relevant to `type`
/// are read during expansion.
struct BlockKind {
  BlockType type = BlockType::PlainConvBNReLU;
  int bottleneck_ratio = 4;  // ResNetBottleneck: inner width = width / ratio
  int expansion_ratio = 6;   // MobileNetV2SE: inner width = c_in * ratio
  int se_reduction = 4;      // MobileNetV2SE: squeeze = max(1, c_in / r); 0 disables SE
  int kernel = 3;            // default main-conv kernel used when realizing candidates

  bool operator==(const BlockKind&) const = default;
};

struct StageSpec {
  BlockKind block;
  int depth = 1;   // number of blocks
  int width = 1;   // output channels
  int kernel = 3;
  int groups = 1;  // groups of the main k x k conv; must be 1 for MobileNetV2SE
  bool downsample = false;

  bool operator==(const StageSpec&) const = default;
};

struct StemSpec {
  int channels = 32;
  int kernel = 3;
  int stride = 2;
  bool max_pool = false;  // stride-2 pooling after the stem conv (ResNet)

  bool operator==(const StemSpec&) const = default;
};

struct NetworkSpec {
  int input_resolution = 224;
  int input_channels = 3;
  StemSpec stem;
  std::vector<StageSpec> stages;
  int head_channels = 0;  // 0: no head conv before the classifier
  int num_classes = 1000;

  bool operator==(const NetworkSpec&) const = default;
};

enum class LayerRole {
  Stem,
  Main,
  Shortcut,
  SqueezeExcite,
  Head,
  Classifier,
};

/// One convolution after block expansion. The classifier is a 1x1 conv at
/// resolution 1; squeeze-excite convs also run at resolution 1.
struct LayerDescriptor {
  std::int64_t c_in = 1;
  std::int64_t c_out = 1;
  int kernel = 1;
  std::int64_t groups = 1;
  int stride = 1;
  int r_in = 1;
  int r_out = 1;
  LayerRole role = LayerRole::Main;
  int stage = -1;  // -1 for stem, head and classifier
  int block = -1;
  bool batch_norm = true;
  bool bias = false;

  bool operator==(const LayerDescriptor&) const = default;
};

struct Violation {
  std::string code;
  std::string message;
  int stage = -1;

  bool operator==(const Violation&) const = default;
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

std::string to_string(BlockType type);
std::string to_string(LayerRole role);

/// Returns every invariant violation; an empty list means expand succeeds.
std::vector<Violation> validate(const NetworkSpec& net);

/// Every conv layer in execution order. Throws ValidationError.
std::vector<LayerDescriptor> expand(const NetworkSpec& net);

/// Number of main-path stride-2 convs the network declares (stem stride and
/// stage downsample flags; pooling is not a conv).
int declared_strided_convs(const NetworkSpec& net);

/// Resolution at the output of each stage.
std::vector<int> stage_resolutions(const NetworkSpec& net);

namespace detail {

inline std::int64_t ratio_div(std::int64_t a, std::int64_t b) { return a / b; }
inline double ratio_div(double a, double b) { return a / b; }

/// Layer shape shared by the integer expansion and the relaxed (real-valued)
/// cost model used by the solver.
template <class Scalar>
struct ConvShape {
  Scalar c_in;
  Scalar c_out;
  int kernel;
  Scalar groups;
  int stride;
  int r_in;
  int r_out;
  LayerRole role;
  bool batch_norm;
  bool bias;
};

inline int halve(int r) { return (r + 1) / 2; }

/// Appends the convs of one block in execution order.
template <class Scalar, class Sink>
void expand_block(const BlockKind& kind, Scalar c_in, Scalar c_out, int kernel, Scalar groups,
                  int stride, int r_in, Sink&& sink) {
  const int r_out = stride == 2 ? halve(r_in) : r_in;
  auto conv = [&](Scalar ci, Scalar co, int k, Scalar g, int s, int ri, int ro, LayerRole role,
                  bool bn, bool bias) {
    sink(ConvShape<Scalar>{ci, co, k, g, s, ri, ro, role, bn, bias});
  };
  const Scalar one = Scalar(1);
  switch (kind.type) {
    case BlockType::PlainConvBNReLU:
      conv(c_in, c_out, kernel, groups, stride, r_in, r_out, LayerRole::Main, true, false);
      break;
    case BlockType::ResNetBasic:
      conv(c_in, c_out, kernel, groups, stride, r_in, r_out, LayerRole::Main, true, false);
      conv(c_out, c_out, kernel, groups, 1, r_out, r_out, LayerRole::Main, true, false);
      if (stride != 1 || c_in != c_out) {
        conv(c_in, c_out, 1, one, stride, r_in, r_out, LayerRole::Shortcut, true, false);
      }
      break;
    case BlockType::ResNetBottleneck: {
      const Scalar mid = ratio_div(c_out, Scalar(kind.bottleneck_ratio));
      conv(c_in, mid, 1, one, 1, r_in, r_in, LayerRole::Main, true, false);
      conv(mid, mid, kernel, groups, stride, r_in, r_out, LayerRole::Main, true, false);
      conv(mid, c_out, 1, one, 1, r_out, r_out, LayerRole::Main, true, false);
      if (stride != 1 || c_in != c_out) {
        conv(c_in, c_out, 1, one, stride, r_in, r_out, LayerRole::Shortcut, true, false);
      }
      break;
    }
    case BlockType::MobileNetV2SE: {
      const Scalar mid = c_in * Scalar(kind.expansion_ratio);
      if (kind.expansion_ratio != 1) {
        conv(c_in, mid, 1, one, 1, r_in, r_in, LayerRole::Main, true, false);
      }
      conv(mid, mid, kernel, mid, stride, r_in, r_out, LayerRole::Main, true, false);
      if (kind.se_reduction > 0) {
        Scalar squeeze = ratio_div(c_in, Scalar(kind.se_reduction));
        if (squeeze < one) squeeze = one;
        conv(mid, squeeze, 1, one, 1, 1, 1, LayerRole::SqueezeExcite, false, true);
        conv(squeeze, mid, 1, one, 1, 1, 1, LayerRole::SqueezeExcite, false, true);
      }
      conv(mid, c_out, 1, one, 1, r_out, r_out, LayerRole::Main, true, false);
      break;
    }
  }
}

}  // namespace detail
}  // namespace deepmad
