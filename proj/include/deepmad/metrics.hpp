#pragma once

// Closed-form network metrics: projected width, entropy, effectiveness,
// depth uniformity penalty, Params and FLOPs.
//
// All logarithms are natural logarithms.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepmad/arch.hpp"

namespace deepmad {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Counting conventions. The default-constructed value is the calibrated
/// convention (see catalog::calibrate and docs/calibration.md).
struct Convention {
  // Projection shortcuts join the entropy / effectiveness layer sequence.
  bool shortcuts_in_entropy = false;
  // The stem conv joins the entropy sum of the first stage and the
  // effectiveness layer sequence.
  bool stem_in_entropy = true;
  // BatchNorm affine parameters count as 2 params per output channel and
  // 2 FLOPs (scale, shift) per output element.
  bool batch_norm = true;
  // Stage entropy sums every entropy-path layer from the network input
  // through the stage (true) or only the stage's own layers (false).
  bool cumulative_stage_entropy = true;

  bool operator==(const Convention&) const = default;
};

std::string describe(const Convention& c);

/// c_in * k^2 / g: the MLP-equivalent width of a conv layer.
double projected_width(const LayerDescriptor& layer);

/// out_width * sum(log w_i). Throws DomainError for any width < 1.
double mlp_entropy(std::span<const double> widths, double out_width);

/// log(r_out^2 * c_out) * sum(log projected_width) over `layers`.
double cnn_entropy(std::span<const LayerDescriptor> layers, int r_out, std::int64_t c_out);

/// Geometric mean, accumulated in log space.
double average_width(std::span<const double> widths);

/// exp of the population variance of the stage depths.
double depth_uniformity_penalty(std::span<const int> depths);
double depth_uniformity_penalty(std::span<const double> depths);

/// Layers counted by the effectiveness constraint: stem (per convention),
/// every main-path conv, shortcuts (per convention), head and classifier.
bool on_effectiveness_path(const LayerDescriptor& layer, const Convention& conv);
/// Layers summed into the per-stage entropies: the effectiveness path minus
/// head and classifier, which sit after the last stage.
bool on_stage_entropy_path(const LayerDescriptor& layer, const Convention& conv);

std::vector<double> effectiveness_widths(std::span<const LayerDescriptor> layers,
                                         const Convention& conv = {});
double effectiveness(const NetworkSpec& net, const Convention& conv = {});

struct WeightedEntropy {
  double total = 0.0;
  std::vector<double> per_stage;
};

/// {1, ..., 1, 8}: unit weights with 8 on the deepest stage.
std::vector<double> default_alphas(int stages);

WeightedEntropy weighted_entropy(const NetworkSpec& net, std::span<const double> alphas,
                                 const Convention& conv = {});
WeightedEntropy weighted_entropy(const NetworkSpec& net, std::span<const LayerDescriptor> layers,
                                 std::span<const double> alphas, const Convention& conv = {});

std::int64_t layer_params(const LayerDescriptor& layer, const Convention& conv = {});
std::int64_t layer_macs(const LayerDescriptor& layer);
std::int64_t layer_flops(const LayerDescriptor& layer, const Convention& conv = {});

std::int64_t count_params(const NetworkSpec& net, const Convention& conv = {});
std::int64_t count_macs(const NetworkSpec& net);
std::int64_t count_flops(const NetworkSpec& net, const Convention& conv = {});

/// Stage output channels are non-decreasing.
bool monotone_width_check(const NetworkSpec& net);

struct MetricReport {
  std::vector<double> entropy_per_stage;
  std::vector<double> alphas;
  double weighted_entropy = 0.0;
  double rho = 0.0;
  double Q = 1.0;
  std::int64_t params = 0;
  std::int64_t flops = 0;
  std::int64_t macs = 0;
  int depth = 0;  // layers on the effectiveness path
  double average_width = 0.0;
  std::vector<double> widths;
  std::vector<int> stage_widths;
  std::vector<int> stage_depths;
  bool monotone = true;
};

/// Empty `alphas` selects default_alphas(M).
MetricReport analyze(const NetworkSpec& net, std::span<const double> alphas = {},
                     const Convention& conv = {});

}  // namespace deepmad
