#include "deepmad/metrics.hpp"

#include <cmath>
#include <sstream>

namespace deepmad {

namespace {

double checked_log(double w) {
  if (!(w >= 1.0)) {
    std::ostringstream os;
    os << "width " << w << " is below 1; entropy is defined for widths >= 1";
    throw DomainError(os.str());
  }
  return std::log(w);
}

template <class T>
double exp_population_variance(std::span<const T> values) {
  if (values.empty()) return 1.0;
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (T v : values) mean += static_cast<double>(v);
  mean /= n;
  double var = 0.0;
  for (T v : values) {
    const double d = static_cast<double>(v) - mean;
    var += d * d;
  }
  return std::exp(var / n);
}

void check_alphas(std::span<const double> alphas, std::size_t stages) {
  if (alphas.size() != stages) {
    std::ostringstream os;
    os << "alpha length " << alphas.size() << " does not match stage count " << stages;
    throw std::invalid_argument(os.str());
  }
  for (double a : alphas) {
    if (!(a >= 0.0)) throw std::invalid_argument("alpha weights must be non-negative");
  }
}

}  // namespace

std::string describe(const Convention& c) {
  std::ostringstream os;
  os << "shortcuts_in_entropy=" << c.shortcuts_in_entropy
     << ",stem_in_entropy=" << c.stem_in_entropy << ",batch_norm=" << c.batch_norm
     << ",cumulative_stage_entropy=" << c.cumulative_stage_entropy;
  return os.str();
}

double projected_width(const LayerDescriptor& layer) {
  return static_cast<double>(layer.c_in) * layer.kernel * layer.kernel /
         static_cast<double>(layer.groups);
}

double mlp_entropy(std::span<const double> widths, double out_width) {
  double sum = 0.0;
  for (double w : widths) sum += checked_log(w);
  return out_width * sum;
}

double cnn_entropy(std::span<const LayerDescriptor> layers, int r_out, std::int64_t c_out) {
  if (layers.empty()) throw DomainError("cnn_entropy needs at least one layer");
  if (r_out < 1 || c_out < 1) throw DomainError("output resolution and channels must be >= 1");
  double sum = 0.0;
  for (const auto& l : layers) sum += checked_log(projected_width(l));
  const double volume = static_cast<double>(r_out) * r_out * static_cast<double>(c_out);
  return std::log(volume) * sum;
}

double average_width(std::span<const double> widths) {
  if (widths.empty()) throw DomainError("average width of an empty layer list");
  // Logs of ratios to the first width: equal widths give exactly zero, so
  // the mean of a constant list is that constant.
  const double pivot = widths.front();
  double sum = 0.0;
  for (double w : widths) {
    if (!(w > 0.0)) throw DomainError("average width needs positive widths");
    sum += std::log(w / pivot);
  }
  return pivot * std::exp(sum / static_cast<double>(widths.size()));
}

double depth_uniformity_penalty(std::span<const int> depths) {
  if (depths.empty()) return 1.0;
  // n^2 * variance = n * sum(d^2) - sum(d)^2 is an exact integer, so the
  // result does not depend on the order of the depths.
  std::int64_t sum = 0, sum_sq = 0;
  for (int d : depths) {
    sum += d;
    sum_sq += static_cast<std::int64_t>(d) * d;
  }
  const auto n = static_cast<std::int64_t>(depths.size());
  const double scaled = static_cast<double>(n * sum_sq - sum * sum);
  return std::exp(scaled / static_cast<double>(n * n));
}

double depth_uniformity_penalty(std::span<const double> depths) {
  return exp_population_variance(depths);
}

bool on_stage_entropy_path(const LayerDescriptor& layer, const Convention& conv) {
  switch (layer.role) {
    case LayerRole::Main: return true;
    case LayerRole::Stem: return conv.stem_in_entropy;
    case LayerRole::Shortcut: return conv.shortcuts_in_entropy;
    default: return false;
  }
}

bool on_effectiveness_path(const LayerDescriptor& layer, const Convention& conv) {
  if (layer.role == LayerRole::Head || layer.role == LayerRole::Classifier) return true;
  return on_stage_entropy_path(layer, conv);
}

std::vector<double> effectiveness_widths(std::span<const LayerDescriptor> layers,
                                         const Convention& conv) {
  std::vector<double> widths;
  widths.reserve(layers.size());
  for (const auto& l : layers) {
    if (on_effectiveness_path(l, conv)) widths.push_back(projected_width(l));
  }
  return widths;
}

double effectiveness(const NetworkSpec& net, const Convention& conv) {
  const auto layers = expand(net);
  const auto widths = effectiveness_widths(layers, conv);
  return static_cast<double>(widths.size()) / average_width(widths);
}

std::vector<double> default_alphas(int stages) {
  std::vector<double> alphas(static_cast<std::size_t>(std::max(stages, 0)), 1.0);
  if (!alphas.empty()) alphas.back() = 8.0;
  return alphas;
}

WeightedEntropy weighted_entropy(const NetworkSpec& net, std::span<const double> alphas,
                                 const Convention& conv) {
  const auto layers = expand(net);
  return weighted_entropy(net, layers, alphas, conv);
}

WeightedEntropy weighted_entropy(const NetworkSpec& net, std::span<const LayerDescriptor> layers,
                                 std::span<const double> alphas, const Convention& conv) {
  const std::size_t m = net.stages.size();
  check_alphas(alphas, m);

  // Running log-width sums; `stage_sums[i]` holds only stage i's layers, with
  // the stem attributed to stage 0.
  std::vector<double> stage_sums(m, 0.0);
  std::vector<const LayerDescriptor*> last(m, nullptr);
  for (const auto& l : layers) {
    if (!on_stage_entropy_path(l, conv)) continue;
    const int stage = l.role == LayerRole::Stem ? 0 : l.stage;
    stage_sums[static_cast<std::size_t>(stage)] += checked_log(projected_width(l));
    if (l.role == LayerRole::Main) last[static_cast<std::size_t>(l.stage)] = &l;
  }

  WeightedEntropy out;
  out.per_stage.resize(m);
  double running = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    running += stage_sums[i];
    const double sum = conv.cumulative_stage_entropy ? running : stage_sums[i];
    const LayerDescriptor* tail = last[i];
    const double volume =
        static_cast<double>(tail->r_out) * tail->r_out * static_cast<double>(tail->c_out);
    out.per_stage[i] = std::log(volume) * sum;
    out.total += alphas[i] * out.per_stage[i];
  }
  return out;
}

std::int64_t layer_params(const LayerDescriptor& l, const Convention& conv) {
  std::int64_t p = l.c_out * l.c_in * l.kernel * l.kernel / l.groups;
  if (l.bias) p += l.c_out;
  if (l.batch_norm && conv.batch_norm) p += 2 * l.c_out;
  return p;
}

std::int64_t layer_macs(const LayerDescriptor& l) {
  const std::int64_t area = static_cast<std::int64_t>(l.r_out) * l.r_out;
  return l.c_out * l.c_in * l.kernel * l.kernel / l.groups * area;
}

std::int64_t layer_flops(const LayerDescriptor& l, const Convention& conv) {
  std::int64_t f = layer_macs(l);
  if (l.batch_norm && conv.batch_norm) {
    f += 2 * l.c_out * static_cast<std::int64_t>(l.r_out) * l.r_out;
  }
  return f;
}

std::int64_t count_params(const NetworkSpec& net, const Convention& conv) {
  std::int64_t total = 0;
  for (const auto& l : expand(net)) total += layer_params(l, conv);
  return total;
}

std::int64_t count_macs(const NetworkSpec& net) {
  std::int64_t total = 0;
  for (const auto& l : expand(net)) total += layer_macs(l);
  return total;
}

std::int64_t count_flops(const NetworkSpec& net, const Convention& conv) {
  std::int64_t total = 0;
  for (const auto& l : expand(net)) total += layer_flops(l, conv);
  return total;
}

bool monotone_width_check(const NetworkSpec& net) {
  for (std::size_t i = 1; i < net.stages.size(); ++i) {
    if (net.stages[i].width < net.stages[i - 1].width) return false;
  }
  return true;
}

MetricReport analyze(const NetworkSpec& net, std::span<const double> alphas,
                     const Convention& conv) {
  const auto layers = expand(net);
  MetricReport r;
  r.alphas = alphas.empty() ? default_alphas(static_cast<int>(net.stages.size()))
                            : std::vector<double>(alphas.begin(), alphas.end());
  const auto we = weighted_entropy(net, layers, r.alphas, conv);
  r.entropy_per_stage = we.per_stage;
  r.weighted_entropy = we.total;
  r.widths = effectiveness_widths(layers, conv);
  r.depth = static_cast<int>(r.widths.size());
  r.average_width = average_width(r.widths);
  r.rho = r.depth / r.average_width;
  for (const auto& s : net.stages) {
    r.stage_widths.push_back(s.width);
    r.stage_depths.push_back(s.depth);
  }
  r.Q = depth_uniformity_penalty(std::span<const int>(r.stage_depths));
  for (const auto& l : layers) {
    r.params += layer_params(l, conv);
    r.flops += layer_flops(l, conv);
    r.macs += layer_macs(l);
  }
  r.monotone = monotone_width_check(net);
  return r;
}

}  // namespace deepmad
