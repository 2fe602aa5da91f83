#include "relaxed.hpp"

#include <cmath>
#include <limits>

namespace deepmad::detail {

RelaxedModel::RelaxedModel(const ProblemSpec& prob) : prob_(prob) {
  int r = prob.input_resolution;
  if (prob.stem.stride == 2) r = halve(r);
  stem_r_out_ = r;
  if (prob.stem.max_pool) r = halve(r);
  for (int i = 0; i < prob.stages; ++i) {
    r_in_.push_back(r);
    if (prob.downsample[static_cast<std::size_t>(i)]) r = halve(r);
    r_out_.push_back(r);
  }
}

void RelaxedModel::add_layer(const ConvShape<double>& c, Totals& t) const {
  const Convention& conv = prob_.convention;
  const double weights = c.c_out * c.c_in * c.kernel * c.kernel / c.groups;
  const double area = static_cast<double>(c.r_out) * c.r_out;
  t.params += weights;
  t.flops += weights * area;
  if (c.bias) t.params += c.c_out;
  if (c.batch_norm && conv.batch_norm) {
    t.params += 2.0 * c.c_out;
    t.flops += 2.0 * c.c_out * area;
  }
  const bool on_path = c.role == LayerRole::Main ||
                       (c.role == LayerRole::Shortcut && conv.shortcuts_in_entropy);
  if (on_path) {
    t.count += 1.0;
    t.stage_log += std::log(c.c_in * c.kernel * c.kernel / c.groups);
  }
}

RelaxedModel::Totals RelaxedModel::block_totals(double c_in, double c_out, int stride,
                                                int r_in) const {
  Totals t;
  expand_block<double>(prob_.block, c_in, c_out, prob_.block.kernel, 1.0, stride, r_in,
                       [&](const ConvShape<double>& c) { add_layer(c, t); });
  return t;
}

RelaxedEval RelaxedModel::evaluate(const std::vector<double>& widths,
                                   const std::vector<double>& depths) const {
  const Convention& conv = prob_.convention;
  const std::size_t m = widths.size();
  RelaxedEval out;

  // Stem.
  const double stem_c = prob_.stem.channels;
  const double stem_weights = stem_c * prob_.input_channels * prob_.stem.kernel * prob_.stem.kernel;
  const double stem_area = static_cast<double>(stem_r_out_) * stem_r_out_;
  out.params += stem_weights + (conv.batch_norm ? 2.0 * stem_c : 0.0);
  out.flops += stem_weights * stem_area + (conv.batch_norm ? 2.0 * stem_c * stem_area : 0.0);
  double count = 0.0;
  double log_sum = 0.0;
  if (conv.stem_in_entropy) {
    count += 1.0;
    log_sum += std::log(static_cast<double>(prob_.input_channels) * prob_.stem.kernel *
                        prob_.stem.kernel);
  }

  double entropy = 0.0;
  double c_in = stem_c;
  double running = log_sum;
  for (std::size_t i = 0; i < m; ++i) {
    const int stride = prob_.downsample[i] ? 2 : 1;
    const Totals first = block_totals(c_in, widths[i], stride, r_in_[i]);
    const Totals rest = block_totals(widths[i], widths[i], 1, r_out_[i]);
    const double extra = depths[i] - 1.0;
    const double stage_log = first.stage_log + extra * rest.stage_log;
    count += first.count + extra * rest.count;
    out.params += first.params + extra * rest.params;
    out.flops += first.flops + extra * rest.flops;
    running += stage_log;
    const double own = stage_log + (i == 0 ? log_sum : 0.0);
    const double sum = conv.cumulative_stage_entropy ? running : own;
    const double r = r_out_[i];
    entropy += prob_.alphas[i] * std::log(r * r * widths[i]) * sum;
    c_in = widths[i];
  }
  double eff_log = running;

  const double r_last = r_out_.empty() ? stem_r_out_ : r_out_.back();
  if (prob_.head_channels > 0) {
    const double h = prob_.head_channels;
    const double area = r_last * r_last;
    out.params += c_in * h + (conv.batch_norm ? 2.0 * h : 0.0);
    out.flops += c_in * h * area + (conv.batch_norm ? 2.0 * h * area : 0.0);
    count += 1.0;
    eff_log += std::log(c_in);
    c_in = h;
  }
  const double classes = prob_.num_classes;
  out.params += c_in * classes + classes;
  out.flops += c_in * classes;
  count += 1.0;
  eff_log += std::log(c_in);

  out.rho = count / std::exp(eff_log / count);
  const double q = depth_uniformity_penalty(std::span<const double>(depths));
  out.objective = prob_.beta > 0.0 ? entropy - prob_.beta * q : entropy;
  if (std::isnan(out.objective)) out.objective = -std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace deepmad::detail
