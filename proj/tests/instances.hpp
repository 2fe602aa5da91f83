#pragma once

// Random small design problems whose lattice brute force can enumerate.

#include <algorithm>
#include <cstdint>
#include <random>

#include "deepmad/solver.hpp"

namespace deepmad::testing {

inline ProblemSpec tiny_problem(std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng); };
  auto real = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng); };

  ProblemSpec p;
  p.name = "tiny-" + std::to_string(seed);
  const BlockType types[] = {BlockType::PlainConvBNReLU, BlockType::ResNetBasic,
                             BlockType::ResNetBottleneck, BlockType::MobileNetV2SE};
  p.block.type = types[pick(0, 3)];
  p.block.expansion_ratio = pick(1, 3) * 2;
  p.block.se_reduction = pick(0, 1) * 4;
  p.stages = pick(1, 3);
  p.alphas.clear();
  for (int i = 0; i < p.stages; ++i) p.alphas.push_back(static_cast<double>(pick(0, 4)));
  const double betas[] = {0.0, 1.0, 10.0};
  p.beta = betas[pick(0, 2)];
  p.input_resolution = 32;
  p.input_channels = 3;
  p.stem = {16, 3, 1, false};
  p.head_channels = pick(0, 1) * 64;
  p.num_classes = 10;
  p.width_granularity = 8;
  // Non-decreasing bounds keep both lattice corners monotone.
  int lo = p.block.type == BlockType::ResNetBottleneck ? 16 : 8 * pick(1, 2);
  int hi = lo;
  for (int i = 0; i < p.stages; ++i) {
    p.downsample.push_back(pick(0, 1) == 1);
    lo += 8 * pick(0, 1);
    hi = std::max(hi, lo + 8 * pick(0, 4));
    p.width_bounds.push_back({lo, hi});
    p.depth_bounds.push_back({1, pick(1, 4)});
  }

  // Budgets between the cheapest and the most expensive lattice corner, so
  // some instances bind and a few are infeasible.
  Candidate cheap, dear;
  for (int i = 0; i < p.stages; ++i) {
    const auto s = static_cast<std::size_t>(i);
    cheap.widths.push_back(p.width_bounds[s].min);
    cheap.depths.push_back(p.depth_bounds[s].min);
    dear.widths.push_back(p.width_bounds[s].max);
    dear.depths.push_back(p.depth_bounds[s].max);
  }
  p.max_flops = 1;
  p.max_params = 1;
  p.rho0 = 100.0;
  const MetricReport ml = analyze(realize(cheap, p), p.alphas, p.convention);
  const MetricReport mh = analyze(realize(dear, p), p.alphas, p.convention);
  auto between = [&](double a, double b) { return a + real(0.0, 1.2) * (b - a); };
  p.max_flops = static_cast<std::int64_t>(between(static_cast<double>(ml.flops),
                                                  static_cast<double>(mh.flops)));
  p.max_params = static_cast<std::int64_t>(between(static_cast<double>(ml.params),
                                                   static_cast<double>(mh.params)));
  p.rho0 = std::max(1e-3, between(std::min(ml.rho, mh.rho), std::max(ml.rho, mh.rho)));
  return p;
}

}  // namespace deepmad::testing
