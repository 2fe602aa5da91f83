#pragma once

// Monte-Carlo check of the variance law for random linear MLPs: with
// standard-normal inputs and weights, each output coordinate has zero mean
// and variance equal to the product of the layer input widths.

#include <cstdint>
#include <span>
#include <vector>

namespace deepmad {

struct SimulationConfig {
  // Input widths w_1..w_L; layer i maps w_i -> w_{i+1}, the last layer
  // produces the observed output coordinate.
  std::vector<int> widths;
  std::int64_t n_samples = 100'000;
  std::uint64_t seed = 0;
  // Acceptance band half-width, in standard errors of the estimator.
  double band_standard_errors = 5.0;
  // Fixed weights for the whole run instead of fresh weights per sample.
  bool quenched = false;
  int threads = 1;
};

inline constexpr double kMaxSimulatedVariance = 1e12;
inline constexpr std::size_t kMaxAssertedDepth = 4;
inline constexpr std::int64_t kMinAssertedSamples = 1000;

struct TheoreticalVariance {
  double variance = 1.0;
  double log_variance = 0.0;
};

TheoreticalVariance theoretical_variance(std::span<const int> widths);

struct SampleMoments {
  std::int64_t n = 0;
  double mean = 0.0;
  double variance = 0.0;        // population second central moment
  double fourth_moment = 0.0;   // fourth central moment
  double variance_rel_se = 0.0; // standard error of `variance`, relative to it
};

/// Empirical moments of the first output coordinate. Deterministic in
/// (widths, n_samples, seed, quenched), independent of `threads`.
SampleMoments simulate_mlp_variance(const SimulationConfig& cfg);

struct MeanCheck {
  double mean = 0.0;
  double band = 0.0;  // 4 * sqrt(theoretical variance / n)
  bool pass = false;
};

MeanCheck mean_check(const SimulationConfig& cfg);
MeanCheck mean_check(const SimulationConfig& cfg, const SampleMoments& moments);

struct VarianceReport {
  SimulationConfig config;
  TheoreticalVariance theory;
  SampleMoments empirical;
  double ratio = 0.0;  // empirical / theoretical variance
  double band = 0.0;   // band_standard_errors * relative standard error
  bool variance_pass = false;
  MeanCheck mean;
  // Assertions apply to annealed runs of depth <= 4 with n >= 1000; anything
  // else is report-only.
  bool assertion_mode = false;
  bool pass = false;
};

VarianceReport verify_variance(const SimulationConfig& cfg);

}  // namespace deepmad
