#include "deepmad/variance.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <thread>

#include "deepmad/rng.hpp"

namespace deepmad {

namespace {

constexpr std::int64_t kChunk = 4096;

using Engine = std::mt19937_64;

struct Weights {
  // matrices[i] is w_{i+1} x w_i, row-major; the last one is a single row.
  std::vector<std::vector<double>> matrices;
};

std::size_t rows_of(std::span<const int> widths, std::size_t layer) {
  return layer + 1 < widths.size() ? static_cast<std::size_t>(widths[layer + 1]) : 1;
}

void draw_weights(std::span<const int> widths, Engine& eng, std::normal_distribution<double>& nd,
                  Weights& w) {
  w.matrices.resize(widths.size());
  for (std::size_t i = 0; i < widths.size(); ++i) {
    auto& m = w.matrices[i];
    m.resize(rows_of(widths, i) * static_cast<std::size_t>(widths[i]));
    for (double& v : m) v = nd(eng);
  }
}

double forward(std::span<const int> widths, const Weights& w, Engine& eng,
               std::normal_distribution<double>& nd, std::vector<double>& x,
               std::vector<double>& y) {
  x.resize(static_cast<std::size_t>(widths[0]));
  for (double& v : x) v = nd(eng);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::size_t rows = rows_of(widths, i);
    const std::size_t cols = static_cast<std::size_t>(widths[i]);
    const double* m = w.matrices[i].data();
    y.assign(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += m[r * cols + c] * x[c];
      y[r] = acc;
    }
    std::swap(x, y);
  }
  return x[0];
}

void check_config(const SimulationConfig& cfg) {
  if (cfg.widths.empty()) throw std::invalid_argument("simulation needs at least one width");
  for (int w : cfg.widths) {
    if (w < 1) throw std::invalid_argument("simulation widths must be positive");
  }
  if (cfg.n_samples < 2) throw std::invalid_argument("simulation needs at least two samples");
  if (theoretical_variance(cfg.widths).variance > kMaxSimulatedVariance) {
    throw std::domain_error(
        "width product exceeds 1e12; the empirical estimator is unreliable there, check the "
        "log-space theoretical variance instead");
  }
}

}  // namespace

TheoreticalVariance theoretical_variance(std::span<const int> widths) {
  if (widths.empty()) throw std::invalid_argument("theoretical variance needs at least one width");
  double log_var = 0.0;
  for (int w : widths) {
    if (w < 1) throw std::invalid_argument("widths must be positive");
    log_var += std::log(static_cast<double>(w));
  }
  return {std::exp(log_var), log_var};
}

SampleMoments simulate_mlp_variance(const SimulationConfig& cfg) {
  check_config(cfg);
  const std::int64_t n = cfg.n_samples;
  const std::int64_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> outputs(static_cast<std::size_t>(n));

  Weights fixed;
  if (cfg.quenched) {
    Engine eng(rng::stream_seed(cfg.seed, ~0ULL));
    std::normal_distribution<double> nd;
    draw_weights(cfg.widths, eng, nd, fixed);
  }

  auto run_chunk = [&](std::int64_t chunk) {
    Engine eng(rng::stream_seed(cfg.seed, static_cast<std::uint64_t>(chunk)));
    std::normal_distribution<double> nd;
    Weights fresh;
    std::vector<double> x, y;
    const std::int64_t end = std::min(n, (chunk + 1) * kChunk);
    for (std::int64_t s = chunk * kChunk; s < end; ++s) {
      if (!cfg.quenched) draw_weights(cfg.widths, eng, nd, fresh);
      outputs[static_cast<std::size_t>(s)] =
          forward(cfg.widths, cfg.quenched ? fixed : fresh, eng, nd, x, y);
    }
  };

  const int threads = std::max(1, std::min<int>(cfg.threads, static_cast<int>(chunks)));
  if (threads == 1) {
    for (std::int64_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::int64_t c = t; c < chunks; c += threads) run_chunk(c);
      });
    }
  }

  SampleMoments m;
  m.n = n;
  double sum = 0.0;
  for (double v : outputs) sum += v;
  m.mean = sum / static_cast<double>(n);
  double m2 = 0.0, m4 = 0.0;
  for (double v : outputs) {
    const double d = v - m.mean;
    const double d2 = d * d;
    m2 += d2;
    m4 += d2 * d2;
  }
  m.variance = m2 / static_cast<double>(n);
  m.fourth_moment = m4 / static_cast<double>(n);
  // Var(s^2) ~ (mu4 - sigma^4) / n for large n.
  const double excess = std::max(0.0, m.fourth_moment - m.variance * m.variance);
  m.variance_rel_se = std::sqrt(excess / static_cast<double>(n)) / m.variance;
  return m;
}

MeanCheck mean_check(const SimulationConfig& cfg, const SampleMoments& moments) {
  const double sigma = std::sqrt(theoretical_variance(cfg.widths).variance);
  MeanCheck out;
  out.mean = moments.mean;
  out.band = 4.0 * sigma / std::sqrt(static_cast<double>(moments.n));
  out.pass = std::abs(out.mean) <= out.band;
  return out;
}

MeanCheck mean_check(const SimulationConfig& cfg) {
  return mean_check(cfg, simulate_mlp_variance(cfg));
}

VarianceReport verify_variance(const SimulationConfig& cfg) {
  VarianceReport r;
  r.config = cfg;
  r.theory = theoretical_variance(cfg.widths);
  r.empirical = simulate_mlp_variance(cfg);
  r.ratio = r.empirical.variance / r.theory.variance;
  r.band = cfg.band_standard_errors * r.empirical.variance_rel_se;
  r.variance_pass = std::abs(r.ratio - 1.0) <= r.band;
  r.mean = mean_check(cfg, r.empirical);
  r.assertion_mode = !cfg.quenched && cfg.widths.size() <= kMaxAssertedDepth &&
                     cfg.n_samples >= kMinAssertedSamples;
  r.pass = r.variance_pass && r.mean.pass;
  return r;
}

}  // namespace deepmad
