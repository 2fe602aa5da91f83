#pragma once

// The architecture design program: maximize the weighted multi-scale entropy
// minus the depth-uniformity penalty, subject to effectiveness, FLOPs, Params
// and non-decreasing stage widths.

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepmad/arch.hpp"
#include "deepmad/metrics.hpp"

namespace deepmad {

struct IntBounds {
  int min = 1;
  int max = 1;

  bool operator==(const IntBounds&) const = default;
};

struct ProblemSpec {
  std::string name;
  BlockKind block;
  int stages = 1;
  std::vector<double> alphas;
  double beta = 10.0;
  double rho0 = 0.5;
  std::int64_t max_flops = 0;
  std::int64_t max_params = 0;
  int input_resolution = 224;
  int input_channels = 3;
  StemSpec stem;
  int head_channels = 0;
  int num_classes = 1000;
  std::vector<bool> downsample;
  std::vector<IntBounds> width_bounds;
  std::vector<IntBounds> depth_bounds;
  int width_granularity = 8;
  Convention convention;

  bool operator==(const ProblemSpec&) const = default;
};

/// Stage output widths and block counts.
struct Candidate {
  std::vector<int> widths;
  std::vector<int> depths;

  bool operator==(const Candidate&) const = default;
  auto operator<=>(const Candidate&) const = default;
};

class ProblemError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Empty list means the problem is well-formed.
std::vector<std::string> check_problem(const ProblemSpec& prob);

/// Allowed widths for one stage: granularity multiples inside the bounds.
std::vector<int> width_lattice(const ProblemSpec& prob, int stage);
std::uint64_t lattice_size(const ProblemSpec& prob);

/// Builds the network a candidate describes. Throws ProblemError on bound or
/// granularity violations.
NetworkSpec realize(const Candidate& cand, const ProblemSpec& prob);

/// Reads the stage widths and depths back out of a network.
Candidate extract(const NetworkSpec& net);

double objective(const Candidate& cand, const ProblemSpec& prob);

struct ConstraintViolation {
  std::string constraint;  // "rho", "flops", "params", "monotone"
  double usage = 0.0;
  double limit = 0.0;
  double relative = 0.0;  // (usage - limit) / limit; for monotone the largest drop / width

  bool operator==(const ConstraintViolation&) const = default;
};

struct Feasibility {
  bool ok = true;
  std::vector<ConstraintViolation> violations;
};

Feasibility feasible(const Candidate& cand, const ProblemSpec& prob);
Feasibility feasible(const MetricReport& metrics, const ProblemSpec& prob);

/// Slack = budget - usage; all non-negative iff the budgets hold.
struct Slacks {
  double rho = 0.0;
  double flops = 0.0;
  double params = 0.0;

  bool operator==(const Slacks&) const = default;
};

Slacks slacks(const MetricReport& metrics, const ProblemSpec& prob);

/// Isotonic (non-decreasing) least-squares fit by pool-adjacent-violators.
std::vector<double> pool_adjacent_violators(std::vector<double> values);

/// Real-valued stage widths and depths from the relaxed phase.
struct RelaxedPoint {
  std::vector<double> widths;
  std::vector<double> depths;
};

/// Projects onto the monotone cone, rounds onto the lattice, then repairs
/// violations greedily. Returns nullopt when bounds stop the repair.
std::optional<Candidate> round_and_repair(const RelaxedPoint& point, const ProblemSpec& prob);

/// Ties on objective break toward lower Params, then lexicographically
/// smaller widths, then smaller depths.
struct Scored {
  Candidate cand;
  double objective = 0.0;
  std::int64_t params = 0;
  bool feasible = false;
};
bool better(const Scored& a, const Scored& b);

class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, std::vector<ConstraintViolation> binding)
      : std::runtime_error(what), binding_(std::move(binding)) {}
  const std::vector<ConstraintViolation>& binding() const { return binding_; }

 private:
  std::vector<ConstraintViolation> binding_;
};

class LatticeTooLarge : public std::length_error {
 public:
  using std::length_error::length_error;
};

struct BruteForceOptions {
  std::uint64_t max_enumeration = 1'000'000;
};

/// Exhaustive feasible argmax under `better`. Throws InfeasibleError or
/// LatticeTooLarge.
Candidate brute_force(const ProblemSpec& prob, const BruteForceOptions& opts = {});

/// Violations at the cheapest lattice point, largest relative violation first.
std::vector<ConstraintViolation> infeasibility_diagnosis(const ProblemSpec& prob);

struct SolveOptions {
  std::uint64_t seed = 0;
  int restarts = 32;
  std::int64_t max_evals = 2'000'000;
  int threads = 1;
  bool trace = false;
};

struct RestartTrace {
  int restart = 0;
  RelaxedPoint relaxed;
  double relaxed_objective = 0.0;
  std::optional<Candidate> repaired;
  std::optional<Candidate> best;
  double objective = 0.0;
  bool feasible = false;
  std::int64_t evaluations = 0;
};

struct SolveReport {
  std::string problem;
  Candidate best;
  double objective = 0.0;
  bool feasible = false;
  bool budget_exhausted = false;
  Slacks slacks;
  std::vector<ConstraintViolation> violations;  // of `best`, or the diagnosis when infeasible
  int restarts_used = 0;
  std::int64_t evaluations = 0;
  std::chrono::duration<double> wall_time{0.0};
  std::vector<RestartTrace> trace;
};

SolveReport solve(const ProblemSpec& prob, const SolveOptions& opts = {});

}  // namespace deepmad
