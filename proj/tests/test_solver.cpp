#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "deepmad/catalog.hpp"
#include "deepmad/io.hpp"
#include "deepmad/solver.hpp"
#include "instances.hpp"

using namespace deepmad;

namespace {

const std::string kProblems = std::string(DEEPMAD_SOURCE_DIR) + "/data/problems/";

ProblemSpec plain_problem(int stages, IntBounds widths, IntBounds depths) {
  ProblemSpec p;
  p.name = "plain";
  p.block = {BlockType::PlainConvBNReLU};
  p.stages = stages;
  p.alphas = default_alphas(stages);
  p.beta = 10.0;
  p.rho0 = 2.0;
  p.max_flops = 1'000'000'000'000;
  p.max_params = 1'000'000'000'000;
  p.input_resolution = 32;
  p.stem = {16, 3, 1, false};
  p.num_classes = 10;
  p.downsample.assign(static_cast<std::size_t>(stages), true);
  p.width_bounds.assign(static_cast<std::size_t>(stages), widths);
  p.depth_bounds.assign(static_cast<std::size_t>(stages), depths);
  p.width_granularity = 8;
  return p;
}

ProblemSpec resnet50_problem() {
  ProblemSpec p = io::load_problem(kProblems + "deepmad-r50.json");
  return p;
}

}  // namespace

TEST(Lattice, WidthsAreGranularityMultiplesInsideBounds) {
  const ProblemSpec p = plain_problem(2, {8, 32}, {1, 3});
  EXPECT_EQ(width_lattice(p, 0), (std::vector<int>{8, 16, 24, 32}));
  EXPECT_EQ(lattice_size(p), 144u);
  ProblemSpec q = p;
  q.width_bounds[0] = {5, 30};
  EXPECT_EQ(width_lattice(q, 0), (std::vector<int>{8, 16, 24}));
}

TEST(CheckProblem, RejectsMalformedSpecs) {
  ProblemSpec p = plain_problem(2, {8, 32}, {1, 3});
  EXPECT_TRUE(check_problem(p).empty());
  p.alphas = {1.0};
  EXPECT_FALSE(check_problem(p).empty());
  p = plain_problem(2, {8, 32}, {1, 3});
  p.depth_bounds[1] = {0, 3};
  EXPECT_FALSE(check_problem(p).empty());
  p = plain_problem(2, {8, 32}, {1, 3});
  p.width_bounds[0] = {9, 15};  // no multiple of 8 inside
  EXPECT_FALSE(check_problem(p).empty());
  p = plain_problem(2, {8, 32}, {1, 3});
  p.rho0 = 0.0;
  EXPECT_FALSE(check_problem(p).empty());
  EXPECT_THROW(solve(p), ProblemError);
}

TEST(Realize, ResNet50RoundTrip) {
  const ProblemSpec p = resnet50_problem();
  const catalog::CatalogEntry& e = catalog::reference("resnet50");
  const Candidate c = extract(e.spec);
  EXPECT_EQ(c.widths, (std::vector<int>{256, 512, 1024, 2048}));
  EXPECT_EQ(c.depths, (std::vector<int>{3, 4, 6, 3}));
  const NetworkSpec net = realize(c, p);
  const double params = static_cast<double>(count_params(net));
  const double flops = static_cast<double>(count_flops(net));
  EXPECT_NEAR(params / static_cast<double>(count_params(e.spec)), 1.0, 0.01);
  EXPECT_NEAR(flops / static_cast<double>(count_flops(e.spec)), 1.0, 0.01);
  EXPECT_EQ(net, e.spec);
}

TEST(Realize, RejectsOffLatticeCandidates) {
  const ProblemSpec p = plain_problem(2, {8, 32}, {1, 3});
  EXPECT_THROW(realize({{8, 20}, {1, 1}}, p), ProblemError);
  EXPECT_THROW(realize({{8, 40}, {1, 1}}, p), ProblemError);
  EXPECT_THROW(realize({{8, 16}, {1, 4}}, p), ProblemError);
}

TEST(Feasible, CatalogResNet18UnderTheR18Problem) {
  const ProblemSpec p = io::load_problem(kProblems + "deepmad-r18.json");
  const MetricReport m = analyze(catalog::reference("resnet18").spec, p.alphas, p.convention);
  const Feasibility f = feasible(m, p);
  EXPECT_TRUE(f.ok);
  EXPECT_LE(m.rho, 0.3);
  EXPECT_LE(m.params, 11'700'000);
  const Slacks s = slacks(m, p);
  EXPECT_GE(s.rho, 0.0);
  EXPECT_GE(s.flops, 0.0);
  EXPECT_GE(s.params, 0.0);
}

TEST(Feasible, DecreasingWidthsViolateMonotonicity) {
  const ProblemSpec p = plain_problem(2, {8, 128}, {1, 3});
  const Feasibility f = feasible(Candidate{{128, 64}, {1, 1}}, p);
  EXPECT_FALSE(f.ok);
  ASSERT_EQ(f.violations.size(), 1u);
  EXPECT_EQ(f.violations[0].constraint, "monotone");
}

TEST(Feasible, BudgetEqualityIsFeasible) {
  ProblemSpec p = plain_problem(2, {8, 32}, {1, 3});
  const Candidate c{{16, 24}, {2, 2}};
  const MetricReport m = analyze(realize(c, p), p.alphas, p.convention);
  p.max_flops = m.flops;
  p.max_params = m.params;
  EXPECT_TRUE(feasible(c, p).ok);
  const Slacks s = slacks(m, p);
  EXPECT_EQ(s.flops, 0.0);
  EXPECT_EQ(s.params, 0.0);
  p.max_flops = m.flops - 1;
  const Feasibility over = feasible(c, p);
  EXPECT_FALSE(over.ok);
  EXPECT_EQ(over.violations[0].constraint, "flops");
}

TEST(PoolAdjacentViolators, Examples) {
  EXPECT_EQ(pool_adjacent_violators({130, 120}), (std::vector<double>{125, 125}));
  EXPECT_EQ(pool_adjacent_violators({1, 2, 3}), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(pool_adjacent_violators({3, 1, 2}), (std::vector<double>{2, 2, 2}));
  EXPECT_EQ(pool_adjacent_violators({1, 5, 3, 3, 7}), (std::vector<double>{1, 11.0 / 3, 11.0 / 3, 11.0 / 3, 7}));
}

TEST(PoolAdjacentViolators, MonotoneAndSumPreserving) {
  std::mt19937_64 eng(5);
  std::uniform_real_distribution<double> v(0.0, 100.0);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> x(1 + t % 9);
    for (auto& e : x) e = v(eng);
    const auto y = pool_adjacent_violators(x);
    EXPECT_TRUE(std::is_sorted(y.begin(), y.end()));
    double sx = 0, sy = 0;
    for (double e : x) sx += e;
    for (double e : y) sy += e;
    EXPECT_NEAR(sx, sy, 1e-9);
  }
}

TEST(RoundAndRepair, LatticePointIsUnchanged) {
  const ProblemSpec p = plain_problem(2, {8, 256}, {1, 3});
  const auto c = round_and_repair({{64, 120}, {2, 3}}, p);
  ASSERT_TRUE(c);
  EXPECT_EQ(*c, (Candidate{{64, 120}, {2, 3}}));
}

TEST(RoundAndRepair, NearestMultiple) {
  const ProblemSpec p = plain_problem(2, {8, 256}, {1, 3});
  const auto c = round_and_repair({{63.7, 120.2}, {1.6, 2.4}}, p);
  ASSERT_TRUE(c);
  EXPECT_EQ(c->widths, (std::vector<int>{64, 120}));
  EXPECT_EQ(c->depths, (std::vector<int>{2, 2}));
}

TEST(RoundAndRepair, ProjectsBeforeRounding) {
  // (130, 120) pools to (125, 125), which rounds to (128, 128).
  const ProblemSpec p = plain_problem(2, {8, 256}, {1, 3});
  const auto c = round_and_repair({{130, 120}, {1, 1}}, p);
  ASSERT_TRUE(c);
  EXPECT_EQ(c->widths, (std::vector<int>{128, 128}));
}

TEST(RoundAndRepair, ShrinksTheMostExpensiveStageFirst) {
  ProblemSpec p = plain_problem(2, {8, 256}, {1, 3});
  p.downsample = {false, true};
  p.stem.channels = 64;
  // Only FLOPs bind. Stage 0 runs at 4x the spatial area of stage 1 and its
  // first conv reads 64 channels, so it is the dearer stage.
  const MetricReport full = analyze(realize({{128, 128}, {1, 1}}, p), p.alphas, p.convention);
  const MetricReport less = analyze(realize({{120, 128}, {1, 1}}, p), p.alphas, p.convention);
  p.max_flops = less.flops;
  ASSERT_LT(less.flops, full.flops);
  const auto c = round_and_repair({{130, 120}, {1, 1}}, p);
  ASSERT_TRUE(c);
  EXPECT_EQ(c->widths, (std::vector<int>{120, 128}));
  EXPECT_TRUE(feasible(*c, p).ok);
}

TEST(RoundAndRepair, FailsWhenBoundsStopTheRepair) {
  ProblemSpec p = plain_problem(2, {8, 32}, {1, 3});
  p.max_params = 1;
  EXPECT_FALSE(round_and_repair({{30, 30}, {3, 3}}, p).has_value());
}

TEST(Better, TieBreakOrder) {
  Scored a{{{8, 16}, {1, 1}}, 10.0, 100, true};
  Scored b = a;
  b.feasible = false;
  b.objective = 99.0;
  EXPECT_TRUE(better(a, b));
  b = a;
  b.objective = 9.0;
  EXPECT_TRUE(better(a, b));
  b = a;
  b.params = 101;
  EXPECT_TRUE(better(a, b));
  b = a;
  b.cand.widths = {8, 24};
  EXPECT_TRUE(better(a, b));
  b = a;
  b.cand.depths = {1, 2};
  EXPECT_TRUE(better(a, b));
  EXPECT_FALSE(better(a, a));
}

TEST(BruteForce, SingleCandidateLattice) {
  ProblemSpec p = plain_problem(1, {16, 16}, {2, 2});
  p.alphas = {1.0};
  EXPECT_EQ(brute_force(p), (Candidate{{16}, {2}}));
  p.max_params = 1;
  EXPECT_THROW(brute_force(p), InfeasibleError);
}

TEST(BruteForce, FourCandidatesByHand) {
  ProblemSpec p = plain_problem(1, {8, 16}, {1, 2});
  p.alphas = {1.0};
  p.beta = 10.0;
  // Entropy grows with width and depth; Q = 1 for a single stage.
  std::vector<Candidate> all{{{8}, {1}}, {{8}, {2}}, {{16}, {1}}, {{16}, {2}}};
  double best = -1.0;
  for (const auto& c : all) best = std::max(best, objective(c, p));
  EXPECT_EQ(objective({{16}, {2}}, p), best);
  EXPECT_EQ(brute_force(p), (Candidate{{16}, {2}}));
}

TEST(BruteForce, AllInfeasible) {
  ProblemSpec p = plain_problem(2, {8, 32}, {1, 3});
  p.max_flops = 10;
  EXPECT_THROW(brute_force(p), InfeasibleError);
}

TEST(BruteForce, LatticeTooLarge) {
  const ProblemSpec p = plain_problem(4, {8, 1024}, {1, 30});
  EXPECT_THROW(brute_force(p), LatticeTooLarge);
  EXPECT_THROW(brute_force(p, {100}), LatticeTooLarge);
}

TEST(Solve, TinyInstanceMatchesBruteForce) {
  const ProblemSpec p = plain_problem(2, {8, 32}, {1, 3});
  ASSERT_EQ(lattice_size(p), 144u);
  const Candidate bf = brute_force(p);
  const SolveReport r = solve(p);
  EXPECT_TRUE(r.feasible);
  EXPECT_EQ(r.best, bf);
  EXPECT_EQ(r.objective, objective(bf, p));
}

TEST(Solve, BudgetsBelowCheapestPointNameParams) {
  ProblemSpec p = plain_problem(2, {8, 32}, {1, 3});
  p.max_params = 100;
  const SolveReport r = solve(p);
  EXPECT_FALSE(r.feasible);
  ASSERT_FALSE(r.violations.empty());
  EXPECT_EQ(r.violations.front().constraint, "params");
  try {
    brute_force(p);
    FAIL();
  } catch (const InfeasibleError& e) {
    ASSERT_FALSE(e.binding().empty());
    EXPECT_EQ(e.binding().front().constraint, "params");
  }
}

TEST(Solve, OneEvaluationBudgetIsFlagged) {
  const ProblemSpec p = io::load_problem(kProblems + "deepmad-b0.json");
  SolveOptions o;
  o.max_evals = 1;
  const SolveReport r = solve(p, o);
  EXPECT_TRUE(r.budget_exhausted);
  EXPECT_EQ(r.evaluations, 1);
}

TEST(SolveProperties, OracleEquivalenceOnRandomInstances) {
  int compared = 0;
  for (std::uint64_t seed = 0; seed < 120; ++seed) {
    const ProblemSpec p = deepmad::testing::tiny_problem(seed);
    ASSERT_LE(lattice_size(p), 10'000u);
    std::optional<Candidate> bf;
    try {
      bf = brute_force(p);
    } catch (const InfeasibleError&) {
    }
    const SolveReport r = solve(p);
    if (!bf) {
      EXPECT_FALSE(r.feasible) << seed;
      continue;
    }
    ++compared;
    EXPECT_TRUE(r.feasible) << seed;
    EXPECT_EQ(r.best, *bf) << seed;
    EXPECT_EQ(r.objective, objective(*bf, p)) << seed;
  }
  EXPECT_GE(compared, 100);
}

TEST(SolveProperties, RelaxingBudgetsNeverLowersTheObjective) {
  for (std::uint64_t seed = 200; seed < 240; ++seed) {
    const ProblemSpec p = deepmad::testing::tiny_problem(seed);
    const SolveReport base = solve(p);
    if (!base.feasible) continue;
    for (int which = 0; which < 3; ++which) {
      ProblemSpec q = p;
      if (which == 0) q.max_flops = q.max_flops * 11 / 10;
      if (which == 1) q.max_params = q.max_params * 11 / 10;
      if (which == 2) q.rho0 *= 1.1;
      const SolveReport relaxed = solve(q);
      EXPECT_TRUE(relaxed.feasible);
      EXPECT_GE(relaxed.objective, base.objective) << seed << " " << which;
    }
  }
}

TEST(SolveProperties, ResultRecheckedThroughMetrics) {
  for (std::uint64_t seed = 300; seed < 330; ++seed) {
    const ProblemSpec p = deepmad::testing::tiny_problem(seed);
    const SolveReport r = solve(p);
    if (!r.feasible) continue;
    const MetricReport m = analyze(realize(r.best, p), p.alphas, p.convention);
    EXPECT_LE(m.rho, p.rho0);
    EXPECT_LE(m.flops, p.max_flops);
    EXPECT_LE(m.params, p.max_params);
    EXPECT_TRUE(m.monotone);
    EXPECT_GE(r.slacks.rho, 0.0);
    EXPECT_GE(r.slacks.flops, 0.0);
    EXPECT_GE(r.slacks.params, 0.0);
    const double expected = p.beta > 0 ? m.weighted_entropy - p.beta * m.Q : m.weighted_entropy;
    EXPECT_LE(std::abs(r.objective - expected), 1e-9 * std::abs(expected));
    EXPECT_LE(std::abs(objective(r.best, p) - expected), 1e-9 * std::abs(expected));
  }
}

TEST(SolveProperties, DeterministicAndThreadIndependent) {
  const ProblemSpec p = io::load_problem(kProblems + "deepmad-mb.json");
  SolveOptions o;
  o.seed = 42;
  o.restarts = 6;
  const SolveReport a = solve(p, o);
  const SolveReport b = solve(p, o);
  o.threads = 3;
  const SolveReport c = solve(p, o);
  EXPECT_EQ(a.best, b.best);
  EXPECT_EQ(a.best, c.best);
  EXPECT_EQ(io::serialize(a), io::serialize(b));
  EXPECT_EQ(io::serialize(a), io::serialize(c));
}

TEST(SolveProperties, DepthPenaltyKeepsDepthsEven) {
  // Generous budgets and a shared depth range: a uniform-depth candidate is
  // always available, so beta = 10 should keep the spread small.
  for (std::uint64_t seed = 400; seed < 440; ++seed) {
    ProblemSpec p = deepmad::testing::tiny_problem(seed);
    p.beta = 10.0;
    p.max_flops = std::int64_t{1} << 50;
    p.max_params = std::int64_t{1} << 50;
    p.rho0 = 1e6;
    for (auto& d : p.depth_bounds) d = {1, 4};
    const SolveReport r = solve(p);
    ASSERT_TRUE(r.feasible);
    const auto [lo, hi] = std::minmax_element(r.best.depths.begin(), r.best.depths.end());
    EXPECT_LE(*hi - *lo, 2) << seed;
  }
}

TEST(SolveProperties, TraceDoesNotChangeTheResult) {
  const ProblemSpec p = deepmad::testing::tiny_problem(7);
  SolveOptions o;
  const SolveReport plain = solve(p, o);
  o.trace = true;
  const SolveReport traced = solve(p, o);
  EXPECT_EQ(plain.best, traced.best);
  EXPECT_EQ(traced.trace.size(), static_cast<std::size_t>(o.restarts));
  EXPECT_TRUE(plain.trace.empty());
}
