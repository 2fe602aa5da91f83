#include "deepmad/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "deepmad/rng.hpp"
#include "relaxed.hpp"

namespace deepmad {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Relative constraint violation the continuous phase tolerates before rounding.
constexpr double kRelaxedTolerance = 0.005;
constexpr int kPenaltyRounds = 6;

double penalized(double entropy, double beta, double q) {
  const double value = beta > 0.0 ? entropy - beta * q : entropy;
  return std::isnan(value) ? kNegInf : value;
}

int snap_to_lattice(double w, const std::vector<int>& lattice) {
  auto it = std::lower_bound(lattice.begin(), lattice.end(), w,
                             [](int a, double b) { return a < b; });
  if (it == lattice.end()) return lattice.back();
  if (it == lattice.begin()) return *it;
  const int hi = *it;
  const int lo = *std::prev(it);
  // Halfway values round up.
  return (w - lo < hi - w) ? lo : hi;
}

struct Evaluation {
  Scored scored;
  MetricReport metrics;
  Feasibility feasibility;
};

Evaluation evaluate_candidate(const Candidate& cand, const ProblemSpec& prob) {
  Evaluation e;
  const NetworkSpec net = realize(cand, prob);
  e.metrics = analyze(net, prob.alphas, prob.convention);
  e.feasibility = feasible(e.metrics, prob);
  e.scored.cand = cand;
  e.scored.objective = penalized(e.metrics.weighted_entropy, prob.beta, e.metrics.Q);
  e.scored.params = e.metrics.params;
  e.scored.feasible = e.feasibility.ok;
  return e;
}

/// Counts evaluations against a budget and memoizes discrete points.
class Evaluator {
 public:
  Evaluator(const ProblemSpec& prob, std::int64_t budget)
      : prob_(prob), relaxed_(prob), budget_(budget) {
    for (int i = 0; i < prob.stages; ++i) lattices_.push_back(width_lattice(prob, i));
  }

  bool exhausted() const { return used_ >= budget_; }
  std::int64_t used() const { return used_; }
  const std::vector<int>& lattice(int stage) const {
    return lattices_[static_cast<std::size_t>(stage)];
  }

  std::optional<detail::RelaxedEval> relaxed(const RelaxedPoint& p) {
    if (exhausted()) return std::nullopt;
    ++used_;
    return relaxed_.evaluate(p.widths, p.depths);
  }

  const Evaluation* discrete(const Candidate& c) {
    if (auto it = cache_.find(c); it != cache_.end()) return &it->second;
    if (exhausted()) return nullptr;
    ++used_;
    return &cache_.emplace(c, evaluate_candidate(c, prob_)).first->second;
  }

  bool in_bounds(const Candidate& c) const {
    for (int i = 0; i < prob_.stages; ++i) {
      const auto s = static_cast<std::size_t>(i);
      const auto& lat = lattices_[s];
      if (c.widths[s] < lat.front() || c.widths[s] > lat.back()) return false;
      if (c.depths[s] < prob_.depth_bounds[s].min || c.depths[s] > prob_.depth_bounds[s].max) {
        return false;
      }
      if (i > 0 && c.widths[s] < c.widths[s - 1]) return false;
    }
    return true;
  }

 private:
  const ProblemSpec& prob_;
  detail::RelaxedModel relaxed_;
  std::int64_t budget_;
  std::int64_t used_ = 0;
  std::vector<std::vector<int>> lattices_;
  std::map<Candidate, Evaluation> cache_;
};

double max_relative_violation(const detail::RelaxedEval& e, const ProblemSpec& prob) {
  return std::max({e.rho / prob.rho0 - 1.0, e.flops / static_cast<double>(prob.max_flops) - 1.0,
                   e.params / static_cast<double>(prob.max_params) - 1.0, 0.0});
}

double penalty_terms(const detail::RelaxedEval& e, const ProblemSpec& prob) {
  auto sq = [](double v) { return v > 0.0 ? v * v : 0.0; };
  return sq(e.rho / prob.rho0 - 1.0) + sq(e.flops / static_cast<double>(prob.max_flops) - 1.0) +
         sq(e.params / static_cast<double>(prob.max_params) - 1.0);
}

/// Clip to the box and project widths onto the non-decreasing cone.
void project(RelaxedPoint& p, const ProblemSpec& prob, const Evaluator& ev) {
  for (int i = 0; i < prob.stages; ++i) {
    const auto s = static_cast<std::size_t>(i);
    p.widths[s] = std::clamp<double>(p.widths[s], ev.lattice(i).front(), ev.lattice(i).back());
    p.depths[s] = std::clamp<double>(p.depths[s], prob.depth_bounds[s].min,
                                     prob.depth_bounds[s].max);
  }
  p.widths = pool_adjacent_violators(std::move(p.widths));
  for (int i = 0; i < prob.stages; ++i) {
    const auto s = static_cast<std::size_t>(i);
    p.widths[s] = std::clamp<double>(p.widths[s], ev.lattice(i).front(), ev.lattice(i).back());
  }
}

struct RelaxedResult {
  RelaxedPoint point;
  double objective = kNegInf;
};

/// Penalty-method coordinate ascent over the box with halving step sizes.
RelaxedResult relaxed_phase(RelaxedPoint x, const ProblemSpec& prob, Evaluator& ev) {
  const auto m = static_cast<std::size_t>(prob.stages);
  project(x, prob, ev);
  auto first = ev.relaxed(x);
  if (!first) return {x, kNegInf};
  const double scale = std::isfinite(first->objective) ? std::max(1.0, std::abs(first->objective))
                                                       : 1.0;
  double mu = 10.0 * scale;
  detail::RelaxedEval cur = *first;

  std::vector<double> step(2 * m), min_step(2 * m);
  for (std::size_t s = 0; s < m; ++s) {
    const double w_range = ev.lattice(static_cast<int>(s)).back() -
                           ev.lattice(static_cast<int>(s)).front();
    const double d_range = prob.depth_bounds[s].max - prob.depth_bounds[s].min;
    min_step[s] = 0.5 * prob.width_granularity;
    min_step[m + s] = 0.5;
    step[s] = std::max(0.25 * w_range, min_step[s]);
    step[m + s] = std::max(0.25 * d_range, min_step[m + s]);
    if (w_range == 0.0) step[s] = 0.0;
    if (d_range == 0.0) step[m + s] = 0.0;
  }

  for (int round = 0; round < kPenaltyRounds && !ev.exhausted(); ++round) {
    auto merit = [&](const detail::RelaxedEval& e) {
      return e.objective - mu * penalty_terms(e, prob);
    };
    double cur_merit = merit(cur);
    std::vector<double> s = step;
    bool active = true;
    while (active && !ev.exhausted()) {
      bool improved = false;
      for (std::size_t k = 0; k < 2 * m && !ev.exhausted(); ++k) {
        if (s[k] <= 0.0) continue;
        for (double dir : {1.0, -1.0}) {
          RelaxedPoint trial = x;
          double& coord = k < m ? trial.widths[k] : trial.depths[k - m];
          coord += dir * s[k];
          project(trial, prob, ev);
          auto e = ev.relaxed(trial);
          if (!e) break;
          const double mt = merit(*e);
          if (mt > cur_merit) {
            x = std::move(trial);
            cur = *e;
            cur_merit = mt;
            improved = true;
            break;
          }
        }
      }
      // Trade moves: two coordinates at once, which coordinate steps cannot
      // do along an active constraint.
      for (std::size_t a = 0; a < 2 * m && !improved && !ev.exhausted(); ++a) {
        if (s[a] <= 0.0) continue;
        for (std::size_t b = a + 1; b < 2 * m && !improved && !ev.exhausted(); ++b) {
          if (s[b] <= 0.0) continue;
          for (auto [da, db] : {std::pair{1.0, -1.0}, std::pair{-1.0, 1.0}}) {
            RelaxedPoint trial = x;
            (a < m ? trial.widths[a] : trial.depths[a - m]) += da * s[a];
            (b < m ? trial.widths[b] : trial.depths[b - m]) += db * s[b];
            project(trial, prob, ev);
            auto e = ev.relaxed(trial);
            if (!e) break;
            const double mt = merit(*e);
            if (mt > cur_merit) {
              x = std::move(trial);
              cur = *e;
              cur_merit = mt;
              improved = true;
              break;
            }
          }
        }
      }
      if (!improved) {
        active = false;
        for (std::size_t k = 0; k < 2 * m; ++k) {
          s[k] *= 0.5;
          if (s[k] >= min_step[k]) active = true;
        }
      }
    }
    if (max_relative_violation(cur, prob) <= kRelaxedTolerance) break;
    mu *= 2.0;
  }
  return {x, cur.objective};
}

Candidate round_point(const RelaxedPoint& point, const ProblemSpec& prob, const Evaluator& ev) {
  const auto projected = pool_adjacent_violators(point.widths);
  Candidate c;
  for (int i = 0; i < prob.stages; ++i) {
    const auto s = static_cast<std::size_t>(i);
    c.widths.push_back(snap_to_lattice(projected[s], ev.lattice(i)));
    const long d = std::lround(point.depths[s]);
    c.depths.push_back(static_cast<int>(
        std::clamp<long>(d, prob.depth_bounds[s].min, prob.depth_bounds[s].max)));
  }
  // Per-stage bounds can reintroduce a decrease after snapping; raise where
  // the lattice allows, otherwise lower the earlier stages.
  for (std::size_t s = 1; s < c.widths.size(); ++s) {
    if (c.widths[s] >= c.widths[s - 1]) continue;
    const auto& lat = ev.lattice(static_cast<int>(s));
    auto it = std::lower_bound(lat.begin(), lat.end(), c.widths[s - 1]);
    if (it != lat.end()) c.widths[s] = *it;
  }
  for (std::size_t s = c.widths.size(); s-- > 1;) {
    if (c.widths[s - 1] <= c.widths[s]) continue;
    const auto& lat = ev.lattice(static_cast<int>(s - 1));
    auto it = std::upper_bound(lat.begin(), lat.end(), c.widths[s]);
    if (it != lat.begin()) c.widths[s - 1] = *std::prev(it);
  }
  return c;
}

/// Lowers stage `stage` by one lattice step, lowering earlier stages as needed
/// to stay non-decreasing. False if a bound blocks the move.
bool shrink_width(Candidate& c, int stage, const Evaluator& ev) {
  const auto& lat = ev.lattice(stage);
  auto s = static_cast<std::size_t>(stage);
  auto it = std::lower_bound(lat.begin(), lat.end(), c.widths[s]);
  if (it == lat.begin()) return false;
  Candidate next = c;
  next.widths[s] = *std::prev(it);
  for (std::size_t j = s; j-- > 0;) {
    if (next.widths[j] <= next.widths[j + 1]) break;
    const auto& lj = ev.lattice(static_cast<int>(j));
    auto jt = std::upper_bound(lj.begin(), lj.end(), next.widths[j + 1]);
    if (jt == lj.begin()) return false;
    next.widths[j] = *std::prev(jt);
  }
  c = std::move(next);
  return true;
}

std::optional<Candidate> repair(Candidate c, const ProblemSpec& prob, Evaluator& ev) {
  while (true) {
    if (!ev.in_bounds(c)) return std::nullopt;
    const Evaluation* e = ev.discrete(c);
    if (e == nullptr) return std::nullopt;
    if (e->feasibility.ok) return c;

    bool budget = false, rho = false;
    for (const auto& v : e->feasibility.violations) {
      if (v.constraint == "flops" || v.constraint == "params") budget = true;
      if (v.constraint == "rho") rho = true;
    }
    if (budget) {
      // Stage cost as a share of each violated budget.
      const NetworkSpec net = realize(c, prob);
      std::vector<double> cost(static_cast<std::size_t>(prob.stages), 0.0);
      for (const auto& l : expand(net)) {
        if (l.stage < 0) continue;
        auto& slot = cost[static_cast<std::size_t>(l.stage)];
        slot += static_cast<double>(layer_flops(l, prob.convention)) /
                static_cast<double>(prob.max_flops);
        slot += static_cast<double>(layer_params(l, prob.convention)) /
                static_cast<double>(prob.max_params);
      }
      std::vector<int> order(static_cast<std::size_t>(prob.stages));
      for (int i = 0; i < prob.stages; ++i) order[static_cast<std::size_t>(i)] = i;
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return cost[static_cast<std::size_t>(a)] > cost[static_cast<std::size_t>(b)];
      });
      bool moved = false;
      for (int stage : order) {
        if (shrink_width(c, stage, ev)) {
          moved = true;
          break;
        }
      }
      if (!moved) {
        for (int stage : order) {
          auto s = static_cast<std::size_t>(stage);
          if (c.depths[s] > prob.depth_bounds[s].min) {
            --c.depths[s];
            moved = true;
            break;
          }
        }
      }
      if (!moved) return std::nullopt;
    } else if (rho) {
      int deepest = -1;
      for (int i = 0; i < prob.stages; ++i) {
        auto s = static_cast<std::size_t>(i);
        if (c.depths[s] <= prob.depth_bounds[s].min) continue;
        if (deepest < 0 || c.depths[s] > c.depths[static_cast<std::size_t>(deepest)]) deepest = i;
      }
      if (deepest < 0) return std::nullopt;
      --c.depths[static_cast<std::size_t>(deepest)];
    } else {
      return std::nullopt;
    }
  }
}

/// Moves of one or two coordinates by one lattice step each.
std::vector<Candidate> neighbours(const Candidate& c, const Evaluator& ev) {
  const std::size_t m = c.widths.size();
  const std::size_t n = 2 * m;
  auto shift = [&](Candidate& out, std::size_t k, int dir) {
    if (k < m) {
      const auto& lat = ev.lattice(static_cast<int>(k));
      auto it = std::lower_bound(lat.begin(), lat.end(), out.widths[k]);
      if (dir > 0) {
        if (it == lat.end() || std::next(it) == lat.end()) return false;
        out.widths[k] = *std::next(it);
      } else {
        if (it == lat.begin()) return false;
        out.widths[k] = *std::prev(it);
      }
    } else {
      out.depths[k - m] += dir;
    }
    return true;
  };
  std::vector<Candidate> out;
  for (std::size_t a = 0; a < n; ++a) {
    for (int da : {1, -1}) {
      Candidate single = c;
      if (!shift(single, a, da)) continue;
      if (ev.in_bounds(single)) out.push_back(single);
      for (std::size_t b = a + 1; b < n; ++b) {
        for (int db : {1, -1}) {
          Candidate pair = single;
          if (!shift(pair, b, db)) continue;
          if (ev.in_bounds(pair)) out.push_back(std::move(pair));
        }
      }
    }
  }
  return out;
}

double total_violation(const Evaluation& e) {
  double v = 0.0;
  for (const auto& c : e.feasibility.violations) v += c.relative;
  return v;
}

/// Steepest descent on the summed relative violation, for points the greedy
/// repair cannot fix (for example rho needing wider stages).
std::optional<Candidate> seek_feasible(Candidate c, Evaluator& ev) {
  if (!ev.in_bounds(c)) return std::nullopt;
  const Evaluation* e = ev.discrete(c);
  while (e != nullptr && !e->feasibility.ok) {
    const Evaluation* next = nullptr;
    double next_v = total_violation(*e);
    for (const auto& n : neighbours(c, ev)) {
      const Evaluation* ne = ev.discrete(n);
      if (ne == nullptr) return std::nullopt;
      const double v = ne->feasibility.ok ? -1.0 : total_violation(*ne);
      if (v < next_v) {
        next = ne;
        next_v = v;
      }
    }
    if (next == nullptr) return std::nullopt;
    c = next->scored.cand;
    e = next;
  }
  if (e == nullptr) return std::nullopt;
  return c;
}

/// Steepest ascent under `better` until no neighbour improves.
Scored local_search(const Candidate& start, const ProblemSpec& prob, Evaluator& ev) {
  const Evaluation* e = ev.discrete(start);
  if (e == nullptr) return Scored{start, kNegInf, 0, false};
  Scored cur = e->scored;
  while (!ev.exhausted()) {
    std::optional<Scored> best;
    for (const auto& n : neighbours(cur.cand, ev)) {
      const Evaluation* ne = ev.discrete(n);
      if (ne == nullptr) break;
      if (!ne->scored.feasible) {
        // Step over the budget boundary, then shrink back inside it.
        auto fixed = repair(n, prob, ev);
        if (!fixed) continue;
        ne = ev.discrete(*fixed);
        if (ne == nullptr || !ne->scored.feasible) continue;
      }
      if (!best || better(ne->scored, *best)) best = ne->scored;
    }
    if (!best || !better(*best, cur)) break;
    cur = *best;
  }
  return cur;
}

RestartTrace run_restart(const ProblemSpec& prob, std::uint64_t seed, int restart,
                         std::int64_t budget) {
  RestartTrace t;
  t.restart = restart;
  Evaluator ev(prob, budget);
  std::mt19937_64 eng(rng::stream_seed(seed, static_cast<std::uint64_t>(restart)));
  RelaxedPoint start;
  for (int i = 0; i < prob.stages; ++i) {
    const auto s = static_cast<std::size_t>(i);
    const double lo_w = ev.lattice(i).front(), hi_w = ev.lattice(i).back();
    const double lo_d = prob.depth_bounds[s].min, hi_d = prob.depth_bounds[s].max;
    start.widths.push_back(lo_w + rng::unit_double(eng()) * (hi_w - lo_w));
    start.depths.push_back(lo_d + rng::unit_double(eng()) * (hi_d - lo_d));
  }
  std::sort(start.widths.begin(), start.widths.end());

  const RelaxedResult relaxed = relaxed_phase(start, prob, ev);
  t.relaxed = relaxed.point;
  t.relaxed_objective = relaxed.objective;

  auto polish = [&](const Candidate& rounded) -> std::optional<Scored> {
    std::optional<Candidate> fixed = repair(rounded, prob, ev);
    if (!fixed) fixed = seek_feasible(rounded, ev);
    if (!fixed) return std::nullopt;
    return local_search(*fixed, prob, ev);
  };

  const Candidate rounded = round_point(relaxed.point, prob, ev);
  t.repaired = repair(rounded, prob, ev);
  if (!t.repaired) t.repaired = seek_feasible(rounded, ev);
  std::optional<Scored> best;
  if (t.repaired) best = local_search(*t.repaired, prob, ev);
  // The relaxation tends to pull every start into one basin; polishing the
  // raw start as well keeps the restarts diverse.
  if (auto other = polish(round_point(start, prob, ev)); other && (!best || better(*other, *best))) {
    best = other;
  }
  if (best && best->feasible) {
    t.best = best->cand;
    t.objective = best->objective;
    t.feasible = true;
  } else {
    t.best = rounded;
    t.objective = kNegInf;
    t.feasible = false;
  }
  t.evaluations = ev.used();
  return t;
}

Candidate cheapest_point(const ProblemSpec& prob) {
  Candidate c;
  int floor = 0;
  for (int i = 0; i < prob.stages; ++i) {
    const auto lat = width_lattice(prob, i);
    auto it = std::lower_bound(lat.begin(), lat.end(), floor);
    const int w = it == lat.end() ? lat.back() : *it;
    c.widths.push_back(w);
    c.depths.push_back(prob.depth_bounds[static_cast<std::size_t>(i)].min);
    floor = w;
  }
  return c;
}

}  // namespace

std::vector<std::string> check_problem(const ProblemSpec& p) {
  std::vector<std::string> out;
  const auto m = static_cast<std::size_t>(std::max(p.stages, 0));
  if (p.stages < 1) out.push_back("stages must be >= 1");
  if (p.alphas.size() != m) out.push_back("alphas must have one weight per stage");
  for (double a : p.alphas) {
    if (!(a >= 0.0)) out.push_back("alphas must be non-negative");
  }
  if (!(p.beta >= 0.0)) out.push_back("beta must be non-negative");
  if (!(p.rho0 > 0.0)) out.push_back("rho0 must be positive");
  if (p.max_flops <= 0) out.push_back("max_flops must be positive");
  if (p.max_params <= 0) out.push_back("max_params must be positive");
  if (p.downsample.size() != m) out.push_back("downsample needs one flag per stage");
  if (p.width_bounds.size() != m) out.push_back("width_bounds needs one range per stage");
  if (p.depth_bounds.size() != m) out.push_back("depth_bounds needs one range per stage");
  if (p.width_granularity < 1) out.push_back("width_granularity must be >= 1");
  if (!out.empty()) return out;

  if (p.block.type == BlockType::ResNetBottleneck && p.block.bottleneck_ratio > 0 &&
      p.width_granularity % p.block.bottleneck_ratio != 0) {
    out.push_back("width_granularity must be a multiple of the bottleneck ratio");
  }
  for (std::size_t i = 0; i < m; ++i) {
    const auto& wb = p.width_bounds[i];
    const auto& db = p.depth_bounds[i];
    if (wb.min < 1 || wb.min > wb.max) out.push_back("width bounds of stage " + std::to_string(i) + " are empty");
    if (db.min < 1 || db.min > db.max) out.push_back("depth bounds of stage " + std::to_string(i) + " are empty");
    if (wb.min >= 1 && wb.min <= wb.max && width_lattice(p, static_cast<int>(i)).empty()) {
      out.push_back("no multiple of width_granularity inside the width bounds of stage " +
                    std::to_string(i));
    }
  }
  if (!out.empty()) return out;
  for (const auto& v : validate(realize(cheapest_point(p), p))) {
    out.push_back("realized network is invalid: " + v.message);
  }
  return out;
}

std::vector<int> width_lattice(const ProblemSpec& prob, int stage) {
  const auto& b = prob.width_bounds[static_cast<std::size_t>(stage)];
  const int g = prob.width_granularity;
  std::vector<int> out;
  for (int w = (b.min + g - 1) / g * g; w <= b.max; w += g) out.push_back(w);
  return out;
}

std::uint64_t lattice_size(const ProblemSpec& prob) {
  std::uint64_t n = 1;
  for (int i = 0; i < prob.stages; ++i) {
    const auto& db = prob.depth_bounds[static_cast<std::size_t>(i)];
    n *= static_cast<std::uint64_t>(width_lattice(prob, i).size()) *
         static_cast<std::uint64_t>(db.max - db.min + 1);
  }
  return n;
}

NetworkSpec realize(const Candidate& cand, const ProblemSpec& prob) {
  const auto m = static_cast<std::size_t>(prob.stages);
  if (cand.widths.size() != m || cand.depths.size() != m) {
    throw ProblemError("candidate needs one width and one depth per stage");
  }
  NetworkSpec net;
  net.input_resolution = prob.input_resolution;
  net.input_channels = prob.input_channels;
  net.stem = prob.stem;
  net.head_channels = prob.head_channels;
  net.num_classes = prob.num_classes;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& wb = prob.width_bounds[i];
    const auto& db = prob.depth_bounds[i];
    const int w = cand.widths[i];
    const int d = cand.depths[i];
    if (w < wb.min || w > wb.max || d < db.min || d > db.max) {
      std::ostringstream os;
      os << "candidate stage " << i << " (width " << w << ", depth " << d
         << ") is outside the problem bounds";
      throw ProblemError(os.str());
    }
    if (w % prob.width_granularity != 0) {
      std::ostringstream os;
      os << "candidate stage " << i << " width " << w << " is not a multiple of "
         << prob.width_granularity;
      throw ProblemError(os.str());
    }
    net.stages.push_back(StageSpec{prob.block, d, w, prob.block.kernel, 1, prob.downsample[i]});
  }
  return net;
}

Candidate extract(const NetworkSpec& net) {
  Candidate c;
  for (const auto& s : net.stages) {
    c.widths.push_back(s.width);
    c.depths.push_back(s.depth);
  }
  return c;
}

double objective(const Candidate& cand, const ProblemSpec& prob) {
  return evaluate_candidate(cand, prob).scored.objective;
}

Feasibility feasible(const MetricReport& r, const ProblemSpec& prob) {
  Feasibility f;
  auto check = [&](const char* name, double usage, double limit) {
    if (usage > limit) f.violations.push_back({name, usage, limit, (usage - limit) / limit});
  };
  check("rho", r.rho, prob.rho0);
  check("flops", static_cast<double>(r.flops), static_cast<double>(prob.max_flops));
  check("params", static_cast<double>(r.params), static_cast<double>(prob.max_params));
  double worst_drop = 0.0;
  for (std::size_t i = 1; i < r.stage_widths.size(); ++i) {
    const double drop = static_cast<double>(r.stage_widths[i - 1] - r.stage_widths[i]) /
                        static_cast<double>(r.stage_widths[i - 1]);
    worst_drop = std::max(worst_drop, drop);
  }
  if (worst_drop > 0.0) f.violations.push_back({"monotone", worst_drop, 0.0, worst_drop});
  f.ok = f.violations.empty();
  return f;
}

Feasibility feasible(const Candidate& cand, const ProblemSpec& prob) {
  return evaluate_candidate(cand, prob).feasibility;
}

Slacks slacks(const MetricReport& r, const ProblemSpec& prob) {
  return {prob.rho0 - r.rho, static_cast<double>(prob.max_flops - r.flops),
          static_cast<double>(prob.max_params - r.params)};
}

std::vector<double> pool_adjacent_violators(std::vector<double> values) {
  struct Block {
    double sum;
    std::size_t count;
    double mean() const { return sum / static_cast<double>(count); }
  };
  std::vector<Block> blocks;
  for (double v : values) {
    blocks.push_back({v, 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean() > blocks.back().mean()) {
      Block top = blocks.back();
      blocks.pop_back();
      blocks.back().sum += top.sum;
      blocks.back().count += top.count;
    }
  }
  std::size_t k = 0;
  for (const auto& b : blocks) {
    for (std::size_t j = 0; j < b.count; ++j) values[k++] = b.mean();
  }
  return values;
}

std::optional<Candidate> round_and_repair(const RelaxedPoint& point, const ProblemSpec& prob) {
  if (auto issues = check_problem(prob); !issues.empty()) throw ProblemError(issues.front());
  Evaluator ev(prob, std::numeric_limits<std::int64_t>::max());
  return repair(round_point(point, prob, ev), prob, ev);
}

bool better(const Scored& a, const Scored& b) {
  if (a.feasible != b.feasible) return a.feasible;
  if (a.objective != b.objective) return a.objective > b.objective;
  if (a.params != b.params) return a.params < b.params;
  if (a.cand.widths != b.cand.widths) return a.cand.widths < b.cand.widths;
  return a.cand.depths < b.cand.depths;
}

std::vector<ConstraintViolation> infeasibility_diagnosis(const ProblemSpec& prob) {
  auto v = evaluate_candidate(cheapest_point(prob), prob).feasibility.violations;
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return a.relative > b.relative;
  });
  return v;
}

Candidate brute_force(const ProblemSpec& prob, const BruteForceOptions& opts) {
  if (auto issues = check_problem(prob); !issues.empty()) throw ProblemError(issues.front());
  const std::uint64_t size = lattice_size(prob);
  if (size > opts.max_enumeration) {
    throw LatticeTooLarge("lattice has " + std::to_string(size) + " points, cap is " +
                          std::to_string(opts.max_enumeration));
  }
  const auto m = static_cast<std::size_t>(prob.stages);
  std::vector<std::vector<int>> lattices;
  for (int i = 0; i < prob.stages; ++i) lattices.push_back(width_lattice(prob, i));

  std::optional<Scored> best;
  std::vector<std::size_t> wi(m, 0);
  Candidate c;
  c.widths.resize(m);
  c.depths.resize(m);
  // Odometer over widths, then over depths for each monotone width vector.
  while (true) {
    bool monotone = true;
    for (std::size_t s = 0; s < m; ++s) {
      c.widths[s] = lattices[s][wi[s]];
      if (s > 0 && c.widths[s] < c.widths[s - 1]) monotone = false;
    }
    if (monotone) {
      for (std::size_t s = 0; s < m; ++s) c.depths[s] = prob.depth_bounds[s].min;
      while (true) {
        const Evaluation e = evaluate_candidate(c, prob);
        if (e.scored.feasible && (!best || better(e.scored, *best))) best = e.scored;
        std::size_t s = 0;
        for (; s < m; ++s) {
          if (++c.depths[s] <= prob.depth_bounds[s].max) break;
          c.depths[s] = prob.depth_bounds[s].min;
        }
        if (s == m) break;
      }
    }
    std::size_t s = 0;
    for (; s < m; ++s) {
      if (++wi[s] < lattices[s].size()) break;
      wi[s] = 0;
    }
    if (s == m) break;
  }
  if (!best) throw InfeasibleError("no feasible candidate in the lattice", infeasibility_diagnosis(prob));
  return best->cand;
}

SolveReport solve(const ProblemSpec& prob, const SolveOptions& opts) {
  if (auto issues = check_problem(prob); !issues.empty()) throw ProblemError(issues.front());
  const auto t0 = std::chrono::steady_clock::now();
  const int restarts = std::max(1, opts.restarts);
  const std::int64_t total = std::max<std::int64_t>(0, opts.max_evals);

  std::vector<std::int64_t> budgets(static_cast<std::size_t>(restarts));
  for (int r = 0; r < restarts; ++r) {
    budgets[static_cast<std::size_t>(r)] = total / restarts + (r < total % restarts ? 1 : 0);
  }
  std::vector<std::optional<RestartTrace>> results(static_cast<std::size_t>(restarts));
  auto work = [&](int r) {
    const auto s = static_cast<std::size_t>(r);
    if (budgets[s] > 0) results[s] = run_restart(prob, opts.seed, r, budgets[s]);
  };
  const int threads = std::clamp(opts.threads, 1, restarts);
  if (threads == 1) {
    for (int r = 0; r < restarts; ++r) work(r);
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (int r = t; r < restarts; r += threads) work(r);
      });
    }
  }

  SolveReport report;
  report.problem = prob.name;
  std::optional<Scored> best;
  for (std::size_t r = 0; r < results.size(); ++r) {
    if (!results[r]) continue;
    const RestartTrace& t = *results[r];
    ++report.restarts_used;
    report.evaluations += t.evaluations;
    if (t.evaluations >= budgets[r]) report.budget_exhausted = true;
    if (t.best) {
      Scored s{*t.best, t.objective, 0, t.feasible};
      if (t.feasible) s.params = evaluate_candidate(*t.best, prob).scored.params;
      if (!best || better(s, *best)) best = s;
    }
    if (opts.trace) report.trace.push_back(t);
  }

  // Recompute the winner's metrics from its realized network.
  if (best && best->feasible) {
    const NetworkSpec net = realize(best->cand, prob);
    const MetricReport metrics = analyze(net, prob.alphas, prob.convention);
    const Feasibility f = feasible(metrics, prob);
    report.best = best->cand;
    report.objective = penalized(metrics.weighted_entropy, prob.beta, metrics.Q);
    report.feasible = f.ok;
    report.slacks = slacks(metrics, prob);
    report.violations = f.violations;
  } else {
    const Candidate c = best ? best->cand : cheapest_point(prob);
    const Evaluation e = evaluate_candidate(c, prob);
    report.best = c;
    report.objective = e.scored.objective;
    report.feasible = e.feasibility.ok;
    report.slacks = slacks(e.metrics, prob);
    report.violations = e.feasibility.ok ? std::vector<ConstraintViolation>{}
                                         : infeasibility_diagnosis(prob);
    if (report.violations.empty()) report.violations = e.feasibility.violations;
  }
  report.wall_time = std::chrono::steady_clock::now() - t0;
  return report;
}

}  // namespace deepmad
