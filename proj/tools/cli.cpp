#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "deepmad/catalog.hpp"
#include "deepmad/io.hpp"
#include "deepmad/metrics.hpp"
#include "deepmad/solver.hpp"
#include "deepmad/variance.hpp"

namespace deepmad::cli {

namespace {

using ordered_json = nlohmann::ordered_json;

/// A failure that maps to exit code 1 after its message is printed.
struct DomainFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConventionFlags {
  bool shortcuts = false;
  bool no_stem = false;
  bool no_batch_norm = false;
  bool stagewise = false;

  void attach(CLI::App* app) {
    app->add_flag("--shortcuts-in-entropy", shortcuts,
                  "Count projection shortcuts on the entropy and effectiveness paths");
    app->add_flag("--no-stem-in-entropy", no_stem, "Leave the stem conv off the entropy path");
    app->add_flag("--no-batch-norm", no_batch_norm,
                  "Count convolutions only: no BatchNorm params or FLOPs");
    app->add_flag("--stagewise-entropy", stagewise,
                  "Stage entropy sums only that stage's layers instead of all layers so far");
  }

  Convention get() const {
    Convention c;
    c.shortcuts_in_entropy = shortcuts;
    c.stem_in_entropy = !no_stem;
    c.batch_norm = !no_batch_norm;
    c.cumulative_stage_entropy = !stagewise;
    return c;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string join(const std::vector<double>& v, const char* f = "%.4f") {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(f, v[i]);
  return s;
}

struct LoadedArch {
  NetworkSpec net;
  std::string name;
};

LoadedArch load_arch(const std::string& name_or_path, bool allow_unknown) {
  LoadedArch a;
  a.net = catalog::load_architecture(name_or_path, allow_unknown);
  if (std::filesystem::exists(name_or_path)) {
    a.name = io::architecture_name(io::read_file(name_or_path));
    if (a.name.empty()) a.name = std::filesystem::path(name_or_path).stem().string();
  } else {
    a.name = name_or_path;
  }
  return a;
}

void check_valid(const NetworkSpec& net, const std::string& name) {
  const auto issues = validate(net);
  if (issues.empty()) return;
  std::string msg = name + ": invalid architecture";
  for (const auto& v : issues) msg += "\n  " + v.message;
  throw DomainFailure(msg);
}

void print_metrics(std::ostream& out, const std::string& name, const MetricReport& m) {
  out << "architecture      " << name << '\n'
      << "depth             " << m.depth << '\n'
      << "stage widths      " << join(m.stage_widths) << '\n'
      << "stage depths      " << join(m.stage_depths) << '\n'
      << "entropy per stage " << join(m.entropy_per_stage, "%.2f") << '\n'
      << "alphas            " << join(m.alphas, "%g") << '\n'
      << "weighted entropy  " << fmt("%.4f", m.weighted_entropy) << '\n'
      << "rho               " << fmt("%.4f", m.rho) << '\n'
      << "Q                 " << fmt("%.6g", m.Q) << '\n'
      << "average width     " << fmt("%.2f", m.average_width) << '\n'
      << "params            " << m.params << fmt(" (%.3fM)", static_cast<double>(m.params) / 1e6)
      << '\n'
      << "flops             " << m.flops << fmt(" (%.1fM)", static_cast<double>(m.flops) / 1e6)
      << '\n'
      << "macs              " << m.macs << '\n'
      << "monotone          " << (m.monotone ? "yes" : "no") << '\n';
}

void emit(std::ostream& out, const std::string& doc, const std::string& path) {
  if (path.empty() || path == "-") {
    out << doc;
  } else {
    io::write_file(path, doc);
  }
}

int cmd_analyze(const std::string& arch, const std::vector<double>& alphas, bool json,
                const std::string& out_path, bool layers, bool allow_unknown,
                const Convention& conv, std::ostream& out) {
  const LoadedArch a = load_arch(arch, allow_unknown);
  check_valid(a.net, a.name);
  const MetricReport m = analyze(a.net, alphas, conv);
  if (layers) {
    emit(out, io::serialize_layers(expand(a.net)), out_path);
  } else if (json || !out_path.empty()) {
    emit(out, io::serialize(m, a.name), out_path);
  } else {
    print_metrics(out, a.name, m);
  }
  return kOk;
}

struct SolveFlags {
  std::string problem;
  std::uint64_t seed = 0;
  int restarts = SolveOptions{}.restarts;
  std::int64_t max_evals = SolveOptions{}.max_evals;
  int threads = 1;
  std::string out;
  std::string report;
  std::string solve_report;
  bool trace = false;
  bool timing = false;
  bool json = false;
  bool allow_unknown = false;
};

int cmd_solve(const SolveFlags& f, std::ostream& out, std::ostream& err) {
  const ProblemSpec prob = io::load_problem(f.problem, {f.allow_unknown});
  SolveOptions opts;
  opts.seed = f.seed;
  opts.restarts = f.restarts;
  opts.max_evals = f.max_evals;
  opts.threads = f.threads;
  opts.trace = f.trace;
  const SolveReport r = solve(prob, opts);

  const std::string report_doc = io::serialize(r, {f.timing, f.trace});
  if (!f.solve_report.empty()) io::write_file(f.solve_report, report_doc);
  if (r.feasible) {
    const NetworkSpec net = realize(r.best, prob);
    const std::string name = prob.name.empty() ? "solution" : prob.name;
    if (!f.out.empty()) io::write_file(f.out, io::serialize(net, name));
    if (!f.report.empty()) {
      io::write_file(f.report, io::serialize(analyze(net, prob.alphas, prob.convention), name));
    }
  }

  if (f.json) {
    out << report_doc;
  } else {
    out << "problem           " << (prob.name.empty() ? f.problem : prob.name) << '\n'
        << "feasible          " << (r.feasible ? "yes" : "no") << '\n'
        << "widths            " << join(r.best.widths) << '\n'
        << "depths            " << join(r.best.depths) << '\n'
        << "objective         " << fmt("%.4f", r.objective) << '\n'
        << "slack rho         " << fmt("%.6g", r.slacks.rho) << '\n'
        << "slack flops       " << fmt("%.0f", r.slacks.flops) << '\n'
        << "slack params      " << fmt("%.0f", r.slacks.params) << '\n'
        << "restarts          " << r.restarts_used << '\n'
        << "evaluations       " << r.evaluations << '\n';
    if (r.budget_exhausted) out << "budget exhausted  yes\n";
    for (const auto& v : r.violations) {
      out << "violated          " << v.constraint << ": usage " << fmt("%.6g", v.usage)
          << " > limit " << fmt("%.6g", v.limit) << fmt(" (+%.2f%%)", 100.0 * v.relative) << '\n';
    }
  }
  err << "wall time " << fmt("%.3f", r.wall_time.count()) << " s\n";
  if (r.budget_exhausted) err << "warning: evaluation budget exhausted; best so far returned\n";
  if (!r.feasible) {
    err << (r.budget_exhausted ? "no feasible candidate found within the evaluation budget"
                               : "infeasible: no candidate within bounds meets every constraint");
    if (!r.violations.empty()) err << "; binding: " << r.violations.front().constraint;
    err << '\n';
    return kDomainFailure;
  }
  return kOk;
}

int cmd_compare(const std::string& a_path, const std::string& b_path, bool json,
                bool allow_unknown, const Convention& conv, std::ostream& out) {
  const LoadedArch a = load_arch(a_path, allow_unknown);
  const LoadedArch b = load_arch(b_path, allow_unknown);
  check_valid(a.net, a.name);
  check_valid(b.net, b.name);
  const MetricReport ma = analyze(a.net, {}, conv);
  const MetricReport mb = analyze(b.net, {}, conv);
  struct Row {
    const char* name;
    double a, b;
    const char* f;
  };
  const std::vector<Row> rows = {
      {"weighted_entropy", ma.weighted_entropy, mb.weighted_entropy, "%.4f"},
      {"rho", ma.rho, mb.rho, "%.4f"},
      {"Q", ma.Q, mb.Q, "%.6g"},
      {"params", static_cast<double>(ma.params), static_cast<double>(mb.params), "%.0f"},
      {"flops", static_cast<double>(ma.flops), static_cast<double>(mb.flops), "%.0f"},
      {"depth", static_cast<double>(ma.depth), static_cast<double>(mb.depth), "%.0f"},
      {"average_width", ma.average_width, mb.average_width, "%.4f"},
  };
  if (json) {
    ordered_json j;
    j["format"] = "deepmad-comparison";
    j["version"] = io::kFormatVersion;
    j["a"] = a.name;
    j["b"] = b.name;
    ordered_json metrics = ordered_json::array();
    for (const auto& r : rows) {
      ordered_json m;
      m["metric"] = r.name;
      m["a"] = r.a;
      m["b"] = r.b;
      m["delta"] = r.b - r.a;
      metrics.push_back(std::move(m));
    }
    j["metrics"] = std::move(metrics);
    out << j.dump(2) << '\n';
    return kOk;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-18s %18s %18s %18s\n", "metric", a.name.c_str(),
                b.name.c_str(), "delta (b - a)");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-18s %18s %18s %18s\n", r.name, fmt(r.f, r.a).c_str(),
                  fmt(r.f, r.b).c_str(), fmt(r.f, r.b - r.a).c_str());
    out << buf;
  }
  return kOk;
}

int cmd_verify(SimulationConfig cfg, bool json, const std::string& out_path, std::ostream& out) {
  const VarianceReport r = verify_variance(cfg);
  if (json || !out_path.empty()) {
    emit(out, io::serialize(r), out_path);
  } else {
    out << "widths            " << join(cfg.widths) << '\n'
        << "samples           " << cfg.n_samples << (cfg.quenched ? " (quenched)" : "") << '\n'
        << "theory variance   " << fmt("%.6g", r.theory.variance) << '\n'
        << "sample variance   " << fmt("%.6g", r.empirical.variance) << '\n'
        << "ratio             " << fmt("%.4f", r.ratio) << " (band +/- " << fmt("%.4f", r.band)
        << ")\n"
        << "sample mean       " << fmt("%.6g", r.mean.mean) << " (band +/- "
        << fmt("%.6g", r.mean.band) << ")\n"
        << "asserted          " << (r.assertion_mode ? "yes" : "no (report only)") << '\n'
        << "result            " << (r.pass ? "pass" : "fail") << '\n';
  }
  return r.assertion_mode && !r.pass ? kDomainFailure : kOk;
}

int cmd_catalog(const std::string& name, const std::string& export_path, bool json,
                const Convention& conv, std::ostream& out) {
  if (!name.empty()) {
    const auto& e = catalog::reference(name);
    if (!export_path.empty() || json) {
      emit(out, io::serialize(e.spec, e.name), export_path);
      return kOk;
    }
    const MetricReport m = analyze(e.spec, {}, conv);
    print_metrics(out, e.name, m);
    out << "source            " << e.source << '\n'
        << "expected          " << e.expected.citation << '\n';
    return catalog::check_entry(e, conv).ok() ? kOk : kDomainFailure;
  }
  bool all_ok = true;
  ordered_json arr = ordered_json::array();
  char buf[200];
  if (!json) {
    std::snprintf(buf, sizeof buf, "%-16s %8s %8s %14s %14s %6s\n", "name", "rho", "expect",
                  "params", "flops", "ok");
    out << buf;
  }
  for (const auto& e : catalog::entries()) {
    const auto c = catalog::check_entry(e, conv);
    all_ok = all_ok && c.ok();
    if (json) {
      ordered_json j;
      j["name"] = e.name;
      j["rho"] = c.rho;
      j["params"] = c.params;
      j["flops"] = c.flops;
      j["expected"] = {{"rho", e.expected.rho},
                       {"params", e.expected.params},
                       {"flops", e.expected.flops}};
      j["ok"] = c.ok();
      arr.push_back(std::move(j));
    } else {
      std::snprintf(buf, sizeof buf, "%-16s %8.4f %8.2f %14lld %14lld %6s\n", e.name.c_str(),
                    c.rho, e.expected.rho, static_cast<long long>(c.params),
                    static_cast<long long>(c.flops), c.ok() ? "yes" : "NO");
      out << buf;
    }
  }
  if (json) out << arr.dump(2) << '\n';
  return all_ok ? kOk : kDomainFailure;
}

int cmd_calibrate(const std::string& out_path, std::ostream& out) {
  const auto report = catalog::calibrate();
  std::string doc = "# Convention calibration\n\n";
  doc += "Every combination of the four counting flags, evaluated on the reference catalog.\n";
  doc += "Columns per entry are rho / params / FLOPs at 224x224.\n\n";
  doc += catalog::render_markdown(report);
  emit(out, doc, out_path);
  return report.ok() ? kOk : kDomainFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Entropy-driven CNN architecture design by mathematical programming", "deepmad"};
  app.require_subcommand(0, 1);
  bool version = false;
  app.add_flag("--version", version, "Print version and the pinned counting convention");

  ConventionFlags conv_flags;
  bool allow_unknown = false;

  auto* analyze_cmd = app.add_subcommand("analyze", "Metrics of one architecture");
  std::string analyze_arch, analyze_out;
  std::vector<double> alphas;
  bool analyze_json = false, analyze_layers = false;
  analyze_cmd->add_option("arch", analyze_arch, "Catalog name or architecture file")->required();
  analyze_cmd->add_option("--alpha", alphas, "Stage weights, one per stage")->delimiter(',');
  analyze_cmd->add_flag("--json", analyze_json, "Emit the JSON metric report");
  analyze_cmd->add_flag("--layers", analyze_layers, "Emit the expanded layer table as JSON");
  analyze_cmd->add_option("--out", analyze_out, "Write the JSON report to a file");
  analyze_cmd->add_flag("--allow-unknown-fields", allow_unknown);
  conv_flags.attach(analyze_cmd);

  auto* solve_cmd = app.add_subcommand("solve", "Solve an architecture design problem");
  SolveFlags sf;
  solve_cmd->add_option("--problem", sf.problem, "Problem file")->required();
  solve_cmd->add_option("--seed", sf.seed, "Seed for restart start points");
  solve_cmd->add_option("--restarts", sf.restarts, "Number of restarts")->check(CLI::PositiveNumber);
  solve_cmd->add_option("--max-evals", sf.max_evals, "Total evaluation budget")
      ->check(CLI::PositiveNumber);
  solve_cmd->add_option("--threads", sf.threads, "Worker threads for restarts")
      ->envname("DEEPMAD_THREADS")
      ->check(CLI::PositiveNumber);
  solve_cmd->add_option("--out", sf.out, "Write the solved architecture");
  solve_cmd->add_option("--report", sf.report, "Write the solved architecture's metric report");
  solve_cmd->add_option("--solve-report", sf.solve_report, "Write the solve report");
  solve_cmd->add_flag("--trace", sf.trace, "Include per-restart results in the solve report");
  solve_cmd->add_flag("--timing", sf.timing, "Include wall time in the solve report");
  solve_cmd->add_flag("--json", sf.json, "Print the solve report instead of a summary");
  solve_cmd->add_flag("--allow-unknown-fields", sf.allow_unknown);

  auto* compare_cmd = app.add_subcommand("compare", "Side-by-side metrics of two architectures");
  std::string cmp_a, cmp_b;
  bool cmp_json = false;
  compare_cmd->add_option("a", cmp_a, "Catalog name or architecture file")->required();
  compare_cmd->add_option("b", cmp_b, "Catalog name or architecture file")->required();
  compare_cmd->add_flag("--json", cmp_json);
  compare_cmd->add_flag("--allow-unknown-fields", allow_unknown);
  conv_flags.attach(compare_cmd);

  auto* verify_cmd = app.add_subcommand(
      "verify-variance", "Monte-Carlo check of the output variance of a random linear MLP");
  SimulationConfig sim;
  std::string verify_out;
  bool verify_json = false;
  verify_cmd->add_option("--widths", sim.widths, "Layer widths w_1..w_L")
      ->delimiter(',')
      ->required()
      ->check(CLI::PositiveNumber);
  verify_cmd->add_option("--samples", sim.n_samples, "Sample count")->check(CLI::PositiveNumber);
  verify_cmd->add_option("--seed", sim.seed);
  verify_cmd->add_option("--band", sim.band_standard_errors, "Acceptance band in standard errors")
      ->check(CLI::PositiveNumber);
  verify_cmd->add_flag("--quenched", sim.quenched, "Fix the weights for the whole run");
  verify_cmd->add_option("--threads", sim.threads)
      ->envname("DEEPMAD_THREADS")
      ->check(CLI::PositiveNumber);
  verify_cmd->add_flag("--json", verify_json);
  verify_cmd->add_option("--out", verify_out);

  auto* catalog_cmd = app.add_subcommand("catalog", "Reference architectures and their checks");
  std::string cat_name, cat_export;
  bool cat_json = false;
  catalog_cmd->add_option("name", cat_name, "Entry to show");
  catalog_cmd->add_option("--export", cat_export, "Write the entry as an architecture file");
  catalog_cmd->add_flag("--json", cat_json);
  conv_flags.attach(catalog_cmd);

  auto* calibrate_cmd = app.add_subcommand("calibrate", "Sweep the counting conventions");
  std::string cal_out;
  calibrate_cmd->add_option("--out", cal_out, "Write the markdown report");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  if (version) {
    const Convention conv;
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(catalog::convention_hash(conv)));
    out << "deepmad " << kVersion << '\n'
        << "convention " << describe(conv) << '\n'
        << "convention-hash " << hash << '\n';
    return kOk;
  }

  try {
    const Convention conv = conv_flags.get();
    if (*analyze_cmd) {
      return cmd_analyze(analyze_arch, alphas, analyze_json, analyze_out, analyze_layers,
                         allow_unknown, conv, out);
    }
    if (*solve_cmd) return cmd_solve(sf, out, err);
    if (*compare_cmd) return cmd_compare(cmp_a, cmp_b, cmp_json, allow_unknown, conv, out);
    if (*verify_cmd) return cmd_verify(sim, verify_json, verify_out, out);
    if (*catalog_cmd) return cmd_catalog(cat_name, cat_export, cat_json, conv, out);
    if (*calibrate_cmd) return cmd_calibrate(cal_out, out);
  } catch (const io::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == io::ParseError::Kind::Empty ? kUsage : kDomainFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDomainFailure;
  }
  err << app.help();
  return kUsage;
}

}  // namespace deepmad::cli
