#include "deepmad/io.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace deepmad::io {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw ParseError(ParseError::Kind::Schema, (path.empty() ? std::string("<root>") : path) + ": " + what);
}

/// Field access with path-qualified errors and unknown-field rejection.
class Reader {
 public:
  Reader(const json& j, std::string path, bool allow_unknown)
      : j_(j), path_(std::move(path)), allow_unknown_(allow_unknown) {
    if (!j_.is_object()) schema_error(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& at(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) schema_error(path_, "missing required field '" + key + "'");
    return *it;
  }

  std::string child(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  std::int64_t integer(const std::string& key) {
    const json& v = at(key);
    if (!v.is_number_integer()) schema_error(child(key), "expected an integer");
    return v.get<std::int64_t>();
  }
  int int32(const std::string& key) {
    const std::int64_t v = integer(key);
    if (v < INT32_MIN || v > INT32_MAX) schema_error(child(key), "integer out of range");
    return static_cast<int>(v);
  }
  int int32_or(const std::string& key, int fallback) {
    return has(key) ? int32(key) : fallback;
  }
  double number(const std::string& key) {
    const json& v = at(key);
    if (!v.is_number()) schema_error(child(key), "expected a number");
    return v.get<double>();
  }
  double number_or(const std::string& key, double fallback) {
    return has(key) ? number(key) : fallback;
  }
  bool boolean(const std::string& key) {
    const json& v = at(key);
    if (!v.is_boolean()) schema_error(child(key), "expected true or false");
    return v.get<bool>();
  }
  bool boolean_or(const std::string& key, bool fallback) {
    return has(key) ? boolean(key) : fallback;
  }
  std::string string(const std::string& key) {
    const json& v = at(key);
    if (!v.is_string()) schema_error(child(key), "expected a string");
    return v.get<std::string>();
  }
  std::string string_or(const std::string& key, std::string fallback) {
    return has(key) ? string(key) : fallback;
  }
  const json& array(const std::string& key) {
    const json& v = at(key);
    if (!v.is_array()) schema_error(child(key), "expected an array");
    return v;
  }

  void finish() const {
    if (allow_unknown_) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) schema_error(path_, "unknown field '" + it.key() + "'");
    }
  }

  bool allow_unknown() const { return allow_unknown_; }

 private:
  const json& j_;
  std::string path_;
  bool allow_unknown_;
  std::set<std::string> seen_;
};

json parse_json(std::string_view text) {
  bool blank = true;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) {
      blank = false;
      break;
    }
  }
  if (blank) throw ParseError(ParseError::Kind::Empty, "input is empty");
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(ParseError::Kind::Syntax, e.what());
  }
}

void check_header(Reader& r, std::string_view format) {
  const std::string got = r.string("format");
  if (got != format) {
    schema_error("format", "expected '" + std::string(format) + "', found '" + got + "'");
  }
  const std::int64_t version = r.integer("version");
  if (version != kFormatVersion) {
    schema_error("version", "unsupported version " + std::to_string(version));
  }
}

BlockType parse_block_type(const std::string& s, const std::string& path) {
  for (BlockType t : {BlockType::PlainConvBNReLU, BlockType::ResNetBasic,
                      BlockType::ResNetBottleneck, BlockType::MobileNetV2SE}) {
    if (to_string(t) == s) return t;
  }
  schema_error(path, "unknown block type '" + s + "'");
}

ordered_json block_json(const BlockKind& b) {
  ordered_json j;
  j["type"] = to_string(b.type);
  j["bottleneck_ratio"] = b.bottleneck_ratio;
  j["expansion_ratio"] = b.expansion_ratio;
  j["se_reduction"] = b.se_reduction;
  j["kernel"] = b.kernel;
  return j;
}

BlockKind read_block(const json& j, const std::string& path, bool allow_unknown) {
  Reader r(j, path, allow_unknown);
  BlockKind b;
  b.type = parse_block_type(r.string("type"), r.child("type"));
  b.bottleneck_ratio = r.int32_or("bottleneck_ratio", b.bottleneck_ratio);
  b.expansion_ratio = r.int32_or("expansion_ratio", b.expansion_ratio);
  b.se_reduction = r.int32_or("se_reduction", b.se_reduction);
  b.kernel = r.int32_or("kernel", b.kernel);
  r.finish();
  return b;
}

ordered_json stem_json(const StemSpec& s) {
  ordered_json j;
  j["channels"] = s.channels;
  j["kernel"] = s.kernel;
  j["stride"] = s.stride;
  j["max_pool"] = s.max_pool;
  return j;
}

StemSpec read_stem(const json& j, const std::string& path, bool allow_unknown) {
  Reader r(j, path, allow_unknown);
  StemSpec s;
  s.channels = r.int32("channels");
  s.kernel = r.int32("kernel");
  s.stride = r.int32("stride");
  s.max_pool = r.boolean_or("max_pool", false);
  r.finish();
  return s;
}

ordered_json convention_json(const Convention& c) {
  ordered_json j;
  j["shortcuts_in_entropy"] = c.shortcuts_in_entropy;
  j["stem_in_entropy"] = c.stem_in_entropy;
  j["batch_norm"] = c.batch_norm;
  j["cumulative_stage_entropy"] = c.cumulative_stage_entropy;
  return j;
}

Convention read_convention(const json& j, const std::string& path, bool allow_unknown) {
  Reader r(j, path, allow_unknown);
  Convention c;
  c.shortcuts_in_entropy = r.boolean_or("shortcuts_in_entropy", c.shortcuts_in_entropy);
  c.stem_in_entropy = r.boolean_or("stem_in_entropy", c.stem_in_entropy);
  c.batch_norm = r.boolean_or("batch_norm", c.batch_norm);
  c.cumulative_stage_entropy = r.boolean_or("cumulative_stage_entropy", c.cumulative_stage_entropy);
  r.finish();
  return c;
}

ordered_json network_json(const NetworkSpec& net) {
  ordered_json j;
  j["input_resolution"] = net.input_resolution;
  j["input_channels"] = net.input_channels;
  j["stem"] = stem_json(net.stem);
  ordered_json stages = ordered_json::array();
  for (const auto& s : net.stages) {
    ordered_json st;
    st["block"] = block_json(s.block);
    st["depth"] = s.depth;
    st["width"] = s.width;
    st["kernel"] = s.kernel;
    st["groups"] = s.groups;
    st["downsample"] = s.downsample;
    stages.push_back(std::move(st));
  }
  j["stages"] = std::move(stages);
  j["head_channels"] = net.head_channels;
  j["num_classes"] = net.num_classes;
  return j;
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

ordered_json candidate_json(const Candidate& c) {
  ordered_json j;
  j["widths"] = c.widths;
  j["depths"] = c.depths;
  return j;
}

ordered_json real_or_null(double v) {
  return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr);
}

std::vector<int> read_int_list(const json& arr, const std::string& path) {
  std::vector<int> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number_integer()) schema_error(path + "[" + std::to_string(i) + "]", "expected an integer");
    out.push_back(arr[i].get<int>());
  }
  return out;
}

}  // namespace

std::string serialize(const NetworkSpec& net, std::string_view name) {
  ordered_json j;
  j["format"] = kArchitectureFormat;
  j["version"] = kFormatVersion;
  if (!name.empty()) j["name"] = name;
  const ordered_json body = network_json(net);
  for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = *it;
  return dump(j);
}

NetworkSpec parse_architecture(std::string_view text, const ParseOptions& opts) {
  const json j = parse_json(text);
  Reader r(j, "", opts.allow_unknown_fields);
  check_header(r, kArchitectureFormat);
  r.string_or("name", "");
  r.string_or("description", "");
  NetworkSpec net;
  net.input_resolution = r.int32("input_resolution");
  net.input_channels = r.int32_or("input_channels", 3);
  net.stem = read_stem(r.at("stem"), "stem", opts.allow_unknown_fields);
  const json& stages = r.array("stages");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string path = "stages[" + std::to_string(i) + "]";
    Reader s(stages[i], path, opts.allow_unknown_fields);
    StageSpec st;
    st.block = read_block(s.at("block"), s.child("block"), opts.allow_unknown_fields);
    st.depth = s.int32("depth");
    st.width = s.int32("width");
    st.kernel = s.int32_or("kernel", st.block.kernel);
    st.groups = s.int32_or("groups", 1);
    st.downsample = s.boolean_or("downsample", false);
    s.finish();
    net.stages.push_back(st);
  }
  net.head_channels = r.int32_or("head_channels", 0);
  net.num_classes = r.int32("num_classes");
  r.finish();
  return net;
}

std::string architecture_name(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.is_object() && j.contains("name") && j["name"].is_string()) return j["name"].get<std::string>();
  } catch (const json::exception&) {
  }
  return {};
}

NetworkSpec load_architecture(const std::filesystem::path& path, const ParseOptions& opts) {
  const std::string text = read_file(path);
  try {
    return parse_architecture(text, opts);
  } catch (const ParseError& e) {
    throw ParseError(e.kind(), path.string() + ": " + e.what());
  }
}

std::string serialize(const ProblemSpec& p) {
  ordered_json j;
  j["format"] = kProblemFormat;
  j["version"] = kFormatVersion;
  if (!p.name.empty()) j["name"] = p.name;
  j["block"] = block_json(p.block);
  j["stages"] = p.stages;
  j["alphas"] = p.alphas;
  j["beta"] = p.beta;
  j["rho0"] = p.rho0;
  j["max_flops"] = p.max_flops;
  j["max_params"] = p.max_params;
  j["input_resolution"] = p.input_resolution;
  j["input_channels"] = p.input_channels;
  j["stem"] = stem_json(p.stem);
  j["head_channels"] = p.head_channels;
  j["num_classes"] = p.num_classes;
  j["downsample"] = p.downsample;
  ordered_json wb = ordered_json::array(), db = ordered_json::array();
  for (const auto& b : p.width_bounds) wb.push_back({b.min, b.max});
  for (const auto& b : p.depth_bounds) db.push_back({b.min, b.max});
  j["width_bounds"] = wb;
  j["depth_bounds"] = db;
  j["width_granularity"] = p.width_granularity;
  j["convention"] = convention_json(p.convention);
  return dump(j);
}

ProblemSpec parse_problem(std::string_view text, const ParseOptions& opts) {
  const json j = parse_json(text);
  Reader r(j, "", opts.allow_unknown_fields);
  check_header(r, kProblemFormat);
  r.string_or("description", "");
  ProblemSpec p;
  p.name = r.string_or("name", "");
  p.block = read_block(r.at("block"), "block", opts.allow_unknown_fields);
  p.stages = r.int32("stages");
  if (p.stages < 1) schema_error("stages", "must be >= 1");
  if (r.has("alphas")) {
    const json& a = r.array("alphas");
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!a[i].is_number()) schema_error("alphas[" + std::to_string(i) + "]", "expected a number");
      p.alphas.push_back(a[i].get<double>());
    }
  } else {
    p.alphas = default_alphas(p.stages);
  }
  p.beta = r.number_or("beta", 10.0);
  p.rho0 = r.number("rho0");
  p.max_flops = r.integer("max_flops");
  p.max_params = r.integer("max_params");
  p.input_resolution = r.int32("input_resolution");
  p.input_channels = r.int32_or("input_channels", 3);
  p.stem = read_stem(r.at("stem"), "stem", opts.allow_unknown_fields);
  p.head_channels = r.int32_or("head_channels", 0);
  p.num_classes = r.int32("num_classes");
  const json& ds = r.array("downsample");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!ds[i].is_boolean()) schema_error("downsample[" + std::to_string(i) + "]", "expected true or false");
    p.downsample.push_back(ds[i].get<bool>());
  }
  auto bounds = [&](const char* key) {
    std::vector<IntBounds> out;
    const json& arr = r.array(key);
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = std::string(key) + "[" + std::to_string(i) + "]";
      if (!arr[i].is_array() || arr[i].size() != 2) schema_error(path, "expected [min, max]");
      const auto v = read_int_list(arr[i], path);
      out.push_back({v[0], v[1]});
    }
    return out;
  };
  p.width_bounds = bounds("width_bounds");
  p.depth_bounds = bounds("depth_bounds");
  p.width_granularity = r.int32_or("width_granularity", 8);
  if (r.has("convention")) {
    p.convention = read_convention(r.at("convention"), "convention", opts.allow_unknown_fields);
  }
  r.finish();
  if (auto issues = check_problem(p); !issues.empty()) schema_error("", issues.front());
  return p;
}

ProblemSpec load_problem(const std::filesystem::path& path, const ParseOptions& opts) {
  const std::string text = read_file(path);
  try {
    return parse_problem(text, opts);
  } catch (const ParseError& e) {
    throw ParseError(e.kind(), path.string() + ": " + e.what());
  }
}

std::string serialize(const MetricReport& m, std::string_view name) {
  ordered_json j;
  j["format"] = kMetricsFormat;
  j["version"] = kFormatVersion;
  if (!name.empty()) j["name"] = name;
  j["entropy_per_stage"] = m.entropy_per_stage;
  j["alphas"] = m.alphas;
  j["weighted_entropy"] = m.weighted_entropy;
  j["rho"] = m.rho;
  j["Q"] = real_or_null(m.Q);
  j["params"] = m.params;
  j["flops"] = m.flops;
  j["macs"] = m.macs;
  j["depth"] = m.depth;
  j["average_width"] = m.average_width;
  j["stage_widths"] = m.stage_widths;
  j["stage_depths"] = m.stage_depths;
  j["monotone"] = m.monotone;
  j["widths"] = m.widths;
  return dump(j);
}

std::string serialize_layers(const std::vector<LayerDescriptor>& layers) {
  ordered_json arr = ordered_json::array();
  for (const auto& l : layers) {
    ordered_json j;
    j["role"] = to_string(l.role);
    j["stage"] = l.stage;
    j["block"] = l.block;
    j["c_in"] = l.c_in;
    j["c_out"] = l.c_out;
    j["kernel"] = l.kernel;
    j["groups"] = l.groups;
    j["stride"] = l.stride;
    j["r_in"] = l.r_in;
    j["r_out"] = l.r_out;
    j["batch_norm"] = l.batch_norm;
    j["bias"] = l.bias;
    arr.push_back(std::move(j));
  }
  return dump(arr);
}

std::string serialize(const SolveReport& s, const SolveReportOptions& opts) {
  auto violations = [](const std::vector<ConstraintViolation>& vs) {
    ordered_json arr = ordered_json::array();
    for (const auto& v : vs) {
      ordered_json j;
      j["constraint"] = v.constraint;
      j["usage"] = v.usage;
      j["limit"] = v.limit;
      j["relative"] = v.relative;
      arr.push_back(std::move(j));
    }
    return arr;
  };
  ordered_json j;
  j["format"] = kSolveReportFormat;
  j["version"] = kFormatVersion;
  if (!s.problem.empty()) j["problem"] = s.problem;
  j["feasible"] = s.feasible;
  j["budget_exhausted"] = s.budget_exhausted;
  j["objective"] = real_or_null(s.objective);
  j["best"] = candidate_json(s.best);
  ordered_json sl;
  sl["rho"] = s.slacks.rho;
  sl["flops"] = s.slacks.flops;
  sl["params"] = s.slacks.params;
  j["slacks"] = sl;
  j["violations"] = violations(s.violations);
  j["restarts_used"] = s.restarts_used;
  j["evaluations"] = s.evaluations;
  if (opts.include_timing) j["wall_time_seconds"] = s.wall_time.count();
  if (opts.include_trace) {
    ordered_json arr = ordered_json::array();
    for (const auto& t : s.trace) {
      ordered_json tj;
      tj["restart"] = t.restart;
      tj["relaxed_widths"] = t.relaxed.widths;
      tj["relaxed_depths"] = t.relaxed.depths;
      tj["relaxed_objective"] = real_or_null(t.relaxed_objective);
      tj["repaired"] = t.repaired ? candidate_json(*t.repaired) : ordered_json(nullptr);
      tj["best"] = t.best ? candidate_json(*t.best) : ordered_json(nullptr);
      tj["objective"] = real_or_null(t.objective);
      tj["feasible"] = t.feasible;
      tj["evaluations"] = t.evaluations;
      arr.push_back(std::move(tj));
    }
    j["trace"] = std::move(arr);
  }
  return dump(j);
}

std::string serialize(const VarianceReport& r) {
  ordered_json j;
  j["format"] = kVarianceReportFormat;
  j["version"] = kFormatVersion;
  j["widths"] = r.config.widths;
  j["n_samples"] = r.config.n_samples;
  j["seed"] = r.config.seed;
  j["quenched"] = r.config.quenched;
  j["theoretical_variance"] = r.theory.variance;
  j["theoretical_log_variance"] = r.theory.log_variance;
  j["empirical_variance"] = r.empirical.variance;
  j["empirical_mean"] = r.empirical.mean;
  j["ratio"] = r.ratio;
  j["relative_standard_error"] = r.empirical.variance_rel_se;
  j["band"] = r.band;
  j["variance_pass"] = r.variance_pass;
  j["mean_band"] = r.mean.band;
  j["mean_pass"] = r.mean.pass;
  j["assertion_mode"] = r.assertion_mode;
  j["pass"] = r.pass;
  return dump(j);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::Io, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << contents;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace deepmad::io
