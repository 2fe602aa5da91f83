#pragma once

// Versioned JSON file formats for architectures, problems and reports.
// Schemas live in docs/schema/.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "deepmad/arch.hpp"
#include "deepmad/metrics.hpp"
#include "deepmad/solver.hpp"
#include "deepmad/variance.hpp"

namespace deepmad::io {

inline constexpr int kFormatVersion = 1;
inline constexpr std::string_view kArchitectureFormat = "deepmad-architecture";
inline constexpr std::string_view kProblemFormat = "deepmad-problem";
inline constexpr std::string_view kMetricsFormat = "deepmad-metrics";
inline constexpr std::string_view kSolveReportFormat = "deepmad-solve-report";
inline constexpr std::string_view kVarianceReportFormat = "deepmad-variance-report";

class ParseError : public std::runtime_error {
 public:
  enum class Kind { Empty, Syntax, Schema, Io };
  ParseError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct ParseOptions {
  bool allow_unknown_fields = false;
};

std::string serialize(const NetworkSpec& net, std::string_view name = {});
NetworkSpec parse_architecture(std::string_view text, const ParseOptions& opts = {});
NetworkSpec load_architecture(const std::filesystem::path& path, const ParseOptions& opts = {});
/// Optional "name" field of an architecture document, empty when absent.
std::string architecture_name(std::string_view text);

std::string serialize(const ProblemSpec& prob);
ProblemSpec parse_problem(std::string_view text, const ParseOptions& opts = {});
ProblemSpec load_problem(const std::filesystem::path& path, const ParseOptions& opts = {});

std::string serialize(const MetricReport& report, std::string_view name = {});
std::string serialize_layers(const std::vector<LayerDescriptor>& layers);

struct SolveReportOptions {
  bool include_timing = false;
  bool include_trace = false;
};
std::string serialize(const SolveReport& report, const SolveReportOptions& opts = {});

std::string serialize(const VarianceReport& report);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace deepmad::io
