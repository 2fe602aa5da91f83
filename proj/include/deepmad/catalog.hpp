#pragma once

// Reference architectures (ResNet-18/34/50, MobileNetV2, EfficientNet-B0) and
// the convention sweep that calibrates counting rules against them.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "deepmad/arch.hpp"
#include "deepmad/metrics.hpp"

namespace deepmad::catalog {

struct Expected {
  std::int64_t params = 0;
  std::int64_t flops = 0;
  double rho = 0.0;
  double params_tolerance = 0.02;  // relative
  double flops_tolerance = 0.03;   // relative
  double rho_tolerance = 0.01;     // absolute
  std::string citation;
};

struct CatalogEntry {
  std::string name;
  std::string source;  // where the layer table was transcribed from
  NetworkSpec spec;
  Expected expected;
};

const std::vector<CatalogEntry>& entries();
std::vector<std::string> names();

/// Throws std::out_of_range for unknown names.
const CatalogEntry& reference(std::string_view name);

/// A catalog name, or a path to an architecture file.
NetworkSpec load_architecture(const std::string& name_or_path, bool allow_unknown_fields = false);

struct EntryCheck {
  std::string name;
  double rho = 0.0;
  std::int64_t params = 0;
  std::int64_t flops = 0;
  bool rho_ok = false;
  bool params_ok = false;
  bool flops_ok = false;
  bool ok() const { return rho_ok && params_ok && flops_ok; }
};

EntryCheck check_entry(const CatalogEntry& entry, const Convention& conv);

struct CalibrationRow {
  Convention convention;
  std::vector<EntryCheck> entries;
  bool all_pass = false;
  double score = 0.0;  // summed tolerance-normalized error; lower is closer
};

struct CalibrationReport {
  std::vector<CalibrationRow> rows;
  int selected = -1;  // best passing row, or best row overall when none pass
  int passing = 0;
  bool ok() const { return passing > 0; }
};

/// Sweeps all 16 convention combinations over every catalog entry. Rows are
/// ordered so that ties in score resolve toward the documented defaults.
CalibrationReport calibrate();

std::string render_markdown(const CalibrationReport& report);

/// FNV-1a of describe(conv); printed by `--version`.
std::uint64_t convention_hash(const Convention& conv);

}  // namespace deepmad::catalog
