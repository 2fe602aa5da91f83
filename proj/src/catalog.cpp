#include "deepmad/catalog.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "deepmad/io.hpp"

namespace deepmad::catalog {

namespace {

BlockKind basic() { return {BlockType::ResNetBasic, 4, 6, 0, 3}; }
BlockKind bottleneck() { return {BlockType::ResNetBottleneck, 4, 6, 0, 3}; }
BlockKind inverted(int expansion, int kernel, int se_reduction) {
  return {BlockType::MobileNetV2SE, 4, expansion, se_reduction, kernel};
}

// torchvision-style ResNet (v1.5: the stride sits on the 3x3 conv of a
// bottleneck).
NetworkSpec resnet(BlockKind block, std::vector<int> depths, std::vector<int> widths) {
  NetworkSpec net;
  net.input_resolution = 224;
  net.stem = {64, 7, 2, true};
  for (std::size_t i = 0; i < depths.size(); ++i) {
    net.stages.push_back({block, depths[i], widths[i], 3, 1, i > 0});
  }
  net.head_channels = 0;
  net.num_classes = 1000;
  return net;
}

struct InvertedRow {
  int expansion;
  int kernel;
  int width;
  int depth;
  int stride;
};

NetworkSpec inverted_residual_net(const std::vector<InvertedRow>& rows, int se_reduction) {
  NetworkSpec net;
  net.input_resolution = 224;
  net.stem = {32, 3, 2, false};
  for (const auto& r : rows) {
    net.stages.push_back({inverted(r.expansion, r.kernel, se_reduction), r.depth, r.width, r.kernel,
                          1, r.stride == 2});
  }
  net.head_channels = 1280;
  net.num_classes = 1000;
  return net;
}

std::vector<CatalogEntry> build() {
  std::vector<CatalogEntry> out;
  const char* resnet_source = "He et al., Deep Residual Learning, Table 1 (torchvision v1.5 layout)";
  out.push_back({"resnet18", resnet_source, resnet(basic(), {2, 2, 2, 2}, {64, 128, 256, 512}),
                 {11'700'000, 1'800'000'000, 0.01, 0.02, 0.03, 0.01,
                  "ResNet comparison table, ResNet-18 row: 11.7 M params, 1.8 G FLOPs, rho 0.01"}});
  out.push_back({"resnet34", resnet_source, resnet(basic(), {3, 4, 6, 3}, {64, 128, 256, 512}),
                 {21'800'000, 3'600'000'000, 0.02, 0.02, 0.03, 0.01,
                  "ResNet comparison table, ResNet-34 row: 21.8 M params, 3.6 G FLOPs, rho 0.02"}});
  out.push_back({"resnet50", resnet_source,
                 resnet(bottleneck(), {3, 4, 6, 3}, {256, 512, 1024, 2048}),
                 {25'600'000, 4'100'000'000, 0.09, 0.02, 0.03, 0.01,
                  "ResNet comparison table, ResNet-50 row: 25.6 M params, 4.1 G FLOPs, rho 0.09"}});
  out.push_back(
      {"mobilenetv2", "Sandler et al., MobileNetV2, Table 2 (width multiplier 1.0)",
       inverted_residual_net({{1, 3, 16, 1, 1},
                              {6, 3, 24, 2, 2},
                              {6, 3, 32, 3, 2},
                              {6, 3, 64, 4, 2},
                              {6, 3, 96, 3, 1},
                              {6, 3, 160, 3, 2},
                              {6, 3, 320, 1, 1}},
                             0),
       {3'500'000, 320'000'000, 0.9, 0.02, 0.03, 0.1,
        "mobile-setting table, MobileNet-V2 row: 3.5 M params, 320 M FLOPs, rho 0.9"}});
  out.push_back(
      {"efficientnet-b0", "Tan & Le, EfficientNet, Table 1 (B0 baseline)",
       inverted_residual_net({{1, 3, 16, 1, 1},
                              {6, 3, 24, 2, 2},
                              {6, 5, 40, 2, 2},
                              {6, 3, 80, 3, 2},
                              {6, 5, 112, 3, 1},
                              {6, 5, 192, 4, 2},
                              {6, 3, 320, 1, 1}},
                             4),
       {5'300'000, 390'000'000, 0.6, 0.02, 0.03, 0.1,
        "mobile-setting table, EffNet-B0 row: 5.3 M params, 390 M FLOPs, rho 0.6"}});
  return out;
}

double relative_error(std::int64_t got, std::int64_t want) {
  return std::abs(static_cast<double>(got - want)) / static_cast<double>(want);
}

}  // namespace

const std::vector<CatalogEntry>& entries() {
  static const std::vector<CatalogEntry> all = build();
  return all;
}

std::vector<std::string> names() {
  std::vector<std::string> out;
  for (const auto& e : entries()) out.push_back(e.name);
  return out;
}

const CatalogEntry& reference(std::string_view name) {
  for (const auto& e : entries()) {
    if (e.name == name) return e;
  }
  throw std::out_of_range("unknown catalog entry '" + std::string(name) + "'");
}

NetworkSpec load_architecture(const std::string& name_or_path, bool allow_unknown_fields) {
  if (std::filesystem::exists(name_or_path)) {
    return io::load_architecture(name_or_path, {allow_unknown_fields});
  }
  for (const auto& e : entries()) {
    if (e.name == name_or_path) return e.spec;
  }
  throw io::ParseError(io::ParseError::Kind::Io,
                       "'" + name_or_path + "' is neither a file nor a catalog entry");
}

EntryCheck check_entry(const CatalogEntry& entry, const Convention& conv) {
  EntryCheck c;
  c.name = entry.name;
  const MetricReport m = analyze(entry.spec, {}, conv);
  c.rho = m.rho;
  c.params = m.params;
  c.flops = m.flops;
  // Compare rho at the printed precision plus the stated tolerance.
  c.rho_ok = std::abs(c.rho - entry.expected.rho) <= entry.expected.rho_tolerance + 1e-12;
  c.params_ok = relative_error(c.params, entry.expected.params) <= entry.expected.params_tolerance;
  c.flops_ok = relative_error(c.flops, entry.expected.flops) <= entry.expected.flops_tolerance;
  return c;
}

CalibrationReport calibrate() {
  CalibrationReport report;
  // Bit k set flips flag k away from its default, so row 0 is the default.
  for (int bits = 0; bits < 16; ++bits) {
    Convention conv;
    if (bits & 1) conv.cumulative_stage_entropy = !conv.cumulative_stage_entropy;
    if (bits & 2) conv.batch_norm = !conv.batch_norm;
    if (bits & 4) conv.stem_in_entropy = !conv.stem_in_entropy;
    if (bits & 8) conv.shortcuts_in_entropy = !conv.shortcuts_in_entropy;
    CalibrationRow row;
    row.convention = conv;
    row.all_pass = true;
    for (const auto& e : entries()) {
      EntryCheck c = check_entry(e, conv);
      row.all_pass = row.all_pass && c.ok();
      row.score += std::abs(c.rho - e.expected.rho) / e.expected.rho_tolerance +
                   relative_error(c.params, e.expected.params) / e.expected.params_tolerance +
                   relative_error(c.flops, e.expected.flops) / e.expected.flops_tolerance;
      row.entries.push_back(std::move(c));
    }
    if (row.all_pass) ++report.passing;
    report.rows.push_back(std::move(row));
  }
  for (int i = 0; i < static_cast<int>(report.rows.size()); ++i) {
    const auto& row = report.rows[static_cast<std::size_t>(i)];
    if (report.selected < 0) {
      report.selected = i;
      continue;
    }
    const auto& cur = report.rows[static_cast<std::size_t>(report.selected)];
    if (row.all_pass != cur.all_pass) {
      if (row.all_pass) report.selected = i;
    } else if (row.score < cur.score) {
      report.selected = i;
    }
  }
  return report;
}

std::string render_markdown(const CalibrationReport& report) {
  std::ostringstream os;
  char buf[256];
  os << "| # | shortcuts | stem | batch_norm | cumulative | pass | score |";
  for (const auto& e : entries()) os << ' ' << e.name << " rho / params / flops |";
  os << "\n|---|---|---|---|---|---|---|";
  for (std::size_t i = 0; i < entries().size(); ++i) os << "---|";
  os << '\n';
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    const bool sel = static_cast<int>(i) == report.selected;
    std::snprintf(buf, sizeof buf, "| %s%zu | %d | %d | %d | %d | %s | %.3f |", sel ? "*" : "", i,
                  r.convention.shortcuts_in_entropy, r.convention.stem_in_entropy,
                  r.convention.batch_norm, r.convention.cumulative_stage_entropy,
                  r.all_pass ? "yes" : "no", r.score);
    os << buf;
    for (const auto& c : r.entries) {
      std::snprintf(buf, sizeof buf, " %.4f%s / %.3fM%s / %.1fM%s |", c.rho, c.rho_ok ? "" : "!",
                    static_cast<double>(c.params) / 1e6, c.params_ok ? "" : "!",
                    static_cast<double>(c.flops) / 1e6, c.flops_ok ? "" : "!");
      os << buf;
    }
    os << '\n';
  }
  os << "\nSelected row " << report.selected << " (" << report.passing
     << " of 16 combinations pass, marked `*`). `!` marks a value outside its tolerance.\n";
  return os.str();
}

std::uint64_t convention_hash(const Convention& conv) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : describe(conv)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace deepmad::catalog
