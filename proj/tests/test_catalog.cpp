#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "deepmad/catalog.hpp"
#include "deepmad/io.hpp"

using namespace deepmad;

namespace {

const std::filesystem::path kData = std::filesystem::path(DEEPMAD_SOURCE_DIR) / "data";

}  // namespace

TEST(Catalog, ReferenceValues) {
  struct Row {
    const char* name;
    std::int64_t params;
    std::int64_t flops;
    double rho;
  };
  const Row rows[] = {{"resnet18", 11'700'000, 1'800'000'000, 0.01},
                      {"resnet34", 21'800'000, 3'600'000'000, 0.02},
                      {"resnet50", 25'600'000, 4'100'000'000, 0.09},
                      {"mobilenetv2", 3'500'000, 320'000'000, 0.9},
                      {"efficientnet-b0", 5'300'000, 390'000'000, 0.6}};
  ASSERT_EQ(catalog::entries().size(), 5u);
  for (const auto& row : rows) {
    const auto& e = catalog::reference(row.name);
    EXPECT_EQ(e.expected.params, row.params) << row.name;
    EXPECT_EQ(e.expected.flops, row.flops) << row.name;
    EXPECT_EQ(e.expected.rho, row.rho) << row.name;
    EXPECT_FALSE(e.expected.citation.empty());
    EXPECT_FALSE(e.source.empty());
  }
}

TEST(Catalog, EveryEntryPassesUnderDefaults) {
  for (const auto& e : catalog::entries()) {
    const auto c = catalog::check_entry(e, Convention{});
    EXPECT_TRUE(c.ok()) << e.name << " rho " << c.rho << " params " << c.params << " flops "
                        << c.flops;
    EXPECT_LE(std::abs(c.rho - e.expected.rho), e.expected.rho_tolerance);
  }
}

TEST(Catalog, UnknownNameThrows) {
  EXPECT_THROW(catalog::reference("vgg16"), std::out_of_range);
  EXPECT_THROW(catalog::load_architecture("no-such-net"), std::exception);
}

TEST(Catalog, NamesInOrder) {
  EXPECT_EQ(catalog::names(), (std::vector<std::string>{"resnet18", "resnet34", "resnet50",
                                                        "mobilenetv2", "efficientnet-b0"}));
}

TEST(Catalog, ShippedFilesMatchBuiltIns) {
  for (const auto& e : catalog::entries()) {
    const auto path = kData / "catalog" / (e.name + ".json");
    ASSERT_TRUE(std::filesystem::exists(path)) << path;
    EXPECT_EQ(io::load_architecture(path), e.spec) << e.name;
    EXPECT_EQ(io::read_file(path), io::serialize(e.spec, e.name)) << e.name;
  }
}

TEST(Catalog, LoadByNameOrPath) {
  EXPECT_EQ(catalog::load_architecture("resnet34"), catalog::reference("resnet34").spec);
  const auto path = kData / "catalog" / "mobilenetv2.json";
  EXPECT_EQ(catalog::load_architecture(path.string()), catalog::reference("mobilenetv2").spec);
}

TEST(Calibration, FourRowsPassAndDefaultsAreSelected) {
  const auto report = catalog::calibrate();
  ASSERT_EQ(report.rows.size(), 16u);
  EXPECT_TRUE(report.ok());
  EXPECT_EQ(report.passing, 4);
  ASSERT_EQ(report.selected, 0);
  EXPECT_EQ(report.rows[0].convention, Convention{});
  EXPECT_TRUE(report.rows[0].all_pass);
  for (const auto& row : report.rows) {
    if (!row.all_pass) continue;
    EXPECT_GE(row.score, report.rows[0].score);
    // Every passing row leaves shortcuts off and batch norm on.
    EXPECT_FALSE(row.convention.shortcuts_in_entropy);
    EXPECT_TRUE(row.convention.batch_norm);
  }
}

TEST(Calibration, BatchNormNeverMovesRho) {
  for (const auto& e : catalog::entries()) {
    Convention off;
    off.batch_norm = false;
    EXPECT_EQ(effectiveness(e.spec, off), effectiveness(e.spec, Convention{})) << e.name;
  }
}

TEST(Calibration, MarkdownListsEveryRow) {
  const auto md = catalog::render_markdown(catalog::calibrate());
  std::size_t rows = 0;
  for (std::size_t at = md.find("\n| "); at != std::string::npos; at = md.find("\n| ", at + 1)) {
    ++rows;
  }
  EXPECT_GE(rows, 16u);
}

TEST(Calibration, ConventionHashIsStable) {
  EXPECT_EQ(catalog::convention_hash(Convention{}), 0x1b4792d57f0d8259ull);
  Convention c;
  c.stem_in_entropy = false;
  EXPECT_NE(catalog::convention_hash(c), catalog::convention_hash(Convention{}));
}
