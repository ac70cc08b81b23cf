#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "refertok/budget.hpp"
#include "refertok/rng.hpp"

namespace refertok {
namespace {

ModelDims unit_dims() {
  ModelDims dims;
  dims.name = "unit";
  dims.d = 1;
  dims.d_kv = 1;
  dims.m = 1;
  dims.layers = {1};
  return dims;
}

ModelDims random_dims(DetRng& rng) {
  ModelDims dims;
  dims.name = "rand";
  dims.d = 1 + rng.next_below(64);
  dims.d_kv = 1 + rng.next_below(32);
  dims.m = 1 + rng.next_below(128);
  const std::size_t layer_count = 1 + rng.next_below(4);
  for (std::size_t s = 0; s < layer_count; ++s)
    dims.layers.push_back(1 + rng.next_below(3));
  return dims;
}

std::uint64_t layer_total(const ModelDims& dims) {
  std::uint64_t total = 0;
  for (std::uint64_t k : dims.layers) total += k;
  return total;
}

TEST(BlockFlops, TinyHandCases) {
  EXPECT_EQ(block_flops(1, unit_dims()), 9u);

  ModelDims dims = unit_dims();
  dims.d = 4;
  dims.d_kv = 2;
  dims.m = 8;
  EXPECT_EQ(block_flops(2, dims), 320u);

  EXPECT_EQ(block_flops(0, dims), 0u);
}

TEST(VisionObjectFlops, TinyHandCase) {
  const TokenCounts tc{1, 1, 0, 0};
  EXPECT_EQ(vision_object_flops(tc, unit_dims()), 22u);
}

TEST(ObjectOnlyFlops, TinyHandCase) {
  const TokenCounts tc{1, 0, 0, 0};
  EXPECT_EQ(object_only_flops(tc, unit_dims()), 13u);
}

TEST(BlockFlops, StrictlyIncreasingInEveryDimension) {
  DetRng rng(42);
  for (int it = 0; it < 100; ++it) {
    const ModelDims dims = random_dims(rng);
    const std::uint64_t n = 1 + rng.next_below(100);
    const Flops base = block_flops(n, dims);

    EXPECT_GT(block_flops(n + 1, dims), base);
    ModelDims bigger = dims;
    bigger.d += 1;
    EXPECT_GT(block_flops(n, bigger), base);
    bigger = dims;
    bigger.d_kv += 1;
    EXPECT_GT(block_flops(n, bigger), base);
    bigger = dims;
    bigger.m += 1;
    EXPECT_GT(block_flops(n, bigger), base);
  }
}

TEST(BudgetIdentities, InfusionConstantIsFourLRdSquared) {
  DetRng rng(43);
  for (int it = 0; it < 100; ++it) {
    const ModelDims dims = random_dims(rng);
    const std::uint64_t l_r = 1 + rng.next_below(200);
    const Flops vo = vision_object_flops({l_r, 0, 0, 0}, dims);
    const Flops oo = object_only_flops({l_r, 0, 0, 0}, dims);
    ASSERT_GE(oo, vo);
    EXPECT_EQ(oo - vo, 4 * l_r * dims.d * dims.d);
  }
}

TEST(BudgetIdentities, ObjectOnlyAffineInContextTokens) {
  DetRng rng(44);
  for (int it = 0; it < 100; ++it) {
    const ModelDims dims = random_dims(rng);
    TokenCounts tc;
    tc.l_r = 1 + rng.next_below(100);
    tc.l_zl = rng.next_below(500);
    tc.l_zg = rng.next_below(500);
    const std::uint64_t delta = 1 + rng.next_below(100);
    const Flops base = object_only_flops(tc, dims);

    TokenCounts more_local = tc;
    more_local.l_zl += delta;
    EXPECT_EQ(object_only_flops(more_local, dims) - base,
              2 * delta * dims.d * dims.d);

    TokenCounts more_global = tc;
    more_global.l_zg += delta;
    EXPECT_EQ(object_only_flops(more_global, dims) - base,
              2 * delta * dims.d * dims.d);
  }
}

TEST(BudgetIdentities, VisionObjectSecondDifferenceIsQuadraticTerm) {
  DetRng rng(45);
  for (int it = 0; it < 100; ++it) {
    const ModelDims dims = random_dims(rng);
    const std::uint64_t l_r = rng.next_below(50);
    const std::uint64_t l_z = rng.next_below(1000);
    const std::uint64_t step = 1 + rng.next_below(50);

    const Flops f0 = vision_object_flops({l_r, l_z, 0, 0}, dims);
    const Flops f1 = vision_object_flops({l_r, l_z + step, 0, 0}, dims);
    const Flops f2 = vision_object_flops({l_r, l_z + 2 * step, 0, 0}, dims);
    // The quadratic term 2*n^2*d has second difference 2*(2d)*step^2.
    // Convexity makes f2 + f0 >= 2 f1, so the subtraction stays unsigned.
    EXPECT_EQ((f2 + f0) - 2 * f1,
              layer_total(dims) * 4 * dims.d * step * step);
  }
}

TEST(BudgetOverflow, RejectsOversizedFactorsAndSums) {
  ModelDims dims = unit_dims();
  dims.d = std::uint64_t{1} << 32;  // cap is exclusive
  try {
    block_flops(1, dims);
    FAIL() << "expected Overflow";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Overflow);
  }

  dims = unit_dims();
  dims.d = 4000000000u;  // under the factor cap, but 2nd^2 passes 2^64
  try {
    block_flops(4000000000u, dims);
    FAIL() << "expected Overflow";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Overflow);
  }
}

TEST(ModelDimsParsing, ValidatesAndReports) {
  const nlohmann::json good = {{"name", "t"}, {"d", 8},       {"d_kv", 4},
                               {"m", 16},     {"layers", {1, 2}}};
  const ModelDims dims = parse_model_dims(good, "inline");
  EXPECT_EQ(dims.d, 8u);
  EXPECT_EQ(dims.layers, (std::vector<std::uint64_t>{1, 2}));

  nlohmann::json zero_d = good;
  zero_d["d"] = 0;
  try {
    parse_model_dims(zero_d, "inline");
    FAIL() << "expected InvalidConfig";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }

  nlohmann::json missing = good;
  missing.erase("m");
  try {
    parse_model_dims(missing, "inline");
    FAIL() << "expected FormatError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::FormatError);
  }

  try {
    load_model_dims("/nonexistent/model.json");
    FAIL() << "expected IoError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IoError);
  }

  const std::string path =
      (std::filesystem::temp_directory_path() / "refertok_dims.json").string();
  {
    std::ofstream out(path);
    out << good.dump();
  }
  EXPECT_EQ(load_model_dims(path).m, 16u);
  std::remove(path.c_str());
}

TEST(BudgetReports, RatioAndEchoes) {
  ModelDims dims = unit_dims();
  dims.name = "tiny";
  dims.d = 2;
  dims.d_kv = 2;
  dims.m = 2;
  const TokenCounts tc{1, 1, 0, 0};
  const BudgetReport report = compare_frameworks(tc, dims);
  EXPECT_EQ(report.vision_object, 72u);
  EXPECT_EQ(report.object_only, 48u);
  EXPECT_DOUBLE_EQ(report.ratio, 1.5);
  EXPECT_EQ(report.dims.name, "tiny");
  EXPECT_EQ(report.counts.l_r, 1u);
  EXPECT_EQ(report.frames, 1u);
}

TEST(BudgetReports, CsvShape) {
  ModelDims dims = unit_dims();
  dims.d = 2;
  dims.d_kv = 2;
  dims.m = 2;
  const BudgetReport report = compare_frameworks({1, 1, 0, 0}, dims);

  EXPECT_EQ(budget_csv_header(), "framework,L_R,L_Z,L_ZL,L_ZG,flops,flops_tera,ratio");
  EXPECT_EQ(budget_csv_rows(report),
            "vision_object,1,1,0,0,72,7.2e-11,1.5\n"
            "object_only,1,1,0,0,48,4.8e-11,1.5\n");
}

TEST(BudgetReports, JsonShape) {
  ModelDims dims = unit_dims();
  dims.name = "tiny";
  dims.d = 2;
  dims.d_kv = 2;
  dims.m = 2;
  const nlohmann::json j = budget_to_json(compare_frameworks({1, 1, 0, 0}, dims));
  EXPECT_EQ(j.at("model").at("name"), "tiny");
  EXPECT_EQ(j.at("model").at("d"), 2);
  EXPECT_EQ(j.at("counts").at("L_R"), 1);
  EXPECT_EQ(j.at("counts").at("L_Z"), 1);
  EXPECT_EQ(j.at("vision_object").at("flops"), 72);
  EXPECT_EQ(j.at("object_only").at("flops"), 48);
  EXPECT_DOUBLE_EQ(j.at("ratio").get<double>(), 1.5);
  EXPECT_EQ(j.at("frames"), 1);
}

TEST(ObjectOnlyFlops, FramesMultiplyOnlyTheInfusionAddOn) {
  DetRng rng(46);
  for (int it = 0; it < 50; ++it) {
    const ModelDims dims = random_dims(rng);
    TokenCounts tc;
    tc.l_r = 1 + rng.next_below(50);
    tc.l_zl = rng.next_below(300);
    tc.l_zg = rng.next_below(700);
    const std::uint64_t frames = 2 + rng.next_below(30);

    const Flops one = object_only_flops(tc, dims, 1);
    const Flops many = object_only_flops(tc, dims, frames);
    const std::uint64_t addon =
        2 * (tc.l_r + tc.l_zl) * dims.d * dims.d +
        2 * (tc.l_r + tc.l_zg) * dims.d * dims.d;
    EXPECT_EQ(many - one, (frames - 1) * addon);
  }

  try {
    object_only_flops({1, 0, 0, 0}, unit_dims(), 0);
    FAIL() << "expected InvalidConfig";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
}

}  // namespace
}  // namespace refertok
