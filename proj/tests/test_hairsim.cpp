#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "test_util.hpp"

using namespace hairbench;
using namespace hbtest;
namespace fs = std::filesystem;

namespace {

double coverage(const Image& mask) {
  double s = 0.0;
  for (double v : mask.pixels) s += v;
  return s / static_cast<double>(mask.pixels.size());
}

// 8-connected components of a single-channel mask.
std::size_t components(const Image& mask) {
  const long w = static_cast<long>(mask.width), h = static_cast<long>(mask.height);
  std::vector<int> seen(mask.pixels.size(), 0);
  std::size_t count = 0;
  for (long start = 0; start < w * h; ++start) {
    if (mask.pixels[static_cast<std::size_t>(start)] == 0.0 || seen[static_cast<std::size_t>(start)]) continue;
    ++count;
    std::vector<long> stack = {start};
    seen[static_cast<std::size_t>(start)] = 1;
    while (!stack.empty()) {
      const long k = stack.back();
      stack.pop_back();
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const long y = k / w + dy, x = k % w + dx;
          if (x < 0 || y < 0 || x >= w || y >= h) continue;
          const auto n = static_cast<std::size_t>(y * w + x);
          if (mask.pixels[n] != 0.0 && !seen[n]) {
            seen[n] = 1;
            stack.push_back(y * w + x);
          }
        }
    }
  }
  return count;
}

void expect_mask_consistent(const PairedSample& s) {
  const std::size_t n = s.clean.plane();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < n; ++i) {
      if (s.mask.pixels[i] == 0.0) ASSERT_EQ(s.corrupted.pixels[c * n + i], s.clean.pixels[c * n + i]);
    }
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path clean_corpus(const std::string& name, std::size_t count, std::size_t size = 32) {
  const auto dir = scratch_dir(name);
  for (std::size_t i = 0; i < count; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%03zu.png", i);
    write_png(dir / buf, synthesize_skin(size, 500 + i));
  }
  return dir;
}

}  // namespace

TEST(Hairsim, DefaultCoverageSweep) {
  const Image clean = synthesize_skin(64, 1);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    StrandParams p;
    p.seed = seed;
    const double cov = coverage(generate_strands(clean, p).mask);
    EXPECT_GE(cov, 0.01) << "seed " << seed;
    EXPECT_LE(cov, 0.30) << "seed " << seed;
  }
}

TEST(Hairsim, MaskConsistencyAndBinaryMask) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    StrandParams p;
    p.seed = seed;
    const auto s = generate_strands(synthesize_skin(48, seed), p);
    EXPECT_EQ(s.provenance, Provenance::Procedural);
    for (double m : s.mask.pixels) ASSERT_TRUE(m == 0.0 || m == 1.0);
    expect_mask_consistent(s);
  }
}

TEST(Hairsim, EachStrandIsOneComponent) {
  Rng rng(8);
  const StrandParams p;
  for (int k = 0; k < 200; ++k) {
    const Strand s = sample_strand(rng, p, 64, 48);
    Image layer(64, 48, 1);
    rasterize_strand(s, layer);
    ASSERT_EQ(components(layer), 1u) << "strand " << k;
  }
}

TEST(Hairsim, ZeroCountGivesHairlessSample) {
  StrandParams p;
  p.count_min = p.count_max = 0;
  const Image clean = synthesize_skin(32, 3);
  const auto s = generate_strands(clean, p);
  EXPECT_EQ(s.provenance, Provenance::None);
  EXPECT_EQ(s.corrupted, clean);
  EXPECT_EQ(coverage(s.mask), 0.0);
}

TEST(Hairsim, FullOpacityPaintsExactStrandColor) {
  StrandParams p;
  p.count_min = p.count_max = 1;
  p.curvature_max = 0.0;
  p.color_jitter = 0.0;
  p.opacity = 1.0;
  p.seed = 17;
  const auto s = generate_strands(synthesize_skin(32, 4), p);
  const std::size_t n = s.clean.plane();
  std::vector<Color> palettes = {palette_color(HairPalette::Dark), palette_color(HairPalette::Gray),
                                 palette_color(HairPalette::Light)};
  Color seen{};
  bool first = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (s.mask.pixels[i] == 0.0) continue;
    const Color c = {s.corrupted.pixels[i], s.corrupted.pixels[n + i], s.corrupted.pixels[2 * n + i]};
    if (first) seen = c;
    first = false;
    ASSERT_EQ(c, seen);
  }
  ASSERT_FALSE(first);
  EXPECT_NE(std::find(palettes.begin(), palettes.end(), seen), palettes.end());
}

TEST(Hairsim, RejectsSmallImagesAndBadParams) {
  EXPECT_THROW(generate_strands(Image(15, 32, 3), StrandParams{}), ConfigError);
  StrandParams p;
  p.thickness_min = 0.5;
  EXPECT_THROW(generate_strands(Image(32, 32, 3), p), ConfigError);
  p = StrandParams{};
  p.opacity = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = StrandParams{};
  p.count_min = 5;
  p.count_max = 4;
  EXPECT_THROW(p.validate(), ConfigError);
  EXPECT_THROW(generate_strands(Image(32, 32, 3, 1.5), StrandParams{}), ContractViolation);
}

TEST(Hairsim, SuperimposeArithmetic) {
  const Image clean = constant_image(8, 8, 0.2 * 255.0);
  Image checker(8, 8, 1);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) checker.at(0, y, x) = (x + y) % 2 ? 1.0 : 0.0;
  const auto s = superimpose_mask(clean, checker, {0.8, 0.8, 0.8}, 0.5);
  EXPECT_EQ(s.provenance, Provenance::Superimposed);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x)
        EXPECT_NEAR(s.corrupted.at(c, y, x), (x + y) % 2 ? 0.5 : 0.2, 1e-15);
  expect_mask_consistent(s);

  EXPECT_EQ(superimpose_mask(clean, Image(8, 8, 1), {0.8, 0.8, 0.8}, 0.5).corrupted, clean);
  const auto full = superimpose_mask(clean, Image(8, 8, 1, 1.0), {0.3, 0.6, 0.9}, 1.0);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(full.corrupted.pixels[128 + i], 0.9);
  EXPECT_THROW(superimpose_mask(clean, Image(8, 7, 1), {0, 0, 0}, 0.5), ContractViolation);
}

TEST(Hairsim, PngRoundTripIsExactOnQuantizedSamples) {
  StrandParams p;
  p.seed = 4;
  const auto s = generate_strands(synthesize_skin(40, 2), p);
  const auto dir = scratch_dir("roundtrip");
  write_png(dir / "c.png", s.corrupted);
  write_png(dir / "m.png", s.mask);
  EXPECT_EQ(read_png(dir / "c.png"), quantized(s.corrupted));
  EXPECT_EQ(read_png(dir / "m.png", true), s.mask);
}

TEST(Hairsim, DatasetSplitCountsAndDeterminism) {
  const auto clean = clean_corpus("ds_clean", 10);
  const auto a = scratch_dir("ds_a"), b = scratch_dir("ds_b"), c = scratch_dir("ds_c");
  const Recipe recipe;
  const auto ra = build_dataset(clean, a, recipe, 0.7, 7);
  build_dataset(clean, b, recipe, 0.7, 7, 3);
  build_dataset(clean, c, recipe, 0.7, 8);
  std::map<std::string, int> splits;
  for (const auto& r : ra.records) ++splits[r.split];
  EXPECT_EQ(splits["train"], 7);
  EXPECT_EQ(splits["test"], 3);
  EXPECT_EQ(slurp(a / "manifest.jsonl"), slurp(b / "manifest.jsonl"));
  EXPECT_NE(slurp(a / "manifest.jsonl"), slurp(c / "manifest.jsonl"));
  for (const auto& r : ra.records) EXPECT_EQ(slurp(a / r.corrupted_path), slurp(b / r.corrupted_path));
  EXPECT_EQ(read_manifest(a / "manifest.jsonl"), ra.records);
}

TEST(Hairsim, DatasetHairlessFractionAndConsistencyOnDisk) {
  const auto clean = clean_corpus("ds100_clean", 100, 16);
  const auto out = scratch_dir("ds100");
  const auto res = build_dataset(clean, out, Recipe{}, 0.7, 1, 2);
  int none = 0;
  for (const auto& r : res.records) {
    const auto s = load_sample(r, out);
    if (r.provenance == Provenance::None) {
      ++none;
      EXPECT_EQ(s.corrupted, s.clean);
      EXPECT_EQ(coverage(s.mask), 0.0);
    }
    expect_mask_consistent(s);
  }
  EXPECT_EQ(none, 10);
}

TEST(Hairsim, DatasetWithSuperimposedMasks) {
  const auto clean = clean_corpus("dssup_clean", 10);
  const auto masks = scratch_dir("dssup_masks");
  Image m(16, 16, 1);
  for (std::size_t y = 0; y < 16; ++y) m.at(0, y, 8) = 1.0;
  write_png(masks / "line.png", m);
  Recipe recipe;
  recipe.superimposed_fraction = 0.3;
  recipe.mask_dir = masks;
  const auto out = scratch_dir("dssup");
  const auto res = build_dataset(clean, out, recipe, 0.5, 3);
  int sup = 0;
  for (const auto& r : res.records) {
    if (r.provenance != Provenance::Superimposed) continue;
    ++sup;
    const auto s = load_sample(r, out);
    EXPECT_EQ(coverage(s.mask), 2.0 / 32.0);
    expect_mask_consistent(s);
  }
  EXPECT_EQ(sup, 3);
}

TEST(Hairsim, DatasetErrors) {
  const auto empty = scratch_dir("empty_clean");
  EXPECT_THROW(build_dataset(empty, scratch_dir("empty_out"), Recipe{}, 0.7, 1), ConfigError);
  EXPECT_THROW(build_dataset(empty / "missing", scratch_dir("empty_out"), Recipe{}, 0.7, 1), ConfigError);
  Recipe r;
  r.hairless_fraction = 0.8;
  r.superimposed_fraction = 0.5;
  EXPECT_THROW(build_dataset(clean_corpus("err_clean", 2), scratch_dir("err_out"), r, 0.7, 1), ConfigError);
  const auto bad = scratch_dir("bad_manifest");
  std::ofstream(bad / "manifest.jsonl") << "{\"clean_path\": 3}\n";
  EXPECT_THROW(read_manifest(bad / "manifest.jsonl"), DataError);
}

TEST(Hairsim, StrandParamsJson) {
  const auto p = nlohmann::json::parse(R"({"count": [1, 2], "opacity": 0.5})").get<StrandParams>();
  EXPECT_EQ(p.count_min, 1);
  EXPECT_EQ(p.count_max, 2);
  EXPECT_EQ(p.opacity, 0.5);
  EXPECT_EQ(p.thickness_max, StrandParams{}.thickness_max);
  EXPECT_THROW(nlohmann::json::parse(R"({"count": [1]})").get<StrandParams>(), ConfigError);
}
