#pragma once

// Paired dataset construction: clean image, hair-corrupted image, binary mask.
//
// Two corruption generators are provided. Procedural strands are cubic Bezier
// curves rasterized with a hard (non anti-aliased) disc brush; superimposition
// alpha-blends a supplied binary mask in a hair color. Off-mask pixels of the
// corrupted image are copied from the clean image, never recomputed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hairbench/error.hpp"
#include "hairbench/image.hpp"
#include "hairbench/parallel.hpp"
#include "hairbench/rng.hpp"

namespace hairbench {

using Color = std::array<double, 3>;

enum class Provenance { Procedural, Superimposed, None };

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Procedural: return "procedural";
    case Provenance::Superimposed: return "superimposed";
    case Provenance::None: return "none";
  }
  return "none";
}

inline Provenance parse_provenance(const std::string& s) {
  if (s == "procedural") return Provenance::Procedural;
  if (s == "superimposed") return Provenance::Superimposed;
  if (s == "none") return Provenance::None;
  throw DataError("unknown provenance '" + s + "'");
}

enum class HairPalette { Dark, Gray, Light };

/// Base colors of the three palettes, before per-strand jitter.
inline Color palette_color(HairPalette p) {
  switch (p) {
    case HairPalette::Dark: return {0.12, 0.08, 0.06};
    case HairPalette::Gray: return {0.50, 0.48, 0.46};
    case HairPalette::Light: return {0.82, 0.72, 0.55};
  }
  return {0.0, 0.0, 0.0};
}

inline Color sample_hair_color(Rng& rng, const std::array<double, 3>& palette_weights,
                               double jitter) {
  const double total = palette_weights[0] + palette_weights[1] + palette_weights[2];
  double u = rng.uniform() * total;
  HairPalette p = HairPalette::Light;
  if (u < palette_weights[0]) {
    p = HairPalette::Dark;
  } else if ((u -= palette_weights[0]) < palette_weights[1]) {
    p = HairPalette::Gray;
  }
  Color c = palette_color(p);
  for (auto& v : c) v = std::clamp(v + rng.uniform(-jitter, jitter), 0.0, 1.0);
  return c;
}

struct StrandParams {
  long count_min = 3;
  long count_max = 8;
  double thickness_min = 1.0;  // px
  double thickness_max = 2.5;
  double curvature_min = 0.0;  // control-point offset relative to strand length
  double curvature_max = 0.35;
  std::array<double, 3> palette_weights = {0.6, 0.25, 0.15};  // dark, gray, light
  double color_jitter = 0.04;
  double opacity = 0.9;
  std::uint64_t seed = 0;

  void validate() const {
    if (count_min < 0 || count_max < count_min) throw ConfigError("strand count range is empty");
    if (thickness_min < 1.0 || thickness_max < thickness_min) {
      throw ConfigError("strand thickness range must be non-empty and >= 1 px");
    }
    if (curvature_max < curvature_min) throw ConfigError("strand curvature range is empty");
    if (!(opacity > 0.0 && opacity <= 1.0)) throw ConfigError("opacity must be in (0, 1]");
    for (double w : palette_weights) {
      if (w < 0.0) throw ConfigError("palette weights must be >= 0");
    }
    if (palette_weights[0] + palette_weights[1] + palette_weights[2] <= 0.0) {
      throw ConfigError("palette weights must not all be zero");
    }
  }
};

inline void to_json(nlohmann::json& j, const StrandParams& p) {
  j = nlohmann::json{{"count", {p.count_min, p.count_max}},
                     {"thickness", {p.thickness_min, p.thickness_max}},
                     {"curvature", {p.curvature_min, p.curvature_max}},
                     {"palette_weights", p.palette_weights},
                     {"color_jitter", p.color_jitter},
                     {"opacity", p.opacity}};
}

inline void from_json(const nlohmann::json& j, StrandParams& p) {
  p = StrandParams{};
  auto range = [&](const char* key, auto& lo, auto& hi) {
    if (!j.contains(key)) return;
    const auto& r = j.at(key);
    if (!r.is_array() || r.size() != 2) throw ConfigError(std::string(key) + " must be [min, max]");
    r[0].get_to(lo);
    r[1].get_to(hi);
  };
  range("count", p.count_min, p.count_max);
  range("thickness", p.thickness_min, p.thickness_max);
  range("curvature", p.curvature_min, p.curvature_max);
  if (j.contains("palette_weights")) j.at("palette_weights").get_to(p.palette_weights);
  p.color_jitter = j.value("color_jitter", p.color_jitter);
  p.opacity = j.value("opacity", p.opacity);
}

struct PairedSample {
  Image clean;
  Image corrupted;
  Image mask;  // single channel, values in {0, 1}
  Provenance provenance = Provenance::None;
};

struct Point {
  double x;
  double y;
};

/// Geometry of one rendered strand.
struct Strand {
  std::array<Point, 4> control;
  double thickness;
  Color color;
};

/// Rasterizes a strand into `mask` (1 where covered). Samples are at most a
/// quarter pixel apart and each stamps its containing pixel plus every pixel
/// whose center lies within thickness/2, so the footprint is 8-connected.
inline void rasterize_strand(const Strand& s, Image& mask) {
  const auto& p = s.control;
  double polygon = 0.0;
  for (int i = 0; i < 3; ++i) polygon += std::hypot(p[i + 1].x - p[i].x, p[i + 1].y - p[i].y);
  const std::size_t steps = static_cast<std::size_t>(std::ceil(polygon * 4.0)) + 1;
  const double r = s.thickness / 2.0;
  const long reach = static_cast<long>(std::ceil(r));
  const long w = static_cast<long>(mask.width), h = static_cast<long>(mask.height);
  auto set = [&](long x, long y) {
    if (x >= 0 && y >= 0 && x < w && y < h) {
      mask.at(0, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 1.0;
    }
  };
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(steps);
    const double u = 1.0 - t;
    const double b0 = u * u * u, b1 = 3 * u * u * t, b2 = 3 * u * t * t, b3 = t * t * t;
    const double x = b0 * p[0].x + b1 * p[1].x + b2 * p[2].x + b3 * p[3].x;
    const double y = b0 * p[0].y + b1 * p[1].y + b2 * p[2].y + b3 * p[3].y;
    const long cx = std::lround(x), cy = std::lround(y);
    set(cx, cy);
    for (long dy = -reach; dy <= reach; ++dy) {
      for (long dx = -reach; dx <= reach; ++dx) {
        const double px = static_cast<double>(cx + dx), py = static_cast<double>(cy + dy);
        if ((px - x) * (px - x) + (py - y) * (py - y) <= r * r) set(cx + dx, cy + dy);
      }
    }
  }
}

/// Draws a random strand whose control polygon lies inside the image, so the
/// curve never leaves and re-enters it.
inline Strand sample_strand(Rng& rng, const StrandParams& params, std::size_t width,
                            std::size_t height) {
  const double wmax = static_cast<double>(width - 1), hmax = static_cast<double>(height - 1);
  const double extent = static_cast<double>(std::min(width, height));
  Point a{}, b{};
  for (int attempt = 0; attempt < 64; ++attempt) {
    a = {rng.uniform(0.0, wmax), rng.uniform(0.0, hmax)};
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double len = rng.uniform(0.5, 1.2) * extent;
    b = {std::clamp(a.x + len * std::cos(theta), 0.0, wmax),
         std::clamp(a.y + len * std::sin(theta), 0.0, hmax)};
    if (std::hypot(b.x - a.x, b.y - a.y) >= extent / 3.0) break;
  }
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len = std::hypot(dx, dy);
  const Point normal = len > 0 ? Point{-dy / len, dx / len} : Point{0.0, 0.0};
  auto bend = [&](double frac) {
    const double k = rng.uniform(params.curvature_min, params.curvature_max) *
                     (rng.uniform() < 0.5 ? -1.0 : 1.0) * len;
    return Point{std::clamp(a.x + frac * dx + k * normal.x, 0.0, wmax),
                 std::clamp(a.y + frac * dy + k * normal.y, 0.0, hmax)};
  };
  Strand s;
  s.control[0] = a;
  s.control[1] = bend(1.0 / 3.0);
  s.control[2] = bend(2.0 / 3.0);
  s.control[3] = b;
  s.thickness = rng.uniform(params.thickness_min, params.thickness_max);
  s.color = sample_hair_color(rng, params.palette_weights, params.color_jitter);
  return s;
}

namespace hairsim_detail {

inline void check_clean(const Image& clean) {
  if (clean.channels != 3) throw ContractViolation("clean image must be RGB");
  for (double v : clean.pixels) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractViolation("clean image values must lie in [0,1]");
  }
}

/// corrupted = (1 - opacity) * current + opacity * color, only where layer is set.
inline void blend(Image& corrupted, const Image& layer, const Color& color, double opacity) {
  const std::size_t n = corrupted.plane();
  for (std::size_t i = 0; i < n; ++i) {
    if (layer.pixels[i] == 0.0) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      double& v = corrupted.pixels[c * n + i];
      v = (1.0 - opacity) * v + opacity * color[c];
    }
  }
}

}  // namespace hairsim_detail

inline PairedSample generate_strands(const Image& clean, const StrandParams& params) {
  params.validate();
  hairsim_detail::check_clean(clean);
  if (clean.width < 16 || clean.height < 16) {
    throw ConfigError("generate_strands: image must be at least 16x16");
  }
  Rng rng(params.seed);
  PairedSample out{clean, clean, Image(clean.width, clean.height, 1), Provenance::Procedural};
  const long count = rng.integer(params.count_min, params.count_max);
  for (long k = 0; k < count; ++k) {
    const Strand s = sample_strand(rng, params, clean.width, clean.height);
    Image layer(clean.width, clean.height, 1);
    rasterize_strand(s, layer);
    hairsim_detail::blend(out.corrupted, layer, s.color, params.opacity);
    for (std::size_t i = 0; i < layer.pixels.size(); ++i) {
      if (layer.pixels[i] != 0.0) out.mask.pixels[i] = 1.0;
    }
  }
  if (count == 0) out.provenance = Provenance::None;
  return out;
}

inline PairedSample superimpose_mask(const Image& clean, const Image& hair_mask,
                                     const Color& hair_color, double opacity) {
  hairsim_detail::check_clean(clean);
  if (hair_mask.width != clean.width || hair_mask.height != clean.height || hair_mask.channels != 1) {
    throw ContractViolation("superimpose_mask: mask must be single-channel and " +
                            std::to_string(clean.width) + "x" + std::to_string(clean.height));
  }
  if (!(opacity > 0.0 && opacity <= 1.0)) throw ConfigError("opacity must be in (0, 1]");
  PairedSample out{clean, clean, Image(clean.width, clean.height, 1), Provenance::Superimposed};
  for (std::size_t i = 0; i < hair_mask.pixels.size(); ++i) {
    out.mask.pixels[i] = hair_mask.pixels[i] >= 0.5 ? 1.0 : 0.0;
  }
  hairsim_detail::blend(out.corrupted, out.mask, hair_color, opacity);
  return out;
}

inline PairedSample hairless_sample(const Image& clean) {
  hairsim_detail::check_clean(clean);
  return {clean, clean, Image(clean.width, clean.height, 1), Provenance::None};
}

/// Procedural dermoscopy-like clean image: skin tone with low-frequency shading,
/// fine texture and a pigmented elliptical lesion. Deterministic per seed.
inline Image synthesize_skin(std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  Image img(size, size, 3);
  const double s = static_cast<double>(size);
  const Color skin = {0.80 + rng.uniform(-0.06, 0.06), 0.60 + rng.uniform(-0.06, 0.06),
                      0.50 + rng.uniform(-0.06, 0.06)};
  const Color lesion = {0.45 + rng.uniform(-0.08, 0.08), 0.28 + rng.uniform(-0.06, 0.06),
                        0.20 + rng.uniform(-0.05, 0.05)};
  struct Wave { double fx, fy, phase, amp; };
  std::array<Wave, 3> waves{};
  for (auto& w : waves) {
    w = {rng.uniform(0.5, 2.0) / s, rng.uniform(0.5, 2.0) / s, rng.uniform(0.0, 6.283), rng.uniform(0.01, 0.04)};
  }
  const double cx = s * rng.uniform(0.35, 0.65), cy = s * rng.uniform(0.35, 0.65);
  const double rx = s * rng.uniform(0.15, 0.32), ry = s * rng.uniform(0.15, 0.32);
  const double rot = rng.uniform(0.0, std::numbers::pi);
  struct Blob { double x, y, r, depth; };
  std::vector<Blob> blobs(static_cast<std::size_t>(rng.integer(2, 5)));
  for (auto& b : blobs) {
    b = {cx + rng.uniform(-0.6, 0.6) * rx, cy + rng.uniform(-0.6, 0.6) * ry,
         s * rng.uniform(0.03, 0.08), rng.uniform(0.05, 0.15)};
  }
  // Value noise on a coarse grid, bilinearly interpolated.
  const std::size_t cell = 6;
  const std::size_t grid = size / cell + 2;
  std::vector<double> noise(grid * grid);
  for (auto& v : noise) v = rng.uniform(-1.0, 1.0);
  const double texture = rng.uniform(0.015, 0.035);

  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double fx = static_cast<double>(x), fy = static_cast<double>(y);
      double shade = 0.0;
      for (const auto& w : waves) shade += w.amp * std::cos(2 * std::numbers::pi * (w.fx * fx + w.fy * fy) + w.phase);
      const double gx = fx / cell, gy = fy / cell;
      const std::size_t ix = static_cast<std::size_t>(gx), iy = static_cast<std::size_t>(gy);
      const double tx = gx - static_cast<double>(ix), ty = gy - static_cast<double>(iy);
      const double n = (noise[iy * grid + ix] * (1 - tx) + noise[iy * grid + ix + 1] * tx) * (1 - ty) +
                       (noise[(iy + 1) * grid + ix] * (1 - tx) + noise[(iy + 1) * grid + ix + 1] * tx) * ty;
      const double ux = fx - cx, uy = fy - cy;
      const double ex = (ux * std::cos(rot) + uy * std::sin(rot)) / rx;
      const double ey = (-ux * std::sin(rot) + uy * std::cos(rot)) / ry;
      const double d = std::sqrt(ex * ex + ey * ey);
      const double inside = std::clamp((1.15 - d) / 0.3, 0.0, 1.0);
      const double edge = inside * inside * (3 - 2 * inside);
      double dark = 0.0;
      for (const auto& b : blobs) {
        const double r2 = ((fx - b.x) * (fx - b.x) + (fy - b.y) * (fy - b.y)) / (b.r * b.r);
        dark += b.depth * std::exp(-r2);
      }
      for (std::size_t c = 0; c < 3; ++c) {
        const double base = skin[c] * (1 - edge) + (lesion[c] - dark * edge) * edge;
        img.at(c, y, x) = std::clamp(base + shade + texture * n, 0.0, 1.0);
      }
    }
  }
  return quantized(img);
}

struct ManifestRecord {
  std::string clean_path;
  std::string corrupted_path;
  std::string mask_path;
  Provenance provenance = Provenance::None;
  std::string split;
  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

inline nlohmann::json to_json_record(const ManifestRecord& r) {
  return nlohmann::json{{"clean_path", r.clean_path},
                        {"corrupted_path", r.corrupted_path},
                        {"mask_path", r.mask_path},
                        {"provenance", provenance_name(r.provenance)},
                        {"split", r.split}};
}

/// One JSON object per line, paths relative to the manifest's directory.
inline void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write manifest: " + path.string());
  for (const auto& r : records) os << to_json_record(r).dump() << '\n';
}

inline std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest: " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("clean_path").get<std::string>(), j.at("corrupted_path").get<std::string>(),
                     j.at("mask_path").get<std::string>(),
                     parse_provenance(j.at("provenance").get<std::string>()),
                     j.at("split").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed manifest line in " + path.string() + ": " + e.what());
    }
  }
  return out;
}

inline PairedSample load_sample(const ManifestRecord& r, const std::filesystem::path& base) {
  PairedSample s;
  s.clean = read_png(base / r.clean_path);
  s.corrupted = read_png(base / r.corrupted_path);
  s.mask = read_png(base / r.mask_path, true);
  for (auto& v : s.mask.pixels) v = v >= 0.5 ? 1.0 : 0.0;
  s.provenance = r.provenance;
  if (!s.clean.same_size(s.corrupted) || s.mask.width != s.clean.width ||
      s.mask.height != s.clean.height) {
    throw DataError("sample images differ in size: " + r.clean_path);
  }
  return s;
}

/// How each clean image gets corrupted.
struct Recipe {
  double hairless_fraction = 0.1;
  double superimposed_fraction = 0.0;
  std::filesystem::path mask_dir;  // binary masks for superimposition
  StrandParams strands;
  std::optional<std::size_t> image_size;  // resize clean images to size x size
};

struct DatasetResult {
  std::vector<ManifestRecord> records;
  std::filesystem::path manifest_path;
};

/// Corrupts every PNG in clean_dir and writes clean/, corrupted/, mask/ and
/// manifest.jsonl under out_dir. Generator assignment and the train/test split
/// are seed-determined shuffles; each image draws from its own derived stream.
inline DatasetResult build_dataset(const std::filesystem::path& clean_dir,
                                   const std::filesystem::path& out_dir, const Recipe& recipe,
                                   double train_fraction, std::uint64_t seed,
                                   std::size_t threads = 1) {
  namespace fs = std::filesystem;
  recipe.strands.validate();
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw ConfigError("split must be in [0,1]");
  if (recipe.hairless_fraction < 0 || recipe.superimposed_fraction < 0 ||
      recipe.hairless_fraction + recipe.superimposed_fraction > 1.0) {
    throw ConfigError("recipe fractions must be >= 0 and sum to at most 1");
  }
  if (!fs::is_directory(clean_dir)) throw ConfigError("clean directory does not exist: " + clean_dir.string());
  const auto files = list_png(clean_dir);
  if (files.empty()) throw ConfigError("no PNG images in " + clean_dir.string());
  const std::size_t n = files.size();

  const auto n_none = static_cast<std::size_t>(std::llround(recipe.hairless_fraction * static_cast<double>(n)));
  const auto n_sup = std::min(n - n_none, static_cast<std::size_t>(
                                              std::llround(recipe.superimposed_fraction * static_cast<double>(n))));
  std::vector<fs::path> masks;
  if (n_sup > 0) {
    masks = list_png(recipe.mask_dir);
    if (masks.empty()) throw ConfigError("superimposition requested but no masks in " + recipe.mask_dir.string());
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<Provenance> provenance(n, Provenance::Procedural);
  {
    Rng rng(derive_seed(seed, 1));
    auto o = order;
    rng.shuffle(o);
    for (std::size_t k = 0; k < n_none; ++k) provenance[o[k]] = Provenance::None;
    for (std::size_t k = n_none; k < n_none + n_sup; ++k) provenance[o[k]] = Provenance::Superimposed;
  }
  std::vector<std::string> split(n, "test");
  {
    Rng rng(derive_seed(seed, 2));
    auto o = order;
    rng.shuffle(o);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    for (std::size_t k = 0; k < n_train; ++k) split[o[k]] = "train";
  }

  for (const char* sub : {"clean", "corrupted", "mask"}) fs::create_directories(out_dir / sub);
  std::vector<ManifestRecord> records(n);
  parallel_for(n, threads, [&](std::size_t i) {
    Image clean = read_png(files[i]);
    if (recipe.image_size) clean = resize_bilinear(clean, *recipe.image_size, *recipe.image_size);
    clean = quantized(clean);
    const std::uint64_t sample_seed = derive_seed(seed, 1000 + i);
    PairedSample s;
    switch (provenance[i]) {
      case Provenance::None: s = hairless_sample(clean); break;
      case Provenance::Procedural: {
        StrandParams p = recipe.strands;
        p.seed = sample_seed;
        s = generate_strands(clean, p);
        break;
      }
      case Provenance::Superimposed: {
        Rng rng(sample_seed);
        Image m = read_png(masks[rng.index(masks.size())], true);
        m = resize_nearest(m, clean.width, clean.height);
        const Color color = sample_hair_color(rng, recipe.strands.palette_weights, recipe.strands.color_jitter);
        s = superimpose_mask(clean, m, color, recipe.strands.opacity);
        break;
      }
    }
    const std::string name = files[i].stem().string() + ".png";
    write_png(out_dir / "clean" / name, s.clean);
    write_png(out_dir / "corrupted" / name, s.corrupted);
    write_png(out_dir / "mask" / name, s.mask);
    records[i] = {"clean/" + name, "corrupted/" + name, "mask/" + name, s.provenance, split[i]};
  });

  DatasetResult result{std::move(records), out_dir / "manifest.jsonl"};
  write_manifest(result.manifest_path, result.records);
  return result;
}

}  // namespace hairbench
