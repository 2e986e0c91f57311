#pragma once

// In-memory images are planar float [0,1]; on disk they are 8-bit PNG.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "hairbench/error.hpp"
#include "hairbench/tensor.hpp"

namespace hairbench {

/// Planar (channel-major) image, values nominally in [0,1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c, double fill = 0.0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  std::size_t plane() const { return width * height; }
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels[(c * height + y) * width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
  bool same_size(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

inline double quantize8(double v) {
  return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

/// Snaps every value onto the 8-bit grid, round(v*255)/255.
inline Image quantized(Image img) {
  for (auto& v : img.pixels) v = quantize8(v);
  return img;
}

/// Rec.601 luma of an RGB image; grayscale images are returned unchanged.
inline Image luminance(const Image& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw ContractViolation("luminance: expected 1 or 3 channels");
  Image y(img.width, img.height, 1);
  const std::size_t n = img.plane();
  for (std::size_t i = 0; i < n; ++i) {
    y.pixels[i] = 0.299 * img.pixels[i] + 0.587 * img.pixels[n + i] + 0.114 * img.pixels[2 * n + i];
  }
  return y;
}

inline Image resize_bilinear(const Image& img, std::size_t width, std::size_t height) {
  if (img.width == width && img.height == height) return img;
  Image out(width, height, img.channels);
  const double sx = static_cast<double>(img.width) / static_cast<double>(width);
  const double sy = static_cast<double>(img.height) / static_cast<double>(height);
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                   static_cast<double>(img.height - 1));
      const std::size_t y0 = static_cast<std::size_t>(fy);
      const std::size_t y1 = std::min(y0 + 1, img.height - 1);
      const double ty = fy - static_cast<double>(y0);
      for (std::size_t x = 0; x < width; ++x) {
        const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                     static_cast<double>(img.width - 1));
        const std::size_t x0 = static_cast<std::size_t>(fx);
        const std::size_t x1 = std::min(x0 + 1, img.width - 1);
        const double tx = fx - static_cast<double>(x0);
        const double top = img.at(c, y0, x0) * (1 - tx) + img.at(c, y0, x1) * tx;
        const double bottom = img.at(c, y1, x0) * (1 - tx) + img.at(c, y1, x1) * tx;
        out.at(c, y, x) = top * (1 - ty) + bottom * ty;
      }
    }
  }
  return out;
}

inline Image resize_nearest(const Image& img, std::size_t width, std::size_t height) {
  if (img.width == width && img.height == height) return img;
  Image out(width, height, img.channels);
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      const std::size_t sy = std::min(img.height - 1, y * img.height / height);
      for (std::size_t x = 0; x < width; ++x) {
        out.at(c, y, x) = img.at(c, sy, std::min(img.width - 1, x * img.width / width));
      }
    }
  }
  return out;
}

/// 3x3 per-channel median with edge replication.
inline Image median_filter3(const Image& img) {
  Image out(img.width, img.height, img.channels);
  std::array<double, 9> win{};
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) {
        std::size_t k = 0;
        for (long dy = -1; dy <= 1; ++dy) {
          for (long dx = -1; dx <= 1; ++dx) {
            const long yy = std::clamp<long>(static_cast<long>(y) + dy, 0, static_cast<long>(img.height) - 1);
            const long xx = std::clamp<long>(static_cast<long>(x) + dx, 0, static_cast<long>(img.width) - 1);
            win[k++] = img.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
          }
        }
        std::nth_element(win.begin(), win.begin() + 4, win.end());
        out.at(c, y, x) = win[4];
      }
    }
  }
  return out;
}

/// Stacks equally sized images into a [B,C,H,W] tensor.
template <typename T>
Tensor<T> to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw ContractViolation("to_tensor: empty batch");
  const Image& first = *images.front();
  Tensor<T> t({images.size(), first.channels, first.height, first.width});
  std::size_t k = 0;
  for (const Image* img : images) {
    if (!img->same_size(first)) throw ContractViolation("to_tensor: images differ in size");
    for (double v : img->pixels) t[k++] = static_cast<T>(v);
  }
  return t;
}

template <typename T>
Image from_tensor(const Tensor<T>& t, std::size_t index) {
  require_rank(t, 4, "from_tensor");
  Image img(t.dim(3), t.dim(2), t.dim(1));
  const std::size_t n = img.pixels.size();
  for (std::size_t i = 0; i < n; ++i) img.pixels[i] = static_cast<double>(t[index * n + i]);
  return img;
}

namespace png_detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace png_detail

/// Reads an 8/16-bit PNG as RGB (gray and palette images are expanded; alpha is dropped),
/// or as single-channel when `grayscale` is set.
inline Image read_png(const std::filesystem::path& path, bool grayscale = false) {
  png_detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw DataError("cannot open image: " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw DataError("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng initialization failed");
  }
  Image img;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("corrupt PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (grayscale) {
    if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  } else if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);
  const std::size_t w = png_get_image_width(png, info);
  const std::size_t h = png_get_image_height(png, info);
  const std::size_t ch = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * h);
  rows.resize(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img = Image(w, h, ch);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < ch; ++c) {
        img.at(c, y, x) = buffer[y * stride + x * ch + c] / 255.0;
      }
    }
  }
  return img;
}

/// Writes a 1- or 3-channel image as 8-bit PNG, quantizing round(v*255).
inline void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw ContractViolation("write_png: expected 1 or 3 channels");
  }
  png_detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw DataError("cannot open image for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng initialization failed");
  }
  const std::size_t stride = img.width * img.channels;
  std::vector<png_byte> buffer(stride * img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) {
        buffer[y * stride + x * img.channels + c] =
            static_cast<png_byte>(std::lround(std::clamp(img.at(c, y, x), 0.0, 1.0) * 255.0));
      }
    }
  }
  std::vector<png_bytep> rows(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = buffer.data() + y * stride;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed writing PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
               8, img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Sorted list of *.png files (regular files only) in a directory.
inline std::vector<std::filesystem::path> list_png(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace hairbench
