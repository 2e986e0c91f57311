#pragma once

// Raw 3x3 convolution kernels over single images laid out [C,H,W].
// Padding is always 1; stride is 1 or 2. Products go through Eigen's GEMM,
// which is single-threaded here and therefore has a fixed summation order.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace hairbench::detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

inline constexpr std::size_t kKernel = 3;
inline constexpr std::size_t kTaps = kKernel * kKernel;

inline std::size_t conv_out_extent(std::size_t in, std::size_t stride) {
  return (in + 2 - kKernel) / stride + 1;
}

/// cols[(c*9 + ky*3 + kx), (oy*Wo + ox)] = x[c, oy*s + ky - 1, ox*s + kx - 1] (zero outside).
template <typename T>
void im2col(std::span<const T> x, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t stride, std::span<T> cols) {
  const std::size_t ho = conv_out_extent(height, stride);
  const std::size_t wo = conv_out_extent(width, stride);
  const std::size_t plane = ho * wo;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = x.data() + c * height * width;
    for (std::size_t ky = 0; ky < kKernel; ++ky) {
      for (std::size_t kx = 0; kx < kKernel; ++kx) {
        T* dst = cols.data() + (c * kTaps + ky * kKernel + kx) * plane;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - 1;
          T* row = dst + oy * wo;
          if (iy < 0 || iy >= static_cast<long>(height)) {
            for (std::size_t ox = 0; ox < wo; ++ox) row[ox] = T{0};
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(iy) * width;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - 1;
            row[ox] = (ix < 0 || ix >= static_cast<long>(width)) ? T{0}
                                                                 : srow[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-accumulates columns back into x (x is not cleared).
template <typename T>
void col2im(std::span<const T> cols, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t stride, std::span<T> x) {
  const std::size_t ho = conv_out_extent(height, stride);
  const std::size_t wo = conv_out_extent(width, stride);
  const std::size_t plane = ho * wo;
  for (std::size_t c = 0; c < channels; ++c) {
    T* dst = x.data() + c * height * width;
    for (std::size_t ky = 0; ky < kKernel; ++ky) {
      for (std::size_t kx = 0; kx < kKernel; ++kx) {
        const T* src = cols.data() + (c * kTaps + ky * kKernel + kx) * plane;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - 1;
          if (iy < 0 || iy >= static_cast<long>(height)) continue;
          T* drow = dst + static_cast<std::size_t>(iy) * width;
          const T* row = src + oy * wo;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - 1;
            if (ix < 0 || ix >= static_cast<long>(width)) continue;
            drow[static_cast<std::size_t>(ix)] += row[ox];
          }
        }
      }
    }
  }
}

/// Scratch buffer reused across images of one batch.
template <typename T>
class ColumnBuffer {
 public:
  std::span<T> get(std::size_t n) {
    if (buf_.size() < n) buf_.resize(n);
    return {buf_.data(), n};
  }

 private:
  std::vector<T> buf_;
};

}  // namespace hairbench::detail
