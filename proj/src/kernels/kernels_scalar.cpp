#include <algorithm>

#include "xprobe/kernels.hpp"

namespace xprobe::kernels {
namespace {

void select_scalar(const float* keep, const float* fill, const std::uint8_t* mask, float* out,
                   std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = mask[i] ? keep[i] : fill[i];
}

void mark_diff_scalar(const float* a, const float* b, std::uint8_t* mask, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) mask[i] |= static_cast<std::uint8_t>(a[i] != b[i]);
}

std::size_t count_nonzero_scalar(const std::uint8_t* data, std::size_t n) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) count += data[i] != 0;
  return count;
}

void convolve_rows_scalar(const float* in, float* out, int height, int width, const float* taps,
                          int radius) {
  for (int y = 0; y < height; ++y) {
    const float* row = in + static_cast<std::size_t>(y) * width;
    float* dst = out + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      float acc = taps[0] * row[std::clamp(x - radius, 0, width - 1)];
      for (int k = 1; k <= 2 * radius; ++k) {
        acc = acc + taps[k] * row[std::clamp(x + k - radius, 0, width - 1)];
      }
      dst[x] = acc;
    }
  }
}

void convolve_cols_scalar(const float* in, float* out, int height, int width, const float* taps,
                          int radius) {
  for (int y = 0; y < height; ++y) {
    float* dst = out + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      float acc = taps[0] * in[static_cast<std::size_t>(std::clamp(y - radius, 0, height - 1)) * width + x];
      for (int k = 1; k <= 2 * radius; ++k) {
        const int sy = std::clamp(y + k - radius, 0, height - 1);
        acc = acc + taps[k] * in[static_cast<std::size_t>(sy) * width + x];
      }
      dst[x] = acc;
    }
  }
}

void clamp01_scalar(float* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) data[i] = std::min(std::max(data[i], 0.0f), 1.0f);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::Scalar,          "scalar",
                                 select_scalar,        mark_diff_scalar,
                                 count_nonzero_scalar, convolve_rows_scalar,
                                 convolve_cols_scalar, clamp01_scalar};
  return table;
}

}  // namespace xprobe::kernels
