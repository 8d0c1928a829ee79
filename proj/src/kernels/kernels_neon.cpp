// NEON variants for aarch64. Same contract as the AVX2 file: bit-identical to
// the scalar reference.

#include <arm_neon.h>

#include <algorithm>

#include "xprobe/kernels.hpp"

namespace xprobe::kernels {
namespace {

void select_neon(const float* keep, const float* fill, const std::uint8_t* mask, float* out,
                 std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const uint32x4_t m = {mask[i] ? 0xFFFFFFFFu : 0u, mask[i + 1] ? 0xFFFFFFFFu : 0u,
                          mask[i + 2] ? 0xFFFFFFFFu : 0u, mask[i + 3] ? 0xFFFFFFFFu : 0u};
    vst1q_f32(out + i, vbslq_f32(m, vld1q_f32(keep + i), vld1q_f32(fill + i)));
  }
  for (; i < n; ++i) out[i] = mask[i] ? keep[i] : fill[i];
}

void mark_diff_neon(const float* a, const float* b, std::uint8_t* mask, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const uint32x4_t eq = vceqq_f32(vld1q_f32(a + i), vld1q_f32(b + i));
    mask[i] |= static_cast<std::uint8_t>(vgetq_lane_u32(eq, 0) == 0);
    mask[i + 1] |= static_cast<std::uint8_t>(vgetq_lane_u32(eq, 1) == 0);
    mask[i + 2] |= static_cast<std::uint8_t>(vgetq_lane_u32(eq, 2) == 0);
    mask[i + 3] |= static_cast<std::uint8_t>(vgetq_lane_u32(eq, 3) == 0);
  }
  for (; i < n; ++i) mask[i] |= static_cast<std::uint8_t>(a[i] != b[i]);
}

void convolve_cols_neon(const float* in, float* out, int height, int width, const float* taps,
                        int radius) {
  for (int y = 0; y < height; ++y) {
    float* dst = out + static_cast<std::size_t>(y) * width;
    const float* first = in + static_cast<std::size_t>(std::clamp(y - radius, 0, height - 1)) * width;
    int x = 0;
    for (; x + 4 <= width; x += 4) {
      float32x4_t acc = vmulq_n_f32(vld1q_f32(first + x), taps[0]);
      for (int k = 1; k <= 2 * radius; ++k) {
        const float* src = in + static_cast<std::size_t>(std::clamp(y + k - radius, 0, height - 1)) * width;
        acc = vaddq_f32(acc, vmulq_n_f32(vld1q_f32(src + x), taps[k]));
      }
      vst1q_f32(dst + x, acc);
    }
    for (; x < width; ++x) {
      float acc = taps[0] * first[x];
      for (int k = 1; k <= 2 * radius; ++k) {
        const int sy = std::clamp(y + k - radius, 0, height - 1);
        acc = acc + taps[k] * in[static_cast<std::size_t>(sy) * width + x];
      }
      dst[x] = acc;
    }
  }
}

}  // namespace

const KernelTable& neon_table() {
  const KernelTable& s = scalar_table();
  static const KernelTable table{Isa::Neon,        "neon",           select_neon,
                                 mark_diff_neon,   s.count_nonzero,  s.convolve_rows,
                                 convolve_cols_neon, s.clamp01};
  return table;
}

}  // namespace xprobe::kernels
