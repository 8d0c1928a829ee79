// AVX2 variants of the imaging kernels. This translation unit is the only one
// compiled with -mavx2; nothing here may be called before dispatch has checked
// the CPU. Operation order matches kernels_scalar.cpp exactly so the outputs
// are bit-identical.

#include <immintrin.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>

#include "xprobe/kernels.hpp"

namespace xprobe::kernels {
namespace {

// Byte i of entry m is bit i of m, as 0 or 1.
constexpr std::array<std::uint64_t, 256> make_spread_table() {
  std::array<std::uint64_t, 256> table{};
  for (unsigned m = 0; m < 256; ++m) {
    std::uint64_t v = 0;
    for (unsigned j = 0; j < 8; ++j) {
      if ((m >> j) & 1U) v |= std::uint64_t{1} << (8 * j);
    }
    table[m] = v;
  }
  return table;
}

constexpr auto kSpread = make_spread_table();

inline __m256 mask_from_bytes(const std::uint8_t* mask) {
  std::uint64_t raw;
  std::memcpy(&raw, mask, sizeof(raw));
  const __m256i wide = _mm256_cvtepu8_epi32(_mm_cvtsi64_si128(static_cast<long long>(raw)));
  return _mm256_castsi256_ps(_mm256_cmpgt_epi32(wide, _mm256_setzero_si256()));
}

void select_avx2(const float* keep, const float* fill, const std::uint8_t* mask, float* out,
                 std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 m = mask_from_bytes(mask + i);
    const __m256 k = _mm256_loadu_ps(keep + i);
    const __m256 f = _mm256_loadu_ps(fill + i);
    _mm256_storeu_ps(out + i, _mm256_blendv_ps(f, k, m));
  }
  for (; i < n; ++i) out[i] = mask[i] ? keep[i] : fill[i];
}

void mark_diff_avx2(const float* a, const float* b, std::uint8_t* mask, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 neq = _mm256_cmp_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), _CMP_NEQ_UQ);
    const unsigned bits = static_cast<unsigned>(_mm256_movemask_ps(neq));
    std::uint64_t cur;
    std::memcpy(&cur, mask + i, sizeof(cur));
    cur |= kSpread[bits];
    std::memcpy(mask + i, &cur, sizeof(cur));
  }
  for (; i < n; ++i) mask[i] |= static_cast<std::uint8_t>(a[i] != b[i]);
}

std::size_t count_nonzero_avx2(const std::uint8_t* data, std::size_t n) {
  std::size_t count = 0;
  std::size_t i = 0;
  const __m256i zero = _mm256_setzero_si256();
  for (; i + 32 <= n; i += 32) {
    const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(data + i));
    const unsigned zeros = static_cast<unsigned>(_mm256_movemask_epi8(_mm256_cmpeq_epi8(v, zero)));
    count += 32 - static_cast<std::size_t>(std::popcount(zeros));
  }
  for (; i < n; ++i) count += data[i] != 0;
  return count;
}

inline float row_tap_scalar(const float* row, int x, int width, const float* taps, int radius) {
  float acc = taps[0] * row[std::clamp(x - radius, 0, width - 1)];
  for (int k = 1; k <= 2 * radius; ++k) {
    acc = acc + taps[k] * row[std::clamp(x + k - radius, 0, width - 1)];
  }
  return acc;
}

void convolve_rows_avx2(const float* in, float* out, int height, int width, const float* taps,
                        int radius) {
  // Columns whose whole tap window lies inside the row.
  const int lo = radius;
  const int hi = width - radius;  // exclusive
  for (int y = 0; y < height; ++y) {
    const float* row = in + static_cast<std::size_t>(y) * width;
    float* dst = out + static_cast<std::size_t>(y) * width;
    int x = 0;
    for (; x < std::min(lo, width); ++x) dst[x] = row_tap_scalar(row, x, width, taps, radius);
    for (; x + 8 <= hi; x += 8) {
      const float* base = row + (x - radius);
      __m256 acc = _mm256_mul_ps(_mm256_set1_ps(taps[0]), _mm256_loadu_ps(base));
      for (int k = 1; k <= 2 * radius; ++k) {
        acc = _mm256_add_ps(acc, _mm256_mul_ps(_mm256_set1_ps(taps[k]), _mm256_loadu_ps(base + k)));
      }
      _mm256_storeu_ps(dst + x, acc);
    }
    for (; x < width; ++x) dst[x] = row_tap_scalar(row, x, width, taps, radius);
  }
}

void convolve_cols_avx2(const float* in, float* out, int height, int width, const float* taps,
                        int radius) {
  for (int y = 0; y < height; ++y) {
    float* dst = out + static_cast<std::size_t>(y) * width;
    const float* first = in + static_cast<std::size_t>(std::clamp(y - radius, 0, height - 1)) * width;
    int x = 0;
    for (; x + 8 <= width; x += 8) {
      __m256 acc = _mm256_mul_ps(_mm256_set1_ps(taps[0]), _mm256_loadu_ps(first + x));
      for (int k = 1; k <= 2 * radius; ++k) {
        const float* src = in + static_cast<std::size_t>(std::clamp(y + k - radius, 0, height - 1)) * width;
        acc = _mm256_add_ps(acc, _mm256_mul_ps(_mm256_set1_ps(taps[k]), _mm256_loadu_ps(src + x)));
      }
      _mm256_storeu_ps(dst + x, acc);
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

void clamp01_avx2(float* data, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  const __m256 one = _mm256_set1_ps(1.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    // Operand order mirrors std::min(std::max(v, 0), 1) for finite inputs.
    const __m256 v = _mm256_loadu_ps(data + i);
    _mm256_storeu_ps(data + i, _mm256_min_ps(_mm256_max_ps(v, zero), one));
  }
  for (; i < n; ++i) data[i] = std::min(std::max(data[i], 0.0f), 1.0f);
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{Isa::Avx2,          "avx2",
                                 select_avx2,        mark_diff_avx2,
                                 count_nonzero_avx2, convolve_rows_avx2,
                                 convolve_cols_avx2, clamp01_avx2};
  return table;
}

}  // namespace xprobe::kernels
