#pragma once

// Data-parallel inner loops used by the imaging code.
//
// Every kernel has a scalar reference implementation; vector variants must
// produce bit-identical output (the library is built with fp contraction
// disabled and the vector code performs the same operations in the same
// order). The active table is chosen once at startup from the CPU features,
// and can be overridden with XPROBE_SIMD=scalar|avx2|neon or force_isa().

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace xprobe::kernels {

enum class Isa { Scalar, Avx2, Neon };

struct KernelTable {
  Isa isa;
  const char* name;

  // out[i] = mask[i] ? keep[i] : fill[i]
  void (*select)(const float* keep, const float* fill, const std::uint8_t* mask, float* out,
                 std::size_t n);

  // mask[i] |= (a[i] != b[i])
  void (*mark_diff)(const float* a, const float* b, std::uint8_t* mask, std::size_t n);

  // Number of non-zero bytes.
  std::size_t (*count_nonzero)(const std::uint8_t* data, std::size_t n);

  // Horizontal / vertical 1-D convolution with 2*radius+1 taps and
  // clamp-to-edge borders, on a single height x width plane.
  void (*convolve_rows)(const float* in, float* out, int height, int width, const float* taps,
                        int radius);
  void (*convolve_cols)(const float* in, float* out, int height, int width, const float* taps,
                        int radius);

  void (*clamp01)(float* data, std::size_t n);
};

const KernelTable& scalar_table();
#if defined(XPROBE_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(XPROBE_HAVE_NEON)
const KernelTable& neon_table();
#endif

bool isa_supported(Isa isa);
// Tables usable on this machine, scalar first.
std::vector<const KernelTable*> available_tables();
const KernelTable& table_for(Isa isa);

// The table the library dispatches through.
const KernelTable& active();
void force_isa(Isa isa);
std::string_view isa_name(Isa isa);

}  // namespace xprobe::kernels
