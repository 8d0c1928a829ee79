#include <atomic>
#include <cstdlib>
#include <string>

#include "xprobe/error.hpp"
#include "xprobe/kernels.hpp"

namespace xprobe::kernels {
namespace {

const KernelTable* detect() {
  const KernelTable* best = &scalar_table();
#if defined(XPROBE_HAVE_AVX2)
  if (isa_supported(Isa::Avx2)) best = &avx2_table();
#endif
#if defined(XPROBE_HAVE_NEON)
  best = &neon_table();
#endif
  if (const char* env = std::getenv("XPROBE_SIMD")) {
    const std::string want = env;
    for (const KernelTable* t : available_tables()) {
      if (want == t->name) best = t;
    }
  }
  return best;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{detect()};
  return table;
}

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(XPROBE_HAVE_AVX2)
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("popcnt");
#else
      return false;
#endif
    case Isa::Neon:
#if defined(XPROBE_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

std::vector<const KernelTable*> available_tables() {
  std::vector<const KernelTable*> out{&scalar_table()};
#if defined(XPROBE_HAVE_AVX2)
  if (isa_supported(Isa::Avx2)) out.push_back(&avx2_table());
#endif
#if defined(XPROBE_HAVE_NEON)
  out.push_back(&neon_table());
#endif
  return out;
}

const KernelTable& table_for(Isa isa) {
  for (const KernelTable* t : available_tables()) {
    if (t->isa == isa) return *t;
  }
  throw InvalidArgument("kernels: " + std::string(isa_name(isa)) + " not available on this CPU");
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void force_isa(Isa isa) { current().store(&table_for(isa), std::memory_order_release); }

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
    case Isa::Neon:
      return "neon";
  }
  return "unknown";
}

}  // namespace xprobe::kernels
