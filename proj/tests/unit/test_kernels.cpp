#include <doctest.h>

#include <cstring>
#include <random>

#include "xprobe/imaging.hpp"
#include "xprobe/kernels.hpp"

using namespace xprobe;
namespace k = xprobe::kernels;

namespace {

std::vector<float> random_floats(std::mt19937& rng, std::size_t n) {
  std::uniform_real_distribution<float> u(-0.5f, 1.5f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<std::uint8_t> random_mask(std::mt19937& rng, std::size_t n) {
  std::vector<std::uint8_t> m(n);
  for (auto& b : m) b = static_cast<std::uint8_t>(rng() % 3 == 0 ? 0 : rng() % 4);
  return m;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

std::vector<float> gaussian_taps(int radius) {
  std::vector<float> t(2 * static_cast<std::size_t>(radius) + 1);
  float s = 0;
  for (int i = -radius; i <= radius; ++i) s += t[static_cast<std::size_t>(i + radius)] = std::exp(-0.1f * i * i);
  for (auto& x : t) x /= s;
  return t;
}

}  // namespace

TEST_CASE("scalar table is always available and first") {
  const auto tables = k::available_tables();
  REQUIRE_FALSE(tables.empty());
  CHECK(tables.front()->isa == k::Isa::Scalar);
  CHECK(k::isa_supported(k::Isa::Scalar));
}

TEST_CASE("vector kernels are bit-identical to the scalar reference") {
  const auto& ref = k::scalar_table();
  std::mt19937 rng(42);
  for (const k::KernelTable* t : k::available_tables()) {
    CAPTURE(t->name);
    for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 31u, 32u, 33u, 100u, 1027u}) {
      CAPTURE(n);
      const auto a = random_floats(rng, n);
      auto b = random_floats(rng, n);
      for (std::size_t i = 0; i < n; i += 3) b[i] = a[i];  // some equal lanes
      const auto m = random_mask(rng, n);

      std::vector<float> o1(n), o2(n);
      ref.select(a.data(), b.data(), m.data(), o1.data(), n);
      t->select(a.data(), b.data(), m.data(), o2.data(), n);
      CHECK(same_bits(o1, o2));

      std::vector<std::uint8_t> d1 = random_mask(rng, n), d2 = d1;
      for (auto& x : d1) x = x ? 1 : 0;
      d2 = d1;
      ref.mark_diff(a.data(), b.data(), d1.data(), n);
      t->mark_diff(a.data(), b.data(), d2.data(), n);
      CHECK(d1 == d2);

      CHECK(ref.count_nonzero(m.data(), n) == t->count_nonzero(m.data(), n));

      auto c1 = a, c2 = a;
      ref.clamp01(c1.data(), n);
      t->clamp01(c2.data(), n);
      CHECK(same_bits(c1, c2));
    }
  }
}

TEST_CASE("vector convolutions are bit-identical to the scalar reference") {
  const auto& ref = k::scalar_table();
  std::mt19937 rng(7);
  for (const k::KernelTable* t : k::available_tables()) {
    CAPTURE(t->name);
    for (const auto& [h, w] : {std::pair{1, 1}, std::pair{3, 5}, std::pair{8, 8}, std::pair{17, 33}, std::pair{40, 9}, std::pair{64, 70}}) {
      for (int radius : {1, 2, 4, 12, 30}) {
        CAPTURE(h);
        CAPTURE(w);
        CAPTURE(radius);
        const auto in = random_floats(rng, static_cast<std::size_t>(h * w));
        const auto taps = gaussian_taps(radius);
        std::vector<float> r1(in.size()), r2(in.size());
        ref.convolve_rows(in.data(), r1.data(), h, w, taps.data(), radius);
        t->convolve_rows(in.data(), r2.data(), h, w, taps.data(), radius);
        CHECK(same_bits(r1, r2));
        ref.convolve_cols(in.data(), r1.data(), h, w, taps.data(), radius);
        t->convolve_cols(in.data(), r2.data(), h, w, taps.data(), radius);
        CHECK(same_bits(r1, r2));
      }
    }
  }
}

TEST_CASE("scalar convolution matches a direct clamp-to-edge sum") {
  const int h = 4, w = 6, radius = 2;
  std::mt19937 rng(1);
  const auto in = random_floats(rng, h * w);
  const auto taps = gaussian_taps(radius);
  std::vector<float> out(in.size());
  k::scalar_table().convolve_rows(in.data(), out.data(), h, w, taps.data(), radius);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int d = -radius; d <= radius; ++d) {
        const int xx = std::clamp(x + d, 0, w - 1);
        s += static_cast<double>(taps[static_cast<std::size_t>(d + radius)]) * in[static_cast<std::size_t>(y * w + xx)];
      }
      CHECK(out[static_cast<std::size_t>(y * w + x)] == doctest::Approx(s).epsilon(1e-6));
    }
  }
}

TEST_CASE("blur and compose agree across forced ISAs") {
  std::mt19937 rng(3);
  ImageTensor img(37, 29, 3);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  for (auto& v : img.mutable_values()) v = u(rng);
  const GridSpec grid = make_grid(37, 29, 4, 3);
  const PatchSet set = PatchSet::of({0, 2, 5, 11}, grid);
  const k::Isa original = k::active().isa;

  k::force_isa(k::Isa::Scalar);
  const ImageTensor blur_ref = gaussian_blur(img, 2.5);
  const ImageTensor comp_ref = compose_masked(img, blur_ref, set);
  for (const k::KernelTable* t : k::available_tables()) {
    CAPTURE(t->name);
    k::force_isa(t->isa);
    CHECK(k::active().isa == t->isa);
    const ImageTensor b = gaussian_blur(img, 2.5);
    CHECK(std::memcmp(b.values().data(), blur_ref.values().data(), b.size() * sizeof(float)) == 0);
    CHECK(compose_masked(img, b, set) == comp_ref);
  }
  k::force_isa(original);
}
