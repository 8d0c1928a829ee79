#include <doctest.h>

#include <random>

#include "support/counting.hpp"
#include "support/reference.hpp"
#include "xprobe/error.hpp"
#include "xprobe/saliency.hpp"
#include "xprobe/synthetic.hpp"

using namespace xprobe;

namespace {

const GridSpec kGrid = make_grid(12, 12, 3, 3);

ImageTensor noise(std::uint64_t seed = 1, int size = 12) {
  std::mt19937_64 rng(seed);
  return ref::noise_image(size, size, 3, rng);
}

PerturbationCurve curve_of(std::vector<double> v, Direction d = Direction::Insertion) {
  const int steps = static_cast<int>(v.size()) - 1;
  return PerturbationCurve{d, steps, std::move(v)};
}

}  // namespace

TEST_CASE("constant oracle gives a flat curve") {
  const ConstantOracle c(0.3);
  const AttributionMap m(3, 3, {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f, 0.9f});
  const auto curve = perturbation_curve(c, noise(), {}, m, 10, {0}, Direction::Insertion, nullptr);
  CHECK(curve.confidences == std::vector<double>(11, 0.3));
  CHECK(auc(curve) == 0.3);
}

TEST_CASE("additive uniform oracle inserts one patch per step") {
  const auto oracle = make_synthetic({Additive{std::vector<double>(9, 1.0 / 9.0), Squash::Clamp}}, kGrid);
  const AttributionMap m(3, 3, {0.2f, 0.9f, 0.1f, 0.5f, 0.6f, 0.0f, 0.8f, 0.3f, 0.7f});
  const auto curve = perturbation_curve(*oracle, noise(), {}, m, 9, {0}, Direction::Insertion, nullptr);
  REQUIRE(curve.confidences.size() == 10);
  double sum = 0.0;
  for (int t = 0; t <= 9; ++t) {
    CHECK(curve.confidences[static_cast<std::size_t>(t)] == doctest::Approx(t / 9.0).epsilon(1e-15));
    if (t < 9) CHECK(curve.confidences[static_cast<std::size_t>(t)] == sum);
    sum += 1.0 / 9.0;
  }
  CHECK(curve.confidences.back() == 1.0);

  const auto del = perturbation_curve(*oracle, noise(), {}, m, 9, {0}, Direction::Deletion, nullptr);
  CHECK(del.confidences.front() == 1.0);
  CHECK(del.confidences.back() == 0.0);
}

TEST_CASE("a single step gives the two endpoints") {
  const auto oracle = make_synthetic({Conjunctive{PatchSet::of({4}, kGrid), 0.8, 0.2}}, kGrid);
  const AttributionMap m(1, 1, {1.0f});
  const auto ins = perturbation_curve(*oracle, noise(), {}, m, 1, {0}, Direction::Insertion, nullptr);
  CHECK(ins.confidences == std::vector<double>{0.2, 0.8});
  const auto del = perturbation_curve(*oracle, noise(), {}, m, 1, {0}, Direction::Deletion, nullptr);
  CHECK(del.confidences == std::vector<double>{0.8, 0.2});
  CHECK_THROWS_AS(perturbation_curve(*oracle, noise(), {}, m, 0, {0}, Direction::Deletion, nullptr), InvalidArgument);
}

TEST_CASE("auc: trapezoid rule") {
  for (double c : {0.0, 0.1, 0.3, 1.0 / 3.0, 0.7, 0.999, 1.0}) {
    for (int steps : {1, 3, 9, 100, 1000}) CHECK(auc(curve_of(std::vector<double>(steps + 1, c))) == c);
  }
  std::vector<double> lin(10);
  for (int t = 0; t <= 9; ++t) lin[static_cast<std::size_t>(t)] = t / 9.0;
  CHECK(std::abs(auc(curve_of(lin)) - 0.5) <= 1e-12);
  CHECK(auc(curve_of({0.2, 0.6})) == doctest::Approx(0.4));

  // direct sum as an independent check
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(1 + rng() % 50);
    if (v.size() < 2) v.resize(2);
    for (auto& x : v) x = u(rng);
    long double s = 0;
    for (std::size_t t = 0; t + 1 < v.size(); ++t) s += (static_cast<long double>(v[t]) + v[t + 1]) / 2.0L;
    const double want = static_cast<double>(s / (v.size() - 1));
    const double got = auc(curve_of(v));
    CHECK(got == doctest::Approx(want).epsilon(1e-13));
    CHECK(got >= *std::min_element(v.begin(), v.end()));
    CHECK(got <= *std::max_element(v.begin(), v.end()));
    std::vector<double> sym = v;
    sym.insert(sym.end(), v.rbegin() + 1, v.rend());
    std::vector<double> rev(sym.rbegin(), sym.rend());
    CHECK(auc(curve_of(sym)) == doctest::Approx(auc(curve_of(rev))).epsilon(1e-15));
  }
  CHECK_THROWS_AS(auc(curve_of({0.1, 1.2})), InvalidArgument);
  CHECK_THROWS_AS(auc(PerturbationCurve{Direction::Insertion, 3, {0.1, 0.2}}), InvalidArgument);
}

TEST_CASE("deletion curve equals insertion curve with the images swapped") {
  std::mt19937_64 rng(17);
  const auto spec = ref::random_spec(rng, kGrid, 2);
  const auto oracle = make_synthetic(spec, kGrid);
  const ImageTensor x = noise(3);
  const ImageTensor b = make_baseline(x, BaselineStyle::blur(2.0));
  std::vector<float> vals(16);
  for (auto& v : vals) v = static_cast<float>(rng() % 7) / 6.0f;
  const AttributionMap m(4, 4, vals);
  // The blurred image stands in for the baseline when swapped, so score the
  // frames directly through compose_fractional on both sides.
  for (int t = 0; t <= 12; ++t) {
    const double f = t / 12.0;
    const ImageTensor del = compose_fractional(x, b, m, f, Direction::Deletion);
    const ImageTensor ins = compose_fractional(b, x, m, f, Direction::Insertion);
    CHECK(del == ins);
  }
}

TEST_CASE("calibration and normalization") {
  const FunctionOracle f([](const PatchSet& p) { return p.empty() ? 0.1 : 0.9; }, kGrid);
  const std::vector<ImageTensor> data{noise(1), noise(2), noise(3)};
  const ModelCalibration cal = calibrate_model(f, data, {}, nullptr, "d");
  CHECK(cal.top1 == doctest::Approx(0.9));
  CHECK(cal.blurred == doctest::Approx(0.1));
  CHECK(normalize_score(cal.top1, cal) == 1.0);
  CHECK(normalize_score(cal.blurred, cal) == 0.0);
  CHECK(normalize_score((cal.top1 + cal.blurred) / 2, cal) == doctest::Approx(0.5));
  CHECK(normalize_score(0.95, cal) > 1.0);

  const ModelCalibration exact{"m", 0.8, 0.2, ""};
  CHECK(normalize_score(0.8, exact) == 1.0);
  CHECK(normalize_score(0.2, exact) == 0.0);
  CHECK(normalize_score(0.3, exact) < normalize_score(0.31, exact));

  const ConstantOracle c(0.9);
  const ModelCalibration flat = calibrate_model(c, data, {}, nullptr);
  CHECK_THROWS_AS(normalize_score(0.5, flat), DegenerateCalibration);
  CHECK_THROWS_AS(calibrate_model(c, std::vector<ImageTensor>{}, {}, nullptr), InvalidArgument);

  const ModelCalibration single = calibrate_model(f, std::vector<ImageTensor>{noise(5)}, {}, nullptr);
  CHECK(single.top1 == 0.9);
  CHECK(single.blurred == 0.1);
}

TEST_CASE("descending order beats ascending order for a monotone additive oracle") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 0.2);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> w(9);
    for (auto& x : w) x = u(rng);
    const auto oracle = make_synthetic({Additive{w, Squash::Clamp}}, kGrid);
    const double top = *std::max_element(w.begin(), w.end());
    std::vector<float> desc(9), asc(9);
    for (std::size_t i = 0; i < 9; ++i) {
      desc[i] = static_cast<float>(w[i] / top);
      asc[i] = static_cast<float>(1.0 - w[i] / top);
    }
    const double a = auc(perturbation_curve(*oracle, noise(), {}, AttributionMap(3, 3, desc), 9, {0},
                                            Direction::Insertion, nullptr));
    const double b = auc(perturbation_curve(*oracle, noise(), {}, AttributionMap(3, 3, asc), 9, {0},
                                            Direction::Insertion, nullptr));
    CHECK(a >= b);
  }
}

TEST_CASE("randomized map: constant oracle gives 0.5 everywhere") {
  const ConstantOracle c(0.4);
  RandomizedMapConfig rc;
  rc.n_masks = 50;
  const AttributionMap m = generate_randomized_map(c, noise(1, 28), {0}, rc, nullptr);
  CHECK(m.height() == 7);
  for (float v : m.values()) CHECK(v == 0.5f);
}

TEST_CASE("randomized map: fixed seed is deterministic, seeds differ") {
  const GridSpec cells = make_grid(28, 28, 7, 7);
  std::mt19937_64 rng(2);
  std::vector<double> w(49);
  std::uniform_real_distribution<double> u(0.0, 0.05);
  for (auto& x : w) x = u(rng);
  const auto oracle = make_synthetic({Additive{w, Squash::Clamp}}, cells);
  RandomizedMapConfig rc;
  rc.n_masks = 300;
  rc.seed = 11;
  const auto a = generate_randomized_map(*oracle, noise(1, 28), {0}, rc, nullptr);
  ConfidenceCache cache;
  const auto b = generate_randomized_map(*oracle, noise(1, 28), {0}, rc, &cache);
  CHECK(a == b);
  rc.seed = 12;
  CHECK_FALSE(generate_randomized_map(*oracle, noise(1, 28), {0}, rc, nullptr) == a);
}

TEST_CASE("randomized map: indicator of cell 0 peaks at cell 0") {
  const GridSpec cells = make_grid(28, 28, 7, 7);
  const FunctionOracle f([](const PatchSet& p) { return p.contains(0) ? 1.0 : 0.0; }, cells);
  RandomizedMapConfig rc;
  rc.n_masks = 2000;
  rc.keep_prob = 0.5;
  rc.seed = 0;
  const AttributionMap m = generate_randomized_map(f, noise(1, 28), {0}, rc, nullptr);
  CHECK(m.at(0, 0) == 1.0f);
  CHECK(*std::max_element(m.values().begin(), m.values().end()) == m.at(0, 0));
}

TEST_CASE("randomized map config validation") {
  const ConstantOracle c(0.4);
  RandomizedMapConfig rc;
  rc.keep_prob = 1.0;
  CHECK_THROWS_AS(generate_randomized_map(c, noise(1, 28), {0}, rc, nullptr), InvalidArgument);
  rc = {};
  rc.n_masks = 0;
  CHECK_THROWS_AS(generate_randomized_map(c, noise(1, 28), {0}, rc, nullptr), InvalidArgument);
}
