#include "xprobe/synthetic.hpp"

#include <bit>
#include <cmath>

#include "xprobe/error.hpp"
#include "xprobe/kernels.hpp"

namespace xprobe {

OccupancyOracle::OccupancyOracle(std::string name, const GridSpec& grid, double occupancy_threshold)
    : name_(std::move(name)), grid_(grid), threshold_(occupancy_threshold) {
  if (!(occupancy_threshold >= 0.0 && occupancy_threshold < 1.0)) {
    throw InvalidArgument("synthetic oracle: occupancy threshold must lie in [0,1)");
  }
}

void OccupancyOracle::register_baseline(const ImageTensor& baseline) const {
  std::lock_guard lock(mutex_);
  for (const auto& known : baselines_) {
    if (known == baseline) return;
  }
  baselines_.push_back(baseline);
}

PatchSet OccupancyOracle::occupancy(const ImageTensor& image) const {
  if (image.height() != grid_.image_height() || image.width() != grid_.image_width()) {
    throw OracleError("oracle '" + name_ + "': input size does not match its grid");
  }
  const auto& k = kernels::active();
  const std::size_t pixels = image.plane_size();

  auto diff_mask = [&](const ImageTensor& baseline) {
    std::vector<std::uint8_t> mask(pixels, 0);
    for (int c = 0; c < image.channels(); ++c) {
      k.mark_diff(image.plane(c).data(), baseline.plane(c).data(), mask.data(), pixels);
    }
    return mask;
  };

  std::vector<std::uint8_t> best = diff_mask(ImageTensor(image.height(), image.width(), image.channels()));
  std::size_t best_diff = k.count_nonzero(best.data(), pixels);
  {
    std::lock_guard lock(mutex_);
    for (const auto& baseline : baselines_) {
      if (!baseline.same_shape(image)) continue;
      auto mask = diff_mask(baseline);
      const std::size_t diff = k.count_nonzero(mask.data(), pixels);
      if (diff < best_diff) {
        best_diff = diff;
        best = std::move(mask);
      }
    }
  }

  std::uint64_t bits = 0;
  for (int p = 0; p < grid_.patch_count(); ++p) {
    const PatchRect r = grid_.patch_rect(p);
    std::size_t changed = 0;
    for (int y = r.y0; y < r.y1; ++y) {
      changed += k.count_nonzero(best.data() + static_cast<std::size_t>(y) * image.width() + r.x0,
                                 static_cast<std::size_t>(r.width()));
    }
    const double area = static_cast<double>(r.height()) * r.width();
    if (static_cast<double>(changed) > threshold_ * area) bits |= std::uint64_t{1} << p;
  }
  return PatchSet(bits, grid_);
}

std::vector<double> OccupancyOracle::score_batch(std::span<const ImageTensor> images,
                                                 ClassLabel label) const {
  if (label.id != 0) throw OracleError("oracle '" + name_ + "' has a single class");
  std::vector<double> out;
  out.reserve(images.size());
  for (const auto& image : images) out.push_back(score_occupancy(occupancy(image)));
  return out;
}

void validate(const SyntheticOracleSpec& spec, const GridSpec& grid) {
  if (!(spec.occupancy_threshold >= 0.0 && spec.occupancy_threshold < 1.0)) {
    throw InvalidArgument("synthetic oracle: occupancy threshold must lie in [0,1)");
  }
  auto check_levels = [](double hi, double lo) {
    if (!(hi > lo && lo >= 0.0 && hi <= 1.0)) {
      throw InvalidArgument("synthetic oracle: need 0 <= lo < hi <= 1");
    }
  };
  auto check_set = [&grid](const PatchSet& s) {
    if (!(s.grid() == grid)) throw InvalidArgument("synthetic oracle: patch set grid mismatch");
    if (s.empty()) throw InvalidArgument("synthetic oracle: empty patch set");
  };
  if (const auto* c = std::get_if<Conjunctive>(&spec.kind)) {
    check_levels(c->hi, c->lo);
    check_set(c->required);
  } else if (const auto* d = std::get_if<Disjunctive>(&spec.kind)) {
    check_levels(d->hi, d->lo);
    if (d->groups.empty()) throw InvalidArgument("synthetic oracle: no disjunctive groups");
    for (const auto& g : d->groups) check_set(g);
    if (!(d->partial_credit >= 0.0 && d->partial_credit < 1.0)) {
      throw InvalidArgument("synthetic oracle: partial credit must lie in [0,1)");
    }
  } else {
    const auto& a = std::get<Additive>(spec.kind);
    if (a.weights.size() != static_cast<std::size_t>(grid.patch_count())) {
      throw InvalidArgument("synthetic oracle: need one weight per patch (" +
                            std::to_string(grid.patch_count()) + ")");
    }
    for (double w : a.weights) {
      if (!std::isfinite(w)) throw InvalidArgument("synthetic oracle: non-finite weight");
    }
  }
}

SyntheticOracle::SyntheticOracle(const SyntheticOracleSpec& spec, const GridSpec& grid,
                                 std::string name)
    : OccupancyOracle(std::move(name), grid, spec.occupancy_threshold), spec_(spec) {
  validate(spec_, grid);
}

double SyntheticOracle::score_occupancy(const PatchSet& present) const {
  if (const auto* c = std::get_if<Conjunctive>(&spec_.kind)) {
    return c->required.is_subset_of(present) ? c->hi : c->lo;
  }
  if (const auto* d = std::get_if<Disjunctive>(&spec_.kind)) {
    double best_fraction = 0.0;
    for (const auto& g : d->groups) {
      if (g.is_subset_of(present)) return d->hi;
      const double have = std::popcount(g.bits() & present.bits());
      best_fraction = std::max(best_fraction, have / g.size());
    }
    return d->lo + d->partial_credit * (d->hi - d->lo) * best_fraction;
  }
  const auto& a = std::get<Additive>(spec_.kind);
  double sum = 0.0;
  for (int i : present.indices()) sum += a.weights[static_cast<std::size_t>(i)];
  if (a.squash == Squash::Clamp) return std::min(std::max(sum, 0.0), 1.0);
  return 1.0 / (1.0 + std::exp(-sum));
}

FunctionOracle::FunctionOracle(std::function<double(const PatchSet&)> fn, const GridSpec& grid,
                               std::string name)
    : OccupancyOracle(std::move(name), grid), fn_(std::move(fn)) {}

ConstantOracle::ConstantOracle(double value, std::size_t class_count, std::string name)
    : value_(value), class_count_(class_count), name_(std::move(name)) {
  if (!(value >= 0.0 && value <= 1.0)) throw InvalidArgument("constant oracle: value outside [0,1]");
  if (class_count == 0) throw InvalidArgument("constant oracle: need at least one class");
}

std::vector<double> ConstantOracle::score_batch(std::span<const ImageTensor> images,
                                                ClassLabel label) const {
  if (label.id >= class_count_) throw OracleError("constant oracle: class out of range");
  return std::vector<double>(images.size(), value_);
}

std::unique_ptr<ClassifierOracle> make_synthetic(const SyntheticOracleSpec& spec,
                                                 const GridSpec& grid, std::string name) {
  return std::make_unique<SyntheticOracle>(spec, grid, std::move(name));
}

}  // namespace xprobe
