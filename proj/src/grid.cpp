#include "xprobe/grid.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdio>

#include "xprobe/error.hpp"

namespace xprobe {

GridSpec::GridSpec(int image_height, int image_width, int rows, int cols)
    : image_height_(image_height), image_width_(image_width), rows_(rows), cols_(cols) {
  if (image_height <= 0 || image_width <= 0) {
    throw InvalidArgument("grid: image dimensions must be positive");
  }
  if (rows <= 0 || cols <= 0) {
    throw InvalidArgument("grid: rows and cols must be positive");
  }
  if (rows * cols > kMaxPatches) {
    throw InvalidArgument("grid: " + std::to_string(rows * cols) +
                          " patches exceeds the 64-patch capacity");
  }
  if (image_height < rows || image_width < cols) {
    throw InvalidArgument("grid: image smaller than the patch grid");
  }
}

PatchRect GridSpec::patch_rect(int index) const {
  if (index < 0 || index >= patch_count()) {
    throw InvalidArgument("grid: patch index out of range");
  }
  const int r = index / cols_;
  const int c = index % cols_;
  const int ph = image_height_ / rows_;
  const int pw = image_width_ / cols_;
  PatchRect rect;
  rect.y0 = r * ph;
  rect.y1 = (r == rows_ - 1) ? image_height_ : (r + 1) * ph;
  rect.x0 = c * pw;
  rect.x1 = (c == cols_ - 1) ? image_width_ : (c + 1) * pw;
  return rect;
}

int GridSpec::patch_of_pixel(int y, int x) const {
  const int r = std::min(y / (image_height_ / rows_), rows_ - 1);
  const int c = std::min(x / (image_width_ / cols_), cols_ - 1);
  return r * cols_ + c;
}

GridSpec make_grid(int image_height, int image_width, int rows, int cols) {
  return GridSpec(image_height, image_width, rows, cols);
}

PatchSet::PatchSet(std::uint64_t bits, const GridSpec& grid) : bits_(bits), grid_(grid) {
  if ((bits & ~universe()) != 0) {
    throw InvalidArgument("patch set: bits beyond the grid's patch count");
  }
}

std::uint64_t PatchSet::universe() const {
  const int n = grid_.patch_count();
  return n >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << n) - 1);
}

PatchSet PatchSet::all(const GridSpec& grid) {
  const int n = grid.patch_count();
  return PatchSet(n >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << n) - 1), grid);
}

PatchSet PatchSet::of(std::initializer_list<int> indices, const GridSpec& grid) {
  return of(std::vector<int>(indices), grid);
}

PatchSet PatchSet::of(const std::vector<int>& indices, const GridSpec& grid) {
  PatchSet set = none(grid);
  for (int i : indices) set = set.with(i);
  return set;
}

PatchSet PatchSet::from_hex(const std::string& hex, const GridSpec& grid) {
  std::string_view digits = hex;
  if (digits.starts_with("0x") || digits.starts_with("0X")) digits.remove_prefix(2);
  std::uint64_t bits = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), bits, 16);
  if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size()) {
    throw FormatError("patch set: invalid hex mask '" + hex + "'");
  }
  return PatchSet(bits, grid);
}

int PatchSet::size() const { return std::popcount(bits_); }

bool PatchSet::contains(int index) const {
  return index >= 0 && index < 64 && ((bits_ >> index) & 1U) != 0;
}

PatchSet PatchSet::with(int index) const {
  if (index < 0 || index >= grid_.patch_count()) {
    throw InvalidArgument("patch set: index " + std::to_string(index) + " out of range");
  }
  PatchSet out = *this;
  out.bits_ |= std::uint64_t{1} << index;
  return out;
}

PatchSet PatchSet::without(int index) const {
  PatchSet out = *this;
  if (index >= 0 && index < 64) out.bits_ &= ~(std::uint64_t{1} << index);
  return out;
}

PatchSet PatchSet::complement() const {
  PatchSet out = *this;
  out.bits_ = ~bits_ & universe();
  return out;
}

bool PatchSet::is_subset_of(const PatchSet& other) const {
  return (bits_ & ~other.bits_) == 0;
}

bool PatchSet::is_proper_subset_of(const PatchSet& other) const {
  return is_subset_of(other) && bits_ != other.bits_;
}

std::vector<int> PatchSet::indices() const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(size()));
  for (std::uint64_t b = bits_; b != 0; b &= b - 1) out.push_back(std::countr_zero(b));
  return out;
}

std::string PatchSet::to_hex() const {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "0x%llx", static_cast<unsigned long long>(bits_));
  return buf;
}

}  // namespace xprobe
