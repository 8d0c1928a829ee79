#pragma once

#include <compare>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace xprobe {

// Half-open pixel rectangle [y0, y1) x [x0, x1).
struct PatchRect {
  int y0 = 0;
  int y1 = 0;
  int x0 = 0;
  int x1 = 0;

  int height() const { return y1 - y0; }
  int width() const { return x1 - x0; }
  friend bool operator==(const PatchRect&, const PatchRect&) = default;
};

/// Partition of an image into rows x cols non-overlapping patches.
///
/// Patches are split evenly; remainder pixels go to the last row/column of
/// patches. Patch indices are row-major. At most 64 patches so that any
/// subset fits a 64-bit mask.
class GridSpec {
 public:
  static constexpr int kMaxPatches = 64;

  GridSpec() = default;
  GridSpec(int image_height, int image_width, int rows, int cols);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int image_height() const { return image_height_; }
  int image_width() const { return image_width_; }
  int patch_count() const { return rows_ * cols_; }

  PatchRect patch_rect(int index) const;
  int patch_of_pixel(int y, int x) const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  int image_height_ = 0;
  int image_width_ = 0;
  int rows_ = 0;
  int cols_ = 0;
};

GridSpec make_grid(int image_height, int image_width, int rows, int cols);

/// A subset of the patches of one grid, stored as a bitmask.
///
/// Ordering (operator<=>) is by ascending bitmask, which is the tie-break
/// used throughout the search code.
class PatchSet {
 public:
  PatchSet() = default;
  PatchSet(std::uint64_t bits, const GridSpec& grid);

  static PatchSet none(const GridSpec& grid) { return PatchSet(0, grid); }
  static PatchSet all(const GridSpec& grid);
  static PatchSet of(std::initializer_list<int> indices, const GridSpec& grid);
  static PatchSet of(const std::vector<int>& indices, const GridSpec& grid);
  // Parses the hex form produced by to_hex ("0x1f" or "1f").
  static PatchSet from_hex(const std::string& hex, const GridSpec& grid);

  std::uint64_t bits() const { return bits_; }
  const GridSpec& grid() const { return grid_; }
  int size() const;
  bool empty() const { return bits_ == 0; }
  bool contains(int index) const;

  PatchSet with(int index) const;
  PatchSet without(int index) const;
  PatchSet complement() const;
  bool is_subset_of(const PatchSet& other) const;
  bool is_proper_subset_of(const PatchSet& other) const;
  std::vector<int> indices() const;
  std::string to_hex() const;

  friend bool operator==(const PatchSet& a, const PatchSet& b) {
    return a.bits_ == b.bits_ && a.grid_ == b.grid_;
  }
  friend std::strong_ordering operator<=>(const PatchSet& a, const PatchSet& b) {
    return a.bits_ <=> b.bits_;
  }

 private:
  std::uint64_t universe() const;

  std::uint64_t bits_ = 0;
  GridSpec grid_;
};

}  // namespace xprobe
