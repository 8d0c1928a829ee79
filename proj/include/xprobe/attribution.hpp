#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace xprobe {

/// Saliency values in [0, 1] on a coarse cell grid (28x28 for ingested maps).
class AttributionMap {
 public:
  AttributionMap() = default;
  AttributionMap(int height, int width, std::vector<float> values, std::string source = {});

  int height() const { return height_; }
  int width() const { return width_; }
  std::span<const float> values() const { return values_; }
  float at(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  const std::string& source() const { return source_; }
  void set_source(std::string source) { source_ = std::move(source); }

  friend bool operator==(const AttributionMap& a, const AttributionMap& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.values_ == b.values_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> values_;
  std::string source_;
};

// ".fmap": "FMAP", u32 height, u32 width (little-endian), then height*width
// little-endian float32 row-major. Paths ending in ".png" are read as 16-bit
// grayscale (value / 65535).
AttributionMap load_attribution(const std::filesystem::path& path);
void save_attribution(const AttributionMap& map, const std::filesystem::path& path);

AttributionMap parse_fmap(std::span<const unsigned char> bytes);
std::vector<unsigned char> serialize_fmap(const AttributionMap& map);

}  // namespace xprobe
