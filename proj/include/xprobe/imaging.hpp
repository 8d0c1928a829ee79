#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xprobe/grid.hpp"

namespace xprobe {

/// Planar (CHW) float image with values in [0, 1].
class ImageTensor {
 public:
  ImageTensor() = default;
  // Zero-filled.
  ImageTensor(int height, int width, int channels);
  // Takes ownership of CHW values; validates shape, finiteness and range.
  ImageTensor(int height, int width, int channels, std::vector<float> values);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return values_.size(); }

  std::span<const float> values() const { return values_; }
  std::span<float> mutable_values() { return values_; }
  std::span<const float> plane(int channel) const;
  std::span<float> mutable_plane(int channel);

  float at(int channel, int y, int x) const { return values_[index(channel, y, x)]; }
  float& at(int channel, int y, int x) { return values_[index(channel, y, x)]; }

  bool same_shape(const ImageTensor& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  // Throws InvalidArgument on non-finite or out-of-range values.
  void validate() const;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> values_;
};

// 64-bit FNV-1a over the shape and raw value bytes.
std::uint64_t content_hash(const ImageTensor& image);

struct BaselineStyle {
  enum class Kind { Grey, Blur };

  Kind kind = Kind::Grey;
  double blur_sigma = 10.0;

  static BaselineStyle grey() { return {}; }
  static BaselineStyle blur(double sigma = 10.0) { return {Kind::Blur, sigma}; }

  void validate() const;
  // "grey" or "blur:<sigma>"; stable, used in cache keys and file names.
  std::string tag() const;
  static BaselineStyle parse(const std::string& text);

  friend bool operator==(const BaselineStyle&, const BaselineStyle&) = default;
};

enum class Direction { Insertion, Deletion };
enum class Upsampling { Nearest, Bilinear };

class AttributionMap;

ImageTensor make_baseline(const ImageTensor& image, const BaselineStyle& style);

// Separable Gaussian blur with clamp-to-edge borders; output clamped to [0,1].
ImageTensor gaussian_blur(const ImageTensor& image, double sigma);

// Pixels inside the patches of `patches` from image, all others from baseline.
ImageTensor compose_masked(const ImageTensor& image, const ImageTensor& baseline,
                           const PatchSet& patches);

// One byte per pixel, 1 inside the selected patches.
std::vector<std::uint8_t> patch_pixel_mask(const PatchSet& patches);

/// Pixel order of an attribution map upsampled to an image: most salient
/// first, ties by raster order.
class PixelRanking {
 public:
  PixelRanking(const AttributionMap& map, int image_height, int image_width,
               Upsampling upsampling = Upsampling::Nearest);

  int image_height() const { return height_; }
  int image_width() const { return width_; }
  std::size_t pixel_count() const { return order_.size(); }
  std::span<const std::uint32_t> order() const { return order_; }

  // Number of top-ranked pixels kept for a perturbation ratio in [0, 1].
  std::size_t count_for(double fraction) const;
  // One byte per pixel, 1 for the `count` highest-ranked pixels.
  std::vector<std::uint8_t> top_mask(std::size_t count) const;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint32_t> order_;
};

// Insertion: the top `fraction` of pixels come from image, the rest from
// baseline. Deletion: the same with image and baseline swapped.
ImageTensor compose_fractional(const ImageTensor& image, const ImageTensor& baseline,
                               const AttributionMap& map, double fraction, Direction direction,
                               Upsampling upsampling = Upsampling::Nearest);
ImageTensor compose_ranked(const ImageTensor& image, const ImageTensor& baseline,
                           const PixelRanking& ranking, std::size_t count, Direction direction);

// PNG/JPEG via OpenCV, converted to RGB (or kept grayscale) and resized with
// bilinear interpolation when the target size is positive.
ImageTensor load_image(const std::filesystem::path& path, int target_height = 224,
                       int target_width = 224, bool grayscale = false);
void save_image_png(const ImageTensor& image, const std::filesystem::path& path);

// Bilinear resize (OpenCV INTER_LINEAR semantics).
ImageTensor resize_bilinear(const ImageTensor& image, int height, int width);

}  // namespace xprobe
