#include "xprobe/imaging.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <numeric>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "xprobe/attribution.hpp"
#include "xprobe/error.hpp"
#include "xprobe/kernels.hpp"

namespace xprobe {

ImageTensor::ImageTensor(int height, int width, int channels)
    : height_(height), width_(width), channels_(channels) {
  if (height <= 0 || width <= 0 || (channels != 1 && channels != 3)) {
    throw InvalidArgument("image: need positive dimensions and 1 or 3 channels");
  }
  values_.assign(static_cast<std::size_t>(height) * width * channels, 0.0f);
}

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<float> values)
    : ImageTensor(height, width, channels) {
  if (values.size() != values_.size()) {
    throw DimensionMismatch("image: expected " + std::to_string(values_.size()) + " values, got " +
                            std::to_string(values.size()));
  }
  values_ = std::move(values);
  validate();
}

std::span<const float> ImageTensor::plane(int channel) const {
  return std::span<const float>(values_).subspan(static_cast<std::size_t>(channel) * plane_size(),
                                                 plane_size());
}

std::span<float> ImageTensor::mutable_plane(int channel) {
  return std::span<float>(values_).subspan(static_cast<std::size_t>(channel) * plane_size(),
                                           plane_size());
}

void ImageTensor::validate() const {
  for (float v : values_) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw InvalidArgument("image: value outside [0,1] or non-finite");
    }
  }
}

std::uint64_t content_hash(const ImageTensor& image) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  const int dims[3] = {image.height(), image.width(), image.channels()};
  mix(dims, sizeof(dims));
  mix(image.values().data(), image.values().size_bytes());
  return h;
}

void BaselineStyle::validate() const {
  if (kind == Kind::Blur && !(blur_sigma > 0.0 && std::isfinite(blur_sigma))) {
    throw InvalidArgument("baseline: blur sigma must be positive");
  }
}

std::string BaselineStyle::tag() const {
  if (kind == Kind::Grey) return "grey";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "blur:%.17g", blur_sigma);
  return buf;
}

BaselineStyle BaselineStyle::parse(const std::string& text) {
  if (text == "grey" || text == "gray") return grey();
  if (text == "blur") return blur();
  if (text.starts_with("blur:")) {
    double sigma = 0.0;
    const std::string num = text.substr(5);
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), sigma);
    if (num.empty() || ec != std::errc() || ptr != num.data() + num.size()) {
      throw InvalidArgument("baseline: bad blur sigma '" + num + "'");
    }
    BaselineStyle style = blur(sigma);
    style.validate();
    return style;
  }
  throw InvalidArgument("baseline: unknown style '" + text + "' (expected grey or blur)");
}

ImageTensor gaussian_blur(const ImageTensor& image, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("blur: sigma must be positive");
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> weights(2 * static_cast<std::size_t>(radius) + 1);
  for (int k = -radius; k <= radius; ++k) {
    weights[static_cast<std::size_t>(k + radius)] = std::exp(-(k * k) / (2.0 * sigma * sigma));
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<float> taps(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) taps[i] = static_cast<float>(weights[i] / total);

  const auto& k = kernels::active();
  ImageTensor out(image.height(), image.width(), image.channels());
  std::vector<float> tmp(image.plane_size());
  for (int c = 0; c < image.channels(); ++c) {
    k.convolve_rows(image.plane(c).data(), tmp.data(), image.height(), image.width(), taps.data(),
                    radius);
    k.convolve_cols(tmp.data(), out.mutable_plane(c).data(), image.height(), image.width(),
                    taps.data(), radius);
  }
  k.clamp01(out.mutable_values().data(), out.size());
  return out;
}

ImageTensor make_baseline(const ImageTensor& image, const BaselineStyle& style) {
  style.validate();
  if (style.kind == BaselineStyle::Kind::Grey) {
    return ImageTensor(image.height(), image.width(), image.channels());
  }
  return gaussian_blur(image, style.blur_sigma);
}

std::vector<std::uint8_t> patch_pixel_mask(const PatchSet& patches) {
  const GridSpec& grid = patches.grid();
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(grid.image_height()) * grid.image_width(), 0);
  for (int index : patches.indices()) {
    const PatchRect r = grid.patch_rect(index);
    for (int y = r.y0; y < r.y1; ++y) {
      std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(y) * grid.image_width() + r.x0,
                  r.width(), std::uint8_t{1});
    }
  }
  return mask;
}

namespace {

ImageTensor select_planes(const ImageTensor& keep, const ImageTensor& fill,
                          const std::vector<std::uint8_t>& mask) {
  ImageTensor out(keep.height(), keep.width(), keep.channels());
  const auto& k = kernels::active();
  for (int c = 0; c < keep.channels(); ++c) {
    k.select(keep.plane(c).data(), fill.plane(c).data(), mask.data(), out.mutable_plane(c).data(),
             keep.plane_size());
  }
  return out;
}

}  // namespace

ImageTensor compose_masked(const ImageTensor& image, const ImageTensor& baseline,
                           const PatchSet& patches) {
  if (!image.same_shape(baseline)) {
    throw DimensionMismatch("compose_masked: image and baseline shapes differ");
  }
  const GridSpec& grid = patches.grid();
  if (grid.image_height() != image.height() || grid.image_width() != image.width()) {
    throw DimensionMismatch("compose_masked: grid does not match image dimensions");
  }
  return select_planes(image, baseline, patch_pixel_mask(patches));
}

PixelRanking::PixelRanking(const AttributionMap& map, int image_height, int image_width,
                           Upsampling upsampling)
    : height_(image_height), width_(image_width) {
  if (map.height() <= 0 || map.width() <= 0) {
    throw DimensionMismatch("ranking: empty attribution map");
  }
  if (image_height <= 0 || image_width <= 0) {
    throw DimensionMismatch("ranking: empty image");
  }
  const std::size_t n = static_cast<std::size_t>(image_height) * image_width;
  std::vector<float> value(n);
  const int mh = map.height();
  const int mw = map.width();
  for (int y = 0; y < image_height; ++y) {
    for (int x = 0; x < image_width; ++x) {
      float v;
      if (upsampling == Upsampling::Nearest) {
        const int sy = static_cast<int>(static_cast<long long>(y) * mh / image_height);
        const int sx = static_cast<int>(static_cast<long long>(x) * mw / image_width);
        v = map.at(sy, sx);
      } else {
        const double fy = std::clamp((y + 0.5) * mh / image_height - 0.5, 0.0, mh - 1.0);
        const double fx = std::clamp((x + 0.5) * mw / image_width - 0.5, 0.0, mw - 1.0);
        const int y0 = static_cast<int>(fy);
        const int x0 = static_cast<int>(fx);
        const int y1 = std::min(y0 + 1, mh - 1);
        const int x1 = std::min(x0 + 1, mw - 1);
        const double ty = fy - y0;
        const double tx = fx - x0;
        const double top = map.at(y0, x0) * (1 - tx) + map.at(y0, x1) * tx;
        const double bottom = map.at(y1, x0) * (1 - tx) + map.at(y1, x1) * tx;
        v = static_cast<float>(top * (1 - ty) + bottom * ty);
      }
      value[static_cast<std::size_t>(y) * image_width + x] = v;
    }
  }
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0U);
  std::stable_sort(order_.begin(), order_.end(),
                   [&value](std::uint32_t a, std::uint32_t b) { return value[a] > value[b]; });
}

std::size_t PixelRanking::count_for(double fraction) const {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw InvalidArgument("ranking: fraction must lie in [0,1]");
  }
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(order_.size())));
}

std::vector<std::uint8_t> PixelRanking::top_mask(std::size_t count) const {
  std::vector<std::uint8_t> mask(order_.size(), 0);
  count = std::min(count, order_.size());
  for (std::size_t i = 0; i < count; ++i) mask[order_[i]] = 1;
  return mask;
}

ImageTensor compose_ranked(const ImageTensor& image, const ImageTensor& baseline,
                           const PixelRanking& ranking, std::size_t count, Direction direction) {
  if (!image.same_shape(baseline)) {
    throw DimensionMismatch("compose_fractional: image and baseline shapes differ");
  }
  if (ranking.image_height() != image.height() || ranking.image_width() != image.width()) {
    throw DimensionMismatch("compose_fractional: map does not match image after upsampling");
  }
  const auto mask = ranking.top_mask(count);
  return direction == Direction::Insertion ? select_planes(image, baseline, mask)
                                           : select_planes(baseline, image, mask);
}

ImageTensor compose_fractional(const ImageTensor& image, const ImageTensor& baseline,
                               const AttributionMap& map, double fraction, Direction direction,
                               Upsampling upsampling) {
  const PixelRanking ranking(map, image.height(), image.width(), upsampling);
  return compose_ranked(image, baseline, ranking, ranking.count_for(fraction), direction);
}

namespace {

ImageTensor from_hwc(const cv::Mat& hwc) {
  const int channels = hwc.channels();
  ImageTensor out(hwc.rows, hwc.cols, channels);
  for (int y = 0; y < hwc.rows; ++y) {
    const float* row = hwc.ptr<float>(y);
    for (int x = 0; x < hwc.cols; ++x) {
      for (int c = 0; c < channels; ++c) {
        out.at(c, y, x) = std::clamp(row[x * channels + c], 0.0f, 1.0f);
      }
    }
  }
  return out;
}

cv::Mat to_hwc(const ImageTensor& image) {
  cv::Mat hwc(image.height(), image.width(), CV_32FC(image.channels()));
  for (int y = 0; y < image.height(); ++y) {
    float* row = hwc.ptr<float>(y);
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < image.channels(); ++c) row[x * image.channels() + c] = image.at(c, y, x);
    }
  }
  return hwc;
}

}  // namespace

ImageTensor resize_bilinear(const ImageTensor& image, int height, int width) {
  if (height <= 0 || width <= 0) throw InvalidArgument("resize: target must be positive");
  if (height == image.height() && width == image.width()) return image;
  cv::Mat resized;
  cv::resize(to_hwc(image), resized, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  return from_hwc(resized);
}

ImageTensor load_image(const std::filesystem::path& path, int target_height, int target_width,
                       bool grayscale) {
  cv::Mat raw = cv::imread(path.string(), (grayscale ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR) |
                                              cv::IMREAD_ANYDEPTH);
  if (raw.empty()) throw FormatError("image: cannot decode '" + path.string() + "'");
  if (!grayscale) cv::cvtColor(raw, raw, cv::COLOR_BGR2RGB);
  const double scale = raw.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
  cv::Mat hwc;
  raw.convertTo(hwc, CV_32F, scale);
  ImageTensor image = from_hwc(hwc);
  if (target_height > 0 && target_width > 0) {
    image = resize_bilinear(image, target_height, target_width);
  }
  return image;
}

void save_image_png(const ImageTensor& image, const std::filesystem::path& path) {
  cv::Mat hwc = to_hwc(image);
  if (image.channels() == 3) cv::cvtColor(hwc, hwc, cv::COLOR_RGB2BGR);
  cv::Mat out;
  hwc.convertTo(out, CV_16U, 65535.0);
  if (!cv::imwrite(path.string(), out)) {
    throw Error("image: cannot write '" + path.string() + "'");
  }
}

}  // namespace xprobe
