#include "xprobe/attribution.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <opencv2/imgcodecs.hpp>

#include "xprobe/error.hpp"

namespace xprobe {

AttributionMap::AttributionMap(int height, int width, std::vector<float> values, std::string source)
    : height_(height), width_(width), values_(std::move(values)), source_(std::move(source)) {
  if (height <= 0 || width <= 0) throw InvalidArgument("attribution map: empty dimensions");
  if (values_.size() != static_cast<std::size_t>(height) * width) {
    throw DimensionMismatch("attribution map: expected " +
                            std::to_string(static_cast<std::size_t>(height) * width) +
                            " values, got " + std::to_string(values_.size()));
  }
  for (float v : values_) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw InvalidArgument("attribution map: value " + std::to_string(v) + " outside [0,1]");
    }
  }
}

namespace {

constexpr unsigned char kMagic[4] = {'F', 'M', 'A', 'P'};

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

}  // namespace

AttributionMap parse_fmap(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("fmap: missing FMAP header");
  }
  const std::uint32_t height = read_u32_le(bytes.data() + 4);
  const std::uint32_t width = read_u32_le(bytes.data() + 8);
  if (height == 0 || width == 0 || height > (1U << 15) || width > (1U << 15)) {
    throw FormatError("fmap: implausible dimensions");
  }
  const std::size_t count = static_cast<std::size_t>(height) * width;
  const std::size_t payload = bytes.size() - 12;
  if (payload < count * 4) {
    throw FormatError("fmap: truncated, header declares " + std::to_string(count) +
                      " values but file holds " + std::to_string(payload / 4));
  }
  if (payload > count * 4) throw FormatError("fmap: trailing bytes after values");
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    values[i] = std::bit_cast<float>(read_u32_le(bytes.data() + 12 + 4 * i));
  }
  try {
    return AttributionMap(static_cast<int>(height), static_cast<int>(width), std::move(values));
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("fmap: ") + e.what());
  }
}

std::vector<unsigned char> serialize_fmap(const AttributionMap& map) {
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(12 + map.values().size() * 4);
  write_u32_le(out, static_cast<std::uint32_t>(map.height()));
  write_u32_le(out, static_cast<std::uint32_t>(map.width()));
  for (float v : map.values()) write_u32_le(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

AttributionMap load_attribution(const std::filesystem::path& path) {
  if (path.extension() == ".png") {
    cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw FormatError("attribution: cannot decode '" + path.string() + "'");
    if (raw.channels() != 1 || raw.depth() != CV_16U) {
      throw FormatError("attribution: PNG maps must be 16-bit grayscale");
    }
    std::vector<float> values(static_cast<std::size_t>(raw.rows) * raw.cols);
    for (int y = 0; y < raw.rows; ++y) {
      const auto* row = raw.ptr<std::uint16_t>(y);
      for (int x = 0; x < raw.cols; ++x) {
        values[static_cast<std::size_t>(y) * raw.cols + x] = static_cast<float>(row[x] / 65535.0);
      }
    }
    return AttributionMap(raw.rows, raw.cols, std::move(values), path.stem().string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("attribution: cannot open '" + path.string() + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  AttributionMap map = parse_fmap(bytes);
  map.set_source(path.stem().string());
  return map;
}

void save_attribution(const AttributionMap& map, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (path.extension() == ".png") {
    cv::Mat img(map.height(), map.width(), CV_16UC1);
    for (int y = 0; y < map.height(); ++y) {
      for (int x = 0; x < map.width(); ++x) {
        img.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(std::lround(map.at(y, x) * 65535.0));
      }
    }
    if (!cv::imwrite(path.string(), img)) throw Error("attribution: cannot write '" + path.string() + "'");
    return;
  }
  const auto bytes = serialize_fmap(map);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("attribution: cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("attribution: write failed for '" + path.string() + "'");
}

}  // namespace xprobe
