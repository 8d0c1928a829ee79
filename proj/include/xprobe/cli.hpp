#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xprobe/adapters.hpp"
#include "xprobe/crosstest.hpp"
#include "xprobe/subexplain.hpp"

namespace xprobe::cli {

enum class MapSource { Randomized, Files };

struct DatasetConfig {
  // Directory of PNG/JPEG files, or a text manifest with one path per line.
  std::filesystem::path path;
  // Generated noise images when path is empty.
  int synthetic_count = 0;
  int synthetic_height = 32;
  int synthetic_width = 32;
  int synthetic_channels = 3;
  int image_size = 224;  // file images are resized to image_size^2
};

struct SaliencyConfig {
  int steps = kDefaultSteps;
  MapSource maps = MapSource::Randomized;
  std::filesystem::path map_dir;  // <map_dir>/<model>/<image_id>.fmap|.png
  Upsampling upsampling = Upsampling::Nearest;
  RandomizedMapConfig randomized;
};

struct EmbeddingConfig {
  KernelSpec kernel = KernelSpec::rbf();
  int dims = 2;
};

struct RunConfig {
  DatasetConfig dataset;
  std::vector<nlohmann::json> model_entries;  // parsed once the grid is known
  int grid_rows = 7;
  int grid_cols = 7;
  BeamConfig beam;
  CountConfig counts;
  BaselineStyle baseline;
  SaliencyConfig saliency;
  EmbeddingConfig embedding;
  std::filesystem::path out_dir = "out";
  unsigned jobs = 0;  // 0 = hardware concurrency
  std::uint64_t seed = 0;
  std::size_t batch_size = kDefaultBatchSize;
  std::filesystem::path cache_dir;  // empty: no persistence
};

// Reads the JSON config; relative paths resolve against the config's folder.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

// "7x7" -> {7, 7}
std::pair<int, int> parse_grid(const std::string& text);

struct Image {
  std::string id;
  ImageTensor tensor;
};

std::vector<Image> load_dataset(const RunConfig& config);
// Noise in [0.1, 1] so every pixel differs from an all-zero baseline.
std::vector<Image> synthetic_dataset(int count, int height, int width, int channels,
                                     std::uint64_t seed);

int cmd_mse(const RunConfig& config);
int cmd_subexp(const RunConfig& config);
int cmd_saliency(const RunConfig& config);
int cmd_crosstest(const RunConfig& config);
int cmd_report(const RunConfig& config);

// Runs a command, mapping ConfigError to 2 and any other failure to 3.
int run_guarded(int (*command)(const RunConfig&), const RunConfig& config);

}  // namespace xprobe::cli
