#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "xprobe/cli.hpp"
#include "xprobe/error.hpp"

namespace xprobe::cli {

using nlohmann::json;

namespace {

template <typename T>
T get(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

Upsampling parse_upsampling(const std::string& s) {
  if (s == "nearest") return Upsampling::Nearest;
  if (s == "bilinear") return Upsampling::Bilinear;
  throw ConfigError("saliency.upsampling must be nearest or bilinear");
}

}  // namespace

std::pair<int, int> parse_grid(const std::string& text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) throw ConfigError("grid must look like RxC, got '" + text + "'");
  try {
    std::size_t used = 0;
    const int r = std::stoi(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument("rows");
    const std::string rest = text.substr(x + 1);
    const int c = std::stoi(rest, &used);
    if (used != rest.size()) throw std::invalid_argument("cols");
    if (r < 1 || c < 1 || r * c > GridSpec::kMaxPatches) {
      throw ConfigError("grid " + text + " must have between 1 and 64 patches");
    }
    return {r, c};
  } catch (const std::logic_error&) {
    throw ConfigError("grid must look like RxC, got '" + text + "'");
  }
}

RunConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    if (d.is_string()) {
      c.dataset.path = resolve(d.get<std::string>(), base_dir);
    } else if (d.is_object()) {
      c.dataset.path = resolve(get<std::string>(d, "path", ""), base_dir);
      c.dataset.image_size = get(d, "image_size", 224);
      if (d.contains("synthetic")) {
        const auto& s = d.at("synthetic");
        c.dataset.synthetic_count = get(s, "count", 10);
        c.dataset.synthetic_height = get(s, "height", 32);
        c.dataset.synthetic_width = get(s, "width", 32);
        c.dataset.synthetic_channels = get(s, "channels", 3);
      }
    } else {
      throw ConfigError("dataset must be a path or an object");
    }
  }

  if (j.contains("models")) {
    if (!j.at("models").is_array()) throw ConfigError("models must be a list");
    for (json m : j.at("models")) {
      if (m.is_object() && m.contains("path_or_url") && m.at("path_or_url").is_string()) {
        const std::string p = m.at("path_or_url").get<std::string>();
        if (p.rfind("http://", 0) != 0 && p.rfind("https://", 0) != 0) {
          m["path_or_url"] = resolve(p, base_dir).string();
        }
      }
      c.model_entries.push_back(std::move(m));
    }
  }

  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    if (g.is_string()) {
      std::tie(c.grid_rows, c.grid_cols) = parse_grid(g.get<std::string>());
    } else {
      c.grid_rows = get(g, "rows", 7);
      c.grid_cols = get(g, "cols", 7);
    }
  }

  if (j.contains("beam")) {
    const auto& b = j.at("beam");
    c.beam.p_h = get(b, "p_h", c.beam.p_h);
    c.beam.beam_width = get<std::size_t>(b, "beam_width", c.beam.beam_width);
    if (b.contains("max_patch_count") && !b.at("max_patch_count").is_null()) {
      c.beam.max_patch_count = get(b, "max_patch_count", 0);
    }
    if (b.contains("max_mses") && !b.at("max_mses").is_null()) {
      c.beam.max_mses = get<std::size_t>(b, "max_mses", 0);
    }
    try {
      c.beam.minimality = parse_minimality(get<std::string>(b, "minimality", "immediate"));
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }

  if (j.contains("counts")) {
    const auto& k = j.at("counts");
    c.counts.thresholds = get(k, "thresholds", c.counts.thresholds);
    c.counts.stop_fraction = get(k, "stop_fraction", c.counts.stop_fraction);
    try {
      c.counts.dedup = parse_dedup(get<std::string>(k, "dedup", "per_image"));
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }

  if (j.contains("baseline")) {
    try {
      c.baseline = BaselineStyle::parse(j.at("baseline").get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("baseline: ") + e.what());
    }
  }

  if (j.contains("saliency")) {
    const auto& s = j.at("saliency");
    c.saliency.steps = get(s, "steps", c.saliency.steps);
    const std::string maps = get<std::string>(s, "maps", "randomized");
    if (maps == "randomized") {
      c.saliency.maps = MapSource::Randomized;
    } else if (maps == "files") {
      c.saliency.maps = MapSource::Files;
    } else {
      throw ConfigError("saliency.maps must be randomized or files");
    }
    c.saliency.map_dir = resolve(get<std::string>(s, "map_dir", ""), base_dir);
    c.saliency.upsampling = parse_upsampling(get<std::string>(s, "upsampling", "nearest"));
    if (s.contains("randomized")) {
      const auto& r = s.at("randomized");
      auto& rc = c.saliency.randomized;
      rc.cell_rows = get(r, "cell_rows", rc.cell_rows);
      rc.cell_cols = get(r, "cell_cols", rc.cell_cols);
      rc.n_masks = get(r, "n_masks", rc.n_masks);
      rc.keep_prob = get(r, "keep_prob", rc.keep_prob);
    }
  }

  if (j.contains("embedding")) {
    const auto& e = j.at("embedding");
    const std::string kind = get<std::string>(e, "kernel", "rbf");
    if (kind == "rbf") {
      c.embedding.kernel = KernelSpec::rbf(get(e, "gamma", 0.0));
    } else if (kind == "precomputed") {
      c.embedding.kernel = KernelSpec::precomputed();
    } else {
      throw ConfigError("embedding.kernel must be rbf or precomputed");
    }
    c.embedding.dims = get(e, "dims", 2);
  }

  c.out_dir = resolve(get<std::string>(j, "output", "out"), base_dir);
  c.jobs = get(j, "jobs", 0u);
  c.seed = get<std::uint64_t>(j, "seed", 0);
  c.batch_size = get<std::size_t>(j, "batch_size", kDefaultBatchSize);
  c.cache_dir = resolve(get<std::string>(j, "cache_dir", ""), base_dir);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  return parse_config(j, path.parent_path());
}

std::vector<Image> synthetic_dataset(int count, int height, int width, int channels,
                                     std::uint64_t seed) {
  if (count < 1 || height < 1 || width < 1 || (channels != 1 && channels != 3)) {
    throw ConfigError("synthetic dataset: bad count or shape");
  }
  std::mt19937_64 rng(seed);
  std::vector<Image> out;
  for (int i = 0; i < count; ++i) {
    ImageTensor t(height, width, channels);
    for (float& v : t.mutable_values()) {
      // 53-bit uniform in [0,1) mapped to [0.1, 1].
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      v = static_cast<float>(0.1 + 0.9 * u);
    }
    char id[32];
    std::snprintf(id, sizeof(id), "img%04d", i);
    out.push_back({id, std::move(t)});
  }
  return out;
}

std::vector<Image> load_dataset(const RunConfig& config) {
  const auto& d = config.dataset;
  if (d.path.empty()) {
    if (d.synthetic_count <= 0) throw ConfigError("dataset: neither a path nor a synthetic block");
    return synthetic_dataset(d.synthetic_count, d.synthetic_height, d.synthetic_width,
                             d.synthetic_channels, config.seed);
  }
  if (!std::filesystem::exists(d.path)) {
    throw ConfigError("dataset path not found: " + d.path.string());
  }
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(d.path)) {
    for (const auto& e : std::filesystem::directory_iterator(d.path)) {
      std::string ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    std::ifstream in(d.path);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      std::filesystem::path p = line;
      if (p.is_relative()) p = d.path.parent_path() / p;
      if (!std::filesystem::exists(p)) throw ConfigError("manifest entry not found: " + p.string());
      files.push_back(p);
    }
  }
  if (files.empty()) throw ConfigError("dataset has no images: " + d.path.string());
  std::vector<Image> out;
  for (const auto& f : files) {
    out.push_back({f.stem().string(), load_image(f, d.image_size, d.image_size)});
  }
  std::set<std::string> seen;
  for (const auto& im : out) {
    if (!seen.insert(im.id).second) throw ConfigError("duplicate image id '" + im.id + "'");
  }
  return out;
}

}  // namespace xprobe::cli
