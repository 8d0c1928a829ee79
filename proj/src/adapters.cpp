#include "xprobe/adapters.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <mutex>

#include <httplib.h>
#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include "xprobe/error.hpp"

namespace xprobe {

using nlohmann::json;

bool ModelConfig::is_remote() const {
  return path_or_url.rfind("http://", 0) == 0 || path_or_url.rfind("https://", 0) == 0;
}

namespace {

PatchSet patch_list(const json& j, const GridSpec& grid, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field + ": expected a list of patch indices");
  std::vector<int> idx;
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw ConfigError(field + ": patch index must be an integer");
    const int i = v.get<int>();
    if (i < 0 || i >= grid.patch_count()) {
      throw ConfigError(field + ": patch index " + std::to_string(i) + " outside the grid");
    }
    idx.push_back(i);
  }
  return PatchSet::of(idx, grid);
}

template <typename T>
T field_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("field '") + key + "' has the wrong type");
  }
}

std::array<double, 3> triple(const json& j, const char* key, std::array<double, 3> fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 3) throw ConfigError(std::string(key) + ": expected 3 numbers");
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!v[i].is_number()) throw ConfigError(std::string(key) + ": expected 3 numbers");
    out[i] = v[i].get<double>();
  }
  return out;
}

}  // namespace

SyntheticOracleSpec parse_synthetic_spec(const json& j, const GridSpec& grid) {
  if (!j.is_object()) throw ConfigError("synthetic: expected an object");
  const std::string kind = field_or<std::string>(j, "kind", "");
  SyntheticOracleSpec spec;
  spec.occupancy_threshold = field_or(j, "occupancy_threshold", 0.5);
  if (kind == "conjunctive") {
    if (!j.contains("required")) throw ConfigError("synthetic.required missing");
    spec.kind = Conjunctive{patch_list(j.at("required"), grid, "synthetic.required"),
                            field_or(j, "hi", 1.0), field_or(j, "lo", 0.05)};
  } else if (kind == "disjunctive") {
    if (!j.contains("groups") || !j.at("groups").is_array()) {
      throw ConfigError("synthetic.groups missing");
    }
    Disjunctive d;
    for (const auto& g : j.at("groups")) d.groups.push_back(patch_list(g, grid, "synthetic.groups"));
    d.hi = field_or(j, "hi", 1.0);
    d.lo = field_or(j, "lo", 0.05);
    d.partial_credit = field_or(j, "partial_credit", 0.0);
    spec.kind = std::move(d);
  } else if (kind == "additive") {
    Additive a;
    a.weights = field_or<std::vector<double>>(j, "weights", {});
    const std::string squash = field_or<std::string>(j, "squash", "clamp");
    if (squash == "clamp") {
      a.squash = Squash::Clamp;
    } else if (squash == "sigmoid") {
      a.squash = Squash::Sigmoid;
    } else {
      throw ConfigError("synthetic.squash must be clamp or sigmoid");
    }
    spec.kind = std::move(a);
  } else {
    throw ConfigError("synthetic.kind must be conjunctive, disjunctive or additive");
  }
  try {
    validate(spec, grid);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("synthetic: ") + e.what());
  }
  return spec;
}

json synthetic_spec_json(const SyntheticOracleSpec& spec) {
  json j;
  auto patches = [](const PatchSet& p) { return json(p.indices()); };
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Conjunctive>) {
          j["kind"] = "conjunctive";
          j["required"] = patches(k.required);
          j["hi"] = k.hi;
          j["lo"] = k.lo;
        } else if constexpr (std::is_same_v<K, Disjunctive>) {
          j["kind"] = "disjunctive";
          j["groups"] = json::array();
          for (const auto& g : k.groups) j["groups"].push_back(patches(g));
          j["hi"] = k.hi;
          j["lo"] = k.lo;
          j["partial_credit"] = k.partial_credit;
        } else {
          j["kind"] = "additive";
          j["weights"] = k.weights;
          j["squash"] = k.squash == Squash::Clamp ? "clamp" : "sigmoid";
        }
      },
      spec.kind);
  j["occupancy_threshold"] = spec.occupancy_threshold;
  return j;
}

ModelConfig parse_model_config(const json& j, const GridSpec& grid) {
  if (!j.is_object()) throw ConfigError("model entry must be an object");
  ModelConfig c;
  c.name = field_or<std::string>(j, "name", "");
  if (c.name.empty()) throw ConfigError("model entry without a name");
  if (j.contains("synthetic")) {
    c.synthetic = parse_synthetic_spec(j.at("synthetic"), grid);
    c.class_count = 1;
    return c;
  }
  c.path_or_url = field_or<std::string>(j, "path_or_url", "");
  if (c.path_or_url.empty()) throw ConfigError("model '" + c.name + "': path_or_url missing");
  c.input_size = field_or(j, "input_size", 224);
  if (c.input_size <= 0) throw ConfigError("model '" + c.name + "': input_size must be positive");
  c.mean = triple(j, "mean", c.mean);
  c.std = triple(j, "std", c.std);
  for (double s : c.std) {
    if (!(s > 0.0)) throw ConfigError("model '" + c.name + "': std entries must be positive");
  }
  c.class_count = field_or<std::size_t>(j, "class_count", 0);
  if (c.class_count == 0) throw ConfigError("model '" + c.name + "': class_count must be positive");
  c.softmax = field_or(j, "softmax", true);
  if (!c.is_remote() && !std::filesystem::exists(c.path_or_url)) {
    throw ConfigError("model '" + c.name + "': file not found: " + c.path_or_url);
  }
  return c;
}

std::vector<unsigned char> tensor_bytes(const ImageTensor& image) {
  const auto v = image.values();
  std::vector<unsigned char> out(v.size() * 4);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(v[i]);
    out[4 * i] = static_cast<unsigned char>(u);
    out[4 * i + 1] = static_cast<unsigned char>(u >> 8);
    out[4 * i + 2] = static_cast<unsigned char>(u >> 16);
    out[4 * i + 3] = static_cast<unsigned char>(u >> 24);
  }
  return out;
}

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const unsigned char> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kB64[n >> 18];
    out += kB64[(n >> 12) & 63];
    out += kB64[(n >> 6) & 63];
    out += kB64[n & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t n = bytes[i] << 16;
    out += kB64[n >> 18];
    out += kB64[(n >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kB64[n >> 18];
    out += kB64[(n >> 12) & 63];
    out += kB64[(n >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  auto value = [](char ch) -> int {
    if (ch >= 'A' && ch <= 'Z') return ch - 'A';
    if (ch >= 'a' && ch <= 'z') return ch - 'a' + 26;
    if (ch >= '0' && ch <= '9') return ch - '0' + 52;
    if (ch == '+') return 62;
    if (ch == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw FormatError("base64: length not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char ch = text[i + k];
      if (ch == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
        continue;
      }
      if (pad > 0) throw FormatError("base64: misplaced padding");
      v[k] = value(ch);
      if (v[k] < 0) throw FormatError("base64: invalid character");
    }
    const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<unsigned char>(n >> 16));
    if (pad < 2) out.push_back(static_cast<unsigned char>(n >> 8));
    if (pad < 1) out.push_back(static_cast<unsigned char>(n));
  }
  return out;
}

// ---- ONNX -----------------------------------------------------------------

struct OnnxOracle::Impl {
  cv::dnn::Net net;
  std::mutex mutex;  // cv::dnn::Net::forward is not reentrant
};

OnnxOracle::OnnxOracle(const ModelConfig& config) : config_(config), impl_(std::make_unique<Impl>()) {
  try {
    impl_->net = cv::dnn::readNetFromONNX(config_.path_or_url);
  } catch (const cv::Exception& e) {
    throw OracleError("model '" + config_.name + "': cannot load " + config_.path_or_url + ": " +
                      e.what());
  }
  if (impl_->net.empty()) throw OracleError("model '" + config_.name + "': empty network");
  impl_->net.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
  impl_->net.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
}

OnnxOracle::~OnnxOracle() = default;

std::vector<double> OnnxOracle::class_scores(const ImageTensor& input) const {
  if (input.channels() != 3) throw DimensionMismatch("onnx adapter expects 3-channel images");
  const ImageTensor& image =
      (input.height() == config_.input_size && input.width() == config_.input_size)
          ? input
          : resize_bilinear(input, config_.input_size, config_.input_size);
  const int h = image.height();
  const int w = image.width();
  const int dims[4] = {1, 3, h, w};
  cv::Mat blob(4, dims, CV_32F);
  auto* dst = blob.ptr<float>();
  for (int c = 0; c < 3; ++c) {
    const auto src = image.plane(c);
    const float m = static_cast<float>(config_.mean[c]);
    const float s = static_cast<float>(config_.std[c]);
    for (std::size_t i = 0; i < src.size(); ++i) dst[c * src.size() + i] = (src[i] - m) / s;
  }
  cv::Mat out;
  {
    std::lock_guard lock(impl_->mutex);
    try {
      impl_->net.setInput(blob);
      out = impl_->net.forward().clone();
    } catch (const cv::Exception& e) {
      throw OracleError("model '" + config_.name + "': inference failed: " + e.what());
    }
  }
  const std::size_t n = out.total();
  if (n != config_.class_count) {
    throw OracleError("model '" + config_.name + "': output has " + std::to_string(n) +
                      " values, expected " + std::to_string(config_.class_count));
  }
  const float* raw = out.ptr<float>();
  std::vector<double> scores(raw, raw + n);
  if (config_.softmax) {
    const double mx = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (double& v : scores) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : scores) v /= sum;
  }
  for (double& v : scores) v = std::clamp(v, 0.0, 1.0);
  check_confidences(scores, n, config_.name);
  return scores;
}

std::vector<double> OnnxOracle::score_batch(std::span<const ImageTensor> images,
                                            ClassLabel label) const {
  if (label.id >= config_.class_count) throw InvalidArgument("class id outside the model's range");
  std::vector<double> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(class_scores(img)[label.id]);
  return out;
}

// ---- remote ---------------------------------------------------------------

struct RemoteOracle::Impl {
  std::string base;
  std::string prefix;  // path component of the configured URL
};

RemoteOracle::RemoteOracle(const ModelConfig& config)
    : config_(config), impl_(std::make_unique<Impl>()) {
  const std::string& url = config_.path_or_url;
  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end + 3);
  impl_->base = path_start == std::string::npos ? url : url.substr(0, path_start);
  if (path_start != std::string::npos) {
    impl_->prefix = url.substr(path_start);
    while (!impl_->prefix.empty() && impl_->prefix.back() == '/') impl_->prefix.pop_back();
  }
}

RemoteOracle::~RemoteOracle() = default;

std::vector<double> RemoteOracle::score_batch(std::span<const ImageTensor> images,
                                              ClassLabel label) const {
  if (images.empty()) return {};
  json req;
  req["class_id"] = label.id;
  req["images"] = json::array();
  for (const auto& img : images) req["images"].push_back(base64_encode(tensor_bytes(img)));

  httplib::Client client(impl_->base);
  client.set_read_timeout(300, 0);
  auto res = client.Post(impl_->prefix + "/score", req.dump(), "application/json");
  if (!res) {
    throw OracleError("model '" + config_.name + "': request failed: " +
                      httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw OracleError("model '" + config_.name + "': HTTP " + std::to_string(res->status));
  }
  std::vector<double> out;
  try {
    out = json::parse(res->body).at("confidences").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw OracleError("model '" + config_.name + "': malformed response: " + e.what());
  }
  check_confidences(out, images.size(), config_.name);
  return out;
}

std::unique_ptr<ClassifierOracle> make_oracle(const ModelConfig& config, const GridSpec& grid) {
  if (config.synthetic) return make_synthetic(*config.synthetic, grid, config.name);
  if (config.is_remote()) return std::make_unique<RemoteOracle>(config);
  return std::make_unique<OnnxOracle>(config);
}

}  // namespace xprobe
