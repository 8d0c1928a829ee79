#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "xprobe/synthetic.hpp"

namespace xprobe {

/// Model entry of a run config:
///   {"name", "path_or_url", "input_size", "mean": [3], "std": [3],
///    "class_count", "softmax"}
/// or, for a synthetic stand-in, {"name", "synthetic": {...}}.
struct ModelConfig {
  std::string name;
  std::string path_or_url;
  int input_size = 224;
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};
  std::size_t class_count = 0;
  // Apply softmax to raw outputs (set false for models ending in softmax).
  bool softmax = true;
  std::optional<SyntheticOracleSpec> synthetic;

  bool is_remote() const;
};

// Throws ConfigError with the offending field in the message.
ModelConfig parse_model_config(const nlohmann::json& j, const GridSpec& grid);
// The synthetic block: {"kind": "conjunctive"|"disjunctive"|"additive", ...}.
SyntheticOracleSpec parse_synthetic_spec(const nlohmann::json& j, const GridSpec& grid);
nlohmann::json synthetic_spec_json(const SyntheticOracleSpec& spec);

/// ONNX classifier run through OpenCV's dnn module. Images are normalized
/// per channel, run one at a time (bit-stable regardless of batching) and
/// the selected class read from the (optionally softmaxed) output.
class OnnxOracle final : public ClassifierOracle {
 public:
  explicit OnnxOracle(const ModelConfig& config);
  ~OnnxOracle() override;

  const std::string& name() const override { return config_.name; }
  std::size_t class_count() const override { return config_.class_count; }
  std::vector<double> score_batch(std::span<const ImageTensor> images,
                                  ClassLabel label) const override;
  std::vector<double> class_scores(const ImageTensor& image) const override;

 private:
  struct Impl;
  ModelConfig config_;
  std::unique_ptr<Impl> impl_;
};

/// Client for a scoring service: POST /score with
/// {"class_id": c, "images": [base64 LE float32 CHW]} -> {"confidences": [...]}.
class RemoteOracle final : public ClassifierOracle {
 public:
  explicit RemoteOracle(const ModelConfig& config);
  ~RemoteOracle() override;

  const std::string& name() const override { return config_.name; }
  std::size_t class_count() const override { return config_.class_count; }
  std::vector<double> score_batch(std::span<const ImageTensor> images,
                                  ClassLabel label) const override;

 private:
  struct Impl;
  ModelConfig config_;
  std::unique_ptr<Impl> impl_;
};

std::unique_ptr<ClassifierOracle> make_oracle(const ModelConfig& config, const GridSpec& grid);

std::string base64_encode(std::span<const unsigned char> bytes);
std::vector<unsigned char> base64_decode(const std::string& text);
// Little-endian float32 CHW bytes of an image.
std::vector<unsigned char> tensor_bytes(const ImageTensor& image);

}  // namespace xprobe
