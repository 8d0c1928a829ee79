#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xprobe/attribution.hpp"
#include "xprobe/cache.hpp"
#include "xprobe/oracle.hpp"

namespace xprobe {

inline constexpr int kDefaultSteps = 100;

// Confidences after t = 0..T perturbation steps.
struct PerturbationCurve {
  Direction direction = Direction::Insertion;
  int steps = 0;
  std::vector<double> confidences;  // steps + 1 entries

  void validate() const;
};

// Dataset averages used to put different models on one scale:
// top1 = mean top-1 confidence, blurred = mean confidence (same class) on
// the fully baselined image.
struct ModelCalibration {
  std::string model;
  double top1 = 0.0;
  double blurred = 0.0;
  std::string dataset_id;
};

// confidences[t] scores compose_fractional(image, baseline, map, t/T, direction).
PerturbationCurve perturbation_curve(const ClassifierOracle& oracle, const ImageTensor& image,
                                     const BaselineStyle& baseline, const AttributionMap& map,
                                     int steps, ClassLabel label, Direction direction,
                                     ConfidenceCache* cache,
                                     Upsampling upsampling = Upsampling::Nearest);

// Trapezoid rule: (1/2T) * sum_{t<T} (c_t + c_{t+1}).
double auc(const PerturbationCurve& curve);

ModelCalibration calibrate_model(const ClassifierOracle& oracle,
                                 std::span<const ImageTensor> dataset,
                                 const BaselineStyle& baseline, ConfidenceCache* cache,
                                 const std::string& dataset_id = {});

// (s - blurred) / (top1 - blurred); not clipped, may exceed 1.
double normalize_score(double score, const ModelCalibration& calibration);

struct RandomizedMapConfig {
  int cell_rows = 7;
  int cell_cols = 7;
  int n_masks = 2000;
  double keep_prob = 0.5;
  std::uint64_t seed = 0;
  BaselineStyle baseline;
  std::size_t batch_size = 32;

  void validate() const;
};

// Gradient-free saliency: random cell masks weighted by the confidence they
// retain, min-max normalized (all 0.5 when flat). Output is cell_rows x
// cell_cols.
AttributionMap generate_randomized_map(const ClassifierOracle& oracle, const ImageTensor& image,
                                       ClassLabel label, const RandomizedMapConfig& config,
                                       ConfidenceCache* cache);

}  // namespace xprobe
