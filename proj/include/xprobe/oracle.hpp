#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xprobe/imaging.hpp"

namespace xprobe {

struct ClassLabel {
  std::uint32_t id = 0;

  friend auto operator<=>(const ClassLabel&, const ClassLabel&) = default;
};

/// Black-box classifier f: images in, class-conditional confidences out.
///
/// Implementations must be deterministic (identical image bytes give
/// identical confidences) and safe to call from several threads; adapters
/// wrapping a non-reentrant backend serialize internally.
class ClassifierOracle {
 public:
  virtual ~ClassifierOracle() = default;

  virtual const std::string& name() const = 0;
  virtual std::size_t class_count() const = 0;

  // Confidence of `label` for every image, each in [0, 1].
  virtual std::vector<double> score_batch(std::span<const ImageTensor> images,
                                          ClassLabel label) const = 0;

  // Confidence of every class for one image. The default asks score_batch
  // once per class.
  virtual std::vector<double> class_scores(const ImageTensor& image) const;

  // Called with every baseline image the engine derives, before any masked
  // image built from it is scored. Only occupancy-based test oracles care.
  virtual void register_baseline(const ImageTensor& /*baseline*/) const {}
};

struct Prediction {
  ClassLabel label;
  double confidence = 0.0;
};

// argmax over classes, ties to the lowest id.
Prediction predicted_class(const ClassifierOracle& oracle, const ImageTensor& image);

// Throws OracleError unless every value is finite and inside [0,1] and the
// count matches.
void check_confidences(const std::vector<double>& values, std::size_t expected,
                       const std::string& oracle_name);

}  // namespace xprobe
