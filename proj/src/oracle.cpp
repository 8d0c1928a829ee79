#include "xprobe/oracle.hpp"

#include <cmath>

#include "xprobe/error.hpp"

namespace xprobe {

std::vector<double> ClassifierOracle::class_scores(const ImageTensor& image) const {
  std::vector<double> scores(class_count());
  const std::span<const ImageTensor> one(&image, 1);
  for (std::size_t c = 0; c < scores.size(); ++c) {
    const auto v = score_batch(one, ClassLabel{static_cast<std::uint32_t>(c)});
    check_confidences(v, 1, name());
    scores[c] = v.front();
  }
  return scores;
}

void check_confidences(const std::vector<double>& values, std::size_t expected,
                       const std::string& oracle_name) {
  if (values.size() != expected) {
    throw OracleError("oracle '" + oracle_name + "' returned " + std::to_string(values.size()) +
                      " confidences for " + std::to_string(expected) + " inputs");
  }
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw OracleError("oracle '" + oracle_name + "' returned confidence " + std::to_string(v) +
                        " outside [0,1]");
    }
  }
}

Prediction predicted_class(const ClassifierOracle& oracle, const ImageTensor& image) {
  const auto scores = oracle.class_scores(image);
  if (scores.empty()) throw OracleError("oracle '" + oracle.name() + "' has no classes");
  check_confidences(scores, oracle.class_count(), oracle.name());
  Prediction best{ClassLabel{0}, scores[0]};
  for (std::size_t c = 1; c < scores.size(); ++c) {
    if (scores[c] > best.confidence) best = {ClassLabel{static_cast<std::uint32_t>(c)}, scores[c]};
  }
  return best;
}

}  // namespace xprobe
