#include "xprobe/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "xprobe/error.hpp"
#include "xprobe/scoring.hpp"

namespace xprobe {

void PerturbationCurve::validate() const {
  if (steps < 1) throw InvalidArgument("curve: need at least one step");
  if (confidences.size() != static_cast<std::size_t>(steps) + 1) {
    throw InvalidArgument("curve: expected steps + 1 confidences");
  }
  for (double c : confidences) {
    if (!std::isfinite(c) || c < 0.0 || c > 1.0) {
      throw InvalidArgument("curve: confidence outside [0,1]");
    }
  }
}

PerturbationCurve perturbation_curve(const ClassifierOracle& oracle, const ImageTensor& image,
                                     const BaselineStyle& baseline, const AttributionMap& map,
                                     int steps, ClassLabel label, Direction direction,
                                     ConfidenceCache* cache, Upsampling upsampling) {
  if (steps < 1) throw InvalidArgument("curve: need at least one step");
  const ImageTensor base = make_baseline(image, baseline);
  oracle.register_baseline(base);
  const PixelRanking ranking(map, image.height(), image.width(), upsampling);
  std::vector<ImageTensor> frames;
  frames.reserve(static_cast<std::size_t>(steps) + 1);
  for (int t = 0; t <= steps; ++t) {
    const std::size_t count = ranking.count_for(static_cast<double>(t) / steps);
    frames.push_back(compose_ranked(image, base, ranking, count, direction));
  }
  PerturbationCurve curve{direction, steps, score_images_cached(oracle, frames, label, cache)};
  curve.validate();
  return curve;
}

double auc(const PerturbationCurve& curve) {
  curve.validate();
  // Summing deviations from the first value keeps a flat curve exact; the
  // compensated sum keeps long curves accurate.
  const auto& c = curve.confidences;
  const double origin = c.front();
  double sum = 0.0;
  double carry = 0.0;
  auto add = [&](double v) {
    const double t = sum + v;
    carry += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  };
  for (std::size_t t = 0; t + 1 < c.size(); ++t) {
    add(c[t] - origin);
    add(c[t + 1] - origin);
  }
  const double value = origin + (sum + carry) / (2.0 * curve.steps);
  const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
  return std::clamp(value, *lo, *hi);
}

ModelCalibration calibrate_model(const ClassifierOracle& oracle,
                                 std::span<const ImageTensor> dataset,
                                 const BaselineStyle& baseline, ConfidenceCache* cache,
                                 const std::string& dataset_id) {
  if (dataset.empty()) throw InvalidArgument("calibration: empty dataset");
  double top1 = 0.0;
  double blurred = 0.0;
  for (const auto& image : dataset) {
    const Prediction pred = predicted_class(oracle, image);
    const ImageTensor base = make_baseline(image, baseline);
    oracle.register_baseline(base);
    const std::vector<ImageTensor> one{base};
    top1 += pred.confidence;
    blurred += score_images_cached(oracle, one, pred.label, cache).front();
  }
  const double n = static_cast<double>(dataset.size());
  return ModelCalibration{oracle.name(), top1 / n, blurred / n, dataset_id};
}

double normalize_score(double score, const ModelCalibration& calibration) {
  if (!(calibration.top1 > calibration.blurred)) {
    throw DegenerateCalibration("model '" + calibration.model + "': top-1 average " +
                                std::to_string(calibration.top1) +
                                " does not exceed baseline average " +
                                std::to_string(calibration.blurred));
  }
  return (score - calibration.blurred) / (calibration.top1 - calibration.blurred);
}

void RandomizedMapConfig::validate() const {
  if (n_masks < 1) throw InvalidArgument("randomized map: need at least one mask");
  if (!(keep_prob > 0.0 && keep_prob < 1.0)) {
    throw InvalidArgument("randomized map: keep probability must lie in (0,1)");
  }
  baseline.validate();
}

AttributionMap generate_randomized_map(const ClassifierOracle& oracle, const ImageTensor& image,
                                       ClassLabel label, const RandomizedMapConfig& config,
                                       ConfidenceCache* cache) {
  config.validate();
  const GridSpec cells(image.height(), image.width(), config.cell_rows, config.cell_cols);
  const int n = cells.patch_count();

  // 53-bit uniforms straight from the engine so the stream is identical
  // across standard libraries.
  std::mt19937_64 rng(config.seed);
  std::vector<PatchSet> masks;
  masks.reserve(static_cast<std::size_t>(config.n_masks));
  for (int i = 0; i < config.n_masks; ++i) {
    std::uint64_t bits = 0;
    for (int c = 0; c < n; ++c) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      if (u < config.keep_prob) bits |= std::uint64_t{1} << c;
    }
    masks.emplace_back(bits, cells);
  }

  SubsetScorer scorer(oracle, image, cells, config.baseline, label, cache, config.batch_size);
  const auto scores = scorer.score_many(masks);

  // Each cell averages the scores of the masks that kept it (n * keep_prob
  // of them in expectation). Scores are accumulated relative to the first
  // one so that a constant oracle gives an exactly flat map.
  const double origin = scores.front();
  std::vector<double> raw(static_cast<std::size_t>(n), 0.0);
  std::vector<std::size_t> kept(static_cast<std::size_t>(n), 0);
  double total = 0.0;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const double d = scores[i] - origin;
    total += d;
    for (int c : masks[i].indices()) {
      raw[static_cast<std::size_t>(c)] += d;
      ++kept[static_cast<std::size_t>(c)];
    }
  }
  const double mean = total / static_cast<double>(masks.size());
  for (std::size_t c = 0; c < raw.size(); ++c) {
    raw[c] = origin + (kept[c] ? raw[c] / static_cast<double>(kept[c]) : mean);
  }

  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  std::vector<float> values(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    values[i] = hi > lo ? static_cast<float>((raw[i] - lo) / (hi - lo)) : 0.5f;
  }
  return AttributionMap(config.cell_rows, config.cell_cols, std::move(values),
                        oracle.name() + "/randomized");
}

}  // namespace xprobe
