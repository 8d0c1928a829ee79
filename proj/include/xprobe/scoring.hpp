#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "xprobe/cache.hpp"
#include "xprobe/imaging.hpp"
#include "xprobe/oracle.hpp"

namespace xprobe {

inline constexpr std::size_t kDefaultBatchSize = 32;

/// f_c(N) for one (oracle, image, baseline, grid, class): scores patch
/// subsets of the image, memoized locally and through an optional shared
/// cache. Not thread-safe; one scorer per image pipeline.
class SubsetScorer {
 public:
  SubsetScorer(const ClassifierOracle& oracle, const ImageTensor& image, const GridSpec& grid,
               const BaselineStyle& baseline, ClassLabel label, ConfidenceCache* cache = nullptr,
               std::size_t batch_size = kDefaultBatchSize);

  double score(const PatchSet& patches);
  // Element-wise identical to score(); uncached subsets are sent to the
  // oracle in batches of batch_size.
  std::vector<double> score_many(std::span<const PatchSet> subsets);

  // Confidence of the unmasked image, f_c(I).
  double full_confidence();

  const ImageTensor& image() const { return image_; }
  const ImageTensor& baseline_image() const { return baseline_; }
  const GridSpec& grid() const { return grid_; }
  ClassLabel label() const { return label_; }
  std::uint64_t image_hash() const { return image_hash_; }
  // Number of images actually sent to the oracle by this scorer.
  std::size_t oracle_calls() const { return oracle_calls_; }

 private:
  CacheKey key_for(std::uint64_t bits) const;
  void check_grid(const PatchSet& patches) const;

  const ClassifierOracle& oracle_;
  const ImageTensor& image_;
  GridSpec grid_;
  BaselineStyle style_;
  ClassLabel label_;
  ConfidenceCache* cache_;
  std::size_t batch_size_;
  ImageTensor baseline_;
  std::uint64_t image_hash_;
  std::uint64_t oracle_hash_;
  std::uint64_t baseline_hash_;
  std::unordered_map<std::uint64_t, double> memo_;
  std::size_t oracle_calls_ = 0;
};

// Confidence of compose_masked(image, make_baseline(image, baseline), patches).
double score_subset(const ClassifierOracle& oracle, const ImageTensor& image,
                    const BaselineStyle& baseline, const PatchSet& patches, ClassLabel label,
                    ConfidenceCache* cache);

std::vector<double> score_batch_subsets(const ClassifierOracle& oracle, const ImageTensor& image,
                                        const BaselineStyle& baseline,
                                        std::span<const PatchSet> subsets, ClassLabel label,
                                        ConfidenceCache* cache,
                                        std::size_t batch_size = kDefaultBatchSize);

// Scores arbitrary images (perturbation curves, calibration) with caching
// keyed on image content.
std::vector<double> score_images_cached(const ClassifierOracle& oracle,
                                        std::span<const ImageTensor> images, ClassLabel label,
                                        ConfidenceCache* cache,
                                        std::size_t batch_size = kDefaultBatchSize);

}  // namespace xprobe
