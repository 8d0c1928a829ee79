#include "xprobe/scoring.hpp"

#include <algorithm>
#include <unordered_set>

#include "xprobe/error.hpp"

namespace xprobe {

SubsetScorer::SubsetScorer(const ClassifierOracle& oracle, const ImageTensor& image,
                           const GridSpec& grid, const BaselineStyle& baseline, ClassLabel label,
                           ConfidenceCache* cache, std::size_t batch_size)
    : oracle_(oracle),
      image_(image),
      grid_(grid),
      style_(baseline),
      label_(label),
      cache_(cache),
      batch_size_(std::max<std::size_t>(batch_size, 1)),
      baseline_(make_baseline(image, baseline)),
      image_hash_(content_hash(image)),
      oracle_hash_(hash_string(oracle.name())),
      baseline_hash_(hash_string(baseline.tag())) {
  if (grid.image_height() != image.height() || grid.image_width() != image.width()) {
    throw DimensionMismatch("scorer: grid does not match image dimensions");
  }
  if (label.id >= oracle.class_count()) {
    throw InvalidArgument("scorer: class id " + std::to_string(label.id) + " out of range");
  }
  oracle_.register_baseline(baseline_);
}

CacheKey SubsetScorer::key_for(std::uint64_t bits) const {
  return CacheKey{oracle_hash_,
                  image_hash_,
                  baseline_hash_,
                  static_cast<std::uint32_t>(grid_.rows()) << 16 | static_cast<std::uint32_t>(grid_.cols()),
                  bits,
                  label_.id};
}

void SubsetScorer::check_grid(const PatchSet& patches) const {
  if (!(patches.grid() == grid_)) {
    throw DimensionMismatch("scorer: patch set belongs to a different grid");
  }
}

double SubsetScorer::score(const PatchSet& patches) {
  return score_many(std::span<const PatchSet>(&patches, 1)).front();
}

double SubsetScorer::full_confidence() { return score(PatchSet::all(grid_)); }

std::vector<double> SubsetScorer::score_many(std::span<const PatchSet> subsets) {
  std::vector<std::uint64_t> pending;
  std::unordered_set<std::uint64_t> queued;
  for (const PatchSet& p : subsets) {
    check_grid(p);
    const std::uint64_t bits = p.bits();
    if (memo_.contains(bits)) continue;
    if (cache_ != nullptr) {
      if (auto hit = cache_->find(key_for(bits))) {
        memo_.emplace(bits, *hit);
        continue;
      }
    }
    if (queued.insert(bits).second) pending.push_back(bits);
  }

  for (std::size_t start = 0; start < pending.size(); start += batch_size_) {
    const std::size_t end = std::min(pending.size(), start + batch_size_);
    std::vector<ImageTensor> batch;
    batch.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(compose_masked(image_, baseline_, PatchSet(pending[i], grid_)));
    }
    const auto scores = oracle_.score_batch(batch, label_);
    check_confidences(scores, batch.size(), oracle_.name());
    oracle_calls_ += batch.size();
    for (std::size_t i = start; i < end; ++i) {
      double v = scores[i - start];
      if (cache_ != nullptr) v = cache_->insert(key_for(pending[i]), v);
      memo_.emplace(pending[i], v);
    }
  }

  std::vector<double> out;
  out.reserve(subsets.size());
  for (const PatchSet& p : subsets) out.push_back(memo_.at(p.bits()));
  return out;
}

double score_subset(const ClassifierOracle& oracle, const ImageTensor& image,
                    const BaselineStyle& baseline, const PatchSet& patches, ClassLabel label,
                    ConfidenceCache* cache) {
  SubsetScorer scorer(oracle, image, patches.grid(), baseline, label, cache);
  return scorer.score(patches);
}

std::vector<double> score_batch_subsets(const ClassifierOracle& oracle, const ImageTensor& image,
                                        const BaselineStyle& baseline,
                                        std::span<const PatchSet> subsets, ClassLabel label,
                                        ConfidenceCache* cache, std::size_t batch_size) {
  if (subsets.empty()) return {};
  SubsetScorer scorer(oracle, image, subsets.front().grid(), baseline, label, cache, batch_size);
  return scorer.score_many(subsets);
}

std::vector<double> score_images_cached(const ClassifierOracle& oracle,
                                        std::span<const ImageTensor> images, ClassLabel label,
                                        ConfidenceCache* cache, std::size_t batch_size) {
  batch_size = std::max<std::size_t>(batch_size, 1);
  const std::uint64_t oracle_hash = hash_string(oracle.name());
  std::vector<double> out(images.size());
  std::vector<CacheKey> keys(images.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < images.size(); ++i) {
    keys[i] = CacheKey{oracle_hash, content_hash(images[i]), 0, 0, ~std::uint64_t{0}, label.id};
    if (cache != nullptr) {
      if (auto hit = cache->find(keys[i])) {
        out[i] = *hit;
        continue;
      }
    }
    pending.push_back(i);
  }
  for (std::size_t start = 0; start < pending.size(); start += batch_size) {
    const std::size_t end = std::min(pending.size(), start + batch_size);
    std::vector<ImageTensor> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(images[pending[i]]);
    const auto scores = oracle.score_batch(batch, label);
    check_confidences(scores, batch.size(), oracle.name());
    for (std::size_t i = start; i < end; ++i) {
      double v = scores[i - start];
      if (cache != nullptr) v = cache->insert(keys[pending[i]], v);
      out[pending[i]] = v;
    }
  }
  return out;
}

}  // namespace xprobe
