#include "xprobe/msesearch.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_set>

#include "xprobe/error.hpp"

namespace xprobe {

void BeamConfig::validate() const {
  if (!(p_h > 0.0 && p_h <= 1.0)) throw InvalidArgument("beam: p_h must lie in (0,1]");
  if (beam_width < 1) throw InvalidArgument("beam: width must be at least 1");
  if (max_patch_count && *max_patch_count < 1) {
    throw InvalidArgument("beam: max_patch_count must be at least 1");
  }
  baseline.validate();
}

std::string to_string(Minimality mode) {
  return mode == Minimality::Exhaustive ? "exhaustive" : "immediate";
}

Minimality parse_minimality(const std::string& text) {
  if (text == "immediate" || text == "immediate_subsets") return Minimality::ImmediateSubsets;
  if (text == "exhaustive") return Minimality::Exhaustive;
  throw InvalidArgument("unknown minimality mode '" + text + "'");
}

bool check_minimality(SubsetScorer& scorer, const PatchSet& patches, double threshold,
                      Minimality mode) {
  if (patches.empty()) throw InvalidArgument("minimality: empty patch set");
  if (patches.size() == 1) return true;
  std::vector<PatchSet> subsets;
  if (mode == Minimality::ImmediateSubsets) {
    for (int i : patches.indices()) subsets.push_back(patches.without(i));
  } else {
    if (patches.size() > kMaxExhaustiveSize) {
      throw InvalidArgument("minimality: exhaustive check limited to " +
                            std::to_string(kMaxExhaustiveSize) + " patches");
    }
    // Walk all non-empty proper submasks of the set.
    const std::uint64_t full = patches.bits();
    for (std::uint64_t sub = (full - 1) & full; sub != 0; sub = (sub - 1) & full) {
      subsets.emplace_back(sub, patches.grid());
    }
  }
  const auto scores = scorer.score_many(subsets);
  return std::all_of(scores.begin(), scores.end(), [threshold](double s) { return s < threshold; });
}

bool check_minimality(const ClassifierOracle& oracle, const ImageTensor& image,
                      const PatchSet& patches, double p_h, Minimality mode,
                      ConfidenceCache* cache, const BaselineStyle& baseline) {
  const Prediction pred = predicted_class(oracle, image);
  SubsetScorer scorer(oracle, image, patches.grid(), baseline, pred.label, cache);
  return check_minimality(scorer, patches, p_h * scorer.full_confidence(), mode);
}

namespace {

struct Candidate {
  std::uint64_t bits;
  double confidence;
};

}  // namespace

std::vector<MseRecord> find_mses(SubsetScorer& scorer, const BeamConfig& config,
                                 const std::string& image_id) {
  config.validate();
  const GridSpec& grid = scorer.grid();
  const int n = grid.patch_count();
  if (n < 1) throw InvalidArgument("beam: empty grid");
  const int max_level = std::min(n, config.max_patch_count.value_or(n));

  const double full = scorer.full_confidence();
  const double threshold = config.p_h * full;

  std::vector<MseRecord> records;
  auto done = [&] { return config.max_mses && records.size() >= *config.max_mses; };

  std::vector<std::uint64_t> level;
  for (int i = 0; i < n; ++i) level.push_back(std::uint64_t{1} << i);

  for (int size = 1; size <= max_level && !level.empty() && !done(); ++size) {
    std::vector<PatchSet> sets;
    sets.reserve(level.size());
    for (std::uint64_t b : level) sets.emplace_back(b, grid);
    const auto scores = scorer.score_many(sets);

    std::vector<Candidate> ranked(level.size());
    for (std::size_t i = 0; i < level.size(); ++i) ranked[i] = {level[i], scores[i]};
    std::sort(ranked.begin(), ranked.end(), [](const Candidate& a, const Candidate& b) {
      return a.confidence != b.confidence ? a.confidence > b.confidence : a.bits < b.bits;
    });

    std::vector<std::uint64_t> beam;
    for (const Candidate& c : ranked) {
      if (c.confidence >= threshold) {
        if (done()) continue;
        const PatchSet set(c.bits, grid);
        if (check_minimality(scorer, set, threshold, config.minimality)) {
          records.push_back(MseRecord{image_id, scorer.label(), set, c.confidence, full,
                                      config.minimality});
        }
      } else if (beam.size() < config.beam_width) {
        beam.push_back(c.bits);
      }
    }

    // Expand by one absent patch; deduplicate, keep first-seen order.
    std::vector<std::uint64_t> next;
    std::unordered_set<std::uint64_t> seen;
    for (std::uint64_t b : beam) {
      for (int i = 0; i < n; ++i) {
        const std::uint64_t bit = std::uint64_t{1} << i;
        if ((b & bit) == 0 && seen.insert(b | bit).second) next.push_back(b | bit);
      }
    }
    level = std::move(next);
  }

  std::sort(records.begin(), records.end(), [](const MseRecord& a, const MseRecord& b) {
    const int sa = a.patches.size();
    const int sb = b.patches.size();
    return sa != sb ? sa < sb : a.patches.bits() < b.patches.bits();
  });
  return records;
}

std::vector<MseRecord> find_mses(const ClassifierOracle& oracle, const ImageTensor& image,
                                 const GridSpec& grid, const BeamConfig& config,
                                 ConfidenceCache* cache, const std::string& image_id) {
  config.validate();
  const Prediction pred = predicted_class(oracle, image);
  SubsetScorer scorer(oracle, image, grid, config.baseline, pred.label, cache, config.batch_size);
  return find_mses(scorer, config, image_id);
}

std::vector<MseRecord> brute_force_mses(const ClassifierOracle& oracle, const ImageTensor& image,
                                        const GridSpec& grid, double p_h, ConfidenceCache* cache,
                                        const BaselineStyle& baseline,
                                        const std::string& image_id) {
  const int n = grid.patch_count();
  if (n > kMaxBruteForcePatches) {
    throw InvalidArgument("brute force: grid has " + std::to_string(n) + " patches (limit " +
                          std::to_string(kMaxBruteForcePatches) + ")");
  }
  if (!(p_h > 0.0 && p_h <= 1.0)) throw InvalidArgument("brute force: p_h must lie in (0,1]");
  const Prediction pred = predicted_class(oracle, image);
  SubsetScorer scorer(oracle, image, grid, baseline, pred.label, cache);
  const double full = scorer.full_confidence();
  const double threshold = p_h * full;

  const std::uint64_t count = std::uint64_t{1} << n;
  std::vector<PatchSet> all;
  all.reserve(count - 1);
  for (std::uint64_t m = 1; m < count; ++m) all.emplace_back(m, grid);
  const auto scores = scorer.score_many(all);

  // covered[m]: some non-empty subset of m (m included) reaches threshold.
  std::vector<char> above(count, 0);
  std::vector<char> covered(count, 0);
  for (std::uint64_t m = 1; m < count; ++m) above[m] = scores[m - 1] >= threshold;

  std::vector<MseRecord> out;
  // Masks in increasing numeric order visit every subset before its supersets.
  for (std::uint64_t m = 1; m < count; ++m) {
    bool below_covered = false;
    for (std::uint64_t b = m; b != 0; b &= b - 1) {
      const std::uint64_t sub = m & ~(b & (~b + 1));
      if (sub != 0 && covered[sub]) {
        below_covered = true;
        break;
      }
    }
    covered[m] = above[m] || below_covered;
    if (above[m] && !below_covered) {
      out.push_back(MseRecord{image_id, pred.label, PatchSet(m, grid), scores[m - 1], full,
                              Minimality::Exhaustive});
    }
  }
  std::sort(out.begin(), out.end(), [](const MseRecord& a, const MseRecord& b) {
    const int sa = a.patches.size();
    const int sb = b.patches.size();
    return sa != sb ? sa < sb : a.patches.bits() < b.patches.bits();
  });
  return out;
}

}  // namespace xprobe
