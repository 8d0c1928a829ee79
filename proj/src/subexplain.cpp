#include "xprobe/subexplain.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <unordered_map>

#include "xprobe/error.hpp"

namespace xprobe {

void CountConfig::validate() const {
  if (thresholds.empty()) throw InvalidArgument("count: need at least one threshold");
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i] < thresholds[i - 1])) {
      throw InvalidArgument("count: thresholds must be strictly decreasing");
    }
  }
  if (!(stop_fraction >= 0.0)) throw InvalidArgument("count: stop fraction must be non-negative");
  if (stop_fraction > thresholds.back()) {
    throw InvalidArgument("count: stop fraction exceeds the smallest threshold");
  }
}

std::string to_string(Dedup dedup) { return dedup == Dedup::PerTree ? "per_tree" : "per_image"; }

Dedup parse_dedup(const std::string& text) {
  if (text == "per_image") return Dedup::PerImage;
  if (text == "per_tree") return Dedup::PerTree;
  throw InvalidArgument("unknown dedup mode '" + text + "'");
}

std::vector<SubExplanationNode> expand_subexplanations(SubsetScorer& scorer, const MseRecord& mse,
                                                       const CountConfig& config) {
  config.validate();
  if (mse.patches.empty()) throw InvalidArgument("expand: empty MSE");
  if (!(mse.patches.grid() == scorer.grid())) {
    throw DimensionMismatch("expand: MSE grid differs from scorer grid");
  }
  const double full = scorer.full_confidence();
  if (!(full > 0.0)) throw OracleError("expand: full-image confidence is zero");
  const GridSpec& grid = scorer.grid();

  std::vector<SubExplanationNode> out;
  std::unordered_map<std::uint64_t, bool> visited;  // bits -> expanded
  std::vector<std::uint64_t> frontier{mse.patches.bits()};

  // Level by level so each level is scored as one batch.
  while (!frontier.empty()) {
    std::vector<std::uint64_t> children;
    for (std::uint64_t parent : frontier) {
      for (std::uint64_t b = parent; b != 0; b &= b - 1) {
        const std::uint64_t child = parent & ~(b & (~b + 1));
        if (child == 0 || visited.contains(child)) continue;
        visited.emplace(child, false);
        children.push_back(child);
      }
    }
    std::vector<PatchSet> sets;
    sets.reserve(children.size());
    for (std::uint64_t c : children) sets.emplace_back(c, grid);
    const auto scores = scorer.score_many(sets);

    frontier.clear();
    for (std::size_t i = 0; i < children.size(); ++i) {
      const double ratio = scores[i] / full;
      if (ratio >= config.stop_fraction) {
        visited[children[i]] = true;
        out.push_back(SubExplanationNode{sets[i], ratio});
        frontier.push_back(children[i]);
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const SubExplanationNode& a, const SubExplanationNode& b) {
    return a.subset.bits() < b.subset.bits();
  });
  return out;
}

std::vector<SubExplanationNode> expand_subexplanations(const ClassifierOracle& oracle,
                                                       const ImageTensor& image,
                                                       const MseRecord& mse,
                                                       const CountConfig& config,
                                                       ConfidenceCache* cache,
                                                       const BaselineStyle& baseline) {
  SubsetScorer scorer(oracle, image, mse.patches.grid(), baseline, mse.label, cache);
  return expand_subexplanations(scorer, mse, config);
}

std::vector<SubExplanationNode> merge_trees(std::span<const std::vector<SubExplanationNode>> trees) {
  std::map<std::uint64_t, SubExplanationNode> unique;
  for (const auto& tree : trees) {
    for (const auto& node : tree) unique.try_emplace(node.subset.bits(), node);
  }
  std::vector<SubExplanationNode> out;
  out.reserve(unique.size());
  for (auto& [bits, node] : unique) out.push_back(node);
  return out;
}

SubExplanationCount count_above_thresholds(std::span<const std::vector<SubExplanationNode>> trees,
                                           const CountConfig& config,
                                           const std::string& image_id) {
  config.validate();
  SubExplanationCount result{image_id, std::vector<std::size_t>(config.thresholds.size(), 0),
                             trees.size()};
  auto tally = [&](const std::vector<SubExplanationNode>& nodes) {
    for (const auto& node : nodes) {
      for (std::size_t t = 0; t < config.thresholds.size(); ++t) {
        if (node.confidence_ratio >= config.thresholds[t]) ++result.counts[t];
      }
    }
  };
  if (config.dedup == Dedup::PerImage) {
    tally(merge_trees(trees));
  } else {
    for (const auto& tree : trees) tally(tree);
  }
  return result;
}

SubExplanationCount brute_force_counts(const ClassifierOracle& oracle, const ImageTensor& image,
                                       const GridSpec& grid, double p_h,
                                       const CountConfig& config, ConfidenceCache* cache,
                                       const BaselineStyle& baseline,
                                       const std::string& image_id) {
  config.validate();
  const int n = grid.patch_count();
  if (n > kMaxBruteForceCountPatches) {
    throw InvalidArgument("brute force counts: grid has " + std::to_string(n) +
                          " patches (limit " + std::to_string(kMaxBruteForceCountPatches) + ")");
  }
  const auto roots = brute_force_mses(oracle, image, grid, p_h, cache, baseline, image_id);

  const Prediction pred = predicted_class(oracle, image);
  SubsetScorer scorer(oracle, image, grid, baseline, pred.label, cache);
  const double full = scorer.full_confidence();
  const std::uint64_t count = std::uint64_t{1} << n;
  std::vector<PatchSet> all;
  for (std::uint64_t m = 1; m < count; ++m) all.emplace_back(m, grid);
  const auto scores = scorer.score_many(all);
  auto ratio = [&](std::uint64_t m) { return scores[m - 1] / full; };

  // reach[m]: m is a node of some root's tree, i.e. m = root minus one patch,
  // or m = p minus one patch for a reached p at or above the stop fraction.
  std::vector<char> reach(count, 0);
  std::vector<char> counted(count, 0);
  for (const auto& root : roots) {
    std::fill(reach.begin(), reach.end(), 0);
    const std::uint64_t r = root.patches.bits();
    // Supersets have larger numeric masks, so walk submasks of r downward.
    std::vector<std::uint64_t> subs;
    for (std::uint64_t s = r;; s = (s - 1) & r) {
      subs.push_back(s);
      if (s == 0) break;
    }
    for (std::uint64_t s : subs) {  // descending numeric order
      if (s == 0) continue;
      bool expandable = (s == r) || (reach[s] && ratio(s) >= config.stop_fraction);
      if (!expandable) continue;
      for (int i = 0; i < n; ++i) {
        const std::uint64_t bit = std::uint64_t{1} << i;
        if ((s & bit) != 0 && (s & ~bit) != 0) reach[s & ~bit] = 1;
      }
    }
    for (std::uint64_t s : subs) {
      if (s != 0 && s != r && reach[s] && ratio(s) >= config.stop_fraction) counted[s] = 1;
    }
  }

  SubExplanationCount result{image_id, std::vector<std::size_t>(config.thresholds.size(), 0),
                             roots.size()};
  for (std::uint64_t m = 1; m < count; ++m) {
    if (!counted[m]) continue;
    for (std::size_t t = 0; t < config.thresholds.size(); ++t) {
      if (ratio(m) >= config.thresholds[t]) ++result.counts[t];
    }
  }
  return result;
}

}  // namespace xprobe
