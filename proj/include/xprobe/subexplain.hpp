#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "xprobe/msesearch.hpp"

namespace xprobe {

enum class Dedup {
  PerImage,  // a subset reachable from several roots counts once
  PerTree,   // counted once under every root that reaches it
};

struct CountConfig {
  std::vector<double> thresholds{0.9, 0.8, 0.7, 0.6, 0.5};
  double stop_fraction = 0.5;
  Dedup dedup = Dedup::PerImage;

  void validate() const;
};

// A proper subset of an MSE with its confidence relative to f_c(I).
struct SubExplanationNode {
  PatchSet subset;
  double confidence_ratio = 0.0;

  friend bool operator==(const SubExplanationNode&, const SubExplanationNode&) = default;
};

struct SubExplanationCount {
  std::string image_id;
  std::vector<std::size_t> counts;  // one per threshold, config order
  std::size_t mse_count = 0;

  friend bool operator==(const SubExplanationCount&, const SubExplanationCount&) = default;
};

// Breadth-first single-patch deletions from the MSE root. Nodes below
// stop_fraction are scored but neither expanded nor returned; the root and
// the empty set are never returned. Sorted by bitmask.
std::vector<SubExplanationNode> expand_subexplanations(SubsetScorer& scorer, const MseRecord& mse,
                                                       const CountConfig& config);

std::vector<SubExplanationNode> expand_subexplanations(const ClassifierOracle& oracle,
                                                       const ImageTensor& image,
                                                       const MseRecord& mse,
                                                       const CountConfig& config,
                                                       ConfidenceCache* cache,
                                                       const BaselineStyle& baseline = {});

SubExplanationCount count_above_thresholds(std::span<const std::vector<SubExplanationNode>> trees,
                                           const CountConfig& config,
                                           const std::string& image_id = {});

// Distinct subsets across trees, sorted by bitmask.
std::vector<SubExplanationNode> merge_trees(std::span<const std::vector<SubExplanationNode>> trees);

inline constexpr int kMaxBruteForceCountPatches = 12;

// Independent enumeration: all subsets are scored, MSE roots come from the
// brute-force definition, and reachability under the stop rule is computed
// over the deletion DAG. PerImage dedup.
SubExplanationCount brute_force_counts(const ClassifierOracle& oracle, const ImageTensor& image,
                                       const GridSpec& grid, double p_h,
                                       const CountConfig& config, ConfidenceCache* cache,
                                       const BaselineStyle& baseline = {},
                                       const std::string& image_id = {});

std::string to_string(Dedup dedup);
Dedup parse_dedup(const std::string& text);

}  // namespace xprobe
