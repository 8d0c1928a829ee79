#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "xprobe/cache.hpp"
#include "xprobe/oracle.hpp"
#include "xprobe/scoring.hpp"

namespace xprobe {

enum class Minimality {
  // Every subset with one patch removed scores below threshold.
  ImmediateSubsets,
  // Every non-empty proper subset scores below threshold (|N| <= 20).
  Exhaustive,
};

inline constexpr int kMaxExhaustiveSize = 20;

struct BeamConfig {
  double p_h = 0.9;
  std::size_t beam_width = 5;
  std::optional<int> max_patch_count;  // default: every patch of the grid
  std::optional<std::size_t> max_mses;  // default: unlimited
  BaselineStyle baseline;
  Minimality minimality = Minimality::ImmediateSubsets;
  std::size_t batch_size = kDefaultBatchSize;

  void validate() const;
};

/// One Minimal Sufficient Explanation: a patch set whose masked image keeps
/// at least p_h of the full-image confidence while its subsets do not.
struct MseRecord {
  std::string image_id;
  ClassLabel label;
  PatchSet patches;
  double confidence = 0.0;
  double full_confidence = 0.0;
  Minimality minimality = Minimality::ImmediateSubsets;

  friend bool operator==(const MseRecord&, const MseRecord&) = default;
};

// Beam search over patch subsets of growing size. Candidates reaching
// p_h * f_c(I) leave the beam and are recorded when minimal; the beam is
// refilled from the remaining candidates. Sorted by (size, bitmask).
std::vector<MseRecord> find_mses(const ClassifierOracle& oracle, const ImageTensor& image,
                                 const GridSpec& grid, const BeamConfig& config,
                                 ConfidenceCache* cache, const std::string& image_id = {});

// Same search driven by an existing scorer (its label is the target class).
std::vector<MseRecord> find_mses(SubsetScorer& scorer, const BeamConfig& config,
                                 const std::string& image_id = {});

bool check_minimality(SubsetScorer& scorer, const PatchSet& patches, double threshold,
                      Minimality mode);

// Minimality against p_h * f_c(I) for the image's predicted class.
bool check_minimality(const ClassifierOracle& oracle, const ImageTensor& image,
                      const PatchSet& patches, double p_h, Minimality mode,
                      ConfidenceCache* cache, const BaselineStyle& baseline = {});

inline constexpr int kMaxBruteForcePatches = 16;

// Every subset satisfying the MSE definition with exhaustive minimality,
// found by scoring all 2^n - 1 subsets (n <= 16).
std::vector<MseRecord> brute_force_mses(const ClassifierOracle& oracle, const ImageTensor& image,
                                        const GridSpec& grid, double p_h, ConfidenceCache* cache,
                                        const BaselineStyle& baseline = {},
                                        const std::string& image_id = {});

std::string to_string(Minimality mode);
Minimality parse_minimality(const std::string& text);

}  // namespace xprobe
