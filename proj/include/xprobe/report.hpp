#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xprobe/subexplain.hpp"

namespace xprobe {

// MSEs and sub-explanation counts of one image under one model.
struct ImageResult {
  std::string image_id;
  std::vector<MseRecord> mses;
  std::optional<SubExplanationCount> counts;
};

/// Dataset summary for one model, laid out like the usual results table:
/// mean / sample std / median of per-image MSE counts, and the mean number of
/// sub-explanations above each threshold. Images without any MSE are
/// excluded from the statistics and counted in `unexplained`.
struct MseStats {
  std::string model;
  bool empty = true;  // no explained image
  std::size_t images = 0;
  std::size_t explained = 0;
  std::size_t unexplained = 0;
  double mean = 0.0;
  double std_dev = 0.0;
  double median = 0.0;
  std::vector<double> thresholds;
  std::vector<double> mean_counts;  // per threshold
};

MseStats aggregate(std::span<const ImageResult> results, std::span<const double> thresholds,
                   const std::string& model = {});

// Frequency of MSE sizes 1..patch_count (index 0 = size 1).
struct SizeHistogram {
  std::vector<std::size_t> frequency;
  std::size_t total() const;
};

SizeHistogram size_histogram(std::span<const ImageResult> results, int patch_count);

// value[n-1] = percent of images whose smallest MSE has at most n patches,
// for n = 1..max_n.
std::vector<double> percent_explained(std::span<const ImageResult> results, int max_n);

// Deletion tree of each root, children sorted by descending ratio (ties by
// bitmask) and truncated to max_children; each subset appears once per root.
std::string export_sag_dot(const std::string& image_id, std::span<const MseRecord> roots,
                           std::span<const SubExplanationNode> nodes, int max_children = 3);

// Results table in CSV/JSON: model, images, explained, unexplained, mean,
// std, median, then one column per threshold ("c90", "c80", ...).
std::string stats_table_csv(std::span<const MseStats> stats);
std::string stats_table_json(std::span<const MseStats> stats);
std::string threshold_column(double threshold);

std::string histogram_csv(const SizeHistogram& histogram);
std::string percent_explained_csv(const std::map<std::string, std::vector<double>>& curves);

// Plain SVG charts.
std::string histogram_svg(const SizeHistogram& histogram, const std::string& title);
std::string curves_svg(const std::map<std::string, std::vector<double>>& curves,
                       const std::string& title, const std::string& x_label,
                       const std::string& y_label);

// Shortest round-trip decimal form of a double.
std::string format_double(double value);

}  // namespace xprobe
