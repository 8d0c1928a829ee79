#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <variant>
#include <vector>

#include "xprobe/oracle.hpp"

namespace xprobe {

// Confidence hi iff every required patch is present.
struct Conjunctive {
  PatchSet required;
  double hi = 1.0;
  double lo = 0.05;
};

// Confidence hi iff some group is fully present. With partial_credit > 0 an
// incomplete image scores lo + partial_credit * (hi - lo) * f, where f is the
// largest present fraction of any group; 0 gives the plain two-level oracle.
struct Disjunctive {
  std::vector<PatchSet> groups;
  double hi = 1.0;
  double lo = 0.05;
  double partial_credit = 0.0;
};

enum class Squash { Clamp, Sigmoid };

// squash(sum of weights of present patches).
struct Additive {
  std::vector<double> weights;
  Squash squash = Squash::Clamp;
};

struct SyntheticOracleSpec {
  std::variant<Conjunctive, Disjunctive, Additive> kind;
  // A patch is present when more than this fraction of its pixels differ
  // from the registered baseline.
  double occupancy_threshold = 0.5;
};

/// Single-class oracle whose confidence depends only on which grid patches
/// of the input differ from a known baseline image.
///
/// Baselines are learned through register_baseline(); the all-zero image is
/// always known. The baseline used for an input is the registered one (of the
/// same shape) agreeing with it on the most pixels, ties to the earliest.
class OccupancyOracle : public ClassifierOracle {
 public:
  OccupancyOracle(std::string name, const GridSpec& grid, double occupancy_threshold = 0.5);

  const std::string& name() const override { return name_; }
  std::size_t class_count() const override { return 1; }
  std::vector<double> score_batch(std::span<const ImageTensor> images,
                                  ClassLabel label) const override;
  void register_baseline(const ImageTensor& baseline) const override;

  PatchSet occupancy(const ImageTensor& image) const;
  const GridSpec& grid() const { return grid_; }

  // Confidence for a set of present patches.
  virtual double score_occupancy(const PatchSet& present) const = 0;

 private:
  std::string name_;
  GridSpec grid_;
  double threshold_;
  mutable std::mutex mutex_;
  mutable std::vector<ImageTensor> baselines_;
};

class SyntheticOracle final : public OccupancyOracle {
 public:
  SyntheticOracle(const SyntheticOracleSpec& spec, const GridSpec& grid, std::string name);
  double score_occupancy(const PatchSet& present) const override;
  const SyntheticOracleSpec& spec() const { return spec_; }

 private:
  SyntheticOracleSpec spec_;
};

// Occupancy oracle backed by an arbitrary function; handy for crafted tests.
class FunctionOracle final : public OccupancyOracle {
 public:
  FunctionOracle(std::function<double(const PatchSet&)> fn, const GridSpec& grid,
                 std::string name = "function");
  double score_occupancy(const PatchSet& present) const override { return fn_(present); }

 private:
  std::function<double(const PatchSet&)> fn_;
};

// Same confidence for every image and class.
class ConstantOracle final : public ClassifierOracle {
 public:
  explicit ConstantOracle(double value, std::size_t class_count = 1,
                          std::string name = "constant");
  const std::string& name() const override { return name_; }
  std::size_t class_count() const override { return class_count_; }
  std::vector<double> score_batch(std::span<const ImageTensor> images,
                                  ClassLabel label) const override;

 private:
  double value_;
  std::size_t class_count_;
  std::string name_;
};

void validate(const SyntheticOracleSpec& spec, const GridSpec& grid);

std::unique_ptr<ClassifierOracle> make_synthetic(const SyntheticOracleSpec& spec,
                                                 const GridSpec& grid,
                                                 std::string name = "synthetic");

}  // namespace xprobe
