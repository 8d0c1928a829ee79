#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "xprobe/saliency.hpp"

namespace xprobe {

/// Normalized insertion/deletion AUCs; row = evaluating model, column =
/// model whose attribution maps were evaluated.
struct CrossTestMatrix {
  std::vector<std::string> models;
  Eigen::MatrixXd ins;
  Eigen::MatrixXd del;
  std::string dataset_id;
  std::string map_method;

  void validate() const;
};

enum class Channel { Ins, Del };

struct KernelSpec {
  enum class Kind { Rbf, PrecomputedSimilarity };
  Kind kind = Kind::Rbf;
  // RBF only; <= 0 selects 1 / (2 * median^2) of the pairwise distances.
  double gamma = 0.0;

  static KernelSpec rbf(double gamma = 0.0) { return {Kind::Rbf, gamma}; }
  static KernelSpec precomputed() { return {Kind::PrecomputedSimilarity, 0.0}; }
  std::string describe() const;
};

struct Embedding2D {
  std::vector<std::string> models;
  Eigen::MatrixXd coords;         // one row per model, `dims` columns
  Eigen::VectorXd eigenvalues;    // descending
  std::string kernel;
};

// maps[{generator index, image index}]
using MapTable = std::map<std::pair<std::size_t, std::size_t>, AttributionMap>;

struct CrossTestConfig {
  BaselineStyle baseline;
  int steps = kDefaultSteps;
  Upsampling upsampling = Upsampling::Nearest;
  std::string dataset_id;
  std::string map_method;
};

CrossTestMatrix build_matrix(std::span<const ClassifierOracle* const> models, const MapTable& maps,
                             std::span<const ImageTensor> dataset, const CrossTestConfig& config,
                             ConfidenceCache* cache);

// H K H with H = I - 11^T / n.
Eigen::MatrixXd center_kernel(const Eigen::MatrixXd& kernel);

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& features, double gamma);
// 1 / (2 median^2) over pairwise Euclidean distances between rows; 1 if all
// rows coincide.
double median_heuristic_gamma(const Eigen::MatrixXd& features);

// Kernel PCA of a precomputed kernel: centered, eigendecomposed, projected on
// the top `dims` eigenvectors scaled by sqrt(eigenvalue); in each component
// the entry of largest magnitude is made positive.
Embedding2D kernel_pca(const Eigen::MatrixXd& kernel, int dims,
                       std::vector<std::string> models = {}, std::string description = {});

// Feature vector of model m = row m and column m of the chosen channel.
Eigen::MatrixXd model_features(const CrossTestMatrix& matrix, Channel channel);

Embedding2D kernel_pca_embed(const CrossTestMatrix& matrix, Channel channel,
                             const KernelSpec& kernel, int dims = 2);

}  // namespace xprobe
