#include "xprobe/crosstest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "xprobe/error.hpp"

namespace xprobe {

void CrossTestMatrix::validate() const {
  const auto n = static_cast<Eigen::Index>(models.size());
  if (ins.rows() != n || ins.cols() != n || del.rows() != n || del.cols() != n) {
    throw DimensionMismatch("cross-test matrix: must be square over the model list");
  }
  if (!ins.allFinite() || !del.allFinite()) {
    throw InvalidArgument("cross-test matrix: non-finite entry");
  }
}

std::string KernelSpec::describe() const {
  if (kind == Kind::PrecomputedSimilarity) return "precomputed";
  if (gamma <= 0.0) return "rbf:auto";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "rbf:%.17g", gamma);
  return buf;
}

CrossTestMatrix build_matrix(std::span<const ClassifierOracle* const> models, const MapTable& maps,
                             std::span<const ImageTensor> dataset, const CrossTestConfig& config,
                             ConfidenceCache* cache) {
  if (models.empty()) throw InvalidArgument("cross-test: no models");
  if (dataset.empty()) throw InvalidArgument("cross-test: empty dataset");
  for (std::size_t g = 0; g < models.size(); ++g) {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (!maps.contains({g, i})) {
        throw InvalidArgument("cross-test: missing map for generator '" + models[g]->name() +
                              "' image " + std::to_string(i));
      }
    }
  }

  const auto n = static_cast<Eigen::Index>(models.size());
  CrossTestMatrix out;
  out.dataset_id = config.dataset_id;
  out.map_method = config.map_method;
  out.ins = Eigen::MatrixXd::Zero(n, n);
  out.del = Eigen::MatrixXd::Zero(n, n);
  for (const auto* m : models) out.models.push_back(m->name());

  for (Eigen::Index e = 0; e < n; ++e) {
    const ClassifierOracle& evaluator = *models[static_cast<std::size_t>(e)];
    const ModelCalibration calib =
        calibrate_model(evaluator, dataset, config.baseline, cache, config.dataset_id);
    if (!(calib.top1 > calib.blurred)) normalize_score(0.0, calib);  // throws

    std::vector<ClassLabel> labels;
    for (const auto& image : dataset) labels.push_back(predicted_class(evaluator, image).label);

    for (Eigen::Index g = 0; g < n; ++g) {
      double ins_sum = 0.0;
      double del_sum = 0.0;
      for (std::size_t i = 0; i < dataset.size(); ++i) {
        const AttributionMap& map = maps.at({static_cast<std::size_t>(g), i});
        const auto ins = perturbation_curve(evaluator, dataset[i], config.baseline, map,
                                            config.steps, labels[i], Direction::Insertion, cache,
                                            config.upsampling);
        const auto del = perturbation_curve(evaluator, dataset[i], config.baseline, map,
                                            config.steps, labels[i], Direction::Deletion, cache,
                                            config.upsampling);
        ins_sum += normalize_score(auc(ins), calib);
        del_sum += normalize_score(auc(del), calib);
      }
      out.ins(e, g) = ins_sum / static_cast<double>(dataset.size());
      out.del(e, g) = del_sum / static_cast<double>(dataset.size());
    }
  }
  out.validate();
  return out;
}

Eigen::MatrixXd center_kernel(const Eigen::MatrixXd& kernel) {
  if (kernel.rows() != kernel.cols() || kernel.rows() == 0) {
    throw InvalidArgument("center_kernel: kernel must be square and non-empty");
  }
  const auto n = kernel.rows();
  const Eigen::MatrixXd h =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  return h * kernel * h;
}

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& features, double gamma) {
  const auto n = features.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      k(i, j) = std::exp(-gamma * (features.row(i) - features.row(j)).squaredNorm());
    }
  }
  return k;
}

double median_heuristic_gamma(const Eigen::MatrixXd& features) {
  std::vector<double> d;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < features.rows(); ++j) {
      d.push_back((features.row(i) - features.row(j)).norm());
    }
  }
  if (d.empty()) return 1.0;
  std::sort(d.begin(), d.end());
  const std::size_t m = d.size() / 2;
  const double median = d.size() % 2 == 1 ? d[m] : 0.5 * (d[m - 1] + d[m]);
  return median > 0.0 ? 1.0 / (2.0 * median * median) : 1.0;
}

Embedding2D kernel_pca(const Eigen::MatrixXd& kernel, int dims, std::vector<std::string> models,
                       std::string description) {
  const auto n = kernel.rows();
  if (kernel.cols() != n) throw InvalidArgument("kernel PCA: kernel must be square");
  if (dims < 1 || n < dims + 1) {
    throw InvalidArgument("kernel PCA: need at least " + std::to_string(dims + 1) +
                          " models for " + std::to_string(dims) + " dimensions, got " +
                          std::to_string(n));
  }
  if (!kernel.allFinite()) throw InvalidArgument("kernel PCA: non-finite kernel");

  const Eigen::MatrixXd centered = center_kernel(0.5 * (kernel + kernel.transpose()));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(centered);
  if (solver.info() != Eigen::Success) throw Error("kernel PCA: eigendecomposition failed");

  // Eigen returns ascending eigenvalues.
  Embedding2D out;
  out.models = std::move(models);
  out.kernel = std::move(description);
  out.eigenvalues.resize(dims);
  out.coords.resize(n, dims);
  for (int d = 0; d < dims; ++d) {
    const Eigen::Index col = n - 1 - d;
    const double lambda = solver.eigenvalues()(col);
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < n; ++i) {
      if (std::abs(v(i)) > std::abs(v(arg))) arg = i;
    }
    if (v(arg) < 0.0) v = -v;
    out.eigenvalues(d) = lambda;
    out.coords.col(d) = v * std::sqrt(std::max(lambda, 0.0));
  }
  return out;
}

Eigen::MatrixXd model_features(const CrossTestMatrix& matrix, Channel channel) {
  const Eigen::MatrixXd& m = channel == Channel::Ins ? matrix.ins : matrix.del;
  const auto n = m.rows();
  Eigen::MatrixXd features(n, 2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    features.row(i).head(n) = m.row(i);
    features.row(i).tail(n) = m.col(i).transpose();
  }
  return features;
}

Embedding2D kernel_pca_embed(const CrossTestMatrix& matrix, Channel channel,
                             const KernelSpec& kernel, int dims) {
  matrix.validate();
  const auto n = static_cast<Eigen::Index>(matrix.models.size());
  if (dims < 1 || n < dims + 1) {
    throw InvalidArgument("kernel PCA: need at least " + std::to_string(dims + 1) +
                          " models for " + std::to_string(dims) + " dimensions, got " +
                          std::to_string(n));
  }
  Eigen::MatrixXd k;
  std::string description = kernel.describe();
  if (kernel.kind == KernelSpec::Kind::PrecomputedSimilarity) {
    const Eigen::MatrixXd& m = channel == Channel::Ins ? matrix.ins : matrix.del;
    k = 0.5 * (m + m.transpose());
  } else {
    const Eigen::MatrixXd features = model_features(matrix, channel);
    const double gamma = kernel.gamma > 0.0 ? kernel.gamma : median_heuristic_gamma(features);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "rbf:%.17g", gamma);
    description = buf;
    k = rbf_kernel(features, gamma);
  }
  return kernel_pca(k, dims, matrix.models, description);
}

}  // namespace xprobe
