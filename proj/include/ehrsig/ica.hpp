#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

namespace ehrsig {

// Linear decomposition X = A S fitted by fastICA. Columns of `mixing` are the
// signatures; `unmixing` composes whitening and rotation and acts as the
// pseudoinverse of `mixing` on centered data.
struct ICAModel {
  Eigen::MatrixXd mixing;     // p x k
  Eigen::MatrixXd unmixing;   // k x p
  Eigen::VectorXd row_means;  // p

  int k = 0;
  std::uint64_t seed = 0;
  double tol = 1e-4;
  int max_iter = 1000;
  int iterations = 0;
  double final_change = 0.0;
  bool converged = false;
};

// Symmetric fixed-point fastICA with log-cosh contrast on data whitened to k
// components by truncated eigendecomposition of the row covariance. Rows of
// X_std are channels, columns are cross-sections. Signatures are oriented so
// the largest-magnitude loading of each is positive.
ICAModel fit_ica(const Eigen::Ref<const Eigen::MatrixXd>& X_std, int k,
                 std::uint64_t seed, double tol = 1e-4, int max_iter = 1000);

// Source expressions of one standardized cross-section.
Eigen::VectorXd express(const ICAModel& model, const Eigen::Ref<const Eigen::VectorXd>& x_std);

// Standardized-space reconstruction A s + row means.
Eigen::VectorXd reconstruct(const ICAModel& model, const Eigen::Ref<const Eigen::VectorXd>& s);

// Columnwise express.
Eigen::MatrixXd source_matrix(const ICAModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X_std);

void write_ica_model(const ICAModel& model, const std::string& bundle_path,
                     const std::string& manifest_path);
ICAModel read_ica_model(const std::string& bundle_path, const std::string& manifest_path);

}  // namespace ehrsig
