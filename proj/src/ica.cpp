#include "ehrsig/ica.hpp"

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "ehrsig/common.hpp"
#include "ehrsig/io.hpp"

namespace ehrsig {

namespace {

// (M M^T)^{-1/2} M, with tiny eigenvalues clamped so degenerate updates stay
// finite rather than exploding.
Eigen::MatrixXd symmetric_decorrelation(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M * M.transpose());
  Eigen::ArrayXd vals = eig.eigenvalues().array();
  const double clamp = vals.maxCoeff() * 1e-12 + 1e-300;
  Eigen::VectorXd inv_sqrt = vals.max(clamp).rsqrt().matrix();
  return eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose() * M;
}

}  // namespace

ICAModel fit_ica(const Eigen::Ref<const Eigen::MatrixXd>& X_std, int k,
                 std::uint64_t seed, double tol, int max_iter) {
  const Eigen::Index p = X_std.rows();
  const Eigen::Index n = X_std.cols();
  if (k < 1 || k > std::min(p, n))
    throw std::invalid_argument("fit_ica: k must be in [1, min(p, n)]");
  if (!X_std.allFinite()) throw std::invalid_argument("fit_ica: non-finite input");

  ICAModel model;
  model.k = k;
  model.seed = seed;
  model.tol = tol;
  model.max_iter = max_iter;
  model.row_means = X_std.rowwise().mean();

  Eigen::MatrixXd Xc = X_std.colwise() - model.row_means;

  // Whiten to k components: Z = K Xc with Z Z^T / n = I.
  Eigen::MatrixXd cov = (Xc * Xc.transpose()) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("fit_ica: eigendecomposition failed");
  const Eigen::VectorXd& evals = eig.eigenvalues();  // ascending
  const double rank_floor = evals[p - 1] * 1e-10;
  if (evals[p - k] <= rank_floor)
    throw NumericalError("fit_ica: k exceeds the numerical rank of the data");

  Eigen::MatrixXd basis(p, k);       // top-k eigenvectors, largest first
  Eigen::VectorXd sqrt_evals(k);
  for (int i = 0; i < k; ++i) {
    basis.col(i) = eig.eigenvectors().col(p - 1 - i);
    sqrt_evals[i] = std::sqrt(evals[p - 1 - i]);
  }
  Eigen::MatrixXd whiten = sqrt_evals.cwiseInverse().asDiagonal() * basis.transpose();
  Eigen::MatrixXd Z = whiten * Xc;  // k x n

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd W(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) W(i, j) = gauss(rng);
  W = symmetric_decorrelation(W);

  const double inv_n = 1.0 / static_cast<double>(n);
  double change = 0.0;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    Eigen::MatrixXd WZ = W * Z;                       // k x n
    Eigen::MatrixXd G = WZ.array().tanh().matrix();   // log-cosh contrast, a = 1
    Eigen::VectorXd g_prime_mean = (1.0 - G.array().square()).rowwise().mean();
    Eigen::MatrixXd W1 = G * Z.transpose() * inv_n - g_prime_mean.asDiagonal() * W;
    W1 = symmetric_decorrelation(W1);
    change = ((W1 * W.transpose()).diagonal().array().abs() - 1.0).abs().maxCoeff();
    W = W1;
    if (change < tol) {
      ++iter;
      break;
    }
  }
  model.iterations = iter;
  model.final_change = change;
  model.converged = change < tol;
  if (!model.converged)
    log_warn("fastICA did not converge after " + std::to_string(iter) +
             " iterations (last change " + io::format_double(change) + ")");

  model.unmixing = W * whiten;                                        // k x p
  model.mixing = basis * sqrt_evals.asDiagonal() * W.transpose();     // p x k

  // Stable orientation: largest-|loading| entry of each signature positive.
  for (int j = 0; j < k; ++j) {
    Eigen::Index row;
    model.mixing.col(j).cwiseAbs().maxCoeff(&row);
    if (model.mixing(row, j) < 0) {
      model.mixing.col(j) = -model.mixing.col(j);
      model.unmixing.row(j) = -model.unmixing.row(j);
    }
  }
  return model;
}

Eigen::VectorXd express(const ICAModel& model, const Eigen::Ref<const Eigen::VectorXd>& x_std) {
  if (x_std.size() != model.row_means.size())
    throw std::invalid_argument("express: dimension mismatch");
  return model.unmixing * (x_std - model.row_means);
}

Eigen::VectorXd reconstruct(const ICAModel& model, const Eigen::Ref<const Eigen::VectorXd>& s) {
  if (s.size() != model.k) throw std::invalid_argument("reconstruct: dimension mismatch");
  return model.mixing * s + model.row_means;
}

Eigen::MatrixXd source_matrix(const ICAModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X_std) {
  if (X_std.rows() != model.row_means.size())
    throw std::invalid_argument("source_matrix: dimension mismatch");
  return model.unmixing * (X_std.colwise() - model.row_means);
}

void write_ica_model(const ICAModel& model, const std::string& bundle_path,
                     const std::string& manifest_path) {
  io::write_matrix_bundle(bundle_path, {{"mixing", model.mixing},
                                        {"unmixing", model.unmixing},
                                        {"row_means", model.row_means}});
  nlohmann::json j;
  j["k"] = model.k;
  j["seed"] = model.seed;
  j["tol"] = model.tol;
  j["max_iter"] = model.max_iter;
  j["iterations"] = model.iterations;
  j["final_change"] = model.final_change;
  j["converged"] = model.converged;
  io::write_json_atomic(manifest_path, j);
}

ICAModel read_ica_model(const std::string& bundle_path, const std::string& manifest_path) {
  auto mats = io::read_matrix_bundle(bundle_path);
  ICAModel model;
  model.mixing = mats.at("mixing");
  model.unmixing = mats.at("unmixing");
  model.row_means = mats.at("row_means");
  nlohmann::json j = io::read_json(manifest_path);
  model.k = j.at("k").get<int>();
  model.seed = j.at("seed").get<std::uint64_t>();
  model.tol = j.at("tol").get<double>();
  model.max_iter = j.at("max_iter").get<int>();
  model.iterations = j.at("iterations").get<int>();
  model.final_change = j.at("final_change").get<double>();
  model.converged = j.at("converged").get<bool>();
  return model;
}

}  // namespace ehrsig
