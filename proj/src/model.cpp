#include "switchstate/model.hpp"

#include <cmath>

namespace switchstate {

namespace {

double lse_row(const Eigen::RowVectorXd& v) {
  double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

void ModelParams::validate() const {
  if (K <= 0 || D <= 0 || C <= 0)
    throw param_error("K, D, C must be positive");
  if (static_cast<int>(mu.size()) != K || static_cast<int>(sigma.size()) != K)
    throw param_error("mu/sigma must hold K entries");
  if (static_cast<int>(pi.size()) != C)
    throw param_error("pi must hold C matrices");
  if (g.rows() != K || g.cols() != D)
    throw param_error("g must be KxD");
  for (int k = 0; k < K; ++k) {
    if (mu[k].size() != D) throw param_error("mu[" + std::to_string(k) + "] has wrong dimension");
    const Eigen::MatrixXd& s = sigma[k];
    if (s.rows() != D || s.cols() != D)
      throw param_error("sigma[" + std::to_string(k) + "] must be DxD");
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw param_error("sigma[" + std::to_string(k) + "] is not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success)
      throw param_error("sigma[" + std::to_string(k) + "] is not positive definite");
  }
  for (int c = 0; c < C; ++c) {
    const Eigen::MatrixXd& p = pi[c];
    if (p.rows() != K || p.cols() != K)
      throw param_error("pi[" + std::to_string(c) + "] must be KxK");
    if (p.minCoeff() < 0.0)
      throw param_error("pi[" + std::to_string(c) + "] has a negative entry");
    for (int k = 0; k < K; ++k) {
      double rs = p.row(k).sum();
      if (std::abs(rs - 1.0) > 1e-12)
        throw param_error("pi[" + std::to_string(c) + "] row " + std::to_string(k) +
                          " sums to " + std::to_string(rs) + ", expected 1");
    }
  }
  if (alpha <= 0.0) throw param_error("alpha must be positive");
  if (kappa < 0.0) throw param_error("kappa must be non-negative");
  auto check_simplex = [](const Eigen::VectorXd& v, const char* name, int n) {
    if (static_cast<int>(v.size()) != n)
      throw param_error(std::string(name) + " has wrong length");
    if (v.minCoeff() < 0.0)
      throw param_error(std::string(name) + " has a negative entry");
    if (std::abs(v.sum() - 1.0) > 1e-12)
      throw param_error(std::string(name) + " does not sum to 1");
  };
  check_simplex(class_prior, "class_prior", C);
  check_simplex(init_dist, "init_dist", K);
  if (!class_names.empty() && static_cast<int>(class_names.size()) != C)
    throw param_error("class_names must have C entries when present");
}

Eigen::MatrixXd log_recurrent_transition(const ModelParams& params, int c,
                                         const Eigen::VectorXd& x_prev) {
  if (c < 0 || c >= params.C) throw input_error("class index out of range");
  if (x_prev.size() != params.D)
    throw input_error("x_prev has dimension " + std::to_string(x_prev.size()) +
                      ", expected " + std::to_string(params.D));
  if (!x_prev.allFinite()) throw input_error("x_prev contains non-finite values");

  const int K = params.K;
  Eigen::VectorXd u = params.g * x_prev;  // K
  Eigen::MatrixXd out(K, K);
  for (int k = 0; k < K; ++k) {
    if (params.pi[c].row(k).maxCoeff() <= 0.0)
      throw param_error("pi[" + std::to_string(c) + "] row " + std::to_string(k) +
                        " is all zero");
    Eigen::RowVectorXd row =
        params.pi[c].row(k).array().log().matrix() + u.transpose();
    out.row(k) = row.array() - lse_row(row);
  }
  return out;
}

Eigen::MatrixXd recurrent_transition(const ModelParams& params, int c,
                                     const Eigen::VectorXd& x_prev) {
  Eigen::MatrixXd lp = log_recurrent_transition(params, c, x_prev);
  Eigen::MatrixXd p = lp.array().exp();
  // exact row renormalization; exp() alone leaves O(eps) drift
  for (int k = 0; k < p.rows(); ++k) p.row(k) /= p.row(k).sum();
  return p;
}

EmissionModel::EmissionModel(const ModelParams& params) {
  const int K = params.K;
  const int D = params.D;
  mu_ = params.mu;
  llt_.reserve(K);
  log_norm_.reserve(K);
  const double log2pi = std::log(2.0 * M_PI);
  for (int k = 0; k < K; ++k) {
    llt_.emplace_back(params.sigma[k]);
    if (llt_.back().info() != Eigen::Success)
      throw numeric_error("Cholesky factorization failed for sigma[" +
                          std::to_string(k) + "]");
    double logdet =
        2.0 * llt_.back().matrixL().toDenseMatrix().diagonal().array().log().sum();
    log_norm_.push_back(-0.5 * (D * log2pi + logdet));
  }
}

double EmissionModel::logpdf(int k, const Eigen::VectorXd& x) const {
  Eigen::VectorXd d = x - mu_[k];
  Eigen::VectorXd w = llt_[k].matrixL().solve(d);
  return log_norm_[k] - 0.5 * w.squaredNorm();
}

Eigen::MatrixXd EmissionModel::loglik_matrix(const Eigen::MatrixXd& x) const {
  const int T = static_cast<int>(x.rows());
  const int K = states();
  Eigen::MatrixXd out(T, K);
  for (int k = 0; k < K; ++k) {
    Eigen::MatrixXd d = x.transpose().colwise() - mu_[k];  // D x T
    Eigen::MatrixXd w = llt_[k].matrixL().solve(d);
    out.col(k) = (-0.5 * w.colwise().squaredNorm().array() + log_norm_[k])
                     .matrix()
                     .transpose();
  }
  return out;
}

double emission_logpdf(const ModelParams& params, int k,
                       const Eigen::VectorXd& x) {
  if (k < 0 || k >= params.K) throw input_error("state index out of range");
  Eigen::LLT<Eigen::MatrixXd> llt(params.sigma[k]);
  if (llt.info() != Eigen::Success)
    throw numeric_error("Cholesky factorization failed for sigma[" +
                        std::to_string(k) + "]");
  double logdet =
      2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  Eigen::VectorXd w = llt.matrixL().solve(x - params.mu[k]);
  return -0.5 * (params.D * std::log(2.0 * M_PI) + logdet + w.squaredNorm());
}

double log_prior_pi(const ModelParams& params, int c, ClampStats* stats) {
  if (c < 0 || c >= params.C) throw input_error("class index out of range");
  const int K = params.K;
  const double alpha = params.alpha;
  const double kappa = params.kappa;
  // log Beta normalizer of Dir(alpha 1_K + kappa e_k); same for every row
  double a0 = K * alpha + kappa;
  double log_norm = std::lgamma(a0) - (K - 1) * std::lgamma(alpha) -
                    std::lgamma(alpha + kappa);
  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    total += log_norm;
    for (int j = 0; j < K; ++j) {
      double p = params.pi[c](k, j);
      if (p < kSimplexFloor) {
        p = kSimplexFloor;
        if (stats) ++stats->clamped;
      }
      double a = alpha + (j == k ? kappa : 0.0);
      total += (a - 1.0) * std::log(p);
    }
  }
  return total;
}

}  // namespace switchstate
