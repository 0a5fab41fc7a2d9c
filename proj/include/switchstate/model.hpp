#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "switchstate/errors.hpp"

namespace switchstate {

// All learnable and fixed quantities of the model. Immutable by convention
// after construction; every operation treats it as read-only.
struct ModelParams {
  int K = 0;  // latent states
  int D = 0;  // observation dimension
  int C = 0;  // classes

  std::vector<Eigen::VectorXd> mu;     // K means, each D
  std::vector<Eigen::MatrixXd> sigma;  // K SPD covariances, each DxD
  std::vector<Eigen::MatrixXd> pi;     // C row-stochastic KxK transition matrices
  Eigen::MatrixXd g;                   // KxD recurrent state perturbation

  double alpha = 0.5;   // Dirichlet concentration
  double kappa = 100.0; // sticky self-transition boost

  Eigen::VectorXd class_prior;  // C, sums to 1
  Eigen::VectorXd init_dist;    // K, law of z_1 (not learned)
  std::vector<std::string> class_names;  // size C

  // Throws param_error on any invariant violation (row sums, SPD, simplex).
  void validate() const;
};

struct Sequence {
  Eigen::MatrixXd x;  // T x D
  std::optional<int> label;
  std::string id;

  int length() const { return static_cast<int>(x.rows()); }
  int dim() const { return static_cast<int>(x.cols()); }
};

// Counts how often log_prior_pi had to clamp a transition entry to the
// simplex floor.
struct ClampStats {
  long clamped = 0;
};

// Entries of Pi are clamped to this floor inside log_prior_pi only; with
// alpha < 1 the Dirichlet density diverges at the simplex boundary.
inline constexpr double kSimplexFloor = 1e-8;

// Row-stochastic per-timestep transition matrix
//   Psi[k, :] = Pi_c[k, :] .* exp(G x_prev) / Z_k
// computed in log space.
Eigen::MatrixXd recurrent_transition(const ModelParams& params, int c,
                                     const Eigen::VectorXd& x_prev);

// log of the above; row k is log Pi_c[k,:] + G x_prev, log-sum-exp normalized.
Eigen::MatrixXd log_recurrent_transition(const ModelParams& params, int c,
                                         const Eigen::VectorXd& x_prev);

// log N(x | mu_k, Sigma_k) via Cholesky solve.
double emission_logpdf(const ModelParams& params, int k,
                       const Eigen::VectorXd& x);

// Precomputed Cholesky factors for repeated emission evaluation.
class EmissionModel {
 public:
  explicit EmissionModel(const ModelParams& params);

  // T x K matrix of log N(x_t | mu_k, Sigma_k).
  Eigen::MatrixXd loglik_matrix(const Eigen::MatrixXd& x) const;
  double logpdf(int k, const Eigen::VectorXd& x) const;
  int states() const { return static_cast<int>(llt_.size()); }

 private:
  std::vector<Eigen::VectorXd> mu_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llt_;
  std::vector<double> log_norm_;  // -0.5 (D log 2pi + log|Sigma_k|)
};

// Sum over rows k of log Dir(Pi_c[k,:] | alpha 1_K + kappa e_k), including
// the log-Beta normalizer. Entries below kSimplexFloor are clamped and
// counted in stats if given.
double log_prior_pi(const ModelParams& params, int c,
                    ClampStats* stats = nullptr);

}  // namespace switchstate
