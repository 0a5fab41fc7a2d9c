#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "switchstate/inference.hpp"
#include "switchstate/model.hpp"

namespace switchstate {

using Dataset = std::vector<Sequence>;

struct FitConfig {
  int M = 200;            // outer EM iterations
  int L = 10;             // inner gradient iterations per M-step
  double eta = 1e-2;      // gradient step size
  int K = 8;
  double alpha = 0.5;
  double kappa = 100.0;
  std::uint64_t seed = 0;
  double cov_floor = 1e-6;  // eigenvalue floor, in units of pooled data variance
  double tol = 1e-6;        // relative objective-change stopping threshold
  int threads = 0;          // 0 = hardware concurrency
  bool learn_g = true;      // false freezes G at its initial value

  void validate() const;
};

struct FitReport {
  std::vector<double> objective_trace;  // penalized observed-data log-likelihood
  ModelParams params;
  double e_step_seconds = 0.0;
  double m_step_seconds = 0.0;
  std::vector<double> e_seconds_trace;  // per outer iteration
  std::vector<double> m_seconds_trace;
  bool converged = false;
  int iterations_run = 0;
  std::vector<std::string> warnings;
};

// Inference routine used by the E-step; swappable so the exact brute-force
// oracle can drive the identical fit loop in tests.
using PosteriorFn =
    std::function<Posterior(const ModelParams&, int, const Sequence&)>;

// Pooled-frame GMM initialization: k-means++ seeding, then diagonal-then-full
// covariance EM for a fixed 50 iterations. Covariances are eigenvalue-floored
// at cov_floor (scaled by pooled data variance).
std::pair<std::vector<Eigen::VectorXd>, std::vector<Eigen::MatrixXd>> gmm_init(
    const Dataset& dataset, int K, std::uint64_t seed, double cov_floor = 1e-6);

// posteriors[n][c]: class-c posterior for sequence n; exactly N*C calls.
std::vector<std::vector<Posterior>> e_step(
    const ModelParams& params, const Dataset& dataset, int threads = 0,
    const PosteriorFn& fn = forward_backward);

// Expected complete-data log-likelihood: emission + initial-state +
// transition terms under each labeled sequence's own-class posterior, plus
// the sticky Dirichlet prior over every Pi_c.
double ecll(const ModelParams& params, const Dataset& dataset,
            const std::vector<std::vector<Posterior>>& posteriors);

// Transition expectation sum_t E_q[log Psi^{(t)}] for labeled sequences,
// optionally restricted to one class; the objective the gradient M-steps
// ascend (plus the prior, which only_class includes when >= 0).
double transition_objective(const ModelParams& params, const Dataset& dataset,
                            const std::vector<std::vector<Posterior>>& posteriors,
                            int only_class = -1);

// Weighted Gaussian MLE under each sequence's labeled-class gamma. States
// with total weight < 1e-8 keep their previous parameters and produce a
// warning. Covariances are symmetrized and eigenvalue-floored.
std::pair<std::vector<Eigen::VectorXd>, std::vector<Eigen::MatrixXd>>
m_step_gaussian(const ModelParams& params, const Dataset& dataset,
                const std::vector<std::vector<Posterior>>& posteriors,
                double cov_floor = 1e-6,
                std::vector<std::string>* warnings = nullptr);

// Exact gradient of sum_n E_q[sum_t log Psi^{(t)}] with respect to G.
Eigen::MatrixXd grad_g(const ModelParams& params, const Dataset& dataset,
                       const std::vector<std::vector<Posterior>>& posteriors);

// Gradient of the class-c transition expectation plus log_prior_pi(c) with
// respect to the unconstrained matrix under Pi_c[k,:] = softmax(Pi~_c[k,:]);
// rows sum to zero.
Eigen::MatrixXd grad_pi(const ModelParams& params, int c,
                        const Dataset& dataset,
                        const std::vector<std::vector<Posterior>>& posteriors);

// Generalized EM (GMM init; per-class E-steps; analytic Gaussian M-step;
// backtracking gradient M-steps for G and each Pi_c).
FitReport em_fit(const Dataset& dataset, const FitConfig& config,
                 const PosteriorFn& fn = forward_backward);

struct GradcheckReport {
  std::uint64_t seed = 0;
  int instances = 0;
  double max_rel_err_g = 0.0;
  double max_rel_err_pi = 0.0;
  std::string to_json() const;
};

// Analytic-vs-central-finite-difference check on random small instances.
GradcheckReport gradcheck(std::uint64_t seed, int instances = 10);

}  // namespace switchstate
