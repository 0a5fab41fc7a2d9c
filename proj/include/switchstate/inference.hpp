#pragma once

#include <vector>

#include "switchstate/model.hpp"

namespace switchstate {

// Class-conditional posterior for one sequence.
//
// xi[t](i, j) = q(z_{t+2} = i, z_{t+1} = j) in 1-based time, i.e. slice t
// joins timesteps t and t+1 (0-based); j indexes the source state, matching
// the row convention of Pi.
struct Posterior {
  Eigen::MatrixXd gamma;           // T x K singleton marginals
  std::vector<Eigen::MatrixXd> xi; // T-1 slices, each K x K
  double log_evidence = 0.0;
  int class_index = 0;
};

// Exact singleton/two-slice marginals and log-evidence under class c, with
// the per-timestep transition matrix Psi^{(t)} built from x_{t-1}. Log-space
// messages throughout.
Posterior forward_backward(const ModelParams& params, int c,
                           const Sequence& seq);

// Same quantities by explicit summation over all K^T state paths.
// Guarded at K^T <= 10^6.
Posterior oracle_posterior(const ModelParams& params, int c,
                           const Sequence& seq);

// log p(x | theta, Pi_c, G) for each class c.
Eigen::VectorXd log_likelihood(const ModelParams& params, const Sequence& seq);

// Diagnostics dump: CSV with columns t,k,gamma.
void write_posterior_csv(const Posterior& post, const std::string& path);

}  // namespace switchstate
