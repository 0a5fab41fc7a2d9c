#pragma once

#include <cstdint>
#include <vector>

#include "switchstate/model.hpp"

namespace switchstate {

// Separation / scale knobs for sampled benchmark instances.
struct SimSpec {
  double mean_separation = 4.0;  // minimum pairwise distance between mu_k
  double mean_scale = 3.0;       // std of the box the means are drawn in
  double cov_scale = 1.0;        // overall emission covariance scale
  double g_scale = 0.1;          // std of G entries
  double alpha = 0.5;            // Dirichlet concentration for Pi rows
  double kappa = 100.0;          // sticky boost for Pi rows
};

struct SyntheticDataset {
  std::vector<Sequence> sequences;
  ModelParams true_params;
  std::vector<std::vector<int>> true_paths;
  std::uint64_t seed = 0;
};

// Random model: Pi rows ~ Dir(alpha 1 + kappa e_k), means rejection-sampled
// to the requested separation, Wishart-style SPD covariances, G ~ N(0, s^2).
ModelParams sample_params(int K, int D, int C, const SimSpec& spec,
                          std::uint64_t seed);

// One length-T draw of the generative process under class c.
std::pair<Sequence, std::vector<int>> sample_sequence(const ModelParams& params,
                                                      int c, int T,
                                                      std::uint64_t seed);

// N independent (label, sequence) draws; per-sequence substreams keyed on
// (seed, index) make generation order-independent.
SyntheticDataset sample_dataset(const ModelParams& params, int N, int T,
                                std::uint64_t seed);

}  // namespace switchstate
