#include "switchstate/simulator.hpp"

#include <cmath>
#include <random>

#include "switchstate/rng.hpp"

namespace switchstate {

namespace {

Eigen::VectorXd sample_dirichlet(const Eigen::VectorXd& conc,
                                 std::mt19937_64& rng) {
  Eigen::VectorXd out(conc.size());
  for (int i = 0; i < conc.size(); ++i) {
    std::gamma_distribution<double> gamma(conc(i), 1.0);
    out(i) = gamma(rng);
  }
  double s = out.sum();
  if (s <= 0.0) {
    // all gamma draws underflowed (tiny concentrations); fall back to the
    // largest-concentration corner
    int imax;
    conc.maxCoeff(&imax);
    out.setZero();
    out(imax) = 1.0;
    return out;
  }
  return out / s;
}

int sample_discrete(const Eigen::VectorXd& probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double target = u(rng), acc = 0.0;
  for (int i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    if (target <= acc) return i;
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

ModelParams sample_params(int K, int D, int C, const SimSpec& spec,
                          std::uint64_t seed) {
  if (K < 1 || D < 1 || C < 1) throw input_error("K, D, C must be positive");
  if (spec.mean_separation < 0.0 || spec.cov_scale <= 0.0)
    throw input_error("invalid separation spec");

  std::mt19937_64 rng = substream(seed, 0x5a3d);
  std::normal_distribution<double> normal(0.0, 1.0);

  ModelParams params;
  params.K = K;
  params.D = D;
  params.C = C;
  params.alpha = spec.alpha;
  params.kappa = spec.kappa;

  // means with minimum pairwise separation, by rejection
  const int max_tries = 10000;
  int tries = 0;
  while (static_cast<int>(params.mu.size()) < K) {
    Eigen::VectorXd m(D);
    for (int d = 0; d < D; ++d) m(d) = spec.mean_scale * normal(rng);
    bool ok = true;
    for (const auto& other : params.mu)
      if ((m - other).norm() < spec.mean_separation) { ok = false; break; }
    if (ok) params.mu.push_back(m);
    if (++tries > max_tries)
      throw input_error("could not place " + std::to_string(K) +
                        " means at separation " +
                        std::to_string(spec.mean_separation) +
                        "; separation spec infeasible");
  }

  for (int k = 0; k < K; ++k) {
    Eigen::MatrixXd a(D, D);
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j) a(i, j) = normal(rng);
    Eigen::MatrixXd cov =
        spec.cov_scale *
        (a * a.transpose() / static_cast<double>(D) +
         Eigen::MatrixXd::Identity(D, D));
    params.sigma.push_back(0.5 * (cov + cov.transpose()));
  }

  for (int c = 0; c < C; ++c) {
    Eigen::MatrixXd pi(K, K);
    for (int k = 0; k < K; ++k) {
      Eigen::VectorXd conc = Eigen::VectorXd::Constant(K, spec.alpha);
      conc(k) += spec.kappa;
      pi.row(k) = sample_dirichlet(conc, rng).transpose();
    }
    params.pi.push_back(pi);
  }

  params.g.resize(K, D);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < D; ++j) params.g(i, j) = spec.g_scale * normal(rng);

  params.class_prior = Eigen::VectorXd::Constant(C, 1.0 / C);
  params.init_dist = Eigen::VectorXd::Constant(K, 1.0 / K);
  params.class_names.resize(C);
  for (int c = 0; c < C; ++c) params.class_names[c] = "class_" + std::to_string(c);
  return params;
}

std::pair<Sequence, std::vector<int>> sample_sequence(const ModelParams& params,
                                                      int c, int T,
                                                      std::uint64_t seed) {
  if (c < 0 || c >= params.C) throw input_error("class index out of range");
  if (T < 1) throw input_error("T must be >= 1");
  std::mt19937_64 rng = substream(seed, 0x5e90);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Eigen::LLT<Eigen::MatrixXd>> chol;
  chol.reserve(params.K);
  for (int k = 0; k < params.K; ++k) {
    chol.emplace_back(params.sigma[k]);
    if (chol.back().info() != Eigen::Success)
      throw numeric_error("Cholesky factorization failed for sigma[" +
                          std::to_string(k) + "]");
  }

  Sequence seq;
  seq.x.resize(T, params.D);
  std::vector<int> path(T);
  Eigen::VectorXd noise(params.D);

  path[0] = sample_discrete(params.init_dist, rng);
  for (int t = 0; t < T; ++t) {
    if (t > 0) {
      Eigen::MatrixXd psi = recurrent_transition(params, c, seq.x.row(t - 1));
      path[t] = sample_discrete(psi.row(path[t - 1]).transpose(), rng);
    }
    for (int d = 0; d < params.D; ++d) noise(d) = normal(rng);
    seq.x.row(t) =
        (params.mu[path[t]] +
         chol[path[t]].matrixL().toDenseMatrix() * noise)
            .transpose();
  }
  return {std::move(seq), std::move(path)};
}

SyntheticDataset sample_dataset(const ModelParams& params, int N, int T,
                                std::uint64_t seed) {
  SyntheticDataset ds;
  ds.seed = seed;
  ds.true_params = params;
  for (int n = 0; n < N; ++n) {
    std::mt19937_64 label_rng = substream(seed, 0x1abe1000ULL + n);
    int y = sample_discrete(params.class_prior, label_rng);
    auto [seq, path] =
        sample_sequence(params, y, T, mix64(seed) ^ mix64(0xda7a0000ULL + n));
    seq.id = "sim_" + std::to_string(n);
    seq.label = y;
    ds.sequences.push_back(std::move(seq));
    ds.true_paths.push_back(std::move(path));
  }
  return ds;
}

}  // namespace switchstate
