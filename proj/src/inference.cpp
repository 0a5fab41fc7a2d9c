#include "switchstate/inference.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace switchstate {

namespace {

double lse(const Eigen::VectorXd& v) {
  double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

void check_dims(const ModelParams& params, int c, const Sequence& seq) {
  if (c < 0 || c >= params.C) throw input_error("class index out of range");
  if (seq.dim() != params.D)
    throw input_error("sequence '" + seq.id + "' has dimension " +
                      std::to_string(seq.dim()) + ", model expects " +
                      std::to_string(params.D));
  if (seq.length() < 1) throw input_error("sequence '" + seq.id + "' is empty");
  if (!seq.x.allFinite())
    throw input_error("sequence '" + seq.id + "' contains non-finite values");
}

}  // namespace

Posterior forward_backward(const ModelParams& params, int c,
                           const Sequence& seq) {
  check_dims(params, c, seq);
  const int T = seq.length();
  const int K = params.K;

  EmissionModel emis(params);
  Eigen::MatrixXd loglik;
  try {
    loglik = emis.loglik_matrix(seq.x);  // T x K
  } catch (const Error& e) {
    throw numeric_error(std::string(e.what()) + " (sequence '" + seq.id + "')");
  }

  // log Psi^{(t)} governing z_t | z_{t-1}, built from x_{t-1}; slot t-1
  // holds the matrix used between timesteps t-1 and t (0-based).
  std::vector<Eigen::MatrixXd> log_psi(T - 1);
  for (int t = 1; t < T; ++t)
    log_psi[t - 1] = log_recurrent_transition(params, c, seq.x.row(t - 1));

  Eigen::VectorXd log_init = params.init_dist.array().max(0.0).log();

  Eigen::MatrixXd la(T, K);  // log alpha
  la.row(0) = log_init.transpose() + loglik.row(0);
  Eigen::VectorXd work(K);
  for (int t = 1; t < T; ++t) {
    for (int i = 0; i < K; ++i) {
      work = la.row(t - 1).transpose() + log_psi[t - 1].col(i);
      la(t, i) = lse(work) + loglik(t, i);
    }
  }
  double log_ev = lse(la.row(T - 1).transpose());
  if (!std::isfinite(log_ev))
    throw numeric_error("non-finite log-evidence for sequence '" + seq.id + "'");

  Eigen::MatrixXd lb = Eigen::MatrixXd::Zero(T, K);  // log beta
  for (int t = T - 2; t >= 0; --t) {
    for (int j = 0; j < K; ++j) {
      work = log_psi[t].row(j).transpose() + loglik.row(t + 1).transpose() +
             lb.row(t + 1).transpose();
      lb(t, j) = lse(work);
    }
  }

  Posterior post;
  post.class_index = c;
  post.log_evidence = log_ev;
  post.gamma.resize(T, K);
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd lg = la.row(t).transpose() + lb.row(t).transpose();
    double z = lse(lg);
    post.gamma.row(t) = (lg.array() - z).exp().transpose();
    post.gamma.row(t) /= post.gamma.row(t).sum();
  }
  post.xi.resize(T - 1);
  for (int t = 0; t + 1 < T; ++t) {
    Eigen::MatrixXd lx(K, K);  // (i, j): z_{t+1}=i, z_t=j
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j)
        lx(i, j) = la(t, j) + log_psi[t](j, i) + loglik(t + 1, i) + lb(t + 1, i);
    double m = lx.maxCoeff();
    Eigen::MatrixXd xs = (lx.array() - m).exp();
    post.xi[t] = xs / xs.sum();
  }
  return post;
}

Posterior oracle_posterior(const ModelParams& params, int c,
                           const Sequence& seq) {
  check_dims(params, c, seq);
  const int T = seq.length();
  const int K = params.K;
  double paths = std::pow(static_cast<double>(K), T);
  if (paths > 1e6)
    throw input_error("oracle_posterior instance too large: K^T = " +
                      std::to_string(paths));

  EmissionModel emis(params);
  Eigen::MatrixXd loglik = emis.loglik_matrix(seq.x);
  std::vector<Eigen::MatrixXd> log_psi(T - 1);
  for (int t = 1; t < T; ++t)
    log_psi[t - 1] = log_recurrent_transition(params, c, seq.x.row(t - 1));
  Eigen::VectorXd log_init = params.init_dist.array().max(0.0).log();

  const long n_paths = static_cast<long>(std::llround(paths));
  std::vector<double> logw(n_paths);
  std::vector<int> path(T);
  double max_logw = -std::numeric_limits<double>::infinity();
  for (long idx = 0; idx < n_paths; ++idx) {
    long rem = idx;
    for (int t = 0; t < T; ++t) {
      path[t] = static_cast<int>(rem % K);
      rem /= K;
    }
    double lw = log_init(path[0]) + loglik(0, path[0]);
    for (int t = 1; t < T; ++t)
      lw += log_psi[t - 1](path[t - 1], path[t]) + loglik(t, path[t]);
    logw[idx] = lw;
    if (lw > max_logw) max_logw = lw;
  }

  double z = 0.0;
  for (double lw : logw) z += std::exp(lw - max_logw);
  double log_ev = max_logw + std::log(z);

  Posterior post;
  post.class_index = c;
  post.log_evidence = log_ev;
  post.gamma = Eigen::MatrixXd::Zero(T, K);
  post.xi.assign(T - 1, Eigen::MatrixXd::Zero(K, K));
  for (long idx = 0; idx < n_paths; ++idx) {
    double w = std::exp(logw[idx] - max_logw) / z;
    long rem = idx;
    for (int t = 0; t < T; ++t) {
      path[t] = static_cast<int>(rem % K);
      rem /= K;
    }
    for (int t = 0; t < T; ++t) post.gamma(t, path[t]) += w;
    for (int t = 0; t + 1 < T; ++t) post.xi[t](path[t + 1], path[t]) += w;
  }
  for (int t = 0; t < T; ++t) post.gamma.row(t) /= post.gamma.row(t).sum();
  for (auto& slice : post.xi) slice /= slice.sum();
  return post;
}

Eigen::VectorXd log_likelihood(const ModelParams& params, const Sequence& seq) {
  Eigen::VectorXd out(params.C);
  for (int c = 0; c < params.C; ++c)
    out(c) = forward_backward(params, c, seq).log_evidence;
  return out;
}

void write_posterior_csv(const Posterior& post, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw io_error("cannot open '" + path + "' for writing");
  f << "t,k,gamma\n";
  char buf[64];
  for (int t = 0; t < post.gamma.rows(); ++t)
    for (int k = 0; k < post.gamma.cols(); ++k) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", t, k, post.gamma(t, k));
      f << buf;
    }
}

}  // namespace switchstate
