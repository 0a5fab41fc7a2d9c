#include "switchstate/learning.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "parallel.hpp"
#include "switchstate/rng.hpp"

namespace switchstate {

namespace {

constexpr double kStarvationWeight = 1e-8;

Eigen::MatrixXd pooled_frames(const Dataset& dataset) {
  long total = 0;
  int D = -1;
  for (const auto& seq : dataset) {
    total += seq.length();
    if (D < 0) D = seq.dim();
    if (seq.dim() != D) throw input_error("sequences have mixed dimensions");
  }
  if (total == 0) throw input_error("dataset has no frames");
  Eigen::MatrixXd frames(total, D);
  long row = 0;
  for (const auto& seq : dataset) {
    frames.middleRows(row, seq.length()) = seq.x;
    row += seq.length();
  }
  return frames;
}

// cov_floor is expressed in units of pooled per-dimension variance; a zero
// pooled variance (degenerate data) falls back to an absolute floor.
double absolute_floor(const Eigen::MatrixXd& frames, double cov_floor) {
  Eigen::RowVectorXd mean = frames.colwise().mean();
  double var =
      (frames.rowwise() - mean).array().square().sum() /
      (static_cast<double>(frames.rows()) * static_cast<double>(frames.cols()));
  return cov_floor * (var > 0.0 ? var : 1.0);
}

Eigen::MatrixXd floor_spd(const Eigen::MatrixXd& m, double floor_abs) {
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor_abs);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double rel_change(double prev, double cur) {
  return std::abs(cur - prev) / std::max(std::abs(prev), 1e-12);
}

struct GmmState {
  Eigen::VectorXd weight;               // K
  std::vector<Eigen::VectorXd> mean;    // K x D
  std::vector<Eigen::MatrixXd> cov;     // K x DxD
};

// One EM sweep over pooled frames; diagonal=true restricts covariances to
// their diagonals before evaluating responsibilities.
void gmm_em_sweep(GmmState& gmm, const Eigen::MatrixXd& frames, bool diagonal,
                  double floor_abs) {
  const long n = frames.rows();
  const int D = static_cast<int>(frames.cols());
  const int K = static_cast<int>(gmm.mean.size());
  const double log2pi = std::log(2.0 * M_PI);

  Eigen::MatrixXd logr(n, K);
  for (int k = 0; k < K; ++k) {
    if (diagonal) {
      Eigen::VectorXd d = gmm.cov[k].diagonal().cwiseMax(floor_abs);
      double log_norm =
          -0.5 * (D * log2pi + d.array().log().sum()) + std::log(gmm.weight(k));
      Eigen::MatrixXd centered =
          frames.rowwise() - gmm.mean[k].transpose();
      logr.col(k) =
          (centered.array().square().rowwise() * (0.5 / d.array()).transpose())
              .rowwise()
              .sum()
              .matrix() *
          -1.0;
      logr.col(k).array() += log_norm;
    } else {
      Eigen::LLT<Eigen::MatrixXd> llt(gmm.cov[k]);
      double logdet =
          2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      Eigen::MatrixXd w =
          llt.matrixL().solve((frames.rowwise() - gmm.mean[k].transpose()).transpose());
      logr.col(k) = (-0.5 * w.colwise().squaredNorm().array() -
                     0.5 * (D * log2pi + logdet) + std::log(gmm.weight(k)))
                        .matrix()
                        .transpose();
    }
  }
  Eigen::VectorXd rowmax = logr.rowwise().maxCoeff();
  Eigen::MatrixXd r = (logr.colwise() - rowmax).array().exp();
  r.array().colwise() /= r.rowwise().sum().array();

  for (int k = 0; k < K; ++k) {
    double nk = r.col(k).sum();
    if (nk < kStarvationWeight) continue;  // keep previous parameters
    Eigen::VectorXd mean = (frames.transpose() * r.col(k)) / nk;
    Eigen::MatrixXd centered = frames.rowwise() - mean.transpose();
    Eigen::MatrixXd cov =
        (centered.transpose() * (centered.array().colwise() * r.col(k).array()).matrix()) /
        nk;
    gmm.weight(k) = nk / static_cast<double>(n);
    gmm.mean[k] = mean;
    gmm.cov[k] = floor_spd(cov, floor_abs);
  }
  gmm.weight /= gmm.weight.sum();
}

}  // namespace

void FitConfig::validate() const {
  if (M < 1) throw input_error("M must be >= 1");
  if (L < 1) throw input_error("L must be >= 1");
  if (eta < 0.0) throw input_error("eta must be non-negative");
  if (K < 1) throw input_error("K must be >= 1");
  if (cov_floor <= 0.0) throw input_error("cov_floor must be positive");
  if (alpha <= 0.0) throw input_error("alpha must be positive");
  if (kappa < 0.0) throw input_error("kappa must be non-negative");
}

std::pair<std::vector<Eigen::VectorXd>, std::vector<Eigen::MatrixXd>> gmm_init(
    const Dataset& dataset, int K, std::uint64_t seed, double cov_floor) {
  Eigen::MatrixXd frames = pooled_frames(dataset);
  const long n = frames.rows();
  const int D = static_cast<int>(frames.cols());
  if (n < static_cast<long>(K) * (D + 1))
    throw input_error("gmm_init needs at least K*(D+1) = " +
                      std::to_string(static_cast<long>(K) * (D + 1)) +
                      " pooled frames, got " + std::to_string(n));
  double floor_abs = absolute_floor(frames, cov_floor);

  // k-means++ seeding + Lloyd, best of several restarts by within-cluster
  // SSE; a single seeding merges well-separated clusters often enough to
  // matter on multimodal data
  std::mt19937_64 rng = substream(seed, 0xd1e5);
  std::uniform_int_distribution<long> pick(0, n - 1);
  std::vector<Eigen::VectorXd> centers;
  double best_sse = std::numeric_limits<double>::infinity();
  constexpr int kRestarts = 8;
  for (int restart = 0; restart < kRestarts; ++restart) {
    std::vector<Eigen::VectorXd> cand;
    cand.push_back(frames.row(pick(rng)).transpose());
    Eigen::VectorXd d2 =
        (frames.rowwise() - cand[0].transpose()).rowwise().squaredNorm();
    while (static_cast<int>(cand.size()) < K) {
      double total = d2.sum();
      long chosen = 0;
      if (total > 0.0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double target = u(rng), acc = 0.0;
        for (long i = 0; i < n; ++i) {
          acc += d2(i);
          if (acc >= target) { chosen = i; break; }
        }
      } else {
        chosen = pick(rng);
      }
      cand.push_back(frames.row(chosen).transpose());
      d2 = d2.cwiseMin(
          (frames.rowwise() - cand.back().transpose()).rowwise().squaredNorm());
    }

    // a few Lloyd iterations to settle the seeds
    std::vector<int> assign(n, 0);
    for (int it = 0; it < 10; ++it) {
      for (long i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) {
          double dist = (frames.row(i).transpose() - cand[k]).squaredNorm();
          if (dist < best) { best = dist; assign[i] = k; }
        }
      }
      std::vector<Eigen::VectorXd> sums(K, Eigen::VectorXd::Zero(D));
      std::vector<long> counts(K, 0);
      for (long i = 0; i < n; ++i) {
        sums[assign[i]] += frames.row(i).transpose();
        ++counts[assign[i]];
      }
      for (int k = 0; k < K; ++k)
        if (counts[k] > 0) cand[k] = sums[k] / static_cast<double>(counts[k]);
    }

    double sse = 0.0;
    for (long i = 0; i < n; ++i)
      sse += (frames.row(i).transpose() - cand[assign[i]]).squaredNorm();
    if (sse < best_sse) {
      best_sse = sse;
      centers = std::move(cand);
    }
  }

  GmmState gmm;
  gmm.weight = Eigen::VectorXd::Constant(K, 1.0 / K);
  gmm.mean = centers;
  Eigen::RowVectorXd mean = frames.colwise().mean();
  Eigen::MatrixXd centered = frames.rowwise() - mean;
  Eigen::MatrixXd pooled_cov =
      floor_spd(centered.transpose() * centered / static_cast<double>(n), floor_abs);
  gmm.cov.assign(K, pooled_cov);

  for (int it = 0; it < 25; ++it) gmm_em_sweep(gmm, frames, true, floor_abs);
  for (int it = 0; it < 25; ++it) gmm_em_sweep(gmm, frames, false, floor_abs);

  for (auto& cov : gmm.cov) cov = floor_spd(cov, floor_abs);
  return {gmm.mean, gmm.cov};
}

std::vector<std::vector<Posterior>> e_step(const ModelParams& params,
                                           const Dataset& dataset, int threads,
                                           const PosteriorFn& fn) {
  const long N = static_cast<long>(dataset.size());
  const int C = params.C;
  std::vector<std::vector<Posterior>> out(N);
  for (auto& row : out) row.resize(C);
  parallel_for(N * C, threads, [&](long idx) {
    long n = idx / C;
    int c = static_cast<int>(idx % C);
    out[n][c] = fn(params, c, dataset[n]);
  });
  return out;
}

namespace {

void check_posteriors(const ModelParams& params, const Dataset& dataset,
                      const std::vector<std::vector<Posterior>>& posteriors) {
  if (posteriors.size() != dataset.size())
    throw contract_error("posteriors/dataset size mismatch");
  for (size_t n = 0; n < dataset.size(); ++n) {
    if (static_cast<int>(posteriors[n].size()) != params.C)
      throw contract_error("posteriors[" + std::to_string(n) +
                           "] does not cover all classes");
    if (posteriors[n].empty()) continue;
    if (posteriors[n][0].gamma.rows() != dataset[n].length() ||
        posteriors[n][0].gamma.cols() != params.K)
      throw contract_error("posterior gamma shape mismatch at sequence " +
                           std::to_string(n));
  }
}

}  // namespace

double transition_objective(const ModelParams& params, const Dataset& dataset,
                            const std::vector<std::vector<Posterior>>& posteriors,
                            int only_class) {
  double total = 0.0;
  for (size_t n = 0; n < dataset.size(); ++n) {
    const Sequence& seq = dataset[n];
    if (!seq.label) continue;
    int y = *seq.label;
    if (only_class >= 0 && y != only_class) continue;
    const Posterior& post = posteriors[n][y];
    for (int t = 0; t + 1 < seq.length(); ++t) {
      Eigen::MatrixXd lp = log_recurrent_transition(params, y, seq.x.row(t));
      for (int i = 0; i < params.K; ++i)
        for (int j = 0; j < params.K; ++j) {
          double w = post.xi[t](i, j);
          if (w > 0.0) total += w * lp(j, i);
        }
    }
  }
  if (only_class >= 0)
    total += log_prior_pi(params, only_class);
  else
    for (int c = 0; c < params.C; ++c) total += log_prior_pi(params, c);
  return total;
}

double ecll(const ModelParams& params, const Dataset& dataset,
            const std::vector<std::vector<Posterior>>& posteriors) {
  check_posteriors(params, dataset, posteriors);
  EmissionModel emis(params);
  double total = 0.0;
  for (size_t n = 0; n < dataset.size(); ++n) {
    const Sequence& seq = dataset[n];
    if (!seq.label) continue;  // 1[y=c] gate zeroes unlabeled contributions
    const Posterior& post = posteriors[n][*seq.label];
    Eigen::MatrixXd loglik = emis.loglik_matrix(seq.x);
    for (int k = 0; k < params.K; ++k) {
      double g1 = post.gamma(0, k);
      if (g1 > 0.0) total += g1 * std::log(params.init_dist(k));
    }
    total += (post.gamma.array() * loglik.array()).sum();
  }
  total += transition_objective(params, dataset, posteriors, -1);
  return total;
}

std::pair<std::vector<Eigen::VectorXd>, std::vector<Eigen::MatrixXd>>
m_step_gaussian(const ModelParams& params, const Dataset& dataset,
                const std::vector<std::vector<Posterior>>& posteriors,
                double cov_floor, std::vector<std::string>* warnings) {
  check_posteriors(params, dataset, posteriors);
  const int K = params.K;
  const int D = params.D;
  double floor_abs = absolute_floor(pooled_frames(dataset), cov_floor);

  Eigen::VectorXd weight = Eigen::VectorXd::Zero(K);
  std::vector<Eigen::VectorXd> sum_x(K, Eigen::VectorXd::Zero(D));
  for (size_t n = 0; n < dataset.size(); ++n) {
    if (!dataset[n].label) continue;
    const Posterior& post = posteriors[n][*dataset[n].label];
    weight += post.gamma.colwise().sum().transpose();
    for (int k = 0; k < K; ++k)
      sum_x[k] += dataset[n].x.transpose() * post.gamma.col(k);
  }

  std::vector<Eigen::VectorXd> mu(K);
  std::vector<Eigen::MatrixXd> sigma(K);
  std::vector<bool> starved(K, false);
  for (int k = 0; k < K; ++k) {
    if (weight(k) < kStarvationWeight) {
      starved[k] = true;
      mu[k] = params.mu[k];
      sigma[k] = params.sigma[k];
      if (warnings)
        warnings->push_back("state " + std::to_string(k) +
                            " starved (total weight " +
                            std::to_string(weight(k)) + "); parameters kept");
      continue;
    }
    mu[k] = sum_x[k] / weight(k);
  }

  std::vector<Eigen::MatrixXd> scatter(K, Eigen::MatrixXd::Zero(D, D));
  for (size_t n = 0; n < dataset.size(); ++n) {
    if (!dataset[n].label) continue;
    const Posterior& post = posteriors[n][*dataset[n].label];
    for (int k = 0; k < K; ++k) {
      if (starved[k]) continue;
      Eigen::MatrixXd centered = dataset[n].x.rowwise() - mu[k].transpose();
      scatter[k] += centered.transpose() *
                    (centered.array().colwise() * post.gamma.col(k).array()).matrix();
    }
  }
  for (int k = 0; k < K; ++k)
    if (!starved[k]) sigma[k] = floor_spd(scatter[k] / weight(k), floor_abs);
  return {mu, sigma};
}

Eigen::MatrixXd grad_g(const ModelParams& params, const Dataset& dataset,
                       const std::vector<std::vector<Posterior>>& posteriors) {
  check_posteriors(params, dataset, posteriors);
  const int K = params.K;
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(K, params.D);
  for (size_t n = 0; n < dataset.size(); ++n) {
    const Sequence& seq = dataset[n];
    if (!seq.label) continue;
    const Posterior& post = posteriors[n][*seq.label];
    for (int t = 0; t + 1 < seq.length(); ++t) {
      Eigen::MatrixXd psi = recurrent_transition(params, *seq.label, seq.x.row(t));
      Eigen::VectorXd dest = post.xi[t].rowwise().sum();  // over source j
      Eigen::VectorXd src = post.xi[t].colwise().sum();   // over dest i
      Eigen::VectorXd d = dest - psi.transpose() * src;   // softmax gradient
      grad.noalias() += d * seq.x.row(t);
    }
  }
  return grad;
}

Eigen::MatrixXd grad_pi(const ModelParams& params, int c, const Dataset& dataset,
                        const std::vector<std::vector<Posterior>>& posteriors) {
  check_posteriors(params, dataset, posteriors);
  if (c < 0 || c >= params.C) throw input_error("class index out of range");
  const int K = params.K;
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(K, K);
  for (size_t n = 0; n < dataset.size(); ++n) {
    const Sequence& seq = dataset[n];
    if (!seq.label || *seq.label != c) continue;
    const Posterior& post = posteriors[n][c];
    for (int t = 0; t + 1 < seq.length(); ++t) {
      // Psi row k is softmax(Pi~[k,:] + G x_t), so the data term has the
      // same softmax-gradient structure as grad_g, row by row.
      Eigen::MatrixXd psi = recurrent_transition(params, c, seq.x.row(t));
      Eigen::VectorXd src = post.xi[t].colwise().sum();
      grad += post.xi[t].transpose();  // (k, m): mass of k -> m
      grad -= src.asDiagonal() * psi;
    }
  }
  // prior: d/dPi~[k,m] sum_j (a_j - 1) log Pi[k,j]; entries at the simplex
  // floor are treated as constants, matching the clamped evaluation.
  for (int k = 0; k < K; ++k) {
    double s = 0.0;
    Eigen::VectorXd coef(K);
    for (int j = 0; j < K; ++j) {
      double a = params.alpha + (j == k ? params.kappa : 0.0);
      bool active = params.pi[c](k, j) >= kSimplexFloor;
      coef(j) = active ? (a - 1.0) : 0.0;
      s += coef(j);
    }
    grad.row(k) += coef.transpose() - s * params.pi[c].row(k);
  }
  return grad;
}

namespace {

Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (int k = 0; k < logits.rows(); ++k) {
    Eigen::RowVectorXd row =
        (logits.row(k).array() - logits.row(k).maxCoeff()).exp();
    out.row(k) = row / row.sum();
  }
  return out;
}

double penalized_loglik(const ModelParams& params, const Dataset& dataset,
                        const std::vector<std::vector<Posterior>>& posteriors) {
  double obj = 0.0;
  for (size_t n = 0; n < dataset.size(); ++n) {
    int y = *dataset[n].label;
    obj += posteriors[n][y].log_evidence;
  }
  for (int c = 0; c < params.C; ++c) obj += log_prior_pi(params, c);
  return obj;
}

// Backtracking ascent step: halve eta until the objective does not decrease,
// up to 30 times; a zero step is accepted if all halvings fail. set(step)
// places the parameter at base + step * gradient (absolute, so the zero step
// restores the base exactly).
template <typename Set, typename Objective>
void backtrack_step(double eta, const Set& set, const Objective& objective,
                    double f0) {
  for (int half = 0; half < 30; ++half) {
    set(eta);
    if (objective() >= f0) return;
    eta *= 0.5;
  }
  set(0.0);
}

}  // namespace

FitReport em_fit(const Dataset& dataset, const FitConfig& config,
                 const PosteriorFn& fn) {
  config.validate();
  if (dataset.empty()) throw input_error("em_fit needs a non-empty dataset");
  int C = 0;
  for (const auto& seq : dataset) {
    if (!seq.label)
      throw input_error("em_fit requires every sequence to be labeled ('" +
                        seq.id + "' is not)");
    C = std::max(C, *seq.label + 1);
  }
  std::vector<long> class_counts(C, 0);
  for (const auto& seq : dataset) ++class_counts[*seq.label];
  for (int c = 0; c < C; ++c)
    if (class_counts[c] == 0)
      throw input_error("class " + std::to_string(c) + " has no sequences");

  const int K = config.K;
  const int D = dataset.front().dim();

  ModelParams params;
  params.K = K;
  params.D = D;
  params.C = C;
  params.alpha = config.alpha;
  params.kappa = config.kappa;
  std::tie(params.mu, params.sigma) =
      gmm_init(dataset, K, config.seed, config.cov_floor);
  params.g = Eigen::MatrixXd::Zero(K, D);
  params.init_dist = Eigen::VectorXd::Constant(K, 1.0 / K);
  params.class_prior = Eigen::VectorXd(C);
  for (int c = 0; c < C; ++c)
    params.class_prior(c) =
        static_cast<double>(class_counts[c]) / static_cast<double>(dataset.size());
  params.class_names.resize(C);
  for (int c = 0; c < C; ++c) params.class_names[c] = "class_" + std::to_string(c);

  // Pi~ initialized as small Gaussian noise around the log sticky prior mean.
  // The same noise matrix seeds every class, so relabeling classes in the
  // dataset permutes the fitted {Pi_c} exactly.
  std::mt19937_64 rng = substream(config.seed, 0x9100);
  std::normal_distribution<double> noise(0.0, 1.0);
  Eigen::MatrixXd logits(K, K);
  double denom = K * config.alpha + config.kappa;
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < K; ++j) {
      double target = (config.alpha + (j == k ? config.kappa : 0.0)) / denom;
      logits(k, j) = std::log(target) + 0.01 * noise(rng);
    }
  std::vector<Eigen::MatrixXd> pi_logits(C, logits);
  params.pi.assign(C, row_softmax(logits));

  FitReport report;
  double prev_obj = -std::numeric_limits<double>::infinity();
  using clock = std::chrono::steady_clock;

  for (int m = 0; m < config.M; ++m) {
    auto t0 = clock::now();
    auto posteriors = e_step(params, dataset, config.threads, fn);
    auto t1 = clock::now();
    report.e_seconds_trace.push_back(std::chrono::duration<double>(t1 - t0).count());
    report.e_step_seconds += report.e_seconds_trace.back();

    double obj = penalized_loglik(params, dataset, posteriors);
    if (!std::isfinite(obj)) {
      std::ostringstream diag;
      diag << "non-finite objective at outer iteration " << m
           << "; per-sequence log-evidence:";
      for (size_t n = 0; n < dataset.size(); ++n)
        diag << ' ' << dataset[n].id << '='
             << posteriors[n][*dataset[n].label].log_evidence;
      throw numeric_error(diag.str());
    }
    report.objective_trace.push_back(obj);
    report.iterations_run = m + 1;
    if (m > 0 && rel_change(prev_obj, obj) < config.tol) {
      report.converged = true;
      break;
    }
    prev_obj = obj;

    std::tie(params.mu, params.sigma) = m_step_gaussian(
        params, dataset, posteriors, config.cov_floor, &report.warnings);

    for (int l = 0; l < config.L; ++l) {
      if (config.learn_g && config.eta > 0.0) {
        Eigen::MatrixXd dg = grad_g(params, dataset, posteriors);
        Eigen::MatrixXd g0 = params.g;
        double f0 = transition_objective(params, dataset, posteriors, -1);
        backtrack_step(
            config.eta,
            [&](double step) { params.g = g0 + step * dg; },
            [&] { return transition_objective(params, dataset, posteriors, -1); },
            f0);
      }
      if (config.eta > 0.0) {
        for (int c = 0; c < C; ++c) {
          Eigen::MatrixXd dpi = grad_pi(params, c, dataset, posteriors);
          Eigen::MatrixXd logits0 = pi_logits[c];
          double f0 = transition_objective(params, dataset, posteriors, c);
          backtrack_step(
              config.eta,
              [&](double step) {
                pi_logits[c] = logits0 + step * dpi;
                params.pi[c] = row_softmax(pi_logits[c]);
              },
              [&] { return transition_objective(params, dataset, posteriors, c); },
              f0);
        }
      }
    }
    auto t2 = clock::now();
    report.m_seconds_trace.push_back(std::chrono::duration<double>(t2 - t1).count());
    report.m_step_seconds += report.m_seconds_trace.back();
  }

  report.params = std::move(params);
  return report;
}

std::string GradcheckReport::to_json() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "{\"seed\": %llu, \"instances\": %d, \"max_rel_err_g\": %.17g, "
                "\"max_rel_err_pi\": %.17g}",
                static_cast<unsigned long long>(seed), instances, max_rel_err_g,
                max_rel_err_pi);
  return buf;
}

GradcheckReport gradcheck(std::uint64_t seed, int instances) {
  GradcheckReport report;
  report.seed = seed;
  report.instances = instances;
  const double h = 1e-5;

  for (int inst = 0; inst < instances; ++inst) {
    std::mt19937_64 rng = substream(seed, 0x6c0de + inst);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int K = 3, D = 2, C = 2, T = 5, N = 4;

    ModelParams params;
    params.K = K;
    params.D = D;
    params.C = C;
    params.alpha = 0.5;
    params.kappa = 2.0;
    for (int k = 0; k < K; ++k) {
      Eigen::VectorXd mu(D);
      for (int d = 0; d < D; ++d) mu(d) = normal(rng);
      params.mu.push_back(mu);
      Eigen::MatrixXd a(D, D);
      for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) a(i, j) = 0.3 * normal(rng);
      params.sigma.push_back(Eigen::MatrixXd::Identity(D, D) + a * a.transpose());
    }
    std::vector<Eigen::MatrixXd> logits(C);
    for (int c = 0; c < C; ++c) {
      logits[c].resize(K, K);
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) logits[c](i, j) = 0.5 * normal(rng);
      params.pi.push_back(row_softmax(logits[c]));
    }
    params.g.resize(K, D);
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < D; ++j) params.g(i, j) = 0.5 * normal(rng);
    params.class_prior = Eigen::VectorXd::Constant(C, 1.0 / C);
    params.init_dist = Eigen::VectorXd::Constant(K, 1.0 / K);

    Dataset dataset;
    for (int n = 0; n < N; ++n) {
      Sequence seq;
      seq.id = "gc_" + std::to_string(n);
      seq.label = n % C;
      seq.x.resize(T, D);
      for (int t = 0; t < T; ++t)
        for (int d = 0; d < D; ++d) seq.x(t, d) = normal(rng);
      dataset.push_back(std::move(seq));
    }

    auto posteriors = e_step(params, dataset, 1);

    // G block
    Eigen::MatrixXd ag = grad_g(params, dataset, posteriors);
    Eigen::MatrixXd fdg(K, D);
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < D; ++j) {
        ModelParams p = params;
        p.g(i, j) += h;
        double fp = ecll(p, dataset, posteriors);
        p.g(i, j) -= 2 * h;
        double fm = ecll(p, dataset, posteriors);
        fdg(i, j) = (fp - fm) / (2 * h);
      }
    double err_g = (ag - fdg).cwiseAbs().maxCoeff() /
                   std::max(fdg.cwiseAbs().maxCoeff(), 1e-12);
    report.max_rel_err_g = std::max(report.max_rel_err_g, err_g);

    // Pi~ blocks
    for (int c = 0; c < C; ++c) {
      Eigen::MatrixXd api = grad_pi(params, c, dataset, posteriors);
      Eigen::MatrixXd fdpi(K, K);
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) {
          ModelParams p = params;
          Eigen::MatrixXd lp = logits[c];
          lp(i, j) += h;
          p.pi[c] = row_softmax(lp);
          double fp = ecll(p, dataset, posteriors);
          lp(i, j) -= 2 * h;
          p.pi[c] = row_softmax(lp);
          double fm = ecll(p, dataset, posteriors);
          fdpi(i, j) = (fp - fm) / (2 * h);
        }
      double err_pi = (api - fdpi).cwiseAbs().maxCoeff() /
                      std::max(fdpi.cwiseAbs().maxCoeff(), 1e-12);
      report.max_rel_err_pi = std::max(report.max_rel_err_pi, err_pi);
    }
  }
  return report;
}

}  // namespace switchstate
