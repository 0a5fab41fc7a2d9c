#include <doctest.h>

#include <cmath>
#include <random>

#include "switchstate/learning.hpp"
#include "switchstate/simulator.hpp"
#include "test_util.hpp"

using namespace switchstate;
using ss_test::random_params;
using ss_test::random_sequence;

namespace {

Dataset labeled_dataset(int N, int T, int D, int C, std::uint64_t seed) {
  Dataset ds;
  for (int n = 0; n < N; ++n) {
    Sequence seq = random_sequence(T, D, seed * 1000 + n, n % C);
    seq.id = "seq_" + std::to_string(n);
    ds.push_back(std::move(seq));
  }
  return ds;
}

}  // namespace

TEST_CASE("gmm_init recovers well-separated cluster centers") {
  std::mt19937_64 rng(51);
  std::normal_distribution<double> noise(0.0, 0.3);
  Dataset ds;
  Sequence seq;
  seq.id = "clusters";
  seq.x.resize(600, 2);
  for (int t = 0; t < 600; ++t) {
    double cx = t % 2 == 0 ? -3.0 : 3.0;
    seq.x(t, 0) = cx + noise(rng);
    seq.x(t, 1) = -cx + noise(rng);
  }
  ds.push_back(seq);
  auto [mu, sigma] = gmm_init(ds, 2, 7);
  std::vector<Eigen::Vector2d> truth = {{-3.0, 3.0}, {3.0, -3.0}};
  for (const auto& center : truth) {
    double best = 1e9;
    for (const auto& m : mu) best = std::min(best, (m - center).norm());
    CHECK(best < 0.1);
  }
}

TEST_CASE("gmm_init with one component equals pooled statistics") {
  Dataset ds = labeled_dataset(3, 40, 2, 1, 52);
  auto [mu, sigma] = gmm_init(ds, 1, 0);
  Eigen::MatrixXd frames(120, 2);
  for (int n = 0; n < 3; ++n) frames.middleRows(40 * n, 40) = ds[n].x;
  Eigen::RowVectorXd mean = frames.colwise().mean();
  Eigen::MatrixXd centered = frames.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / 120.0;
  CHECK((mu[0].transpose() - mean).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((sigma[0] - cov).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("gmm_init degenerate data hits the covariance floor") {
  Dataset ds;
  Sequence seq;
  seq.id = "flat";
  seq.x = Eigen::MatrixXd::Constant(50, 2, 1.5);
  ds.push_back(seq);
  auto [mu, sigma] = gmm_init(ds, 1, 0, 1e-6);
  CHECK((mu[0].array() - 1.5).abs().maxCoeff() < 1e-12);
  CHECK((sigma[0] - 1e-6 * Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("gmm_init rejects too-few frames") {
  Dataset ds;
  Sequence seq;
  seq.id = "tiny";
  seq.x = Eigen::MatrixXd::Random(5, 3);
  ds.push_back(seq);
  CHECK_THROWS_AS(gmm_init(ds, 4, 0), Error);
}

TEST_CASE("e_step equals per-pair forward_backward calls") {
  ModelParams p = random_params(3, 2, 2, 53);
  Dataset ds = labeled_dataset(4, 6, 2, 2, 53);
  auto posteriors = e_step(p, ds, 2);
  REQUIRE(posteriors.size() == 4);
  for (int n = 0; n < 4; ++n)
    for (int c = 0; c < 2; ++c) {
      Posterior direct = forward_backward(p, c, ds[n]);
      CHECK(posteriors[n][c].log_evidence == direct.log_evidence);
      CHECK((posteriors[n][c].gamma - direct.gamma).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("e_step determinism on identical sequences") {
  ModelParams p = random_params(2, 2, 1, 54);
  Dataset ds = labeled_dataset(1, 8, 2, 1, 54);
  Sequence copy = ds[0];
  copy.id = "copy";
  ds.push_back(copy);
  auto posteriors = e_step(p, ds, 4);
  CHECK((posteriors[0][0].gamma - posteriors[1][0].gamma).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(posteriors[0][0].log_evidence == posteriors[1][0].log_evidence);
}

TEST_CASE("ecll single-state reduces to emission sums plus prior") {
  ModelParams p = random_params(1, 2, 1, 55);
  Dataset ds = labeled_dataset(2, 5, 2, 1, 55);
  auto posteriors = e_step(p, ds, 1);
  double expected = log_prior_pi(p, 0);
  for (const auto& seq : ds)
    for (int t = 0; t < seq.length(); ++t)
      expected += emission_logpdf(p, 0, seq.x.row(t).transpose());
  CHECK(ecll(p, ds, posteriors) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ecll matches a naive term-by-term summation") {
  ModelParams p = random_params(2, 2, 2, 56);
  Dataset ds = labeled_dataset(2, 3, 2, 2, 56);
  auto posteriors = e_step(p, ds, 1);
  long double ref = 0.0L;
  for (size_t n = 0; n < ds.size(); ++n) {
    const Posterior& post = posteriors[n][*ds[n].label];
    for (int k = 0; k < 2; ++k)
      ref += static_cast<long double>(post.gamma(0, k)) *
             std::log(p.init_dist(k));
    for (int t = 0; t < 3; ++t)
      for (int k = 0; k < 2; ++k)
        ref += static_cast<long double>(post.gamma(t, k)) *
               emission_logpdf(p, k, ds[n].x.row(t).transpose());
    for (int t = 0; t + 1 < 3; ++t) {
      Eigen::MatrixXd lp = log_recurrent_transition(
          p, *ds[n].label, ds[n].x.row(t).transpose());
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          ref += static_cast<long double>(post.xi[t](i, j)) * lp(j, i);
    }
  }
  for (int c = 0; c < 2; ++c) ref += log_prior_pi(p, c);
  CHECK(ecll(p, ds, posteriors) ==
        doctest::Approx(static_cast<double>(ref)).epsilon(1e-12));
}

TEST_CASE("sticky prior term grows with kappa for diagonal-dominant Pi") {
  ModelParams p = random_params(3, 2, 1, 57);
  for (int k = 0; k < 3; ++k) {
    p.pi[0].row(k).setConstant(0.05);
    p.pi[0](k, k) = 0.9;
  }
  Dataset ds = labeled_dataset(1, 4, 2, 1, 57);
  auto posteriors = e_step(p, ds, 1);
  double lo = ecll(p, ds, posteriors);
  ModelParams q = p;
  q.kappa = p.kappa + 10.0;
  double hi = ecll(q, ds, posteriors);
  // only the prior term moved, and upward
  CHECK(hi - lo ==
        doctest::Approx(log_prior_pi(q, 0) - log_prior_pi(p, 0)).epsilon(1e-12));
  CHECK(hi > lo);
}

TEST_CASE("m_step_gaussian pooled and hard-assignment reductions") {
  ModelParams p = random_params(1, 2, 1, 58);
  Dataset ds = labeled_dataset(2, 10, 2, 1, 58);
  auto posteriors = e_step(p, ds, 1);  // K=1: gamma all ones
  auto [mu, sigma] = m_step_gaussian(p, ds, posteriors);
  Eigen::MatrixXd frames(20, 2);
  frames << ds[0].x, ds[1].x;
  Eigen::RowVectorXd mean = frames.colwise().mean();
  Eigen::MatrixXd centered = frames.rowwise() - mean;
  CHECK((mu[0].transpose() - mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((sigma[0] - centered.transpose() * centered / 20.0).cwiseAbs().maxCoeff() <
        1e-9);

  // one-hot gamma assigning disjoint frame sets -> per-set statistics
  ModelParams p2 = random_params(2, 2, 1, 59);
  auto posteriors2 = e_step(p2, ds, 1);
  for (size_t n = 0; n < ds.size(); ++n) {
    posteriors2[n][0].gamma.col(0).setConstant(n == 0 ? 1.0 : 0.0);
    posteriors2[n][0].gamma.col(1).setConstant(n == 0 ? 0.0 : 1.0);
  }
  auto [mu2, sigma2] = m_step_gaussian(p2, ds, posteriors2);
  for (int k = 0; k < 2; ++k) {
    Eigen::RowVectorXd m = ds[k].x.colwise().mean();
    Eigen::MatrixXd c = ds[k].x.rowwise() - m;
    CHECK((mu2[k].transpose() - m).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((sigma2[k] - c.transpose() * c / 10.0).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("m_step_gaussian maximizes the emission term") {
  ModelParams p = random_params(2, 2, 1, 60);
  Dataset ds = labeled_dataset(2, 30, 2, 1, 60);
  auto posteriors = e_step(p, ds, 1);
  auto [mu, sigma] = m_step_gaussian(p, ds, posteriors);
  ModelParams best = p;
  best.mu = mu;
  best.sigma = sigma;
  auto emission_term = [&](const ModelParams& q) {
    EmissionModel emis(q);
    double total = 0.0;
    for (size_t n = 0; n < ds.size(); ++n)
      total += (posteriors[n][0].gamma.array() *
                emis.loglik_matrix(ds[n].x).array())
                   .sum();
    return total;
  };
  double at_max = emission_term(best);
  std::mt19937_64 rng(61);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int probe = 0; probe < 100; ++probe) {
    ModelParams q = best;
    for (int k = 0; k < 2; ++k) {
      for (int d = 0; d < 2; ++d) q.mu[k](d) += noise(rng);
      Eigen::MatrixXd jitter(2, 2);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) jitter(i, j) = noise(rng);
      q.sigma[k] += 0.5 * (jitter + jitter.transpose());
    }
    Eigen::LLT<Eigen::MatrixXd> llt0(q.sigma[0]), llt1(q.sigma[1]);
    if (llt0.info() != Eigen::Success || llt1.info() != Eigen::Success) continue;
    CHECK(emission_term(q) <= at_max + 1e-10);
  }
}

TEST_CASE("m_step_gaussian leaves starved states untouched") {
  ModelParams p = random_params(3, 2, 1, 62);
  Dataset ds = labeled_dataset(1, 10, 2, 1, 62);
  auto posteriors = e_step(p, ds, 1);
  posteriors[0][0].gamma.col(2).setZero();  // starve state 2
  std::vector<std::string> warnings;
  auto [mu, sigma] = m_step_gaussian(p, ds, posteriors, 1e-6, &warnings);
  CHECK(mu[2] == p.mu[2]);
  CHECK(sigma[2] == p.sigma[2]);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("state 2") != std::string::npos);
}

TEST_CASE("grad_g vanishes on constant-zero observations") {
  ModelParams p = random_params(3, 2, 1, 63);
  Dataset ds;
  Sequence seq;
  seq.id = "zeros";
  seq.label = 0;
  seq.x = Eigen::MatrixXd::Zero(6, 2);
  ds.push_back(seq);
  auto posteriors = e_step(p, ds, 1);
  CHECK(grad_g(p, ds, posteriors).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("grad_pi is zero with no class data and a flat prior") {
  ModelParams p = random_params(3, 2, 2, 64);
  p.alpha = 1.0;
  p.kappa = 0.0;
  Dataset ds = labeled_dataset(2, 5, 2, 1, 64);  // all labeled class 0
  auto posteriors = e_step(p, ds, 1);
  CHECK(grad_pi(p, 1, ds, posteriors).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("grad_pi rows sum to zero") {
  ModelParams p = random_params(4, 3, 2, 65);
  Dataset ds = labeled_dataset(4, 7, 3, 2, 65);
  auto posteriors = e_step(p, ds, 1);
  for (int c = 0; c < 2; ++c) {
    Eigen::MatrixXd grad = grad_pi(p, c, ds, posteriors);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(grad.row(k).sum()) < 1e-10);
  }
}

TEST_CASE("gradcheck reports small errors and is deterministic") {
  GradcheckReport a = gradcheck(0, 5);
  CHECK(a.max_rel_err_g < 1e-5);
  CHECK(a.max_rel_err_pi < 1e-5);
  GradcheckReport b = gradcheck(0, 5);
  CHECK(a.to_json() == b.to_json());
  GradcheckReport c = gradcheck(1, 5);
  CHECK(c.max_rel_err_g < 1e-5);
  CHECK(c.max_rel_err_pi < 1e-5);
}

TEST_CASE("em_fit with eta=0 does one analytic step and keeps transitions") {
  SimSpec spec;
  spec.mean_separation = 3.0;
  spec.kappa = 20.0;
  ModelParams truth = sample_params(2, 2, 2, spec, 66);
  SyntheticDataset sim = sample_dataset(truth, 8, 25, 66);

  FitConfig config;
  config.K = 2;
  config.M = 1;
  config.L = 1;
  config.eta = 0.0;
  config.seed = 3;
  FitReport report = em_fit(sim.sequences, config);
  CHECK(report.params.g.cwiseAbs().maxCoeff() == 0.0);

  // rebuild: init emissions + the (unchanged) fitted transitions
  ModelParams init = report.params;
  std::tie(init.mu, init.sigma) =
      gmm_init(sim.sequences, 2, config.seed, config.cov_floor);
  auto posteriors = e_step(init, sim.sequences, 1);
  auto [mu, sigma] =
      m_step_gaussian(init, sim.sequences, posteriors, config.cov_floor);
  for (int k = 0; k < 2; ++k) {
    CHECK((report.params.mu[k] - mu[k]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((report.params.sigma[k] - sigma[k]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("em_fit objective trace is monotone on synthetic data") {
  SimSpec spec;
  spec.mean_separation = 2.5;
  spec.kappa = 30.0;
  ModelParams truth = sample_params(3, 3, 2, spec, 67);
  SyntheticDataset sim = sample_dataset(truth, 10, 40, 67);
  FitConfig config;
  config.K = 3;
  config.M = 15;
  config.L = 4;
  config.eta = 0.05;
  config.seed = 1;
  FitReport report = em_fit(sim.sequences, config);
  for (size_t i = 1; i < report.objective_trace.size(); ++i) {
    double prev = report.objective_trace[i - 1];
    CHECK(report.objective_trace[i] >= prev - 1e-8 * std::abs(prev));
  }
}

TEST_CASE("em_fit is equivariant under class relabeling") {
  SimSpec spec;
  spec.mean_separation = 2.5;
  spec.kappa = 10.0;
  ModelParams truth = sample_params(2, 2, 2, spec, 68);
  SyntheticDataset sim = sample_dataset(truth, 8, 20, 68);

  FitConfig config;
  config.K = 2;
  config.M = 3;
  config.L = 2;
  config.eta = 0.05;
  config.seed = 5;
  FitReport base = em_fit(sim.sequences, config);

  Dataset swapped = sim.sequences;
  for (auto& seq : swapped) seq.label = 1 - *seq.label;
  FitReport perm = em_fit(swapped, config);

  for (int k = 0; k < 2; ++k) {
    CHECK((base.params.mu[k] - perm.params.mu[k]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((base.params.sigma[k] - perm.params.sigma[k]).cwiseAbs().maxCoeff() <
          1e-12);
  }
  CHECK((base.params.g - perm.params.g).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((base.params.pi[0] - perm.params.pi[1]).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((base.params.pi[1] - perm.params.pi[0]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("em_fit input validation") {
  FitConfig config;
  config.K = 2;
  CHECK_THROWS_AS(em_fit({}, config), Error);
  Dataset unlabeled;
  unlabeled.push_back(random_sequence(10, 2, 70));
  CHECK_THROWS_AS(em_fit(unlabeled, config), Error);
}

TEST_CASE("em_fit results do not depend on thread count") {
  SimSpec spec;
  spec.mean_separation = 2.0;
  ModelParams truth = sample_params(2, 2, 2, spec, 71);
  SyntheticDataset sim = sample_dataset(truth, 6, 15, 71);
  FitConfig config;
  config.K = 2;
  config.M = 3;
  config.L = 2;
  config.eta = 0.05;
  config.seed = 9;
  config.threads = 1;
  FitReport a = em_fit(sim.sequences, config);
  config.threads = 4;
  FitReport b = em_fit(sim.sequences, config);
  CHECK(a.objective_trace == b.objective_trace);
  CHECK((a.params.g - b.params.g).cwiseAbs().maxCoeff() == 0.0);
}
