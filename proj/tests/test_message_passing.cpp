#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "switchstate/inference.hpp"
#include "switchstate/simulator.hpp"
#include "test_util.hpp"

using namespace switchstate;
using ss_test::random_params;
using ss_test::random_sequence;

namespace {

double max_rel_diff(const Posterior& a, const Posterior& b) {
  double worst = std::abs(a.log_evidence - b.log_evidence) /
                 std::max(std::abs(b.log_evidence), 1e-300);
  for (int t = 0; t < a.gamma.rows(); ++t)
    for (int k = 0; k < a.gamma.cols(); ++k)
      worst = std::max(worst, std::abs(a.gamma(t, k) - b.gamma(t, k)) /
                                  std::max(b.gamma(t, k), 1e-300));
  for (size_t t = 0; t < a.xi.size(); ++t)
    worst = std::max(worst, ((a.xi[t] - b.xi[t]).cwiseAbs().cwiseQuotient(
                                 b.xi[t].cwiseMax(1e-300)))
                                .maxCoeff());
  return worst;
}

void check_consistency(const Posterior& post) {
  for (int t = 0; t < post.gamma.rows(); ++t)
    CHECK(std::abs(post.gamma.row(t).sum() - 1.0) < 1e-10);
  for (size_t t = 0; t < post.xi.size(); ++t) {
    CHECK(std::abs(post.xi[t].sum() - 1.0) < 1e-10);
    // marginal over the source state reproduces gamma at the later slice
    Eigen::VectorXd dest = post.xi[t].rowwise().sum();
    CHECK((dest.transpose() - post.gamma.row(t + 1)).cwiseAbs().maxCoeff() <
          1e-10);
    // and over the destination, the earlier slice
    Eigen::VectorXd src = post.xi[t].colwise().sum();
    CHECK((src.transpose() - post.gamma.row(t)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

}  // namespace

TEST_CASE("forward_backward single-slice case") {
  ModelParams p = random_params(3, 2, 1, 31);
  Sequence seq = random_sequence(1, 2, 31);
  Posterior post = forward_backward(p, 0, seq);
  CHECK(post.xi.empty());
  Eigen::VectorXd w(3);
  for (int k = 0; k < 3; ++k)
    w(k) = p.init_dist(k) *
           std::exp(emission_logpdf(p, k, seq.x.row(0).transpose()));
  CHECK(post.log_evidence == doctest::Approx(std::log(w.sum())).epsilon(1e-12));
  for (int k = 0; k < 3; ++k)
    CHECK(post.gamma(0, k) == doctest::Approx(w(k) / w.sum()).epsilon(1e-10));
}

TEST_CASE("forward_backward degenerate single-state chain") {
  ModelParams p = random_params(1, 3, 1, 32);
  Sequence seq = random_sequence(20, 3, 32);
  Posterior post = forward_backward(p, 0, seq);
  CHECK((post.gamma.array() - 1.0).abs().maxCoeff() < 1e-12);
  double expected = 0.0;
  for (int t = 0; t < 20; ++t)
    expected += emission_logpdf(p, 0, seq.x.row(t).transpose());
  CHECK(post.log_evidence == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("forward_backward matches brute-force enumeration") {
  ModelParams p = random_params(3, 2, 1, 33, 1.0);
  Sequence seq = random_sequence(6, 2, 33);
  Posterior fb = forward_backward(p, 0, seq);
  Posterior oracle = oracle_posterior(p, 0, seq);
  CHECK(max_rel_diff(fb, oracle) < 1e-10);
}

TEST_CASE("forward_backward vs oracle over random instances") {
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 60; ++rep) {
    int K = 2 + static_cast<int>(rng() % 3);
    int T = 3 + static_cast<int>(rng() % 4);
    int D = 1 + static_cast<int>(rng() % 2);
    ModelParams p = random_params(K, D, 2, 4000 + rep, 1.0);
    Sequence seq = random_sequence(T, D, 4000 + rep);
    int c = rep % 2;
    Posterior fb = forward_backward(p, c, seq);
    Posterior oracle = oracle_posterior(p, c, seq);
    CHECK(max_rel_diff(fb, oracle) < 1e-10);
    check_consistency(fb);
  }
}

TEST_CASE("oracle_posterior guards against exponential blow-up") {
  ModelParams p = random_params(4, 1, 1, 34);
  Sequence seq = random_sequence(30, 1, 34);  // 4^30 paths
  CHECK_THROWS_AS(oracle_posterior(p, 0, seq), Error);
}

TEST_CASE("deterministic one-hot chain pins the posterior") {
  ModelParams p = random_params(3, 1, 1, 35);
  p.pi[0].setZero();
  p.pi[0](0, 1) = 1.0;
  p.pi[0](1, 2) = 1.0;
  p.pi[0](2, 0) = 1.0;
  p.init_dist.setZero();
  p.init_dist(0) = 1.0;
  Sequence seq = random_sequence(5, 1, 35);
  Posterior post = oracle_posterior(p, 0, seq);
  std::vector<int> expected = {0, 1, 2, 0, 1};
  for (int t = 0; t < 5; ++t) {
    CHECK(post.gamma(t, expected[t]) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("uniform symmetric instance yields uniform marginals") {
  ModelParams p = random_params(2, 1, 1, 36);
  p.pi[0].setConstant(0.5);
  p.g.setZero();
  p.mu[1] = p.mu[0];
  p.sigma[1] = p.sigma[0];
  Sequence seq = random_sequence(3, 1, 36);
  Posterior post = oracle_posterior(p, 0, seq);
  CHECK((post.gamma.array() - 0.5).abs().maxCoeff() < 1e-12);
}

TEST_CASE("log_likelihood per-class evidence") {
  ModelParams p = random_params(3, 2, 3, 37);
  p.pi[1] = p.pi[0];
  p.pi[2] = p.pi[0];
  Sequence seq = random_sequence(8, 2, 37);
  Eigen::VectorXd ll = log_likelihood(p, seq);
  CHECK(ll(0) == doctest::Approx(ll(1)).epsilon(1e-14));
  CHECK(ll(0) == doctest::Approx(ll(2)).epsilon(1e-14));

  ModelParams single = random_params(3, 2, 1, 38);
  Eigen::VectorXd one = log_likelihood(single, seq);
  CHECK(one.size() == 1);
  CHECK(one(0) == forward_backward(single, 0, seq).log_evidence);
}

TEST_CASE("log_likelihood favors the generating class on average") {
  SimSpec spec;
  spec.mean_separation = 1.0;
  spec.mean_scale = 1.0;
  spec.g_scale = 0.0;
  spec.alpha = 0.2;
  spec.kappa = 5.0;
  ModelParams p = sample_params(3, 2, 2, spec, 39);
  double margin = 0.0;
  int wins = 0, n = 40;
  for (int i = 0; i < n; ++i) {
    auto [seq, path] = sample_sequence(p, 0, 60, 500 + i);
    seq.id = "ll_" + std::to_string(i);
    Eigen::VectorXd ll = log_likelihood(p, seq);
    margin += ll(0) - ll(1);
    if (ll(0) > ll(1)) ++wins;
  }
  CHECK(margin / n > 0.0);
  CHECK(wins > n / 2);
}

TEST_CASE("log_evidence is invariant to joint state relabeling") {
  ModelParams p = random_params(4, 2, 2, 40, 1.0);
  Sequence seq = random_sequence(10, 2, 40);
  double base = forward_backward(p, 1, seq).log_evidence;
  std::vector<int> perm = {2, 0, 3, 1};
  ModelParams q = p;
  for (int k = 0; k < 4; ++k) {
    q.mu[perm[k]] = p.mu[k];
    q.sigma[perm[k]] = p.sigma[k];
    q.g.row(perm[k]) = p.g.row(k);
    q.init_dist(perm[k]) = p.init_dist(k);
    for (int j = 0; j < 4; ++j)
      for (int c = 0; c < 2; ++c) q.pi[c](perm[k], perm[j]) = p.pi[c](k, j);
  }
  double permuted = forward_backward(q, 1, seq).log_evidence;
  CHECK(std::abs(base - permuted) / std::abs(base) < 1e-10);
}

TEST_CASE("long sticky sequence stays finite") {
  SimSpec spec;
  spec.mean_separation = 2.0;
  spec.kappa = 200.0;
  ModelParams p = sample_params(8, 3, 1, spec, 41);
  auto [seq, path] = sample_sequence(p, 0, 10000, 41);
  seq.id = "long";
  Posterior post = forward_backward(p, 0, seq);
  CHECK(std::isfinite(post.log_evidence));
  check_consistency(post);
}

TEST_CASE("dimension mismatch is reported with the sequence id") {
  ModelParams p = random_params(2, 3, 1, 42);
  Sequence seq = random_sequence(4, 2, 42);
  seq.id = "bad_dims";
  try {
    forward_backward(p, 0, seq);
    FAIL("expected input error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidArgument);
    CHECK(std::string(e.what()).find("bad_dims") != std::string::npos);
  }
}
