#pragma once

#include <optional>
#include <string>
#include <vector>

#include "switchstate/inference.hpp"
#include "switchstate/model.hpp"

namespace switchstate {

struct ClassifyResult {
  int predicted = 0;
  Eigen::VectorXd scores;  // expected complete-data log joint per class
  bool tie = false;        // broken toward the lowest class index
};

// Bayes classifier with uniform class prior: argmax over classes of the
// expected complete-data log joint under that class's posterior.
ClassifyResult classify(const ModelParams& params, const Sequence& seq);

struct ViterbiResult {
  std::vector<int> path;
  double log_prob = 0.0;  // log of the single best path's joint probability
};

// Max-probability path under the class-c time-varying chain.
ViterbiResult viterbi(const ModelParams& params, int c, const Sequence& seq);

enum class DecodeMode { Viterbi, MarginalArgmax };

// C x K expected fraction of time in state k for class c: average gamma
// under each sequence's labeled class, renormalized per class. A class with
// no sequences yields a NaN row.
Eigen::MatrixXd state_utilization(const ModelParams& params,
                                  const std::vector<Sequence>& dataset);

// Run lengths of decoded paths, collected per (class, state):
// durations[c][k] is a list of dwell lengths in timesteps.
std::vector<std::vector<std::vector<int>>> dwell_durations(
    const ModelParams& params, const std::vector<Sequence>& dataset,
    DecodeMode mode = DecodeMode::Viterbi);

struct CovarianceEdge {
  int region_i = 0;
  int region_j = 0;
  std::string name_i;
  std::string name_j;
  double value = 0.0;
};

// Per state, the top_n largest-|Sigma_k[i,j]| off-diagonal entries,
// descending; ties broken by (i, j) ascending.
std::vector<std::vector<CovarianceEdge>> covariance_edges(
    const ModelParams& params, const std::vector<std::string>& region_names,
    int top_n);

struct Metrics {
  long tp = 0, fn = 0, tn = 0, fp = 0;
  // percentages; absent when the denominator is zero
  std::optional<double> accuracy, sensitivity, specificity, ppv, npv;
};

Metrics metrics_from_confusion(long tp, long fn, long tn, long fp);

// Confusion-matrix metrics over a labeled dataset; positive_class maps the
// binary convention onto the class indices (default 1).
Metrics evaluate(const ModelParams& params, const std::vector<Sequence>& dataset,
                 int positive_class = 1);

struct AnalyticsReport {
  Eigen::MatrixXd utilization;  // C x K
  std::vector<std::vector<std::vector<int>>> durations;
  std::vector<Eigen::MatrixXd> transition_matrices;
  std::vector<std::vector<CovarianceEdge>> covariance_edges;
  std::vector<std::string> class_names;
  std::string to_json() const;
};

AnalyticsReport build_analytics_report(
    const ModelParams& params, const std::vector<Sequence>& dataset,
    const std::vector<std::string>& region_names, int top_n,
    DecodeMode mode = DecodeMode::Viterbi);

// Simple SVG exports of the learned transition matrices and per-class state
// utilization bars.
void write_transition_svg(const ModelParams& params, const std::string& path);
void write_utilization_svg(const Eigen::MatrixXd& utilization,
                           const std::vector<std::string>& class_names,
                           const std::string& path);

// covariance edges as CSV: state,region_i,region_j,value
void write_edges_csv(const std::vector<std::vector<CovarianceEdge>>& edges,
                     const std::string& path);

}  // namespace switchstate
