#include "switchstate/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace switchstate {

namespace {

// Expected complete-data log joint of one sequence under class y's
// posterior, including the Pi prior and the uniform class prior.
double class_score(const ModelParams& params, const Sequence& seq,
                   const Posterior& post) {
  EmissionModel emis(params);
  Eigen::MatrixXd loglik = emis.loglik_matrix(seq.x);
  double score = 0.0;
  for (int k = 0; k < params.K; ++k) {
    double g1 = post.gamma(0, k);
    if (g1 > 0.0) score += g1 * std::log(params.init_dist(k));
  }
  score += (post.gamma.array() * loglik.array()).sum();
  int y = post.class_index;
  for (int t = 0; t + 1 < seq.length(); ++t) {
    Eigen::MatrixXd lp = log_recurrent_transition(params, y, seq.x.row(t));
    for (int i = 0; i < params.K; ++i)
      for (int j = 0; j < params.K; ++j) {
        double w = post.xi[t](i, j);
        if (w > 0.0) score += w * lp(j, i);
      }
  }
  for (int c = 0; c < params.C; ++c) score += log_prior_pi(params, c);
  score -= std::log(static_cast<double>(params.C));  // uniform class prior
  return score;
}

std::vector<int> marginal_argmax_path(const Posterior& post) {
  std::vector<int> path(post.gamma.rows());
  for (int t = 0; t < post.gamma.rows(); ++t) {
    int k;
    post.gamma.row(t).maxCoeff(&k);
    path[t] = k;
  }
  return path;
}

void append_run_lengths(const std::vector<int>& path,
                        std::vector<std::vector<int>>& per_state) {
  size_t start = 0;
  for (size_t t = 1; t <= path.size(); ++t) {
    if (t == path.size() || path[t] != path[start]) {
      per_state[path[start]].push_back(static_cast<int>(t - start));
      start = t;
    }
  }
}

}  // namespace

ClassifyResult classify(const ModelParams& params, const Sequence& seq) {
  ClassifyResult result;
  result.scores.resize(params.C);
  for (int c = 0; c < params.C; ++c) {
    Posterior post = forward_backward(params, c, seq);
    result.scores(c) = class_score(params, seq, post);
  }
  result.predicted = 0;
  for (int c = 1; c < params.C; ++c)
    if (result.scores(c) > result.scores(result.predicted)) result.predicted = c;
  for (int c = 0; c < params.C; ++c)
    if (c != result.predicted && result.scores(c) == result.scores(result.predicted))
      result.tie = true;
  return result;
}

ViterbiResult viterbi(const ModelParams& params, int c, const Sequence& seq) {
  const int T = seq.length();
  const int K = params.K;
  EmissionModel emis(params);
  Eigen::MatrixXd loglik = emis.loglik_matrix(seq.x);

  Eigen::MatrixXd delta(T, K);
  Eigen::MatrixXi back(T, K);
  delta.row(0) =
      params.init_dist.array().max(0.0).log().transpose() + loglik.row(0).array();
  for (int t = 1; t < T; ++t) {
    Eigen::MatrixXd lp = log_recurrent_transition(params, c, seq.x.row(t - 1));
    for (int i = 0; i < K; ++i) {
      int argmax = 0;
      double best = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < K; ++j) {
        double v = delta(t - 1, j) + lp(j, i);
        if (v > best) { best = v; argmax = j; }
      }
      delta(t, i) = best + loglik(t, i);
      back(t, i) = argmax;
    }
  }

  ViterbiResult result;
  result.path.resize(T);
  int last;
  result.log_prob = delta.row(T - 1).maxCoeff(&last);
  result.path[T - 1] = last;
  for (int t = T - 1; t > 0; --t)
    result.path[t - 1] = back(t, result.path[t]);
  return result;
}

Eigen::MatrixXd state_utilization(const ModelParams& params,
                                  const std::vector<Sequence>& dataset) {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(params.C, params.K);
  Eigen::VectorXd frames = Eigen::VectorXd::Zero(params.C);
  for (const auto& seq : dataset) {
    if (!seq.label) throw contract_error("state_utilization requires labels");
    Posterior post = forward_backward(params, *seq.label, seq);
    sums.row(*seq.label) += post.gamma.colwise().sum();
    frames(*seq.label) += seq.length();
  }
  for (int c = 0; c < params.C; ++c) {
    if (frames(c) == 0.0) {
      sums.row(c).setConstant(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    sums.row(c) /= sums.row(c).sum();
  }
  return sums;
}

std::vector<std::vector<std::vector<int>>> dwell_durations(
    const ModelParams& params, const std::vector<Sequence>& dataset,
    DecodeMode mode) {
  std::vector<std::vector<std::vector<int>>> out(
      params.C, std::vector<std::vector<int>>(params.K));
  for (const auto& seq : dataset) {
    if (!seq.label) throw contract_error("dwell_durations requires labels");
    int y = *seq.label;
    std::vector<int> path =
        mode == DecodeMode::Viterbi
            ? viterbi(params, y, seq).path
            : marginal_argmax_path(forward_backward(params, y, seq));
    append_run_lengths(path, out[y]);
  }
  return out;
}

std::vector<std::vector<CovarianceEdge>> covariance_edges(
    const ModelParams& params, const std::vector<std::string>& region_names,
    int top_n) {
  if (static_cast<int>(region_names.size()) != params.D)
    throw contract_error("region_names has " +
                         std::to_string(region_names.size()) +
                         " entries, model has D = " + std::to_string(params.D));
  std::vector<std::vector<CovarianceEdge>> out(params.K);
  for (int k = 0; k < params.K; ++k) {
    std::vector<CovarianceEdge> edges;
    for (int i = 0; i < params.D; ++i)
      for (int j = i + 1; j < params.D; ++j) {
        double v = params.sigma[k](i, j);
        if (v == 0.0) continue;
        edges.push_back({i, j, region_names[i], region_names[j], v});
      }
    std::stable_sort(edges.begin(), edges.end(),
                     [](const CovarianceEdge& a, const CovarianceEdge& b) {
                       if (std::abs(a.value) != std::abs(b.value))
                         return std::abs(a.value) > std::abs(b.value);
                       if (a.region_i != b.region_i) return a.region_i < b.region_i;
                       return a.region_j < b.region_j;
                     });
    if (static_cast<int>(edges.size()) > top_n) edges.resize(top_n);
    out[k] = std::move(edges);
  }
  return out;
}

Metrics metrics_from_confusion(long tp, long fn, long tn, long fp) {
  Metrics m;
  m.tp = tp;
  m.fn = fn;
  m.tn = tn;
  m.fp = fp;
  auto pct = [](long num, long den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return 100.0 * static_cast<double>(num) / static_cast<double>(den);
  };
  m.accuracy = pct(tp + tn, tp + tn + fp + fn);
  m.sensitivity = pct(tp, tp + fn);
  m.specificity = pct(tn, tn + fp);
  m.ppv = pct(tp, tp + fp);
  m.npv = pct(tn, tn + fn);
  return m;
}

Metrics evaluate(const ModelParams& params, const std::vector<Sequence>& dataset,
                 int positive_class) {
  long tp = 0, fn = 0, tn = 0, fp = 0;
  for (const auto& seq : dataset) {
    if (!seq.label)
      throw contract_error("evaluate requires labels ('" + seq.id + "' has none)");
    int predicted = classify(params, seq).predicted;
    bool actual_pos = *seq.label == positive_class;
    bool pred_pos = predicted == positive_class;
    if (actual_pos && pred_pos) ++tp;
    else if (actual_pos) ++fn;
    else if (pred_pos) ++fp;
    else ++tn;
  }
  return metrics_from_confusion(tp, fn, tn, fp);
}

std::string AnalyticsReport::to_json() const {
  nlohmann::json j;
  j["class_names"] = class_names;
  auto& util = j["utilization"];
  for (int c = 0; c < utilization.rows(); ++c) {
    std::vector<double> row(utilization.cols());
    for (int k = 0; k < utilization.cols(); ++k) row[k] = utilization(c, k);
    util.push_back(row);
  }
  j["durations"] = durations;
  for (const auto& pi : transition_matrices) {
    std::vector<std::vector<double>> mat;
    for (int k = 0; k < pi.rows(); ++k)
      mat.emplace_back(pi.row(k).begin(), pi.row(k).end());
    j["transition_matrices"].push_back(mat);
  }
  auto& ej = j["covariance_edges"];
  for (const auto& per_state : covariance_edges) {
    nlohmann::json lst = nlohmann::json::array();
    for (const auto& e : per_state)
      lst.push_back({{"region_i", e.region_i},
                     {"region_j", e.region_j},
                     {"name_i", e.name_i},
                     {"name_j", e.name_j},
                     {"value", e.value}});
    ej.push_back(lst);
  }
  return j.dump(2);
}

AnalyticsReport build_analytics_report(const ModelParams& params,
                                       const std::vector<Sequence>& dataset,
                                       const std::vector<std::string>& region_names,
                                       int top_n, DecodeMode mode) {
  AnalyticsReport report;
  report.utilization = state_utilization(params, dataset);
  report.durations = dwell_durations(params, dataset, mode);
  report.transition_matrices = params.pi;
  report.covariance_edges = covariance_edges(params, region_names, top_n);
  report.class_names = params.class_names;
  return report;
}

namespace {

// blue -> white -> red over [lo, hi]
std::string heat_color(double v, double lo, double hi) {
  double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
  t = std::clamp(t, 0.0, 1.0);
  int r, g, b;
  if (t < 0.5) {
    double s = t / 0.5;
    r = static_cast<int>(255 * s);
    g = static_cast<int>(255 * s);
    b = 255;
  } else {
    double s = (t - 0.5) / 0.5;
    r = 255;
    g = static_cast<int>(255 * (1 - s));
    b = static_cast<int>(255 * (1 - s));
  }
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

void write_transition_svg(const ModelParams& params, const std::string& path) {
  const int cell = 28, pad = 30, gap = 40;
  const int K = params.K;
  int width = pad + params.C * (K * cell + gap);
  int height = pad * 2 + K * cell;
  std::ofstream f(path);
  if (!f) throw io_error("cannot open '" + path + "' for writing");
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
    << "\" height=\"" << height << "\">\n";
  for (int c = 0; c < params.C; ++c) {
    int x0 = pad + c * (K * cell + gap);
    std::string name =
        c < static_cast<int>(params.class_names.size()) ? params.class_names[c]
                                                        : std::to_string(c);
    f << "<text x=\"" << x0 << "\" y=\"" << pad - 10
      << "\" font-size=\"12\" font-family=\"sans-serif\">" << name << "</text>\n";
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) {
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
                      "fill=\"%s\"><title>%.4f</title></rect>\n",
                      x0 + j * cell, pad + i * cell, cell, cell,
                      heat_color(params.pi[c](i, j), 0.0, 1.0).c_str(),
                      params.pi[c](i, j));
        f << buf;
      }
  }
  f << "</svg>\n";
}

void write_utilization_svg(const Eigen::MatrixXd& utilization,
                           const std::vector<std::string>& class_names,
                           const std::string& path) {
  const int bar_w = 24, group_gap = 20, pad = 30, chart_h = 160;
  const int C = static_cast<int>(utilization.rows());
  const int K = static_cast<int>(utilization.cols());
  int width = pad * 2 + K * (C * bar_w + group_gap);
  int height = chart_h + pad * 2;
  const char* palette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44",
                           "#66ccee", "#aa3377"};
  std::ofstream f(path);
  if (!f) throw io_error("cannot open '" + path + "' for writing");
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
    << "\" height=\"" << height << "\">\n";
  for (int k = 0; k < K; ++k) {
    int x0 = pad + k * (C * bar_w + group_gap);
    for (int c = 0; c < C; ++c) {
      double v = utilization(c, k);
      if (!std::isfinite(v)) v = 0.0;
      int h = static_cast<int>(v * chart_h);
      char buf[256];
      std::snprintf(buf, sizeof(buf),
                    "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
                    "fill=\"%s\"><title>%s k=%d: %.4f</title></rect>\n",
                    x0 + c * bar_w, pad + chart_h - h, bar_w, h,
                    palette[c % 6],
                    c < static_cast<int>(class_names.size())
                        ? class_names[c].c_str()
                        : "?",
                    k, v);
      f << buf;
    }
    f << "<text x=\"" << x0 << "\" y=\"" << pad + chart_h + 14
      << "\" font-size=\"11\" font-family=\"sans-serif\">k=" << k << "</text>\n";
  }
  f << "</svg>\n";
}

void write_edges_csv(const std::vector<std::vector<CovarianceEdge>>& edges,
                     const std::string& path) {
  std::ofstream f(path);
  if (!f) throw io_error("cannot open '" + path + "' for writing");
  f << "state,region_i,region_j,value\n";
  char buf[256];
  for (size_t k = 0; k < edges.size(); ++k)
    for (const auto& e : edges[k]) {
      std::snprintf(buf, sizeof(buf), "%zu,%s,%s,%.17g\n", k, e.name_i.c_str(),
                    e.name_j.c_str(), e.value);
      f << buf;
    }
}

}  // namespace switchstate
