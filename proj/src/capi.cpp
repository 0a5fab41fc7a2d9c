#include "switchstate/switchstate.h"

#include <atomic>
#include <cstring>
#include <filesystem>
#include <random>

#include <json.hpp>

#include "switchstate/analytics.hpp"
#include "switchstate/io.hpp"
#include "switchstate/learning.hpp"
#include "switchstate/model.hpp"
#include "switchstate/rng.hpp"
#include "switchstate/simulator.hpp"

using namespace switchstate;
namespace fs = std::filesystem;

struct ss_model {
  ModelParams params;
};

struct ss_dataset {
  std::vector<Sequence> sequences;
  std::vector<std::string> class_names;
};

namespace {

thread_local std::string g_last_error;
std::atomic<int> g_threads{0};

ss_status status_of(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::InvalidArgument: return SS_ERR_INVALID_ARG;
    case ErrorKind::InvalidParameter: return SS_ERR_INVALID_PARAM;
    case ErrorKind::Numeric: return SS_ERR_NUMERIC;
    case ErrorKind::Io: return SS_ERR_IO;
    case ErrorKind::Contract: return SS_ERR_CONTRACT;
  }
  return SS_ERR_CONTRACT;
}

template <typename Fn>
ss_status guard(Fn&& fn) {
  try {
    fn();
    return SS_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SS_ERR_CONTRACT;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

int effective_threads(int config_threads) {
  if (config_threads > 0) return config_threads;
  return g_threads.load();
}

}  // namespace

extern "C" {

const char* ss_last_error(void) { return g_last_error.c_str(); }

void ss_string_free(char* s) { std::free(s); }

void ss_set_threads(int threads) { g_threads.store(threads > 0 ? threads : 0); }

ss_status ss_model_load(const char* path, ss_model** out) {
  return guard([&] {
    if (!path || !out) throw input_error("null argument");
    *out = new ss_model{load_model(path)};
  });
}

ss_status ss_model_save(const ss_model* model, const char* path) {
  return guard([&] {
    if (!model || !path) throw input_error("null argument");
    save_model(model->params, path);
  });
}

ss_status ss_model_to_json(const ss_model* model, char** out_json) {
  return guard([&] {
    if (!model || !out_json) throw input_error("null argument");
    *out_json = dup_string(model_to_json(model->params));
  });
}

ss_status ss_model_from_json(const char* json_text, ss_model** out) {
  return guard([&] {
    if (!json_text || !out) throw input_error("null argument");
    *out = new ss_model{model_from_json(json_text)};
  });
}

ss_status ss_model_dims(const ss_model* model, int* K, int* D, int* C) {
  return guard([&] {
    if (!model) throw input_error("null argument");
    if (K) *K = model->params.K;
    if (D) *D = model->params.D;
    if (C) *C = model->params.C;
  });
}

void ss_model_free(ss_model* model) { delete model; }

ss_status ss_dataset_load(const char* manifest_path, ss_dataset** out) {
  return guard([&] {
    if (!manifest_path || !out) throw input_error("null argument");
    DatasetManifest m = load_manifest(manifest_path);
    auto seqs = load_dataset(m, fs::path(manifest_path).parent_path().string());
    *out = new ss_dataset{std::move(seqs), std::move(m.class_names)};
  });
}

ss_status ss_dataset_size(const ss_dataset* dataset, long* out) {
  return guard([&] {
    if (!dataset || !out) throw input_error("null argument");
    *out = static_cast<long>(dataset->sequences.size());
  });
}

void ss_dataset_free(ss_dataset* dataset) { delete dataset; }

ss_status ss_simulate(const ss_sim_opts* opts, const char* out_dir) {
  return guard([&] {
    if (!opts || !out_dir) throw input_error("null argument");
    SimSpec spec;
    if (opts->mean_separation > 0.0) spec.mean_separation = opts->mean_separation;
    if (opts->mean_separation > 0.0)
      spec.mean_scale = opts->mean_separation;  // scale the box with the gap
    if (opts->g_scale >= 0.0) spec.g_scale = opts->g_scale;
    if (opts->alpha > 0.0) spec.alpha = opts->alpha;
    if (opts->kappa >= 0.0) spec.kappa = opts->kappa;
    ModelParams params =
        sample_params(opts->K, opts->D, opts->C, spec, opts->seed);
    SyntheticDataset ds = sample_dataset(params, opts->N, opts->T, opts->seed);
    fs::create_directories(out_dir);
    save_dataset(ds.sequences, params.class_names, out_dir);
    save_truth(ds, (fs::path(out_dir) / "truth.json").string());
  });
}

ss_status ss_default_config(char** out_json) {
  return guard([&] {
    if (!out_json) throw input_error("null argument");
    *out_json = dup_string(fit_config_to_json(FitConfig{}));
  });
}

ss_status ss_fit(const ss_dataset* dataset, const char* config_json,
                 int include_timings, ss_model** out_model, char** report_json,
                 char** trace_csv) {
  return guard([&] {
    if (!dataset || !out_model) throw input_error("null argument");
    FitConfig config;
    if (config_json && *config_json) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(config_json);
      } catch (const nlohmann::json::exception& e) {
        throw io_error(std::string("failed to parse config JSON: ") + e.what());
      }
      config.M = j.value("M", config.M);
      config.L = j.value("L", config.L);
      config.eta = j.value("eta", config.eta);
      config.K = j.value("K", config.K);
      config.alpha = j.value("alpha", config.alpha);
      config.kappa = j.value("kappa", config.kappa);
      config.seed = j.value("seed", config.seed);
      config.cov_floor = j.value("cov_floor", config.cov_floor);
      config.tol = j.value("tol", config.tol);
      config.threads = j.value("threads", config.threads);
      config.learn_g = j.value("learn_g", config.learn_g);
    }
    config.threads = effective_threads(config.threads);
    FitReport report = em_fit(dataset->sequences, config);
    if (!dataset->class_names.empty()) {
      if (static_cast<int>(dataset->class_names.size()) != report.params.C)
        throw contract_error("manifest declares " +
                             std::to_string(dataset->class_names.size()) +
                             " classes but the data uses " +
                             std::to_string(report.params.C));
      report.params.class_names = dataset->class_names;
    }
    if (report_json)
      *report_json = dup_string(fit_report_to_json(report, include_timings != 0));
    if (trace_csv) {
      std::string csv = "iteration,objective,e_seconds,m_seconds\n";
      char buf[128];
      for (size_t i = 0; i < report.objective_trace.size(); ++i) {
        double e = include_timings && i < report.e_seconds_trace.size()
                       ? report.e_seconds_trace[i] : 0.0;
        double m = include_timings && i < report.m_seconds_trace.size()
                       ? report.m_seconds_trace[i] : 0.0;
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.6f,%.6f\n", i,
                      report.objective_trace[i], e, m);
        csv += buf;
      }
      *trace_csv = dup_string(csv);
    }
    *out_model = new ss_model{std::move(report.params)};
  });
}

ss_status ss_classify(const ss_model* model, const ss_dataset* dataset,
                      char** out_csv) {
  return guard([&] {
    if (!model || !dataset || !out_csv) throw input_error("null argument");
    const ModelParams& params = model->params;
    std::string csv = "id,predicted,tie";
    for (int c = 0; c < params.C; ++c) {
      std::string name = c < static_cast<int>(params.class_names.size())
                             ? params.class_names[c]
                             : "class_" + std::to_string(c);
      csv += ",score_" + name;
    }
    csv += "\n";
    char buf[64];
    for (const auto& seq : dataset->sequences) {
      ClassifyResult r = classify(params, seq);
      std::string name =
          r.predicted < static_cast<int>(params.class_names.size())
              ? params.class_names[r.predicted]
              : std::to_string(r.predicted);
      csv += seq.id + "," + name + "," + (r.tie ? "1" : "0");
      for (int c = 0; c < params.C; ++c) {
        std::snprintf(buf, sizeof(buf), ",%.17g", r.scores(c));
        csv += buf;
      }
      csv += "\n";
    }
    *out_csv = dup_string(csv);
  });
}

ss_status ss_evaluate(const ss_model* model, const ss_dataset* dataset,
                      int positive_class, char** out_json) {
  return guard([&] {
    if (!model || !dataset || !out_json) throw input_error("null argument");
    Metrics m = evaluate(model->params, dataset->sequences, positive_class);
    nlohmann::json j;
    j["confusion"] = {{"tp", m.tp}, {"fn", m.fn}, {"tn", m.tn}, {"fp", m.fp}};
    auto put = [&](const char* key, const std::optional<double>& v) {
      if (v) j[key] = *v; else j[key] = nullptr;
    };
    put("accuracy", m.accuracy);
    put("sensitivity", m.sensitivity);
    put("specificity", m.specificity);
    put("ppv", m.ppv);
    put("npv", m.npv);
    j["positive_class"] = positive_class;
    *out_json = dup_string(j.dump(2) + "\n");
  });
}

ss_status ss_analyze(const ss_model* model, const ss_dataset* dataset,
                     const ss_analyze_opts* opts, char** report_json,
                     char** edges_csv) {
  return guard([&] {
    if (!model || !dataset) throw input_error("null argument");
    const ModelParams& params = model->params;
    int top_n = opts && opts->top_n_edges > 0 ? opts->top_n_edges : 20;
    DecodeMode mode = opts && opts->use_marginals ? DecodeMode::MarginalArgmax
                                                  : DecodeMode::Viterbi;
    std::vector<std::string> region_names(params.D);
    for (int d = 0; d < params.D; ++d) region_names[d] = "dim_" + std::to_string(d);
    AnalyticsReport report = build_analytics_report(
        params, dataset->sequences, region_names, top_n, mode);
    if (report_json) *report_json = dup_string(report.to_json() + "\n");
    if (edges_csv) {
      std::string csv = "state,region_i,region_j,value\n";
      char buf[256];
      for (size_t k = 0; k < report.covariance_edges.size(); ++k)
        for (const auto& e : report.covariance_edges[k]) {
          std::snprintf(buf, sizeof(buf), "%zu,%s,%s,%.17g\n", k,
                        e.name_i.c_str(), e.name_j.c_str(), e.value);
          csv += buf;
        }
      *edges_csv = dup_string(csv);
    }
    if (opts && opts->svg_dir) {
      fs::create_directories(opts->svg_dir);
      write_transition_svg(params,
                           (fs::path(opts->svg_dir) / "transitions.svg").string());
      write_utilization_svg(
          report.utilization, params.class_names,
          (fs::path(opts->svg_dir) / "utilization.svg").string());
    }
    if (opts && opts->posterior_dir) {
      fs::create_directories(opts->posterior_dir);
      for (const auto& seq : dataset->sequences)
        for (int c = 0; c < params.C; ++c) {
          Posterior post = forward_backward(params, c, seq);
          write_posterior_csv(
              post, (fs::path(opts->posterior_dir) /
                     (seq.id + "_class_" + std::to_string(c) + ".csv"))
                        .string());
        }
    }
  });
}

ss_status ss_gradcheck(uint64_t seed, char** report_json) {
  return guard([&] {
    if (!report_json) throw input_error("null argument");
    GradcheckReport report = gradcheck(seed);
    *report_json = dup_string(report.to_json() + "\n");
  });
}

ss_status ss_oracle_check(uint64_t seed, int instances, char** report_json,
                          double* max_rel_err) {
  return guard([&] {
    if (instances < 1) throw input_error("instances must be >= 1");
    double worst = 0.0;
    std::mt19937_64 rng = substream(seed, 0x0c1e);
    for (int inst = 0; inst < instances; ++inst) {
      int K = 2 + static_cast<int>(rng() % 2);
      int T = 3 + static_cast<int>(rng() % 4);
      int D = 1 + static_cast<int>(rng() % 2);
      SimSpec spec;
      spec.mean_separation = 0.5;
      spec.mean_scale = 1.0;
      spec.g_scale = 0.5;
      spec.alpha = 1.0;
      spec.kappa = 1.0;
      ModelParams params = sample_params(K, D, 1, spec, mix64(seed) + inst);
      auto [seq, path] = sample_sequence(params, 0, T, mix64(seed) ^ (inst + 17));
      seq.id = "oc_" + std::to_string(inst);
      Posterior fb = forward_backward(params, 0, seq);
      Posterior oracle = oracle_posterior(params, 0, seq);
      auto rel = [](double a, double b) {
        return std::abs(a - b) / std::max(std::abs(b), 1e-300);
      };
      worst = std::max(worst, rel(fb.log_evidence, oracle.log_evidence));
      for (int t = 0; t < fb.gamma.rows(); ++t)
        for (int k = 0; k < fb.gamma.cols(); ++k)
          worst = std::max(worst, rel(fb.gamma(t, k), oracle.gamma(t, k)));
      for (size_t t = 0; t < fb.xi.size(); ++t)
        for (int i = 0; i < K; ++i)
          for (int j = 0; j < K; ++j)
            worst = std::max(worst, rel(fb.xi[t](i, j), oracle.xi[t](i, j)));
    }
    if (max_rel_err) *max_rel_err = worst;
    if (report_json) {
      char buf[256];
      std::snprintf(buf, sizeof(buf),
                    "{\"seed\": %llu, \"instances\": %d, \"max_rel_err\": %.17g, "
                    "\"pass\": %s}\n",
                    static_cast<unsigned long long>(seed), instances, worst,
                    worst < 1e-10 ? "true" : "false");
      *report_json = dup_string(buf);
    }
  });
}

}  // extern "C"
