// switchstate command-line tool; all model computation goes through the
// C API in switchstate.h.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "switchstate/switchstate.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

int g_verbosity = 1;  // 0 quiet, 1 normal, 2 verbose

void log_info(const std::string& msg) {
  if (g_verbosity >= 1) std::cerr << msg << "\n";
}
void log_debug(const std::string& msg) {
  if (g_verbosity >= 2) std::cerr << msg << "\n";
}

[[noreturn]] void fail_data(const std::string& context) {
  std::cerr << "error: " << context << ": " << ss_last_error() << "\n";
  std::exit(kExitData);
}

[[noreturn]] void fail_usage(const std::string& msg) {
  std::cerr << "error: " << msg << "\n";
  std::exit(kExitUsage);
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path))
    fail_usage(std::string(what) + " '" + path + "' does not exist");
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail_data("cannot open '" + path + "' for writing");
  f << content;
}

std::string owned(char* s) {
  std::string out = s ? s : "";
  ss_string_free(s);
  return out;
}

struct ModelHandle {
  ss_model* get = nullptr;
  ~ModelHandle() { ss_model_free(get); }
};
struct DatasetHandle {
  ss_dataset* get = nullptr;
  ~DatasetHandle() { ss_dataset_free(get); }
};

void load_dataset_or_die(const std::string& manifest, DatasetHandle& ds) {
  require_file(manifest, "manifest");
  if (ss_dataset_load(manifest.c_str(), &ds.get) != SS_OK)
    fail_data("loading dataset '" + manifest + "'");
}

void load_model_or_die(const std::string& path, ModelHandle& model) {
  require_file(path, "model");
  if (ss_model_load(path.c_str(), &model.get) != SS_OK)
    fail_data("loading model '" + path + "'");
}

// Config resolution: defaults <- config file <- explicit CLI flags.
struct FitFlags {
  std::string config_path;
  json overrides = json::object();
};

std::string resolve_config(const FitFlags& flags, int threads) {
  char* defaults_raw = nullptr;
  if (ss_default_config(&defaults_raw) != SS_OK) fail_data("default config");
  json config = json::parse(owned(defaults_raw));
  if (!flags.config_path.empty()) {
    require_file(flags.config_path, "config");
    std::ifstream f(flags.config_path);
    json from_file;
    try {
      f >> from_file;
    } catch (const json::exception& e) {
      std::cerr << "error: failed to parse config '" << flags.config_path
                << "': " << e.what() << "\n";
      std::exit(kExitData);
    }
    config.update(from_file);
  }
  config.update(flags.overrides);
  if (threads > 0) config["threads"] = threads;
  return config.dump();
}

int run_fit_once(const std::string& manifest, const std::string& config_json,
                 const std::string& out_model, const std::string& trace_path,
                 const std::string& report_path, bool timings) {
  DatasetHandle ds;
  load_dataset_or_die(manifest, ds);
  ModelHandle model;
  char* report_raw = nullptr;
  char* trace_raw = nullptr;
  if (ss_fit(ds.get, config_json.c_str(), timings ? 1 : 0, &model.get,
             &report_raw, &trace_raw) != SS_OK)
    fail_data("fit");
  std::string report = owned(report_raw);
  std::string trace = owned(trace_raw);
  if (ss_model_save(model.get, out_model.c_str()) != SS_OK)
    fail_data("saving model '" + out_model + "'");
  if (!report_path.empty()) write_file(report_path, report);
  if (!trace_path.empty()) write_file(trace_path, trace);
  json rep = json::parse(report);
  log_info("fit: " + std::to_string(rep["iterations_run"].get<int>()) +
           " iterations, objective " +
           std::to_string(rep["objective_trace"].back().get<double>()) +
           (rep["converged"].get<bool>() ? " (converged)" : ""));
  return 0;
}

json evaluate_to_json(ss_model* model, ss_dataset* ds, int positive_class) {
  char* raw = nullptr;
  if (ss_evaluate(model, ds, positive_class, &raw) != SS_OK)
    fail_data("evaluate");
  return json::parse(owned(raw));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical recurrent state space models for labeled "
               "multivariate time series"};
  app.require_subcommand(1);
  int threads = 0;
  bool quiet = false, verbose = false;
  app.add_option("--threads", threads, "cap worker threads (0 = auto)");
  app.add_flag("--quiet", quiet, "suppress progress output");
  app.add_flag("--verbose", verbose, "extra progress output");

  // ---- simulate ----
  auto* sim = app.add_subcommand("simulate", "sample a synthetic dataset");
  ss_sim_opts opts{};
  opts.K = 4; opts.D = 10; opts.C = 2; opts.N = 100; opts.T = 130;
  opts.seed = 0;
  opts.mean_separation = -1.0;
  opts.g_scale = -1.0;
  opts.alpha = -1.0;
  opts.kappa = -1.0;
  std::string out_dir;
  sim->add_option("--K", opts.K, "latent states")->check(CLI::PositiveNumber);
  sim->add_option("--D", opts.D, "observation dimension")->check(CLI::PositiveNumber);
  sim->add_option("--C", opts.C, "classes")->check(CLI::PositiveNumber);
  sim->add_option("--N", opts.N, "sequences");
  sim->add_option("--T", opts.T, "timesteps per sequence")->check(CLI::PositiveNumber);
  sim->add_option("--seed", opts.seed, "RNG seed");
  sim->add_option("--sep", opts.mean_separation, "minimum mean separation");
  sim->add_option("--g-scale", opts.g_scale, "std of G entries");
  sim->add_option("--alpha", opts.alpha, "Dirichlet concentration for Pi rows");
  sim->add_option("--kappa", opts.kappa, "sticky boost for Pi rows");
  sim->add_option("--out-dir", out_dir, "output directory")->required();

  // ---- fit ----
  auto* fit = app.add_subcommand("fit", "train a model on a labeled dataset");
  std::string fit_manifest, out_model, trace_path, report_path;
  FitFlags fit_flags;
  bool force = false, timings = false, show_config = false;
  int folds = 0;
  double f_eta = -1, f_alpha = -1, f_kappa = -1, f_tol = -1, f_cov_floor = -1;
  long long f_M = -1, f_L = -1, f_K = -1, f_seed = -1;
  fit->add_option("--manifest", fit_manifest, "dataset manifest");
  fit->add_option("--config", fit_flags.config_path, "FitConfig JSON file");
  fit->add_option("--out-model", out_model, "output model JSON path");
  fit->add_option("--trace", trace_path, "objective-trace CSV path");
  fit->add_option("--report", report_path, "fit-report JSON path");
  fit->add_option("--folds", folds, "k-fold cross-validation helper");
  fit->add_flag("--force", force, "overwrite an existing --out-model");
  fit->add_flag("--timings", timings, "include wall times in outputs (breaks reproducibility)");
  fit->add_flag("--show-config", show_config, "print the resolved config and exit");
  fit->add_option("--K", f_K, "latent states");
  fit->add_option("--M", f_M, "outer EM iterations");
  fit->add_option("--L", f_L, "inner gradient iterations");
  fit->add_option("--eta", f_eta, "gradient step size");
  fit->add_option("--alpha", f_alpha, "Dirichlet concentration");
  fit->add_option("--kappa", f_kappa, "sticky boost");
  fit->add_option("--seed", f_seed, "RNG seed");
  fit->add_option("--tol", f_tol, "relative objective-change stop threshold");
  fit->add_option("--cov-floor", f_cov_floor, "covariance eigenvalue floor");

  // ---- classify ----
  auto* cls = app.add_subcommand("classify", "predict classes for sequences");
  std::string cls_model, cls_manifest, cls_out;
  cls->add_option("--model", cls_model, "model JSON")->required();
  cls->add_option("--manifest", cls_manifest, "dataset manifest")->required();
  cls->add_option("--out-csv", cls_out, "output CSV (default: stdout)");

  // ---- analyze ----
  auto* ana = app.add_subcommand("analyze", "state utilization, dwell durations, edges");
  std::string ana_model, ana_manifest, ana_report, ana_svg, ana_edges, ana_post;
  int top_n = 20;
  bool use_marginals = false;
  ana->add_option("--model", ana_model, "model JSON")->required();
  ana->add_option("--manifest", ana_manifest, "dataset manifest")->required();
  ana->add_option("--report", ana_report, "analytics report JSON path")->required();
  ana->add_option("--svg", ana_svg, "directory for SVG heatmaps/bars");
  ana->add_option("--edges-csv", ana_edges, "covariance edge list CSV path");
  ana->add_option("--dump-posteriors", ana_post, "directory for per-(sequence,class) gamma CSVs");
  ana->add_option("--top-n", top_n, "edges per state");
  ana->add_flag("--use-marginals", use_marginals,
                "decode dwell paths from marginal argmax instead of Viterbi");

  // ---- evaluate ----
  auto* ev = app.add_subcommand("evaluate", "confusion-matrix metrics on labeled data");
  std::string ev_model, ev_manifest;
  int positive_class = 1;
  ev->add_option("--model", ev_model, "model JSON")->required();
  ev->add_option("--manifest", ev_manifest, "dataset manifest")->required();
  ev->add_option("--positive-class", positive_class, "class index treated as positive");

  // ---- gradcheck ----
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  unsigned long long gc_seed = 0;
  gc->add_option("--seed", gc_seed, "RNG seed");

  // ---- oracle-check ----
  auto* oc = app.add_subcommand("oracle-check", "forward-backward vs brute-force oracle");
  unsigned long long oc_seed = 0;
  int oc_instances = 200;
  oc->add_option("--seed", oc_seed, "RNG seed");
  oc->add_option("--instances", oc_instances, "number of random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << e.what() << "\n";
    std::cerr << app.help() << "\n";
    return kExitUsage;
  }

  if (quiet) g_verbosity = 0;
  if (verbose) g_verbosity = 2;
  ss_set_threads(threads);

  if (sim->parsed()) {
    if (ss_simulate(&opts, out_dir.c_str()) != SS_OK) fail_data("simulate");
    log_info("simulate: wrote " + std::to_string(opts.N) + " sequences to " + out_dir);
    return 0;
  }

  if (fit->parsed()) {
    if (f_K >= 0) fit_flags.overrides["K"] = f_K;
    if (f_M >= 0) fit_flags.overrides["M"] = f_M;
    if (f_L >= 0) fit_flags.overrides["L"] = f_L;
    if (f_eta >= 0) fit_flags.overrides["eta"] = f_eta;
    if (f_alpha >= 0) fit_flags.overrides["alpha"] = f_alpha;
    if (f_kappa >= 0) fit_flags.overrides["kappa"] = f_kappa;
    if (f_seed >= 0) fit_flags.overrides["seed"] = f_seed;
    if (f_tol >= 0) fit_flags.overrides["tol"] = f_tol;
    if (f_cov_floor >= 0) fit_flags.overrides["cov_floor"] = f_cov_floor;
    std::string config_json = resolve_config(fit_flags, threads);
    if (show_config) {
      std::cout << json::parse(config_json).dump(2) << "\n";
      return 0;
    }
    if (fit_manifest.empty()) fail_usage("fit requires --manifest");
    if (out_model.empty()) fail_usage("fit requires --out-model");
    require_file(fit_manifest, "manifest");
    if (fs::exists(out_model) && !force)
      fail_usage("output model '" + out_model + "' exists; pass --force to overwrite");
    if (report_path.empty())
      report_path = (fs::path(out_model).parent_path() /
                     (fs::path(out_model).stem().string() + ".report.json"))
                        .string();

    if (folds > 1) {
      // stratified round-robin split over manifest order; fold manifests
      // reference the original CSVs by absolute path
      std::ifstream mf(fit_manifest);
      json manifest;
      try { mf >> manifest; } catch (const json::exception& e) {
        std::cerr << "error: failed to parse manifest: " << e.what() << "\n";
        return kExitData;
      }
      fs::path manifest_dir = fs::absolute(fit_manifest).parent_path();
      std::vector<json> fold_entries(folds);
      for (auto& fe : fold_entries) fe = json::array();
      std::map<std::string, int> per_label_counter;
      for (auto& entry : manifest["entries"]) {
        std::string label =
            entry.contains("label") && !entry["label"].is_null()
                ? entry["label"].get<std::string>()
                : "";
        fs::path p = entry["path"].get<std::string>();
        if (!p.is_absolute()) entry["path"] = (manifest_dir / p).string();
        fold_entries[per_label_counter[label]++ % folds].push_back(entry);
      }
      fs::path out_base = fs::path(out_model).parent_path();
      std::string stem = fs::path(out_model).stem().string();
      std::ostringstream summary;
      summary << "fold,n_train,n_test,accuracy,sensitivity,specificity,ppv,npv\n";
      for (int f = 0; f < folds; ++f) {
        json train = manifest, test = manifest;
        train["entries"] = json::array();
        test["entries"] = fold_entries[f];
        for (int g = 0; g < folds; ++g)
          if (g != f)
            for (const auto& e : fold_entries[g]) train["entries"].push_back(e);
        fs::path train_path = out_base / (stem + "_fold" + std::to_string(f) + "_train.json");
        fs::path test_path = out_base / (stem + "_fold" + std::to_string(f) + "_test.json");
        write_file(train_path.string(), train.dump(2) + "\n");
        write_file(test_path.string(), test.dump(2) + "\n");
        fs::path fold_model = out_base / (stem + "_fold" + std::to_string(f) + ".json");
        if (fs::exists(fold_model) && !force)
          fail_usage("output model '" + fold_model.string() + "' exists; pass --force");
        run_fit_once(train_path.string(), config_json, fold_model.string(),
                     "", "", timings);
        ModelHandle model;
        DatasetHandle test_ds;
        load_model_or_die(fold_model.string(), model);
        load_dataset_or_die(test_path.string(), test_ds);
        json metrics = evaluate_to_json(model.get, test_ds.get, positive_class);
        auto cell = [&](const char* key) {
          return metrics[key].is_null() ? std::string("NA")
                                        : std::to_string(metrics[key].get<double>());
        };
        summary << f << "," << train["entries"].size() << ","
                << fold_entries[f].size() << "," << cell("accuracy") << ","
                << cell("sensitivity") << "," << cell("specificity") << ","
                << cell("ppv") << "," << cell("npv") << "\n";
      }
      fs::path summary_path = out_base / (stem + "_folds.csv");
      write_file(summary_path.string(), summary.str());
      log_info("folds: wrote " + summary_path.string());
      return 0;
    }
    return run_fit_once(fit_manifest, config_json, out_model, trace_path,
                        report_path, timings);
  }

  if (cls->parsed()) {
    ModelHandle model;
    DatasetHandle ds;
    load_model_or_die(cls_model, model);
    load_dataset_or_die(cls_manifest, ds);
    char* raw = nullptr;
    if (ss_classify(model.get, ds.get, &raw) != SS_OK) fail_data("classify");
    std::string csv = owned(raw);
    if (cls_out.empty())
      std::cout << csv;
    else
      write_file(cls_out, csv);
    return 0;
  }

  if (ana->parsed()) {
    ModelHandle model;
    DatasetHandle ds;
    load_model_or_die(ana_model, model);
    load_dataset_or_die(ana_manifest, ds);
    ss_analyze_opts aopts{};
    aopts.top_n_edges = top_n;
    aopts.use_marginals = use_marginals ? 1 : 0;
    aopts.svg_dir = ana_svg.empty() ? nullptr : ana_svg.c_str();
    aopts.posterior_dir = ana_post.empty() ? nullptr : ana_post.c_str();
    char* report_raw = nullptr;
    char* edges_raw = nullptr;
    if (ss_analyze(model.get, ds.get, &aopts, &report_raw,
                   ana_edges.empty() ? nullptr : &edges_raw) != SS_OK)
      fail_data("analyze");
    write_file(ana_report, owned(report_raw));
    if (!ana_edges.empty()) write_file(ana_edges, owned(edges_raw));
    log_info("analyze: wrote " + ana_report);
    return 0;
  }

  if (ev->parsed()) {
    ModelHandle model;
    DatasetHandle ds;
    load_model_or_die(ev_model, model);
    load_dataset_or_die(ev_manifest, ds);
    json metrics = evaluate_to_json(model.get, ds.get, positive_class);
    std::cout << metrics.dump(2) << "\n";
    return 0;
  }

  if (gc->parsed()) {
    char* raw = nullptr;
    if (ss_gradcheck(gc_seed, &raw) != SS_OK) fail_data("gradcheck");
    std::cout << owned(raw);
    return 0;
  }

  if (oc->parsed()) {
    char* raw = nullptr;
    double max_err = 0.0;
    if (ss_oracle_check(oc_seed, oc_instances, &raw, &max_err) != SS_OK)
      fail_data("oracle-check");
    std::cout << owned(raw);
    return max_err < 1e-10 ? 0 : kExitData;
  }

  return kExitUsage;
}
