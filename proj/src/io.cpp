#include "switchstate/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace switchstate {

namespace {

constexpr int kModelSchemaVersion = 1;
constexpr int kManifestSchemaVersion = 1;

json parse_file(const std::string& path, const char* what) {
  std::ifstream f(path);
  if (!f) throw io_error(std::string("cannot open ") + what + " '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw io_error(std::string("failed to parse ") + what + " '" + path +
                   "': " + e.what());
  }
  return j;
}

json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.begin(), v.end());
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i)
    rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  return rows;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (j.empty()) return {};
  Eigen::MatrixXd m(j.size(), j[0].size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != j[0].size())
      throw io_error("ragged matrix in JSON document");
    for (size_t k = 0; k < j[i].size(); ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

void atomic_write(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw io_error("cannot open '" + tmp + "' for writing");
    f << content;
    if (!f) throw io_error("write to '" + tmp + "' failed");
  }
  fs::rename(tmp, path);
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
  json j = parse_file(path, "manifest");
  DatasetManifest m;
  m.schema_version = j.value("schema_version", 1);
  if (m.schema_version != kManifestSchemaVersion)
    throw io_error("manifest '" + path + "' has schema_version " +
                   std::to_string(m.schema_version) + ", expected " +
                   std::to_string(kManifestSchemaVersion));
  if (!j.contains("class_names") || !j.contains("D") || !j.contains("entries"))
    throw io_error("manifest '" + path +
                   "' missing required fields (class_names, D, entries)");
  m.class_names = j["class_names"].get<std::vector<std::string>>();
  m.D = j["D"].get<int>();
  m.notes = j.value("notes", "");
  for (const auto& e : j["entries"]) {
    DatasetManifest::Entry entry;
    entry.id = e.at("id").get<std::string>();
    entry.path = e.at("path").get<std::string>();
    if (e.contains("label") && !e["label"].is_null())
      entry.label = e["label"].get<std::string>();
    m.entries.push_back(std::move(entry));
  }
  return m;
}

Eigen::MatrixXd read_sequence_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open sequence file '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || (lineno == 1 && !line.empty() && line.back() == '\r' &&
                         line.size() == 1))
      continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        size_t pos = 0;
        double v = std::stod(cell, &pos);
        while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos])))
          ++pos;
        if (pos != cell.size()) throw std::invalid_argument(cell);
        row.push_back(v);
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (lineno == 1 && rows.empty()) continue;  // header row
      throw io_error("non-numeric cell in '" + path + "' line " +
                     std::to_string(lineno));
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw io_error("ragged row in '" + path + "' line " +
                     std::to_string(lineno) + ": " + std::to_string(row.size()) +
                     " cells, expected " + std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw io_error("sequence file '" + path + "' has no data rows");
  Eigen::MatrixXd x(rows.size(), rows.front().size());
  for (size_t t = 0; t < rows.size(); ++t)
    for (size_t d = 0; d < rows[t].size(); ++d) x(t, d) = rows[t][d];
  if (!x.allFinite())
    throw io_error("sequence file '" + path + "' contains non-finite values");
  return x;
}

void write_sequence_csv(const Eigen::MatrixXd& x, const std::string& path) {
  std::ostringstream out;
  for (int d = 0; d < x.cols(); ++d) out << (d ? "," : "") << "dim_" << d;
  out << '\n';
  char buf[64];
  for (int t = 0; t < x.rows(); ++t) {
    for (int d = 0; d < x.cols(); ++d) {
      std::snprintf(buf, sizeof(buf), "%.17g", x(t, d));
      out << (d ? "," : "") << buf;
    }
    out << '\n';
  }
  atomic_write(path, out.str());
}

std::vector<Sequence> load_dataset(const DatasetManifest& manifest,
                                   const std::string& manifest_dir) {
  std::vector<Sequence> out;
  for (const auto& entry : manifest.entries) {
    Sequence seq;
    seq.id = entry.id;
    fs::path p = fs::path(entry.path).is_absolute()
                     ? fs::path(entry.path)
                     : fs::path(manifest_dir) / entry.path;
    seq.x = read_sequence_csv(p.string());
    if (seq.dim() != manifest.D)
      throw io_error("sequence '" + entry.id + "' has dimension " +
                     std::to_string(seq.dim()) + ", manifest declares D = " +
                     std::to_string(manifest.D));
    if (!entry.label.empty()) {
      auto it = std::find(manifest.class_names.begin(),
                          manifest.class_names.end(), entry.label);
      if (it == manifest.class_names.end())
        throw io_error("sequence '" + entry.id + "' has label '" + entry.label +
                       "' not present in class_names");
      seq.label = static_cast<int>(it - manifest.class_names.begin());
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<Sequence> load_dataset(const std::string& manifest_path) {
  DatasetManifest m = load_manifest(manifest_path);
  return load_dataset(m, fs::path(manifest_path).parent_path().string());
}

void save_dataset(const std::vector<Sequence>& dataset,
                  const std::vector<std::string>& class_names,
                  const std::string& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["schema_version"] = kManifestSchemaVersion;
  manifest["class_names"] = class_names;
  manifest["D"] = dataset.empty() ? 0 : dataset.front().dim();
  manifest["notes"] = "";
  manifest["entries"] = json::array();
  for (const auto& seq : dataset) {
    std::string file = seq.id + ".csv";
    write_sequence_csv(seq.x, (fs::path(dir) / file).string());
    json entry;
    entry["id"] = seq.id;
    entry["path"] = file;
    if (seq.label)
      entry["label"] = class_names.at(*seq.label);
    else
      entry["label"] = nullptr;
    manifest["entries"].push_back(entry);
  }
  atomic_write((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

void save_truth(const SyntheticDataset& ds, const std::string& path) {
  json j;
  j["seed"] = ds.seed;
  j["true_params"] = json::parse(model_to_json(ds.true_params));
  j["true_paths"] = ds.true_paths;
  atomic_write(path, j.dump(2) + "\n");
}

std::string model_to_json(const ModelParams& params) {
  json j;
  j["schema_version"] = kModelSchemaVersion;
  j["K"] = params.K;
  j["D"] = params.D;
  j["C"] = params.C;
  j["alpha"] = params.alpha;
  j["kappa"] = params.kappa;
  j["class_prior"] = vector_to_json(params.class_prior);
  j["init_dist"] = vector_to_json(params.init_dist);
  j["class_names"] = params.class_names;
  for (const auto& m : params.mu) j["mu"].push_back(vector_to_json(m));
  for (const auto& s : params.sigma) j["sigma"].push_back(matrix_to_json(s));
  for (const auto& p : params.pi) j["pi"].push_back(matrix_to_json(p));
  j["g"] = matrix_to_json(params.g);
  return j.dump(2) + "\n";
}

ModelParams model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw io_error(std::string("failed to parse model JSON: ") + e.what());
  }
  int version = j.value("schema_version", -1);
  if (version != kModelSchemaVersion)
    throw io_error("model schema_version " + std::to_string(version) +
                   " not supported (expected " +
                   std::to_string(kModelSchemaVersion) + ")");
  ModelParams params;
  try {
    params.K = j.at("K").get<int>();
    params.D = j.at("D").get<int>();
    params.C = j.at("C").get<int>();
    params.alpha = j.at("alpha").get<double>();
    params.kappa = j.at("kappa").get<double>();
    params.class_prior = vector_from_json(j.at("class_prior"));
    params.init_dist = vector_from_json(j.at("init_dist"));
    params.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& m : j.at("mu")) params.mu.push_back(vector_from_json(m));
    for (const auto& s : j.at("sigma")) params.sigma.push_back(matrix_from_json(s));
    for (const auto& p : j.at("pi")) params.pi.push_back(matrix_from_json(p));
    params.g = matrix_from_json(j.at("g"));
  } catch (const json::exception& e) {
    throw io_error(std::string("malformed model JSON: ") + e.what());
  }
  params.validate();
  return params;
}

void save_model(const ModelParams& params, const std::string& path) {
  atomic_write(path, model_to_json(params));
}

ModelParams load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return model_from_json(ss.str());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidParameter)
      throw io_error("model file '" + path + "' violates an invariant: " +
                     e.what());
    throw;
  }
}

FitConfig load_fit_config(const std::string& path, FitConfig defaults) {
  json j = parse_file(path, "config");
  FitConfig c = defaults;
  c.M = j.value("M", c.M);
  c.L = j.value("L", c.L);
  c.eta = j.value("eta", c.eta);
  c.K = j.value("K", c.K);
  c.alpha = j.value("alpha", c.alpha);
  c.kappa = j.value("kappa", c.kappa);
  c.seed = j.value("seed", c.seed);
  c.cov_floor = j.value("cov_floor", c.cov_floor);
  c.tol = j.value("tol", c.tol);
  c.threads = j.value("threads", c.threads);
  c.learn_g = j.value("learn_g", c.learn_g);
  return c;
}

std::string fit_config_to_json(const FitConfig& c) {
  json j;
  j["M"] = c.M;
  j["L"] = c.L;
  j["eta"] = c.eta;
  j["K"] = c.K;
  j["alpha"] = c.alpha;
  j["kappa"] = c.kappa;
  j["seed"] = c.seed;
  j["cov_floor"] = c.cov_floor;
  j["tol"] = c.tol;
  j["threads"] = c.threads;
  j["learn_g"] = c.learn_g;
  return j.dump(2) + "\n";
}

std::string fit_report_to_json(const FitReport& report, bool include_timings) {
  json j;
  j["objective_trace"] = report.objective_trace;
  j["converged"] = report.converged;
  j["iterations_run"] = report.iterations_run;
  j["e_step_seconds"] = include_timings ? report.e_step_seconds : 0.0;
  j["m_step_seconds"] = include_timings ? report.m_step_seconds : 0.0;
  j["warnings"] = report.warnings;
  return j.dump(2) + "\n";
}

void write_trace_csv(const FitReport& report, const std::string& path,
                     bool include_timings) {
  std::ostringstream out;
  out << "iteration,objective,e_seconds,m_seconds\n";
  char buf[128];
  for (size_t i = 0; i < report.objective_trace.size(); ++i) {
    double e = include_timings && i < report.e_seconds_trace.size()
                   ? report.e_seconds_trace[i] : 0.0;
    double m = include_timings && i < report.m_seconds_trace.size()
                   ? report.m_seconds_trace[i] : 0.0;
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.6f,%.6f\n", i,
                  report.objective_trace[i], e, m);
    out << buf;
  }
  atomic_write(path, out.str());
}

}  // namespace switchstate
