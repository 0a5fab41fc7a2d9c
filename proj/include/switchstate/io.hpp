#pragma once

#include <string>
#include <vector>

#include "switchstate/learning.hpp"
#include "switchstate/model.hpp"
#include "switchstate/simulator.hpp"

namespace switchstate {

struct DatasetManifest {
  int schema_version = 1;
  std::vector<std::string> class_names;  // order defines class indices
  int D = 0;
  std::string notes;
  struct Entry {
    std::string id;
    std::string path;  // sequence CSV, relative to the manifest
    std::string label; // class name, empty = unlabeled
  };
  std::vector<Entry> entries;
};

DatasetManifest load_manifest(const std::string& path);

// Sequences in manifest order, with strict dimension checking against the
// manifest's D and labels resolved against class_names.
std::vector<Sequence> load_dataset(const std::string& manifest_path);
std::vector<Sequence> load_dataset(const DatasetManifest& manifest,
                                   const std::string& manifest_dir);

// T x D CSV, rows = timesteps. Accepts an optional header row; the writer
// always emits a dim_0..dim_{D-1} header.
Eigen::MatrixXd read_sequence_csv(const std::string& path);
void write_sequence_csv(const Eigen::MatrixXd& x, const std::string& path);

// Writes manifest.json plus one CSV per sequence into dir.
void save_dataset(const std::vector<Sequence>& dataset,
                  const std::vector<std::string>& class_names,
                  const std::string& dir);

// Ground-truth JSON for a synthetic dataset: true params + state paths.
void save_truth(const SyntheticDataset& ds, const std::string& path);

void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);
std::string model_to_json(const ModelParams& params);
ModelParams model_from_json(const std::string& text);

// JSON mirror of FitConfig; absent keys keep the given defaults.
FitConfig load_fit_config(const std::string& path, FitConfig defaults = {});
std::string fit_config_to_json(const FitConfig& config);

// include_timings=false zeroes the wall-time fields so outputs stay
// byte-reproducible across runs.
std::string fit_report_to_json(const FitReport& report, bool include_timings);
void write_trace_csv(const FitReport& report, const std::string& path,
                     bool include_timings);

}  // namespace switchstate
