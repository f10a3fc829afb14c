#pragma once

// Run orchestration: config parsing, per-(task, model, dataset) cells in
// dependency order, a content-addressed result cache and report emission.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "embench/report.hpp"
#include "json.hpp"

namespace embench {

struct ModelEntry {
  // dataset -> EMB1 file holding every split's ids
  std::map<std::string, std::string> embeddings;
  // dataset -> EMT1 token file (segmentation datasets)
  std::map<std::string, std::string> tokens;
  // dataset -> transform name -> EMB1 file of transformed-image embeddings
  std::map<std::string, std::map<std::string, std::string>> transforms;
  // dataset -> EMB1 files, one per training checkpoint
  std::map<std::string, std::vector<std::string>> snapshots;
  // differentiable pipeline for attacks: {"kind":"toy",...} or {"kind":"external","command":[...]}
  std::optional<nlohmann::json> pipeline;
};

struct RunConfig {
  std::string output_dir = "embed-bench-out";
  std::optional<std::string> cache_dir;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::map<std::string, std::string> datasets;  // name -> manifest path
  std::map<std::string, ModelEntry> models;
  std::vector<std::string> tasks;
  // defaults merged with user overrides
  nlohmann::json knobs;

  void validate() const;
};

const std::vector<std::string>& known_tasks();
nlohmann::json default_knobs();

// Relative paths are resolved against base_dir.
RunConfig parse_run_config(const nlohmann::json& j, const std::string& base_dir = ".");
RunConfig read_run_config(const std::string& path, const std::vector<std::string>& overrides = {});

// Sets a dotted path ("knobs.knn.k_grid") to a value parsed as JSON, or as a
// string when it is not valid JSON.
void apply_override(nlohmann::json& config, const std::string& assignment);

struct RunOptions {
  std::optional<std::string> only_model;
  std::optional<std::string> only_dataset;
  std::ostream* log = nullptr;
};

struct RunStats {
  std::size_t computed = 0;
  std::size_t cache_hits = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;
};

struct RunOutcome {
  EvalReport report;
  RunStats stats;
  std::string fingerprint;
};

// Executes the configured tasks and writes report.json, report.csv, tables/
// and artifacts/ under cfg.output_dir.
RunOutcome run(const RunConfig& cfg, const RunOptions& opts = {});

// Content fingerprint of the config: knobs, seed and input digests. Paths,
// output/cache locations and the task selection do not contribute, so reports
// from partial runs of one config merge cleanly.
std::string config_fingerprint(const RunConfig& cfg);

}  // namespace embench
