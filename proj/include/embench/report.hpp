#pragma once

// Versioned evaluation report: one row per (model, dataset, task, metric),
// each carrying the fingerprint of the config that produced it.

#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "embench/metrics.hpp"
#include "json.hpp"

namespace embench {

inline constexpr int kReportSchemaVersion = 1;

struct ResultKey {
  std::string model, dataset, task, metric;

  auto operator<=>(const ResultKey&) const = default;
  std::string to_string() const;
};

struct ResultValue {
  double value = 0.0;
  std::optional<CiEstimate> ci;
  std::string fingerprint;

  bool operator==(const ResultValue& o) const;
};

struct CellFailure {
  std::string model, dataset, task, message;
  auto operator<=>(const CellFailure&) const = default;
};

struct EvalReport {
  int schema_version = kReportSchemaVersion;
  // fingerprint -> decision knobs used by that config
  std::map<std::string, nlohmann::json> configs;
  std::map<ResultKey, ResultValue> results;
  std::vector<CellFailure> failures;

  // Throws kKeyConflict (naming the key) if the key holds a different value.
  void add(const ResultKey& key, const ResultValue& value);

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  // Columns: model,dataset,task,metric,value,ci_lo,ci_hi,ci_level,resamples,fingerprint
  std::string to_csv() const;
};

EvalReport read_report(const std::string& path);
void write_report_json(const std::string& path, const EvalReport& report);

// Union keyed by (model, dataset, task, metric). Throws kSchemaMismatch on
// differing schema versions and kKeyConflict on disagreeing values.
EvalReport report_merge(const std::vector<EvalReport>& reports);

// Shortest round-trip text for CSV cells.
std::string format_number(double v);

}  // namespace embench
