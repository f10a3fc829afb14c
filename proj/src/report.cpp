#include "embench/report.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace embench {

using nlohmann::json;

std::string ResultKey::to_string() const { return model + "/" + dataset + "/" + task + "/" + metric; }

bool ResultValue::operator==(const ResultValue& o) const {
  if (value != o.value || fingerprint != o.fingerprint || ci.has_value() != o.ci.has_value()) return false;
  if (!ci) return true;
  return ci->point == o.ci->point && ci->lo == o.ci->lo && ci->hi == o.ci->hi && ci->resamples == o.ci->resamples &&
         ci->level == o.ci->level;
}

void EvalReport::add(const ResultKey& key, const ResultValue& value) {
  auto [it, inserted] = results.emplace(key, value);
  if (!inserted && !(it->second == value)) {
    throw Error(ErrorCode::kKeyConflict, "conflicting values for " + key.to_string());
  }
}

std::string format_number(double v) {
  // nlohmann emits the shortest representation that round-trips
  return json(v).dump();
}

json EvalReport::to_json() const {
  json rows = json::array();
  for (const auto& [k, v] : results) {
    json row{{"model", k.model},
             {"dataset", k.dataset},
             {"task", k.task},
             {"metric", k.metric},
             {"value", v.value},
             {"fingerprint", v.fingerprint}};
    if (v.ci) {
      row["ci"] = json{{"point", v.ci->point},
                       {"lo", v.ci->lo},
                       {"hi", v.ci->hi},
                       {"level", v.ci->level},
                       {"resamples", v.ci->resamples}};
    } else {
      row["ci"] = nullptr;
    }
    rows.push_back(std::move(row));
  }
  json fails = json::array();
  for (const auto& f : failures) {
    fails.push_back({{"model", f.model}, {"dataset", f.dataset}, {"task", f.task}, {"message", f.message}});
  }
  json cfgs = json::object();
  for (const auto& [fp, knobs] : configs) cfgs[fp] = knobs;
  return json{{"schema_version", schema_version}, {"configs", cfgs}, {"results", rows}, {"failures", fails}};
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  try {
    r.schema_version = j.at("schema_version").get<int>();
    for (const auto& [fp, knobs] : j.at("configs").items()) r.configs[fp] = knobs;
    for (const auto& row : j.at("results")) {
      ResultKey k{row.at("model"), row.at("dataset"), row.at("task"), row.at("metric")};
      ResultValue v;
      v.value = row.at("value").get<double>();
      v.fingerprint = row.value("fingerprint", std::string());
      if (row.contains("ci") && !row["ci"].is_null()) {
        const auto& c = row["ci"];
        v.ci = CiEstimate{c.at("point"), c.at("lo"), c.at("hi"), c.at("resamples"), c.at("level")};
      }
      r.add(k, v);
    }
    if (j.contains("failures")) {
      for (const auto& f : j["failures"]) r.failures.push_back({f.at("model"), f.at("dataset"), f.at("task"), f.at("message")});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaMismatch, std::string("malformed report: ") + e.what());
  }
  return r;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "model,dataset,task,metric,value,ci_lo,ci_hi,ci_level,resamples,fingerprint\n";
  for (const auto& [k, v] : results) {
    out << csv_field(k.model) << ',' << csv_field(k.dataset) << ',' << csv_field(k.task) << ',' << csv_field(k.metric)
        << ',' << format_number(v.value) << ',';
    if (v.ci) {
      out << format_number(v.ci->lo) << ',' << format_number(v.ci->hi) << ',' << format_number(v.ci->level) << ','
          << v.ci->resamples;
    } else {
      out << ",,,";
    }
    out << ',' << v.fingerprint << '\n';
  }
  return out.str();
}

EvalReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open report " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaMismatch, path + ": " + e.what());
  }
  return EvalReport::from_json(j);
}

void write_report_json(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << report.to_json().dump(2) << '\n';
}

EvalReport report_merge(const std::vector<EvalReport>& reports) {
  EvalReport merged;
  for (const auto& r : reports) {
    if (r.schema_version != kReportSchemaVersion) {
      throw Error(ErrorCode::kSchemaMismatch, "report schema version " + std::to_string(r.schema_version) +
                                                  " != " + std::to_string(kReportSchemaVersion));
    }
    for (const auto& [fp, knobs] : r.configs) {
      auto [it, inserted] = merged.configs.emplace(fp, knobs);
      if (!inserted && it->second != knobs) {
        throw Error(ErrorCode::kKeyConflict, "config fingerprint " + fp + " maps to different knobs");
      }
    }
    for (const auto& [k, v] : r.results) merged.add(k, v);
    merged.failures.insert(merged.failures.end(), r.failures.begin(), r.failures.end());
  }
  std::sort(merged.failures.begin(), merged.failures.end());
  merged.failures.erase(std::unique(merged.failures.begin(), merged.failures.end()), merged.failures.end());
  return merged;
}

}  // namespace embench
