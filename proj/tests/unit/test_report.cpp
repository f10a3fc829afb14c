#include "doctest.h"
#include "embench/report.hpp"
#include "helpers.hpp"

using namespace embench;

namespace {

EvalReport sample(double v = 0.5) {
  EvalReport r;
  r.configs["abc"] = nlohmann::json{{"k", 1}};
  r.add({"m1", "d1", "knn", "f1"}, {v, CiEstimate{v, v - 0.1, v + 0.1, 200, 0.95}, "abc"});
  r.add({"m1", "d1", "knn", "best_k"}, {3.0, std::nullopt, "abc"});
  r.failures.push_back({"m2", "d1", "attack", "boom"});
  return r;
}

}  // namespace

TEST_SUITE("report") {
  TEST_CASE("conflicting adds name the key") {
    auto r = sample();
    r.add({"m1", "d1", "knn", "f1"}, r.results.at({"m1", "d1", "knn", "f1"}));  // identical value is fine
    try {
      r.add({"m1", "d1", "knn", "f1"}, {0.7, std::nullopt, "abc"});
      FAIL("expected a conflict");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kKeyConflict);
      CHECK(std::string(e.what()).find("m1/d1/knn/f1") != std::string::npos);
    }
  }

  TEST_CASE("JSON and file round trip") {
    testutil::TempDir dir;
    auto r = sample(0.1 + 0.2);
    write_report_json(dir.file("r.json"), r);
    auto back = read_report(dir.file("r.json"));
    CHECK(back.results == r.results);
    CHECK(back.failures == r.failures);
    CHECK(back.configs == r.configs);
    CHECK(back.to_json() == r.to_json());
  }

  TEST_CASE("CSV rows") {
    auto csv = sample().to_csv();
    CHECK(csv.rfind("model,dataset,task,metric,value,ci_lo,ci_hi,ci_level,resamples,fingerprint\n", 0) == 0);
    CHECK(csv.find("m1,d1,knn,best_k,3.0,,,,,abc") != std::string::npos);
    CHECK(format_number(0.1) == "0.1");
  }

  TEST_CASE("merge") {
    auto a = sample();
    auto self = report_merge({a, a});
    CHECK(self.results == a.results);
    CHECK(self.failures.size() == 1);

    EvalReport b;
    b.add({"m2", "d2", "knn", "f1"}, {0.9, std::nullopt, "def"});
    auto u = report_merge({a, b});
    CHECK(u.results.size() == 3);

    EvalReport clash;
    clash.add({"m1", "d1", "knn", "f1"}, {0.1, std::nullopt, "abc"});
    CHECK_THROWS_AS(report_merge({a, clash}), Error);

    EvalReport old;
    old.schema_version = kReportSchemaVersion + 1;
    try {
      report_merge({a, old});
      FAIL("expected schema mismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kSchemaMismatch);
    }
    CHECK_THROWS_AS(EvalReport::from_json(nlohmann::json{{"results", 1}}), Error);
  }
}
