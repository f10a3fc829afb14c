#include <fstream>
#include <sstream>

#include "doctest.h"
#include "embench/fixtures.hpp"
#include "embench/metrics.hpp"
#include "embench/probes.hpp"
#include "embench/runner.hpp"
#include "helpers.hpp"

using namespace embench;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

RunConfig suite(const testutil::TempDir& dir, std::vector<std::string> tasks) {
  auto cfg = read_run_config(write_synthetic_suite(dir.file("suite")));
  cfg.tasks = std::move(tasks);
  cfg.output_dir = dir.file("out");
  cfg.cache_dir = dir.file("cache");
  return cfg;
}

}  // namespace

TEST_SUITE("runner") {
  TEST_CASE("config overrides and validation") {
    json j{{"knobs", {{"knn", {{"k_grid", {1}}}}}}};
    apply_override(j, "knobs.knn.k_grid=[1,3]");
    apply_override(j, "knobs.calibrate.source=knn");
    apply_override(j, "seed=7");
    CHECK(j["knobs"]["knn"]["k_grid"] == json{1, 3});
    CHECK(j["knobs"]["calibrate"]["source"] == "knn");
    CHECK(j["seed"] == 7);
    CHECK_THROWS_AS(apply_override(j, "no-equals-sign"), Error);

    try {
      parse_run_config(json{{"knobs", {{"bogus", 1}}}});
      FAIL("unknown knob accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kConfig);
      CHECK(std::string(e.what()).find("bogus") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_run_config(json{{"colour", "red"}}), Error);
    auto cfg = parse_run_config(json{{"tasks", {"knn"}}});
    CHECK(cfg.knobs == default_knobs());
  }

  TEST_CASE("empty task list gives an empty report") {
    testutil::TempDir dir;
    auto out = run(suite(dir, {}));
    CHECK(out.report.results.empty());
    CHECK(out.report.failures.empty());
    CHECK(std::filesystem::exists(dir.file("out/report.json")));
  }

  TEST_CASE("knn cell equals direct library calls and reruns hit the cache") {
    testutil::TempDir dir;
    auto cfg = suite(dir, {"knn"});
    auto first = run(cfg);
    CHECK(first.stats.computed > 0);
    CHECK(first.stats.failed == 0);

    auto m = read_manifest(cfg.datasets.at("blobs3"));
    auto all = l2_normalize(read_embedding_file(cfg.models.at("alpha").embeddings.at("blobs3")));
    auto train = make_labeled(all, m, "train"), val = make_labeled(all, m, "val"), test = make_labeled(all, m, "test");
    KnnConfig kc;
    kc.k_grid = cfg.knobs["knn"]["k_grid"].get<std::vector<std::size_t>>();
    auto kv = validate_k(train, val, kc);
    auto pred = knn_classify(train, test, kv.best_k);
    CHECK(first.report.results.at({"alpha", "blobs3", "knn", "f1"}).value == f1_score(pred));
    CHECK(first.report.results.at({"alpha", "blobs3", "knn", "best_k"}).value == static_cast<double>(kv.best_k));

    auto second = run(cfg);
    CHECK(second.stats.computed == 0);
    CHECK(second.stats.cache_hits == first.stats.computed);
    CHECK(second.report.to_json() == first.report.to_json());

    cfg.knobs["knn"]["k_grid"] = json{1};
    CHECK(run(cfg).stats.computed > 0);
  }

  TEST_CASE("a failing cell does not abort its siblings") {
    testutil::TempDir dir;
    auto cfg = suite(dir, {"knn"});
    std::ofstream(cfg.models.at("beta").embeddings.at("blobs3"), std::ios::binary) << "garbage";
    auto out = run(cfg);
    CHECK(out.stats.failed == 1);
    REQUIRE(out.report.failures.size() == 1);
    CHECK(out.report.failures[0].model == "beta");
    CHECK(out.report.failures[0].dataset == "blobs3");
    CHECK(out.report.results.count({"alpha", "blobs3", "knn", "f1"}) == 1);
    CHECK(out.report.results.count({"beta", "blobs2", "knn", "f1"}) == 1);
  }

  TEST_CASE("reports from partial runs of one config merge") {
    testutil::TempDir dir;
    auto full = suite(dir, {"knn", "fewshot"});
    auto whole = run(full).report;
    auto part_cfg = full;
    part_cfg.tasks = {"knn"};
    part_cfg.output_dir = dir.file("part");
    RunOptions only;
    only.only_model = "alpha";
    only.only_dataset = "blobs3";
    auto part = run(part_cfg, only).report;
    CHECK(part.results.size() < whole.results.size());
    CHECK(report_merge({whole, part}).results == whole.results);
  }

  TEST_CASE("reports are byte-identical across runs and thread counts") {
    testutil::TempDir a, b;
    auto ca = suite(a, {"knn", "fewshot", "linprobe", "retrieve", "significance", "aggregate"});
    auto cb = suite(b, ca.tasks);
    cb.threads = 3;
    run(ca);
    run(cb);
    CHECK(slurp(a.file("out/report.json")) == slurp(b.file("out/report.json")));
    CHECK(slurp(a.file("out/tables/rank_sum.csv")) == slurp(b.file("out/tables/rank_sum.csv")));
  }
}
