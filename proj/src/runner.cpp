#include "embench/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "embench/augment.hpp"
#include "embench/calib.hpp"
#include "embench/embedstore.hpp"
#include "embench/featurespace.hpp"
#include "embench/gradient_protocol.hpp"
#include "embench/metrics.hpp"
#include "embench/probes.hpp"
#include "embench/robustness.hpp"
#include "embench/statagg.hpp"
#include "embench/trainers.hpp"

namespace embench {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config ---------------------------------------------------------------------------

const std::vector<std::string>& known_tasks() {
  static const std::vector<std::string> tasks{"knn",        "fewshot", "linprobe",   "segprobe",
                                              "calibrate",  "retrieve", "align",     "invariance",
                                              "attack",     "significance", "aggregate"};
  return tasks;
}

json default_knobs() {
  return json::parse(R"({
    "f1_averaging": "macro over classes present in y_true",
    "bootstrap": {"resamples": 3000, "level": 0.95, "method": "percentile"},
    "knn": {"k_grid": [1, 3, 5, 10, 20, 30, 40, 50], "k_selection": "validation macro-F1, ties to smaller k",
            "vote_ties": "lowest class index", "similarity_ties": "ascending sample id", "normalize": true},
    "fewshot": {"shots": [1, 2, 4, 8, 16], "episodes": 10, "center": true},
    "linprobe": {"lr_grid": [0.001, 0.0001, 0.00001], "wd_grid": [0.0, 0.001, 0.0001], "epochs": 200,
                 "batch_size": 64, "weight_decay": "decoupled, weights only", "selection": "validation macro-F1"},
    "segprobe": {"lr_grid": [0.001, 0.0001, 0.00001], "wd_grid": [0.0, 0.001, 0.0001], "epochs": 200,
                 "batch_size": 32, "background_weight": 0.1, "dice_smooth": 1.0,
                 "head": "class-token scalar product + bilinear upsampling"},
    "calibrate": {"bins": 15, "tace_threshold": 0.01, "source": "linprobe",
                  "binning": "equal-width for ece/mce/sce, equal-mass for ace/tace"},
    "retrieve": {"ks": [1, 3, 5, 10], "export_depth": 10},
    "align": {"k": 10, "pool": "test"},
    "invariance": {"similarity": "cosine"},
    "attack": {"epsilons": [0.00025, 0.0015, 0.035], "num_steps": 5, "alpha_divisor": 2.5, "max_samples": 10000,
               "random_start": false, "input_range": [0.0, 1.0],
               "probe": {"lr_grid": [0.01, 0.001], "wd_grid": [0.0], "epochs": 200, "batch_size": 64}},
    "significance": {"source": "knn", "q": 0.05, "method": "discordant_sign", "family": "per dataset"},
    "aggregate": {"scale": 100.0, "tie_decimals": 1, "task_ties": "dense", "final_ties": "dense",
                  "metrics": [["knn", "f1"], ["linprobe", "f1"], ["fewshot", "f1_mean"], ["segprobe", "dice"],
                              ["calibrate", "ece"], ["attack", "delta_f1_mean"], ["retrieve", "f1@top1"]],
                  "rank_tasks": [["knn", "f1", "higher"], ["linprobe", "f1", "higher"],
                                 ["fewshot", "f1_mean", "higher"], ["segprobe", "dice", "higher"],
                                 ["calibrate", "ece", "lower"], ["attack", "delta_f1_mean", "lower"]]},
    "augment": {"hed_sigma": 0.05, "blur_sigma": 3.0}
  })");
}

namespace {

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

void check_knob_keys(const json& defaults, const json& user, const std::string& prefix) {
  for (const auto& [k, v] : user.items()) {
    if (!defaults.contains(k)) throw Error(ErrorCode::kConfig, "unknown knob '" + prefix + k + "'");
    if (v.is_object() && defaults[k].is_object()) check_knob_keys(defaults[k], v, prefix + k + ".");
  }
}

}  // namespace

RunConfig parse_run_config(const json& j, const std::string& base_dir) {
  RunConfig cfg;
  try {
    if (!j.is_object()) throw Error(ErrorCode::kConfig, "config must be a JSON object");
    static const std::set<std::string> allowed{"output_dir", "cache_dir", "seed", "threads",
                                               "datasets",   "models",    "tasks", "knobs"};
    for (const auto& [k, v] : j.items()) {
      if (!allowed.count(k)) throw Error(ErrorCode::kConfig, "unknown config field '" + k + "'");
    }
    cfg.output_dir = resolve(base_dir, j.value("output_dir", cfg.output_dir));
    if (j.contains("cache_dir") && !j["cache_dir"].is_null()) {
      cfg.cache_dir = resolve(base_dir, j["cache_dir"].get<std::string>());
    }
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.threads = j.value("threads", std::size_t{1});
    if (j.contains("datasets")) {
      for (const auto& [name, path] : j["datasets"].items()) cfg.datasets[name] = resolve(base_dir, path.get<std::string>());
    }
    if (j.contains("models")) {
      for (const auto& [name, m] : j["models"].items()) {
        ModelEntry e;
        if (m.contains("embeddings"))
          for (const auto& [ds, p] : m["embeddings"].items()) e.embeddings[ds] = resolve(base_dir, p.get<std::string>());
        if (m.contains("tokens"))
          for (const auto& [ds, p] : m["tokens"].items()) e.tokens[ds] = resolve(base_dir, p.get<std::string>());
        if (m.contains("transforms"))
          for (const auto& [ds, tmap] : m["transforms"].items())
            for (const auto& [t, p] : tmap.items()) e.transforms[ds][t] = resolve(base_dir, p.get<std::string>());
        if (m.contains("snapshots"))
          for (const auto& [ds, list] : m["snapshots"].items())
            for (const auto& p : list) e.snapshots[ds].push_back(resolve(base_dir, p.get<std::string>()));
        if (m.contains("pipeline")) {
          json p = m["pipeline"];
          if (p.contains("command") && p["command"].is_array() && !p["command"].empty()) {
            auto exe = p["command"][0].get<std::string>();
            if (exe.find('/') != std::string::npos) p["command"][0] = resolve(base_dir, exe);
          }
          e.pipeline = p;
        }
        cfg.models[name] = std::move(e);
      }
    }
    if (j.contains("tasks")) cfg.tasks = j["tasks"].get<std::vector<std::string>>();
    cfg.knobs = default_knobs();
    if (j.contains("knobs")) {
      check_knob_keys(cfg.knobs, j["knobs"], "");
      cfg.knobs.merge_patch(j["knobs"]);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("malformed config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorCode::kConfig, "override '" + assignment + "' must look like path.to.field=value");
  }
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &config;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw Error(ErrorCode::kConfig, "empty component in override path '" + path + "'");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

RunConfig read_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, path + ": " + e.what());
  }
  for (const auto& o : overrides) apply_override(j, o);
  return parse_run_config(j, fs::path(path).parent_path().string().empty() ? "." : fs::path(path).parent_path().string());
}

void RunConfig::validate() const {
  for (const auto& t : tasks) {
    if (std::find(known_tasks().begin(), known_tasks().end(), t) == known_tasks().end()) {
      throw Error(ErrorCode::kConfig, "unknown task '" + t + "'");
    }
  }
  for (const auto& [name, path] : datasets) {
    if (!fs::exists(path)) throw Error(ErrorCode::kConfig, "dataset '" + name + "': manifest " + path + " not found");
  }
  for (const auto& [name, m] : models) {
    auto check = [&](const std::string& what, const std::string& ds, const std::string& p) {
      if (!datasets.count(ds)) {
        throw Error(ErrorCode::kConfig, "model '" + name + "' " + what + " refers to unknown dataset '" + ds + "'");
      }
      if (!fs::exists(p)) throw Error(ErrorCode::kConfig, "model '" + name + "' " + what + " file " + p + " not found");
    };
    for (const auto& [ds, p] : m.embeddings) check("embeddings", ds, p);
    for (const auto& [ds, p] : m.tokens) check("tokens", ds, p);
    for (const auto& [ds, tm] : m.transforms)
      for (const auto& [t, p] : tm) check("transform " + t, ds, p);
    for (const auto& [ds, list] : m.snapshots)
      for (const auto& p : list) check("snapshot", ds, p);
    if (m.pipeline) {
      const auto kind = m.pipeline->value("kind", std::string());
      if (kind != "toy" && kind != "external") {
        throw Error(ErrorCode::kConfig, "model '" + name + "' pipeline kind must be 'toy' or 'external'");
      }
    }
  }
  if (threads < 1) throw Error(ErrorCode::kConfig, "threads must be >= 1");
}

// ---- execution plumbing -------------------------------------------------------------------

namespace {

class Digests {
 public:
  std::string of(const std::string& path) {
    {
      std::lock_guard lock(mu_);
      if (auto it = cache_.find(path); it != cache_.end()) return it->second;
    }
    auto d = sha256_file(path);
    std::lock_guard lock(mu_);
    cache_[path] = d;
    return d;
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::string> cache_;
};

struct Cell {
  std::string task, model, dataset;
  std::vector<std::size_t> deps;
  std::string key;
  std::optional<json> output;  // {"results":[...], "artifact":{...}}
  std::optional<std::string> error;
  bool cached = false;
};

struct Context {
  const RunConfig& cfg;
  std::map<std::string, DatasetManifest> manifests;
  std::map<std::string, std::string> manifest_errors;
  Digests digests;
  std::vector<Cell> cells;
};

json ci_json(const CiEstimate& ci) {
  return json{{"point", ci.point}, {"lo", ci.lo}, {"hi", ci.hi}, {"level", ci.level}, {"resamples", ci.resamples}};
}

class Results {
 public:
  Results(std::string model, std::string dataset) : model_(std::move(model)), dataset_(std::move(dataset)) {}
  void add(const std::string& metric, double value, const std::optional<CiEstimate>& ci = std::nullopt) {
    add_for(model_, dataset_, metric, value, ci);
  }
  void add_for(const std::string& model, const std::string& dataset, const std::string& metric, double value,
               const std::optional<CiEstimate>& ci = std::nullopt) {
    json row{{"model", model}, {"dataset", dataset}, {"metric", metric}, {"value", value}};
    row["ci"] = ci ? ci_json(*ci) : json(nullptr);
    rows_.push_back(std::move(row));
  }
  void add_task(const std::string& model, const std::string& dataset, const std::string& task,
                const std::string& metric, double value) {
    rows_.push_back({{"model", model}, {"dataset", dataset}, {"task", task}, {"metric", metric}, {"value", value},
                     {"ci", nullptr}});
  }
  json take() { return std::move(rows_); }

 private:
  std::string model_, dataset_;
  json rows_ = json::array();
};

BootstrapOptions boot_opts(const json& knobs, std::uint64_t seed) {
  BootstrapOptions o;
  o.resamples = knobs.at("bootstrap").at("resamples").get<int>();
  o.level = knobs.at("bootstrap").at("level").get<double>();
  o.seed = seed;
  return o;
}

CiEstimate metric_ci(const PredictionSet& p, double (*metric)(const PredictionSet&), const BootstrapOptions& o) {
  return bootstrap_ci(
      p.size(), [&](std::span<const std::size_t> idx) { return metric(p.subset(idx)); }, o);
}

void add_classification(Results& r, const PredictionSet& p, const BootstrapOptions& o, const std::string& suffix = "") {
  r.add("f1" + suffix, f1_score(p), metric_ci(p, f1_score, o));
  r.add("balanced_accuracy" + suffix, balanced_accuracy(p), metric_ci(p, balanced_accuracy, o));
  r.add("accuracy" + suffix, accuracy(p), metric_ci(p, accuracy, o));
}

std::string bits(const std::vector<std::uint8_t>& v) {
  std::string s(v.size(), '0');
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i]) s[i] = '1';
  return s;
}

std::vector<std::uint8_t> unbits(const std::string& s) {
  std::vector<std::uint8_t> v(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) v[i] = s[i] == '1';
  return v;
}

// External ids follow the manifest: train, val, test, then remaining splits by name.
std::vector<std::string> manifest_order(const DatasetManifest& m) {
  std::vector<std::string> ids;
  std::vector<std::string> order{"train", "val", "test"};
  for (const auto& [name, _] : m.splits)
    if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);
  for (const auto& s : order) {
    auto it = m.splits.find(s);
    if (it != m.splits.end()) ids.insert(ids.end(), it->second.begin(), it->second.end());
  }
  return ids;
}

EmbeddingSet load_embeddings(const std::string& path, const DatasetManifest& m) {
  try {
    return read_embedding_file(path);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kMissingIds) throw;
    return read_embedding_file(path, manifest_order(m));
  }
}

TrainConfig train_config(const json& k, std::uint64_t seed, bool segmentation) {
  TrainConfig t = segmentation ? TrainConfig::segmentation_defaults() : TrainConfig{};
  t.lr_grid = k.at("lr_grid").get<std::vector<double>>();
  t.wd_grid = k.at("wd_grid").get<std::vector<double>>();
  t.epochs = k.at("epochs").get<std::size_t>();
  t.batch_size = k.at("batch_size").get<std::size_t>();
  if (k.contains("background_weight")) t.background_weight = k["background_weight"].get<double>();
  t.seed = seed;
  return t;
}

json grid_json(const std::vector<GridPointResult>& grid) {
  json g = json::array();
  for (const auto& p : grid) {
    g.push_back({{"lr", p.lr}, {"weight_decay", p.weight_decay}, {"val_score", p.val_score}, {"diverged", p.diverged},
                 {"message", p.message}});
  }
  return g;
}

std::uint64_t cell_seed(const RunConfig& cfg, const Cell& c) {
  return derive_key(cfg.seed, c.task, c.model + "/" + c.dataset);
}

// ---- tasks ------------------------------------------------------------------------------

using TaskFn = std::function<json(Context&, const Cell&)>;

json task_knn(Context& ctx, const Cell& c) {
  const auto& m = ctx.manifests.at(c.dataset);
  const auto& k = ctx.cfg.knobs;
  auto all = l2_normalize(load_embeddings(ctx.cfg.models.at(c.model).embeddings.at(c.dataset), m));
  auto train = make_labeled(all, m, "train"), val = make_labeled(all, m, "val"), test = make_labeled(all, m, "test");
  KnnConfig kc;
  kc.k_grid = k.at("knn").at("k_grid").get<std::vector<std::size_t>>();
  auto kv = validate_k(train, val, kc);
  auto pred = knn_classify(train, test, kv.best_k);
  Results r(c.model, c.dataset);
  add_classification(r, pred, boot_opts(k, cell_seed(ctx.cfg, c)));
  r.add("best_k", static_cast<double>(kv.best_k));
  json scores = json::array();
  for (auto [kk, s] : kv.scores) scores.push_back({kk, s});
  return json{{"results", r.take()},
              {"artifact", {{"k_scores", scores}, {"best_k", kv.best_k}, {"test_correct", bits(pred.correctness())}}}};
}

json task_fewshot(Context& ctx, const Cell& c) {
  const auto& m = ctx.manifests.at(c.dataset);
  const auto& k = ctx.cfg.knobs.at("fewshot");
  auto all = load_embeddings(ctx.cfg.models.at(c.model).embeddings.at(c.dataset), m);
  auto train = make_labeled(all, m, "train"), test = make_labeled(all, m, "test");
  const auto episodes = k.at("episodes").get<std::size_t>();
  if (episodes < 1) throw Error(ErrorCode::kConfig, "fewshot.episodes must be >= 1");
  SimpleShotOptions so{k.at("center").get<bool>()};
  const std::uint64_t seed = cell_seed(ctx.cfg, c);
  auto bo = boot_opts(ctx.cfg.knobs, seed);
  Results r(c.model, c.dataset);
  json per_shot = json::object(), skipped = json::array();
  std::vector<double> shot_means;
  for (auto shots : k.at("shots").get<std::vector<std::size_t>>()) {
    std::vector<double> f1s, baccs;
    try {
      for (std::size_t e = 0; e < episodes; ++e) {
        auto ep = sample_episode(train, test, shots, derive_key(seed, shots * 1000003 + e));
        auto pred = simpleshot_classify(ep, so);
        f1s.push_back(f1_score(pred));
        baccs.push_back(balanced_accuracy(pred));
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInvalidArgument) throw;
      skipped.push_back({{"shots", shots}, {"reason", e.what()}});
      continue;
    }
    const std::string suffix = "@" + std::to_string(shots) + "shot";
    auto f1ci = bootstrap_mean_ci(f1s, bo);
    r.add("f1" + suffix, f1ci.point, f1ci);
    auto bci = bootstrap_mean_ci(baccs, bo);
    r.add("balanced_accuracy" + suffix, bci.point, bci);
    shot_means.push_back(f1ci.point);
    per_shot[std::to_string(shots)] = f1s;
  }
  if (shot_means.empty()) throw Error(ErrorCode::kInvalidArgument, "no shot count has enough support samples");
  r.add("f1_mean", std::accumulate(shot_means.begin(), shot_means.end(), 0.0) / static_cast<double>(shot_means.size()));
  return json{{"results", r.take()}, {"artifact", {{"episode_f1", per_shot}, {"skipped", skipped}}}};
}

json task_linprobe(Context& ctx, const Cell& c) {
  const auto& m = ctx.manifests.at(c.dataset);
  auto all = load_embeddings(ctx.cfg.models.at(c.model).embeddings.at(c.dataset), m);
  auto train = make_labeled(all, m, "train"), val = make_labeled(all, m, "val"), test = make_labeled(all, m, "test");
  const std::uint64_t seed = cell_seed(ctx.cfg, c);
  auto res = train_linear_probe(train, val, train_config(ctx.cfg.knobs.at("linprobe"), seed, false));
  auto pred = predict(res.model, test);
  Results r(c.model, c.dataset);
  add_classification(r, pred, boot_opts(ctx.cfg.knobs, seed));
  r.add("lr", res.model.lr);
  r.add("weight_decay", res.model.weight_decay);
  json model{{"num_classes", res.model.num_classes}, {"dim", res.model.dim},       {"weights", res.model.weights},
             {"bias", res.model.bias},              {"lr", res.model.lr},         {"weight_decay", res.model.weight_decay},
             {"fingerprint", res.model.fingerprint}};
  return json{{"results", r.take()},
              {"artifact",
               {{"grid", grid_json(res.grid)},
                {"model", model},
                {"test_ids", test.set.ids()},
                {"test_labels", test.labels},
                {"test_probs", std::vector<double>(pred.probs().begin(), pred.probs().end())},
                {"test_correct", bits(pred.correctness())}}}};
}

json task_calibrate(Context& ctx, const Cell& c) {
  const auto& dep = ctx.cells[c.deps.at(0)];
  const auto& a = dep.output->at("artifact");
  const int nc = a.at("model").at("num_classes").get<int>();
  PredictionSet p(a.at("test_labels").get<std::vector<int>>(), a.at("test_probs").get<std::vector<double>>(), nc);
  const auto& k = ctx.cfg.knobs.at("calibrate");
  BinningSpec spec;
  spec.num_bins = k.at("bins").get<int>();
  spec.threshold = k.at("tace_threshold").get<double>();
  spec.validate();
  auto bo = boot_opts(ctx.cfg.knobs, cell_seed(ctx.cfg, c));
  Results r(c.model, c.dataset);
  using Fn = double (*)(const PredictionSet&, const BinningSpec&);
  const std::pair<const char*, Fn> metrics[] = {{"ece", ece}, {"mce", mce}, {"sce", sce}, {"ace", ace}, {"tace", tace}};
  for (const auto& [name, fn] : metrics) {
    auto ci = bootstrap_ci(
        p.size(), [&](std::span<const std::size_t> idx) { return fn(p.subset(idx), spec); }, bo);
    r.add(name, fn(p, spec), ci);
  }
  BinningSpec mass = spec;
  mass.scheme = BinScheme::kEqualMass;
  return json{{"results", r.take()},
              {"artifact",
               {{"reliability_equal_width", json::parse(bin_stats(p, spec).to_json())},
                {"reliability_equal_mass", json::parse(bin_stats(p, mass).to_json())}}}};
}

json task_retrieve(Context& ctx, const Cell& c) {
  const auto& m = ctx.manifests.at(c.dataset);
  const auto& k = ctx.cfg.knobs.at("retrieve");
  auto all = l2_normalize(load_embeddings(ctx.cfg.models.at(c.model).embeddings.at(c.dataset), m));
  auto train = make_labeled(all, m, "train"), test = make_labeled(all, m, "test");
  auto ks = k.at("ks").get<std::vector<std::size_t>>();
  auto res = retrieve_topk(train, test, ks, k.at("export_depth").get<std::size_t>());
  auto bo = boot_opts(ctx.cfg.knobs, cell_seed(ctx.cfg, c));
  Results r(c.model, c.dataset);
  for (auto kk : ks) {
    const auto& p = res.predictions.at(kk);
    const std::string suffix = "@top" + std::to_string(kk);
    r.add("f1" + suffix, f1_score(p), metric_ci(p, f1_score, bo));
    r.add("balanced_accuracy" + suffix, balanced_accuracy(p), metric_ci(p, balanced_accuracy, bo));
  }
  json lists = json::array();
  for (std::size_t q = 0; q < test.count(); ++q) {
    lists.push_back({{"query", test.set.ids()[q]}, {"ids", res.ranked_ids[q]}, {"similarity", res.ranked_similarity[q]}});
  }
  return json{{"results", r.take()}, {"artifact", {{"ranked", lists}}}};
}

json task_segprobe(Context& ctx, const Cell& c) {
  const auto& m = ctx.manifests.at(c.dataset);
  if (!m.masks_path) throw Error(ErrorCode::kInvalidManifest, "segmentation dataset has no masks");
  auto tokens = read_token_file(ctx.cfg.models.at(c.model).tokens.at(c.dataset));
  auto masks = read_mask_file(*m.masks_path);
  auto tok = [&](const char* s) { return tokens.subset(m.split(s)); };
  auto msk = [&](const char* s) { return masks.subset(m.split(s)); };
  const std::uint64_t seed = cell_seed(ctx.cfg, c);
  const auto& k = ctx.cfg.knobs.at("segprobe");
  auto tc = train_config(k, seed, true);
  auto res = train_seg_head(tok("train"), msk("train"), tok("val"), msk("val"), tc);
  auto test_masks = msk("test");
  auto pred = predict(res.head, tok("test"), test_masks.height(), test_masks.width(), test_masks.background());
  auto score = segmentation_score(pred, test_masks, tc.background_weight);
  auto bo = boot_opts(ctx.cfg.knobs, seed);
  auto weighted = [&](std::span<const std::size_t> idx, bool dice) {
    double num = 0.0, den = 0.0;
    for (auto i : idx) {
      num += score.weights[i] * (dice ? score.per_patch[i].dice : score.per_patch[i].jaccard);
      den += score.weights[i];
    }
    return den > 0 ? num / den : 0.0;
  };
  Results r(c.model, c.dataset);
  r.add("dice", score.dice,
        bootstrap_ci(score.per_patch.size(), [&](std::span<const std::size_t> idx) { return weighted(idx, true); }, bo));
  r.add("jaccard", score.jaccard,
        bootstrap_ci(score.per_patch.size(), [&](std::span<const std::size_t> idx) { return weighted(idx, false); }, bo));
  r.add("lr", res.head.lr);
  r.add("weight_decay", res.head.weight_decay);
  return json{{"results", r.take()}, {"artifact", {{"grid", grid_json(res.grid)}}}};
}

json task_invariance(Context& ctx, const Cell& c) {
  const auto& m = ctx.manifests.at(c.dataset);
  const auto& entry = ctx.cfg.models.at(c.model);
  auto orig = load_embeddings(entry.embeddings.at(c.dataset), m);
  auto bo = boot_opts(ctx.cfg.knobs, cell_seed(ctx.cfg, c));
  Results r(c.model, c.dataset);
  json per = json::object();
  double total = 0.0;
  for (const auto& [name, path] : entry.transforms.at(c.dataset)) {
    auto t = read_embedding_file(path);
    auto rec = invariance_score(orig.subset(t.ids()), t, name);
    r.add("cosine:" + name, rec.mean, bootstrap_mean_ci(rec.cosine, bo));
    per[name] = rec.cosine;
    total += rec.mean;
  }
  r.add("cosine_mean", total / static_cast<double>(entry.transforms.at(c.dataset).size()));
  return json{{"results", r.take()}, {"artifact", {{"per_sample_cosine", per}}}};
}

std::vector<std::vector<double>> load_images(const DatasetManifest& m, const std::vector<std::string>& ids,
                                             std::size_t& h, std::size_t& w) {
  if (!m.image_dir) throw Error(ErrorCode::kInvalidManifest, "dataset '" + m.name + "' has no image_dir");
  std::vector<std::vector<double>> out;
  for (const auto& id : ids) {
    auto img = read_png((fs::path(*m.image_dir) / (id + ".png")).string());
    if (out.empty()) {
      h = img.height;
      w = img.width;
    } else if (img.height != h || img.width != w) {
      throw Error(ErrorCode::kShapeMismatch, "image " + id + " differs in size from the first image");
    }
    out.push_back(to_unit_floats(img));
  }
  return out;
}

json task_attack(Context& ctx, const Cell& c) {
  const auto& m = ctx.manifests.at(c.dataset);
  const auto& pj = *ctx.cfg.models.at(c.model).pipeline;
  const auto& k = ctx.cfg.knobs.at("attack");
  const std::uint64_t seed = cell_seed(ctx.cfg, c);
  const auto& test_ids = m.split("test");
  std::size_t h = 0, w = 0;
  auto test_x = load_images(m, test_ids, h, w);
  auto test_y = m.labels_for(test_ids);

  std::unique_ptr<DifferentiablePipeline> pipe;
  json info = json::object();
  if (pj.at("kind") == "toy") {
    ToyBackboneConfig bc;
    bc.height = h;
    bc.width = w;
    bc.filters = pj.value("filters", bc.filters);
    bc.hidden = pj.value("hidden", bc.hidden);
    bc.features = pj.value("features", bc.features);
    bc.seed = pj.value("seed", std::uint64_t{0});
    ToyBackbone backbone(bc);
    const auto& train_ids = m.split("train");
    std::size_t th = 0, tw = 0;
    auto train_x = load_images(m, train_ids, th, tw);
    if (th != h || tw != w) throw Error(ErrorCode::kShapeMismatch, "train and test images differ in size");
    LabeledEmbeddings feats{extract_features(backbone, train_x, train_ids), m.labels_for(train_ids), m.num_classes};
    auto probe = train_linear_probe(feats, feats, train_config(k.at("probe"), seed, false));
    info["probe_lr"] = probe.model.lr;
    info["probe_weight_decay"] = probe.model.weight_decay;
    pipe = std::make_unique<ProbedPipeline>(std::move(backbone), std::move(probe.model));
  } else {
    pipe = std::make_unique<ExternalPipeline>(pj.at("command").get<std::vector<std::string>>());
  }
  AttackConfig ac;
  ac.num_steps = k.at("num_steps").get<std::size_t>();
  ac.alpha_divisor = k.at("alpha_divisor").get<double>();
  ac.max_samples = k.at("max_samples").get<std::size_t>();
  ac.seed = seed;
  auto eps = k.at("epsilons").get<std::vector<double>>();
  auto res = f1_drop(*pipe, test_x, test_y, eps, ac);
  Results r(c.model, c.dataset);
  r.add("f1_clean", res.f1_clean);
  double total = 0.0;
  json points = json::array();
  for (const auto& p : res.points) {
    r.add("delta_f1@" + format_number(p.epsilon), p.delta_f1);
    total += p.delta_f1;
    points.push_back({{"epsilon", p.epsilon}, {"f1_adv", p.f1_adv}, {"delta_f1", p.delta_f1}});
  }
  if (!res.points.empty()) r.add("delta_f1_mean", total / static_cast<double>(res.points.size()));
  info["subsample_size"] = res.subsample.size();
  info["points"] = points;
  return json{{"results", r.take()}, {"artifact", info}};
}

json task_align(Context& ctx, const Cell& c) {
  const auto& m = ctx.manifests.at(c.dataset);
  const auto& k = ctx.cfg.knobs.at("align");
  const auto kk = k.at("k").get<std::size_t>();
  const auto& pool = m.split(k.at("pool").get<std::string>());
  std::map<std::string, EmbeddingSet> sets;
  std::map<std::string, std::vector<EmbeddingSet>> snaps;
  for (const auto& [name, e] : ctx.cfg.models) {
    if (!e.embeddings.count(c.dataset)) continue;
    sets[name] = load_embeddings(e.embeddings.at(c.dataset), m).subset(pool);
    if (auto it = e.snapshots.find(c.dataset); it != e.snapshots.end()) {
      for (const auto& p : it->second) snaps[name].push_back(load_embeddings(p, m).subset(pool));
    }
  }
  Results r(c.model, c.dataset);
  json edges = json::array(), traj = json::array();
  for (auto i = sets.begin(); i != sets.end(); ++i) {
    for (auto j = std::next(i); j != sets.end(); ++j) {
      auto s = mutual_knn(i->second, j->second, kk);
      r.add_for(i->first, c.dataset, "mutual_knn:" + j->first, s.mean);
      r.add_for(j->first, c.dataset, "mutual_knn:" + i->first, s.mean);
      edges.push_back({{"model_a", i->first}, {"model_b", j->first}, {"mean_score", s.mean}});
      if (snaps.count(i->first) && snaps.count(j->first) && snaps[i->first].size() == snaps[j->first].size()) {
        auto series = alignment_trajectory(snaps[i->first], snaps[j->first], kk);
        traj.push_back({{"model_a", i->first}, {"model_b", j->first}, {"series", series}});
      }
    }
  }
  return json{{"results", r.take()}, {"artifact", {{"edges", edges}, {"trajectories", traj}}}};
}

PairwiseMethod parse_method(const std::string& s) {
  if (s == "discordant_sign") return PairwiseMethod::kDiscordantSign;
  if (s == "one_sample_accuracy") return PairwiseMethod::kOneSampleAccuracy;
  throw Error(ErrorCode::kConfig, "unknown significance method '" + s + "'");
}

json task_significance(Context& ctx, const Cell& c) {
  const auto& k = ctx.cfg.knobs.at("significance");
  CorrectnessByModel corr;
  for (auto d : c.deps) {
    const auto& dep = ctx.cells[d];
    if (!dep.output) continue;
    corr[dep.model] = unbits(dep.output->at("artifact").at("test_correct").get<std::string>());
  }
  if (corr.size() < 2) throw Error(ErrorCode::kEmptyInput, "fewer than two models have correctness vectors");
  auto tests = pairwise_significance(c.dataset, corr, k.at("q").get<double>(),
                                     parse_method(k.at("method").get<std::string>()));
  Results r(c.model, c.dataset);
  json arr = json::array();
  for (const auto& t : tests) {
    r.add_for(t.model_a, c.dataset, "adjusted_p:" + t.model_b, t.adjusted_p);
    r.add_for(t.model_b, c.dataset, "adjusted_p:" + t.model_a, t.adjusted_p);
    r.add_for(t.model_a, c.dataset, "beats:" + t.model_b, t.significant && t.accuracy_delta > 0 ? 1.0 : 0.0);
    r.add_for(t.model_b, c.dataset, "beats:" + t.model_a, t.significant && t.accuracy_delta < 0 ? 1.0 : 0.0);
    arr.push_back({{"model_a", t.model_a},
                   {"model_b", t.model_b},
                   {"n_discordant", t.n_discordant},
                   {"n_a_wins", t.n_a_wins},
                   {"p_value", t.p_value},
                   {"adjusted_p", t.adjusted_p},
                   {"significant", t.significant},
                   {"accuracy_delta", t.accuracy_delta}});
  }
  return json{{"results", r.take()}, {"artifact", {{"tests", arr}}}};
}

TieMethod parse_ties(const std::string& s) {
  if (s == "dense") return TieMethod::kDense;
  if (s == "competition" || s == "min") return TieMethod::kCompetition;
  throw Error(ErrorCode::kConfig, "unknown tie method '" + s + "'");
}

json task_aggregate(Context& ctx, const Cell& c) {
  const auto& k = ctx.cfg.knobs.at("aggregate");
  // (task, metric) -> model -> dataset -> value
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::map<std::string, double>>> vals;
  for (auto d : c.deps) {
    const auto& dep = ctx.cells[d];
    if (!dep.output || dep.dataset.empty() || !ctx.manifests.count(dep.dataset)) continue;
    for (const auto& row : dep.output->at("results")) {
      vals[{dep.task, row.at("metric").get<std::string>()}][row.at("model").get<std::string>()]
          [row.at("dataset").get<std::string>()] = row.at("value").get<double>();
    }
  }
  std::map<std::string, DatasetStrata> strata;
  for (const auto& [name, m] : ctx.manifests) strata[name] = strata_of(m);

  Results r("", "");
  json warnings = json::array();
  // model -> (task.metric) -> "all" mean
  std::map<std::string, std::map<std::string, double>> overall;
  for (const auto& tm : k.at("metrics")) {
    const auto task = tm.at(0).get<std::string>(), metric = tm.at(1).get<std::string>();
    auto it = vals.find({task, metric});
    if (it == vals.end()) continue;
    for (const auto& [model, per_ds] : it->second) {
      auto sm = stratified_mean(per_ds, strata);
      for (const auto& [stratum, mean] : sm.means) {
        r.add_task(model, "stratum:" + stratum, "aggregate:" + task, metric, mean);
      }
      for (const auto& wmsg : sm.warnings) warnings.push_back(model + " " + task + "." + metric + ": " + wmsg);
      overall[model][task + "." + metric] = sm.means.at("all");
    }
  }

  // rank over models that have every rank task present in this run
  std::vector<std::string> tasks;
  std::vector<Direction> dirs;
  for (const auto& rt : k.at("rank_tasks")) {
    const auto key = rt.at(0).get<std::string>() + "." + rt.at(1).get<std::string>();
    const auto tm = std::make_pair(rt.at(0).get<std::string>(), rt.at(1).get<std::string>());
    if (!vals.count(tm)) continue;
    tasks.push_back(key);
    dirs.push_back(rt.at(2).get<std::string>() == "lower" ? Direction::kLowerIsBetter : Direction::kHigherIsBetter);
  }
  std::vector<std::string> models;
  for (const auto& [model, per] : overall) {
    bool complete = !tasks.empty();
    for (const auto& t : tasks) complete = complete && per.count(t);
    if (complete) {
      models.push_back(model);
    } else {
      warnings.push_back(model + ": excluded from ranking (missing a rank task)");
    }
  }
  json artifact{{"warnings", warnings}};
  json rows = r.take();
  if (!models.empty()) {
    const double scale = k.at("scale").get<double>();
    std::vector<std::vector<std::optional<double>>> scores(tasks.size(), std::vector<std::optional<double>>(models.size()));
    for (std::size_t t = 0; t < tasks.size(); ++t)
      for (std::size_t mi = 0; mi < models.size(); ++mi) scores[t][mi] = overall[models[mi]][tasks[t]] * scale;
    RankOptions ro;
    ro.tie_decimals = k.at("tie_decimals").get<int>();
    ro.task_ties = parse_ties(k.at("task_ties").get<std::string>());
    ro.final_ties = parse_ties(k.at("final_ties").get<std::string>());
    auto table = rank_sum(tasks, models, scores, dirs, ro);
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
      json base{{"model", models[mi]}, {"dataset", "all"}, {"ci", nullptr}};
      auto push = [&](const std::string& metric, double v) {
        json row = base;
        row["metric"] = metric;
        row["value"] = v;
        row["task"] = "rank";
        rows.push_back(row);
      };
      push("rank_sum", table.rank_sum[mi]);
      push("final_rank", table.final_rank[mi]);
      for (std::size_t t = 0; t < tasks.size(); ++t) push("rank:" + tasks[t], table.ranks[t][mi]);
    }
    artifact["rank_table_csv"] = table.to_csv();
  }
  return json{{"results", rows}, {"artifact", artifact}};
}

const std::map<std::string, TaskFn>& task_table() {
  static const std::map<std::string, TaskFn> t{
      {"knn", task_knn},           {"fewshot", task_fewshot},       {"linprobe", task_linprobe},
      {"calibrate", task_calibrate}, {"retrieve", task_retrieve},   {"segprobe", task_segprobe},
      {"invariance", task_invariance}, {"attack", task_attack},     {"align", task_align},
      {"significance", task_significance}, {"aggregate", task_aggregate}};
  return t;
}

// ---- planning -----------------------------------------------------------------------------

bool wants(const std::vector<std::string>& tasks, const std::string& t) {
  return std::find(tasks.begin(), tasks.end(), t) != tasks.end();
}

void plan(Context& ctx, const RunOptions& opts, std::ostream* log) {
  const auto& cfg = ctx.cfg;
  auto tasks = cfg.tasks;
  auto require = [&](const std::string& dependent, const std::string& dep) {
    if (wants(tasks, dependent) && !wants(tasks, dep)) {
      if (log) *log << "note: " << dependent << " requires " << dep << "; adding it\n";
      tasks.push_back(dep);
    }
  };
  require("calibrate", cfg.knobs.at("calibrate").at("source").get<std::string>());
  require("significance", cfg.knobs.at("significance").at("source").get<std::string>());

  auto model_ok = [&](const std::string& m) { return !opts.only_model || *opts.only_model == m; };
  auto dataset_ok = [&](const std::string& d) { return !opts.only_dataset || *opts.only_dataset == d; };
  auto is_seg = [&](const std::string& d) {
    auto it = ctx.manifests.find(d);
    return it != ctx.manifests.end() && it->second.kind == DatasetKind::kSegmentation;
  };
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> index;
  auto add = [&](Cell c) {
    index[{c.task, c.model, c.dataset}] = ctx.cells.size();
    ctx.cells.push_back(std::move(c));
  };

  static const std::vector<std::string> per_cell{"knn", "fewshot", "linprobe", "retrieve",
                                                 "segprobe", "invariance", "attack"};
  for (const auto& task : per_cell) {
    if (!wants(tasks, task)) continue;
    for (const auto& [mname, e] : cfg.models) {
      if (!model_ok(mname)) continue;
      for (const auto& [dname, _] : cfg.datasets) {
        if (!dataset_ok(dname)) continue;
        bool applicable = false;
        if (task == "segprobe") {
          applicable = e.tokens.count(dname) && is_seg(dname);
        } else if (task == "invariance") {
          applicable = e.transforms.count(dname) && e.embeddings.count(dname);
        } else if (task == "attack") {
          applicable = e.pipeline.has_value() && !is_seg(dname) && ctx.manifests.count(dname) &&
                       ctx.manifests.at(dname).image_dir.has_value();
        } else {
          applicable = e.embeddings.count(dname) && !is_seg(dname);
        }
        if (applicable || (ctx.manifest_errors.count(dname) && e.embeddings.count(dname))) {
          add(Cell{task, mname, dname, {}, {}, {}, {}, false});
        }
      }
    }
  }
  if (wants(tasks, "calibrate")) {
    const auto src = cfg.knobs.at("calibrate").at("source").get<std::string>();
    for (std::size_t i = 0, n = ctx.cells.size(); i < n; ++i) {
      if (ctx.cells[i].task != src) continue;
      Cell c{"calibrate", ctx.cells[i].model, ctx.cells[i].dataset, {i}, {}, {}, {}, false};
      add(std::move(c));
    }
  }
  if (wants(tasks, "align")) {
    for (const auto& [dname, _] : cfg.datasets) {
      if (!dataset_ok(dname) || is_seg(dname)) continue;
      std::size_t n = 0;
      for (const auto& [mname, e] : cfg.models) n += e.embeddings.count(dname) && model_ok(mname);
      if (n >= 2) add(Cell{"align", "*", dname, {}, {}, {}, {}, false});
    }
  }
  if (wants(tasks, "significance")) {
    const auto src = cfg.knobs.at("significance").at("source").get<std::string>();
    for (const auto& [dname, _] : cfg.datasets) {
      std::vector<std::size_t> deps;
      for (std::size_t i = 0; i < ctx.cells.size(); ++i)
        if (ctx.cells[i].task == src && ctx.cells[i].dataset == dname) deps.push_back(i);
      if (deps.size() >= 2) add(Cell{"significance", "*", dname, deps, {}, {}, {}, false});
    }
  }
  if (wants(tasks, "aggregate")) {
    std::vector<std::size_t> deps(ctx.cells.size());
    std::iota(deps.begin(), deps.end(), std::size_t{0});
    add(Cell{"aggregate", "*", "", deps, {}, {}, {}, false});
  }
}

// Inputs hashed into a cell's cache key.
json cell_inputs(Context& ctx, const Cell& c) {
  const auto& cfg = ctx.cfg;
  json in = json::object();
  auto manifest_digest = [&](const std::string& d) {
    json md{{"manifest", ctx.digests.of(cfg.datasets.at(d))}};
    const auto& m = ctx.manifests.at(d);
    if (m.masks_path) md["masks"] = ctx.digests.of(*m.masks_path);
    return md;
  };
  if (!c.dataset.empty()) in["dataset"] = manifest_digest(c.dataset);
  if (c.model != "*" && !c.model.empty()) {
    const auto& e = cfg.models.at(c.model);
    if (c.task == "segprobe") {
      in["tokens"] = ctx.digests.of(e.tokens.at(c.dataset));
    } else if (c.task == "attack") {
      in["pipeline"] = *e.pipeline;
      if (e.pipeline->at("kind") == "external") {
        const auto& cmd = e.pipeline->at("command");
        const auto exe = cmd.at(0).get<std::string>();
        if (fs::exists(exe)) in["pipeline_binary"] = ctx.digests.of(exe);
      }
      const auto& m = ctx.manifests.at(c.dataset);
      json imgs = json::object();
      for (const auto* split : {"train", "test"}) {
        auto it = m.splits.find(split);
        if (it == m.splits.end()) continue;
        for (const auto& id : it->second) {
          auto p = (fs::path(*m.image_dir) / (id + ".png")).string();
          if (fs::exists(p)) imgs[id] = ctx.digests.of(p);
        }
      }
      in["images"] = imgs;
    } else if (c.task != "calibrate") {
      in["embeddings"] = ctx.digests.of(e.embeddings.at(c.dataset));
      if (c.task == "invariance") {
        json t = json::object();
        for (const auto& [name, p] : e.transforms.at(c.dataset)) t[name] = ctx.digests.of(p);
        in["transforms"] = t;
      }
    }
  }
  if (c.task == "align") {
    json models = json::object();
    for (const auto& [name, e] : cfg.models) {
      if (!e.embeddings.count(c.dataset)) continue;
      json me{{"embeddings", ctx.digests.of(e.embeddings.at(c.dataset))}};
      if (auto it = e.snapshots.find(c.dataset); it != e.snapshots.end()) {
        json s = json::array();
        for (const auto& p : it->second) s.push_back(ctx.digests.of(p));
        me["snapshots"] = s;
      }
      models[name] = me;
    }
    in["models"] = models;
  }
  if (c.task == "aggregate") {
    json ds = json::object();
    for (const auto& [d, _] : ctx.manifests) ds[d] = manifest_digest(d);
    in["datasets"] = ds;
  }
  return in;
}

std::string cell_key(Context& ctx, const Cell& c) {
  const auto& knobs = ctx.cfg.knobs;
  json j{{"task", c.task}, {"model", c.model}, {"dataset", c.dataset}, {"seed", ctx.cfg.seed},
         {"schema", kReportSchemaVersion}, {"inputs", cell_inputs(ctx, c)}};
  json sub = json::object();
  sub["bootstrap"] = knobs.at("bootstrap");
  sub["f1_averaging"] = knobs.at("f1_averaging");
  if (knobs.contains(c.task)) sub[c.task] = knobs.at(c.task);
  if (c.task == "aggregate") sub["significance"] = knobs.at("significance");
  j["knobs"] = sub;
  json deps = json::array();
  for (auto d : c.deps) deps.push_back(ctx.cells[d].key);
  j["deps"] = deps;
  return sha256_hex(j.dump());
}

std::string cache_directory(const RunConfig& cfg) {
  if (cfg.cache_dir) return *cfg.cache_dir;
  if (const char* env = std::getenv("EMBED_BENCH_CACHE"); env && *env) return env;
  return (fs::path(cfg.output_dir) / ".cache").string();
}

std::optional<json> cache_load(const std::string& dir, const std::string& key) {
  std::ifstream in(fs::path(dir) / (key + ".json"));
  if (!in) return std::nullopt;
  try {
    json j = json::parse(in);
    if (j.contains("results") && j.contains("artifact")) return j;
  } catch (const json::exception&) {
  }
  return std::nullopt;
}

void cache_store(const std::string& dir, const std::string& key, const json& value) {
  fs::create_directories(dir);
  const auto final_path = fs::path(dir) / (key + ".json");
  const auto tmp = fs::path(dir) / (key + ".json.tmp" + std::to_string(std::hash<std::string>{}(key) ^
                                                                      std::hash<std::thread::id>{}(std::this_thread::get_id())));
  {
    std::ofstream out(tmp, std::ios::binary);
    out << value.dump();
  }
  fs::rename(tmp, final_path);
}

std::string sanitize(const std::string& s) {
  std::string out = s;
  for (auto& ch : out) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '.' && ch != '-' && ch != '_' && ch != '@') ch = '_';
  }
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + p.string());
  out << text;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

void write_tables(const fs::path& out_dir, const RunConfig& cfg, const Context& ctx, const EvalReport& report) {
  // per-dataset tables: rows = models, columns = datasets
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::map<std::string, double>>> per;
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::map<std::string, double>>> agg;
  for (const auto& [k, v] : report.results) {
    if (cfg.datasets.count(k.dataset)) {
      per[{k.task, k.metric}][k.model][k.dataset] = v.value;
    } else if (k.dataset.rfind("stratum:", 0) == 0) {
      agg[{k.task, k.metric}][k.model][k.dataset.substr(8)] = v.value;
    }
  }
  for (const auto& [tm, rows] : per) {
    std::set<std::string> cols;
    for (const auto& [_, r] : rows)
      for (const auto& [d, __] : r) cols.insert(d);
    std::ostringstream s;
    s << "model";
    for (const auto& d : cols) s << ',' << csv_cell(d);
    s << '\n';
    for (const auto& [model, r] : rows) {
      s << csv_cell(model);
      for (const auto& d : cols) {
        s << ',';
        if (auto it = r.find(d); it != r.end()) s << format_number(it->second);
      }
      s << '\n';
    }
    write_text(out_dir / "tables" / (sanitize(tm.first + "__" + tm.second) + ".per_dataset.csv"), s.str());
  }
  for (const auto& [tm, rows] : agg) {
    std::ostringstream s;
    s << "model";
    for (const auto& key : stratum_keys()) s << ',' << key;
    s << '\n';
    for (const auto& [model, r] : rows) {
      s << csv_cell(model);
      for (const auto& key : stratum_keys()) {
        s << ',';
        if (auto it = r.find(key); it != r.end()) s << format_number(it->second);
      }
      s << '\n';
    }
    write_text(out_dir / "tables" / (sanitize(tm.first + "__" + tm.second) + ".aggregated.csv"), s.str());
  }

  // significance heatmap over every dataset with a significance cell
  std::vector<std::vector<PairwiseTest>> per_dataset;
  std::set<std::string> models;
  for (const auto& c : ctx.cells) {
    if (c.task != "significance" || !c.output) continue;
    std::vector<PairwiseTest> tests;
    for (const auto& t : c.output->at("artifact").at("tests")) {
      PairwiseTest pt;
      pt.model_a = t.at("model_a");
      pt.model_b = t.at("model_b");
      pt.dataset = c.dataset;
      pt.n_discordant = t.at("n_discordant");
      pt.n_a_wins = t.at("n_a_wins");
      pt.p_value = t.at("p_value");
      pt.adjusted_p = t.at("adjusted_p");
      pt.significant = t.at("significant");
      pt.accuracy_delta = t.at("accuracy_delta");
      models.insert(pt.model_a);
      models.insert(pt.model_b);
      tests.push_back(pt);
    }
    per_dataset.push_back(std::move(tests));
  }
  if (!per_dataset.empty()) {
    auto hm = significance_heatmap({models.begin(), models.end()}, per_dataset);
    write_text(out_dir / "tables" / "significance_heatmap.csv", hm.to_csv());
  }
  for (const auto& c : ctx.cells) {
    if (c.task == "aggregate" && c.output && c.output->at("artifact").contains("rank_table_csv")) {
      write_text(out_dir / "tables" / "rank_sum.csv", c.output->at("artifact").at("rank_table_csv").get<std::string>());
    }
  }
}

void write_artifacts(const fs::path& out_dir, const Context& ctx) {
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> graph;
  for (const auto& c : ctx.cells) {
    if (!c.output) continue;
    const auto& a = c.output->at("artifact");
    const std::string stem = sanitize((c.model.empty() || c.model == "*" ? std::string("all") : c.model) + "__" +
                                      (c.dataset.empty() ? std::string("all") : c.dataset));
    write_text(out_dir / "artifacts" / c.task / (stem + ".json"), a.dump(2) + "\n");
    if (c.task == "linprobe") {
      const auto& mj = a.at("model");
      LinearModel lm;
      lm.num_classes = mj.at("num_classes");
      lm.dim = mj.at("dim");
      lm.weights = mj.at("weights").get<std::vector<double>>();
      lm.bias = mj.at("bias").get<std::vector<double>>();
      lm.lr = mj.at("lr");
      lm.weight_decay = mj.at("weight_decay");
      lm.fingerprint = mj.at("fingerprint");
      const auto base = out_dir / "checkpoints" / stem;
      fs::create_directories(base.parent_path());
      save_linear_model(lm, base.string() + ".emb", base.string() + ".json");
    }
    if (c.task == "align") {
      for (const auto& e : a.at("edges")) {
        auto& slot = graph[{e.at("model_a"), e.at("model_b")}];
        slot.first += e.at("mean_score").get<double>();
        slot.second += 1;
      }
    }
  }
  if (!graph.empty()) {
    std::vector<AlignmentEdge> edges;
    for (const auto& [k, v] : graph) edges.push_back({k.first, k.second, v.first / v.second});
    write_text(out_dir / "artifacts" / "align" / "graph.json", alignment_graph_json(edges) + "\n");
  }
}

}  // namespace

// ---- run ------------------------------------------------------------------------------

std::string config_fingerprint(const RunConfig& cfg) {
  Digests d;
  json j{{"seed", cfg.seed}, {"knobs", cfg.knobs}, {"schema", kReportSchemaVersion}};
  json ds = json::object();
  for (const auto& [name, p] : cfg.datasets) ds[name] = d.of(p);
  j["datasets"] = ds;
  json ms = json::object();
  for (const auto& [name, e] : cfg.models) {
    json m = json::object();
    for (const auto& [dname, p] : e.embeddings) m["embeddings"][dname] = d.of(p);
    for (const auto& [dname, p] : e.tokens) m["tokens"][dname] = d.of(p);
    for (const auto& [dname, tm] : e.transforms)
      for (const auto& [t, p] : tm) m["transforms"][dname][t] = d.of(p);
    for (const auto& [dname, list] : e.snapshots)
      for (const auto& p : list) m["snapshots"][dname].push_back(d.of(p));
    if (e.pipeline) m["pipeline"] = *e.pipeline;
    ms[name] = m;
  }
  j["models"] = ms;
  return sha256_hex(j.dump()).substr(0, 16);
}

RunOutcome run(const RunConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  std::ostream* log = opts.log;
  std::mutex log_mu;
  auto say = [&](const std::string& s) {
    if (!log) return;
    std::lock_guard lock(log_mu);
    *log << s << '\n';
  };

  Context ctx{cfg, {}, {}, {}, {}};
  for (const auto& [name, path] : cfg.datasets) {
    try {
      auto m = read_manifest(path);
      m.validate();
      ctx.manifests.emplace(name, std::move(m));
    } catch (const Error& e) {
      ctx.manifest_errors[name] = e.what();
    }
  }
  plan(ctx, opts, log);

  RunOutcome outcome;
  outcome.fingerprint = config_fingerprint(cfg);
  const std::string cache_dir = cache_directory(cfg);
  std::atomic<std::size_t> computed{0}, hits{0};

  // cells are appended in dependency order; run them in waves of ready cells
  std::vector<int> done(ctx.cells.size(), 0);
  std::size_t remaining = ctx.cells.size();
  while (remaining > 0) {
    std::vector<std::size_t> wave;
    for (std::size_t i = 0; i < ctx.cells.size(); ++i) {
      if (done[i]) continue;
      bool ready = std::all_of(ctx.cells[i].deps.begin(), ctx.cells[i].deps.end(), [&](std::size_t d) { return done[d]; });
      if (ready) wave.push_back(i);
    }
    parallel_for(wave.size(), cfg.threads, [&](std::size_t wi) {
      auto& c = ctx.cells[wave[wi]];
      const std::string label = c.task + " " + c.model + " " + c.dataset;
      try {
        if (!c.dataset.empty() && ctx.manifest_errors.count(c.dataset)) {
          throw Error(ErrorCode::kInvalidManifest, ctx.manifest_errors.at(c.dataset));
        }
        // dataset-level cells tolerate some failed inputs; per-model dependents do not
        if (c.task == "calibrate") {
          const auto& dep = ctx.cells[c.deps.at(0)];
          if (!dep.output) throw Error(ErrorCode::kEmptyInput, "dependency " + dep.task + " failed");
        }
        c.key = cell_key(ctx, c);
        if (auto cached = cache_load(cache_dir, c.key)) {
          c.output = std::move(*cached);
          c.cached = true;
          ++hits;
          say("cache hit: " + label);
          return;
        }
        c.output = task_table().at(c.task)(ctx, c);
        cache_store(cache_dir, c.key, *c.output);
        ++computed;
        say("computed: " + label);
      } catch (const std::exception& e) {
        c.error = e.what();
        say("failed: " + label + ": " + e.what());
      }
    });
    for (auto i : wave) done[i] = 1;
    remaining -= wave.size();
  }

  EvalReport& report = outcome.report;
  json header = cfg.knobs;
  header["seed"] = cfg.seed;
  report.configs[outcome.fingerprint] = header;
  for (const auto& c : ctx.cells) {
    if (c.error) {
      report.failures.push_back({c.model, c.dataset, c.task, *c.error});
      continue;
    }
    for (const auto& row : c.output->at("results")) {
      ResultKey key{row.at("model"), row.at("dataset"), row.value("task", c.task), row.at("metric")};
      ResultValue v;
      v.value = row.at("value").get<double>();
      v.fingerprint = outcome.fingerprint;
      if (!row.at("ci").is_null()) {
        const auto& ci = row["ci"];
        v.ci = CiEstimate{ci.at("point"), ci.at("lo"), ci.at("hi"), ci.at("resamples"), ci.at("level")};
      }
      report.add(key, v);
    }
  }
  std::sort(report.failures.begin(), report.failures.end());

  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir);
  write_report_json((out_dir / "report.json").string(), report);
  write_text(out_dir / "report.csv", report.to_csv());
  write_tables(out_dir, cfg, ctx, report);
  write_artifacts(out_dir, ctx);

  outcome.stats.computed = computed.load();
  outcome.stats.cache_hits = hits.load();
  outcome.stats.failed = report.failures.size();
  say("cells: " + std::to_string(ctx.cells.size()) + ", computed: " + std::to_string(outcome.stats.computed) +
      ", cache hits: " + std::to_string(outcome.stats.cache_hits) + ", failed: " + std::to_string(outcome.stats.failed));
  return outcome;
}

}  // namespace embench
