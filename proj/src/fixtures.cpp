#include "embench/fixtures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <filesystem>
#include <fstream>

#include "embench/augment.hpp"
#include "embench/common.hpp"
#include "embench/embedstore.hpp"
#include "json.hpp"

namespace embench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Split {
  std::vector<std::string> ids;
  std::vector<int> labels;
};

Split make_split(const std::string& prefix, int classes, int per_class) {
  Split s;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      s.ids.push_back(prefix + "_c" + std::to_string(c) + "_" + std::to_string(i));
      s.labels.push_back(c);
    }
  }
  return s;
}

// Gaussian blobs: class c centred on separation * e_c, isotropic noise.
std::vector<float> blob_rows(const std::vector<int>& labels, std::size_t dim, double separation, double noise,
                             CounterRng& rng) {
  std::vector<float> out(labels.size() * dim);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double centre = d == static_cast<std::size_t>(labels[i]) ? separation : 0.0;
      out[i * dim + d] = static_cast<float>(centre + 0.3 + noise * rng.normal());
    }
  }
  return out;
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + p.string());
  out << j.dump(2) << '\n';
}

struct ClassificationData {
  DatasetManifest manifest;
  std::vector<std::string> ids;  // train, val, test order
  std::vector<int> labels;
};

ClassificationData classification(const std::string& name, int classes, int train, int val, int test) {
  ClassificationData d;
  d.manifest.name = name;
  d.manifest.num_classes = classes;
  d.manifest.class_band = classes == 2 ? ClassBand::kBinary : ClassBand::kMulticlass;
  for (auto [split, n] : {std::pair<const char*, int>{"train", train}, {"val", val}, {"test", test}}) {
    auto s = make_split(name + "_" + split, classes, n);
    d.manifest.splits[split] = s.ids;
    for (std::size_t i = 0; i < s.ids.size(); ++i) d.manifest.labels[s.ids[i]] = s.labels[i];
    d.ids.insert(d.ids.end(), s.ids.begin(), s.ids.end());
    d.labels.insert(d.labels.end(), s.labels.begin(), s.labels.end());
  }
  return d;
}

}  // namespace

std::string write_synthetic_suite(const std::string& dir_str, std::uint64_t seed) {
  const fs::path dir(dir_str);
  fs::create_directories(dir / "data");
  fs::create_directories(dir / "models");
  const std::size_t dim = 8;
  const std::map<std::string, double> separation{{"alpha", 2.0}, {"beta", 1.0}};

  json models = json::object();
  for (const auto& [m, _] : separation) models[m] = json::object();

  // blobs3: three-class, mid magnification, colorectal
  auto b3 = classification("blobs3", 3, 12, 6, 10);
  b3.manifest.magnification = MagnificationBand::k20To40x;
  b3.manifest.organ = OrganGroup::kCrc;
  write_json(dir / "data" / "blobs3.json", json::parse(manifest_to_json(b3.manifest)));

  // blobs2: binary, low magnification, breast, with 8x8 images for the attack task
  auto b2 = classification("blobs2", 2, 12, 6, 10);
  b2.manifest.magnification = MagnificationBand::kBelow20x;
  b2.manifest.organ = OrganGroup::kBreast;
  b2.manifest.image_dir = "images";
  fs::create_directories(dir / "data" / "images");
  {
    CounterRng rng(derive_key(seed, "fixtures", "images"));
    for (std::size_t i = 0; i < b2.ids.size(); ++i) {
      Image img(8, 8);
      const double base = b2.labels[i] == 0 ? 80.0 : 170.0;
      for (auto& px : img.pixels) px = static_cast<std::uint8_t>(std::clamp(base + 25.0 * rng.normal(), 0.0, 255.0));
      write_png((dir / "data" / "images" / (b2.ids[i] + ".png")).string(), img);
    }
  }
  write_json(dir / "data" / "blobs2.json", json::parse(manifest_to_json(b2.manifest)));

  // seg: 2x2 token grid over 8x8 masks, one class per quadrant, background 0
  DatasetManifest seg;
  seg.name = "seg";
  seg.kind = DatasetKind::kSegmentation;
  seg.num_classes = 3;
  seg.class_band = ClassBand::kMulticlass;
  seg.magnification = MagnificationBand::kAtLeast40x;
  seg.organ = OrganGroup::kMulti;
  seg.token_grid = std::make_pair(std::size_t{2}, std::size_t{2});
  seg.masks_path = "seg_masks.msk";
  seg.background_class = 0;
  std::vector<std::string> seg_ids;
  std::vector<std::array<int, 4>> quadrant_class;
  {
    CounterRng rng(derive_key(seed, "fixtures", "seg"));
    for (auto [split, n] : {std::pair<const char*, int>{"train", 24}, {"val", 8}, {"test", 8}}) {
      for (int i = 0; i < n; ++i) {
        const std::string id = std::string("seg_") + split + "_" + std::to_string(i);
        seg.splits[split].push_back(id);
        seg_ids.push_back(id);
        std::array<int, 4> q{};
        for (auto& c : q) c = static_cast<int>(rng.below(3));
        quadrant_class.push_back(q);
      }
    }
    std::vector<std::uint8_t> masks(seg_ids.size() * 64);
    for (std::size_t s = 0; s < seg_ids.size(); ++s) {
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x)
          masks[s * 64 + y * 8 + x] = static_cast<std::uint8_t>(quadrant_class[s][(y / 4) * 2 + x / 4]);
    }
    write_mask_file((dir / "data" / "seg_masks.msk").string(), SegMaskSet(seg_ids, 8, 8, 3, 0, masks));
  }
  write_json(dir / "data" / "seg.json", json::parse(manifest_to_json(seg)));

  for (const auto& [m, sep] : separation) {
    CounterRng rng(derive_key(seed, "fixtures", m));
    const fs::path md = dir / "models" / m;
    fs::create_directories(md);
    auto rel = [&](const std::string& f) { return "models/" + m + "/" + f; };
    auto& entry = models[m];

    auto b3_rows = blob_rows(b3.labels, dim, sep, 0.5, rng);
    EmbeddingSet b3_set(b3.ids, dim, b3_rows);
    write_embedding_file((md / "blobs3.emb").string(), b3_set);
    entry["embeddings"]["blobs3"] = rel("blobs3.emb");

    // ids are left to the manifest order for one model to exercise that path
    EmbeddingSet b2_set(b2.ids, dim, blob_rows(b2.labels, dim, sep, 0.5, rng));
    write_embedding_file((md / "blobs2.emb").string(), b2_set, m == "beta");
    entry["embeddings"]["blobs2"] = rel("blobs2.emb");

    // transformed-image embeddings on the blobs3 test split
    const auto& test_ids = b3.manifest.splits.at("test");
    for (auto [tname, scale] : {std::pair<const char*, double>{"blur", 0.05}, {"jitter", 0.3}}) {
      auto orig = b3_set.subset(test_ids);
      std::vector<float> rows(orig.data().begin(), orig.data().end());
      for (auto& v : rows) v = static_cast<float>(v + scale * rng.normal());
      write_embedding_file((md / (std::string("blobs3_") + tname + ".emb")).string(),
                           EmbeddingSet(test_ids, dim, rows));
      entry["transforms"]["blobs3"][tname] = rel(std::string("blobs3_") + tname + ".emb");
    }

    // training snapshots: random features converging to the final embedding
    std::vector<float> start(b3_rows.size());
    for (auto& v : start) v = static_cast<float>(rng.normal());
    for (int t = 0; t < 3; ++t) {
      const double w = (t + 1) / 3.0;
      std::vector<float> rows(b3_rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<float>((1 - w) * start[i] + w * b3_rows[i]);
      const std::string f = "blobs3_snap" + std::to_string(t) + ".emb";
      write_embedding_file((md / f).string(), EmbeddingSet(b3.ids, dim, rows));
      entry["snapshots"]["blobs3"].push_back(rel(f));
    }

    // per-token features: a noisy one-hot of the quadrant class
    const std::size_t tdim = 6;
    std::vector<float> tok(seg_ids.size() * 4 * tdim);
    for (std::size_t s = 0; s < seg_ids.size(); ++s)
      for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t d = 0; d < tdim; ++d)
          tok[(s * 4 + t) * tdim + d] = static_cast<float>(
              (d == static_cast<std::size_t>(quadrant_class[s][t]) ? sep : 0.0) + 0.4 * rng.normal());
    write_token_file((md / "seg.emt").string(), TokenEmbeddingSet(seg_ids, 2, 2, tdim, tok));
    entry["tokens"]["seg"] = rel("seg.emt");

    entry["pipeline"] = {{"kind", "toy"}, {"seed", derive_key(seed, "toy_backbone", m) % 1000003}};
  }

  json cfg{{"output_dir", "out"},
           {"seed", seed},
           {"threads", 1},
           {"datasets", {{"blobs3", "data/blobs3.json"}, {"blobs2", "data/blobs2.json"}, {"seg", "data/seg.json"}}},
           {"models", models},
           {"tasks", {"knn", "fewshot", "linprobe", "segprobe", "calibrate", "retrieve", "align", "invariance",
                      "attack", "significance", "aggregate"}},
           {"knobs",
            {{"bootstrap", {{"resamples", 200}}},
             {"knn", {{"k_grid", {1, 3, 5}}}},
             {"fewshot", {{"shots", {1, 2, 4}}, {"episodes", 5}}},
             {"linprobe", {{"lr_grid", {0.01, 0.001}}, {"wd_grid", {0.0, 0.0001}}, {"epochs", 30}, {"batch_size", 16}}},
             {"segprobe", {{"lr_grid", {0.01, 0.001}}, {"wd_grid", {0.0}}, {"epochs", 30}, {"batch_size", 8}}},
             {"retrieve", {{"ks", {1, 3, 5}}, {"export_depth", 5}}},
             {"align", {{"k", 3}}},
             {"attack", {{"max_samples", 12}, {"probe", {{"lr_grid", {0.01}}, {"epochs", 30}, {"batch_size", 8}}}}}}}};
  const auto path = dir / "run.json";
  write_json(path, cfg);
  return path.string();
}

}  // namespace embench
