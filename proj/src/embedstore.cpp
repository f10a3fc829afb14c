#include "embench/embedstore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace embench {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "embedding formats are little-endian; big-endian hosts need byte swapping");

std::unordered_map<std::string, std::size_t> build_index(const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!index.emplace(ids[i], i).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate sample id '" + ids[i] + "'");
    }
  }
  return index;
}

void check_finite(std::span<const float> data, const std::vector<std::string>& ids, std::size_t stride) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      std::size_t row = stride ? i / stride : 0;
      std::string id = row < ids.size() ? ids[row] : std::to_string(row);
      throw Error(ErrorCode::kNonFinite, "non-finite value in sample '" + id + "'");
    }
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

std::string frame(const char magic[4], const json& header, std::string_view payload) {
  std::string head = header.dump();
  std::string out;
  out.reserve(8 + head.size() + payload.size());
  out.append(magic, 4);
  std::uint32_t len = static_cast<std::uint32_t>(head.size());
  char len_bytes[4];
  std::memcpy(len_bytes, &len, 4);
  out.append(len_bytes, 4);
  out.append(head);
  out.append(payload);
  return out;
}

struct Framed {
  json header;
  std::string_view payload;
};

Framed unframe(std::string_view bytes, const char magic[4]) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), magic, 4) != 0) {
    throw Error(ErrorCode::kBadMagic, std::string("expected magic ") + std::string(magic, 4));
  }
  if (bytes.size() < 8) throw Error(ErrorCode::kTruncated, "missing header length");
  std::uint32_t len = 0;
  std::memcpy(&len, bytes.data() + 4, 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(len)) {
    throw Error(ErrorCode::kTruncated, "header shorter than declared");
  }
  Framed f;
  try {
    f.header = json::parse(bytes.substr(8, len));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBadHeader, e.what());
  }
  if (!f.header.is_object()) throw Error(ErrorCode::kBadHeader, "header is not a JSON object");
  f.payload = bytes.substr(8 + len);
  return f;
}

std::size_t header_size(const json& h, const char* key) {
  if (!h.contains(key) || !h[key].is_number_unsigned()) {
    throw Error(ErrorCode::kBadHeader, std::string("header field '") + key + "' missing or not unsigned");
  }
  return h[key].get<std::size_t>();
}

std::vector<std::string> header_ids(const json& h, std::size_t n, const std::vector<std::string>* external) {
  if (h.value("ids_external", false)) {
    if (!external) throw Error(ErrorCode::kMissingIds, "file declares ids_external but no ids were supplied");
    if (external->size() != n) {
      throw Error(ErrorCode::kMissingIds, "external id count " + std::to_string(external->size()) +
                                              " != n " + std::to_string(n));
    }
    return *external;
  }
  if (!h.contains("ids") || !h["ids"].is_array()) throw Error(ErrorCode::kBadHeader, "header lacks ids");
  auto ids = h["ids"].get<std::vector<std::string>>();
  if (ids.size() != n) throw Error(ErrorCode::kBadHeader, "ids length does not match n");
  return ids;
}

template <typename T>
std::vector<T> payload_values(std::string_view payload, std::size_t count) {
  std::size_t need = count * sizeof(T);
  if (payload.size() < need) {
    throw Error(ErrorCode::kTruncated, "payload has " + std::to_string(payload.size()) + " bytes, expected " +
                                           std::to_string(need));
  }
  if (payload.size() > need) throw Error(ErrorCode::kBadHeader, "trailing bytes after payload");
  std::vector<T> values(count);
  if (need) std::memcpy(values.data(), payload.data(), need);
  return values;
}

template <typename T>
std::string_view as_bytes(const std::vector<T>& v) {
  return std::string_view(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
}

MagnificationBand parse_magnification(const std::string& s) {
  if (s == ">=40x") return MagnificationBand::kAtLeast40x;
  if (s == "20-40x") return MagnificationBand::k20To40x;
  if (s == "<20x") return MagnificationBand::kBelow20x;
  throw Error(ErrorCode::kInvalidManifest, "unknown magnification_band '" + s + "'");
}

OrganGroup parse_organ(const std::string& s) {
  if (s == "breast") return OrganGroup::kBreast;
  if (s == "crc") return OrganGroup::kCrc;
  if (s == "multi") return OrganGroup::kMulti;
  if (s == "other") return OrganGroup::kOther;
  throw Error(ErrorCode::kInvalidManifest, "unknown organ_group '" + s + "'");
}

}  // namespace

const char* to_string(MagnificationBand band) {
  switch (band) {
    case MagnificationBand::kAtLeast40x: return ">=40x";
    case MagnificationBand::k20To40x: return "20-40x";
    case MagnificationBand::kBelow20x: return "<20x";
  }
  return "?";
}

const char* to_string(OrganGroup group) {
  switch (group) {
    case OrganGroup::kBreast: return "breast";
    case OrganGroup::kCrc: return "crc";
    case OrganGroup::kMulti: return "multi";
    case OrganGroup::kOther: return "other";
  }
  return "?";
}

const char* to_string(ClassBand band) {
  return band == ClassBand::kBinary ? "binary" : "multiclass";
}

// ---- EmbeddingSet ---------------------------------------------------------

EmbeddingSet::EmbeddingSet(std::vector<std::string> ids, std::size_t dim, std::vector<float> data)
    : ids_(std::move(ids)), dim_(dim), data_(std::move(data)) {
  if (ids_.empty()) throw Error(ErrorCode::kEmptyInput, "embedding set needs at least one row");
  if (dim_ == 0) throw Error(ErrorCode::kShapeMismatch, "embedding dimension must be >= 1");
  if (data_.size() != ids_.size() * dim_) {
    throw Error(ErrorCode::kShapeMismatch, "data size " + std::to_string(data_.size()) + " != n*d");
  }
  check_finite(data_, ids_, dim_);
  index_ = build_index(ids_);
}

std::optional<std::size_t> EmbeddingSet::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

EmbeddingSet EmbeddingSet::subset(std::span<const std::string> ids) const {
  std::vector<float> out;
  out.reserve(ids.size() * dim_);
  for (const auto& id : ids) {
    auto idx = find(id);
    if (!idx) throw Error(ErrorCode::kMisaligned, "sample '" + id + "' not present in embedding set");
    auto r = row(*idx);
    out.insert(out.end(), r.begin(), r.end());
  }
  return EmbeddingSet(std::vector<std::string>(ids.begin(), ids.end()), dim_, std::move(out));
}

void LabeledEmbeddings::validate() const {
  if (labels.size() != set.count()) throw Error(ErrorCode::kShapeMismatch, "labels/embeddings count mismatch");
  if (num_classes < 1) throw Error(ErrorCode::kInvalidArgument, "num_classes must be >= 1");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw Error(ErrorCode::kInvalidArgument, "label out of range for sample '" + set.ids()[i] + "'");
    }
  }
}

// ---- TokenEmbeddingSet ------------------------------------------------------

TokenEmbeddingSet::TokenEmbeddingSet(std::vector<std::string> ids, std::size_t grid_h, std::size_t grid_w,
                                     std::size_t dim, std::vector<float> data)
    : ids_(std::move(ids)), grid_h_(grid_h), grid_w_(grid_w), dim_(dim), data_(std::move(data)) {
  if (ids_.empty()) throw Error(ErrorCode::kEmptyInput, "token set needs at least one sample");
  if (grid_h_ == 0 || grid_w_ == 0 || dim_ == 0) throw Error(ErrorCode::kShapeMismatch, "zero token geometry");
  if (data_.size() != ids_.size() * tokens() * dim_) {
    throw Error(ErrorCode::kShapeMismatch, "token data size != n*t*d");
  }
  check_finite(data_, ids_, tokens() * dim_);
  index_ = build_index(ids_);
}

std::optional<std::size_t> TokenEmbeddingSet::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenEmbeddingSet TokenEmbeddingSet::subset(std::span<const std::string> ids) const {
  std::vector<float> out;
  out.reserve(ids.size() * tokens() * dim_);
  for (const auto& id : ids) {
    auto idx = find(id);
    if (!idx) throw Error(ErrorCode::kMisaligned, "sample '" + id + "' not present in token set");
    auto s = sample(*idx);
    out.insert(out.end(), s.begin(), s.end());
  }
  return TokenEmbeddingSet(std::vector<std::string>(ids.begin(), ids.end()), grid_h_, grid_w_, dim_,
                           std::move(out));
}

// ---- SegMaskSet ---------------------------------------------------------------

SegMaskSet::SegMaskSet(std::vector<std::string> ids, std::size_t height, std::size_t width, int num_classes,
                       int background, std::vector<std::uint8_t> masks)
    : ids_(std::move(ids)), h_(height), w_(width), num_classes_(num_classes), background_(background),
      masks_(std::move(masks)) {
  if (ids_.empty()) throw Error(ErrorCode::kEmptyInput, "mask set needs at least one sample");
  if (num_classes_ < 1 || num_classes_ > 256) throw Error(ErrorCode::kInvalidArgument, "num_classes out of range");
  if (background_ < 0 || background_ >= num_classes_) {
    throw Error(ErrorCode::kInvalidArgument, "background class out of range");
  }
  if (masks_.size() != ids_.size() * h_ * w_) throw Error(ErrorCode::kShapeMismatch, "mask data size != n*h*w");
  for (std::size_t i = 0; i < masks_.size(); ++i) {
    if (masks_[i] >= num_classes_) {
      throw Error(ErrorCode::kInvalidArgument, "mask value out of range in sample '" + ids_[i / (h_ * w_)] + "'");
    }
  }
  index_ = build_index(ids_);
}

std::optional<std::size_t> SegMaskSet::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

SegMaskSet SegMaskSet::subset(std::span<const std::string> ids) const {
  std::vector<std::uint8_t> out;
  out.reserve(ids.size() * h_ * w_);
  for (const auto& id : ids) {
    auto idx = find(id);
    if (!idx) throw Error(ErrorCode::kMisaligned, "sample '" + id + "' not present in mask set");
    auto m = mask(*idx);
    out.insert(out.end(), m.begin(), m.end());
  }
  return SegMaskSet(std::vector<std::string>(ids.begin(), ids.end()), h_, w_, num_classes_, background_,
                    std::move(out));
}

// ---- EMB1 ------------------------------------------------------------------

std::string encode_embeddings(const EmbeddingSet& set, bool ids_external) {
  json h;
  h["n"] = set.count();
  h["d"] = set.dim();
  if (ids_external) {
    h["ids_external"] = true;
  } else {
    h["ids"] = set.ids();
  }
  std::vector<float> payload(set.data().begin(), set.data().end());
  return frame("EMB1", h, as_bytes(payload));
}

EmbeddingSet decode_embeddings(std::string_view bytes, const std::vector<std::string>* external_ids) {
  Framed f = unframe(bytes, "EMB1");
  std::size_t n = header_size(f.header, "n");
  std::size_t d = header_size(f.header, "d");
  if (n == 0 || d == 0) throw Error(ErrorCode::kBadHeader, "n and d must be >= 1");
  auto ids = header_ids(f.header, n, external_ids);
  auto values = payload_values<float>(f.payload, n * d);
  return EmbeddingSet(std::move(ids), d, std::move(values));
}

EmbeddingSet read_embedding_file(const std::string& path) {
  return decode_embeddings(read_file(path), nullptr);
}

EmbeddingSet read_embedding_file(const std::string& path, const std::vector<std::string>& external_ids) {
  return decode_embeddings(read_file(path), &external_ids);
}

void write_embedding_file(const std::string& path, const EmbeddingSet& set, bool ids_external) {
  write_file(path, encode_embeddings(set, ids_external));
}

// ---- EMT1 ------------------------------------------------------------------

TokenEmbeddingSet read_token_file(const std::string& path) {
  std::string bytes = read_file(path);
  Framed f = unframe(bytes, "EMT1");
  std::size_t n = header_size(f.header, "n");
  std::size_t t = header_size(f.header, "t");
  std::size_t d = header_size(f.header, "d");
  std::size_t ht = header_size(f.header, "h_t");
  std::size_t wt = header_size(f.header, "w_t");
  if (t != ht * wt) throw Error(ErrorCode::kBadHeader, "t != h_t * w_t");
  auto ids = header_ids(f.header, n, nullptr);
  auto values = payload_values<float>(f.payload, n * t * d);
  return TokenEmbeddingSet(std::move(ids), ht, wt, d, std::move(values));
}

void write_token_file(const std::string& path, const TokenEmbeddingSet& set) {
  json h;
  h["n"] = set.count();
  h["t"] = set.tokens();
  h["d"] = set.dim();
  h["h_t"] = set.grid_h();
  h["w_t"] = set.grid_w();
  h["ids"] = set.ids();
  std::vector<float> payload(set.data().begin(), set.data().end());
  write_file(path, frame("EMT1", h, as_bytes(payload)));
}

// ---- MSK1 ------------------------------------------------------------------

SegMaskSet read_mask_file(const std::string& path) {
  std::string bytes = read_file(path);
  Framed f = unframe(bytes, "MSK1");
  std::size_t n = header_size(f.header, "n");
  std::size_t h = header_size(f.header, "h");
  std::size_t w = header_size(f.header, "w");
  int c = f.header.value("num_classes", 0);
  int bg = f.header.value("background", 0);
  auto ids = header_ids(f.header, n, nullptr);
  auto values = payload_values<std::uint8_t>(f.payload, n * h * w);
  return SegMaskSet(std::move(ids), h, w, c, bg, std::move(values));
}

void write_mask_file(const std::string& path, const SegMaskSet& set) {
  json h;
  h["n"] = set.count();
  h["h"] = set.height();
  h["w"] = set.width();
  h["num_classes"] = set.num_classes();
  h["background"] = set.background();
  h["ids"] = set.ids();
  std::vector<std::uint8_t> payload(set.data().begin(), set.data().end());
  write_file(path, frame("MSK1", h, as_bytes(payload)));
}

// ---- Manifest --------------------------------------------------------------

const std::vector<std::string>& DatasetManifest::split(const std::string& split_name) const {
  auto it = splits.find(split_name);
  if (it == splits.end() || it->second.empty()) {
    throw Error(ErrorCode::kInvalidManifest, "dataset '" + name + "' has no nonempty split '" + split_name + "'");
  }
  return it->second;
}

std::vector<int> DatasetManifest::labels_for(std::span<const std::string> ids) const {
  std::vector<int> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = labels.find(id);
    if (it == labels.end()) throw Error(ErrorCode::kInvalidManifest, "no label for sample '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

void DatasetManifest::validate() const {
  if (name.empty()) throw Error(ErrorCode::kInvalidManifest, "manifest has no name");
  if (num_classes < 1) throw Error(ErrorCode::kInvalidManifest, "num_classes must be >= 1");
  if ((num_classes == 2) != (class_band == ClassBand::kBinary)) {
    throw Error(ErrorCode::kInvalidManifest, "class_band inconsistent with num_classes=" + std::to_string(num_classes));
  }
  std::map<std::string, std::string> owner;
  for (const auto& [split_name, ids] : splits) {
    for (const auto& id : ids) {
      auto [it, inserted] = owner.emplace(id, split_name);
      if (!inserted) {
        throw Error(ErrorCode::kInvalidManifest,
                    "sample '" + id + "' appears in both split '" + it->second + "' and split '" + split_name + "'");
      }
      if (kind == DatasetKind::kClassification) {
        auto lab = labels.find(id);
        if (lab == labels.end()) {
          throw Error(ErrorCode::kInvalidManifest, "sample '" + id + "' in split '" + split_name + "' has no label");
        }
      }
    }
  }
  for (const auto& [id, label] : labels) {
    if (label < 0 || label >= num_classes) {
      throw Error(ErrorCode::kInvalidManifest, "label " + std::to_string(label) + " of sample '" + id +
                                                   "' outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  if (kind == DatasetKind::kSegmentation) {
    if (!masks_path) throw Error(ErrorCode::kInvalidManifest, "segmentation dataset '" + name + "' has no masks");
    if (!token_grid) throw Error(ErrorCode::kInvalidManifest, "segmentation dataset '" + name + "' has no token_grid");
    if (background_class < 0 || background_class >= num_classes) {
      throw Error(ErrorCode::kInvalidManifest, "background_class out of range");
    }
  }
}

DatasetManifest parse_manifest(std::string_view json_text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidManifest, e.what());
  }
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    std::string kind = j.value("task", std::string("classification"));
    if (kind == "classification") {
      m.kind = DatasetKind::kClassification;
    } else if (kind == "segmentation") {
      m.kind = DatasetKind::kSegmentation;
    } else {
      throw Error(ErrorCode::kInvalidManifest, "unknown task '" + kind + "'");
    }
    m.num_classes = j.at("num_classes").get<int>();
    m.magnification = parse_magnification(j.at("magnification_band").get<std::string>());
    m.organ = parse_organ(j.at("organ_group").get<std::string>());
    std::string band = j.value("class_band", m.num_classes == 2 ? std::string("binary") : std::string("multiclass"));
    if (band == "binary") {
      m.class_band = ClassBand::kBinary;
    } else if (band == "multiclass") {
      m.class_band = ClassBand::kMulticlass;
    } else {
      throw Error(ErrorCode::kInvalidManifest, "unknown class_band '" + band + "'");
    }
    for (auto& [k, v] : j.at("splits").items()) m.splits[k] = v.get<std::vector<std::string>>();
    if (j.contains("labels")) {
      for (auto& [k, v] : j["labels"].items()) m.labels[k] = v.get<int>();
    }
    if (j.contains("token_grid")) {
      auto g = j["token_grid"].get<std::vector<std::size_t>>();
      if (g.size() != 2 || g[0] == 0 || g[1] == 0) throw Error(ErrorCode::kInvalidManifest, "token_grid must be [h, w]");
      m.token_grid = std::make_pair(g[0], g[1]);
    }
    namespace fs = std::filesystem;
    auto resolve = [&](const std::string& p) {
      fs::path path(p);
      return (path.is_absolute() ? path : fs::path(base_dir) / path).lexically_normal().string();
    };
    if (j.contains("masks")) m.masks_path = resolve(j["masks"].get<std::string>());
    if (j.contains("image_dir")) m.image_dir = resolve(j["image_dir"].get<std::string>());
    m.background_class = j.value("background_class", 0);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidManifest, e.what());
  }
  m.validate();
  return m;
}

DatasetManifest read_manifest(const std::string& path) {
  std::string base = std::filesystem::path(path).parent_path().string();
  if (base.empty()) base = ".";
  return parse_manifest(read_file(path), base);
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["name"] = m.name;
  j["task"] = m.kind == DatasetKind::kClassification ? "classification" : "segmentation";
  j["num_classes"] = m.num_classes;
  j["magnification_band"] = to_string(m.magnification);
  j["organ_group"] = to_string(m.organ);
  j["class_band"] = to_string(m.class_band);
  j["splits"] = m.splits;
  j["labels"] = m.labels;
  if (m.token_grid) j["token_grid"] = {m.token_grid->first, m.token_grid->second};
  if (m.masks_path) j["masks"] = *m.masks_path;
  if (m.image_dir) j["image_dir"] = *m.image_dir;
  if (m.kind == DatasetKind::kSegmentation) j["background_class"] = m.background_class;
  return j.dump(2);
}

// ---- normalization -----------------------------------------------------------

EmbeddingSet l2_normalize(const EmbeddingSet& set) {
  std::vector<float> out(set.data().begin(), set.data().end());
  const std::size_t d = set.dim();
  for (std::size_t i = 0; i < set.count(); ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += static_cast<double>(out[i * d + j]) * out[i * d + j];
    if (!(sq > 0.0)) throw Error(ErrorCode::kZeroNorm, "sample '" + set.ids()[i] + "' has zero norm");
    double inv = 1.0 / std::sqrt(sq);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = static_cast<float>(out[i * d + j] * inv);
  }
  return EmbeddingSet(set.ids(), d, std::move(out));
}

LabeledEmbeddings make_labeled(const EmbeddingSet& all, const DatasetManifest& manifest, const std::string& split) {
  const auto& ids = manifest.split(split);
  LabeledEmbeddings out{all.subset(ids), manifest.labels_for(ids), manifest.num_classes};
  out.validate();
  return out;
}

}  // namespace embench
