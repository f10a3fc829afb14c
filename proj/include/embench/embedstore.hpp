#pragma once

// On-disk embedding formats and the validated containers every other module
// consumes.
//
// EMB1 layout (all integers little-endian):
//   "EMB1" | u32 header_len | header_len bytes of UTF-8 JSON | n*d float32, row-major
// header: {"d":D,"ids":[...],"n":N} or {"d":D,"ids_external":true,"n":N}
//
// EMT1 is the spatial-token variant:
//   "EMT1" | u32 header_len | JSON {"d","h_t","ids","n","t","w_t"} | n*t*d float32
//
// MSK1 stores segmentation masks:
//   "MSK1" | u32 header_len | JSON {"background","h","ids","n","num_classes","w"} | n*h*w uint8

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "embench/common.hpp"

namespace embench {

class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  // Validates: n >= 1, d >= 1, data.size() == n*d, finite values, unique ids.
  EmbeddingSet(std::vector<std::string> ids, std::size_t dim, std::vector<float> data);

  std::size_t count() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const float> data() const { return data_; }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * dim_, dim_);
  }
  std::optional<std::size_t> find(const std::string& id) const;

  // Rows for `ids`, in that order. Throws kMisaligned on an unknown id.
  EmbeddingSet subset(std::span<const std::string> ids) const;

  bool operator==(const EmbeddingSet& other) const {
    return dim_ == other.dim_ && ids_ == other.ids_ && data_ == other.data_;
  }

 private:
  std::vector<std::string> ids_;
  std::size_t dim_ = 0;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Embeddings paired with integer class labels.
struct LabeledEmbeddings {
  EmbeddingSet set;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t count() const { return set.count(); }
  void validate() const;
};

class TokenEmbeddingSet {
 public:
  TokenEmbeddingSet() = default;
  TokenEmbeddingSet(std::vector<std::string> ids, std::size_t grid_h, std::size_t grid_w,
                    std::size_t dim, std::vector<float> data);

  std::size_t count() const { return ids_.size(); }
  std::size_t tokens() const { return grid_h_ * grid_w_; }
  std::size_t grid_h() const { return grid_h_; }
  std::size_t grid_w() const { return grid_w_; }
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const float> data() const { return data_; }
  // tokens()*dim() floats for sample i, token-major (row-major over the grid).
  std::span<const float> sample(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * tokens() * dim_, tokens() * dim_);
  }
  std::optional<std::size_t> find(const std::string& id) const;
  TokenEmbeddingSet subset(std::span<const std::string> ids) const;

 private:
  std::vector<std::string> ids_;
  std::size_t grid_h_ = 0, grid_w_ = 0, dim_ = 0;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

class SegMaskSet {
 public:
  SegMaskSet() = default;
  SegMaskSet(std::vector<std::string> ids, std::size_t height, std::size_t width, int num_classes,
             int background, std::vector<std::uint8_t> masks);

  std::size_t count() const { return ids_.size(); }
  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }
  int num_classes() const { return num_classes_; }
  int background() const { return background_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const std::uint8_t> mask(std::size_t i) const {
    return std::span<const std::uint8_t>(masks_).subspan(i * h_ * w_, h_ * w_);
  }
  std::span<const std::uint8_t> data() const { return masks_; }
  std::optional<std::size_t> find(const std::string& id) const;
  SegMaskSet subset(std::span<const std::string> ids) const;

 private:
  std::vector<std::string> ids_;
  std::size_t h_ = 0, w_ = 0;
  int num_classes_ = 0;
  int background_ = 0;
  std::vector<std::uint8_t> masks_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class MagnificationBand { kAtLeast40x, k20To40x, kBelow20x };
enum class OrganGroup { kBreast, kCrc, kMulti, kOther };
enum class ClassBand { kBinary, kMulticlass };
enum class DatasetKind { kClassification, kSegmentation };

const char* to_string(MagnificationBand band);
const char* to_string(OrganGroup group);
const char* to_string(ClassBand band);

struct DatasetManifest {
  std::string name;
  DatasetKind kind = DatasetKind::kClassification;
  std::map<std::string, std::vector<std::string>> splits;
  std::map<std::string, int> labels;
  int num_classes = 0;
  MagnificationBand magnification = MagnificationBand::k20To40x;
  OrganGroup organ = OrganGroup::kOther;
  ClassBand class_band = ClassBand::kMulticlass;
  std::optional<std::pair<std::size_t, std::size_t>> token_grid;
  // Paths are resolved relative to the manifest file.
  std::optional<std::string> masks_path;
  std::optional<std::string> image_dir;
  int background_class = 0;

  const std::vector<std::string>& split(const std::string& name) const;
  std::vector<int> labels_for(std::span<const std::string> ids) const;
  // Throws kInvalidManifest naming the offending split/id.
  void validate() const;
};

EmbeddingSet read_embedding_file(const std::string& path);
// For files written with ids_external: ids come from the caller (manifest order).
EmbeddingSet read_embedding_file(const std::string& path, const std::vector<std::string>& external_ids);
void write_embedding_file(const std::string& path, const EmbeddingSet& set, bool ids_external = false);

std::string encode_embeddings(const EmbeddingSet& set, bool ids_external = false);
EmbeddingSet decode_embeddings(std::string_view bytes, const std::vector<std::string>* external_ids = nullptr);

TokenEmbeddingSet read_token_file(const std::string& path);
void write_token_file(const std::string& path, const TokenEmbeddingSet& set);

SegMaskSet read_mask_file(const std::string& path);
void write_mask_file(const std::string& path, const SegMaskSet& set);

DatasetManifest read_manifest(const std::string& path);
DatasetManifest parse_manifest(std::string_view json_text, const std::string& base_dir = ".");
std::string manifest_to_json(const DatasetManifest& manifest);

// Unit-norm rows; throws kZeroNorm naming the offending id.
EmbeddingSet l2_normalize(const EmbeddingSet& set);

LabeledEmbeddings make_labeled(const EmbeddingSet& all, const DatasetManifest& manifest,
                               const std::string& split);

}  // namespace embench
