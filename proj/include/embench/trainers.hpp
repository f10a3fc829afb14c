#pragma once

// Gradient-trained probes on frozen embeddings: a multinomial logistic
// linear probe and a class-token segmentation head, both optimized with Adam
// over a (learning rate, weight decay) grid and selected on validation data.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embench/embedstore.hpp"
#include "embench/metrics.hpp"

namespace embench {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::size_t size, AdamConfig cfg = {});

  // Bias-corrected Adam update of params in place.
  void step(std::span<double> params, std::span<const double> grad, double lr);
  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  std::vector<double> lr_grid{1e-3, 1e-4, 1e-5};
  std::vector<double> wd_grid{0.0, 1e-3, 1e-4};
  std::uint64_t seed = 0;
  // grid points trained concurrently
  std::size_t threads = 1;
  // weight of background-only patches in segmentation validation scoring
  double background_weight = 0.1;

  void validate() const;
  std::string fingerprint() const;

  static TrainConfig segmentation_defaults();
};

struct LinearModel {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<double> weights;  // num_classes x dim, row-major
  std::vector<double> bias;     // num_classes
  std::string fingerprint;
  double lr = 0.0;
  double weight_decay = 0.0;

  static LinearModel zeros(std::size_t num_classes, std::size_t dim);
  void logits(std::span<const float> x, std::span<double> out) const;
};

struct LinearGradient {
  double loss = 0.0;
  std::vector<double> weights;
  std::vector<double> bias;
};

// Mean cross-entropy over `rows` (all rows when empty).
double cross_entropy_loss(const LinearModel& model, const LabeledEmbeddings& data,
                          std::span<const std::size_t> rows = {});
LinearGradient cross_entropy_gradient(const LinearModel& model, const LabeledEmbeddings& data,
                                      std::span<const std::size_t> rows = {});

struct TrainTrace {
  // full-data training loss after each epoch
  std::vector<double> epoch_loss;
};

// One grid point from zero initialization. Throws kDiverged on a non-finite loss.
LinearModel train_linear(const LabeledEmbeddings& train, double lr, double weight_decay, const TrainConfig& cfg,
                         TrainTrace* trace = nullptr);

struct GridPointResult {
  double lr = 0.0;
  double weight_decay = 0.0;
  double val_score = 0.0;
  bool diverged = false;
  std::string message;
};

struct LinearProbeResult {
  LinearModel model;
  std::vector<GridPointResult> grid;
};

LinearProbeResult train_linear_probe(const LabeledEmbeddings& train, const LabeledEmbeddings& val,
                                     const TrainConfig& cfg);

PredictionSet predict(const LinearModel& model, const LabeledEmbeddings& data);

void softmax_inplace(std::span<double> logits);

// Checkpoint: W rows as an EMB1 file plus a JSON sidecar with bias and config.
void save_linear_model(const LinearModel& model, const std::string& emb_path, const std::string& sidecar_path);
LinearModel load_linear_model(const std::string& emb_path, const std::string& sidecar_path);

// ---- segmentation ----------------------------------------------------------

struct SegHead {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<double> class_tokens;  // num_classes x dim
  std::vector<double> bias;          // num_classes
  double scale = 1.0;
  std::string fingerprint;
  double lr = 0.0;
  double weight_decay = 0.0;

  static SegHead zeros(std::size_t num_classes, std::size_t dim, double scale = 1.0);
};

// Bilinear (half-pixel centers, edge clamped) map from the token grid to the
// mask grid, stored as per-pixel taps.
class BilinearUpsampler {
 public:
  BilinearUpsampler(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w);

  struct Tap {
    std::uint32_t src;
    double weight;
  };
  std::size_t out_size() const { return out_h_ * out_w_; }
  std::size_t in_size() const { return in_h_ * in_w_; }
  std::span<const Tap> taps(std::size_t pixel) const {
    return std::span<const Tap>(taps_).subspan(pixel * 4, 4);
  }
  // Upsample a channel-last (in_size x channels) map to (out_size x channels).
  std::vector<double> apply(std::span<const double> in, std::size_t channels) const;

 private:
  std::size_t in_h_, in_w_, out_h_, out_w_;
  std::vector<Tap> taps_;
};

struct SegGradient {
  double loss = 0.0;
  std::vector<double> class_tokens;
  std::vector<double> bias;
};

// Soft Dice loss (1 - mean over classes of (2I + s)/(P + G + s), pooled over
// the batch) on token softmax maps bilinearly upsampled to mask resolution.
double seg_dice_loss(const SegHead& head, const TokenEmbeddingSet& tokens, const SegMaskSet& masks,
                     std::span<const std::size_t> rows = {}, double smooth = 1.0);
SegGradient seg_dice_gradient(const SegHead& head, const TokenEmbeddingSet& tokens, const SegMaskSet& masks,
                              std::span<const std::size_t> rows = {}, double smooth = 1.0);

SegHead train_seg_single(const TokenEmbeddingSet& tokens, const SegMaskSet& masks, double lr, double weight_decay,
                         const TrainConfig& cfg, TrainTrace* trace = nullptr);

struct SegProbeResult {
  SegHead head;
  std::vector<GridPointResult> grid;
};

SegProbeResult train_seg_head(const TokenEmbeddingSet& train_tokens, const SegMaskSet& train_masks,
                              const TokenEmbeddingSet& val_tokens, const SegMaskSet& val_masks,
                              const TrainConfig& cfg);

// Per-pixel argmax of the upsampled class probabilities.
SegMaskSet predict(const SegHead& head, const TokenEmbeddingSet& tokens, std::size_t mask_h, std::size_t mask_w,
                   int background);

}  // namespace embench
