#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "embench/common.hpp"

namespace embench {

// Per-sample predictions. When probs are present they are row-major N x C,
// each row sums to 1 and y_pred is its argmax.
class PredictionSet {
 public:
  PredictionSet() = default;
  PredictionSet(std::vector<int> y_true, std::vector<int> y_pred, int num_classes);
  // y_pred is derived as argmax(probs) (lowest index on ties).
  PredictionSet(std::vector<int> y_true, std::vector<double> probs, int num_classes);

  std::size_t size() const { return y_true_.size(); }
  int num_classes() const { return num_classes_; }
  const std::vector<int>& y_true() const { return y_true_; }
  const std::vector<int>& y_pred() const { return y_pred_; }
  bool has_probs() const { return !probs_.empty(); }
  std::span<const double> probs() const { return probs_; }
  std::span<const double> probs_row(std::size_t i) const {
    return std::span<const double>(probs_).subspan(i * num_classes_, num_classes_);
  }
  // Top confidence max_c probs[i][c]. Requires probs.
  double confidence(std::size_t i) const;
  bool correct(std::size_t i) const { return y_true_[i] == y_pred_[i]; }
  std::vector<std::uint8_t> correctness() const;

  PredictionSet subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<int> y_true_;
  std::vector<int> y_pred_;
  std::vector<double> probs_;
  int num_classes_ = 0;
};

double accuracy(const PredictionSet& p);
// Mean recall over classes present in y_true.
double balanced_accuracy(const PredictionSet& p);
// Macro F1 over classes present in y_true.
double f1_score(const PredictionSet& p);

struct OverlapScore {
  double dice = 0.0;
  double jaccard = 0.0;
};

// Per-class overlap; nullopt when the class is absent from both masks.
std::optional<OverlapScore> class_overlap(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth,
                                          int cls);

// Macro average over non-background classes present in either mask. A pair
// with no foreground anywhere scores 1.
OverlapScore dice_jaccard(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth, int num_classes,
                          int background);

class SegMaskSet;

struct SegmentationScore {
  double dice = 0.0;
  double jaccard = 0.0;
  std::vector<OverlapScore> per_patch;
  std::vector<double> weights;
};

// Weighted patch average; patches whose truth is background-only get weight
// background_weight, others 1.
SegmentationScore segmentation_score(const SegMaskSet& pred, const SegMaskSet& truth, double background_weight = 0.1);

struct CiEstimate {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  int resamples = 0;
  double level = 0.95;
};

struct BootstrapOptions {
  int resamples = 3000;
  double level = 0.95;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

// statistic(indices) evaluates the statistic on a resample given as sample
// indices into the original data (the identity resample yields the point).
using ResampleStatistic = std::function<double(std::span<const std::size_t>)>;

// Percentile bootstrap. Resample r draws from CounterRng(derive_key(seed, r)),
// so results do not depend on thread count.
CiEstimate bootstrap_ci(std::size_t n, const ResampleStatistic& statistic, const BootstrapOptions& opts = {});
CiEstimate bootstrap_mean_ci(std::span<const double> values, const BootstrapOptions& opts = {});

// Linear-interpolation quantile of sorted values (numpy's default).
double quantile_sorted(std::span<const double> sorted, double q);

}  // namespace embench
