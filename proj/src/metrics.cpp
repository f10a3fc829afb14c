#include "embench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "embench/embedstore.hpp"

namespace embench {

namespace {

void check_labels(const std::vector<int>& labels, int num_classes, const char* what) {
  for (int v : labels) {
    if (v < 0 || v >= num_classes) {
      throw Error(ErrorCode::kInvalidArgument, std::string(what) + " value " + std::to_string(v) + " outside [0, " +
                                                   std::to_string(num_classes) + ")");
    }
  }
}

struct Confusion {
  std::vector<std::size_t> tp, fp, fn, support;
};

Confusion confusion(const PredictionSet& p) {
  if (p.size() == 0) throw Error(ErrorCode::kEmptyInput, "metrics need at least one sample");
  const auto c = static_cast<std::size_t>(p.num_classes());
  Confusion m{std::vector<std::size_t>(c), std::vector<std::size_t>(c), std::vector<std::size_t>(c),
              std::vector<std::size_t>(c)};
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto t = static_cast<std::size_t>(p.y_true()[i]);
    auto y = static_cast<std::size_t>(p.y_pred()[i]);
    ++m.support[t];
    if (t == y) {
      ++m.tp[t];
    } else {
      ++m.fn[t];
      ++m.fp[y];
    }
  }
  return m;
}

}  // namespace

PredictionSet::PredictionSet(std::vector<int> y_true, std::vector<int> y_pred, int num_classes)
    : y_true_(std::move(y_true)), y_pred_(std::move(y_pred)), num_classes_(num_classes) {
  if (num_classes_ < 1) throw Error(ErrorCode::kInvalidArgument, "num_classes must be >= 1");
  if (y_true_.size() != y_pred_.size()) throw Error(ErrorCode::kShapeMismatch, "y_true/y_pred length mismatch");
  check_labels(y_true_, num_classes_, "y_true");
  check_labels(y_pred_, num_classes_, "y_pred");
}

PredictionSet::PredictionSet(std::vector<int> y_true, std::vector<double> probs, int num_classes)
    : y_true_(std::move(y_true)), probs_(std::move(probs)), num_classes_(num_classes) {
  if (num_classes_ < 1) throw Error(ErrorCode::kInvalidArgument, "num_classes must be >= 1");
  if (probs_.size() != y_true_.size() * static_cast<std::size_t>(num_classes_)) {
    throw Error(ErrorCode::kShapeMismatch, "probs must be N x C");
  }
  check_labels(y_true_, num_classes_, "y_true");
  y_pred_.resize(y_true_.size());
  for (std::size_t i = 0; i < y_true_.size(); ++i) {
    auto row = probs_row(i);
    double sum = 0.0;
    for (double v : row) {
      if (!std::isfinite(v) || v < 0.0) throw Error(ErrorCode::kInvalidArgument, "probabilities must be finite and >= 0");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-5) {
      throw Error(ErrorCode::kInvalidArgument, "probability row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
    y_pred_[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
}

double PredictionSet::confidence(std::size_t i) const {
  if (!has_probs()) throw Error(ErrorCode::kMissingProbs, "prediction set has no probabilities");
  auto row = probs_row(i);
  return *std::max_element(row.begin(), row.end());
}

std::vector<std::uint8_t> PredictionSet::correctness() const {
  std::vector<std::uint8_t> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = correct(i) ? 1 : 0;
  return out;
}

PredictionSet PredictionSet::subset(std::span<const std::size_t> indices) const {
  PredictionSet out;
  out.num_classes_ = num_classes_;
  out.y_true_.reserve(indices.size());
  out.y_pred_.reserve(indices.size());
  for (std::size_t i : indices) {
    out.y_true_.push_back(y_true_[i]);
    out.y_pred_.push_back(y_pred_[i]);
    if (has_probs()) {
      auto row = probs_row(i);
      out.probs_.insert(out.probs_.end(), row.begin(), row.end());
    }
  }
  return out;
}

double accuracy(const PredictionSet& p) {
  if (p.size() == 0) throw Error(ErrorCode::kEmptyInput, "metrics need at least one sample");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < p.size(); ++i) hits += p.correct(i);
  return static_cast<double>(hits) / static_cast<double>(p.size());
}

double balanced_accuracy(const PredictionSet& p) {
  auto m = confusion(p);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < m.support.size(); ++c) {
    if (m.support[c] == 0) continue;
    sum += static_cast<double>(m.tp[c]) / static_cast<double>(m.support[c]);
    ++present;
  }
  return sum / static_cast<double>(present);
}

double f1_score(const PredictionSet& p) {
  auto m = confusion(p);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < m.support.size(); ++c) {
    if (m.support[c] == 0) continue;
    double denom = static_cast<double>(2 * m.tp[c] + m.fp[c] + m.fn[c]);
    sum += 2.0 * static_cast<double>(m.tp[c]) / denom;
    ++present;
  }
  return sum / static_cast<double>(present);
}

std::optional<OverlapScore> class_overlap(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth,
                                          int cls) {
  if (pred.size() != truth.size()) throw Error(ErrorCode::kShapeMismatch, "mask shapes differ");
  std::size_t inter = 0, a = 0, b = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    bool in_p = pred[i] == cls;
    bool in_t = truth[i] == cls;
    a += in_p;
    b += in_t;
    inter += in_p && in_t;
  }
  if (a + b == 0) return std::nullopt;
  OverlapScore s;
  s.dice = 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
  s.jaccard = static_cast<double>(inter) / static_cast<double>(a + b - inter);
  return s;
}

OverlapScore dice_jaccard(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth, int num_classes,
                          int background) {
  if (pred.size() != truth.size()) throw Error(ErrorCode::kShapeMismatch, "mask shapes differ");
  OverlapScore total;
  int counted = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (c == background) continue;
    if (auto s = class_overlap(pred, truth, c)) {
      total.dice += s->dice;
      total.jaccard += s->jaccard;
      ++counted;
    }
  }
  if (counted == 0) return {1.0, 1.0};
  total.dice /= counted;
  total.jaccard /= counted;
  return total;
}

SegmentationScore segmentation_score(const SegMaskSet& pred, const SegMaskSet& truth, double background_weight) {
  if (pred.count() != truth.count() || pred.height() != truth.height() || pred.width() != truth.width()) {
    throw Error(ErrorCode::kShapeMismatch, "prediction and truth mask sets differ in shape");
  }
  if (pred.num_classes() != truth.num_classes()) throw Error(ErrorCode::kShapeMismatch, "class counts differ");
  if (pred.ids() != truth.ids()) throw Error(ErrorCode::kMisaligned, "mask sets are not id-aligned");
  SegmentationScore out;
  double wsum = 0.0;
  for (std::size_t i = 0; i < truth.count(); ++i) {
    auto t = truth.mask(i);
    auto s = dice_jaccard(pred.mask(i), t, truth.num_classes(), truth.background());
    bool bg_only = std::all_of(t.begin(), t.end(), [&](std::uint8_t v) { return v == truth.background(); });
    double w = bg_only ? background_weight : 1.0;
    out.per_patch.push_back(s);
    out.weights.push_back(w);
    out.dice += w * s.dice;
    out.jaccard += w * s.jaccard;
    wsum += w;
  }
  if (wsum > 0.0) {
    out.dice /= wsum;
    out.jaccard /= wsum;
  }
  return out;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(ErrorCode::kEmptyInput, "quantile of empty sample");
  double pos = q * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

CiEstimate bootstrap_ci(std::size_t n, const ResampleStatistic& statistic, const BootstrapOptions& opts) {
  if (n == 0) throw Error(ErrorCode::kEmptyInput, "bootstrap needs at least one sample");
  if (opts.resamples < 1) throw Error(ErrorCode::kInvalidArgument, "resamples must be >= 1");
  if (!(opts.level > 0.0 && opts.level < 1.0)) throw Error(ErrorCode::kInvalidArgument, "level must be in (0, 1)");
  std::vector<std::size_t> identity(n);
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  CiEstimate ci;
  ci.point = statistic(identity);
  ci.resamples = opts.resamples;
  ci.level = opts.level;

  std::vector<double> stats(static_cast<std::size_t>(opts.resamples));
  parallel_for(stats.size(), opts.threads, [&](std::size_t r) {
    CounterRng rng(derive_key(opts.seed, r));
    std::vector<std::size_t> idx(n);
    for (auto& v : idx) v = static_cast<std::size_t>(rng.below(n));
    stats[r] = statistic(idx);
  });
  std::sort(stats.begin(), stats.end());
  double alpha = (1.0 - opts.level) / 2.0;
  ci.lo = quantile_sorted(stats, alpha);
  ci.hi = quantile_sorted(stats, 1.0 - alpha);
  return ci;
}

CiEstimate bootstrap_mean_ci(std::span<const double> values, const BootstrapOptions& opts) {
  return bootstrap_ci(
      values.size(),
      [values](std::span<const std::size_t> idx) {
        double s = 0.0;
        for (std::size_t i : idx) s += values[i];
        return s / static_cast<double>(idx.size());
      },
      opts);
}

}  // namespace embench
