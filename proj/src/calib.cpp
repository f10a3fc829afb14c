#include "embench/calib.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace embench {

namespace {

struct Samples {
  std::vector<double> conf;
  std::vector<std::uint8_t> correct;
};

Samples extract(const PredictionSet& p) {
  if (!p.has_probs()) throw Error(ErrorCode::kMissingProbs, "calibration needs per-class probabilities");
  if (p.size() == 0) throw Error(ErrorCode::kEmptyInput, "calibration needs at least one sample");
  Samples s;
  s.conf.resize(p.size());
  s.correct.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    s.conf[i] = p.confidence(i);
    s.correct[i] = p.correct(i) ? 1 : 0;
  }
  return s;
}

std::size_t equal_width_bin(double conf, int num_bins) {
  const double b = static_cast<double>(num_bins);
  auto idx = static_cast<long>(std::floor(conf * b));
  idx = std::clamp(idx, 0L, static_cast<long>(num_bins - 1));
  // settle against the exact edge values b/B so membership is lo <= p < hi
  while (idx > 0 && conf < static_cast<double>(idx) / b) --idx;
  while (idx < num_bins - 1 && conf >= static_cast<double>(idx + 1) / b) ++idx;
  return static_cast<std::size_t>(idx);
}

double gap(const ReliabilityBin& bin) { return std::abs(bin.acc_mean - bin.conf_mean); }

double weighted_gap(const ReliabilityDiagram& d) {
  std::size_t n = d.total();
  double s = 0.0;
  for (const auto& bin : d.bins) s += static_cast<double>(bin.count) / static_cast<double>(n) * gap(bin);
  return s;
}

double max_gap(const ReliabilityDiagram& d) {
  double m = 0.0;
  for (const auto& bin : d.bins)
    if (bin.count > 0) m = std::max(m, gap(bin));
  return m;
}

double mean_gap(const ReliabilityDiagram& d) {
  double s = 0.0;
  std::size_t used = 0;
  for (const auto& bin : d.bins) {
    if (bin.count == 0) continue;
    s += gap(bin);
    ++used;
  }
  return used ? s / static_cast<double>(used) : 0.0;
}

}  // namespace

void BinningSpec::validate() const {
  if (num_bins < 1) throw Error(ErrorCode::kInvalidArgument, "num_bins must be >= 1");
  if (!(threshold >= 0.0 && threshold < 1.0)) throw Error(ErrorCode::kInvalidArgument, "threshold must be in [0, 1)");
}

std::size_t ReliabilityDiagram::total() const {
  std::size_t n = 0;
  for (const auto& b : bins) n += b.count;
  return n;
}

std::string ReliabilityDiagram::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t b = 0; b < bins.size(); ++b) {
    const auto& bin = bins[b];
    arr.push_back({{"bin", b},
                   {"lo", bin.lo},
                   {"hi", bin.hi},
                   {"conf_mean", bin.conf_mean},
                   {"acc_mean", bin.acc_mean},
                   {"count", bin.count}});
  }
  return arr.dump();
}

ReliabilityDiagram bin_stats(std::span<const double> confidence, std::span<const std::uint8_t> correct,
                             BinScheme scheme, int num_bins) {
  if (num_bins < 1) throw Error(ErrorCode::kInvalidArgument, "num_bins must be >= 1");
  if (confidence.size() != correct.size()) throw Error(ErrorCode::kShapeMismatch, "confidence/correct mismatch");
  const std::size_t n = confidence.size();
  ReliabilityDiagram d;
  d.scheme = scheme;
  d.bins.resize(static_cast<std::size_t>(num_bins));

  std::vector<double> conf_sum(d.bins.size(), 0.0);
  std::vector<double> acc_sum(d.bins.size(), 0.0);

  if (scheme == BinScheme::kEqualWidth) {
    for (std::size_t b = 0; b < d.bins.size(); ++b) {
      d.bins[b].lo = static_cast<double>(b) / num_bins;
      d.bins[b].hi = static_cast<double>(b + 1) / num_bins;
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto b = equal_width_bin(confidence[i], num_bins);
      conf_sum[b] += confidence[i];
      acc_sum[b] += correct[i];
      ++d.bins[b].count;
    }
  } else {
    // sort by (confidence, correctness) so bin contents depend only on the multiset
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (confidence[a] != confidence[b]) return confidence[a] < confidence[b];
      return correct[a] < correct[b];
    });
    const std::size_t base = n / d.bins.size();
    const std::size_t extra = n % d.bins.size();
    std::size_t pos = 0;
    for (std::size_t b = 0; b < d.bins.size(); ++b) {
      std::size_t size = base + (b < extra ? 1 : 0);
      d.bins[b].count = size;
      for (std::size_t j = 0; j < size; ++j, ++pos) {
        std::size_t i = order[pos];
        conf_sum[b] += confidence[i];
        acc_sum[b] += correct[i];
        if (j == 0) d.bins[b].lo = confidence[i];
        d.bins[b].hi = confidence[i];
      }
    }
  }
  for (std::size_t b = 0; b < d.bins.size(); ++b) {
    if (d.bins[b].count == 0) continue;
    d.bins[b].conf_mean = conf_sum[b] / static_cast<double>(d.bins[b].count);
    d.bins[b].acc_mean = acc_sum[b] / static_cast<double>(d.bins[b].count);
  }
  return d;
}

ReliabilityDiagram bin_stats(const PredictionSet& p, const BinningSpec& spec) {
  spec.validate();
  auto s = extract(p);
  return bin_stats(s.conf, s.correct, spec.scheme, spec.num_bins);
}

double ece(const PredictionSet& p, const BinningSpec& spec) {
  spec.validate();
  auto s = extract(p);
  return weighted_gap(bin_stats(s.conf, s.correct, BinScheme::kEqualWidth, spec.num_bins));
}

double mce(const PredictionSet& p, const BinningSpec& spec) {
  spec.validate();
  auto s = extract(p);
  return max_gap(bin_stats(s.conf, s.correct, BinScheme::kEqualWidth, spec.num_bins));
}

double sce(const PredictionSet& p, const BinningSpec& spec) {
  spec.validate();
  auto s = extract(p);
  return mean_gap(bin_stats(s.conf, s.correct, BinScheme::kEqualWidth, spec.num_bins));
}

double ace(const PredictionSet& p, const BinningSpec& spec) {
  spec.validate();
  auto s = extract(p);
  return mean_gap(bin_stats(s.conf, s.correct, BinScheme::kEqualMass, spec.num_bins));
}

double tace(const PredictionSet& p, const BinningSpec& spec) {
  spec.validate();
  auto s = extract(p);
  Samples kept;
  for (std::size_t i = 0; i < s.conf.size(); ++i) {
    if (s.conf[i] >= spec.threshold) {
      kept.conf.push_back(s.conf[i]);
      kept.correct.push_back(s.correct[i]);
    }
  }
  if (kept.conf.empty()) return 0.0;
  return mean_gap(bin_stats(kept.conf, kept.correct, BinScheme::kEqualMass, spec.num_bins));
}

CalibrationSummary calibration_summary(const PredictionSet& p, const BinningSpec& spec) {
  return {ece(p, spec), mce(p, spec), sce(p, spec), ace(p, spec), tace(p, spec)};
}

}  // namespace embench
