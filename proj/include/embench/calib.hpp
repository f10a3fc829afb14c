#pragma once

#include <string>
#include <vector>

#include "embench/metrics.hpp"

namespace embench {

enum class BinScheme { kEqualWidth, kEqualMass };

struct BinningSpec {
  BinScheme scheme = BinScheme::kEqualWidth;
  int num_bins = 15;
  // TACE keeps samples with confidence >= threshold.
  double threshold = 0.01;

  void validate() const;
};

struct ReliabilityBin {
  double lo = 0.0;  // confidence range covered (equal-mass: observed min/max)
  double hi = 0.0;
  double conf_mean = 0.0;
  double acc_mean = 0.0;
  std::size_t count = 0;
};

struct ReliabilityDiagram {
  BinScheme scheme = BinScheme::kEqualWidth;
  std::vector<ReliabilityBin> bins;

  std::size_t total() const;
  std::string to_json() const;
};

// Equal-width bins are [b/B, (b+1)/B) with the last bin closed. Equal-mass
// bins split the confidence-sorted samples into B runs whose sizes differ by
// at most one.
ReliabilityDiagram bin_stats(const PredictionSet& p, const BinningSpec& spec);

// Lower-level entry points on raw (confidence, correct) pairs.
ReliabilityDiagram bin_stats(std::span<const double> confidence, std::span<const std::uint8_t> correct,
                             BinScheme scheme, int num_bins);

double ece(const PredictionSet& p, const BinningSpec& spec = {});
double mce(const PredictionSet& p, const BinningSpec& spec = {});
double sce(const PredictionSet& p, const BinningSpec& spec = {});
double ace(const PredictionSet& p, const BinningSpec& spec = {});
double tace(const PredictionSet& p, const BinningSpec& spec = {});

struct CalibrationSummary {
  double ece = 0.0, mce = 0.0, sce = 0.0, ace = 0.0, tace = 0.0;
};

// All five metrics; ECE/MCE/SCE use equal-width bins, ACE/TACE equal-mass,
// each with spec.num_bins bins.
CalibrationSummary calibration_summary(const PredictionSet& p, const BinningSpec& spec = {});

}  // namespace embench
