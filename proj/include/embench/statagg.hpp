#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embench/embedstore.hpp"

namespace embench {

// Exact two-sided binomial test of `successes` out of `trials` under p0
// ("minlike": sum of outcome probabilities not exceeding the observed one).
double binomial_test_two_sided(std::size_t successes, std::size_t trials, double p0 = 0.5);

enum class PairwiseMethod {
  // sign test on samples where exactly one model is correct
  kDiscordantSign,
  // one-sample test of model a's hit count against model b's accuracy
  kOneSampleAccuracy,
};

struct PairwiseTest {
  std::string model_a, model_b, dataset;
  std::size_t n_discordant = 0;
  std::size_t n_a_wins = 0;
  double p_value = 1.0;
  double adjusted_p = 1.0;
  bool significant = false;
  // a's per-sample accuracy minus b's
  double accuracy_delta = 0.0;
};

PairwiseTest binomial_pairwise(std::span<const std::uint8_t> correct_a, std::span<const std::uint8_t> correct_b,
                               PairwiseMethod method = PairwiseMethod::kDiscordantSign);

struct BhResult {
  std::vector<double> adjusted;
  std::vector<bool> rejected;
};

BhResult benjamini_hochberg(std::span<const double> p_values, double q = 0.05);

// Per-sample correctness per model on one dataset (vectors must be aligned).
using CorrectnessByModel = std::map<std::string, std::vector<std::uint8_t>>;

// All unordered model pairs on one dataset, BH-corrected as one family.
std::vector<PairwiseTest> pairwise_significance(const std::string& dataset, const CorrectnessByModel& correctness,
                                                double q = 0.05,
                                                PairwiseMethod method = PairwiseMethod::kDiscordantSign);

struct SignificanceHeatmap {
  std::vector<std::string> models;
  // cell[r][c]: fraction of datasets where models[r] significantly beats models[c]
  std::vector<std::vector<double>> cell;

  std::string to_csv() const;
};

SignificanceHeatmap significance_heatmap(const std::vector<std::string>& models,
                                         const std::vector<std::vector<PairwiseTest>>& per_dataset_tests);

struct DatasetStrata {
  ClassBand class_band = ClassBand::kMulticlass;
  MagnificationBand magnification = MagnificationBand::k20To40x;
  OrganGroup organ = OrganGroup::kOther;
};

DatasetStrata strata_of(const DatasetManifest& manifest);

struct StratifiedMeans {
  // keys: "all", "class:binary", "magnification:>=40x", "organ:crc", ...
  std::map<std::string, double> means;
  std::vector<std::string> warnings;
};

// Canonical stratum keys in table order.
const std::vector<std::string>& stratum_keys();

StratifiedMeans stratified_mean(const std::map<std::string, double>& per_dataset,
                                const std::map<std::string, DatasetStrata>& strata);

enum class Direction { kHigherIsBetter, kLowerIsBetter };

enum class TieMethod {
  // tied entries share a rank, next distinct value gets rank + 1
  kDense,
  // tied entries share the minimum rank, next distinct value skips ahead
  kCompetition,
};

struct RankOptions {
  // scores are compared after rounding to this many decimals; negative = exact
  int tie_decimals = 1;
  TieMethod task_ties = TieMethod::kDense;
  TieMethod final_ties = TieMethod::kDense;
};

struct RankTable {
  std::vector<std::string> tasks;
  std::vector<std::string> models;
  std::vector<std::vector<double>> scores;  // [task][model]
  std::vector<std::vector<int>> ranks;      // [task][model]
  std::vector<int> rank_sum;                // [model]
  std::vector<int> final_rank;              // [model]

  std::string to_csv() const;
};

// Ranks `values` (1 = best) according to direction and tie handling.
std::vector<int> rank_values(std::span<const double> values, Direction direction, TieMethod ties,
                             int tie_decimals = -1);

RankTable rank_sum(const std::vector<std::string>& tasks, const std::vector<std::string>& models,
                   const std::vector<std::vector<std::optional<double>>>& scores,
                   const std::vector<Direction>& directions, const RankOptions& opts = {});

}  // namespace embench
