#include "embench/statagg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace embench {

namespace {

// pmf of Binomial(n, 0.5) by exact recurrence; 0.5^n stays normal up to n=1022.
std::vector<double> half_pmf(std::size_t n) {
  std::vector<double> pmf(n + 1);
  pmf[0] = std::ldexp(1.0, -static_cast<int>(n));
  for (std::size_t k = 0; k < n; ++k) {
    pmf[k + 1] = pmf[k] * static_cast<double>(n - k) / static_cast<double>(k + 1);
  }
  return pmf;
}

double log_pmf(std::size_t k, std::size_t n, double p) {
  const double kk = static_cast<double>(k), nn = static_cast<double>(n);
  double lp = std::lgamma(nn + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(nn - kk + 1.0);
  if (k > 0) lp += kk * std::log(p);
  if (k < n) lp += (nn - kk) * std::log1p(-p);
  return lp;
}

double round_to(double v, int decimals) {
  if (decimals < 0) return v;
  double scale = std::pow(10.0, decimals);
  return std::round(v * scale) / scale;
}

}  // namespace

double binomial_test_two_sided(std::size_t successes, std::size_t trials, double p0) {
  if (successes > trials) throw Error(ErrorCode::kInvalidArgument, "successes exceed trials");
  if (!(p0 >= 0.0 && p0 <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "p0 must be in [0, 1]");
  if (trials == 0) return 1.0;
  if (p0 == 0.0) return successes == 0 ? 1.0 : 0.0;
  if (p0 == 1.0) return successes == trials ? 1.0 : 0.0;

  if (p0 == 0.5 && trials <= 1000) {
    // symmetric case: 2 * smaller tail, computed exactly for small n
    auto pmf = half_pmf(trials);
    std::size_t lo = std::min(successes, trials - successes);
    if (2 * lo == trials) return 1.0;
    double tail = 0.0;
    for (std::size_t k = 0; k <= lo; ++k) tail += pmf[k];
    return std::min(1.0, 2.0 * tail);
  }

  // minlike with relative tolerance, as in common statistics packages
  const double observed = log_pmf(successes, trials, p0);
  const double cutoff = observed + std::log1p(1e-7);
  double max_lp = -std::numeric_limits<double>::infinity();
  std::vector<double> kept;
  for (std::size_t k = 0; k <= trials; ++k) {
    double lp = log_pmf(k, trials, p0);
    if (lp <= cutoff) {
      kept.push_back(lp);
      max_lp = std::max(max_lp, lp);
    }
  }
  if (kept.empty()) return 0.0;
  double s = 0.0;
  for (double lp : kept) s += std::exp(lp - max_lp);
  return std::min(1.0, std::exp(max_lp) * s);
}

PairwiseTest binomial_pairwise(std::span<const std::uint8_t> correct_a, std::span<const std::uint8_t> correct_b,
                               PairwiseMethod method) {
  if (correct_a.size() != correct_b.size()) {
    throw Error(ErrorCode::kMisaligned, "per-sample accuracy vectors differ in length");
  }
  PairwiseTest t;
  std::size_t hits_a = 0, hits_b = 0;
  for (std::size_t i = 0; i < correct_a.size(); ++i) {
    bool a = correct_a[i] != 0, b = correct_b[i] != 0;
    hits_a += a;
    hits_b += b;
    if (a != b) {
      ++t.n_discordant;
      if (a) ++t.n_a_wins;
    }
  }
  const double n = static_cast<double>(correct_a.size());
  if (!correct_a.empty()) t.accuracy_delta = (static_cast<double>(hits_a) - static_cast<double>(hits_b)) / n;
  if (method == PairwiseMethod::kDiscordantSign) {
    t.p_value = binomial_test_two_sided(t.n_a_wins, t.n_discordant, 0.5);
  } else {
    t.p_value = correct_a.empty() ? 1.0 : binomial_test_two_sided(hits_a, correct_a.size(), static_cast<double>(hits_b) / n);
  }
  t.adjusted_p = t.p_value;
  return t;
}

BhResult benjamini_hochberg(std::span<const double> p_values, double q) {
  const std::size_t m = p_values.size();
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "p-value outside [0, 1]");
  }
  BhResult out{std::vector<double>(m), std::vector<bool>(m, false)};
  if (m == 0) return out;
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    double v = static_cast<double>(m) * p_values[order[r]] / static_cast<double>(r + 1);
    running = std::min(running, v);
    out.adjusted[order[r]] = std::min(1.0, running);
  }
  for (std::size_t i = 0; i < m; ++i) out.rejected[i] = out.adjusted[i] <= q;
  return out;
}

std::vector<PairwiseTest> pairwise_significance(const std::string& dataset, const CorrectnessByModel& correctness,
                                                double q, PairwiseMethod method) {
  std::vector<PairwiseTest> tests;
  for (auto i = correctness.begin(); i != correctness.end(); ++i) {
    for (auto j = std::next(i); j != correctness.end(); ++j) {
      auto t = binomial_pairwise(i->second, j->second, method);
      t.model_a = i->first;
      t.model_b = j->first;
      t.dataset = dataset;
      tests.push_back(std::move(t));
    }
  }
  std::vector<double> p(tests.size());
  for (std::size_t i = 0; i < tests.size(); ++i) p[i] = tests[i].p_value;
  auto bh = benjamini_hochberg(p, q);
  for (std::size_t i = 0; i < tests.size(); ++i) {
    tests[i].adjusted_p = bh.adjusted[i];
    tests[i].significant = bh.rejected[i];
  }
  return tests;
}

SignificanceHeatmap significance_heatmap(const std::vector<std::string>& models,
                                         const std::vector<std::vector<PairwiseTest>>& per_dataset_tests) {
  SignificanceHeatmap h;
  h.models = models;
  const std::size_t m = models.size();
  h.cell.assign(m, std::vector<double>(m, 0.0));
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < m; ++i) pos[models[i]] = i;
  std::vector<std::vector<std::size_t>> wins(m, std::vector<std::size_t>(m, 0));
  std::vector<std::vector<std::size_t>> seen(m, std::vector<std::size_t>(m, 0));
  for (const auto& tests : per_dataset_tests) {
    for (const auto& t : tests) {
      auto ia = pos.find(t.model_a), ib = pos.find(t.model_b);
      if (ia == pos.end() || ib == pos.end()) continue;
      std::size_t a = ia->second, b = ib->second;
      ++seen[a][b];
      ++seen[b][a];
      if (!t.significant) continue;
      if (t.accuracy_delta > 0) {
        ++wins[a][b];
      } else if (t.accuracy_delta < 0) {
        ++wins[b][a];
      }
    }
  }
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b)
      if (seen[a][b]) h.cell[a][b] = static_cast<double>(wins[a][b]) / static_cast<double>(seen[a][b]);
  return h;
}

std::string SignificanceHeatmap::to_csv() const {
  std::ostringstream out;
  out.precision(6);
  out << "model";
  for (const auto& m : models) out << ',' << m;
  out << '\n';
  for (std::size_t r = 0; r < models.size(); ++r) {
    out << models[r];
    for (double v : cell[r]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

DatasetStrata strata_of(const DatasetManifest& m) { return {m.class_band, m.magnification, m.organ}; }

const std::vector<std::string>& stratum_keys() {
  static const std::vector<std::string> keys{
      "all",           "class:binary",  "class:multiclass", "magnification:>=40x", "magnification:20-40x",
      "magnification:<20x", "organ:breast", "organ:crc",     "organ:multi",         "organ:other"};
  return keys;
}

StratifiedMeans stratified_mean(const std::map<std::string, double>& per_dataset,
                                const std::map<std::string, DatasetStrata>& strata) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& key : stratum_keys()) acc[key] = {0.0, 0};
  for (const auto& [dataset, score] : per_dataset) {
    auto it = strata.find(dataset);
    if (it == strata.end()) throw Error(ErrorCode::kInvalidArgument, "no strata for dataset '" + dataset + "'");
    const auto& s = it->second;
    for (const std::string& key : {std::string("all"), std::string("class:") + to_string(s.class_band),
                                   std::string("magnification:") + to_string(s.magnification),
                                   std::string("organ:") + to_string(s.organ)}) {
      acc[key].first += score;
      ++acc[key].second;
    }
  }
  StratifiedMeans out;
  for (const auto& key : stratum_keys()) {
    auto [sum, n] = acc[key];
    if (n == 0) {
      out.warnings.push_back("stratum '" + key + "' has no datasets; omitted");
      continue;
    }
    out.means[key] = sum / static_cast<double>(n);
  }
  return out;
}

std::vector<int> rank_values(std::span<const double> values, Direction direction, TieMethod ties, int tie_decimals) {
  const std::size_t n = values.size();
  std::vector<double> key(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = round_to(values[i], tie_decimals);
    key[i] = direction == Direction::kHigherIsBetter ? -v : v;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  std::vector<int> rank(n);
  int current = 0;
  for (std::size_t pos = 0; pos < n; ++pos) {
    if (pos == 0 || key[order[pos]] != key[order[pos - 1]]) {
      current = ties == TieMethod::kDense ? current + 1 : static_cast<int>(pos) + 1;
    }
    rank[order[pos]] = current;
  }
  return rank;
}

RankTable rank_sum(const std::vector<std::string>& tasks, const std::vector<std::string>& models,
                   const std::vector<std::vector<std::optional<double>>>& scores,
                   const std::vector<Direction>& directions, const RankOptions& opts) {
  if (scores.size() != tasks.size() || directions.size() != tasks.size()) {
    throw Error(ErrorCode::kShapeMismatch, "scores/directions must have one row per task");
  }
  if (models.empty()) throw Error(ErrorCode::kEmptyInput, "no models to rank");
  RankTable t;
  t.tasks = tasks;
  t.models = models;
  t.rank_sum.assign(models.size(), 0);
  for (std::size_t r = 0; r < tasks.size(); ++r) {
    if (scores[r].size() != models.size()) throw Error(ErrorCode::kShapeMismatch, "task row has wrong width");
    std::vector<double> row(models.size());
    for (std::size_t m = 0; m < models.size(); ++m) {
      if (!scores[r][m]) {
        throw Error(ErrorCode::kInvalidArgument, "missing score for task '" + tasks[r] + "', model '" + models[m] + "'");
      }
      row[m] = *scores[r][m];
    }
    auto ranks = rank_values(row, directions[r], opts.task_ties, opts.tie_decimals);
    for (std::size_t m = 0; m < models.size(); ++m) t.rank_sum[m] += ranks[m];
    t.scores.push_back(std::move(row));
    t.ranks.push_back(std::move(ranks));
  }
  std::vector<double> sums(t.rank_sum.begin(), t.rank_sum.end());
  t.final_rank = rank_values(sums, Direction::kLowerIsBetter, opts.final_ties, -1);
  return t;
}

std::string RankTable::to_csv() const {
  std::ostringstream out;
  out << "task";
  for (const auto& m : models) out << ',' << m;
  out << '\n';
  for (std::size_t r = 0; r < tasks.size(); ++r) {
    out << tasks[r] << ":score";
    for (double v : scores[r]) out << ',' << v;
    out << '\n' << tasks[r] << ":rank";
    for (int v : ranks[r]) out << ',' << v;
    out << '\n';
  }
  out << "rank_sum";
  for (int v : rank_sum) out << ',' << v;
  out << "\nfinal_rank";
  for (int v : final_rank) out << ',' << v;
  out << '\n';
  return out.str();
}

}  // namespace embench
