// Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero
// when any criterion fails or overruns its time budget.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "embench/augment.hpp"
#include "embench/calib.hpp"
#include "embench/featurespace.hpp"
#include "embench/fixtures.hpp"
#include "embench/metrics.hpp"
#include "embench/probes.hpp"
#include "embench/robustness.hpp"
#include "embench/runner.hpp"
#include "embench/statagg.hpp"
#include "embench/trainers.hpp"

using namespace embench;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

// Collects failures with the first few messages kept for the report line.
class Checker {
 public:
  void check(bool ok, const std::string& what) {
    ++count_;
    if (ok) return;
    ++failed_;
    if (first_.size() < 3) first_.push_back(what);
  }
  std::size_t count() const { return count_; }
  Verdict verdict(std::string detail) const {
    if (failed_ == 0) return {true, std::move(detail)};
    std::string msg = std::to_string(failed_) + "/" + std::to_string(count_) + " checks failed";
    for (const auto& f : first_) msg += "; " + f;
    return {false, msg};
  }

 private:
  std::size_t count_ = 0, failed_ = 0;
  std::vector<std::string> first_;
};

std::string fmt(double v, int prec = 6) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

// Ids whose lexical order differs from their index order.
std::vector<std::string> shuffled_ids(CounterRng& rng, std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<std::string> ids;
  for (auto p : perm) ids.push_back("s" + std::to_string(10000 + p));
  return ids;
}

// Coarse values so exact similarity ties and duplicate rows occur.
EmbeddingSet coarse_set(CounterRng& rng, std::size_t n, std::size_t d, const std::vector<std::string>& ids) {
  std::vector<float> data(n * d);
  for (auto& v : data) v = static_cast<float>(std::round(rng.normal() * 2.0) / 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    bool zero = true;
    for (std::size_t j = 0; j < d; ++j) zero = zero && data[i * d + j] == 0.0f;
    if (zero) data[i * d] = 1.0f;
  }
  if (n > 2 && rng.below(2) == 0) {
    std::copy_n(data.begin(), d, data.begin() + static_cast<std::ptrdiff_t>(d));  // duplicate row
  }
  return EmbeddingSet(ids, d, std::move(data));
}

std::vector<std::vector<double>> rows_of(const EmbeddingSet& s) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < s.count(); ++i) out.emplace_back(s.row(i).begin(), s.row(i).end());
  return out;
}

// Exhaustive ranking by inner product of (already normalized) rows, ties by id.
std::vector<std::size_t> exhaustive_order(const EmbeddingSet& base, std::span<const float> q) {
  std::vector<double> sim(base.count());
  for (std::size_t i = 0; i < base.count(); ++i) {
    double s = 0.0;
    auto r = base.row(i);
    for (std::size_t j = 0; j < q.size(); ++j) s += static_cast<double>(q[j]) * static_cast<double>(r[j]);
    sim[i] = s;
  }
  std::vector<std::size_t> order(base.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sim[a] != sim[b]) return sim[a] > sim[b];
    return base.ids()[a] < base.ids()[b];
  });
  return order;
}

// ---- criteria --------------------------------------------------------------------------

const std::vector<std::string> kModels{"hiboub", "hiboul", "hopt0",  "hopt1",  "midnight", "phikon",
                                       "phikon2", "uni",    "uni2h",  "virchow", "virchow2", "conch",
                                       "titan",  "keep",   "musk",   "plip",   "quilt",    "dinob",
                                       "dinol",  "vitb",   "vitl",   "clipb",  "clipl"};

Verdict aggregation() {
  const std::vector<double> f1{85.3, 56.1, 79.4, 91.0, 95.0, 83.2, 70.8, 93.4, 64.1, 89.1, 75.1, 98.0};
  std::map<std::string, double> scores;
  std::map<std::string, DatasetStrata> strata;
  for (std::size_t i = 0; i < f1.size(); ++i) {
    scores["dataset" + std::to_string(i)] = f1[i];
    strata["dataset" + std::to_string(i)] = DatasetStrata{};
  }
  const double all = stratified_mean(scores, strata).means.at("all");
  return {std::abs(all - 81.7) <= 0.05, "all = " + fmt(all) + " (published 81.7, tolerance 0.05)"};
}

Verdict rank_sum_consistency() {
  const std::vector<std::string> tasks{"knn", "linprobe", "fewshot", "seg", "calib", "attack"};
  const std::vector<std::vector<double>> scores{
      {75.8, 75.2, 79.2, 80.5, 78.2, 72.8, 70.1, 78.8, 81.7, 74.2, 81.2, 77.3,
       78.6, 79.7, 75.6, 67.8, 68.3, 67.9, 69.6, 64.4, 67.5, 61.9, 64.2},
      {78.0, 81.2, 81.4, 83.3, 82.9, 78.4, 76.5, 81.3, 83.9, 80.2, 82.7, 80.2,
       80.8, 81.1, 79.0, 71.0, 71.0, 74.8, 75.3, 71.9, 72.8, 65.8, 71.3},
      {74.2, 70.4, 73.4, 74.8, 70.6, 72.2, 70.1, 76.4, 78.4, 68.5, 72.6, 73.1,
       74.6, 75.8, 70.0, 63.4, 65.7, 61.0, 59.2, 57.8, 56.5, 53.3, 58.2},
      {61.6, 62.2, 59.0, 58.4, 62.9, 61.7, 62.0, 62.2, 62.8, 62.7, 63.4, 62.6,
       62.8, 61.3, 59.7, 54.0, 54.3, 54.7, 54.4, 55.5, 57.9, 51.9, 55.9},
      {3.7, 5.5, 4.7, 4.1, 3.2, 6.4, 4.6, 4.3, 4.5, 5.5, 4.6, 4.3, 4.9, 4.7, 4.5, 4.9, 7.0, 5.5, 5.3, 3.9, 5.0, 5.5, 4.2},
      {52.8, 40.0, 44.2, 58.0, 36.3, 34.4, 45.6, 42.8, 34.3, 41.0, 33.6, 55.0,
       75.3, 44.7, 69.3, 56.9, 52.7, 65.8, 64.5, 46.8, 44.1, 60.4, 67.8}};
  const std::vector<std::vector<int>> ranks{
      {10, 12, 5, 3, 8, 14, 15, 6, 1, 13, 2, 9, 7, 4, 11, 19, 17, 18, 16, 21, 20, 23, 22},
      {14, 7, 5, 2, 3, 13, 15, 6, 1, 10, 4, 11, 9, 8, 12, 22, 21, 17, 16, 19, 18, 23, 20},
      {6, 12, 7, 4, 11, 10, 13, 2, 1, 15, 9, 8, 5, 3, 14, 17, 16, 18, 19, 21, 22, 23, 20},
      {11, 8, 14, 15, 2, 10, 9, 7, 4, 5, 1, 6, 3, 12, 13, 22, 21, 19, 20, 18, 16, 23, 17},
      {2, 18, 13, 4, 1, 22, 11, 7, 8, 20, 10, 6, 14, 12, 9, 15, 23, 21, 17, 3, 16, 19, 5},
      {14, 5, 9, 17, 4, 3, 11, 7, 2, 6, 1, 15, 23, 10, 22, 16, 13, 20, 19, 12, 8, 18, 21}};
  const std::vector<int> published_sum{57, 62, 53, 45, 29, 72, 74, 35, 17, 69, 27, 55,
                                       61, 49, 81, 111, 111, 113, 107, 94, 100, 129, 105};
  const std::vector<int> published_final{9, 11, 7, 5, 3, 13, 14, 4, 1, 12, 2, 8, 10, 6, 15, 20, 20, 21, 19, 16, 17, 22, 18};
  const std::size_t uni2h = 8, virchow2 = 10;

  // (a) the published per-task ranks, fed as lower-is-better scores, must
  // reproduce every rank sum and the final ordering under the tie rule
  std::vector<std::vector<std::optional<double>>> rank_rows;
  for (const auto& row : ranks) rank_rows.emplace_back(row.begin(), row.end());
  auto from_ranks = rank_sum(tasks, kModels, rank_rows, std::vector<Direction>(6, Direction::kLowerIsBetter));
  Checker c;
  c.check(from_ranks.rank_sum == published_sum, "rank sums from the published task ranks differ");
  c.check(from_ranks.final_rank == published_final, "final ranks from the published task ranks differ");

  // (b) the raw score rows, ranked by the engine (dense ties at one decimal)
  std::vector<std::vector<std::optional<double>>> score_rows;
  for (const auto& row : scores) score_rows.emplace_back(row.begin(), row.end());
  std::vector<Direction> dirs(4, Direction::kHigherIsBetter);
  dirs.insert(dirs.end(), 2, Direction::kLowerIsBetter);
  auto from_scores = rank_sum(tasks, kModels, score_rows, dirs);
  c.check(from_scores.final_rank[uni2h] == 1, "uni2h is not ranked first from scores");
  c.check(from_scores.final_rank[virchow2] == 2, "virchow2 is not ranked second from scores");
  return c.verdict("uni2h sum " + std::to_string(from_ranks.rank_sum[uni2h]) + " final " +
                   std::to_string(from_ranks.final_rank[uni2h]) + ", virchow2 final " +
                   std::to_string(from_ranks.final_rank[virchow2]) + "; from raw scores uni2h sum " +
                   std::to_string(from_scores.rank_sum[uni2h]) + " final " +
                   std::to_string(from_scores.final_rank[uni2h]) + ", virchow2 final " +
                   std::to_string(from_scores.final_rank[virchow2]));
}

Verdict calibration_oracle() {
  Checker c;
  double worst = 0.0;
  for (std::uint64_t inst = 0; inst < 1000; ++inst) {
    CounterRng rng(derive_key(101, inst));
    const std::size_t n = 1 + rng.below(64);
    const int classes = 2 + static_cast<int>(rng.below(4));
    const int bins = 1 + static_cast<int>(rng.below(20));
    const double threshold = rng.uniform(0.0, 0.6);
    const bool coarse = rng.below(3) == 0;
    std::vector<int> y(n);
    std::vector<double> probs(n * static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
      double total = 0.0;
      for (int k = 0; k < classes; ++k) {
        double v = std::exp(2.0 * rng.normal());
        if (coarse) v = std::round(v * 2.0) / 2.0 + 0.5;  // ties and bin-edge confidences
        probs[i * classes + k] = v;
        total += v;
      }
      for (int k = 0; k < classes; ++k) probs[i * classes + k] /= total;
    }
    PredictionSet p(y, probs, classes);
    BinningSpec spec;
    spec.num_bins = bins;
    spec.threshold = threshold;
    auto got = calibration_summary(p, spec);
    auto want = oracle::calibration(y, probs, classes, bins, threshold);
    const double errs[] = {std::abs(got.ece - want.ece), std::abs(got.mce - want.mce), std::abs(got.sce - want.sce),
                           std::abs(got.ace - want.ace), std::abs(got.tace - want.tace)};
    for (double e : errs) {
      worst = std::max(worst, e);
      c.check(e <= 1e-12, "instance " + std::to_string(inst) + " differs by " + fmt(e));
    }
  }
  return c.verdict("1000 sets, max |diff| " + fmt(worst));
}

Verdict knn_retrieval_oracle() {
  Checker c;
  for (std::uint64_t inst = 0; inst < 500; ++inst) {
    CounterRng rng(derive_key(202, inst));
    const std::size_t n = 1 + rng.below(200), d = 1 + rng.below(16), nq = 1 + rng.below(20);
    const int classes = 1 + static_cast<int>(rng.below(5));
    auto train_ids = shuffled_ids(rng, n);
    std::vector<std::string> query_ids;
    for (std::size_t i = 0; i < nq; ++i) query_ids.push_back("q" + std::to_string(i));
    auto train = l2_normalize(coarse_set(rng, n, d, train_ids));
    auto queries = l2_normalize(coarse_set(rng, nq, d, query_ids));
    std::vector<int> ty(n), qy(nq);
    for (auto& v : ty) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    for (auto& v : qy) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    LabeledEmbeddings tr{train, ty, classes}, qs{queries, qy, classes};

    const std::size_t k = 1 + rng.below(n);
    const std::size_t threads = 1 + rng.below(3);
    auto pred = knn_classify(tr, qs, k, threads);
    std::vector<std::size_t> ks{1};
    if (n >= 3) ks.push_back(3);
    if (n >= 5) ks.push_back(1 + rng.below(n));
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    const std::size_t depth = std::max(ks.back(), static_cast<std::size_t>(1 + rng.below(n)));
    auto ret = retrieve_topk(tr, qs, ks, depth, threads);

    for (std::size_t q = 0; q < nq; ++q) {
      auto order = exhaustive_order(train, queries.row(q));
      c.check(pred.y_pred()[q] == oracle::majority(order, k, ty, classes),
              "knn prediction differs at instance " + std::to_string(inst));
      bool same = ret.ranked_ids[q].size() == depth;
      for (std::size_t j = 0; same && j < depth; ++j) same = ret.ranked_ids[q][j] == train_ids[order[j]];
      c.check(same, "ranking differs at instance " + std::to_string(inst));
      for (auto kk : ks) {
        c.check(ret.predictions.at(kk).y_pred()[q] == oracle::majority(order, kk, ty, classes),
                "retrieval vote differs at instance " + std::to_string(inst));
      }
    }
  }
  return c.verdict("500 instances, " + std::to_string(c.count()) + " exact comparisons");
}

Verdict simpleshot_property() {
  Checker c;
  double worst_mean = 0.0;
  for (std::uint64_t inst = 0; inst < 500; ++inst) {
    CounterRng rng(derive_key(303, inst));
    const int classes = 2 + static_cast<int>(rng.below(4));
    const std::size_t shots = std::size_t{1} << rng.below(4), d = 2 + rng.below(15);
    const std::size_t per_class = shots + rng.below(5), n = per_class * static_cast<std::size_t>(classes);
    std::vector<float> data(n * d);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
      for (std::size_t j = 0; j < d; ++j) data[i * d + j] = static_cast<float>(rng.normal() + 3.0 * (j == static_cast<std::size_t>(y[i]) % d));
    }
    LabeledEmbeddings train{EmbeddingSet(shuffled_ids(rng, n), d, data), y, classes};
    const std::size_t nq = 20;
    std::vector<float> qd(nq * d);
    std::vector<int> qy(nq);
    for (std::size_t i = 0; i < nq; ++i) {
      qy[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
      for (std::size_t j = 0; j < d; ++j) qd[i * d + j] = static_cast<float>(rng.normal() + 3.0 * (j == static_cast<std::size_t>(qy[i]) % d));
    }
    std::vector<std::string> qids;
    for (std::size_t i = 0; i < nq; ++i) qids.push_back("q" + std::to_string(i));
    LabeledEmbeddings queries{EmbeddingSet(qids, d, qd), qy, classes};

    auto ep = sample_episode(train, queries, shots, derive_key(304, inst));
    auto mean = support_mean(ep.support);
    for (std::size_t j = 0; j < d; ++j) {
      double centered = 0.0;
      for (std::size_t i = 0; i < ep.support.count(); ++i) centered += ep.support.set.row(i)[j] - mean[j];
      centered /= static_cast<double>(ep.support.count());
      worst_mean = std::max(worst_mean, std::abs(centered));
      c.check(std::abs(centered) <= 1e-6, "centered support mean is not zero");
    }
    auto pred = simpleshot_classify(ep);
    auto want = oracle::simpleshot(rows_of(ep.support.set), ep.support.labels, rows_of(queries.set), classes);
    c.check(pred.y_pred() == want, "prediction differs at episode " + std::to_string(inst));
  }
  return c.verdict("500 episodes, max |centered mean| " + fmt(worst_mean));
}

// Random orthogonal matrix by Gram-Schmidt on Gaussian columns.
std::vector<double> random_orthogonal(CounterRng& rng, std::size_t d) {
  std::vector<double> q(d * d);
  for (std::size_t col = 0; col < d; ++col) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    for (std::size_t prev = 0; prev < col; ++prev) {
      double p = 0.0;
      for (std::size_t i = 0; i < d; ++i) p += v[i] * q[i * d + prev];
      for (std::size_t i = 0; i < d; ++i) v[i] -= p * q[i * d + prev];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < d; ++i) q[i * d + col] = v[i] / norm;
  }
  return q;
}

EmbeddingSet rotate_rows(const EmbeddingSet& s, const std::vector<double>& q) {
  const std::size_t d = s.dim();
  std::vector<float> out(s.count() * d);
  for (std::size_t r = 0; r < s.count(); ++r) {
    auto row = s.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) acc += static_cast<double>(row[i]) * q[i * d + j];
      out[r * d + j] = static_cast<float>(acc);
    }
  }
  return EmbeddingSet(s.ids(), d, std::move(out));
}

Verdict mutual_knn_properties() {
  Checker c;
  for (std::uint64_t inst = 0; inst < 200; ++inst) {
    CounterRng rng(derive_key(404, inst));
    const std::size_t n = 3 + rng.below(58), d = 2 + rng.below(11);
    const std::size_t k = 1 + rng.below(n - 1);
    auto ids = shuffled_ids(rng, n);
    std::vector<float> da(n * d), db(n * d);
    for (auto& v : da) v = static_cast<float>(rng.normal());
    for (std::size_t i = 0; i < da.size(); ++i) db[i] = da[i] + static_cast<float>(0.7 * rng.normal());
    EmbeddingSet a(ids, d, da), b(ids, d, db);
    const std::string tag = " at instance " + std::to_string(inst);

    const double ab = mutual_knn(a, b, k).mean;
    c.check(ab == mutual_knn(b, a, k).mean, "asymmetric" + tag);
    auto self = mutual_knn(a, a, k);
    c.check(std::all_of(self.per_sample.begin(), self.per_sample.end(), [](double v) { return v == 1.0; }),
            "identical sets below 1" + tag);
    c.check(mutual_knn(a, b, n - 1).mean == 1.0, "k = N-1 does not saturate" + tag);
    auto rotated = rotate_rows(a, random_orthogonal(rng, d));
    c.check(mutual_knn(rotated, b, k).per_sample == mutual_knn(a, b, k).per_sample, "rotation changes the score" + tag);
  }
  return c.verdict("200 instances x 4 properties");
}

LabeledEmbeddings blobs(std::size_t n, double margin, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<float> data;
  std::vector<int> y;
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % 2);
    const double sign = cls ? 1.0 : -1.0;
    data.push_back(static_cast<float>(sign * (margin / 2 + std::abs(rng.normal()))));
    data.push_back(static_cast<float>(rng.normal()));
    y.push_back(cls);
  }
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("b" + std::to_string(1000 + i));
  return {EmbeddingSet(ids, 2, data), y, 2};
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

Verdict probe_training() {
  Checker c;
  auto data = blobs(200, 1.0, 505);
  TrainConfig cfg;
  double best_acc = 0.0;
  for (double lr : cfg.lr_grid) {
    for (double wd : cfg.wd_grid) {
      auto model = train_linear(data, lr, wd, cfg);
      best_acc = std::max(best_acc, accuracy(predict(model, data)));
    }
  }
  c.check(best_acc == 1.0, "no grid point separates the blobs (best train accuracy " + fmt(best_acc) + ")");

  const double h = 1e-3;
  double worst_ce = 0.0, worst_dice = 0.0;
  {
    CounterRng rng(506);
    const std::size_t n = 30, d = 6;
    const int classes = 4;
    std::vector<float> x(n * d);
    for (auto& v : x) v = static_cast<float>(rng.normal());
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.below(classes));
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("c" + std::to_string(i));
    LabeledEmbeddings set{EmbeddingSet(ids, d, x), y, classes};
    auto m = LinearModel::zeros(classes, d);
    for (auto& w : m.weights) w = rng.normal();
    for (auto& b : m.bias) b = rng.normal();
    auto g = cross_entropy_gradient(m, set);
    for (int t = 0; t < 20; ++t) {
      const std::size_t idx = rng.below(m.weights.size() + m.bias.size());
      auto up = m, dn = m;
      double analytic;
      if (idx < m.weights.size()) {
        up.weights[idx] += h;
        dn.weights[idx] -= h;
        analytic = g.weights[idx];
      } else {
        up.bias[idx - m.weights.size()] += h;
        dn.bias[idx - m.weights.size()] -= h;
        analytic = g.bias[idx - m.weights.size()];
      }
      const double fd = (cross_entropy_loss(up, set) - cross_entropy_loss(dn, set)) / (2 * h);
      worst_ce = std::max(worst_ce, rel_err(analytic, fd));
      c.check(rel_err(analytic, fd) <= 1e-4, "cross-entropy gradient coordinate off by " + fmt(rel_err(analytic, fd)));
    }
  }
  {
    CounterRng rng(507);
    const std::size_t n = 4, d = 5, classes = 3;
    std::vector<float> tok(n * 4 * d);
    for (auto& v : tok) v = static_cast<float>(rng.normal());
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("t" + std::to_string(i));
    TokenEmbeddingSet tokens(ids, 2, 2, d, tok);
    std::vector<std::uint8_t> m(n * 64);
    for (auto& v : m) v = static_cast<std::uint8_t>(rng.below(classes));
    SegMaskSet masks(ids, 8, 8, classes, 0, m);
    auto head = SegHead::zeros(classes, d);
    for (auto& v : head.class_tokens) v = rng.normal();
    for (auto& v : head.bias) v = rng.normal();
    auto g = seg_dice_gradient(head, tokens, masks);
    for (int t = 0; t < 20; ++t) {
      const std::size_t idx = rng.below(head.class_tokens.size() + head.bias.size());
      auto up = head, dn = head;
      double analytic;
      if (idx < head.class_tokens.size()) {
        up.class_tokens[idx] += h;
        dn.class_tokens[idx] -= h;
        analytic = g.class_tokens[idx];
      } else {
        up.bias[idx - head.class_tokens.size()] += h;
        dn.bias[idx - head.class_tokens.size()] -= h;
        analytic = g.bias[idx - head.class_tokens.size()];
      }
      const double fd = (seg_dice_loss(up, tokens, masks) - seg_dice_loss(dn, tokens, masks)) / (2 * h);
      worst_dice = std::max(worst_dice, rel_err(analytic, fd));
      c.check(rel_err(analytic, fd) <= 1e-4, "Dice gradient coordinate off by " + fmt(rel_err(analytic, fd)));
    }
  }
  return c.verdict("best train accuracy " + fmt(best_acc) + ", max rel err CE " + fmt(worst_ce, 3) + " Dice " +
                   fmt(worst_dice, 3));
}

struct ToyTask {
  std::vector<std::vector<double>> train_x, test_x;
  std::vector<int> train_y, test_y;
};

// Two classes of 8x8 RGB inputs that differ in mean intensity.
ToyTask toy_task(std::uint64_t seed, std::size_t input_size) {
  CounterRng rng(seed);
  ToyTask t;
  auto draw = [&](std::size_t count, std::vector<std::vector<double>>& xs, std::vector<int>& ys) {
    for (std::size_t i = 0; i < count; ++i) {
      const int cls = static_cast<int>(i % 2);
      std::vector<double> x(input_size);
      for (auto& v : x) v = std::clamp((cls ? 0.6 : 0.4) + 0.15 * rng.normal(), 0.0, 1.0);
      xs.push_back(std::move(x));
      ys.push_back(cls);
    }
  };
  draw(40, t.train_x, t.train_y);
  draw(40, t.test_x, t.test_y);
  return t;
}

Verdict pgd_properties() {
  Checker c;
  std::size_t projection_checks = 0;
  std::size_t monotone = 0;
  std::string drops;
  for (std::uint64_t s = 0; s < 20; ++s) {
    ToyBackboneConfig bc;
    bc.seed = s;
    ToyBackbone backbone(bc);
    auto task = toy_task(derive_key(606, s), backbone.input_size());
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < task.train_x.size(); ++i) ids.push_back("x" + std::to_string(i));
    LabeledEmbeddings feats{extract_features(backbone, task.train_x, ids), task.train_y, 2};
    TrainConfig tc;
    tc.lr_grid = {1e-2, 1e-3};
    tc.wd_grid = {0.0};
    tc.epochs = 100;
    tc.batch_size = 16;
    tc.seed = s;
    auto probe = train_linear_probe(feats, feats, tc);
    ProbedPipeline pipe(backbone, probe.model);

    AttackConfig ac;
    ac.seed = s;
    for (double eps : default_epsilons()) {
      ac.epsilon = eps;
      for (std::size_t i = 0; i < 5; ++i) {
        auto r = pgd_attack(pipe, task.test_x[i], task.test_y[i], ac);
        for (double v : r.step_linf) {
          c.check(v <= eps, "step exceeds the budget");
          ++projection_checks;
        }
        for (double v : r.delta) {
          c.check(std::abs(v) <= eps, "perturbation exceeds the budget");
          ++projection_checks;
        }
      }
    }

    auto zero = f1_drop(pipe, task.test_x, task.test_y, {0.0}, ac);
    c.check(zero.points[0].delta_f1 == 0.0, "epsilon 0 changes F1 for seed " + std::to_string(s));
    auto curve = f1_drop(pipe, task.test_x, task.test_y, default_epsilons(), ac);
    const bool ok = curve.points[0].delta_f1 <= curve.points[1].delta_f1 &&
                    curve.points[1].delta_f1 <= curve.points[2].delta_f1;
    monotone += ok;
    c.check(ok, "F1 drop decreases with epsilon for seed " + std::to_string(s) + " (" +
                    fmt(curve.points[0].delta_f1, 3) + ", " + fmt(curve.points[1].delta_f1, 3) + ", " +
                    fmt(curve.points[2].delta_f1, 3) + ")");
    if (s < 3) {
      drops += (drops.empty() ? "" : " | ") + fmt(curve.points[0].delta_f1, 3) + "," + fmt(curve.points[1].delta_f1, 3) +
               "," + fmt(curve.points[2].delta_f1, 3);
    }
  }
  c.check(projection_checks >= 10000, "fewer than 10^4 projection assertions");
  return c.verdict(std::to_string(projection_checks) + " projection assertions, " + std::to_string(monotone) +
                   "/20 seeds monotone; first seeds dF1: " + drops);
}

Verdict statistics() {
  Checker c;
  const double p8 = binomial_test_two_sided(8, 8);
  c.check(std::abs(p8 - 0.0078125) <= 1e-15, "8/8 gives " + fmt(p8, 17));
  std::vector<double> ps{0.01, 0.02, 0.03, 0.04};
  for (double v : benjamini_hochberg(ps).adjusted) c.check(std::abs(v - 0.04) <= 1e-15, "BH value " + fmt(v, 17));
  for (std::uint64_t t = 0; t < 10000; ++t) {
    CounterRng rng(derive_key(707, t));
    std::vector<double> p(1 + rng.below(30));
    for (auto& v : p) v = rng.below(4) == 0 ? std::round(rng.uniform() * 20) / 20 : rng.uniform();
    auto adj = benjamini_hochberg(p).adjusted;
    bool ok = adj.size() == p.size();
    for (std::size_t i = 0; ok && i < p.size(); ++i) {
      ok = adj[i] <= 1.0 && adj[i] >= p[i] * (1 - 1e-12);
      for (std::size_t j = 0; ok && j < p.size(); ++j) ok = !(p[i] <= p[j]) || adj[i] <= adj[j];
    }
    c.check(ok, "BH not monotone for vector " + std::to_string(t));
  }
  return c.verdict("p(8/8) = " + fmt(p8, 17) + ", 10^4 BH vectors monotone");
}

Image random_image(CounterRng& rng, std::size_t h, std::size_t w) {
  Image img(h, w);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

Verdict augment_suite() {
  Checker c;
  for (std::uint64_t t = 0; t < 50; ++t) {
    CounterRng rng(derive_key(808, t));
    auto img = random_image(rng, 8 + rng.below(25), 8 + rng.below(25));
    for (int k : {3, 5}) {
      c.check(erode(img, k) == invert(dilate(invert(img), k)), "erosion/dilation duality");
      c.check(opening(img, k) == dilate(erode(img, k), k), "opening composition");
      c.check(closing(img, k) == erode(dilate(img, k), k), "closing composition");
    }
    c.check(flip(flip(img, true), true) == img, "horizontal flip involution");
    c.check(flip(flip(img, false), false) == img, "vertical flip involution");
    c.check(rotate90(rotate90(rotate90(rotate90(img, 1), 1), 1), 1) == img, "rotate^4");
    c.check(gamma_correct(img, 1.0) == img, "gamma 1");
  }

  auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  const AugmentKnobs knobs;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    for (auto kind : all_transform_kinds()) {
      auto spec = sample_spec(kind, s, knobs);
      bool ok = true;
      try {
        spec.validate();
      } catch (const Error&) {
        ok = false;
      }
      std::visit(
          [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, CropParams>) {
              ok = ok && in(p.anchor, 0, 4);
            } else if constexpr (std::is_same_v<P, ElasticParams>) {
              ok = ok && p.alpha == 250.0 && p.sigma == 6.0;
            } else if constexpr (std::is_same_v<P, MorphParams>) {
              ok = ok && (p.kernel == 3 || p.kernel == 5);
            } else if constexpr (std::is_same_v<P, BlurParams>) {
              ok = ok && p.kernel == 15 && p.sigma == knobs.blur_sigma;
            } else if constexpr (std::is_same_v<P, JitterParams>) {
              ok = ok && in(p.brightness, 0.5, 1.5) && in(p.contrast, 0.5, 1.5) && in(p.saturation, 0.5, 1.5);
            } else if constexpr (std::is_same_v<P, TranslateParams>) {
              ok = ok && in(p.dx, -0.2, 0.2) && in(p.dy, -0.2, 0.2) && in(p.scale, 0.8, 1.2);
            } else if constexpr (std::is_same_v<P, CutoutParams>) {
              const std::size_t side = cutout_side(Image(224, 160), p.side);
              ok = ok && in(p.side, 0.1, 0.5) && in(static_cast<double>(side), 16.0, 80.0);
            } else if constexpr (std::is_same_v<P, HedParams>) {
              for (std::size_t ch = 0; ch < 3; ++ch) {
                ok = ok && in(p.alpha[ch], 1 - knobs.hed_sigma, 1 + knobs.hed_sigma) &&
                     in(p.beta[ch], -knobs.hed_sigma, knobs.hed_sigma);
              }
            } else if constexpr (std::is_same_v<P, RotateParams>) {
              ok = ok && in(p.quarter_turns, 1, 3);
            } else if constexpr (std::is_same_v<P, GammaParams>) {
              ok = ok && in(p.gamma, 0.5, 1.5);
            }
          },
          spec.params);
      c.check(ok, std::string(to_string(kind)) + " parameters out of range at seed " + std::to_string(s));
    }
  }
  return c.verdict(std::to_string(c.count()) + " checks over 14 kinds x 10^4 seeds");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / ("embench_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::string reports[2];
  std::size_t results = 0, failures = 0;
  for (int i = 0; i < 2; ++i) {
    const fs::path dir = root / ("run" + std::to_string(i));
    auto cfg = read_run_config(write_synthetic_suite((dir / "suite").string()));
    cfg.tasks = known_tasks();
    cfg.output_dir = (dir / "out").string();
    cfg.cache_dir = (dir / "cache").string();
    auto out = run(cfg);
    results = out.report.results.size();
    failures = out.report.failures.size();
    reports[i] = slurp(dir / "out" / "report.json");
  }
  fs::remove_all(root);
  const bool same = !reports[0].empty() && reports[0] == reports[1];
  return {same, std::to_string(reports[0].size()) + " bytes, " + std::to_string(results) + " results, " +
                    std::to_string(failures) + " failed cells" + (same ? ", identical" : ", reports differ")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Verdict()> fn;
  };
  const std::vector<Criterion> criteria{
      {"aggregation consistency", 1, aggregation},
      {"rank-sum consistency", 1, rank_sum_consistency},
      {"calibration oracle equivalence", 10, calibration_oracle},
      {"knn/retrieval oracle equivalence", 30, knn_retrieval_oracle},
      {"simpleshot property", 10, simpleshot_property},
      {"mutual-knn properties", 10, mutual_knn_properties},
      {"probe training", 60, probe_training},
      {"pgd", 60, pgd_properties},
      {"statistics", 10, statistics},
      {"augment suite", 60, augment_suite},
      // no runtime bound is given for the full-pipeline determinism check
      {"determinism", 0, determinism},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = cr.fn();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cr.budget_s > 0 && secs > cr.budget_s) {
      v.pass = false;
      v.detail += "; over the " + fmt(cr.budget_s) + " s budget";
    }
    failed += !v.pass;
    std::printf("%s  %-34s %8.3f s  %s\n", v.pass ? "PASS" : "FAIL", cr.name, secs, v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
