#include "embench/probes.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace embench {

int majority_label(const std::vector<Neighbor>& neighbors, std::size_t k, const std::vector<int>& labels,
                   int num_classes, std::vector<double>* fractions) {
  std::vector<std::size_t> votes(static_cast<std::size_t>(num_classes), 0);
  const std::size_t n = std::min(k, neighbors.size());
  for (std::size_t i = 0; i < n; ++i) ++votes[static_cast<std::size_t>(labels[neighbors[i].index])];
  int best = 0;
  for (int c = 1; c < num_classes; ++c) {
    if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)]) best = c;
  }
  if (fractions) {
    fractions->resize(votes.size());
    for (std::size_t c = 0; c < votes.size(); ++c) (*fractions)[c] = static_cast<double>(votes[c]) / static_cast<double>(n);
  }
  return best;
}

PredictionSet knn_classify(const LabeledEmbeddings& train, const LabeledEmbeddings& queries, std::size_t k,
                           std::size_t threads) {
  train.validate();
  if (k > train.count()) {
    throw Error(ErrorCode::kInvalidArgument,
                "k=" + std::to_string(k) + " exceeds training set size " + std::to_string(train.count()));
  }
  const int c = std::max(train.num_classes, queries.num_classes);
  auto nn = top_k_neighbors(train.set, queries.set, k, {.threads = threads});
  std::vector<double> probs;
  probs.reserve(queries.count() * static_cast<std::size_t>(c));
  std::vector<double> frac;
  for (const auto& list : nn) {
    majority_label(list, k, train.labels, c, &frac);
    probs.insert(probs.end(), frac.begin(), frac.end());
  }
  return PredictionSet(queries.labels, std::move(probs), c);
}

KValidation validate_k(const LabeledEmbeddings& train, const LabeledEmbeddings& val, const KnnConfig& cfg) {
  train.validate();
  if (val.count() == 0) throw Error(ErrorCode::kEmptyInput, "validation set is empty");
  std::vector<std::size_t> grid;
  for (std::size_t k : cfg.k_grid) {
    if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
    if (k <= train.count()) grid.push_back(k);
  }
  if (grid.empty()) throw Error(ErrorCode::kInvalidArgument, "no k in the grid fits the training set");
  const std::size_t kmax = *std::max_element(grid.begin(), grid.end());
  const int c = std::max(train.num_classes, val.num_classes);
  auto nn = top_k_neighbors(train.set, val.set, kmax, {.threads = cfg.threads});

  KValidation out;
  double best = -1.0;
  for (std::size_t k : grid) {
    std::vector<int> pred(val.count());
    for (std::size_t i = 0; i < nn.size(); ++i) pred[i] = majority_label(nn[i], k, train.labels, c);
    double f1 = f1_score(PredictionSet(val.labels, std::move(pred), c));
    out.scores.emplace_back(k, f1);
    if (f1 > best || (f1 == best && k < out.best_k)) {
      best = f1;
      out.best_k = k;
    }
  }
  return out;
}

void FewShotEpisode::validate() const {
  support.validate();
  queries.validate();
  std::map<int, std::size_t> per_class;
  for (int l : support.labels) ++per_class[l];
  for (auto [cls, count] : per_class) {
    if (count != shots) {
      throw Error(ErrorCode::kInvalidArgument, "class " + std::to_string(cls) + " has " + std::to_string(count) +
                                                   " shots, expected " + std::to_string(shots));
    }
  }
  for (const auto& id : queries.set.ids()) {
    if (support.set.find(id)) throw Error(ErrorCode::kInvalidArgument, "sample '" + id + "' is both support and query");
  }
}

FewShotEpisode sample_episode(const LabeledEmbeddings& train, const LabeledEmbeddings& queries, std::size_t shots,
                              std::uint64_t seed) {
  train.validate();
  if (shots == 0) throw Error(ErrorCode::kInvalidArgument, "shots must be >= 1");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < train.count(); ++i) by_class[train.labels[i]].push_back(i);
  std::vector<std::string> ids;
  std::vector<int> labels;
  for (auto& [cls, rows] : by_class) {
    if (rows.size() < shots) {
      throw Error(ErrorCode::kInvalidArgument, "class " + std::to_string(cls) + " has only " +
                                                   std::to_string(rows.size()) + " training samples for " +
                                                   std::to_string(shots) + " shots");
    }
    CounterRng rng(derive_key(seed, static_cast<std::uint64_t>(cls)));
    auto perm = random_permutation(rows.size(), rng);
    std::vector<std::size_t> picked(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(shots));
    std::sort(picked.begin(), picked.end());
    for (std::size_t p : picked) {
      ids.push_back(train.set.ids()[rows[p]]);
      labels.push_back(cls);
    }
  }
  FewShotEpisode ep;
  ep.shots = shots;
  ep.seed = seed;
  ep.support = LabeledEmbeddings{train.set.subset(ids), std::move(labels), train.num_classes};
  ep.queries = queries;
  ep.validate();
  return ep;
}

std::vector<double> support_mean(const LabeledEmbeddings& support) {
  const std::size_t d = support.set.dim();
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < support.count(); ++i) {
    auto r = support.set.row(i);
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  }
  for (auto& v : mean) v /= static_cast<double>(support.count());
  return mean;
}

PredictionSet simpleshot_classify(const FewShotEpisode& episode, const SimpleShotOptions& opts) {
  const auto& support = episode.support;
  if (support.count() == 0) throw Error(ErrorCode::kEmptyInput, "episode has no support samples");
  if (episode.queries.set.dim() != support.set.dim()) throw Error(ErrorCode::kShapeMismatch, "dimension mismatch");
  const std::size_t d = support.set.dim();
  const int c = std::max(support.num_classes, episode.queries.num_classes);

  std::vector<double> mean = opts.center ? support_mean(support) : std::vector<double>(d, 0.0);

  std::vector<std::vector<double>> proto(static_cast<std::size_t>(c), std::vector<double>(d, 0.0));
  std::vector<std::size_t> count(static_cast<std::size_t>(c), 0);
  for (std::size_t i = 0; i < support.count(); ++i) {
    auto cls = static_cast<std::size_t>(support.labels[i]);
    auto r = support.set.row(i);
    for (std::size_t j = 0; j < d; ++j) proto[cls][j] += r[j] - mean[j];
    ++count[cls];
  }
  std::vector<int> classes;
  std::vector<double> proto_norm(static_cast<std::size_t>(c), 0.0);
  for (std::size_t cls = 0; cls < proto.size(); ++cls) {
    if (count[cls] == 0) continue;
    classes.push_back(static_cast<int>(cls));
    double sq = 0.0;
    for (auto& v : proto[cls]) {
      v /= static_cast<double>(count[cls]);
      sq += v * v;
    }
    proto_norm[cls] = std::sqrt(sq);
  }
  if (classes.empty()) throw Error(ErrorCode::kInvalidArgument, "no class has support samples");

  std::vector<int> pred(episode.queries.count());
  std::vector<double> centered(d);
  for (std::size_t q = 0; q < episode.queries.count(); ++q) {
    auto r = episode.queries.set.row(q);
    double qsq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      centered[j] = r[j] - mean[j];
      qsq += centered[j] * centered[j];
    }
    const double qn = std::sqrt(qsq);
    int best = classes.front();
    double best_sim = -std::numeric_limits<double>::infinity();
    for (int cls : classes) {
      const auto& p = proto[static_cast<std::size_t>(cls)];
      double dp = 0.0;
      for (std::size_t j = 0; j < d; ++j) dp += centered[j] * p[j];
      double denom = qn * proto_norm[static_cast<std::size_t>(cls)];
      double sim = denom > 0.0 ? dp / denom : 0.0;
      if (sim > best_sim) {
        best_sim = sim;
        best = cls;
      }
    }
    pred[q] = best;
  }
  return PredictionSet(episode.queries.labels, std::move(pred), c);
}

RetrievalResult retrieve_topk(const LabeledEmbeddings& train, const LabeledEmbeddings& queries,
                              const std::vector<std::size_t>& ks, std::size_t depth, std::size_t threads) {
  train.validate();
  if (ks.empty()) throw Error(ErrorCode::kInvalidArgument, "ks must be nonempty");
  const std::size_t kmax = *std::max_element(ks.begin(), ks.end());
  if (kmax > train.count()) {
    throw Error(ErrorCode::kInvalidArgument,
                "k=" + std::to_string(kmax) + " exceeds training set size " + std::to_string(train.count()));
  }
  if (depth == 0) depth = kmax;
  depth = std::min(std::max(depth, kmax), train.count());
  const int c = std::max(train.num_classes, queries.num_classes);
  auto nn = top_k_neighbors(train.set, queries.set, depth, {.threads = threads});

  RetrievalResult out;
  out.ks = ks;
  for (std::size_t k : ks) {
    if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
    std::vector<double> probs;
    std::vector<double> frac;
    for (const auto& list : nn) {
      majority_label(list, k, train.labels, c, &frac);
      probs.insert(probs.end(), frac.begin(), frac.end());
    }
    out.predictions.emplace(k, PredictionSet(queries.labels, std::move(probs), c));
  }
  for (const auto& list : nn) {
    std::vector<std::string> ids;
    std::vector<double> sims;
    for (const auto& n : list) {
      ids.push_back(train.set.ids()[n.index]);
      sims.push_back(n.similarity);
    }
    out.ranked_ids.push_back(std::move(ids));
    out.ranked_similarity.push_back(std::move(sims));
  }
  return out;
}

}  // namespace embench
