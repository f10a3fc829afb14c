#include "embench/featurespace.hpp"

#include <algorithm>
#include <cmath>

#include "embench/neighbors.hpp"
#include "json.hpp"

namespace embench {

namespace {

void check_aligned(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.ids() != b.ids()) throw Error(ErrorCode::kMisaligned, "embedding sets are not id-aligned");
}

}  // namespace

AlignmentScore mutual_knn(const EmbeddingSet& a, const EmbeddingSet& b, std::size_t k, std::size_t threads) {
  check_aligned(a, b);
  const std::size_t n = a.count();
  if (k == 0 || k >= n) {
    throw Error(ErrorCode::kInvalidArgument, "k=" + std::to_string(k) + " must be in [1, " + std::to_string(n - 1) + "]");
  }
  auto na = l2_normalize(a);
  auto nb = l2_normalize(b);
  NeighborSearchOptions opts{.threads = threads, .exclude_self = true};
  auto sa = top_k_neighbors(na, na, k, opts);
  auto sb = top_k_neighbors(nb, nb, k, opts);

  AlignmentScore out;
  out.k = k;
  out.per_sample.resize(n);
  std::vector<std::uint32_t> ia, ib, common;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ia.clear();
    ib.clear();
    common.clear();
    for (const auto& nbr : sa[i]) ia.push_back(nbr.index);
    for (const auto& nbr : sb[i]) ib.push_back(nbr.index);
    std::sort(ia.begin(), ia.end());
    std::sort(ib.begin(), ib.end());
    std::set_intersection(ia.begin(), ia.end(), ib.begin(), ib.end(), std::back_inserter(common));
    out.per_sample[i] = static_cast<double>(common.size()) / static_cast<double>(k);
    total += out.per_sample[i];
  }
  out.mean = total / static_cast<double>(n);
  return out;
}

std::vector<double> alignment_trajectory(const std::vector<EmbeddingSet>& snapshots_a,
                                         const std::vector<EmbeddingSet>& snapshots_b, std::size_t k,
                                         std::size_t threads) {
  if (snapshots_a.size() != snapshots_b.size()) {
    throw Error(ErrorCode::kMisaligned, "snapshot lists differ in length");
  }
  if (snapshots_a.empty()) throw Error(ErrorCode::kEmptyInput, "no snapshots");
  std::vector<double> series;
  series.reserve(snapshots_a.size());
  for (std::size_t s = 0; s < snapshots_a.size(); ++s) {
    series.push_back(mutual_knn(snapshots_a[s], snapshots_b[s], k, threads).mean);
  }
  return series;
}

std::vector<AlignmentEdge> alignment_graph(const std::map<std::string, EmbeddingSet>& models, std::size_t k,
                                           std::size_t threads) {
  std::vector<AlignmentEdge> edges;
  for (auto i = models.begin(); i != models.end(); ++i) {
    for (auto j = std::next(i); j != models.end(); ++j) {
      edges.push_back({i->first, j->first, mutual_knn(i->second, j->second, k, threads).mean});
    }
  }
  return edges;
}

std::string alignment_graph_json(const std::vector<AlignmentEdge>& edges) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : edges) arr.push_back({{"model_a", e.model_a}, {"model_b", e.model_b}, {"mean_score", e.mean_score}});
  return arr.dump();
}

InvarianceRecord invariance_score(const EmbeddingSet& original, const EmbeddingSet& transformed,
                                  const std::string& transform) {
  check_aligned(original, transformed);
  if (original.dim() != transformed.dim()) throw Error(ErrorCode::kShapeMismatch, "dimension mismatch");
  InvarianceRecord rec;
  rec.transform = transform;
  rec.cosine.resize(original.count());
  double total = 0.0;
  for (std::size_t i = 0; i < original.count(); ++i) {
    auto a = original.row(i);
    auto b = transformed.row(i);
    double ab = dot(a, b), aa = dot(a, a), bb = dot(b, b);
    if (aa <= 0.0 || bb <= 0.0) throw Error(ErrorCode::kZeroNorm, "sample '" + original.ids()[i] + "' has zero norm");
    double c = std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
    rec.cosine[i] = c;
    total += c;
  }
  rec.mean = total / static_cast<double>(original.count());
  return rec;
}

}  // namespace embench
