#include "embench/neighbors.hpp"

#include <algorithm>
#include <numeric>

namespace embench {

namespace {

constexpr std::size_t kQueryBlock = 16;
constexpr std::size_t kBaseBlock = 512;

}  // namespace

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += static_cast<double>(a[j]) * static_cast<double>(b[j]);
  return s;
}

std::vector<std::uint32_t> id_ranks(const std::vector<std::string>& ids) {
  std::vector<std::uint32_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return ids[a] < ids[b]; });
  std::vector<std::uint32_t> rank(ids.size());
  for (std::uint32_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
  return rank;
}

std::vector<std::vector<Neighbor>> top_k_neighbors(const EmbeddingSet& base, const EmbeddingSet& queries,
                                                   std::size_t k, const NeighborSearchOptions& opts) {
  if (base.dim() != queries.dim()) throw Error(ErrorCode::kShapeMismatch, "query/base dimension mismatch");
  if (opts.exclude_self && base.count() != queries.count()) {
    throw Error(ErrorCode::kInvalidArgument, "exclude_self requires queries == base");
  }
  const std::size_t available = base.count() - (opts.exclude_self ? 1 : 0);
  if (k == 0 || k > available) {
    throw Error(ErrorCode::kInvalidArgument,
                "k=" + std::to_string(k) + " must be in [1, " + std::to_string(available) + "]");
  }
  const auto rank = id_ranks(base.ids());
  // true when a ranks strictly before b
  auto before = [&](const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return rank[a.index] < rank[b.index];
  };

  const std::size_t nq = queries.count();
  const std::size_t nb = base.count();
  std::vector<std::vector<Neighbor>> result(nq);
  const std::size_t blocks = (nq + kQueryBlock - 1) / kQueryBlock;

  parallel_for(blocks, opts.threads, [&](std::size_t blk) {
    const std::size_t q0 = blk * kQueryBlock;
    const std::size_t q1 = std::min(nq, q0 + kQueryBlock);
    // max-heap under `before` keeps the worst retained neighbor on top
    std::vector<std::vector<Neighbor>> heaps(q1 - q0);
    for (auto& h : heaps) h.reserve(k + 1);
    std::vector<double> tile(kQueryBlock * kBaseBlock);

    for (std::size_t b0 = 0; b0 < nb; b0 += kBaseBlock) {
      const std::size_t b1 = std::min(nb, b0 + kBaseBlock);
      for (std::size_t q = q0; q < q1; ++q) {
        auto qr = queries.row(q);
        for (std::size_t b = b0; b < b1; ++b) tile[(q - q0) * kBaseBlock + (b - b0)] = dot(qr, base.row(b));
      }
      for (std::size_t q = q0; q < q1; ++q) {
        auto& heap = heaps[q - q0];
        for (std::size_t b = b0; b < b1; ++b) {
          if (opts.exclude_self && b == q) continue;
          Neighbor cand{static_cast<std::uint32_t>(b), tile[(q - q0) * kBaseBlock + (b - b0)]};
          if (heap.size() < k) {
            heap.push_back(cand);
            std::push_heap(heap.begin(), heap.end(), before);
          } else if (before(cand, heap.front())) {
            std::pop_heap(heap.begin(), heap.end(), before);
            heap.back() = cand;
            std::push_heap(heap.begin(), heap.end(), before);
          }
        }
      }
    }
    for (std::size_t q = q0; q < q1; ++q) {
      auto& heap = heaps[q - q0];
      std::sort_heap(heap.begin(), heap.end(), before);
      result[q] = std::move(heap);
    }
  });
  return result;
}

}  // namespace embench
