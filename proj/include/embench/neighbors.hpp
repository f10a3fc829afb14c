#pragma once

#include <cstdint>
#include <vector>

#include "embench/embedstore.hpp"

namespace embench {

struct Neighbor {
  std::uint32_t index = 0;
  double similarity = 0.0;
};

struct NeighborSearchOptions {
  std::size_t threads = 1;
  // Queries are the base set itself and row i never lists itself.
  bool exclude_self = false;
};

// Exact top-k by dot product over unit-norm rows (i.e. cosine). Each pair is
// accumulated in double in dimension order, so results do not depend on the
// blocking. Ordering: similarity descending, then base id ascending.
std::vector<std::vector<Neighbor>> top_k_neighbors(const EmbeddingSet& base, const EmbeddingSet& queries,
                                                   std::size_t k, const NeighborSearchOptions& opts = {});

double dot(std::span<const float> a, std::span<const float> b);

// Position of each id in lexicographic order.
std::vector<std::uint32_t> id_ranks(const std::vector<std::string>& ids);

}  // namespace embench
