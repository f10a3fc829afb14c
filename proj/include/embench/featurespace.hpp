#pragma once

#include <map>
#include <string>
#include <vector>

#include "embench/embedstore.hpp"

namespace embench {

struct AlignmentScore {
  std::vector<double> per_sample;
  double mean = 0.0;
  std::size_t k = 10;
};

// Mutual kNN: for each sample i, the fraction of its k nearest neighbors
// (cosine, self excluded) shared between the two embedding spaces. Both sets
// must hold the same ids in the same order; rows need not be normalized.
AlignmentScore mutual_knn(const EmbeddingSet& a, const EmbeddingSet& b, std::size_t k = 10, std::size_t threads = 1);

// Mean mutual-kNN per snapshot index.
std::vector<double> alignment_trajectory(const std::vector<EmbeddingSet>& snapshots_a,
                                         const std::vector<EmbeddingSet>& snapshots_b, std::size_t k = 10,
                                         std::size_t threads = 1);

struct AlignmentEdge {
  std::string model_a;
  std::string model_b;
  double mean_score = 0.0;
};

// All unordered model pairs (name order), for graph rendering.
std::vector<AlignmentEdge> alignment_graph(const std::map<std::string, EmbeddingSet>& models, std::size_t k = 10,
                                           std::size_t threads = 1);
std::string alignment_graph_json(const std::vector<AlignmentEdge>& edges);

struct InvarianceRecord {
  std::string transform;
  std::vector<double> cosine;
  double mean = 0.0;
};

InvarianceRecord invariance_score(const EmbeddingSet& original, const EmbeddingSet& transformed,
                                  const std::string& transform);

}  // namespace embench
