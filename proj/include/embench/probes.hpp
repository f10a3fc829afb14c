#pragma once

// Training-free evaluators over cosine similarity: kNN with a validated k,
// SimpleShot few-shot classification and top-k image retrieval. Inputs are
// expected to be L2-normalized (see l2_normalize) except for SimpleShot,
// which centers raw embeddings itself.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "embench/embedstore.hpp"
#include "embench/metrics.hpp"
#include "embench/neighbors.hpp"

namespace embench {

struct KnnConfig {
  std::vector<std::size_t> k_grid{1, 3, 5, 10, 20, 30, 40, 50};
  std::size_t threads = 1;
};

// Majority vote among the k most similar training rows; confidence row holds
// vote fractions. Vote ties go to the lowest class index.
PredictionSet knn_classify(const LabeledEmbeddings& train, const LabeledEmbeddings& queries, std::size_t k,
                           std::size_t threads = 1);

// Majority vote over an already sorted neighbor list.
int majority_label(const std::vector<Neighbor>& neighbors, std::size_t k, const std::vector<int>& labels,
                   int num_classes, std::vector<double>* fractions = nullptr);

struct KValidation {
  std::size_t best_k = 1;
  // (k, val macro-F1) for each evaluated grid entry, grid order.
  std::vector<std::pair<std::size_t, double>> scores;
};

// Picks the k maximizing validation macro-F1; ties go to the smaller k.
// Grid entries larger than the training set are skipped.
KValidation validate_k(const LabeledEmbeddings& train, const LabeledEmbeddings& val, const KnnConfig& cfg);

struct FewShotEpisode {
  std::size_t shots = 1;
  // support rows grouped by class: support.labels[i] is the class of row i
  LabeledEmbeddings support;
  LabeledEmbeddings queries;
  std::uint64_t seed = 0;

  void validate() const;
};

// Draws `shots` supports per class present in train, without replacement.
FewShotEpisode sample_episode(const LabeledEmbeddings& train, const LabeledEmbeddings& queries, std::size_t shots,
                              std::uint64_t seed);

struct SimpleShotOptions {
  bool center = true;
};

// Center by the support mean, average centered shots per class, assign each
// query to the prototype with the highest cosine similarity.
PredictionSet simpleshot_classify(const FewShotEpisode& episode, const SimpleShotOptions& opts = {});

// Support mean subtracted from every row; exposed for testing.
std::vector<double> support_mean(const LabeledEmbeddings& support);

struct RetrievalResult {
  std::vector<std::size_t> ks;
  std::map<std::size_t, PredictionSet> predictions;
  // ranked train ids per query (depth entries)
  std::vector<std::vector<std::string>> ranked_ids;
  std::vector<std::vector<double>> ranked_similarity;
};

RetrievalResult retrieve_topk(const LabeledEmbeddings& train, const LabeledEmbeddings& queries,
                              const std::vector<std::size_t>& ks = {1, 3, 5, 10}, std::size_t depth = 0,
                              std::size_t threads = 1);

}  // namespace embench
