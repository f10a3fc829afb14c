#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "embench/neighbors.hpp"
#include "embench/probes.hpp"
#include "helpers.hpp"

using namespace embench;

namespace {

// Exhaustive ranking: descending cosine, ascending id on ties.
std::vector<std::size_t> brute_rank(const EmbeddingSet& base, std::span<const float> q) {
  std::vector<std::size_t> order(base.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> sim(base.count());
  for (std::size_t i = 0; i < base.count(); ++i) sim[i] = dot(q, base.row(i));
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sim[a] != sim[b]) return sim[a] > sim[b];
    return base.ids()[a] < base.ids()[b];
  });
  return order;
}

int brute_vote(const std::vector<std::size_t>& order, std::size_t k, const std::vector<int>& labels, int c) {
  std::vector<int> votes(c, 0);
  for (std::size_t i = 0; i < k; ++i) ++votes[labels[order[i]]];
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

LabeledEmbeddings labeled(EmbeddingSet s, std::vector<int> y, int c) { return {std::move(s), std::move(y), c}; }

}  // namespace

TEST_SUITE("probes") {
  TEST_CASE("single training sample decides every query") {
    auto train = labeled(EmbeddingSet({"t"}, 2, {1.0f, 0.0f}), {1}, 2);
    auto q = labeled(EmbeddingSet({"a", "b"}, 2, {0.0f, 1.0f, -1.0f, 0.0f}), {0, 1}, 2);
    auto p = knn_classify(train, q, 1);
    CHECK(p.y_pred() == std::vector<int>{1, 1});
  }

  TEST_CASE("six 2-D points, k=3, matches the exhaustive oracle") {
    std::vector<float> pts{1, 0, 0.9f, 0.1f, 0, 1, 0.1f, 0.9f, -1, 0, 0.7f, 0.7f};
    auto base = l2_normalize(EmbeddingSet(testutil::make_ids(6), 2, pts));
    std::vector<int> y{0, 0, 1, 1, 1, 0};
    auto q = l2_normalize(EmbeddingSet({"q"}, 2, {0.6f, 0.8f}));
    auto p = knn_classify(labeled(base, y, 2), labeled(q, {1}, 2), 3);
    CHECK(p.y_pred()[0] == brute_vote(brute_rank(base, q.row(0)), 3, y, 2));
  }

  TEST_CASE("vote ties go to the lowest class and similarity ties to the smaller id") {
    auto base = EmbeddingSet({"b", "a"}, 1, {1.0f, 1.0f});
    auto nn = top_k_neighbors(base, EmbeddingSet({"q"}, 1, {1.0f}), 1);
    CHECK(base.ids()[nn[0][0].index] == "a");
    auto p = knn_classify(labeled(EmbeddingSet({"x", "y"}, 1, {1.0f, 1.0f}), {1, 0}, 2),
                          labeled(EmbeddingSet({"q"}, 1, {1.0f}), {0}, 2), 2);
    CHECK(p.y_pred()[0] == 0);
  }

  TEST_CASE("k selection") {
    CounterRng rng(5);
    auto train = labeled(l2_normalize(testutil::random_set(rng, 20, 4)), testutil::random_labels(rng, 20, 3), 3);
    auto self = validate_k(train, train, KnnConfig{{1, 3, 5}});
    CHECK(self.best_k == 1);
    CHECK(validate_k(train, train, KnnConfig{{1}}).best_k == 1);

    // clean blobs plus one mislabeled point sitting right next to the query
    std::vector<float> pts;
    std::vector<int> y;
    for (int i = 0; i < 6; ++i) {
      pts.insert(pts.end(), {1.0f, 0.05f * i});
      y.push_back(0);
      pts.insert(pts.end(), {0.05f * i, 1.0f});
      y.push_back(1);
    }
    pts.insert(pts.end(), {1.0f, 0.31f});
    y.push_back(1);
    auto tr = labeled(l2_normalize(EmbeddingSet(testutil::make_ids(13), 2, pts)), y, 2);
    auto val = labeled(l2_normalize(EmbeddingSet({"v"}, 2, {1.0f, 0.3f})), {0}, 2);
    auto kv = validate_k(tr, val, KnnConfig{{1, 5}});
    CHECK(kv.best_k == 5);
    for (auto [k, f1] : kv.scores) {
      int oracle = brute_vote(brute_rank(tr.set, val.set.row(0)), k, y, 2);
      CHECK(f1 == (oracle == 0 ? 1.0 : 0.0));
    }
  }

  TEST_CASE("retrieval ranking equals an exhaustive sort") {
    CounterRng rng(8);
    auto base = l2_normalize(testutil::random_set(rng, 10, 3));
    auto y = testutil::random_labels(rng, 10, 2);
    auto q = l2_normalize(testutil::random_set(rng, 2, 3, "q"));
    auto r = retrieve_topk(labeled(base, y, 2), labeled(q, {0, 1}, 2), {1, 3}, 10);
    for (std::size_t i = 0; i < 2; ++i) {
      auto order = brute_rank(base, q.row(i));
      REQUIRE(r.ranked_ids[i].size() == 10);
      for (std::size_t j = 0; j < 10; ++j) CHECK(r.ranked_ids[i][j] == base.ids()[order[j]]);
      CHECK(r.predictions.at(3).y_pred()[i] == brute_vote(order, 3, y, 2));
    }
    // a query equal to a train row ranks that row first
    auto exact = retrieve_topk(labeled(base, y, 2), labeled(base.subset(std::vector<std::string>{base.ids()[4]}), {y[4]}, 2), {1});
    CHECK(exact.ranked_ids[0][0] == base.ids()[4]);
  }

  TEST_CASE("k larger than the training set is an error") {
    auto train = labeled(EmbeddingSet({"t"}, 1, {1.0f}), {0}, 1);
    CHECK_THROWS_AS(knn_classify(train, train, 2), Error);
  }

  TEST_CASE("simpleshot: query equal to a support sample") {
    auto train = labeled(EmbeddingSet({"a", "b"}, 2, {5.0f, 0.0f, 0.0f, 5.0f}), {0, 1}, 2);
    auto q = labeled(EmbeddingSet({"q"}, 2, {0.0f, 5.0f}), {1}, 2);
    auto ep = sample_episode(train, q, 1, 3);
    CHECK(simpleshot_classify(ep).y_pred()[0] == 1);
  }

  TEST_CASE("simpleshot: 2 classes x 2 shots in 3-D, explicit oracle") {
    auto train = labeled(EmbeddingSet({"a", "b", "c", "d"}, 3, {1, 0, 0, 2, 1, 0, 0, 1, 1, 0, 2, 0}), {0, 0, 1, 1}, 2);
    auto q = labeled(EmbeddingSet({"q", "r"}, 3, {2, 0, 0, 0, 3, 1}), {0, 1}, 2);
    auto ep = sample_episode(train, q, 2, 1);
    // mean (0.75, 1, 0.25); prototypes p0 = (0.75, -0.5, -0.25), p1 = -p0
    // q centred (1.25, -1, -0.25): p0 . q = 1.5 > 0 -> class 0
    // r centred (-0.75, 2, 0.75): p0 . r = -1.75 < 0 -> class 1
    auto p = simpleshot_classify(ep);
    CHECK(p.y_pred() == std::vector<int>{0, 1});
    auto mean = support_mean(ep.support);
    CHECK(mean[0] == doctest::Approx(0.75));
    CHECK(mean[1] == doctest::Approx(1.0));
    CHECK(mean[2] == doctest::Approx(0.25));
    SimpleShotOptions raw{false};
    // uncentred: q=(2,0,0) is nearer (cosine) to (1.5,0.5,0) than to (0,1.5,0.5)
    CHECK(simpleshot_classify(ep, raw).y_pred()[0] == 0);
  }

  TEST_CASE("episodes: exact shots, no overlap, seeded") {
    CounterRng rng(9);
    auto train = labeled(testutil::random_set(rng, 30, 4), testutil::random_labels(rng, 30, 3), 3);
    auto q = labeled(testutil::random_set(rng, 5, 4, "q"), testutil::random_labels(rng, 5, 3), 3);
    auto a = sample_episode(train, q, 2, 77), b = sample_episode(train, q, 2, 77), c = sample_episode(train, q, 2, 78);
    CHECK(a.support.set.ids() == b.support.set.ids());
    CHECK(a.support.count() == 6);
    CHECK(c.support.count() == 6);
    CHECK_THROWS_AS(sample_episode(train, q, 100, 1), Error);
  }
}
