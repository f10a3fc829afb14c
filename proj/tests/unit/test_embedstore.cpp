#include <cmath>
#include <fstream>

#include "doctest.h"
#include "embench/embedstore.hpp"
#include "helpers.hpp"

using namespace embench;
using testutil::TempDir;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an embench::Error");
  return ErrorCode::kIo;
}

std::string le32(std::uint32_t v) {
  std::string s(4, '\0');
  for (int i = 0; i < 4; ++i) s[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  return s;
}

}  // namespace

TEST_SUITE("embedstore") {
  TEST_CASE("minimal EMB1 file") {
    std::string header = R"({"d":3,"ids":["x"],"n":1})";
    std::string bytes = "EMB1" + le32(static_cast<std::uint32_t>(header.size())) + header + std::string(12, '\0');
    auto set = decode_embeddings(bytes);
    CHECK(set.count() == 1);
    CHECK(set.dim() == 3);
    CHECK(set.row(0)[2] == 0.0f);
  }

  TEST_CASE("round trip of a random 7x5 matrix is bitwise identical") {
    TempDir dir;
    CounterRng rng(11);
    auto set = testutil::random_set(rng, 7, 5);
    write_embedding_file(dir.file("a.emb"), set);
    CHECK(read_embedding_file(dir.file("a.emb")) == set);
  }

  TEST_CASE("external ids come from the caller") {
    CounterRng rng(12);
    auto set = testutil::random_set(rng, 4, 2);
    auto bytes = encode_embeddings(set, true);
    CHECK(code_of([&] { decode_embeddings(bytes); }) == ErrorCode::kMissingIds);
    std::vector<std::string> ids{"a", "b", "c", "d"};
    auto back = decode_embeddings(bytes, &ids);
    CHECK(back.ids() == ids);
    std::vector<std::string> short_ids{"a"};
    CHECK(code_of([&] { decode_embeddings(bytes, &short_ids); }) == ErrorCode::kMissingIds);
  }

  TEST_CASE("truncated payload and bad magic are rejected") {
    std::string header = R"({"d":2,"ids":["a","b","c","d"],"n":4})";
    std::string bytes = "EMB1" + le32(static_cast<std::uint32_t>(header.size())) + header + std::string(3 * 2 * 4, '\0');
    CHECK(code_of([&] { decode_embeddings(bytes); }) == ErrorCode::kTruncated);
    CHECK(code_of([&] { decode_embeddings("EMBX" + bytes.substr(4)); }) == ErrorCode::kBadMagic);
    CHECK(code_of([&] { decode_embeddings("EMB1"); }) == ErrorCode::kTruncated);
  }

  TEST_CASE("container validation") {
    CHECK(code_of([] { EmbeddingSet({"a", "a"}, 1, {1.0f, 2.0f}); }) == ErrorCode::kDuplicateId);
    CHECK(code_of([] { EmbeddingSet({"a"}, 1, {NAN}); }) == ErrorCode::kNonFinite);
    CHECK(code_of([] { EmbeddingSet({"a"}, 2, {1.0f}); }) == ErrorCode::kShapeMismatch);
    EmbeddingSet s({"a", "b"}, 1, {1.0f, 2.0f});
    std::vector<std::string> want{"b", "a"};
    CHECK(s.subset(want).row(0)[0] == 2.0f);
    std::vector<std::string> unknown{"z"};
    CHECK(code_of([&] { s.subset(unknown); }) == ErrorCode::kMisaligned);
  }

  TEST_CASE("l2 normalization") {
    auto n = l2_normalize(EmbeddingSet({"a"}, 2, {3.0f, 4.0f}));
    CHECK(n.row(0)[0] == doctest::Approx(0.6));
    CHECK(n.row(0)[1] == doctest::Approx(0.8));
    auto again = l2_normalize(n);
    CHECK(std::abs(again.row(0)[0] - n.row(0)[0]) <= 1e-7);
    try {
      l2_normalize(EmbeddingSet({"zero"}, 2, {0.0f, 0.0f}));
      FAIL("expected zero-norm error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kZeroNorm);
      CHECK(std::string(e.what()).find("zero") != std::string::npos);
    }
  }

  TEST_CASE("token and mask files round trip") {
    TempDir dir;
    std::vector<float> tok(2 * 4 * 3);
    for (std::size_t i = 0; i < tok.size(); ++i) tok[i] = static_cast<float>(i) * 0.5f;
    TokenEmbeddingSet t({"p", "q"}, 2, 2, 3, tok);
    write_token_file(dir.file("t.emt"), t);
    auto tb = read_token_file(dir.file("t.emt"));
    CHECK(tb.grid_h() == 2);
    CHECK(tb.tokens() == 4);
    CHECK(std::equal(tb.data().begin(), tb.data().end(), tok.begin()));

    std::vector<std::uint8_t> m(2 * 8 * 8, 1);
    m[5] = 2;
    SegMaskSet ms({"p", "q"}, 8, 8, 3, 0, m);
    write_mask_file(dir.file("m.msk"), ms);
    auto mb = read_mask_file(dir.file("m.msk"));
    CHECK(mb.num_classes() == 3);
    CHECK(mb.mask(0)[5] == 2);
    CHECK(code_of([] { SegMaskSet({"p"}, 1, 1, 2, 0, {7}); }) == ErrorCode::kInvalidArgument);
  }

  TEST_CASE("manifest parsing and validation") {
    const char* text = R"({
      "name": "toy", "num_classes": 2, "magnification_band": "<20x", "organ_group": "breast",
      "splits": {"train": ["a", "b"], "test": ["c"]},
      "labels": {"a": 0, "b": 1, "c": 1}})";
    auto m = parse_manifest(text);
    m.validate();
    CHECK(m.class_band == ClassBand::kBinary);
    CHECK(m.magnification == MagnificationBand::kBelow20x);
    CHECK(m.split("train").size() == 2);
    auto again = parse_manifest(manifest_to_json(m));
    CHECK(again.labels == m.labels);

    EmbeddingSet all({"a", "b", "c"}, 1, {1.0f, 2.0f, 3.0f});
    auto train = make_labeled(all, m, "train");
    CHECK(train.labels == std::vector<int>{0, 1});
    CHECK(code_of([&] { make_labeled(all, m, "val"); }) == ErrorCode::kInvalidManifest);

    CHECK(code_of([] {
            parse_manifest(R"({"name": "x", "num_classes": 2, "magnification_band": "20-40x",
              "organ_group": "crc", "splits": {"train": ["a"]}, "labels": {"a": 5}})");
          }) == ErrorCode::kInvalidManifest);
    CHECK(code_of([] { parse_manifest(R"({"name": "x"})"); }) == ErrorCode::kInvalidManifest);
  }
}
