#include "ars/data.hpp"
#include "doctest.h"

using namespace ars;

TEST_CASE("vocabulary keeps most frequent tokens, ties lexicographic") {
  auto v = Vocabulary::build({"a b", "b c"}, 7);
  CHECK(v.size() == 7);
  CHECK(v.id("b") == 4);
  CHECK(v.id("a") == 5);
  CHECK(v.id("c") == 6);
}

TEST_CASE("vocabulary capacity exhausted by reserved ids") {
  auto v = Vocabulary::build({"x"}, 4);
  CHECK(v.size() == 4);
  CHECK(v.id("x") == kUnk);
}

TEST_CASE("vocabulary rejects empty corpus and tiny max_size") {
  CHECK_THROWS_AS(Vocabulary::build({"", "  "}, 10), InputError);
  CHECK_THROWS_AS(Vocabulary::build({"a"}, 3), InputError);
}

TEST_CASE("all emitted ids are below the vocabulary size") {
  std::vector<std::string> lines;
  for (int i = 0; i < 1000; ++i)
    lines.push_back("w" + std::to_string(i % 37) + " w" + std::to_string(i % 11));
  auto v = Vocabulary::build(lines, 20);
  for (const auto& l : lines)
    for (int id : v.encode(l, true))
      CHECK(id < static_cast<int>(v.size()));
}

TEST_CASE("encode/decode round-trips in-vocabulary sentences") {
  auto v = Vocabulary::build({"the cat sat", "the dog sat"}, 50);
  const std::string s = "the dog sat";
  CHECK(v.decode(v.encode(s, true)) == s);
}

TEST_CASE("vocabulary file round-trip") {
  auto v = Vocabulary::build({"the cat sat on the mat"}, 50);
  v.save("/tmp/ars_vocab_test.txt");
  auto w = Vocabulary::load("/tmp/ars_vocab_test.txt");
  CHECK(w.size() == v.size());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(w.token(i) == v.token(i));
}

TEST_CASE("synthetic copy and reverse tasks") {
  SyntheticTask copy{TaskKind::copy, 20, 3, 3};
  auto pairs = copy.generate(5, 1);
  for (const auto& p : pairs) {
    REQUIRE(p.source.size() == 4);  // 3 tokens + EOS
    REQUIRE(p.target.size() == 5);  // BOS + 3 tokens + EOS
  }
}

TEST_CASE("synthetic task shapes and definitions") {
  SyntheticTask copy{TaskKind::copy, 20, 3, 3};
  for (const auto& p : copy.generate(20, 1)) {
    CHECK(p.source.back() == kEos);
    CHECK(p.target.front() == kBos);
    CHECK(p.target.back() == kEos);
    // target = source
    std::vector<int> src(p.source.begin(), p.source.end() - 1);
    std::vector<int> tgt(p.target.begin() + 1, p.target.end() - 1);
    CHECK(src == tgt);
  }
  SyntheticTask rev{TaskKind::reverse, 20, 2, 5};
  for (const auto& p : rev.generate(20, 1)) {
    std::vector<int> src(p.source.begin(), p.source.end() - 1);
    std::vector<int> tgt(p.target.begin() + 1, p.target.end() - 1);
    std::reverse(src.begin(), src.end());
    CHECK(src == tgt);
  }
}

TEST_CASE("agreement task pairs a target-side marker with the final token") {
  SyntheticTask ag{TaskKind::agreement, 36, 4, 8};
  const int n_marker_pairs = std::max(2, (36 - kNumReserved) / 8);
  const int body_lo = kNumReserved + 2 * n_marker_pairs;
  for (const auto& p : ag.generate(50, 9)) {
    // target = BOS marker body partner EOS; source = body EOS
    const int marker = p.target[1];
    CHECK(marker >= kNumReserved);
    CHECK(marker < body_lo);
    CHECK((marker - kNumReserved) % 2 == 0);
    CHECK(p.target[p.target.size() - 2] == marker + 1);
    CHECK(p.target.size() == p.source.size() + 3);
    for (std::size_t i = 0; i + 1 < p.source.size(); ++i) {
      CHECK(p.source[i] >= body_lo);                // marker never in source
      CHECK(p.source[i] == p.target[i + 2]);        // body is copied
    }
  }
}

TEST_CASE("synthetic generation is reproducible by seed") {
  SyntheticTask t{TaskKind::agreement, 30, 2, 9};
  auto a = t.generate(100, 7);
  auto b = t.generate(100, 7);
  auto c = t.generate(100, 8);
  REQUIRE(a.size() == b.size());
  bool identical = true, differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    identical = identical && a[i].source == b[i].source && a[i].target == b[i].target;
    differs = differs || a[i].source != c[i].source;
  }
  CHECK(identical);
  CHECK(differs);
}

TEST_CASE("batch iterator sizes and masks") {
  SyntheticTask t{TaskKind::copy, 10, 3, 5};
  auto pairs = t.generate(5, 1);
  BatchIterator it(pairs, 2, 3);
  auto batches = it.epoch(0);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].batch == 2);
  CHECK(batches[1].batch == 2);
  CHECK(batches[2].batch == 1);
  for (const auto& b : batches)
    for (int i = 0; i < b.batch; ++i)
      for (int j = 0; j < b.src_len; ++j)
        CHECK((b.src_mask[i * b.src_len + j] != 0.f) ==
              (b.src[i * b.src_len + j] != kPad));
}

TEST_CASE("mixed-length batch pads the shorter row") {
  std::vector<SentencePair> pairs = {
      {{5, 6, kEos}, {kBos, 5, kEos}},
      {{5, 6, 7, 8, kEos}, {kBos, 5, 6, 7, kEos}},
  };
  auto b = make_batch(pairs);
  CHECK(b.src_len == 5);
  int pad_masked = 0;
  for (int i = 0; i < b.batch; ++i)
    for (int j = 0; j < b.src_len; ++j)
      if (b.src_mask[i * b.src_len + j] == 0.f) ++pad_masked;
  CHECK(pad_masked == 2);
}

TEST_CASE("equal-length batch has an all-ones mask") {
  SyntheticTask t{TaskKind::copy, 10, 4, 4};
  auto b = make_batch(t.generate(3, 2));
  for (float m : b.src_mask) CHECK(m == 1.f);
  for (float m : b.tgt_mask) CHECK(m == 1.f);
}
