#include <random>
#include <sstream>

#include "ars/evaluation.hpp"
#include "doctest.h"

using namespace ars;

TEST_CASE("identical corpus scores BLEU 1") {
  std::vector<std::vector<int>> c = {{4, 5, 6, 7, 8}, {9, 10, 11, 12}};
  auto r = bleu(c, c);
  for (int n = 0; n < 4; ++n) CHECK(r.precision[n] == doctest::Approx(1.0));
  CHECK(r.brevity_penalty == doctest::Approx(1.0));
  CHECK(r.bleu == doctest::Approx(1.0));
}

TEST_CASE("clipping caps repeated unigrams") {
  // hyp: seven times "the"; ref mentions it twice -> p1 = 2/7, p2 = 0.
  std::vector<std::vector<int>> hyp = {{4, 4, 4, 4, 4, 4, 4}};
  std::vector<std::vector<int>> ref = {{4, 5, 6, 7, 4, 8}};
  auto r = bleu(hyp, ref);
  CHECK(r.precision[0] == doctest::Approx(2.0 / 7.0));
  CHECK(r.precision[1] == 0.0);
  CHECK(r.bleu == 0.0);  // a zero precision zeroes BLEU, no smoothing
}

TEST_CASE("brevity penalty for a short perfect prefix") {
  std::vector<std::vector<int>> hyp = {{4, 5, 6, 7}};
  std::vector<std::vector<int>> ref = {{4, 5, 6, 7, 8}};
  auto r = bleu(hyp, ref);
  for (int n = 0; n < 4; ++n) CHECK(r.precision[n] == doctest::Approx(1.0));
  CHECK(r.brevity_penalty == doctest::Approx(std::exp(1.0 - 5.0 / 4.0)));
  CHECK(r.bleu == doctest::Approx(std::exp(-0.25)));
}

TEST_CASE("corpus-level counts pool across sentences") {
  std::vector<std::vector<int>> hyp = {{1, 2, 3, 4, 5}, {1, 1, 2, 2}};
  std::vector<std::vector<int>> ref = {{1, 2, 3, 4, 5}, {1, 2, 2, 3}};
  auto r = bleu(hyp, ref);
  CHECK(r.precision[0] == doctest::Approx(8.0 / 9.0));
  CHECK(r.precision[1] == doctest::Approx(6.0 / 7.0));
  CHECK(r.precision[2] == doctest::Approx(4.0 / 5.0));
  CHECK(r.precision[3] == doctest::Approx(2.0 / 3.0));
  CHECK(r.brevity_penalty == doctest::Approx(1.0));
  CHECK(r.bleu == doctest::Approx(std::pow(
            (8.0 / 9.0) * (6.0 / 7.0) * (4.0 / 5.0) * (2.0 / 3.0), 0.25)));
}

TEST_CASE("bleu input validation") {
  CHECK_THROWS_AS(bleu({}, {}), InputError);
  CHECK_THROWS_AS(bleu({{1}}, {{1}, {2}}), InputError);
}

TEST_CASE("token accuracy averages positionwise matches over max length") {
  std::vector<std::vector<int>> hyp = {{1, 2, 3}, {7}};
  std::vector<std::vector<int>> ref = {{1, 4, 3, 5}, {7}};
  CHECK(token_accuracy(hyp, ref) == doctest::Approx(0.5 * (2.0 / 4.0 + 1.0)));
  CHECK(token_accuracy({}, {}) == 0.0);
  CHECK_THROWS_AS(token_accuracy({{1}}, {}), InputError);
}

TEST_CASE("a zero-weight model is uniform: perplexity equals vocabulary size") {
  ModelSpec m;
  m.embed_dim = 4;
  m.hidden_dim = 5;
  m.src_vocab = 9;
  m.tgt_vocab = 13;
  auto p = init_params<double>(m, 0.0, 1);  // all parameters zero
  std::vector<SentencePair> corpus = {
      {{5, 6, kEos}, {kBos, 4, 5, kEos}},
      {{7, kEos}, {kBos, 8, kEos}},
  };
  CHECK(perplexity(p, corpus) == doctest::Approx(13.0).epsilon(1e-9));
}

TEST_CASE("perplexity matches exp of the evaluated loss") {
  ModelSpec m;
  m.embed_dim = 4;
  m.hidden_dim = 5;
  m.src_vocab = 9;
  m.tgt_vocab = 9;
  auto p = init_params<double>(m, 0.1, 2);
  std::vector<SentencePair> corpus = {{{5, 6, kEos}, {kBos, 4, 5, kEos}}};
  auto stats = evaluate(p, corpus, 4);
  CHECK(perplexity(p, corpus, 4) ==
        doctest::Approx(std::exp(stats.loss_per_token)).epsilon(1e-12));
}

TEST_CASE("histogram worked example with opportunity normalization") {
  AttentionTrace tr;
  tr.tokens = {"a", "b", "c"};
  tr.source = {{1}, {1}, {1}};
  tr.target = {{1.0}, {0.2, 0.8}, {0.5, 0.3, 0.2}};
  auto h = max_attention_histogram({tr});
  // argmax positions: -1, -1, -3; opportunities: -1:3, -2:2, -3:1
  // raw: f(-1)=2/3, f(-3)=1 -> normalized 0.4 and 0.6
  REQUIRE(h.freq.size() == 2);
  CHECK(h.freq.at(-1) == doctest::Approx(0.4));
  CHECK(h.freq.at(-3) == doctest::Approx(0.6));
  CHECK(h.freq.count(-2) == 0);
}

TEST_CASE("histogram ties break toward the most recent position") {
  AttentionTrace tr;
  tr.tokens = {"a", "b"};
  tr.source = {{1}, {1}};
  tr.target = {{1.0}, {0.5, 0.5}};
  auto h = max_attention_histogram({tr});
  REQUIRE(h.freq.size() == 1);
  CHECK(h.freq.at(-1) == doctest::Approx(1.0));
}

TEST_CASE("histogram frequencies sum to one over multiple traces") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<AttentionTrace> traces;
  for (int s = 0; s < 20; ++s) {
    AttentionTrace tr;
    const int n = 1 + static_cast<int>(rng() % 6);
    for (int t = 1; t <= n; ++t) {
      tr.tokens.push_back("w");
      tr.source.push_back({1.0});
      std::vector<double> row(t);
      for (auto& x : row) x = ud(rng);
      tr.target.push_back(row);
    }
    traces.push_back(tr);
  }
  auto h = max_attention_histogram(traces);
  double sum = 0;
  for (const auto& [pos, f] : h.freq) {
    CHECK(pos <= -1);
    CHECK(f >= 0.0);
    sum += f;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("iid attention over fixed-width rows gives a flat histogram") {
  // every step has exactly 6 slots, so each relative position is equally
  // likely to host the argmax and normalized frequencies approach 1/6
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<AttentionTrace> traces;
  AttentionTrace tr;
  for (int s = 0; s < 6000; ++s) {
    tr.tokens.push_back("w");
    tr.source.push_back({1.0});
    std::vector<double> row(6);
    for (auto& x : row) x = ud(rng);
    tr.target.push_back(row);
  }
  auto h = max_attention_histogram({tr});
  REQUIRE(h.freq.size() == 6);
  for (const auto& [pos, f] : h.freq)
    CHECK(f == doctest::Approx(1.0 / 6).epsilon(0.1));
}

TEST_CASE("histogram rejects traces without target attention") {
  AttentionTrace tr;
  tr.tokens = {"a"};
  tr.source = {{1.0}};
  CHECK_THROWS_AS(max_attention_histogram({tr}), ContractError);
}

TEST_CASE("histogram writer emits most recent position first") {
  PositionHistogram h;
  h.freq[-1] = 0.4;
  h.freq[-3] = 0.6;
  std::ostringstream os;
  write_histogram(h, os);
  CHECK(os.str() == "-1\t0.4\n-3\t0.6\n");
}
