#ifndef ARS_DATA_HPP
#define ARS_DATA_HPP

// Corpus ingestion, vocabulary construction, batching, synthetic tasks.

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ars/common.hpp"

namespace ars {

constexpr int kPad = 0;
constexpr int kBos = 1;
constexpr int kEos = 2;
constexpr int kUnk = 3;
constexpr int kNumReserved = 4;

class Vocabulary {
 public:
  Vocabulary() {
    for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) add_token(t);
  }

  // Keeps the most frequent tokens up to max_size (reserved ids included in
  // the budget); frequency ties break lexicographically.
  static Vocabulary build(const std::vector<std::string>& lines,
                          std::size_t max_size) {
    if (max_size < kNumReserved)
      throw InputError("vocabulary: max_size must be >= 4");
    std::map<std::string, std::size_t> freq;
    bool any = false;
    for (const auto& line : lines) {
      std::istringstream is(line);
      std::string tok;
      while (is >> tok) {
        ++freq[tok];
        any = true;
      }
    }
    if (!any) throw InputError("vocabulary: empty corpus");
    std::vector<std::pair<std::string, std::size_t>> items(freq.begin(),
                                                           freq.end());
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) {
                       if (a.second != b.second) return a.second > b.second;
                       return a.first < b.first;
                     });
    Vocabulary v;
    for (const auto& [tok, n] : items) {
      (void)n;
      if (v.size() >= max_size) break;
      v.add_token(tok);
    }
    return v;
  }

  int add_token(const std::string& tok) {
    auto it = ids_.find(tok);
    if (it != ids_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    ids_.emplace(tok, id);
    tokens_.push_back(tok);
    return id;
  }

  int id(const std::string& tok) const {
    auto it = ids_.find(tok);
    return it == ids_.end() ? kUnk : it->second;
  }
  const std::string& token(int id) const {
    if (id < 0 || id >= static_cast<int>(tokens_.size()))
      throw InputError("vocabulary: id out of range");
    return tokens_[id];
  }
  std::size_t size() const { return tokens_.size(); }

  std::vector<int> encode(const std::string& line, bool append_eos) const {
    std::istringstream is(line);
    std::string tok;
    std::vector<int> out;
    while (is >> tok) out.push_back(id(tok));
    if (append_eos) out.push_back(kEos);
    return out;
  }
  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
      if (id == kEos || id == kPad) continue;
      if (!out.empty()) out += ' ';
      out += token(id);
    }
    return out;
  }

  // One token per line, line number = id - 4; reserved ids implicit.
  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IOError("cannot write vocabulary: " + path);
    for (std::size_t i = kNumReserved; i < tokens_.size(); ++i)
      os << tokens_[i] << '\n';
  }
  static Vocabulary load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IOError("cannot read vocabulary: " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(is, line))
      if (!line.empty()) v.add_token(line);
    return v;
  }

 private:
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> tokens_;
};

struct SentencePair {
  std::vector<int> source;  // ends in EOS
  std::vector<int> target;  // BOS ... EOS
};

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IOError("cannot read file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  return lines;
}

inline SentencePair encode_pair(const Vocabulary& src_vocab,
                                const Vocabulary& tgt_vocab,
                                const std::string& src_line,
                                const std::string& tgt_line) {
  SentencePair p;
  p.source = src_vocab.encode(src_line, true);
  p.target.push_back(kBos);
  for (int id : tgt_vocab.encode(tgt_line, true)) p.target.push_back(id);
  if (p.source.size() < 2 || p.target.size() < 3)
    throw InputError("empty sentence in corpus");
  return p;
}

enum class TaskKind { copy, reverse, agreement };

inline TaskKind task_from_string(const std::string& s) {
  if (s == "copy") return TaskKind::copy;
  if (s == "reverse") return TaskKind::reverse;
  if (s == "agreement") return TaskKind::agreement;
  throw InputError("unknown task: " + s);
}

// Synthetic sentence pairs over a closed vocabulary of plain integer ids.
// Content tokens occupy ids [4, vocab_size). For the agreement task the
// first quarter of the content ids (at least 2) are marker/partner pairs:
// marker 2k pairs with partner 2k+1. The target is marker + body + partner
// while the source carries only the body, so the partner token is
// predictable solely from target-side history — a pure long-range
// target-side dependency.
struct SyntheticTask {
  TaskKind kind;
  int vocab_size;
  int min_len, max_len;  // source content length, inclusive

  std::vector<SentencePair> generate(int n_pairs, std::uint64_t seed) const {
    if (vocab_size < 6) throw InputError("synthetic: vocab_size must be >= 6");
    if (min_len < 2 || max_len < min_len)
      throw InputError("synthetic: invalid length range");
    auto rng = substream(seed, "synthetic");
    const int content_lo = kNumReserved;
    const int content_hi = vocab_size;  // exclusive
    int n_marker_pairs = 0, body_lo = content_lo;
    if (kind == TaskKind::agreement) {
      n_marker_pairs = std::max(2, (content_hi - content_lo) / 8);
      body_lo = content_lo + 2 * n_marker_pairs;
      if (body_lo >= content_hi)
        throw InputError("synthetic: vocabulary too small for agreement task");
    }
    std::uniform_int_distribution<int> len_dist(min_len, max_len);
    std::uniform_int_distribution<int> tok_dist(body_lo, content_hi - 1);
    std::vector<SentencePair> out;
    out.reserve(n_pairs);
    for (int n = 0; n < n_pairs; ++n) {
      const int len = len_dist(rng);
      SentencePair p;
      std::vector<int> body;
      for (int i = 0; i < len; ++i) body.push_back(tok_dist(rng));
      switch (kind) {
        case TaskKind::copy:
          p.source = body;
          p.target = body;
          break;
        case TaskKind::reverse:
          p.source = body;
          p.target.assign(body.rbegin(), body.rend());
          break;
        case TaskKind::agreement: {
          std::uniform_int_distribution<int> mdist(0, n_marker_pairs - 1);
          const int k = mdist(rng);
          const int marker = content_lo + 2 * k;
          const int partner = marker + 1;
          p.source = body;
          p.target.push_back(marker);
          p.target.insert(p.target.end(), body.begin(), body.end());
          p.target.push_back(partner);
          break;
        }
      }
      p.source.push_back(kEos);
      p.target.insert(p.target.begin(), kBos);
      p.target.push_back(kEos);
      out.push_back(std::move(p));
    }
    return out;
  }

  // Identity vocabulary over the synthetic ids: token "t<k>" for id k.
  Vocabulary vocabulary() const {
    Vocabulary v;
    for (int k = kNumReserved; k < vocab_size; ++k)
      v.add_token("t" + std::to_string(k));
    return v;
  }
};

struct Batch {
  // row-major [batch, len]; PAD-filled
  std::vector<int> src, tgt;
  std::vector<float> src_mask, tgt_mask;  // 1 where not PAD
  int batch = 0, src_len = 0, tgt_len = 0;
};

// Shuffles with (seed, epoch) and yields fixed-size padded batches.
class BatchIterator {
 public:
  BatchIterator(std::vector<SentencePair> pairs, int batch_size,
                std::uint64_t seed)
      : pairs_(std::move(pairs)), batch_size_(batch_size), seed_(seed) {
    if (batch_size_ < 1) throw InputError("batch_size must be >= 1");
  }

  std::vector<Batch> epoch(int epoch_index) {
    std::vector<std::size_t> order(pairs_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto rng = substream(seed_, "shuffle/" + std::to_string(epoch_index));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Batch> batches;
    for (std::size_t pos = 0; pos < order.size(); pos += batch_size_) {
      const std::size_t n =
          std::min<std::size_t>(batch_size_, order.size() - pos);
      Batch b;
      b.batch = static_cast<int>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& p = pairs_[order[pos + i]];
        b.src_len = std::max(b.src_len, static_cast<int>(p.source.size()));
        b.tgt_len = std::max(b.tgt_len, static_cast<int>(p.target.size()));
      }
      b.src.assign(n * b.src_len, kPad);
      b.tgt.assign(n * b.tgt_len, kPad);
      b.src_mask.assign(n * b.src_len, 0.f);
      b.tgt_mask.assign(n * b.tgt_len, 0.f);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& p = pairs_[order[pos + i]];
        for (std::size_t j = 0; j < p.source.size(); ++j) {
          b.src[i * b.src_len + j] = p.source[j];
          b.src_mask[i * b.src_len + j] = 1.f;
        }
        for (std::size_t j = 0; j < p.target.size(); ++j) {
          b.tgt[i * b.tgt_len + j] = p.target[j];
          b.tgt_mask[i * b.tgt_len + j] = 1.f;
        }
      }
      batches.push_back(std::move(b));
    }
    return batches;
  }

  const std::vector<SentencePair>& pairs() const { return pairs_; }

 private:
  std::vector<SentencePair> pairs_;
  int batch_size_;
  std::uint64_t seed_;
};

inline Batch make_batch(const std::vector<SentencePair>& pairs) {
  BatchIterator it(pairs, static_cast<int>(pairs.size()), 0);
  // single batch, unshuffled order irrelevant for evaluation
  std::vector<Batch> bs = it.epoch(-1);
  return bs.at(0);
}

}  // namespace ars

#endif
