#ifndef ARS_EVALUATION_HPP
#define ARS_EVALUATION_HPP

// BLEU (multi-bleu behavior, no smoothing), token accuracy, perplexity,
// and the max-attention relative-position histogram.

#include <map>
#include <unordered_map>

#include "ars/inference.hpp"
#include "ars/train.hpp"

namespace ars {

struct BleuReport {
  double precision[4] = {0, 0, 0, 0};
  double brevity_penalty = 0;
  double bleu = 0;
};

// Corpus-level clipped modified n-gram precision up to order 4,
// BP = min(1, exp(1 - ref_len/hyp_len)); any zero precision zeroes BLEU.
inline BleuReport bleu(const std::vector<std::vector<int>>& hyps,
                       const std::vector<std::vector<int>>& refs) {
  if (hyps.empty() || hyps.size() != refs.size())
    throw InputError("bleu: empty corpus or length mismatch");
  long match[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  long hyp_len = 0, ref_len = 0;
  auto key = [](const std::vector<int>& s, std::size_t i, int n) {
    std::string k;
    for (int j = 0; j < n; ++j) k += std::to_string(s[i + j]) + ",";
    return k;
  };
  for (std::size_t si = 0; si < hyps.size(); ++si) {
    const auto& h = hyps[si];
    const auto& r = refs[si];
    hyp_len += static_cast<long>(h.size());
    ref_len += static_cast<long>(r.size());
    for (int n = 1; n <= 4; ++n) {
      if (static_cast<int>(h.size()) < n) continue;
      std::unordered_map<std::string, long> rcount;
      if (static_cast<int>(r.size()) >= n)
        for (std::size_t i = 0; i + n <= r.size(); ++i) ++rcount[key(r, i, n)];
      std::unordered_map<std::string, long> hcount;
      for (std::size_t i = 0; i + n <= h.size(); ++i) ++hcount[key(h, i, n)];
      for (const auto& [k, c] : hcount) {
        total[n - 1] += c;
        auto it = rcount.find(k);
        if (it != rcount.end()) match[n - 1] += std::min(c, it->second);
      }
    }
  }
  BleuReport rep;
  rep.brevity_penalty =
      hyp_len >= ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) / hyp_len);
  double log_sum = 0;
  bool zero = false;
  for (int n = 0; n < 4; ++n) {
    rep.precision[n] =
        total[n] ? static_cast<double>(match[n]) / total[n] : 0.0;
    if (rep.precision[n] <= 0)
      zero = true;
    else
      log_sum += std::log(rep.precision[n]);
  }
  rep.bleu = zero ? 0.0 : rep.brevity_penalty * std::exp(log_sum / 4.0);
  return rep;
}

// Position-wise match fraction over max(len) per pair, averaged over pairs.
inline double token_accuracy(const std::vector<std::vector<int>>& hyps,
                             const std::vector<std::vector<int>>& refs) {
  if (hyps.size() != refs.size())
    throw InputError("token_accuracy: length mismatch");
  if (hyps.empty()) return 0.0;
  double acc = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto& h = hyps[i];
    const auto& r = refs[i];
    const std::size_t n = std::max(h.size(), r.size());
    if (n == 0) {
      acc += 1.0;
      continue;
    }
    long ok = 0;
    for (std::size_t j = 0; j < std::min(h.size(), r.size()); ++j)
      if (h[j] == r[j]) ++ok;
    acc += static_cast<double>(ok) / static_cast<double>(n);
  }
  return acc / static_cast<double>(hyps.size());
}

// exp(total NLL / total tokens) by teacher forcing.
template <class T>
double perplexity(const ModelParams<T>& p, const std::vector<SentencePair>& corpus,
                  int batch_size = 64) {
  auto stats = evaluate(p, corpus, batch_size);
  return std::exp(stats.loss_per_token);
}

struct PositionHistogram {
  // relative position (-1, -2, ...) -> normalized frequency, sums to 1
  std::map<int, double> freq;
};

// For each prediction step, the relative position (index - t) of the
// maximally attended previous slot; ties break toward the most recent
// position. Counts are divided by the number of opportunities for each
// position, then renormalized.
inline PositionHistogram max_attention_histogram(
    const std::vector<AttentionTrace>& traces) {
  std::map<int, long> count;
  std::map<int, long> opportunity;
  bool any = false;
  for (const auto& tr : traces) {
    if (tr.target.empty())
      throw ContractError("histogram: trace has no target attention");
    for (std::size_t ti = 0; ti < tr.target.size(); ++ti) {
      const auto& row = tr.target[ti];
      const int t = static_cast<int>(row.size());
      int best = t - 1;
      for (int j = t - 2; j >= 0; --j)
        if (row[j] > row[best]) best = j;
      ++count[best - t];
      for (int k = 1; k <= t; ++k) ++opportunity[-k];
      any = true;
    }
  }
  PositionHistogram h;
  if (!any) return h;
  double sum = 0;
  for (const auto& [pos, c] : count) {
    const double f = static_cast<double>(c) / opportunity.at(pos);
    h.freq[pos] = f;
    sum += f;
  }
  for (auto& [pos, f] : h.freq) f /= sum;
  return h;
}

inline void write_histogram(const PositionHistogram& h, std::ostream& os) {
  for (auto it = h.freq.rbegin(); it != h.freq.rend(); ++it)
    os << it->first << '\t' << it->second << '\n';
}

}  // namespace ars

#endif
