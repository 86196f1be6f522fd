#ifndef ARS_INFERENCE_HPP
#define ARS_INFERENCE_HPP

// Greedy and beam decoding with full attention tracing, plus the trace
// file format:
//   SENT <id> <n> <m>
//   <emitted tokens>
//   n lines of m source-attention values
//   n lines of target-attention values (row t has t values; absent for
//   variants without target-side attention)
//   blank line

#include <fstream>
#include <iomanip>
#include <sstream>

#include "ars/model.hpp"

namespace ars {

struct AttentionTrace {
  std::vector<std::string> tokens;             // emitted target tokens
  std::vector<std::vector<double>> source;     // n rows of m
  std::vector<std::vector<double>> target;     // row t has t entries
};

struct Hypothesis {
  std::vector<int> tokens;  // emitted ids, EOS included when produced
  double logprob = 0;
  AttentionTrace trace;
};

namespace detail {

template <class T>
std::vector<double> row_of(const Tensor<T>& t) {
  std::vector<double> out(t.numel());
  for (std::size_t i = 0; i < t.numel(); ++i)
    out[i] = static_cast<double>(t.values()[i]);
  return out;
}

// Target-attention rows always have t entries at step t. The residual
// variants attend y_0..y_{t-1} directly; the hidden-state variants attend
// s_1..s_{t-1}, stored in slots 1..t-1 with slot 0 (BOS) zero. An empty
// history degenerates to all mass in the only slot.
template <class T>
std::vector<double> target_row(const StepOutput<T>& out, Variant v, int t) {
  std::vector<double> row(t, 0.0);
  if (v == Variant::mean_residual || v == Variant::attn_residual) {
    for (int i = 0; i < t; ++i)
      row[i] = static_cast<double>(out.tgt_alpha.values()[i]);
  } else {
    if (!out.tgt_alpha.defined()) {
      row[t - 1] = 1.0;
    } else {
      for (std::size_t i = 0; i < out.tgt_alpha.numel(); ++i)
        row[i + 1] = static_cast<double>(out.tgt_alpha.values()[i]);
    }
  }
  return row;
}

}  // namespace detail

template <class T>
Hypothesis greedy_decode(const ModelParams<T>& p, const std::vector<int>& source,
                         int max_len) {
  if (max_len < 1) throw InputError("greedy_decode: max_len must be >= 1");
  auto enc = encode(p, source, std::vector<T>(source.size(), T(1)), 1,
                    static_cast<int>(source.size()));
  auto st = DecoderState<T>::init(1, p.spec.hidden_dim);
  Hypothesis hyp;
  int prev = kBos;
  const bool tatt = has_target_attention(p.spec.variant);
  for (int t = 1; t <= max_len; ++t) {
    auto out = decoder_step(p, st, {prev}, &enc);
    const auto& lp = out.logp.values();
    int best = 0;
    for (int j = 1; j < p.spec.tgt_vocab; ++j)
      if (lp[j] > lp[best]) best = j;
    hyp.tokens.push_back(best);
    hyp.logprob += static_cast<double>(lp[best]);
    hyp.trace.source.push_back(detail::row_of(out.src_alpha));
    if (tatt) hyp.trace.target.push_back(detail::target_row(out, p.spec.variant, t));
    if (best == kEos) break;
    prev = best;
  }
  return hyp;
}

// Standard beam search over accumulated log-probabilities; finished
// hypotheses score logprob / length^exponent. beam=1 matches greedy exactly.
template <class T>
Hypothesis beam_decode(const ModelParams<T>& p, const std::vector<int>& source,
                       int beam, int max_len, double length_norm = 1.0) {
  if (beam < 1) throw InputError("beam_decode: beam must be >= 1");
  if (beam == 1) return greedy_decode(p, source, max_len);
  auto enc = encode(p, source, std::vector<T>(source.size(), T(1)), 1,
                    static_cast<int>(source.size()));
  const bool tatt = has_target_attention(p.spec.variant);

  struct Live {
    DecoderState<T> st;
    Hypothesis hyp;
    int prev = kBos;
  };
  std::vector<Live> live(1);
  live[0].st = DecoderState<T>::init(1, p.spec.hidden_dim);
  std::vector<Hypothesis> finished;
  auto final_score = [&](const Hypothesis& h) {
    return h.logprob / std::pow(static_cast<double>(h.tokens.size()), length_norm);
  };

  for (int t = 1; t <= max_len && !live.empty(); ++t) {
    struct Cand {
      std::size_t parent;
      int token;
      double logprob;
      StepOutput<T> out;
    };
    std::vector<Cand> cands;
    std::vector<StepOutput<T>> outs(live.size());
    for (std::size_t i = 0; i < live.size(); ++i) {
      outs[i] = decoder_step(p, live[i].st, {live[i].prev}, &enc);
      const auto& lp = outs[i].logp.values();
      // top-beam tokens of this row
      std::vector<int> idx(p.spec.tgt_vocab);
      for (int j = 0; j < p.spec.tgt_vocab; ++j) idx[j] = j;
      std::partial_sort(idx.begin(), idx.begin() + std::min(beam, p.spec.tgt_vocab),
                        idx.end(), [&](int a, int b) {
                          if (lp[a] != lp[b]) return lp[a] > lp[b];
                          return a < b;
                        });
      for (int k = 0; k < std::min(beam, p.spec.tgt_vocab); ++k)
        cands.push_back({i, idx[k],
                         live[i].hyp.logprob + static_cast<double>(lp[idx[k]]),
                         outs[i]});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) { return a.logprob > b.logprob; });
    std::vector<Live> next;
    for (const auto& c : cands) {
      if (static_cast<int>(next.size()) >= beam) break;
      Live nl = live[c.parent];  // shares tensors; histories copied by value
      nl.hyp.tokens.push_back(c.token);
      nl.hyp.logprob = c.logprob;
      nl.hyp.trace.source.push_back(detail::row_of(c.out.src_alpha));
      if (tatt)
        nl.hyp.trace.target.push_back(detail::target_row(c.out, p.spec.variant, t));
      // decoder_step already advanced live[c.parent].st once per step; the
      // state is identical for all candidates of one parent
      if (c.token == kEos) {
        finished.push_back(nl.hyp);
        continue;
      }
      nl.prev = c.token;
      next.push_back(std::move(nl));
    }
    live = std::move(next);
  }
  for (auto& l : live) finished.push_back(l.hyp);
  if (finished.empty()) throw ContractError("beam_decode: no hypothesis");
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i)
    if (final_score(finished[i]) > final_score(finished[best])) best = i;
  return finished[best];
}

inline void export_traces(const std::vector<AttentionTrace>& traces,
                          std::ostream& os) {
  os << "ARS-TRACES 1\n";
  os << std::setprecision(6);
  int id = 0;
  for (const auto& tr : traces) {
    const int n = static_cast<int>(tr.source.size());
    const int m = n ? static_cast<int>(tr.source[0].size()) : 0;
    os << "SENT " << id++ << ' ' << n << ' ' << m << '\n';
    for (int i = 0; i < n; ++i) os << (i ? " " : "") << tr.tokens[i];
    os << '\n';
    for (const auto& row : tr.source) {
      for (std::size_t j = 0; j < row.size(); ++j) os << (j ? " " : "") << row[j];
      os << '\n';
    }
    for (const auto& row : tr.target) {
      for (std::size_t j = 0; j < row.size(); ++j) os << (j ? " " : "") << row[j];
      os << '\n';
    }
    os << '\n';
  }
}

inline void export_traces(const std::vector<AttentionTrace>& traces,
                          const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IOError("cannot write traces: " + path);
  export_traces(traces, os);
  if (!os) throw IOError("trace write failed: " + path);
}

inline std::vector<AttentionTrace> parse_traces(std::istream& is) {
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw ParseError("traces line " + std::to_string(lineno) + ": " + msg);
  };
  if (!std::getline(is, line) || line != "ARS-TRACES 1") {
    lineno = 1;
    fail("missing header");
  }
  ++lineno;
  std::vector<AttentionTrace> out;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream hs(line);
    std::string tag;
    int id, n, m;
    if (!(hs >> tag >> id >> n >> m) || tag != "SENT") fail("expected SENT header");
    AttentionTrace tr;
    if (!std::getline(is, line)) fail("missing token line");
    ++lineno;
    {
      std::istringstream ts(line);
      std::string tok;
      while (ts >> tok) tr.tokens.push_back(tok);
    }
    if (static_cast<int>(tr.tokens.size()) != n) fail("token count mismatch");
    for (int i = 0; i < n; ++i) {
      if (!std::getline(is, line)) fail("missing source-attention row");
      ++lineno;
      std::istringstream rs(line);
      std::vector<double> row;
      double x;
      while (rs >> x) row.push_back(x);
      if (static_cast<int>(row.size()) != m) fail("source row width mismatch");
      tr.source.push_back(std::move(row));
    }
    // target block is optional; n rows of widths 1..n when present
    std::streampos mark = is.tellg();
    int mark_lineno = lineno;
    bool has_target = false;
    if (std::getline(is, line)) {
      ++lineno;
      if (!line.empty() && line.rfind("SENT", 0) != 0) {
        has_target = true;
        is.seekg(mark);
        lineno = mark_lineno;
      } else {
        is.seekg(mark);
        lineno = mark_lineno;
      }
    }
    if (has_target) {
      for (int t = 1; t <= n; ++t) {
        if (!std::getline(is, line)) fail("missing target-attention row");
        ++lineno;
        std::istringstream rs(line);
        std::vector<double> row;
        double x;
        while (rs >> x) row.push_back(x);
        if (static_cast<int>(row.size()) != t) fail("target row width mismatch");
        tr.target.push_back(std::move(row));
      }
    }
    out.push_back(std::move(tr));
  }
  return out;
}

inline std::vector<AttentionTrace> parse_traces(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IOError("cannot read traces: " + path);
  return parse_traces(is);
}

}  // namespace ars

#endif
