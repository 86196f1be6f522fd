#ifndef ARS_MODEL_HPP
#define ARS_MODEL_HPP

// GRU encoder-decoder with source attention and five target-side-context
// decoder variants:
//   baseline         g(s_t, y_{t-1}, c_t)
//   mean_residual    g(s_t, d_t) with d_t = mean of y_0..y_{t-1}
//   attn_residual    g(s_t, d_t) with d_t an attention-weighted mean of
//                    y_0..y_{t-1} (content or content+scope scoring)
//   memory_rnn       recurrence driven by an attention summary of previous
//                    decoder hiddens
//   self_attentive_rnn  output conditioned on an attention summary of
//                    previous decoder hiddens
// In LM mode the encoder and source attention are absent and c_t = 0.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ars/data.hpp"
#include "ars/tensor.hpp"

namespace ars {

enum class Variant { baseline, memory_rnn, self_attentive_rnn, mean_residual, attn_residual };
enum class Scoring { content, content_scope };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::memory_rnn: return "memory-rnn";
    case Variant::self_attentive_rnn: return "self-attn-rnn";
    case Variant::mean_residual: return "mean-residual";
    case Variant::attn_residual: return "attn-residual";
  }
  throw ContractError("unknown variant");
}
inline Variant variant_from_string(const std::string& s) {
  if (s == "baseline") return Variant::baseline;
  if (s == "memory-rnn") return Variant::memory_rnn;
  if (s == "self-attn-rnn") return Variant::self_attentive_rnn;
  if (s == "mean-residual") return Variant::mean_residual;
  if (s == "attn-residual") return Variant::attn_residual;
  throw InputError("unknown decoder variant: " + s);
}
inline std::string to_string(Scoring s) {
  return s == Scoring::content ? "content" : "content+scope";
}
inline Scoring scoring_from_string(const std::string& s) {
  if (s == "content") return Scoring::content;
  if (s == "content+scope") return Scoring::content_scope;
  throw InputError("unknown scoring function: " + s);
}

inline bool has_target_attention(Variant v) {
  return v != Variant::baseline;
}

struct ModelSpec {
  Variant variant = Variant::baseline;
  Scoring scoring = Scoring::content;
  int embed_dim = 32;   // e
  int hidden_dim = 64;  // d
  int src_vocab = 0;    // 0 in LM mode
  int tgt_vocab = 0;
  bool lm_mode = false;
};

template <class T>
struct ModelParams {
  ModelSpec spec;
  std::map<std::string, Tensor<T>> tensors;  // ordered, deterministic

  Tensor<T>& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ContractError("no parameter: " + name);
    return it->second;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ContractError("no parameter: " + name);
    return it->second;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors) n += t.numel();
    return n;
  }
  void set_requires_grad(bool b) {
    for (auto& [name, t] : tensors) t.set_requires_grad(b);
  }
  void zero_grad() {
    for (auto& [name, t] : tensors) t.zero_grad();
  }
};

// Enumerates every tensor of a variant as (name, shape). Weight matrices are
// stored [in, out] so activations multiply on the left.
inline std::vector<std::pair<std::string, std::vector<int>>> param_layout(
    const ModelSpec& m) {
  const int e = m.embed_dim, d = m.hidden_dim;
  if (e <= 0 || d <= 0) throw InputError("dims must be positive");
  std::vector<std::pair<std::string, std::vector<int>>> out;
  auto add = [&](const std::string& n, std::vector<int> s) {
    out.emplace_back(n, std::move(s));
  };
  add("tgt_embed", {m.tgt_vocab, e});
  if (!m.lm_mode) {
    add("src_embed", {m.src_vocab, e});
    for (const char* dir : {"enc_fwd", "enc_bwd"}) {
      std::string p(dir);
      add(p + ".Wx", {e, 3 * d});
      add(p + ".Wh_zr", {d, 2 * d});
      add(p + ".Wh_c", {d, d});
      add(p + ".b", {1, 3 * d});
    }
    add("satt.W", {d, d});
    add("satt.U", {2 * d, d});
    add("satt.v", {d, 1});
  }
  const int dec_in = m.lm_mode ? e : e + 2 * d;
  add("dec.Wx", {dec_in, 3 * d});
  add("dec.Wh_zr", {d, 2 * d});
  add("dec.Wh_c", {d, d});
  add("dec.b", {1, 3 * d});
  add("out.Ls", {d, e});
  add("out.Ld", {e, e});
  if (!m.lm_mode) add("out.Lc", {2 * d, e});
  add("out.b", {1, e});
  add("out.W", {e, m.tgt_vocab});
  add("out.bw", {1, m.tgt_vocab});
  switch (m.variant) {
    case Variant::baseline:
    case Variant::mean_residual:
      break;
    case Variant::attn_residual:
      add("tatt.Wy", {e, e});
      add("tatt.v", {e, 1});
      if (m.scoring == Scoring::content_scope) add("tatt.Ws", {d, e});
      break;
    case Variant::memory_rnn:
      add("matt.Ws", {d, d});
      add("matt.Wy", {e, d});
      add("matt.Wt", {d, d});
      add("matt.v", {d, 1});
      break;
    case Variant::self_attentive_rnn:
      add("hatt.W1", {d, d});
      add("hatt.W2", {d, d});
      add("hatt.v", {d, 1});
      add("out.Lm", {d, e});
      break;
  }
  return out;
}

inline std::size_t param_count(const ModelSpec& m) {
  std::size_t n = 0;
  for (const auto& [name, shape] : param_layout(m)) {
    (void)name;
    std::size_t sz = 1;
    for (int dd : shape) sz *= static_cast<std::size_t>(dd);
    n += sz;
  }
  return n;
}

// weights ~ init_scale * N(0,1); biases zero; deterministic per seed
template <class T>
ModelParams<T> init_params(const ModelSpec& m, double init_scale,
                           std::uint64_t seed) {
  ModelParams<T> p;
  p.spec = m;
  auto rng = substream(seed, "init");
  std::normal_distribution<double> nd(0.0, 1.0);
  for (const auto& [name, shape] : param_layout(m)) {
    std::size_t sz = 1;
    for (int dd : shape) sz *= static_cast<std::size_t>(dd);
    std::vector<T> v(sz, T(0));
    const bool is_bias = name.find(".b") != std::string::npos;
    if (!is_bias)
      for (auto& x : v) x = static_cast<T>(init_scale * nd(rng));
    p.tensors.emplace(name, Tensor<T>::make(shape, std::move(v)));
  }
  return p;
}

// One GRU step: x:[B,in], h:[B,d] -> [B,d]
template <class T>
Tensor<T> gru_step(const Tensor<T>& x, const Tensor<T>& h, const Tensor<T>& Wx,
                   const Tensor<T>& Wh_zr, const Tensor<T>& Wh_c,
                   const Tensor<T>& b) {
  const int d = Wh_c.cols();
  auto a = add_bias(matmul(x, Wx), b);
  auto hzr = matmul(h, Wh_zr);
  auto z = sigmoid_(add(slice_cols(a, 0, d), slice_cols(hzr, 0, d)));
  auto r = sigmoid_(add(slice_cols(a, d, d), slice_cols(hzr, d, d)));
  auto c = tanh_(add(slice_cols(a, 2 * d, d), matmul(mul(r, h), Wh_c)));
  return add(mul(z, c), mul(one_minus(z), h));
}

// Dropout hook: identity by default; the training loop installs a mask
// sampler. Sites: encoder outputs, s_t before the output layer, summaries.
template <class T>
struct DropoutFn {
  std::function<Tensor<T>(const Tensor<T>&)> apply;
  Tensor<T> operator()(const Tensor<T>& x) const {
    return apply ? apply(x) : x;
  }
};

template <class T>
struct EncoderStates {
  std::vector<Tensor<T>> h;    // per source position, [B,2d]
  std::vector<Tensor<T>> Uh;   // cached satt.U * h_i, [B,d]
  Tensor<T> mask;              // [B,m] of 0/1
  int batch = 0, src_len = 0;
};

// Bidirectional GRU encoder; masked positions keep the previous hidden so
// PAD never leaks into real tokens.
template <class T>
EncoderStates<T> encode(const ModelParams<T>& p, const std::vector<int>& src,
                        const std::vector<T>& src_mask, int batch, int src_len,
                        const DropoutFn<T>& drop = {}) {
  if (p.spec.lm_mode) throw ContractError("encode: model is in LM mode");
  const int d = p.spec.hidden_dim;
  EncoderStates<T> enc;
  enc.batch = batch;
  enc.src_len = src_len;
  enc.mask = Tensor<T>::make({batch, src_len}, src_mask);

  std::vector<Tensor<T>> emb(src_len);
  std::vector<Tensor<T>> mcol(src_len);
  for (int i = 0; i < src_len; ++i) {
    std::vector<int> ids(batch);
    std::vector<T> mk(batch);
    for (int bi = 0; bi < batch; ++bi) {
      ids[bi] = src[bi * src_len + i];
      mk[bi] = src_mask[bi * src_len + i];
    }
    emb[i] = embedding_lookup(p.at("src_embed"), ids);
    mcol[i] = Tensor<T>::make({batch, 1}, std::move(mk));
  }
  auto masked_step = [&](const Tensor<T>& hnew, const Tensor<T>& hprev,
                         const Tensor<T>& m) {
    return add(cmul_bcast(m, hnew), cmul_bcast(one_minus(m), hprev));
  };
  std::vector<Tensor<T>> fwd(src_len), bwd(src_len);
  auto hf = Tensor<T>::zeros({batch, d});
  for (int i = 0; i < src_len; ++i) {
    auto hn = gru_step(emb[i], hf, p.at("enc_fwd.Wx"), p.at("enc_fwd.Wh_zr"),
                       p.at("enc_fwd.Wh_c"), p.at("enc_fwd.b"));
    hf = masked_step(hn, hf, mcol[i]);
    fwd[i] = hf;
  }
  auto hb = Tensor<T>::zeros({batch, d});
  for (int i = src_len - 1; i >= 0; --i) {
    auto hn = gru_step(emb[i], hb, p.at("enc_bwd.Wx"), p.at("enc_bwd.Wh_zr"),
                       p.at("enc_bwd.Wh_c"), p.at("enc_bwd.b"));
    hb = masked_step(hn, hb, mcol[i]);
    bwd[i] = hb;
  }
  enc.h.resize(src_len);
  enc.Uh.resize(src_len);
  for (int i = 0; i < src_len; ++i) {
    enc.h[i] = drop(concat_cols<T>({fwd[i], bwd[i]}));
    enc.Uh[i] = matmul(enc.h[i], p.at("satt.U"));
  }
  return enc;
}

// Bahdanau-style source attention queried with s_{t-1}:
// e_i = v' tanh(W s + U h_i); returns (c_t:[B,2d], alpha:[B,m]).
template <class T>
std::pair<Tensor<T>, Tensor<T>> source_attention(const ModelParams<T>& p,
                                                 const Tensor<T>& s_prev,
                                                 const EncoderStates<T>& enc) {
  if (enc.h.empty()) throw ContractError("source_attention: empty encoder");
  auto q = matmul(s_prev, p.at("satt.W"));
  std::vector<Tensor<T>> scores(enc.src_len);
  for (int i = 0; i < enc.src_len; ++i)
    scores[i] = matmul(tanh_(add(q, enc.Uh[i])), p.at("satt.v"));
  auto alpha = softmax_lastdim(concat_cols(scores), enc.mask);
  Tensor<T> c;
  for (int i = 0; i < enc.src_len; ++i) {
    auto term = cmul_bcast(slice_cols(alpha, i, 1), enc.h[i]);
    c = c.defined() ? add(c, term) : term;
  }
  return {c, alpha};
}

// d_t = mean of y_0..y_{t-1}
template <class T>
Tensor<T> target_summary_mean(const std::vector<Tensor<T>>& y_hist) {
  if (y_hist.empty()) throw ContractError("target_summary_mean: empty history");
  Tensor<T> acc = y_hist[0];
  for (std::size_t i = 1; i < y_hist.size(); ++i) acc = add(acc, y_hist[i]);
  return scale(acc, T(1) / T(y_hist.size()));
}

// d_t = sum_i alpha_i y_i with e_i = v' tanh(Wy y_i [+ Ws s_t]).
// Content scoring ignores s_t in the energies; the softmax still spans
// exactly the current prefix.
template <class T>
std::pair<Tensor<T>, Tensor<T>> target_summary_attentive(
    const ModelParams<T>& p, const std::vector<Tensor<T>>& y_hist,
    const Tensor<T>& s_t, Scoring scoring) {
  if (y_hist.empty())
    throw ContractError("target_summary_attentive: empty history");
  Tensor<T> scope;
  if (scoring == Scoring::content_scope)
    scope = matmul(s_t, p.at("tatt.Ws"));
  std::vector<Tensor<T>> scores(y_hist.size());
  for (std::size_t i = 0; i < y_hist.size(); ++i) {
    auto u = matmul(y_hist[i], p.at("tatt.Wy"));
    if (scope.defined()) u = add(u, scope);
    scores[i] = matmul(tanh_(u), p.at("tatt.v"));
  }
  auto alpha = softmax_lastdim(concat_cols(scores));
  Tensor<T> d;
  for (std::size_t i = 0; i < y_hist.size(); ++i) {
    auto term = cmul_bcast(slice_cols(alpha, static_cast<int>(i), 1), y_hist[i]);
    d = d.defined() ? add(d, term) : term;
  }
  return {d, alpha};
}

// Memory RNN summary over previous decoder hiddens, scored from
// (s_i, y_{t-1}, s~_{t-1}). Empty history -> zero vector, no weights.
template <class T>
std::pair<Tensor<T>, Tensor<T>> memory_state(const ModelParams<T>& p,
                                             const std::vector<Tensor<T>>& s_hist,
                                             const Tensor<T>& y_prev,
                                             const Tensor<T>& s_tilde_prev) {
  if (s_hist.empty())
    return {Tensor<T>::zeros({y_prev.rows(), p.spec.hidden_dim}), Tensor<T>{}};
  auto ctx = add(matmul(y_prev, p.at("matt.Wy")),
                 matmul(s_tilde_prev, p.at("matt.Wt")));
  std::vector<Tensor<T>> scores(s_hist.size());
  for (std::size_t i = 0; i < s_hist.size(); ++i)
    scores[i] =
        matmul(tanh_(add(matmul(s_hist[i], p.at("matt.Ws")), ctx)), p.at("matt.v"));
  auto alpha = softmax_lastdim(concat_cols(scores));
  Tensor<T> st;
  for (std::size_t i = 0; i < s_hist.size(); ++i) {
    auto term = cmul_bcast(slice_cols(alpha, static_cast<int>(i), 1), s_hist[i]);
    st = st.defined() ? add(st, term) : term;
  }
  return {st, alpha};
}

// Self-attentive RNN summary over previous hiddens, scored from (s_i, s_t).
template <class T>
std::pair<Tensor<T>, Tensor<T>> hidden_summary(const ModelParams<T>& p,
                                               const std::vector<Tensor<T>>& s_hist,
                                               const Tensor<T>& s_t) {
  if (s_hist.empty())
    return {Tensor<T>::zeros({s_t.rows(), p.spec.hidden_dim}), Tensor<T>{}};
  auto ctx = matmul(s_t, p.at("hatt.W2"));
  std::vector<Tensor<T>> scores(s_hist.size());
  for (std::size_t i = 0; i < s_hist.size(); ++i)
    scores[i] =
        matmul(tanh_(add(matmul(s_hist[i], p.at("hatt.W1")), ctx)), p.at("hatt.v"));
  auto alpha = softmax_lastdim(concat_cols(scores));
  Tensor<T> st;
  for (std::size_t i = 0; i < s_hist.size(); ++i) {
    auto term = cmul_bcast(slice_cols(alpha, static_cast<int>(i), 1), s_hist[i]);
    st = st.defined() ? add(st, term) : term;
  }
  return {st, alpha};
}

template <class T>
struct DecoderState {
  Tensor<T> s;                      // current hidden, [B,d]
  std::vector<Tensor<T>> y_hist;    // y_0 .. y_{t-1}, each [B,e]
  std::vector<Tensor<T>> s_hist;    // s_1 .. s_{t-1}
  Tensor<T> s_tilde;                // memory RNN running summary
  int t = 0;                        // steps taken

  static DecoderState init(int batch, int d) {
    DecoderState st;
    st.s = Tensor<T>::zeros({batch, d});
    st.s_tilde = Tensor<T>::zeros({batch, d});
    return st;
  }
};

template <class T>
struct StepOutput {
  Tensor<T> logp;        // [B,V] log-distribution
  Tensor<T> src_alpha;   // [B,m] (absent in LM mode)
  Tensor<T> tgt_alpha;   // attention over target-side history, or undefined
};

// One decoder step (teacher forcing or decoding). prev_ids are y_{t-1};
// enc == nullptr selects LM mode (c_t = 0).
template <class T>
StepOutput<T> decoder_step(const ModelParams<T>& p, DecoderState<T>& st,
                           const std::vector<int>& prev_ids,
                           const EncoderStates<T>* enc,
                           const DropoutFn<T>& drop = {}) {
  const auto& m = p.spec;
  if (m.lm_mode != (enc == nullptr))
    throw ContractError("decoder_step: encoder/LM-mode mismatch");
  if (m.lm_mode && m.variant != Variant::baseline &&
      m.variant != Variant::mean_residual && m.variant != Variant::attn_residual)
    throw ContractError("lm_step: unsupported variant " + to_string(m.variant));
  const int batch = static_cast<int>(prev_ids.size());

  auto y_prev = embedding_lookup(p.at("tgt_embed"), prev_ids);
  st.y_hist.push_back(y_prev);
  ++st.t;

  StepOutput<T> out;
  Tensor<T> c;  // context vector
  if (enc) {
    auto [ct, alpha] = source_attention(p, st.s, *enc);
    c = ct;
    out.src_alpha = alpha;
  }

  // recurrence; the memory RNN drives it with the attention summary
  Tensor<T> h_in = st.s;
  if (m.variant == Variant::memory_rnn) {
    auto [stld, alpha] = memory_state(p, st.s_hist, y_prev, st.s_tilde);
    st.s_tilde = stld;
    out.tgt_alpha = alpha;
    h_in = stld;
  }
  auto x = enc ? concat_cols<T>({y_prev, c}) : y_prev;
  auto s_new = gru_step(x, h_in, p.at("dec.Wx"), p.at("dec.Wh_zr"),
                        p.at("dec.Wh_c"), p.at("dec.b"));
  st.s_hist.push_back(s_new);
  st.s = s_new;

  // residual input to the output layer
  Tensor<T> d_or_y = y_prev;
  switch (m.variant) {
    case Variant::mean_residual: {
      d_or_y = target_summary_mean(st.y_hist);
      // uniform weights, recorded so traces are recomputable
      out.tgt_alpha = Tensor<T>::full({batch, static_cast<int>(st.y_hist.size())},
                                      T(1) / T(st.y_hist.size()));
      break;
    }
    case Variant::attn_residual: {
      auto [d, alpha] = target_summary_attentive(p, st.y_hist, s_new, m.scoring);
      d_or_y = d;
      out.tgt_alpha = alpha;
      break;
    }
    default:
      break;
  }

  Tensor<T> pre = add_bias(
      add(matmul(drop(s_new), p.at("out.Ls")), matmul(drop(d_or_y), p.at("out.Ld"))),
      p.at("out.b"));
  if (enc) pre = add(pre, matmul(c, p.at("out.Lc")));
  if (m.variant == Variant::self_attentive_rnn) {
    // summary over s_1..s_{t-1}, i.e. excluding the fresh s_t
    std::vector<Tensor<T>> prev(st.s_hist.begin(), st.s_hist.end() - 1);
    auto [stld, alpha] = hidden_summary(p, prev, s_new);
    out.tgt_alpha = alpha;
    pre = add(pre, matmul(drop(stld), p.at("out.Lm")));
  }
  auto logits = add_bias(matmul(tanh_(pre), p.at("out.W")), p.at("out.bw"));
  out.logp = log_softmax_lastdim(logits);
  return out;
}

// LM-mode step (no encoder, c_t = 0)
template <class T>
StepOutput<T> lm_step(const ModelParams<T>& p, DecoderState<T>& st,
                      const std::vector<int>& prev_ids,
                      const DropoutFn<T>& drop = {}) {
  return decoder_step(p, st, prev_ids,
                      static_cast<const EncoderStates<T>*>(nullptr), drop);
}

}  // namespace ars

#endif
