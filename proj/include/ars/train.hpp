#ifndef ARS_TRAIN_HPP
#define ARS_TRAIN_HPP

// Negative log-likelihood training with Adadelta, inverted dropout,
// N(0,1)*init_scale initialization, per-batch gradient clipping, and
// best-checkpoint selection by dev loss.

#include <cmath>
#include <fstream>
#include <iostream>

#include "ars/checkpoint.hpp"
#include "ars/data.hpp"
#include "ars/model.hpp"

namespace ars {

struct TrainConfig {
  double rho = 0.95;
  double epsilon = 1e-6;
  double dropout_p = 0.5;
  double init_scale = 0.01;
  double grad_clip = 1.0;  // L2 norm per batch; 0 disables
  int batch_size = 32;
  int max_epochs = 30;
  std::uint64_t seed = 1;
  int max_len = 50;
  double stop_accuracy = -1.0;  // early stop when dev accuracy reaches this
};

// loss = -sum over masked positions of log p(target); also returns the
// masked token count. Step t of logps predicts tgt[:, t+1].
template <class T>
std::pair<Tensor<T>, long> nll_loss(const std::vector<Tensor<T>>& logps,
                                    const std::vector<int>& tgt,
                                    const std::vector<float>& tgt_mask,
                                    int batch, int tgt_len) {
  if (static_cast<int>(logps.size()) != tgt_len - 1)
    throw DimError("nll_loss: step count mismatch");
  Tensor<T> total;
  long tokens = 0;
  for (int t = 1; t < tgt_len; ++t) {
    std::vector<int> gold(batch);
    std::vector<T> mk(batch);
    for (int bi = 0; bi < batch; ++bi) {
      const float m = tgt_mask[bi * tgt_len + t];
      gold[bi] = m != 0.f ? tgt[bi * tgt_len + t] : 0;
      mk[bi] = static_cast<T>(m);
      if (m != 0.f) ++tokens;
    }
    auto picked = pick(logps[t - 1], gold);
    for (int bi = 0; bi < batch; ++bi)
      if (mk[bi] != T(0) &&
          !std::isfinite(static_cast<double>(picked.values()[bi])))
        throw NumericError("nll_loss: -inf log-probability");
    auto masked = cmul_bcast(Tensor<T>::make({batch, 1}, std::move(mk)), picked);
    auto s = sum_all(masked);
    total = total.defined() ? add(total, s) : s;
  }
  return {scale(total, T(-1)), tokens};
}

// Inverted dropout: zero with probability p, scale survivors by 1/(1-p).
template <class T>
Tensor<T> dropout_apply(const Tensor<T>& x, double p, bool training,
                        std::mt19937_64& rng) {
  if (!training || p == 0.0) return x;
  if (p < 0.0 || p >= 1.0) throw InputError("dropout: p must be in [0,1)");
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<T> mask(x.numel());
  const T s = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : mask) m = keep(rng) ? s : T(0);
  return mul(x, Tensor<T>::make(x.shape(), std::move(mask)));
}

template <class T>
struct OptimizerState {
  std::map<std::string, std::vector<T>> avg_sq_grad;   // E[g^2]
  std::map<std::string, std::vector<T>> avg_sq_delta;  // E[dx^2]

  static OptimizerState init(const ModelParams<T>& p) {
    OptimizerState o;
    for (const auto& [name, t] : p.tensors) {
      o.avg_sq_grad[name].assign(t.numel(), T(0));
      o.avg_sq_delta[name].assign(t.numel(), T(0));
    }
    return o;
  }
};

template <class T>
void clip_gradients(ModelParams<T>& params, double max_norm) {
  if (max_norm <= 0) return;
  double sq = 0;
  for (auto& [name, t] : params.tensors) {
    if (t.grad().empty()) continue;
    for (T g : t.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const T s = static_cast<T>(max_norm / norm);
  for (auto& [name, t] : params.tensors)
    for (auto& g : t.grad()) g *= s;
}

template <class T>
void adadelta_step(ModelParams<T>& params, OptimizerState<T>& opt,
                   double rho, double epsilon) {
  for (auto& [name, t] : params.tensors) {
    if (t.grad().empty()) continue;
    auto& eg2 = opt.avg_sq_grad[name];
    auto& ed2 = opt.avg_sq_delta[name];
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double g = static_cast<double>(t.grad()[i]);
      if (std::isnan(g)) throw NumericError("NaN gradient in " + name);
      double e = rho * static_cast<double>(eg2[i]) + (1 - rho) * g * g;
      eg2[i] = static_cast<T>(e);
      const double dx = -std::sqrt(static_cast<double>(ed2[i]) + epsilon) /
                        std::sqrt(e + epsilon) * g;
      ed2[i] = static_cast<T>(rho * static_cast<double>(ed2[i]) +
                              (1 - rho) * dx * dx);
      t.values()[i] += static_cast<T>(dx);
    }
    t.zero_grad();
  }
}

template <class T>
struct ForwardResult {
  Tensor<T> loss_sum;  // scalar, -sum log p over masked tokens
  long tokens = 0;
  long correct = 0;  // argmax matches (no-tape runs only meaningful)
  std::vector<Tensor<T>> logps;
};

// Teacher-forced forward pass over one padded batch (translation or LM).
template <class T>
ForwardResult<T> forward_batch(const ModelParams<T>& p, const Batch& b,
                               const DropoutFn<T>& drop = {},
                               bool want_argmax = false) {
  ForwardResult<T> r;
  EncoderStates<T> enc;
  if (!p.spec.lm_mode) {
    std::vector<T> smask(b.src_mask.begin(), b.src_mask.end());
    enc = encode(p, b.src, smask, b.batch, b.src_len, drop);
  }
  auto st = DecoderState<T>::init(b.batch, p.spec.hidden_dim);
  for (int t = 1; t < b.tgt_len; ++t) {
    std::vector<int> prev(b.batch);
    for (int bi = 0; bi < b.batch; ++bi) {
      const int id = b.tgt[bi * b.tgt_len + t - 1];
      prev[bi] = b.tgt_mask[bi * b.tgt_len + t - 1] != 0.f ? id : kPad;
    }
    auto out = decoder_step(p, st, prev, p.spec.lm_mode ? nullptr : &enc, drop);
    r.logps.push_back(out.logp);
  }
  auto [loss, tokens] = nll_loss(r.logps, b.tgt, b.tgt_mask, b.batch, b.tgt_len);
  r.loss_sum = loss;
  r.tokens = tokens;
  if (want_argmax) {
    const int V = p.spec.tgt_vocab;
    for (int t = 1; t < b.tgt_len; ++t) {
      const auto& lp = r.logps[t - 1].values();
      for (int bi = 0; bi < b.batch; ++bi) {
        if (b.tgt_mask[bi * b.tgt_len + t] == 0.f) continue;
        const T* row = lp.data() + bi * V;
        int best = 0;
        for (int j = 1; j < V; ++j)
          if (row[j] > row[best]) best = j;
        if (best == b.tgt[bi * b.tgt_len + t]) ++r.correct;
      }
    }
  }
  return r;
}

struct EvalStats {
  double loss_per_token = 0;
  double accuracy = 0;
  long tokens = 0;
};

template <class T>
EvalStats evaluate(const ModelParams<T>& p,
                   const std::vector<SentencePair>& pairs, int batch_size) {
  EvalStats s;
  double total = 0;
  long correct = 0;
  BatchIterator it(pairs, batch_size, 0);
  for (const auto& b : it.epoch(-1)) {
    auto r = forward_batch<T>(p, b, {}, true);
    total += static_cast<double>(r.loss_sum.item());
    s.tokens += r.tokens;
    correct += r.correct;
  }
  s.loss_per_token = total / std::max<long>(1, s.tokens);
  s.accuracy = static_cast<double>(correct) / std::max<long>(1, s.tokens);
  return s;
}

struct EpochMetrics {
  int epoch;
  double train_loss, dev_loss, dev_accuracy;
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  double best_dev_loss = 0;
  int best_epoch = -1;
};

// Full training run; keeps the best-dev-loss checkpoint at ckpt_path and
// appends one tab-separated line per epoch to log_path (if nonempty).
template <class T>
TrainResult train(ModelParams<T>& params, const TrainConfig& cfg,
                  const std::vector<SentencePair>& train_pairs,
                  const std::vector<SentencePair>& dev_pairs,
                  const std::string& ckpt_path, const std::string& log_path,
                  bool verbose = false) {
  if (train_pairs.empty() || dev_pairs.empty())
    throw InputError("train: empty corpus");
  auto opt = OptimizerState<T>::init(params);
  auto drop_rng = substream(cfg.seed, "dropout");
  BatchIterator iter(train_pairs, cfg.batch_size, cfg.seed);
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw IOError("cannot write metrics log: " + log_path);
  }
  TrainResult res;
  res.best_dev_loss = std::numeric_limits<double>::infinity();
  DropoutFn<T> drop;
  if (cfg.dropout_p > 0)
    drop.apply = [&](const Tensor<T>& x) {
      return dropout_apply(x, cfg.dropout_p, true, drop_rng);
    };
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double train_total = 0;
    long train_tokens = 0;
    params.set_requires_grad(true);
    for (const auto& b : iter.epoch(epoch)) {
      Tape<T> tape;
      {
        typename Tape<T>::Scope scope(tape);
        auto r = forward_batch(params, b, drop);
        train_total += static_cast<double>(r.loss_sum.item());
        train_tokens += r.tokens;
        auto mean_loss = scale(r.loss_sum, T(1) / T(std::max<long>(1, r.tokens)));
        tape.backward(mean_loss);
      }
      clip_gradients(params, cfg.grad_clip);
      adadelta_step(params, opt, cfg.rho, cfg.epsilon);
    }
    params.set_requires_grad(false);
    params.zero_grad();
    auto dev = evaluate(params, dev_pairs, cfg.batch_size);
    EpochMetrics m{epoch, train_total / std::max<long>(1, train_tokens),
                   dev.loss_per_token, dev.accuracy};
    res.metrics.push_back(m);
    if (log)
      log << m.epoch << '\t' << m.train_loss << '\t' << m.dev_loss << '\t'
          << m.dev_accuracy << '\n' << std::flush;
    if (verbose)
      std::cerr << "epoch " << m.epoch << " train " << m.train_loss << " dev "
                << m.dev_loss << " acc " << m.dev_accuracy << '\n';
    if (m.dev_loss < res.best_dev_loss) {
      res.best_dev_loss = m.dev_loss;
      res.best_epoch = epoch;
      if (!ckpt_path.empty()) save_checkpoint(ckpt_path, params);
    }
    if (cfg.stop_accuracy > 0 && m.dev_accuracy >= cfg.stop_accuracy) break;
  }
  return res;
}

}  // namespace ars

#endif
