// Command-line surface: train, translate, analyze {hist,tree,parseval,bleu,ppl},
// lm {train,ppl}. Exit codes: 0 ok, 1 config error, 2 I/O error,
// 3 numeric divergence.

#include <iostream>

#include "CLI11.hpp"
#include "ars/evaluation.hpp"
#include "ars/structure.hpp"
#include "ars/train.hpp"

namespace {

using namespace ars;

struct TrainArgs {
  std::string task;
  std::string src, tgt, dev_src, dev_tgt, text, dev_text;
  std::string decoder;
  std::string scoring = "content";
  std::string precision = "single";
  std::string out, log;
  int embed_dim = 32, hidden_dim = 64;
  int vocab_size = 25000;
  int task_vocab = 20, task_min = 2, task_max = 10;
  int n_train = 5000, n_dev = 500;
  TrainConfig cfg;
  bool verbose = false;
  bool lm = false;
};

void add_hyper_flags(CLI::App* app, TrainArgs& a) {
  app->add_option("--decoder", a.decoder,
                  "baseline|memory-rnn|self-attn-rnn|mean-residual|attn-residual")
      ->required();
  app->add_option("--scoring", a.scoring, "content|content+scope (attn-residual only)");
  app->add_option("--embed-dim", a.embed_dim, "word embedding dimension");
  app->add_option("--hidden-dim", a.hidden_dim, "GRU hidden dimension");
  app->add_option("--epochs", a.cfg.max_epochs, "maximum training epochs");
  app->add_option("--batch", a.cfg.batch_size, "batch size");
  app->add_option("--seed", a.cfg.seed, "master seed for init/dropout/shuffle");
  app->add_option("--rho", a.cfg.rho, "Adadelta decay");
  app->add_option("--epsilon", a.cfg.epsilon, "Adadelta epsilon");
  app->add_option("--dropout", a.cfg.dropout_p, "dropout probability");
  app->add_option("--init-scale", a.cfg.init_scale, "init stddev scale");
  app->add_option("--clip", a.cfg.grad_clip, "per-batch gradient L2 clip (0 off)");
  app->add_option("--max-len", a.cfg.max_len, "maximum sentence length");
  app->add_option("--precision", a.precision, "single|double");
  app->add_option("--stop-acc", a.cfg.stop_accuracy,
                  "stop early at this dev token accuracy");
  app->add_option("--out", a.out, "checkpoint output path")->required();
  app->add_option("--log", a.log, "per-epoch metrics log (tsv)");
  app->add_flag("--verbose", a.verbose, "log epochs to stderr");
}

void validate_train_args(const TrainArgs& a) {
  const Variant v = variant_from_string(a.decoder);
  const Scoring s = scoring_from_string(a.scoring);
  if (s == Scoring::content_scope && v != Variant::attn_residual)
    throw InputError("--scoring content+scope requires --decoder attn-residual");
  if (a.lm && v != Variant::baseline && v != Variant::mean_residual &&
      v != Variant::attn_residual)
    throw InputError("LM mode supports baseline, mean-residual, attn-residual");
  if (a.precision != "single" && a.precision != "double")
    throw InputError("--precision must be single or double");
  if (a.cfg.dropout_p < 0 || a.cfg.dropout_p >= 1)
    throw InputError("--dropout must be in [0,1)");
  if (a.cfg.rho <= 0 || a.cfg.rho >= 1) throw InputError("--rho must be in (0,1)");
  if (a.cfg.epsilon <= 0) throw InputError("--epsilon must be positive");
}

std::vector<SentencePair> clip_len(std::vector<SentencePair> pairs, int max_len) {
  std::vector<SentencePair> out;
  for (auto& p : pairs)
    if (static_cast<int>(p.source.size()) <= max_len &&
        static_cast<int>(p.target.size()) <= max_len + 2)
      out.push_back(std::move(p));
  return out;
}

template <class T>
int run_train(const TrainArgs& a) {
  ModelSpec spec;
  spec.variant = variant_from_string(a.decoder);
  spec.scoring = scoring_from_string(a.scoring);
  spec.embed_dim = a.embed_dim;
  spec.hidden_dim = a.hidden_dim;
  spec.lm_mode = a.lm;

  Vocabulary src_vocab, tgt_vocab;
  std::vector<SentencePair> train_pairs, dev_pairs;
  if (!a.task.empty()) {
    SyntheticTask task{task_from_string(a.task), a.task_vocab, a.task_min,
                       a.task_max};
    train_pairs = task.generate(a.n_train, a.cfg.seed);
    dev_pairs = task.generate(a.n_dev, a.cfg.seed + 0x9e3779b9ull);
    src_vocab = tgt_vocab = task.vocabulary();
  } else if (a.lm) {
    auto lines = read_lines(a.text);
    tgt_vocab = Vocabulary::build(lines, a.vocab_size);
    auto to_pairs = [&](const std::vector<std::string>& ls) {
      std::vector<SentencePair> ps;
      for (const auto& l : ls) {
        if (l.find_first_not_of(" \t") == std::string::npos) continue;
        SentencePair p;
        p.target.push_back(kBos);
        for (int id : tgt_vocab.encode(l, true)) p.target.push_back(id);
        ps.push_back(std::move(p));
      }
      return ps;
    };
    train_pairs = to_pairs(lines);
    dev_pairs = to_pairs(read_lines(a.dev_text));
  } else {
    auto src_lines = read_lines(a.src);
    auto tgt_lines = read_lines(a.tgt);
    if (src_lines.size() != tgt_lines.size())
      throw InputError("parallel corpus line counts differ");
    src_vocab = Vocabulary::build(src_lines, a.vocab_size);
    tgt_vocab = Vocabulary::build(tgt_lines, a.vocab_size);
    for (std::size_t i = 0; i < src_lines.size(); ++i)
      train_pairs.push_back(
          encode_pair(src_vocab, tgt_vocab, src_lines[i], tgt_lines[i]));
    auto dsrc = read_lines(a.dev_src);
    auto dtgt = read_lines(a.dev_tgt);
    if (dsrc.size() != dtgt.size())
      throw InputError("dev corpus line counts differ");
    for (std::size_t i = 0; i < dsrc.size(); ++i)
      dev_pairs.push_back(encode_pair(src_vocab, tgt_vocab, dsrc[i], dtgt[i]));
  }
  train_pairs = clip_len(std::move(train_pairs), a.cfg.max_len);
  dev_pairs = clip_len(std::move(dev_pairs), a.cfg.max_len);

  spec.src_vocab = a.lm ? 0 : static_cast<int>(src_vocab.size());
  spec.tgt_vocab = static_cast<int>(tgt_vocab.size());

  auto params = init_params<T>(spec, a.cfg.init_scale, a.cfg.seed);
  auto res = train(params, a.cfg, train_pairs, dev_pairs, a.out, a.log, a.verbose);
  if (!a.lm) src_vocab.save(a.out + ".src.vocab");
  tgt_vocab.save(a.out + ".tgt.vocab");
  std::cout << "best_epoch=" << res.best_epoch
            << " best_dev_loss=" << res.best_dev_loss << '\n';
  return 0;
}

struct TranslateArgs {
  std::string model, input, output, dump_attn;
  int beam = 4, max_len = 50;
  double length_norm = 1.0;
};

template <class T>
int run_translate(const TranslateArgs& a) {
  auto params = load_checkpoint<T>(a.model);
  if (params.spec.lm_mode) throw InputError("model is an LM; use lm ppl");
  auto src_vocab = Vocabulary::load(a.model + ".src.vocab");
  auto tgt_vocab = Vocabulary::load(a.model + ".tgt.vocab");
  auto lines = read_lines(a.input);
  std::ofstream file_out;
  if (!a.output.empty()) {
    file_out.open(a.output);
    if (!file_out) throw IOError("cannot write output: " + a.output);
  }
  std::ostream& os = a.output.empty() ? std::cout : file_out;
  std::vector<AttentionTrace> traces;
  for (const auto& line : lines) {
    auto src = src_vocab.encode(line, true);
    auto hyp = beam_decode(params, src, a.beam, a.max_len, a.length_norm);
    os << tgt_vocab.decode(hyp.tokens) << '\n';
    if (!a.dump_attn.empty()) {
      for (int id : hyp.tokens) hyp.trace.tokens.push_back(tgt_vocab.token(id));
      traces.push_back(std::move(hyp.trace));
    }
  }
  if (!a.dump_attn.empty()) export_traces(traces, a.dump_attn);
  return 0;
}

std::vector<std::string> trace_words(const AttentionTrace& tr) {
  std::vector<std::string> words = tr.tokens;
  if (!words.empty() && words.back() == "<eos>") words.pop_back();
  return words;
}

std::vector<std::vector<int>> load_id_corpus(const std::string& path,
                                             std::map<std::string, int>& dict) {
  std::vector<std::vector<int>> out;
  for (const auto& line : read_lines(path)) {
    std::istringstream is(line);
    std::string tok;
    std::vector<int> ids;
    while (is >> tok)
      ids.push_back(dict.emplace(tok, static_cast<int>(dict.size())).first->second);
    out.push_back(std::move(ids));
  }
  return out;
}

template <class T>
double corpus_perplexity(const std::string& model, const std::string& src,
                         const std::string& tgt, const std::string& text) {
  auto params = load_checkpoint<T>(model);
  std::vector<SentencePair> pairs;
  auto tgt_vocab = Vocabulary::load(model + ".tgt.vocab");
  if (params.spec.lm_mode) {
    for (const auto& l : read_lines(text)) {
      if (l.find_first_not_of(" \t") == std::string::npos) continue;
      SentencePair p;
      p.target.push_back(kBos);
      for (int id : tgt_vocab.encode(l, true)) p.target.push_back(id);
      pairs.push_back(std::move(p));
    }
  } else {
    auto src_vocab = Vocabulary::load(model + ".src.vocab");
    auto sl = read_lines(src), tl = read_lines(tgt);
    if (sl.size() != tl.size()) throw InputError("corpus line counts differ");
    for (std::size_t i = 0; i < sl.size(); ++i)
      pairs.push_back(encode_pair(src_vocab, tgt_vocab, sl[i], tl[i]));
  }
  return perplexity(params, pairs);
}

int dispatch(const std::string& precision, const std::function<int()>& fs,
             const std::function<int()>& fd) {
  return precision == "double" ? fd() : fs();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attentive residual seq2seq toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file; flags override");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a translation model");
  add_hyper_flags(train_cmd, ta);
  train_cmd->add_option("--task", ta.task, "synthetic task: copy|reverse|agreement");
  train_cmd->add_option("--task-vocab", ta.task_vocab, "synthetic vocabulary size");
  train_cmd->add_option("--task-min", ta.task_min, "min synthetic source length");
  train_cmd->add_option("--task-max", ta.task_max, "max synthetic source length");
  train_cmd->add_option("--n-train", ta.n_train, "synthetic training pairs");
  train_cmd->add_option("--n-dev", ta.n_dev, "synthetic dev pairs");
  train_cmd->add_option("--src", ta.src, "training source corpus");
  train_cmd->add_option("--tgt", ta.tgt, "training target corpus");
  train_cmd->add_option("--dev-src", ta.dev_src, "dev source corpus");
  train_cmd->add_option("--dev-tgt", ta.dev_tgt, "dev target corpus");
  train_cmd->add_option("--vocab-size", ta.vocab_size, "max vocabulary size");

  TranslateArgs tra;
  auto* tr_cmd = app.add_subcommand("translate", "decode with a trained model");
  tr_cmd->add_option("--model", tra.model, "checkpoint path")->required();
  tr_cmd->add_option("--input", tra.input, "source text, one sentence per line")
      ->required();
  tr_cmd->add_option("--output", tra.output, "hypothesis output path (default stdout)");
  tr_cmd->add_option("--beam", tra.beam, "beam width");
  tr_cmd->add_option("--max-len", tra.max_len, "maximum output length");
  tr_cmd->add_option("--length-norm", tra.length_norm, "length normalization exponent");
  tr_cmd->add_option("--dump-attn", tra.dump_attn, "write attention traces here");

  auto* an_cmd = app.add_subcommand("analyze", "analysis utilities");
  an_cmd->require_subcommand(1);
  std::string an_traces, an_pred, an_gold, an_hyp, an_ref, an_model, an_src,
      an_tgt, an_out;
  auto* hist_cmd = an_cmd->add_subcommand("hist", "max-attention position histogram");
  hist_cmd->add_option("--traces", an_traces)->required();
  auto* tree_cmd = an_cmd->add_subcommand("tree", "extract binary trees from traces");
  tree_cmd->add_option("--traces", an_traces)->required();
  tree_cmd->add_option("--out", an_out, "output path (default stdout)");
  auto* pv_cmd = an_cmd->add_subcommand("parseval", "score trees against gold");
  pv_cmd->add_option("--pred", an_pred)->required();
  pv_cmd->add_option("--gold", an_gold)->required();
  auto* bleu_cmd = an_cmd->add_subcommand("bleu", "corpus BLEU");
  bleu_cmd->add_option("--hyp", an_hyp)->required();
  bleu_cmd->add_option("--ref", an_ref)->required();
  auto* ppl_cmd = an_cmd->add_subcommand("ppl", "teacher-forced perplexity");
  ppl_cmd->add_option("--model", an_model)->required();
  ppl_cmd->add_option("--src", an_src)->required();
  ppl_cmd->add_option("--tgt", an_tgt)->required();

  auto* lm_cmd = app.add_subcommand("lm", "language-model mode");
  lm_cmd->require_subcommand(1);
  TrainArgs lta;
  lta.lm = true;
  auto* lm_train = lm_cmd->add_subcommand("train", "train an LM");
  add_hyper_flags(lm_train, lta);
  lm_train->add_option("--text", lta.text, "training text")->required();
  lm_train->add_option("--dev-text", lta.dev_text, "dev text")->required();
  lm_train->add_option("--vocab-size", lta.vocab_size, "max vocabulary size");
  std::string lm_model, lm_text;
  auto* lm_ppl = lm_cmd->add_subcommand("ppl", "LM perplexity on a text file");
  lm_ppl->add_option("--model", lm_model)->required();
  lm_ppl->add_option("--text", lm_text)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (train_cmd->parsed()) {
      validate_train_args(ta);
      return dispatch(ta.precision, [&] { return run_train<float>(ta); },
                      [&] { return run_train<double>(ta); });
    }
    if (lm_train->parsed()) {
      validate_train_args(lta);
      return dispatch(lta.precision, [&] { return run_train<float>(lta); },
                      [&] { return run_train<double>(lta); });
    }
    if (tr_cmd->parsed()) {
      const auto meta = checkpoint_meta(tra.model);
      return dispatch(meta.at("precision"),
                      [&] { return run_translate<float>(tra); },
                      [&] { return run_translate<double>(tra); });
    }
    if (lm_ppl->parsed()) {
      const auto meta = checkpoint_meta(lm_model);
      const double ppl = dispatch(
          meta.at("precision"),
          [&] {
            std::cout << corpus_perplexity<float>(lm_model, "", "", lm_text);
            return 0;
          },
          [&] {
            std::cout << corpus_perplexity<double>(lm_model, "", "", lm_text);
            return 0;
          });
      (void)ppl;
      std::cout << '\n';
      return 0;
    }
    if (hist_cmd->parsed()) {
      auto traces = parse_traces(an_traces);
      write_histogram(max_attention_histogram(traces), std::cout);
      return 0;
    }
    if (tree_cmd->parsed()) {
      auto traces = parse_traces(an_traces);
      std::ofstream file_out;
      if (!an_out.empty()) {
        file_out.open(an_out);
        if (!file_out) throw IOError("cannot write trees: " + an_out);
      }
      std::ostream& os = an_out.empty() ? std::cout : file_out;
      for (const auto& tr : traces) {
        auto words = trace_words(tr);
        if (words.empty()) {
          os << '\n';
          continue;
        }
        auto A = binarize_attention(tr, static_cast<int>(words.size()));
        os << to_bracketed(*build_tree(A), words) << '\n';
      }
      return 0;
    }
    if (pv_cmd->parsed()) {
      auto pred = load_gold_trees(an_pred);
      auto gold = load_gold_trees(an_gold);
      if (pred.size() != gold.size())
        throw InputError("parseval: tree counts differ");
      long matched = 0, n_pred = 0, n_gold = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i].words.size() != gold[i].words.size())
          throw InputError("parseval: sentence length mismatch at line " +
                           std::to_string(i + 1));
        auto ps = pred[i].multiword_spans();
        auto gs = gold[i].multiword_spans();
        n_pred += static_cast<long>(ps.size());
        n_gold += static_cast<long>(gs.size());
        matched += parseval(ps, gs).matched;
      }
      const double prec = n_pred ? static_cast<double>(matched) / n_pred : 0.0;
      const double rec = n_gold ? static_cast<double>(matched) / n_gold : 0.0;
      std::cout << "precision=" << prec << " recall=" << rec << '\n';
      return 0;
    }
    if (bleu_cmd->parsed()) {
      std::map<std::string, int> dict;
      auto hyps = load_id_corpus(an_hyp, dict);
      auto refs = load_id_corpus(an_ref, dict);
      auto rep = bleu(hyps, refs);
      std::cout << "BLEU=" << rep.bleu << " BP=" << rep.brevity_penalty;
      for (int n = 0; n < 4; ++n)
        std::cout << " p" << n + 1 << "=" << rep.precision[n];
      std::cout << '\n';
      return 0;
    }
    if (ppl_cmd->parsed()) {
      const auto meta = checkpoint_meta(an_model);
      dispatch(meta.at("precision"),
               [&] {
                 std::cout << corpus_perplexity<float>(an_model, an_src, an_tgt, "");
                 return 0;
               },
               [&] {
                 std::cout << corpus_perplexity<double>(an_model, an_src, an_tgt, "");
                 return 0;
               });
      std::cout << '\n';
      return 0;
    }
  } catch (const ars::IOError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ars::NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
