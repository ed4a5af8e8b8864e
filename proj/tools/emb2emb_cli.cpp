// Command-line front end: pretrain an autoencoder, train style classifiers
// and embedding-to-embedding mappings, run inference with optional
// gradient-based refinement, evaluate outputs, and sweep tradeoff curves.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "emb2emb/autoencoder.hpp"
#include "emb2emb/fgim.hpp"
#include "emb2emb/mapping.hpp"
#include "emb2emb/metrics.hpp"
#include "emb2emb/objectives.hpp"
#include "emb2emb/rng.hpp"
#include "emb2emb/sweep.hpp"
#include "emb2emb/text.hpp"

namespace fs = std::filesystem;
using namespace emb2emb;

namespace {

// ---------------------------------------------------------------------------
// shared plumbing

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw std::invalid_argument("cannot create output dir '" + out + "': " +
                                      ec.message());
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << content;
}

// Every run leaves its fully resolved flat key=value config next to its
// artifacts, so the run is reproducible from that file alone.
void write_resolved_config(CLI::App* sub, const std::string& out) {
  write_file(out + "/config.resolved",
             sub->config_to_str(/*default_also=*/true, /*write_description=*/false));
}

// Flat key=value config support: `--config FILE` tokens are expanded in place
// (right after the subcommand name) so that explicit command-line flags,
// which come later, override the file under the take-last policy.
std::vector<std::string> expand_config_args(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<long>(i));
      break;
    }
  }
  if (path.empty()) return args;

  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot read config file '" + path + "'");
  std::vector<std::string> expanded;
  std::string line;
  while (std::getline(f, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    if (line[0] == '#' || line[0] == '[' || line[0] == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line without '=': '" + line + "'");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    while (!value.empty() && (value.front() == ' ' || value.front() == '\t'))
      value.erase(value.begin());
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (key == "config") continue;  // never chain config files
    expanded.push_back("--" + key + "=" + value);
  }
  if (args.empty()) return expanded;
  args.insert(args.begin() + 1, expanded.begin(), expanded.end());
  return args;
}

// Later occurrences win, so command-line flags override config-file values.
void apply_take_last(CLI::App* sub) {
  for (CLI::Option* opt : sub->get_options())
    if (opt->get_expected_max() == 1)
      opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

std::vector<Scalar> parse_grid(const std::string& csv) {
  std::vector<Scalar> grid;
  std::string item;
  std::istringstream ss(csv);
  while (std::getline(ss, item, ','))
    if (!item.empty()) grid.push_back(static_cast<Scalar>(std::stod(item)));
  if (grid.empty()) throw std::invalid_argument("empty grid '" + csv + "'");
  return grid;
}

Autoencoder load_frozen_ae(const std::string& path) {
  Autoencoder ae = Autoencoder::load(path);
  ae.freeze();
  return ae;
}

void check_dim(Index expected, Index got, const std::string& what) {
  if (expected != got)
    throw std::invalid_argument(what + ": dimension " + std::to_string(got) +
                                " does not match autoencoder bottleneck " +
                                std::to_string(expected));
}

std::vector<Tokens> tokenize_lines(const std::vector<std::string>& lines) {
  std::vector<Tokens> out;
  out.reserve(lines.size());
  for (const std::string& l : lines) out.push_back(tokenize(l));
  return out;
}

// ---------------------------------------------------------------------------
// pretrain

struct PretrainArgs {
  std::string corpus, out;
  Index d = 64, emb_dim = 300;
  Scalar lr = Scalar(1e-3), p_drop = Scalar(0.1), tf_prob = Scalar(0.5);
  Scalar val_fraction = Scalar(0.1);
  int epochs = 20;
  std::size_t batch = 64, vocab_cap = 30000;
  std::uint64_t seed = 0;
};

int cmd_pretrain(const PretrainArgs& a, CLI::App* sub) {
  ensure_out_dir(a.out);
  const std::vector<std::string> lines = read_lines(a.corpus);
  Vocab vocab = Vocab::build(lines, a.vocab_cap);

  std::vector<TokenSeq> corpus;
  for (const std::string& l : lines) {
    TokenSeq t = encode_text(l, vocab);
    if (!t.empty()) corpus.push_back(std::move(t));
  }
  if (corpus.empty()) throw std::invalid_argument("corpus has no usable sentences");

  AeConfig cfg;
  cfg.d = a.d;
  cfg.emb_dim = a.emb_dim;
  cfg.lr = a.lr;
  cfg.noise.p_drop = a.p_drop;
  cfg.tf_prob = a.tf_prob;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.val_fraction = a.val_fraction;

  RngHub hub(a.seed);
  auto init = hub.stream("ae.init");
  Autoencoder ae(std::move(vocab), cfg, init);
  PretrainResult res = pretrain_dae(ae, corpus, hub);

  ae.save(a.out + "/autoencoder.ckpt");
  std::string log = "epoch,train_loss,val_accuracy\n";
  for (const PretrainLogRow& r : res.log) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", r.epoch,
                  static_cast<double>(r.train_loss),
                  static_cast<double>(r.val_accuracy));
    log += buf;
  }
  write_file(a.out + "/pretrain_log.csv", log);
  write_resolved_config(sub, a.out);

  std::cout << "checkpoint: " << a.out << "/autoencoder.ckpt\n"
            << "checkpoint_hash: " << ae.hash() << "\n"
            << "best_val_reconstruction_accuracy: " << res.best_val_accuracy
            << " (epoch " << res.best_epoch << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-classifier (style classifier over a frozen AE, or a standalone judge)

struct TrainClassifierArgs {
  std::string labeled, neg, pos, ae, out;
  bool judge = false;
  Index hidden = 512;
  Scalar dropout = Scalar(0.5), noise_sigma = Scalar(0.5), lr = Scalar(1e-4);
  int epochs = 20;
  std::size_t batch = 64;
  // judge-mode autoencoder settings
  Index d = 64, emb_dim = 300;
  int ae_epochs = 20;
  Scalar ae_lr = Scalar(1e-3);
  std::size_t vocab_cap = 30000;
  std::uint64_t seed = 0;
};

int cmd_train_classifier(const TrainClassifierArgs& a, CLI::App* sub) {
  ensure_out_dir(a.out);
  const bool pair_files = !a.neg.empty() || !a.pos.empty();
  if (a.labeled.empty() == !pair_files)
    throw std::invalid_argument("provide either --labeled or both --neg and --pos");
  if (pair_files && (a.neg.empty() || a.pos.empty()))
    throw std::invalid_argument("--neg and --pos must be given together");

  RngHub hub(a.seed);

  if (a.judge) {
    // held-out evaluation stack: its own autoencoder + classifier
    std::vector<std::string> texts;
    std::vector<int> labels;
    if (pair_files) {
      for (const std::string& l : read_lines(a.neg)) {
        texts.push_back(l);
        labels.push_back(0);
      }
      for (const std::string& l : read_lines(a.pos)) {
        texts.push_back(l);
        labels.push_back(1);
      }
    } else {
      for (const std::string& line : read_lines(a.labeled)) {
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
          throw std::invalid_argument("labeled line without tab: '" + line + "'");
        labels.push_back(std::stoi(line.substr(0, tab)));
        texts.push_back(line.substr(tab + 1));
      }
    }
    AeConfig cfg;
    cfg.d = a.d;
    cfg.emb_dim = a.emb_dim;
    cfg.epochs = a.ae_epochs;
    cfg.lr = a.ae_lr;
    cfg.batch_size = a.batch;
    Judge judge = train_judge(texts, labels, cfg, hub, a.vocab_cap);
    judge.save(a.out + "/judge");
    write_resolved_config(sub, a.out);
    std::cout << "judge: " << a.out << "/judge.{ae,clf}\n"
              << "held_out_accuracy: " << judge.held_out_accuracy << "\n";
    return 0;
  }

  if (a.ae.empty())
    throw std::invalid_argument("--ae checkpoint is required unless --judge is set");
  Autoencoder ae = load_frozen_ae(a.ae);
  LabeledCorpus data = pair_files ? load_labeled_pair(a.neg, a.pos, ae.vocab())
                                  : load_labeled(a.labeled, ae.vocab());

  ClassifierConfig cfg = style_classifier_config(ae.config().d);
  cfg.hidden = {a.hidden};
  cfg.dropout = a.dropout;
  cfg.input_noise_sigma = a.noise_sigma;
  cfg.lr = a.lr;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;

  ClassifierTrainResult res = train_style_classifier(ae, data, cfg, hub);
  res.clf.save(a.out + "/classifier.ckpt",
               {{"held_out_accuracy", std::to_string(res.held_out_accuracy)}});
  write_resolved_config(sub, a.out);
  std::cout << "checkpoint: " << a.out << "/classifier.ckpt\n"
            << "checkpoint_hash: " << res.clf.hash() << "\n"
            << "held_out_accuracy: " << res.held_out_accuracy << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train (mapping)

struct TrainArgs {
  std::string mode = "supervised";
  std::string source, target, labeled, neg, pos;
  std::string ae, classifier, out;
  std::string mapping = "offsetnet";
  int layers = 1;
  Index d = -1;  // -1: take the checkpoint's bottleneck size
  Scalar lambda_adv = 0, lambda_sty = Scalar(0.5);
  Scalar lr = -1;  // -1: mode default (1e-4 supervised, 5e-5 unsupervised)
  int epochs = 20;
  std::size_t batch = 64;
  Scalar val_fraction = Scalar(0.1);
  int target_label = 1;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a, CLI::App* sub) {
  ensure_out_dir(a.out);
  Autoencoder ae = load_frozen_ae(a.ae);
  const Index d = ae.config().d;
  if (a.d >= 0) check_dim(d, a.d, "--d");

  MappingConfig mcfg;
  mcfg.kind = mapping_kind_from_string(a.mapping);
  mcfg.d = d;
  mcfg.layers = a.layers;
  RngHub hub(a.seed);
  auto minit = hub.stream("map.init");
  Mapping mapping(mcfg, minit);

  TrainConfig cfg;
  cfg.weights.lambda_adv = a.lambda_adv;
  cfg.weights.lambda_sty = a.lambda_sty;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.val_fraction = a.val_fraction;
  cfg.target_label = a.target_label;

  TrainResult res;
  if (a.mode == "supervised") {
    if (a.source.empty() || a.target.empty())
      throw std::invalid_argument("supervised mode needs --source and --target");
    cfg.lr = a.lr >= 0 ? a.lr : Scalar(1e-4);
    ParallelCorpus data = load_parallel(a.source, a.target, ae.vocab());
    res = train_emb2emb_supervised(ae, mapping, data, cfg, hub);
  } else if (a.mode == "unsupervised") {
    if (a.classifier.empty())
      throw std::invalid_argument(
          "unsupervised mode needs --classifier (frozen style classifier)");
    const bool pair_files = !a.neg.empty() || !a.pos.empty();
    if (a.labeled.empty() == !pair_files)
      throw std::invalid_argument("provide either --labeled or both --neg and --pos");
    cfg.lr = a.lr >= 0 ? a.lr : Scalar(5e-5);
    MlpBinaryClassifier style = MlpBinaryClassifier::load(a.classifier);
    check_dim(d, style.config().input_dim, "--classifier");
    LabeledCorpus data = pair_files ? load_labeled_pair(a.neg, a.pos, ae.vocab())
                                    : load_labeled(a.labeled, ae.vocab());
    res = train_emb2emb_unsupervised(ae, mapping, style, data, cfg, hub);
  } else {
    throw std::invalid_argument("unknown --mode '" + a.mode + "'");
  }

  mapping.save(a.out + "/mapping.ckpt");
  write_file(a.out + "/train_log.csv", res.csv());
  write_resolved_config(sub, a.out);
  std::cout << "checkpoint: " << a.out << "/mapping.ckpt\n"
            << "checkpoint_hash: " << mapping.hash() << "\n"
            << "best_validation: " << res.best_validation << " (epoch "
            << res.best_epoch << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// infer

struct InferArgs {
  std::string input, ae, mapping, classifier, out;
  bool fgim = false;
  std::string fgim_variant = "classifier";
  Scalar fgim_threshold = Scalar(0.99);
  Scalar fgim_sty = Scalar(0.5);
  int fgim_steps = 30;
  std::string fgim_schedule = "1,10,100,1000";
};

int cmd_infer(const InferArgs& a, CLI::App* sub) {
  ensure_out_dir(a.out);
  Autoencoder ae = load_frozen_ae(a.ae);
  Mapping mapping = Mapping::load(a.mapping);
  check_dim(ae.config().d, mapping.config().d, "--mapping");

  std::optional<MlpBinaryClassifier> clf;
  FgimConfig fcfg;
  if (a.fgim) {
    if (a.classifier.empty())
      throw std::invalid_argument("--fgim needs --classifier");
    clf = MlpBinaryClassifier::load(a.classifier);
    check_dim(ae.config().d, clf->config().input_dim, "--classifier");
    if (a.fgim_variant == "classifier")
      fcfg.variant = FgimVariant::kClassifierOnly;
    else if (a.fgim_variant == "full")
      fcfg.variant = FgimVariant::kFullLoss;
    else
      throw std::invalid_argument("unknown --fgim-variant '" + a.fgim_variant + "'");
    fcfg.threshold = a.fgim_threshold;
    fcfg.lambda_sty = a.fgim_sty;
    fcfg.max_steps_per_weight = a.fgim_steps;
    fcfg.schedule = parse_grid(a.fgim_schedule);
  }

  const std::vector<std::string> lines = read_lines(a.input);
  std::string dump;
  for (const std::string& line : lines) {
    const TokenSeq seq = encode_text(line, ae.vocab());
    std::string output;
    if (!seq.empty()) {
      const Mat z = ae.encode_one(seq);
      Mat zh = mapping.forward(z);
      if (a.fgim) zh = fgim_refine(zh, z, *clf, fcfg).z;
      output = decode_tokens(ae.decode_greedy(zh)[0], ae.vocab());
    }
    dump += line;
    dump += '\t';
    dump += output;
    dump += '\n';
  }
  write_file(a.out + "/outputs.tsv", dump);
  write_resolved_config(sub, a.out);
  std::cout << "outputs: " << a.out << "/outputs.tsv (" << lines.size()
            << " lines)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string metric = "bleu";
  std::string outputs, sources, judge;
  std::vector<std::string> refs;
  int target_label = 1;
  std::string out;
};

int cmd_eval(const EvalArgs& a, CLI::App* sub) {
  const std::vector<Tokens> hyps = tokenize_lines(read_lines(a.outputs));

  auto gather_refs = [&]() {
    if (a.refs.empty()) throw std::invalid_argument("--refs is required");
    std::vector<std::vector<Tokens>> refs(hyps.size());
    for (const std::string& path : a.refs) {
      const std::vector<Tokens> column = tokenize_lines(read_lines(path));
      if (column.size() != hyps.size())
        throw std::invalid_argument("--refs " + path + " has " +
                                    std::to_string(column.size()) + " lines, expected " +
                                    std::to_string(hyps.size()));
      for (std::size_t i = 0; i < hyps.size(); ++i) refs[i].push_back(column[i]);
    }
    return refs;
  };
  auto gather_sources = [&]() {
    if (a.sources.empty()) throw std::invalid_argument("--sources is required");
    return tokenize_lines(read_lines(a.sources));
  };

  double value = 0;
  if (a.metric == "bleu") {
    value = corpus_bleu(hyps, gather_refs());
  } else if (a.metric == "sari") {
    value = sari(gather_sources(), hyps, gather_refs());
  } else if (a.metric == "self-bleu") {
    value = self_bleu(gather_sources(), hyps);
  } else if (a.metric == "accuracy") {
    if (a.judge.empty()) throw std::invalid_argument("--judge prefix is required");
    Judge judge = Judge::load(a.judge);
    value = transfer_accuracy(hyps, a.target_label, judge);
  } else {
    throw std::invalid_argument("unknown --metric '" + a.metric + "'");
  }

  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  std::cout << a.metric << ": " << buf << "\n";
  if (!a.out.empty()) {
    ensure_out_dir(a.out);
    write_file(a.out + "/eval.csv", "metric,value\n" + a.metric + "," + buf + "\n");
    write_resolved_config(sub, a.out);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
  std::string param = "lambda_sty";
  std::string grid;
  std::string mode = "unsupervised";
  std::string source, target, labeled, neg, pos;
  std::string ae, classifier, mapping, out;
  std::string arch = "offsetnet";
  Scalar lambda_adv = 0, lambda_sty = Scalar(0.5);
  Scalar lr = -1;
  int epochs = 20;
  std::size_t batch = 64;
  Scalar val_fraction = Scalar(0.1);
  int target_label = 1;
  std::uint64_t seed = 0;
};

// One sweep point: train (or configure) a mapping at the given value, then
// measure the tradeoff metrics on the corpus inputs.
int cmd_sweep(const SweepArgs& a, CLI::App* sub) {
  ensure_out_dir(a.out);
  Autoencoder ae = load_frozen_ae(a.ae);
  const Index d = ae.config().d;

  const bool pair_files = !a.neg.empty() || !a.pos.empty();
  LabeledCorpus labeled;
  ParallelCorpus parallel;
  if (a.mode == "unsupervised") {
    if (a.labeled.empty() == !pair_files)
      throw std::invalid_argument("provide either --labeled or both --neg and --pos");
    labeled = pair_files ? load_labeled_pair(a.neg, a.pos, ae.vocab())
                         : load_labeled(a.labeled, ae.vocab());
  } else if (a.mode == "supervised") {
    if (a.source.empty() || a.target.empty())
      throw std::invalid_argument("supervised mode needs --source and --target");
    parallel = load_parallel(a.source, a.target, ae.vocab());
  } else {
    throw std::invalid_argument("unknown --mode '" + a.mode + "'");
  }

  std::optional<MlpBinaryClassifier> style;
  if (!a.classifier.empty()) {
    style = MlpBinaryClassifier::load(a.classifier);
    check_dim(d, style->config().input_dim, "--classifier");
  }
  if ((a.mode == "unsupervised" || a.param == "threshold") && !style)
    throw std::invalid_argument("this sweep needs --classifier");

  // attribute-bearing inputs whose transfer quality the sweep measures
  std::vector<TokenSeq> inputs;
  std::vector<Tokens> input_tokens;
  if (a.mode == "unsupervised") {
    for (std::size_t i = 0; i < labeled.size(); ++i)
      if (labeled.labels[i] != a.target_label && !labeled.items[i].empty())
        inputs.push_back(labeled.items[i]);
  } else {
    for (const TokenSeq& t : parallel.source)
      if (!t.empty()) inputs.push_back(t);
  }
  if (inputs.empty()) throw std::invalid_argument("no usable input sentences");
  for (const TokenSeq& t : inputs) input_tokens.push_back(surface_tokens(t, ae.vocab()));
  const Mat Zx = ae.encode(inputs);

  // gold targets give the supervised sweep a BLEU column
  std::vector<std::vector<Tokens>> gold;
  if (a.mode == "supervised")
    for (std::size_t i = 0; i < parallel.size(); ++i)
      if (!parallel.source[i].empty())
        gold.push_back({surface_tokens(parallel.target[i], ae.vocab())});

  auto measure = [&](const Mapping& mapping, const FgimConfig* fcfg, TradeoffPoint& p) {
    Mat Zh = mapping.forward(Zx);
    if (fcfg) Zh = fgim_refine_batch(Zh, Zx, *style, *fcfg);
    const std::vector<TokenSeq> decoded = ae.decode_greedy(Zh);
    std::vector<Tokens> outputs;
    for (const TokenSeq& t : decoded) outputs.push_back(surface_tokens(t, ae.vocab()));
    p.self_bleu = self_bleu(input_tokens, outputs);
    if (!gold.empty()) p.bleu = corpus_bleu(outputs, gold);
    if (style) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < decoded.size(); ++i) {
        if (decoded[i].empty()) continue;  // unencodable output counts as a miss
        const int pred =
            style->prob(ae.encode_one(decoded[i]))(0, 0) > Scalar(0.5) ? 1 : 0;
        if (pred == a.target_label) ++hits;
      }
      p.accuracy = static_cast<double>(hits) / static_cast<double>(decoded.size());
    }
    p.checkpoint_hash = mapping.hash();
  };

  auto train_mapping = [&](Scalar lambda_adv, Scalar lambda_sty) {
    RngHub hub(a.seed);
    MappingConfig mcfg;
    mcfg.kind = mapping_kind_from_string(a.arch);
    mcfg.d = d;
    auto minit = hub.stream("map.init");
    Mapping mapping(mcfg, minit);
    TrainConfig cfg;
    cfg.weights.lambda_adv = lambda_adv;
    cfg.weights.lambda_sty = lambda_sty;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.val_fraction = a.val_fraction;
    cfg.target_label = a.target_label;
    if (a.mode == "supervised") {
      cfg.lr = a.lr >= 0 ? a.lr : Scalar(1e-4);
      train_emb2emb_supervised(ae, mapping, parallel, cfg, hub);
    } else {
      cfg.lr = a.lr >= 0 ? a.lr : Scalar(5e-5);
      train_emb2emb_unsupervised(ae, mapping, *style, labeled, cfg, hub);
    }
    return mapping;
  };

  PointFn fn;
  if (a.param == "lambda_sty" || a.param == "lambda_adv") {
    fn = [&](Scalar v) {
      TradeoffPoint p;
      const Scalar ladv = a.param == "lambda_adv" ? v : a.lambda_adv;
      const Scalar lsty = a.param == "lambda_sty" ? v : a.lambda_sty;
      Mapping mapping = train_mapping(ladv, lsty);
      measure(mapping, nullptr, p);
      return p;
    };
  } else if (a.param == "multiplier") {
    if (a.mode != "unsupervised")
      throw std::invalid_argument("multiplier sweeps need labeled data");
    std::vector<TokenSeq> c0, c1;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      if (labeled.items[i].empty()) continue;
      (labeled.labels[i] == 0 ? c0 : c1).push_back(labeled.items[i]);
    }
    fn = [&, c0, c1](Scalar v) {
      TradeoffPoint p;
      Mapping mapping = a.target_label == 1 ? fit_mean_offsets(ae, c0, c1, v)
                                            : fit_mean_offsets(ae, c1, c0, v);
      measure(mapping, nullptr, p);
      return p;
    };
  } else if (a.param == "threshold") {
    if (a.mapping.empty())
      throw std::invalid_argument("threshold sweeps need a trained --mapping");
    auto mapping = std::make_shared<Mapping>(Mapping::load(a.mapping));
    check_dim(d, mapping->config().d, "--mapping");
    fn = [&, mapping](Scalar v) {
      TradeoffPoint p;
      FgimConfig fcfg;
      fcfg.threshold = v;
      measure(*mapping, &fcfg, p);
      return p;
    };
  } else {
    throw std::invalid_argument("unknown --param '" + a.param + "'");
  }

  SweepResult res = tradeoff_sweep(a.param, parse_grid(a.grid), fn);
  write_file(a.out + "/sweep.csv", res.csv());
  write_resolved_config(sub, a.out);
  std::cout << "sweep: " << a.out << "/sweep.csv (" << res.points.size()
            << " points)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// wiring

void add_common_fgim_note(CLI::App* app) {
  app->footer("Artifacts are written under --out; the resolved configuration is "
              "stored as config.resolved in the same directory.");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-space text generation: pretrained sentence autoencoder + "
               "trainable embedding-to-embedding mapping"};
  app.require_subcommand(1);
  add_common_fgim_note(&app);

  PretrainArgs pa;
  CLI::App* pre = app.add_subcommand("pretrain",
                                     "Pretrain a denoising sequence autoencoder");
  std::string pre_cfg;
  pre->add_option("--config", pre_cfg, "Flat key=value config file (flags override)");
  pre->add_option("--corpus", pa.corpus, "Training text, one sentence per line")
      ->required()->check(CLI::ExistingFile);
  pre->add_option("--out", pa.out, "Output directory")->required();
  pre->add_option("--d", pa.d, "Bottleneck size")->capture_default_str();
  pre->add_option("--emb-dim", pa.emb_dim, "Token embedding size")->capture_default_str();
  pre->add_option("--lr", pa.lr)->capture_default_str();
  pre->add_option("--p-drop", pa.p_drop, "Denoising token-drop probability")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  pre->add_option("--tf-prob", pa.tf_prob, "Teacher-forcing probability")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  pre->add_option("--epochs", pa.epochs)->capture_default_str();
  pre->add_option("--batch", pa.batch)->capture_default_str();
  pre->add_option("--val-fraction", pa.val_fraction)->check(CLI::Range(0.0, 0.9))
      ->capture_default_str();
  pre->add_option("--vocab-cap", pa.vocab_cap)->capture_default_str();
  pre->add_option("--seed", pa.seed)->capture_default_str();

  TrainClassifierArgs ca;
  CLI::App* tc = app.add_subcommand(
      "train-classifier", "Train a style classifier over a frozen autoencoder, "
                          "or a standalone judge (--judge)");
  std::string tc_cfg;
  tc->add_option("--config", tc_cfg, "Flat key=value config file (flags override)");
  tc->add_option("--labeled", ca.labeled, "label<TAB>text lines")
      ->check(CLI::ExistingFile);
  tc->add_option("--neg", ca.neg, "Class-0 sentences")->check(CLI::ExistingFile);
  tc->add_option("--pos", ca.pos, "Class-1 sentences")->check(CLI::ExistingFile);
  tc->add_option("--ae", ca.ae, "Frozen autoencoder checkpoint")
      ->check(CLI::ExistingFile);
  tc->add_option("--out", ca.out)->required();
  tc->add_flag("--judge", ca.judge, "Train a held-out judge with its own autoencoder");
  tc->add_option("--hidden", ca.hidden)->capture_default_str();
  tc->add_option("--dropout", ca.dropout)->check(CLI::Range(0.0, 0.999))
      ->capture_default_str();
  tc->add_option("--noise-sigma", ca.noise_sigma)->capture_default_str();
  tc->add_option("--lr", ca.lr)->capture_default_str();
  tc->add_option("--epochs", ca.epochs)->capture_default_str();
  tc->add_option("--batch", ca.batch)->capture_default_str();
  tc->add_option("--d", ca.d, "Judge autoencoder bottleneck")->capture_default_str();
  tc->add_option("--emb-dim", ca.emb_dim)->capture_default_str();
  tc->add_option("--ae-epochs", ca.ae_epochs)->capture_default_str();
  tc->add_option("--ae-lr", ca.ae_lr)->capture_default_str();
  tc->add_option("--vocab-cap", ca.vocab_cap)->capture_default_str();
  tc->add_option("--seed", ca.seed)->capture_default_str();

  TrainArgs ta;
  CLI::App* tr = app.add_subcommand("train",
                                    "Train an embedding-to-embedding mapping");
  std::string tr_cfg;
  tr->add_option("--config", tr_cfg, "Flat key=value config file (flags override)");
  tr->add_option("--mode", ta.mode, "supervised | unsupervised")
      ->check(CLI::IsMember({"supervised", "unsupervised"}))->capture_default_str();
  tr->add_option("--source", ta.source)->check(CLI::ExistingFile);
  tr->add_option("--target", ta.target)->check(CLI::ExistingFile);
  tr->add_option("--labeled", ta.labeled)->check(CLI::ExistingFile);
  tr->add_option("--neg", ta.neg)->check(CLI::ExistingFile);
  tr->add_option("--pos", ta.pos)->check(CLI::ExistingFile);
  tr->add_option("--ae", ta.ae, "Frozen autoencoder checkpoint")->required()
      ->check(CLI::ExistingFile);
  tr->add_option("--classifier", ta.classifier, "Frozen style classifier checkpoint")
      ->check(CLI::ExistingFile);
  tr->add_option("--out", ta.out)->required();
  tr->add_option("--arch", ta.mapping, "offsetnet | mlp | resnet")
      ->capture_default_str();
  tr->add_option("--layers", ta.layers)->check(CLI::PositiveNumber)
      ->capture_default_str();
  tr->add_option("--d", ta.d, "Must match the checkpoint bottleneck when given");
  tr->add_option("--lambda-adv", ta.lambda_adv, "Adversarial weight")
      ->check(CLI::Range(0.0, 10.0))->capture_default_str();
  tr->add_option("--lambda-sty", ta.lambda_sty, "Style-content interpolation")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  tr->add_option("--lr", ta.lr, "Defaults per mode: 1e-4 supervised, 5e-5 unsupervised");
  tr->add_option("--epochs", ta.epochs)->capture_default_str();
  tr->add_option("--batch", ta.batch)->capture_default_str();
  tr->add_option("--val-fraction", ta.val_fraction)->check(CLI::Range(0.0, 0.9))
      ->capture_default_str();
  tr->add_option("--target-label", ta.target_label)->check(CLI::Range(0, 1))
      ->capture_default_str();
  tr->add_option("--seed", ta.seed)->capture_default_str();

  InferArgs ia;
  CLI::App* in = app.add_subcommand("infer",
                                    "Map inputs through enc -> mapping -> dec");
  std::string in_cfg;
  in->add_option("--config", in_cfg, "Flat key=value config file (flags override)");
  in->add_option("--input", ia.input, "Input sentences, one per line")->required()
      ->check(CLI::ExistingFile);
  in->add_option("--ae", ia.ae)->required()->check(CLI::ExistingFile);
  in->add_option("--mapping", ia.mapping)->required()->check(CLI::ExistingFile);
  in->add_option("--classifier", ia.classifier)->check(CLI::ExistingFile);
  in->add_option("--out", ia.out)->required();
  in->add_flag("--fgim", ia.fgim, "Refine embeddings until the classifier is confident");
  in->add_option("--fgim-variant", ia.fgim_variant, "classifier | full")
      ->capture_default_str();
  in->add_option("--fgim-threshold", ia.fgim_threshold)->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  in->add_option("--fgim-sty", ia.fgim_sty)->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  in->add_option("--fgim-steps", ia.fgim_steps)->check(CLI::PositiveNumber)
      ->capture_default_str();
  in->add_option("--fgim-schedule", ia.fgim_schedule)->capture_default_str();

  EvalArgs ea;
  CLI::App* ev = app.add_subcommand("eval", "Score outputs with a chosen metric");
  std::string ev_cfg;
  ev->add_option("--config", ev_cfg, "Flat key=value config file (flags override)");
  ev->add_option("--metric", ea.metric, "bleu | sari | self-bleu | accuracy")
      ->check(CLI::IsMember({"bleu", "sari", "self-bleu", "accuracy"}))
      ->capture_default_str();
  ev->add_option("--outputs", ea.outputs, "Hypotheses, one per line")->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--refs", ea.refs, "Reference file (repeatable for multi-reference)")
      ->check(CLI::ExistingFile);
  ev->add_option("--sources", ea.sources, "Source/input sentences")
      ->check(CLI::ExistingFile);
  ev->add_option("--judge", ea.judge, "Judge checkpoint prefix (accuracy metric)");
  ev->add_option("--target-label", ea.target_label)->check(CLI::Range(0, 1))
      ->capture_default_str();
  ev->add_option("--out", ea.out, "Optional directory for eval.csv");

  SweepArgs sa;
  CLI::App* sw = app.add_subcommand("sweep",
                                    "Trace an accuracy/content tradeoff curve");
  std::string sw_cfg;
  sw->add_option("--config", sw_cfg, "Flat key=value config file (flags override)");
  sw->add_option("--param", sa.param, "lambda_sty | lambda_adv | multiplier | threshold")
      ->check(CLI::IsMember({"lambda_sty", "lambda_adv", "multiplier", "threshold"}))
      ->capture_default_str();
  sw->add_option("--grid", sa.grid, "Comma-separated values")->required();
  sw->add_option("--mode", sa.mode, "supervised | unsupervised")
      ->check(CLI::IsMember({"supervised", "unsupervised"}))->capture_default_str();
  sw->add_option("--source", sa.source)->check(CLI::ExistingFile);
  sw->add_option("--target", sa.target)->check(CLI::ExistingFile);
  sw->add_option("--labeled", sa.labeled)->check(CLI::ExistingFile);
  sw->add_option("--neg", sa.neg)->check(CLI::ExistingFile);
  sw->add_option("--pos", sa.pos)->check(CLI::ExistingFile);
  sw->add_option("--ae", sa.ae)->required()->check(CLI::ExistingFile);
  sw->add_option("--classifier", sa.classifier)->check(CLI::ExistingFile);
  sw->add_option("--mapping", sa.mapping, "Trained mapping (threshold sweeps)")
      ->check(CLI::ExistingFile);
  sw->add_option("--out", sa.out)->required();
  sw->add_option("--arch", sa.arch)->capture_default_str();
  sw->add_option("--lambda-adv", sa.lambda_adv)->check(CLI::Range(0.0, 10.0))
      ->capture_default_str();
  sw->add_option("--lambda-sty", sa.lambda_sty)->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  sw->add_option("--lr", sa.lr);
  sw->add_option("--epochs", sa.epochs)->capture_default_str();
  sw->add_option("--batch", sa.batch)->capture_default_str();
  sw->add_option("--val-fraction", sa.val_fraction)->check(CLI::Range(0.0, 0.9))
      ->capture_default_str();
  sw->add_option("--target-label", sa.target_label)->check(CLI::Range(0, 1))
      ->capture_default_str();
  sw->add_option("--seed", sa.seed)->capture_default_str();

  for (CLI::App* sub : {pre, tc, tr, in, ev, sw}) apply_take_last(sub);

  try {
    std::vector<std::string> args = expand_config_args(argc, argv);
    std::reverse(args.begin(), args.end());  // CLI11 wants reversed tokens
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help/version exit 0; usage errors exit 2
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (pre->parsed()) return cmd_pretrain(pa, pre);
    if (tc->parsed()) return cmd_train_classifier(ca, tc);
    if (tr->parsed()) return cmd_train(ta, tr);
    if (in->parsed()) return cmd_infer(ia, in);
    if (ev->parsed()) return cmd_eval(ea, ev);
    if (sw->parsed()) return cmd_sweep(sa, sw);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::logic_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
