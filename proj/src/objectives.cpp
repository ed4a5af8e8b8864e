#include "emb2emb/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "emb2emb/adam.hpp"

namespace emb2emb {

namespace {

Mat rows_of(const Mat& src, const std::vector<std::size_t>& idx) {
  Mat out(static_cast<Index>(idx.size()), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Index>(i)) = src.row(static_cast<Index>(idx[i]));
  return out;
}

std::vector<Mat> snapshot(const ParamSet& ps) {
  std::vector<Mat> out;
  for (const Parameter* p : ps.all()) out.push_back(p->value);
  return out;
}

void restore(ParamSet& ps, const std::vector<Mat>& snap) {
  std::size_t i = 0;
  for (Parameter* p : ps.all()) p->value = snap[i++];
}

// Shuffled train/validation index split; val_fraction == 0 (or a singleton
// pool) validates on the training pool itself.
void split_indices(std::vector<std::size_t> pool, Scalar val_fraction,
                   std::mt19937_64 rng, std::vector<std::size_t>& train,
                   std::vector<std::size_t>& val) {
  if (val_fraction > 0 && pool.size() >= 2) {
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::lround(val_fraction * static_cast<Scalar>(pool.size()))));
    val.assign(pool.end() - static_cast<std::ptrdiff_t>(n_val), pool.end());
    pool.resize(pool.size() - n_val);
    train = std::move(pool);
  } else {
    train = pool;
    val = std::move(pool);
  }
}

void check_finite(Scalar v, const char* what, const LossWeights& w) {
  if (std::isfinite(v)) return;
  std::ostringstream os;
  os << what << " became non-finite (lambda_adv=" << w.lambda_adv
     << ", lambda_sty=" << w.lambda_sty << ")";
  throw std::runtime_error(os.str());
}

}  // namespace

Var supervised_task_loss(Graph&, Var z_hat, Var z_y) {
  return mean_all(cosine_distance(z_hat, z_y));
}

Var content_loss(Graph&, Var z_hat, Var z_x) {
  return mean_all(cosine_distance(z_hat, z_x));
}

Var style_loss(Graph& g, Var z_hat, const MlpBinaryClassifier& c) {
  if (!c.frozen()) throw std::logic_error("style_loss: classifier must be frozen");
  Var p = c.prob_in_graph_detached(g, z_hat);
  return mean_all(-log_clamped(p));
}

Var unsupervised_task_loss(Graph& g, Var z_hat, Var z_x, const LossWeights& w,
                           const MlpBinaryClassifier& c) {
  if (w.lambda_sty < 0 || w.lambda_sty > 1)
    throw std::invalid_argument("lambda_sty must lie in [0,1]");
  if (w.lambda_sty == 0) return content_loss(g, z_hat, z_x);
  if (w.lambda_sty == 1) return style_loss(g, z_hat, c);
  Var sty = style_loss(g, z_hat, c);
  Var keep = content_loss(g, z_hat, z_x);
  return w.lambda_sty * sty + (Scalar(1) - w.lambda_sty) * keep;
}

Var discriminator_objective(Graph& g, const Mat& z_real, const Mat& z_fake,
                            MlpBinaryClassifier& d) {
  Var pr = d.prob_in_graph(g, g.constant(z_real));
  Var pf = d.prob_in_graph(g, g.constant(z_fake));
  Var real_term = mean_all(-log_clamped(pr));
  Var fake_term = mean_all(-log_clamped(Scalar(1) - pf));
  return real_term + fake_term;
}

Var adversarial_generator_loss(Graph& g, Var z_hat, const MlpBinaryClassifier& d) {
  Var p = d.prob_in_graph_detached(g, z_hat);
  return mean_all(-log_clamped(p));
}

Var total_loss(Var task, Var adv, Scalar lambda_adv) {
  if (lambda_adv < 0) throw std::invalid_argument("lambda_adv must be >= 0");
  if (lambda_adv == 0) return task;
  return task + lambda_adv * adv;
}

std::vector<std::size_t> sample_uniform_indices(std::size_t pool_size,
                                                std::size_t count,
                                                std::mt19937_64& rng) {
  if (pool_size == 0) throw std::invalid_argument("sample: empty pool");
  std::uniform_int_distribution<std::size_t> dist(0, pool_size - 1);
  std::vector<std::size_t> out(count);
  for (std::size_t& v : out) v = dist(rng);
  return out;
}

Mat sample_negatives(NegativeMode mode, const Autoencoder& ae,
                     const std::vector<TokenSeq>& targets_or_pool,
                     const std::vector<std::size_t>& batch_target_indices,
                     std::size_t count, std::mt19937_64& rng) {
  if (targets_or_pool.empty()) throw std::invalid_argument("sample_negatives: empty pool");
  std::vector<TokenSeq> picked;
  picked.reserve(count);
  if (mode == NegativeMode::kSupervised) {
    for (std::size_t idx : batch_target_indices)
      picked.push_back(targets_or_pool.at(idx));
  } else {
    for (std::size_t idx :
         sample_uniform_indices(targets_or_pool.size(), count, rng))
      picked.push_back(targets_or_pool[idx]);
  }
  return ae.encode(picked);
}

// --- classifier training ------------------------------------------------------

ClassifierTrainResult fit_binary_classifier(const Mat& Z, const std::vector<int>& labels,
                                            const ClassifierConfig& cfg, RngHub& hub,
                                            const std::string& prefix) {
  if (static_cast<std::size_t>(Z.rows()) != labels.size())
    throw std::invalid_argument("classifier training: rows/labels size mismatch");
  if (labels.empty()) throw std::invalid_argument("classifier training: empty corpus");
  const bool has0 = std::find(labels.begin(), labels.end(), 0) != labels.end();
  const bool has1 = std::find(labels.begin(), labels.end(), 1) != labels.end();
  if (!has0 || !has1)
    throw std::invalid_argument("classifier training needs both classes");

  std::vector<std::size_t> pool(labels.size());
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<std::size_t> train_idx, val_idx;
  split_indices(std::move(pool), cfg.val_fraction, hub.stream(prefix + ".split"),
                train_idx, val_idx);

  ClassifierConfig model_cfg = cfg;
  model_cfg.input_dim = Z.cols();
  auto init_rng = hub.stream(prefix + ".init");
  MlpBinaryClassifier clf(model_cfg, init_rng);

  auto shuffle_rng = hub.stream(prefix + ".shuffle");
  auto noise_rng = hub.stream(prefix + ".noise");
  AdamOptimizer opt(AdamConfig{model_cfg.lr, Scalar(0.9), Scalar(0.999), Scalar(1e-8)});

  ClassifierTrainResult result{std::move(clf), 0, {}};

  auto val_accuracy = [&]() {
    const Mat p = result.clf.prob(rows_of(Z, val_idx));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < val_idx.size(); ++i) {
      const int pred = p(static_cast<Index>(i), 0) > Scalar(0.5) ? 1 : 0;
      if (pred == labels[val_idx[i]]) ++hits;
    }
    return static_cast<Scalar>(hits) / static_cast<Scalar>(val_idx.size());
  };

  std::vector<Mat> best;
  for (int epoch = 1; epoch <= model_cfg.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);
    Scalar loss_sum = 0;
    for (std::size_t start = 0; start < train_idx.size();
         start += model_cfg.batch_size) {
      const std::size_t stop =
          std::min(train_idx.size(), start + model_cfg.batch_size);
      const std::vector<std::size_t> batch(train_idx.begin() + start,
                                           train_idx.begin() + stop);
      Mat y(static_cast<Index>(batch.size()), 1);
      for (std::size_t i = 0; i < batch.size(); ++i)
        y(static_cast<Index>(i), 0) = static_cast<Scalar>(labels[batch[i]]);

      Graph g;
      Var x = g.constant(rows_of(Z, batch));
      Var p = result.clf.prob_in_graph(g, x, true, &noise_rng);
      Var vy = g.constant(y);
      Var bce =
          mean_all(-(vy * log_clamped(p) + (Scalar(1) - vy) * log_clamped(Scalar(1) - p)));
      const Scalar loss = g.value(bce)(0, 0);
      if (!std::isfinite(loss))
        throw std::runtime_error("classifier training: non-finite loss");
      result.clf.params().zero_grads();
      g.backward(bce);
      opt.step(result.clf.params());
      loss_sum += loss * static_cast<Scalar>(batch.size());
    }

    const Scalar acc = val_accuracy();
    result.log.push_back(
        {epoch, loss_sum / static_cast<Scalar>(train_idx.size()), acc});
    if (best.empty() || acc > result.held_out_accuracy) {
      result.held_out_accuracy = acc;
      best = snapshot(result.clf.params());
    }
  }

  if (!best.empty()) restore(result.clf.params(), best);
  result.clf.freeze();
  return result;
}

ClassifierTrainResult train_style_classifier(const Autoencoder& ae,
                                             const LabeledCorpus& labeled,
                                             const ClassifierConfig& cfg, RngHub& hub,
                                             const std::string& prefix) {
  if (!ae.frozen())
    throw std::logic_error("train_style_classifier: autoencoder must be frozen");

  std::vector<TokenSeq> items;
  std::vector<int> labels;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (labeled.items[i].empty()) continue;
    items.push_back(labeled.items[i]);
    labels.push_back(labeled.labels[i]);
  }
  if (items.empty()) throw std::invalid_argument("classifier training: empty corpus");
  return fit_binary_classifier(ae.encode(items), labels, cfg, hub, prefix);
}

Judge train_judge(const std::vector<std::string>& texts, const std::vector<int>& labels,
                  AeConfig ae_cfg, RngHub& hub, std::size_t vocab_cap) {
  if (texts.size() != labels.size())
    throw std::invalid_argument("train_judge: texts/labels size mismatch");
  if (texts.empty()) throw std::invalid_argument("train_judge: empty corpus");

  // The judge gets its own seed universe so toggling it never perturbs the
  // transfer model's draws.
  RngHub sub(hub.stream("judge.root")());

  Vocab vocab = Vocab::build(texts, vocab_cap);
  LabeledCorpus corpus;
  std::vector<TokenSeq> all;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    TokenSeq seq = encode_text(texts[i], vocab);
    if (seq.empty()) continue;
    corpus.items.push_back(seq);
    corpus.labels.push_back(labels[i]);
    all.push_back(std::move(seq));
  }

  auto init_rng = sub.stream("judge.ae_init");
  Autoencoder ae(std::move(vocab), ae_cfg, init_rng);
  pretrain_dae(ae, all, sub);

  ClassifierTrainResult trained = train_style_classifier(
      ae, corpus, style_classifier_config(ae_cfg.d), sub, "judge.clf");
  return Judge{std::move(ae), std::move(trained.clf), trained.held_out_accuracy};
}

// --- mapping training -----------------------------------------------------------

std::string TrainResult::csv() const {
  std::string out = "epoch,task_loss,adv_loss,d_loss,validation\n";
  char buf[256];
  for (const TrainEpochRow& r : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", r.epoch,
                  static_cast<double>(r.task_loss), static_cast<double>(r.adv_loss),
                  static_cast<double>(r.d_loss), static_cast<double>(r.validation));
    out += buf;
  }
  return out;
}

namespace {

struct AlternatingTrainer {
  const Autoencoder& ae;
  Mapping& mapping;
  const TrainConfig& cfg;
  MlpBinaryClassifier disc;
  AdamOptimizer opt_phi;
  AdamOptimizer opt_d;
  std::mt19937_64 shuffle_rng;
  TrainResult result;
  std::vector<Mat> best;

  AlternatingTrainer(const Autoencoder& ae_, Mapping& mapping_, const TrainConfig& cfg_,
                     RngHub& hub)
      : ae(ae_),
        mapping(mapping_),
        cfg(cfg_),
        disc(make_disc(ae_, hub)),
        opt_phi(AdamConfig{cfg_.lr, Scalar(0.9), Scalar(0.999), Scalar(1e-8)}),
        opt_d(AdamConfig{disc.config().lr, Scalar(0.9), Scalar(0.999), Scalar(1e-8)}),
        shuffle_rng(hub.stream("e2e.shuffle")) {
    if (!ae.frozen()) throw std::logic_error("train_emb2emb: autoencoder must be frozen");
    if (mapping.frozen()) throw std::logic_error("train_emb2emb: mapping is frozen");
    if (cfg.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (cfg.weights.lambda_adv < 0)
      throw std::invalid_argument("lambda_adv must be >= 0");
    result.d_hash_initial = disc.hash();
  }

  static MlpBinaryClassifier make_disc(const Autoencoder& ae_, RngHub& hub) {
    auto rng = hub.stream("e2e.dinit");
    return MlpBinaryClassifier(discriminator_config(ae_.config().d), rng);
  }

  // One pass over the training pool. `task_of` builds the task node for a
  // batch; `real_of` yields the discriminator's real batch.
  template <typename TaskFn, typename RealFn>
  void run_epoch(int epoch, const Mat& Zx, std::vector<std::size_t>& order,
                 TaskFn&& task_of, RealFn&& real_of) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    Scalar task_sum = 0, adv_sum = 0, d_sum = 0;
    std::size_t seen = 0, d_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::vector<std::size_t> batch(order.begin() + start,
                                           order.begin() + stop);
      const Mat Zx_b = rows_of(Zx, batch);

      Graph g;
      Var vx = g.constant(Zx_b);
      Var z_hat = mapping.forward_in_graph(g, vx);
      Var task = task_of(g, z_hat, vx, batch);
      Var loss = task;
      Scalar adv_val = 0;
      if (cfg.weights.lambda_adv > 0) {
        Var adv = adversarial_generator_loss(g, z_hat, disc);
        loss = total_loss(task, adv, cfg.weights.lambda_adv);
        adv_val = g.value(adv)(0, 0);
      }
      const Scalar task_val = g.value(task)(0, 0);
      check_finite(g.value(loss)(0, 0), "mapping loss", cfg.weights);
      mapping.params().zero_grads();
      g.backward(loss);
      opt_phi.step(mapping.params());

      if (cfg.weights.lambda_adv > 0) {
        const Mat fake = mapping.forward(Zx_b);
        const Mat real = real_of(batch);
        Graph gd;
        Var d_loss = discriminator_objective(gd, real, fake, disc);
        const Scalar d_val = gd.value(d_loss)(0, 0);
        check_finite(d_val, "discriminator loss", cfg.weights);
        disc.params().zero_grads();
        gd.backward(d_loss);
        opt_d.step(disc.params());
        d_sum += d_val;
        ++d_batches;
      }

      task_sum += task_val * static_cast<Scalar>(batch.size());
      adv_sum += adv_val * static_cast<Scalar>(batch.size());
      seen += batch.size();
    }

    TrainEpochRow row;
    row.epoch = epoch;
    row.task_loss = task_sum / static_cast<Scalar>(seen);
    row.adv_loss = adv_sum / static_cast<Scalar>(seen);
    row.d_loss = d_batches ? d_sum / static_cast<Scalar>(d_batches) : 0;
    result.log.push_back(row);
  }

  void track_validation(Scalar validation) {
    result.log.back().validation = validation;
    if (best.empty() || validation > result.best_validation) {
      result.best_validation = validation;
      result.best_epoch = result.log.back().epoch;
      best = snapshot(mapping.params());
    }
  }

  void finish() {
    if (!best.empty()) restore(mapping.params(), best);
    result.d_hash_final = disc.hash();
  }
};

}  // namespace

TrainResult train_emb2emb_supervised(const Autoencoder& ae, Mapping& mapping,
                                     const ParallelCorpus& data, const TrainConfig& cfg,
                                     RngHub& hub) {
  std::vector<TokenSeq> sources, targets;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.source[i].empty() || data.target[i].empty()) continue;
    sources.push_back(data.source[i]);
    targets.push_back(data.target[i]);
  }
  if (sources.empty())
    throw std::invalid_argument("train_emb2emb_supervised: empty corpus");

  AlternatingTrainer t(ae, mapping, cfg, hub);
  const Mat Zx = ae.encode(sources);
  const Mat Zy = ae.encode(targets);

  std::vector<std::size_t> pool(sources.size());
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<std::size_t> train_idx, val_idx;
  split_indices(std::move(pool), cfg.val_fraction, hub.stream("e2e.split"), train_idx,
                val_idx);

  std::vector<Tokens> val_refs;
  for (std::size_t idx : val_idx)
    val_refs.push_back(surface_tokens(targets[idx], ae.vocab()));
  const Mat Zx_val = rows_of(Zx, val_idx);

  auto task_of = [&](Graph& g, Var z_hat, Var, const std::vector<std::size_t>& batch) {
    return supervised_task_loss(g, z_hat, g.constant(rows_of(Zy, batch)));
  };
  auto real_of = [&](const std::vector<std::size_t>& batch) {
    return rows_of(Zy, batch);  // gold-target encodings
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    t.run_epoch(epoch, Zx, train_idx, task_of, real_of);
    const std::vector<TokenSeq> decoded = ae.decode_greedy(mapping.forward(Zx_val));
    std::vector<Tokens> hyps;
    std::vector<std::vector<Tokens>> refs;
    for (std::size_t i = 0; i < decoded.size(); ++i) {
      hyps.push_back(surface_tokens(decoded[i], ae.vocab()));
      refs.push_back({val_refs[i]});
    }
    t.track_validation(static_cast<Scalar>(corpus_bleu(hyps, refs)));
  }
  t.finish();
  return t.result;
}

UnsupValidation latent_validation(const Autoencoder& ae, const Mapping& mapping,
                                  const MlpBinaryClassifier& style,
                                  const std::vector<TokenSeq>& inputs,
                                  int target_label) {
  if (inputs.empty()) throw std::invalid_argument("latent_validation: no inputs");
  const Mat Z = ae.encode(inputs);
  const std::vector<TokenSeq> decoded = ae.decode_greedy(mapping.forward(Z));

  std::vector<Tokens> in_tokens, out_tokens;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    in_tokens.push_back(surface_tokens(inputs[i], ae.vocab()));
    out_tokens.push_back(surface_tokens(decoded[i], ae.vocab()));
  }

  UnsupValidation v;
  v.self_bleu = self_bleu(in_tokens, out_tokens);
  std::size_t hits = 0;
  for (const TokenSeq& seq : decoded) {
    if (seq.empty()) continue;  // nothing decodable counts as a miss
    const Scalar p = style.prob(ae.encode_one(seq))(0, 0);
    const int pred = p > Scalar(0.5) ? 1 : 0;
    if (pred == target_label) ++hits;
  }
  v.accuracy = static_cast<double>(hits) / static_cast<double>(decoded.size());
  v.score = v.self_bleu + v.accuracy;
  return v;
}

TrainResult train_emb2emb_unsupervised(const Autoencoder& ae, Mapping& mapping,
                                       const MlpBinaryClassifier& style,
                                       const LabeledCorpus& data,
                                       const TrainConfig& cfg, RngHub& hub) {
  if (!style.frozen())
    throw std::logic_error("train_emb2emb_unsupervised: style classifier must be frozen");
  if (cfg.target_label != 0 && cfg.target_label != 1)
    throw std::invalid_argument("target_label must be 0 or 1");

  std::vector<TokenSeq> all;
  std::vector<int> labels;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.items[i].empty()) continue;
    all.push_back(data.items[i]);
    labels.push_back(data.labels[i]);
  }
  if (all.empty()) throw std::invalid_argument("train_emb2emb_unsupervised: empty corpus");

  const int source_label = 1 - cfg.target_label;
  std::vector<std::size_t> source_rows;
  for (std::size_t i = 0; i < all.size(); ++i)
    if (labels[i] == source_label) source_rows.push_back(i);
  if (source_rows.empty())
    throw std::invalid_argument("train_emb2emb_unsupervised: no source-attribute data");

  AlternatingTrainer t(ae, mapping, cfg, hub);
  const Mat Z_all = ae.encode(all);
  const Mat Zx = rows_of(Z_all, source_rows);  // training pool, row i = source_rows[i]

  std::vector<std::size_t> pool(source_rows.size());
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<std::size_t> train_idx, val_idx;
  split_indices(std::move(pool), cfg.val_fraction, hub.stream("e2e.split"), train_idx,
                val_idx);

  std::vector<TokenSeq> val_inputs;
  for (std::size_t idx : val_idx) val_inputs.push_back(all[source_rows[idx]]);

  auto neg_rng = hub.stream("e2e.negatives");
  auto task_of = [&](Graph& g, Var z_hat, Var vx, const std::vector<std::size_t>&) {
    return unsupervised_task_loss(g, z_hat, vx, cfg.weights, style);
  };
  auto real_of = [&](const std::vector<std::size_t>& batch) {
    const auto idx = sample_uniform_indices(all.size(), batch.size(), neg_rng);
    return rows_of(Z_all, idx);
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    t.run_epoch(epoch, Zx, train_idx, task_of, real_of);
    const UnsupValidation v =
        latent_validation(ae, mapping, style, val_inputs, cfg.target_label);
    t.track_validation(static_cast<Scalar>(v.score));
  }
  t.finish();
  return t.result;
}

}  // namespace emb2emb
