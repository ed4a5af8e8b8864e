#include "emb2emb/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "emb2emb/adam.hpp"
#include "emb2emb/checkpoint.hpp"

namespace emb2emb {

namespace {

void init_uniform(Mat& m, Scalar lo, Scalar hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(static_cast<double>(lo),
                                              static_cast<double>(hi));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = static_cast<Scalar>(dist(rng));
}

Scalar sigmoid_s(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

Batch single_batch(const std::vector<TokenSeq>& seqs) {
  std::mt19937_64 unused(0);  // shuffle=false draws nothing
  auto batches = make_batches(seqs, std::max<std::size_t>(seqs.size(), 1), false, unused);
  if (batches.empty()) return Batch{};
  return std::move(batches.front());
}

// Target token at step t: the sentence, then EOS, then PAD (weight 0).
int target_at(const Batch& b, std::size_t row, Index t) {
  const Index len = b.lengths[row];
  if (t < len) return b.rows[row][static_cast<std::size_t>(t)];
  return t == len ? kEosId : kPadId;
}

}  // namespace

Autoencoder::Autoencoder(Vocab vocab, AeConfig cfg, std::mt19937_64& init_rng)
    : vocab_(std::move(vocab)), cfg_(cfg) {
  if (cfg_.d < 1 || cfg_.emb_dim < 1)
    throw std::invalid_argument("autoencoder: d and emb_dim must be positive");
  const Index V = static_cast<Index>(vocab_.size());
  const Index d = cfg_.d;
  const Index e = cfg_.emb_dim;
  const Scalar ws = Scalar(1) / std::sqrt(static_cast<Scalar>(d));

  auto add_mat = [&](const std::string& name, Index r, Index c, Scalar lo, Scalar hi) {
    Parameter& p = params_.add(name, r, c);
    if (lo != hi) init_uniform(p.value, lo, hi, init_rng);
    return &p;
  };
  auto add_lstm = [&](const std::string& prefix) {
    LstmWeights w;
    w.Wx = add_mat(prefix + "_Wx", e, 4 * d, -ws, ws);
    w.Wh = add_mat(prefix + "_Wh", d, 4 * d, -ws, ws);
    w.b = add_mat(prefix + "_b", 1, 4 * d, 0, 0);
    return w;
  };

  embedding_ = add_mat("embedding", V, e, Scalar(-0.1), Scalar(0.1));
  enc_fwd_ = add_lstm("enc_fwd");
  enc_bwd_ = add_lstm("enc_bwd");
  dec_ = add_lstm("dec");
  out_W_ = add_mat("dec_out_W", d, V, -ws, ws);
  out_b_ = add_mat("dec_out_b", 1, V, 0, 0);
  dec_embedding_ = cfg_.share_embedding
                       ? embedding_
                       : add_mat("dec_embedding", V, e, Scalar(-0.1), Scalar(0.1));
}

Var Autoencoder::bind_one(Graph& g, Parameter& p) {
  return frozen_ ? g.frozen(p) : g.param(p);
}

Autoencoder::LstmVars Autoencoder::bind(Graph& g, const LstmWeights& w) {
  return LstmVars{bind_one(g, *w.Wx), bind_one(g, *w.Wh), bind_one(g, *w.b)};
}

void Autoencoder::lstm_step_graph(Graph& g, const LstmVars& w, Var x, Var mask,
                                  Var& h, Var& c, Index d) {
  Var gates = matmul(x, w.Wx) + matmul(h, w.Wh) + w.b;
  Var i = sigmoid(slice_cols(gates, 0, d));
  Var f = sigmoid(slice_cols(gates, d, d));
  Var gg = tanh(slice_cols(gates, 2 * d, d));
  Var o = sigmoid(slice_cols(gates, 3 * d, d));
  Var c_new = f * c + i * gg;
  Var h_new = o * tanh(c_new);
  if (mask.valid()) {
    Var keep = Scalar(1) - mask;
    c = mask * c_new + keep * c;
    h = mask * h_new + keep * h;
  } else {
    c = c_new;
    h = h_new;
  }
}

void Autoencoder::lstm_step_plain(const LstmWeights& w, const Mat& x, const Mat& mask,
                                  Mat& h, Mat& c) {
  const Index d = h.cols();
  Mat gates = x * w.Wx->value + h * w.Wh->value;
  gates.rowwise() += w.b->value.row(0);
  Mat i = gates.middleCols(0, d).unaryExpr([](Scalar v) { return sigmoid_s(v); });
  Mat f = gates.middleCols(d, d).unaryExpr([](Scalar v) { return sigmoid_s(v); });
  Mat gg = gates.middleCols(2 * d, d).array().tanh().matrix();
  Mat o = gates.middleCols(3 * d, d).unaryExpr([](Scalar v) { return sigmoid_s(v); });
  Mat c_new = f.cwiseProduct(c) + i.cwiseProduct(gg);
  Mat h_new = o.cwiseProduct(c_new.array().tanh().matrix());
  if (mask.size() != 0) {
    for (Index r = 0; r < h.rows(); ++r) {
      if (mask(r, 0) != Scalar(0)) {
        c.row(r) = c_new.row(r);
        h.row(r) = h_new.row(r);
      }
    }
  } else {
    c = std::move(c_new);
    h = std::move(h_new);
  }
}

Mat Autoencoder::embed_rows(const std::vector<int>& ids, const Parameter& table) const {
  Mat out(static_cast<Index>(ids.size()), table.value.cols());
  for (std::size_t b = 0; b < ids.size(); ++b) {
    const int id = ids[b];
    if (id < 0 || id >= table.value.rows())
      throw std::out_of_range("autoencoder: token id " + std::to_string(id) +
                              " outside vocabulary");
    out.row(static_cast<Index>(b)) = table.value.row(id);
  }
  return out;
}

Var Autoencoder::encode_in_graph(Graph& g, const Batch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("encode: empty batch");
  for (Index len : batch.lengths)
    if (len == 0) throw std::invalid_argument("encode: empty sequence in batch");

  const Index B = static_cast<Index>(batch.size());
  const Index d = cfg_.d;
  Var emb = bind_one(g, *embedding_);
  LstmVars fwd = bind(g, enc_fwd_);
  LstmVars bwd = bind(g, enc_bwd_);

  std::vector<Var> xs(static_cast<std::size_t>(batch.max_len));
  std::vector<Var> masks(static_cast<std::size_t>(batch.max_len));
  for (Index t = 0; t < batch.max_len; ++t) {
    xs[static_cast<std::size_t>(t)] = embedding_lookup(emb, batch.tokens_at(t));
    masks[static_cast<std::size_t>(t)] = g.constant(batch.mask_at(t));
  }

  Var hf = g.constant(Mat::Zero(B, d));
  Var cf = g.constant(Mat::Zero(B, d));
  for (Index t = 0; t < batch.max_len; ++t)
    lstm_step_graph(g, fwd, xs[static_cast<std::size_t>(t)],
                    masks[static_cast<std::size_t>(t)], hf, cf, d);

  Var hb = g.constant(Mat::Zero(B, d));
  Var cb = g.constant(Mat::Zero(B, d));
  for (Index t = batch.max_len - 1; t >= 0; --t)
    lstm_step_graph(g, bwd, xs[static_cast<std::size_t>(t)],
                    masks[static_cast<std::size_t>(t)], hb, cb, d);

  return affine(hf + hb, Scalar(0.5), 0);
}

Mat Autoencoder::encode(const Batch& batch) const {
  if (batch.size() == 0) throw std::invalid_argument("encode: empty batch");
  for (Index len : batch.lengths)
    if (len == 0) throw std::invalid_argument("encode: empty sequence in batch");
  const Index B = static_cast<Index>(batch.size());
  const Index d = cfg_.d;

  Mat hf = Mat::Zero(B, d), cf = Mat::Zero(B, d);
  for (Index t = 0; t < batch.max_len; ++t) {
    const Mat x = embed_rows(batch.tokens_at(t), *embedding_);
    lstm_step_plain(enc_fwd_, x, batch.mask_at(t), hf, cf);
  }
  Mat hb = Mat::Zero(B, d), cb = Mat::Zero(B, d);
  for (Index t = batch.max_len - 1; t >= 0; --t) {
    const Mat x = embed_rows(batch.tokens_at(t), *embedding_);
    lstm_step_plain(enc_bwd_, x, batch.mask_at(t), hb, cb);
  }
  return Scalar(0.5) * (hf + hb);
}

Mat Autoencoder::encode(const std::vector<TokenSeq>& seqs) const {
  if (seqs.empty()) throw std::invalid_argument("encode: empty input");
  const Index d = cfg_.d;
  Mat out(static_cast<Index>(seqs.size()), d);
  const std::size_t chunk = 256;
  for (std::size_t start = 0; start < seqs.size(); start += chunk) {
    const std::size_t end = std::min(seqs.size(), start + chunk);
    std::vector<TokenSeq> part(seqs.begin() + static_cast<std::ptrdiff_t>(start),
                               seqs.begin() + static_cast<std::ptrdiff_t>(end));
    out.middleRows(static_cast<Index>(start), static_cast<Index>(end - start)) =
        encode(single_batch(part));
  }
  return out;
}

Mat Autoencoder::encode_one(const TokenSeq& seq) const {
  return encode(std::vector<TokenSeq>{seq});
}

Var Autoencoder::decode_teacher_forced(Graph& g, Var z, const Batch& targets,
                                       Scalar tf_prob, std::mt19937_64& rng) {
  if (g.cols(z) != cfg_.d)
    throw std::invalid_argument("decode: z has dimension " + std::to_string(g.cols(z)) +
                                " but decoder expects " + std::to_string(cfg_.d));
  if (static_cast<Index>(targets.size()) != g.rows(z))
    throw std::invalid_argument("decode: batch size mismatch");
  if (tf_prob < 0 || tf_prob > 1)
    throw std::invalid_argument("decode: tf_prob must be in [0,1]");

  const Index B = g.rows(z);
  const Index d = cfg_.d;
  const Index steps = targets.max_len + 1;  // every sentence ends with EOS
  Var emb = bind_one(g, *dec_embedding_);
  LstmVars dec = bind(g, dec_);
  Var Wout = bind_one(g, *out_W_);
  Var bout = bind_one(g, *out_b_);

  Scalar total_weight = 0;
  for (std::size_t b = 0; b < targets.size(); ++b)
    total_weight += static_cast<Scalar>(targets.lengths[b] + 1);

  std::bernoulli_distribution use_gold(static_cast<double>(tf_prob));
  Var h = z;
  Var c = g.constant(Mat::Zero(B, d));
  std::vector<int> prev(targets.size(), kBosId);
  Var prev_logits;
  Var loss;
  for (Index t = 0; t < steps; ++t) {
    std::vector<int> tgt(targets.size());
    std::vector<Scalar> w(targets.size());
    Scalar step_weight = 0;
    for (std::size_t b = 0; b < targets.size(); ++b) {
      tgt[b] = target_at(targets, b, t);
      w[b] = t <= targets.lengths[b] ? Scalar(1) : Scalar(0);
      step_weight += w[b];
    }
    if (step_weight == 0) break;  // only trailing all-PAD columns remain

    if (t > 0) {
      if (use_gold(rng)) {
        for (std::size_t b = 0; b < targets.size(); ++b)
          prev[b] = target_at(targets, b, t - 1);
      } else {
        const Mat& lv = g.value(prev_logits);
        for (Index b = 0; b < B; ++b) {
          Index best = 0;
          lv.row(b).maxCoeff(&best);
          prev[static_cast<std::size_t>(b)] = static_cast<int>(best);
        }
      }
    }
    Var x = embedding_lookup(emb, prev);
    Var no_mask;
    lstm_step_graph(g, dec, x, no_mask, h, c, d);
    Var logits = matmul(h, Wout) + bout;
    prev_logits = logits;

    Var step_loss =
        affine(softmax_cross_entropy(logits, tgt, w), step_weight / total_weight, 0);
    loss = loss.valid() ? loss + step_loss : step_loss;
  }
  return loss;
}

std::vector<TokenSeq> Autoencoder::decode_greedy(const Mat& z, Index max_len) const {
  if (z.cols() != cfg_.d)
    throw std::invalid_argument("decode_greedy: z has dimension " +
                                std::to_string(z.cols()) + " but decoder expects " +
                                std::to_string(cfg_.d));
  const Index B = z.rows();
  Mat h = z;
  Mat c = Mat::Zero(B, cfg_.d);
  std::vector<int> prev(static_cast<std::size_t>(B), kBosId);
  std::vector<TokenSeq> out(static_cast<std::size_t>(B));
  std::vector<char> done(static_cast<std::size_t>(B), 0);
  const Mat no_mask;

  for (Index t = 0; t < max_len; ++t) {
    const Mat x = embed_rows(prev, *dec_embedding_);
    lstm_step_plain(dec_, x, no_mask, h, c);
    Mat logits = h * out_W_->value;
    logits.rowwise() += out_b_->value.row(0);
    bool all_done = true;
    for (Index b = 0; b < B; ++b) {
      Index best = 0;
      logits.row(b).maxCoeff(&best);
      const int tok = static_cast<int>(best);
      prev[static_cast<std::size_t>(b)] = tok;
      char& row_done = done[static_cast<std::size_t>(b)];
      if (!row_done) {
        if (tok == kEosId)
          row_done = 1;
        else
          out[static_cast<std::size_t>(b)].ids.push_back(tok);
      }
      all_done = all_done && row_done != 0;
    }
    if (all_done) break;
  }
  return out;
}

Scalar Autoencoder::teacher_forced_accuracy(const std::vector<TokenSeq>& data) const {
  if (data.empty()) throw std::invalid_argument("teacher_forced_accuracy: empty data");
  std::mt19937_64 unused(0);
  std::size_t correct = 0, total = 0;
  for (const Batch& batch : make_batches(data, cfg_.batch_size, false, unused)) {
    const Index B = static_cast<Index>(batch.size());
    Mat h = encode(batch);
    Mat c = Mat::Zero(B, cfg_.d);
    std::vector<int> prev(batch.size(), kBosId);
    const Mat no_mask;
    for (Index t = 0; t <= batch.max_len; ++t) {
      if (t > 0)
        for (std::size_t b = 0; b < batch.size(); ++b)
          prev[b] = target_at(batch, b, t - 1);
      const Mat x = embed_rows(prev, *dec_embedding_);
      lstm_step_plain(dec_, x, no_mask, h, c);
      Mat logits = h * out_W_->value;
      logits.rowwise() += out_b_->value.row(0);
      for (Index b = 0; b < B; ++b) {
        const std::size_t bi = static_cast<std::size_t>(b);
        if (t > batch.lengths[bi]) continue;
        Index best = 0;
        logits.row(b).maxCoeff(&best);
        correct += static_cast<int>(best) == target_at(batch, bi, t) ? 1 : 0;
        ++total;
      }
    }
  }
  return total == 0 ? Scalar(0) : static_cast<Scalar>(correct) / static_cast<Scalar>(total);
}

std::string Autoencoder::hash() const { return params_hash(params_); }

void Autoencoder::save(const std::string& path) const {
  CheckpointData data;
  data.kind = "autoencoder";
  data.config["d"] = std::to_string(cfg_.d);
  data.config["emb_dim"] = std::to_string(cfg_.emb_dim);
  data.config["share_embedding"] = cfg_.share_embedding ? "1" : "0";
  data.config["tf_prob"] = std::to_string(cfg_.tf_prob);
  data.config["p_drop"] = std::to_string(cfg_.noise.p_drop);
  data.config["frozen"] = frozen_ ? "1" : "0";
  data.vocab_tokens = vocab_.tokens();
  for (const Parameter* p : params_.all()) data.arrays.emplace_back(p->name, p->value);
  save_checkpoint(path, data);
}

Autoencoder Autoencoder::load(const std::string& path) {
  CheckpointData data = load_checkpoint(path, "autoencoder");
  AeConfig cfg;
  cfg.d = static_cast<Index>(std::stoll(data.config.at("d")));
  cfg.emb_dim = static_cast<Index>(std::stoll(data.config.at("emb_dim")));
  cfg.share_embedding = data.config.at("share_embedding") == "1";
  cfg.tf_prob = static_cast<Scalar>(std::stod(data.config.at("tf_prob")));
  cfg.noise.p_drop = static_cast<Scalar>(std::stod(data.config.at("p_drop")));

  std::mt19937_64 unused(0);
  Autoencoder ae(Vocab::from_tokens(data.vocab_tokens), cfg, unused);
  for (Parameter* p : ae.params_.all()) {
    auto it = std::find_if(data.arrays.begin(), data.arrays.end(),
                           [&](const auto& a) { return a.first == p->name; });
    if (it == data.arrays.end())
      throw std::runtime_error("autoencoder checkpoint missing array " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw std::runtime_error("autoencoder checkpoint shape mismatch for " + p->name);
    p->value = it->second;
  }
  ae.frozen_ = data.config.at("frozen") == "1";
  return ae;
}

PretrainResult pretrain_dae(Autoencoder& ae, const std::vector<TokenSeq>& corpus,
                            RngHub& hub) {
  if (ae.frozen()) throw std::logic_error("pretrain_dae: model is frozen");
  std::vector<TokenSeq> data;
  for (const TokenSeq& s : corpus)
    if (!s.empty()) data.push_back(s);
  if (data.empty()) throw std::invalid_argument("pretrain_dae: empty corpus");

  const AeConfig& cfg = ae.config();
  std::vector<TokenSeq> train = data, val;
  if (cfg.val_fraction > 0 && data.size() >= 2) {
    auto split_rng = hub.stream("dae.split");
    std::shuffle(train.begin(), train.end(), split_rng);
    const std::size_t n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(cfg.val_fraction *
                                                static_cast<Scalar>(train.size()))));
    val.assign(train.end() - static_cast<std::ptrdiff_t>(n_val), train.end());
    train.resize(train.size() - n_val);
  } else {
    val = train;
  }

  auto shuffle_rng = hub.stream("dae.shuffle");
  auto noise_rng = hub.stream("dae.noise");
  auto tf_rng = hub.stream("dae.tf");

  AdamOptimizer opt(AdamConfig{cfg.lr, Scalar(0.9), Scalar(0.999), Scalar(1e-8)});
  PretrainResult result;
  std::vector<Mat> best;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Scalar loss_sum = 0;
    std::size_t batch_count = 0;
    for (const Batch& clean : make_batches(train, cfg.batch_size, true, shuffle_rng)) {
      std::vector<TokenSeq> noisy_seqs, clean_seqs;
      noisy_seqs.reserve(clean.size());
      clean_seqs.reserve(clean.size());
      for (std::size_t idx : clean.indices) {
        clean_seqs.push_back(train[idx]);
        noisy_seqs.push_back(apply_noise(train[idx], cfg.noise, noise_rng));
      }
      const Batch noisy_batch = single_batch(noisy_seqs);
      const Batch clean_batch = single_batch(clean_seqs);

      Graph g;
      Var z = ae.encode_in_graph(g, noisy_batch);
      Var loss = ae.decode_teacher_forced(g, z, clean_batch, cfg.tf_prob, tf_rng);
      const Scalar loss_val = g.value(loss)(0, 0);
      if (!std::isfinite(loss_val))
        throw std::runtime_error("pretrain_dae: non-finite loss at epoch " +
                                 std::to_string(epoch));
      ae.params().zero_grads();
      g.backward(loss);
      opt.step(ae.params());
      loss_sum += loss_val;
      ++batch_count;
    }

    const Scalar val_acc = ae.teacher_forced_accuracy(val);
    result.log.push_back({epoch, loss_sum / static_cast<Scalar>(batch_count), val_acc});
    if (val_acc > result.best_val_accuracy || result.best_epoch < 0) {
      result.best_val_accuracy = val_acc;
      result.best_epoch = epoch;
      best.clear();
      for (const Parameter* p : ae.params().all()) best.push_back(p->value);
    }
  }

  if (!best.empty()) {
    std::size_t i = 0;
    for (Parameter* p : ae.params().all()) p->value = best[i++];
  }
  ae.freeze();
  return result;
}

}  // namespace emb2emb
