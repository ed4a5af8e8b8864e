#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "emb2emb/graph.hpp"
#include "emb2emb/rng.hpp"
#include "emb2emb/text.hpp"
#include "emb2emb/types.hpp"

namespace emb2emb {

struct AeConfig {
  Index d = 64;              // bottleneck size (each LSTM direction's hidden size)
  Index emb_dim = 300;       // token embedding size
  bool share_embedding = true;
  Scalar tf_prob = Scalar(0.5);
  NoiseConfig noise;
  Scalar lr = Scalar(1e-3);
  std::size_t batch_size = 64;
  int epochs = 20;
  Scalar val_fraction = Scalar(0.1);  // 0 validates on the training set itself
};

// One-layer BiLSTM encoder with averaged final states, one-layer LSTM decoder
// whose initial hidden state is the bottleneck vector (cell state zero),
// and greedy decoding. Trainable until freeze(); frozen models only lend
// read-only views to downstream graphs.
class Autoencoder {
 public:
  Autoencoder(Vocab vocab, AeConfig cfg, std::mt19937_64& init_rng);

  // --- inference paths (plain Eigen, no tape) ---
  // z = (h_fwd_last + h_bwd_last) / 2 with "last" respecting true lengths.
  Mat encode(const Batch& batch) const;
  Mat encode(const std::vector<TokenSeq>& seqs) const;
  Mat encode_one(const TokenSeq& seq) const;

  // Starts from BOS, argmax each step, stops at EOS or max_len per row.
  std::vector<TokenSeq> decode_greedy(const Mat& z, Index max_len = kMaxTokens) const;

  // Fraction of teacher-forced next-token predictions (gold history, clean
  // inputs) that match the targets, EOS position included.
  Scalar teacher_forced_accuracy(const std::vector<TokenSeq>& data) const;

  // --- graph paths (used by pretraining) ---
  // Parameters bind trainably unless the model is frozen.
  Var encode_in_graph(Graph& g, const Batch& batch);
  // Mean masked cross-entropy of the target batch given bottleneck z; the
  // per-step input is the gold token with probability tf_prob, else the
  // previous step's argmax (one draw per step).
  Var decode_teacher_forced(Graph& g, Var z, const Batch& targets, Scalar tf_prob,
                            std::mt19937_64& rng);

  const Vocab& vocab() const { return vocab_; }
  const AeConfig& config() const { return cfg_; }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::string hash() const;

  void save(const std::string& path) const;
  static Autoencoder load(const std::string& path);

 private:
  struct LstmWeights {
    Parameter* Wx;
    Parameter* Wh;
    Parameter* b;
  };
  struct LstmVars {
    Var Wx, Wh, b;
  };
  LstmVars bind(Graph& g, const LstmWeights& w);
  Var bind_one(Graph& g, Parameter& p);

  // One masked LSTM step on the tape.
  static void lstm_step_graph(Graph& g, const LstmVars& w, Var x, Var mask, Var& h,
                              Var& c, Index d);
  // Same step on plain matrices.
  static void lstm_step_plain(const LstmWeights& w, const Mat& x, const Mat& mask,
                              Mat& h, Mat& c);

  Mat embed_rows(const std::vector<int>& ids, const Parameter& table) const;

  Vocab vocab_;
  AeConfig cfg_;
  bool frozen_ = false;
  ParamSet params_;
  Parameter* embedding_;
  Parameter* dec_embedding_;  // == embedding_ when shared
  LstmWeights enc_fwd_, enc_bwd_, dec_;
  Parameter* out_W_;
  Parameter* out_b_;
};

struct PretrainLogRow {
  int epoch = 0;
  Scalar train_loss = 0;
  Scalar val_accuracy = 0;
};

struct PretrainResult {
  Scalar best_val_accuracy = 0;
  int best_epoch = -1;
  std::vector<PretrainLogRow> log;
};

// Denoising-autoencoder pretraining: reconstruct each clean sentence from its
// noised version; keeps the best-validation-accuracy parameters and returns
// the model frozen. Aborts with a diagnostic if the loss stops being finite.
PretrainResult pretrain_dae(Autoencoder& ae, const std::vector<TokenSeq>& corpus,
                            RngHub& hub);

}  // namespace emb2emb
