#pragma once

#include <map>
#include <string>
#include <vector>

#include "emb2emb/autoencoder.hpp"
#include "emb2emb/classifier.hpp"
#include "emb2emb/text.hpp"

namespace emb2emb {

// Metrics operate on surface token sequences so they can score raw text with
// no vocabulary in the loop.
using Tokens = std::vector<std::string>;

Tokens surface_tokens(const TokenSeq& t, const Vocab& v);

// Corpus BLEU over up-to-`max_n`-grams: clipped counts pooled over the corpus,
// uniform weights, geometric mean (0 if any pooled precision is 0), brevity
// penalty against the closest reference length (shorter wins ties).
double corpus_bleu(const std::vector<Tokens>& hypotheses,
                   const std::vector<std::vector<Tokens>>& references, int max_n = 4);

// Per-sentence diagnostic: zero clipped counts (or missing n-gram orders) are
// replaced by eps instead of zeroing the whole score.
double sentence_bleu(const Tokens& hypothesis, const std::vector<Tokens>& references,
                     int max_n = 4, double eps = 1e-9);

// SARI: mean over n ∈ {1..4} of keep-F1, delete-precision, and add-F1 between
// source/hypothesis/reference n-gram multisets, averaged over the three
// components. Degenerate components (no candidate n-grams) contribute 0.
double sari_sentence(const Tokens& source, const Tokens& hypothesis,
                     const std::vector<Tokens>& references);
double sari(const std::vector<Tokens>& sources, const std::vector<Tokens>& hypotheses,
            const std::vector<std::vector<Tokens>>& references);

// Content preservation: BLEU of the outputs against their own inputs.
double self_bleu(const std::vector<Tokens>& inputs, const std::vector<Tokens>& outputs);

// Held-out evaluation classifier: its own autoencoder (trained on a split
// disjoint from the transfer model's) plus a binary classifier over the
// resulting embeddings.
struct Judge {
  Autoencoder ae;
  MlpBinaryClassifier clf;
  Scalar held_out_accuracy = -1;  // < 0 means untrained

  // 0/1 prediction; -1 for sentences that reduce to nothing encodable.
  int predict(const Tokens& sentence) const;

  void save(const std::string& prefix) const;  // prefix.ae / prefix.clf
  static Judge load(const std::string& prefix);
};

// Fraction of outputs the judge assigns to target_label; empty sentences count
// as misses. Throws on an empty output set or an untrained judge.
double transfer_accuracy(const std::vector<Tokens>& outputs, int target_label,
                         const Judge& judge);

struct EvalReport {
  std::string metric;
  std::string level;  // "corpus"
  double corpus_value = 0;
  std::vector<double> per_sentence;
  std::map<std::string, std::string> fingerprint;
};

EvalReport bleu_report(const std::vector<Tokens>& hypotheses,
                       const std::vector<std::vector<Tokens>>& references);
EvalReport sari_report(const std::vector<Tokens>& sources,
                       const std::vector<Tokens>& hypotheses,
                       const std::vector<std::vector<Tokens>>& references);

}  // namespace emb2emb
