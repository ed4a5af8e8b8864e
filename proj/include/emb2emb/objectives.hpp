#pragma once

#include <string>
#include <vector>

#include "emb2emb/autoencoder.hpp"
#include "emb2emb/classifier.hpp"
#include "emb2emb/graph.hpp"
#include "emb2emb/mapping.hpp"
#include "emb2emb/metrics.hpp"
#include "emb2emb/rng.hpp"
#include "emb2emb/text.hpp"

namespace emb2emb {

struct LossWeights {
  Scalar lambda_adv = 0;            // >= 0
  Scalar lambda_sty = Scalar(0.5);  // in [0,1]
};

inline const std::vector<Scalar> kLambdaAdvGrid = {Scalar(0.008), Scalar(0.016),
                                                   Scalar(0.032), Scalar(0.064),
                                                   Scalar(0.128)};
inline const std::vector<Scalar> kLambdaStyGrid = {Scalar(0.1), Scalar(0.5), Scalar(0.9),
                                                   Scalar(0.95), Scalar(0.99)};

// --- loss terms (all return 1x1 graph nodes) ---------------------------------

// Mean over the batch of cosine distance between mapped and target rows.
Var supervised_task_loss(Graph& g, Var z_hat, Var z_y);

// Same distance against the *source* embedding: stay close to the input.
Var content_loss(Graph& g, Var z_hat, Var z_x);

// Mean -log c(z_hat): push embeddings to the positive side of the frozen
// style classifier. The classifier must be frozen; its parameters only lend
// values, so backward never touches them.
Var style_loss(Graph& g, Var z_hat, const MlpBinaryClassifier& c);

// Interpolation lambda_sty * style + (1 - lambda_sty) * content, with exact
// endpoints: 0 and 1 return the single remaining term's node untouched.
Var unsupervised_task_loss(Graph& g, Var z_hat, Var z_x, const LossWeights& w,
                           const MlpBinaryClassifier& c);

// Mean binary cross-entropy of D over a real batch (label 1) and a detached
// fake batch (label 0); 2*ln 2 per pair at D = 0.5. D binds trainable.
Var discriminator_objective(Graph& g, const Mat& z_real, const Mat& z_fake,
                            MlpBinaryClassifier& d);

// Mean -log D(z_hat) with D's parameters detached: gradient reaches the
// mapping only.
Var adversarial_generator_loss(Graph& g, Var z_hat, const MlpBinaryClassifier& d);

// task + lambda_adv * adv. lambda_adv == 0 returns the task node itself.
Var total_loss(Var task, Var adv, Scalar lambda_adv);

// --- negative sampling -------------------------------------------------------

std::vector<std::size_t> sample_uniform_indices(std::size_t pool_size,
                                                std::size_t count,
                                                std::mt19937_64& rng);

enum class NegativeMode { kSupervised, kUnsupervised };

// Supervised: encodings of the batch's gold targets. Unsupervised: encodings
// of uniformly sampled sentences from the whole pool.
Mat sample_negatives(NegativeMode mode, const Autoencoder& ae,
                     const std::vector<TokenSeq>& targets_or_pool,
                     const std::vector<std::size_t>& batch_target_indices,
                     std::size_t count, std::mt19937_64& rng);

// --- style-classifier training -----------------------------------------------

struct ClassifierEpochRow {
  int epoch = 0;
  Scalar train_loss = 0;
  Scalar val_accuracy = 0;
};

struct ClassifierTrainResult {
  MlpBinaryClassifier clf;  // frozen, best-validation weights
  Scalar held_out_accuracy = 0;
  std::vector<ClassifierEpochRow> log;
};

// Core fit over embedding rows: BCE with the configured input noise and
// dropout active, held-out accuracy tracked, best weights kept, returned
// frozen. Throws if the data has fewer than two classes.
ClassifierTrainResult fit_binary_classifier(const Mat& Z, const std::vector<int>& labels,
                                            const ClassifierConfig& cfg, RngHub& hub,
                                            const std::string& prefix = "clf");

// Trains a binary classifier on the frozen autoencoder's embeddings. Throws
// if the autoencoder is not frozen. Stream names under `prefix`.
ClassifierTrainResult train_style_classifier(const Autoencoder& ae,
                                             const LabeledCorpus& labeled,
                                             const ClassifierConfig& cfg, RngHub& hub,
                                             const std::string& prefix = "style");

// Held-out evaluation stack: pretrains a fresh autoencoder on the given raw
// text (disjoint from the transfer model's split by construction of the
// caller) and a classifier over its embeddings.
Judge train_judge(const std::vector<std::string>& texts, const std::vector<int>& labels,
                  AeConfig ae_cfg, RngHub& hub, std::size_t vocab_cap = 30000);

// --- mapping training ----------------------------------------------------------

enum class TrainMode { kSupervised, kUnsupervised };

struct TrainConfig {
  LossWeights weights;
  Scalar lr = Scalar(1e-4);  // unsupervised preset: 5e-5
  int epochs = 20;
  std::size_t batch_size = 64;
  Scalar val_fraction = Scalar(0.1);  // 0 validates on the training pool
  int target_label = 1;               // attribute the mapping should produce
};

struct TrainEpochRow {
  int epoch = 0;
  Scalar task_loss = 0;
  Scalar adv_loss = 0;
  Scalar d_loss = 0;
  Scalar validation = 0;  // higher is better
};

struct TrainResult {
  Scalar best_validation = 0;
  int best_epoch = -1;
  std::vector<TrainEpochRow> log;
  // Discriminator parameter hashes at construction and after training; equal
  // exactly when lambda_adv == 0 (that path never updates it).
  std::string d_hash_initial;
  std::string d_hash_final;
  std::string csv() const;  // header + one row per epoch
};

// Supervised: maps enc(x) toward enc(y); validation = corpus BLEU of greedy
// decodes against the gold targets on the held-out pairs.
TrainResult train_emb2emb_supervised(const Autoencoder& ae, Mapping& mapping,
                                     const ParallelCorpus& data, const TrainConfig& cfg,
                                     RngHub& hub);

// Unsupervised: maps source-attribute sentences toward the target attribute
// under the interpolated content/style loss; negatives come from the whole
// corpus. Validation = self-BLEU + latent-classifier accuracy of the decoded
// outputs (both computed on the held-out source-attribute sentences).
TrainResult train_emb2emb_unsupervised(const Autoencoder& ae, Mapping& mapping,
                                       const MlpBinaryClassifier& style,
                                       const LabeledCorpus& data,
                                       const TrainConfig& cfg, RngHub& hub);

struct UnsupValidation {
  double self_bleu = 0;
  double accuracy = 0;
  double score = 0;  // self_bleu + accuracy
};

// The model-selection metric for unsupervised runs, measured through the
// frozen autoencoder and latent style classifier.
UnsupValidation latent_validation(const Autoencoder& ae, const Mapping& mapping,
                                  const MlpBinaryClassifier& style,
                                  const std::vector<TokenSeq>& inputs,
                                  int target_label);

}  // namespace emb2emb
