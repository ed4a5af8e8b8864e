#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "emb2emb/graph.hpp"
#include "emb2emb/types.hpp"

namespace emb2emb {

struct ClassifierConfig {
  Index input_dim = 64;
  std::vector<Index> hidden = {512};
  Scalar dropout = 0;            // applied at the input and after each hidden layer
  Scalar input_noise_sigma = 0;  // isotropic Gaussian noise on the input
  Scalar lr = Scalar(1e-4);
  int epochs = 20;
  std::size_t batch_size = 64;
  Scalar val_fraction = Scalar(0.1);
};

// Latent style classifier preset: one hidden layer of 512, heavy input
// regularization so the classifier stays smooth enough to steer gradients.
ClassifierConfig style_classifier_config(Index input_dim);

// Adversarial discriminator preset: two hidden layers of 300, slow Adam.
ClassifierConfig discriminator_config(Index input_dim);

// MLP over embedding rows with ReLU hidden layers and a sigmoid output
// probability of the positive class. Noise and dropout are active only on the
// training graph path; the plain path is deterministic.
class MlpBinaryClassifier {
 public:
  MlpBinaryClassifier(ClassifierConfig cfg, std::mt19937_64& init_rng);

  // B×input_dim -> B×1 logit. `training` turns on input noise and dropout and
  // then requires an rng.
  Var logit_in_graph(Graph& g, Var x, bool training = false,
                     std::mt19937_64* rng = nullptr);
  Var prob_in_graph(Graph& g, Var x, bool training = false,
                    std::mt19937_64* rng = nullptr);

  // Detached graph path: parameters only lend their values, so backward can
  // reach x but never this model — used when another component trains against
  // this one. No noise, no dropout.
  Var logit_in_graph_detached(Graph& g, Var x) const;
  Var prob_in_graph_detached(Graph& g, Var x) const;

  // Deterministic inference path (no tape, no noise). Returns B×1.
  Mat prob(const Mat& x) const;

  const ClassifierConfig& config() const { return cfg_; }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::string hash() const;

  // `extra` rides along in the checkpoint's config map (unknown keys are
  // ignored on load).
  void save(const std::string& path,
            const std::map<std::string, std::string>& extra = {}) const;
  static MlpBinaryClassifier load(const std::string& path);

 private:
  struct Layer {
    Parameter* W;
    Parameter* b;
  };

  ClassifierConfig cfg_;
  bool frozen_ = false;
  ParamSet params_;
  std::vector<Layer> layers_;
  Parameter* out_W_;
  Parameter* out_b_;
};

}  // namespace emb2emb
