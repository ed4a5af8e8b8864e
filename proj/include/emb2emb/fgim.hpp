#pragma once

#include <vector>

#include "emb2emb/classifier.hpp"
#include "emb2emb/types.hpp"

namespace emb2emb {

enum class FgimVariant { kClassifierOnly, kFullLoss };

struct FgimConfig {
  std::vector<Scalar> schedule = {1, 10, 100, 1000};  // nonempty, ascending
  int max_steps_per_weight = 30;
  Scalar threshold = Scalar(0.99);  // in [0,1]
  FgimVariant variant = FgimVariant::kClassifierOnly;
  Scalar lambda_sty = Scalar(0.5);  // full-loss interpolation weight
  Scalar lambda_adv = 0;            // full-loss adversarial weight (needs disc)
};

inline const std::vector<Scalar> kFgimThresholdSweep = {
    Scalar(0.5), Scalar(0.9), Scalar(0.99), Scalar(0.999), Scalar(0.9999)};

struct FgimResult {
  Mat z;                   // 1×d refined embedding
  int steps_taken = 0;     // total gradient steps over all weights
  bool hit_threshold = false;
  bool nonfinite_warning = false;  // refinement aborted, input returned
};

// Inference-time refinement: for each stepsize in the schedule, restart from
// the original embedding and descend the chosen loss until the classifier's
// positive probability exceeds the threshold or the step cap is reached.
// Returns the first crossing iterate, else the last weight's final iterate.
// classifier-only: loss = -log c(z); full-loss: (1-λ_sty)·cosine(z, z_x)
// + λ_sty·(-log c(z)) + λ_adv·(-log D(z)).
FgimResult fgim_refine(const Mat& z_hat, const Mat& z_x, const MlpBinaryClassifier& c,
                       const FgimConfig& cfg,
                       const MlpBinaryClassifier* disc = nullptr);

// Row-wise application over a batch; returns the refined matrix.
Mat fgim_refine_batch(const Mat& z_hat, const Mat& z_x, const MlpBinaryClassifier& c,
                      const FgimConfig& cfg,
                      const MlpBinaryClassifier* disc = nullptr);

}  // namespace emb2emb
