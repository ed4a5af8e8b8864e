#include "emb2emb/fgim.hpp"

#include <stdexcept>

#include "emb2emb/graph.hpp"
#include "emb2emb/objectives.hpp"

namespace emb2emb {

namespace {

void validate(const FgimConfig& cfg, const Mat& z_hat, const Mat& z_x,
              const MlpBinaryClassifier& c, const MlpBinaryClassifier* disc) {
  if (cfg.schedule.empty()) throw std::invalid_argument("fgim: empty schedule");
  for (std::size_t i = 1; i < cfg.schedule.size(); ++i)
    if (cfg.schedule[i] <= cfg.schedule[i - 1])
      throw std::invalid_argument("fgim: schedule must be ascending");
  if (cfg.threshold < 0 || cfg.threshold > 1)
    throw std::invalid_argument("fgim: threshold must lie in [0,1]");
  if (cfg.max_steps_per_weight <= 0)
    throw std::invalid_argument("fgim: step cap must be positive");
  if (cfg.lambda_sty < 0 || cfg.lambda_sty > 1)
    throw std::invalid_argument("fgim: lambda_sty must lie in [0,1]");
  if (!c.frozen()) throw std::logic_error("fgim: classifier must be frozen");
  if (z_hat.rows() != 1) throw std::invalid_argument("fgim: expected a single row");
  if (cfg.variant == FgimVariant::kFullLoss &&
      (z_x.rows() != z_hat.rows() || z_x.cols() != z_hat.cols()))
    throw std::invalid_argument("fgim: full-loss variant needs a matching source row");
  if (cfg.variant == FgimVariant::kFullLoss && cfg.lambda_adv > 0 && disc == nullptr)
    throw std::invalid_argument("fgim: lambda_adv > 0 needs a discriminator");
}

}  // namespace

FgimResult fgim_refine(const Mat& z_hat, const Mat& z_x, const MlpBinaryClassifier& c,
                       const FgimConfig& cfg, const MlpBinaryClassifier* disc) {
  validate(cfg, z_hat, z_x, c, disc);

  const auto confidence = [&](const Mat& z) { return c.prob(z)(0, 0); };

  FgimResult res;
  res.z = z_hat;
  if (confidence(z_hat) > cfg.threshold) {
    res.hit_threshold = true;
    return res;  // already past the threshold: zero steps
  }

  Mat last = z_hat;
  for (const Scalar omega : cfg.schedule) {
    Mat z = z_hat;  // each stepsize restarts from the original prediction
    for (int step = 0; step < cfg.max_steps_per_weight; ++step) {
      Graph g;
      Var vz = g.leaf(z, true);
      Var loss;
      if (cfg.variant == FgimVariant::kClassifierOnly) {
        loss = style_loss(g, vz, c);
      } else {
        Var sty = style_loss(g, vz, c);
        Var keep = content_loss(g, vz, g.constant(z_x));
        loss = cfg.lambda_sty * sty + (Scalar(1) - cfg.lambda_sty) * keep;
        if (disc != nullptr && cfg.lambda_adv > 0)
          loss = loss + cfg.lambda_adv * adversarial_generator_loss(g, vz, *disc);
      }
      g.backward(loss);
      const Mat grad = g.grad(vz);
      if (!grad.allFinite()) {
        res.z = z_hat;
        res.nonfinite_warning = true;
        return res;
      }
      z -= omega * grad;
      ++res.steps_taken;
      if (confidence(z) > cfg.threshold) {
        res.z = z;
        res.hit_threshold = true;
        return res;
      }
    }
    last = z;
  }

  res.z = last;  // no crossing: final iterate of the largest stepsize
  return res;
}

Mat fgim_refine_batch(const Mat& z_hat, const Mat& z_x, const MlpBinaryClassifier& c,
                      const FgimConfig& cfg, const MlpBinaryClassifier* disc) {
  Mat out(z_hat.rows(), z_hat.cols());
  for (Index r = 0; r < z_hat.rows(); ++r) {
    const Mat src = cfg.variant == FgimVariant::kFullLoss ? Mat(z_x.row(r)) : Mat();
    out.row(r) = fgim_refine(z_hat.row(r), src, c, cfg, disc).z;
  }
  return out;
}

}  // namespace emb2emb
