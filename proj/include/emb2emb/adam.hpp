#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "emb2emb/graph.hpp"
#include "emb2emb/types.hpp"

namespace emb2emb {

struct AdamConfig {
  Scalar lr = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
};

// Adam with bias correction. Moment buffers are keyed by parameter address,
// so the same optimizer instance must always be stepped with parameters that
// outlive it.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Applies one update from the accumulated grads, then leaves grads intact
  // (callers usually zero them before the next forward pass).
  void step(const std::vector<Parameter*>& params);
  void step(ParamSet& params) { step(params.all()); }

  std::uint64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(Scalar lr) { cfg_.lr = lr; }

 private:
  struct Moments {
    Mat m;
    Mat v;
  };
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::unordered_map<const Parameter*, Moments> state_;
};

}  // namespace emb2emb
