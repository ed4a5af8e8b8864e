#include "emb2emb/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace emb2emb {

void AdamOptimizer::step(const std::vector<Parameter*>& params) {
  ++t_;
  const Scalar bc1 = Scalar(1) - std::pow(cfg_.beta1, static_cast<Scalar>(t_));
  const Scalar bc2 = Scalar(1) - std::pow(cfg_.beta2, static_cast<Scalar>(t_));
  for (Parameter* p : params) {
    if (!p->grad.allFinite())
      throw std::runtime_error("adam: non-finite gradient for parameter '" + p->name + "'");
    auto& mo = state_[p];
    if (mo.m.size() == 0) {
      mo.m = Mat::Zero(p->value.rows(), p->value.cols());
      mo.v = Mat::Zero(p->value.rows(), p->value.cols());
    }
    mo.m = cfg_.beta1 * mo.m + (Scalar(1) - cfg_.beta1) * p->grad;
    mo.v = cfg_.beta2 * mo.v.array().matrix() +
           (Scalar(1) - cfg_.beta2) * p->grad.cwiseProduct(p->grad);
    const Mat mhat = mo.m / bc1;
    const Mat vhat = mo.v / bc2;
    p->value.array() -= cfg_.lr * mhat.array() / (vhat.array().sqrt() + cfg_.eps);
  }
}

}  // namespace emb2emb
