#pragma once

#include <Eigen/Dense>

namespace emb2emb {

#ifdef EMB2EMB_SINGLE_PRECISION
using Scalar = float;
#else
using Scalar = double;
#endif

using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Arr = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Eigen::Index;

// Reserved token ids, fixed across the whole toolkit.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kNumReserved = 4;

// Inputs are truncated to this many tokens on encode.
inline constexpr int kMaxTokens = 100;

}  // namespace emb2emb
