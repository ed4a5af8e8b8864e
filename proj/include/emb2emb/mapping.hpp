#pragma once

#include <random>
#include <string>
#include <vector>

#include "emb2emb/autoencoder.hpp"
#include "emb2emb/graph.hpp"
#include "emb2emb/types.hpp"

namespace emb2emb {

enum class MappingKind { kMlp, kOffsetNet, kResNet, kMeanOffset };

std::string to_string(MappingKind kind);
MappingKind mapping_kind_from_string(const std::string& name);

struct MappingConfig {
  MappingKind kind = MappingKind::kOffsetNet;
  Index d = 64;
  int layers = 1;               // k
  bool zero_init_offsets = true;  // OffsetNet starts as the exact identity
  Scalar alpha = Scalar(1);       // MeanOffset multiplier on (v2 - v1)
};

// The embedding-to-embedding map. Layer shapes (all biased, SELU activation):
//   MLP:       y_j = selu(y_{j-1} W_j + b_j), output = y_k P + b_p
//   OffsetNet: y_j = y_{j-1} + selu(y_{j-1} W_j + bw_j) V_j + bv_j  (no output head)
//   ResNet:    y_j = selu(y_{j-1} + selu(y_{j-1} W_j + bw_j) V_j + bv_j), then P, b_p
//   MeanOffset: y = z + alpha (v2 - v1)  (training-free)
// MLP and OffsetNet have identical parameter counts; ResNet has exactly 1.5x.
class Mapping {
 public:
  Mapping(MappingConfig cfg, std::mt19937_64& init_rng);
  static Mapping mean_offset(Mat v1, Mat v2, Scalar alpha);

  // Tape path; binds parameters trainably unless frozen.
  Var forward_in_graph(Graph& g, Var z);
  // Plain inference path.
  Mat forward(const Mat& z) const;

  const MappingConfig& config() const { return cfg_; }
  MappingKind kind() const { return cfg_.kind; }
  std::size_t param_scalar_count() const { return params_.scalar_count(); }

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::string hash() const;

  void set_alpha(Scalar alpha);
  Scalar alpha() const { return cfg_.alpha; }

  void save(const std::string& path) const;
  static Mapping load(const std::string& path);

 private:
  struct Layer {
    Parameter* W = nullptr;
    Parameter* bw = nullptr;
    Parameter* V = nullptr;   // OffsetNet/ResNet only
    Parameter* bv = nullptr;  // OffsetNet/ResNet only
  };

  Var bind(Graph& g, Parameter& p);

  MappingConfig cfg_;
  bool frozen_ = false;
  ParamSet params_;
  std::vector<Layer> layers_;
  Parameter* out_W_ = nullptr;   // MLP/ResNet projection
  Parameter* out_b_ = nullptr;
  Parameter* v1_ = nullptr;      // MeanOffset
  Parameter* v2_ = nullptr;
};

// v1/v2 are the mean encodings of the two attribute classes.
Mapping fit_mean_offsets(const Autoencoder& ae, const std::vector<TokenSeq>& class0,
                         const std::vector<TokenSeq>& class1, Scalar alpha = Scalar(1));

}  // namespace emb2emb
