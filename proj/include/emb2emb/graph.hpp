#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "emb2emb/types.hpp"

namespace emb2emb {

// A trainable dense array. Parameters live outside any graph; a graph binds
// to them by pointer and backward() accumulates into `grad`.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)) {
    grad = Mat::Zero(value.rows(), value.cols());
  }
  Parameter(const Parameter&) = delete;
  Parameter& operator=(const Parameter&) = delete;
};

// Owns the parameters of one model component. Insertion order is stable and
// defines the array order of serialized checkpoints.
class ParamSet {
 public:
  Parameter& add(std::string name, Index rows, Index cols) {
    return params_.emplace_back(std::move(name), Mat::Zero(rows, cols));
  }
  Parameter& add(std::string name, Mat init) {
    return params_.emplace_back(std::move(name), std::move(init));
  }

  std::vector<Parameter*> all() {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
  }
  std::vector<const Parameter*> all() const {
    std::vector<const Parameter*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(&p);
    return out;
  }

  void zero_grads() {
    for (auto& p : params_) p.grad.setZero();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  Parameter* find(std::string_view name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }
  std::size_t size() const { return params_.size(); }

 private:
  std::deque<Parameter> params_;  // deque keeps addresses stable
};

class Graph;

// Lightweight handle to a node in a Graph.
struct Var {
  Graph* g = nullptr;
  int id = -1;
  bool valid() const { return g != nullptr && id >= 0; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order by construction; backward() walks it once in reverse.
class Graph {
 public:
  Graph() = default;

  // Leaves. constant() never receives gradient; leaf(requires_grad=true)
  // accumulates into its node (read with grad()); param() additionally folds
  // the node gradient into Parameter::grad at the end of backward();
  // frozen() borrows a parameter's value without making it trainable.
  Var constant(Mat v);
  Var leaf(Mat v, bool requires_grad = true);
  Var param(Parameter& p);
  Var frozen(const Parameter& p);

  // Populates gradients of everything `loss` depends on. `loss` must be 1x1.
  void backward(Var loss);

  const Mat& value(Var v) const;
  // Gradient of the last backward() w.r.t. v; zeros if none reached it.
  Mat grad(Var v) const;

  Index rows(Var v) const { return value(v).rows(); }
  Index cols(Var v) const { return value(v).cols(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kMatmul,
    kAdd,
    kSub,
    kMul,
    kAffine,
    kTanh,
    kSigmoid,
    kRelu,
    kSelu,
    kSoftmaxXent,
    kCosineRows,
    kLogClamped,
    kEmbedding,
    kSliceCols,
    kMeanAll,
    kSumAll,
    kDropout,
  };

  // How the second (or first) operand of a binary elementwise op was
  // broadcast against the other.
  enum class Bcast : std::uint8_t { kNone, kBRow, kBCol, kBScalar, kARow, kACol, kAScalar };

  struct Node {
    Op op = Op::kLeaf;
    Mat value;                  // unused when bound/borrowed
    Mat grad;                   // lazily allocated during backward
    bool requires_grad = false;
    int in0 = -1;
    int in1 = -1;
    Scalar s0 = 0;              // affine mul / log eps / dropout scale
    Scalar s1 = 0;              // affine add
    Index i0 = 0;               // slice start / broadcast kind
    Index i1 = 0;               // slice width
    std::vector<int> ids;       // xent targets / embedding row ids
    Mat aux;                    // softmax probs / dropout mask / cosine terms
    Mat aux2;                   // xent weights
    Parameter* bound = nullptr;
    const Mat* borrowed = nullptr;
  };

  const Mat& node_value(const Node& n) const {
    if (n.bound != nullptr) return n.bound->value;
    if (n.borrowed != nullptr) return *n.borrowed;
    return n.value;
  }
  Mat& grad_buf(int id);
  int emplace(Node&& n);
  const Node& node(Var v) const;
  void check_owned(Var v) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;

  friend struct OpBuilder;
};

// --- free-function ops ------------------------------------------------------

// Matrix product a(m×k) · b(k×n). Backward: dA += dC·Bᵀ, dB += Aᵀ·dC.
Var matmul(Var a, Var b);

// Elementwise ops; the smaller operand may broadcast as a 1×n row, an m×1
// column, or a 1×1 scalar against the other.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);

// y = mul·x + add, elementwise with scalar constants.
Var affine(Var x, Scalar mul, Scalar add);
inline Var operator*(Scalar s, Var x) { return affine(x, s, 0); }
inline Var operator*(Var x, Scalar s) { return affine(x, s, 0); }
inline Var operator+(Var x, Scalar c) { return affine(x, 1, c); }
inline Var operator-(Var x, Scalar c) { return affine(x, 1, -c); }
inline Var operator-(Scalar c, Var x) { return affine(x, -1, c); }
inline Var operator-(Var x) { return affine(x, -1, 0); }

Var tanh(Var x);
Var sigmoid(Var x);
Var relu(Var x);
Var selu(Var x);

// Elementwise log(max(x, eps)); the clamp keeps saturated probabilities from
// producing -inf inside the objectives.
Var log_clamped(Var x, Scalar eps = Scalar(1e-12));

// Mean over the batch of -log softmax(logits)[target]. The weighted overload
// returns sum(w_i · nll_i) / sum(w_i), which makes padded positions (w=0)
// invisible to the loss.
Var softmax_cross_entropy(Var logits, const std::vector<int>& targets);
Var softmax_cross_entropy(Var logits, const std::vector<int>& targets,
                          const std::vector<Scalar>& weights);

// Row-wise cosine distance 1 - a·b/(|a||b|) between matching rows of two
// B×d inputs; returns B×1. Throws on zero-norm rows.
Var cosine_distance(Var a, Var b);

// Gathers rows of `table` by id; backward scatter-adds into the table rows.
Var embedding_lookup(Var table, const std::vector<int>& ids);

Var slice_cols(Var x, Index start, Index n);
Var mean_all(Var x);
Var sum_all(Var x);

// Inverted dropout: keeps each entry with probability 1-p and rescales by
// 1/(1-p). Identity when p == 0.
Var dropout(Var x, Scalar p, std::mt19937_64& rng);

}  // namespace emb2emb
