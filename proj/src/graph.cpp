#include "emb2emb/graph.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace emb2emb {

namespace {

std::string shape_str(const Mat& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

// Replicates x up to r x c; shapes were validated when the node was built.
Mat broadcast_to(const Mat& x, Index r, Index c) {
  if (x.rows() == r && x.cols() == c) return x;
  return x.replicate(r / x.rows(), c / x.cols());
}

// Sums g down to r x c (the shape of the operand that was broadcast).
Mat reduce_to(const Mat& g, Index r, Index c) {
  if (g.rows() == r && g.cols() == c) return g;
  if (r == 1 && c == 1) {
    Mat out(1, 1);
    out(0, 0) = g.sum();
    return out;
  }
  if (r == 1) return g.colwise().sum();
  if (c == 1) return g.rowwise().sum();
  throw std::logic_error("reduce_to: incompatible reduction");
}

Scalar stable_sigmoid(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

constexpr Scalar kSeluAlpha = Scalar(1.6732632423543772848170429916717);
constexpr Scalar kSeluLambda = Scalar(1.0507009873554804934193349852946);

}  // namespace

// Builds nodes on behalf of the free-function ops.
struct OpBuilder {
  using Node = Graph::Node;
  using Op = Graph::Op;
  using Bcast = Graph::Bcast;

  static Graph& same_graph(Var a, Var b) {
    if (!a.valid() || !b.valid()) throw std::logic_error("op on invalid Var");
    if (a.g != b.g) throw std::logic_error("op on Vars from different graphs");
    return *a.g;
  }
  static Graph& graph_of(Var a) {
    if (!a.valid()) throw std::logic_error("op on invalid Var");
    return *a.g;
  }
  static const Mat& val(Var v) { return v.g->value(v); }
  static bool needs_grad(Var v) { return v.g->nodes_[v.id].requires_grad; }

  static Var make(Graph& g, Node&& n) { return Var{&g, g.emplace(std::move(n))}; }

  static Bcast classify(const Mat& a, const Mat& b, const char* opname) {
    const Index ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
    if (ar == br && ac == bc) return Bcast::kNone;
    if (br == 1 && bc == 1) return Bcast::kBScalar;
    if (ar == 1 && ac == 1) return Bcast::kAScalar;
    if (br == 1 && bc == ac) return Bcast::kBRow;
    if (bc == 1 && br == ar) return Bcast::kBCol;
    if (ar == 1 && ac == bc) return Bcast::kARow;
    if (ac == 1 && ar == br) return Bcast::kACol;
    std::ostringstream os;
    os << opname << ": incompatible shapes " << shape_str(a) << " and " << shape_str(b);
    throw std::invalid_argument(os.str());
  }

  static Var elementwise(Var a, Var b, Op op, const char* opname) {
    Graph& g = same_graph(a, b);
    const Mat& av = val(a);
    const Mat& bv = val(b);
    const Bcast bc = classify(av, bv, opname);
    const Index r = std::max(av.rows(), bv.rows());
    const Index c = std::max(av.cols(), bv.cols());
    const Mat ab = broadcast_to(av, r, c);
    const Mat bb = broadcast_to(bv, r, c);
    Node n;
    n.op = op;
    n.in0 = a.id;
    n.in1 = b.id;
    n.i0 = static_cast<Index>(bc);
    n.requires_grad = needs_grad(a) || needs_grad(b);
    switch (op) {
      case Op::kAdd: n.value = ab + bb; break;
      case Op::kSub: n.value = ab - bb; break;
      case Op::kMul: n.value = ab.cwiseProduct(bb); break;
      default: throw std::logic_error("elementwise: bad op");
    }
    return make(g, std::move(n));
  }

  static Var unary(Var x, Op op, Mat value) {
    Graph& g = graph_of(x);
    Node n;
    n.op = op;
    n.in0 = x.id;
    n.requires_grad = needs_grad(x);
    n.value = std::move(value);
    return make(g, std::move(n));
  }
};

// --- Graph ------------------------------------------------------------------

int Graph::emplace(Node&& n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

const Graph::Node& Graph::node(Var v) const {
  check_owned(v);
  return nodes_[static_cast<std::size_t>(v.id)];
}

void Graph::check_owned(Var v) const {
  if (v.g != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw std::logic_error("Var does not belong to this graph");
}

Var Graph::constant(Mat v) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(v);
  n.requires_grad = false;
  return Var{this, emplace(std::move(n))};
}

Var Graph::leaf(Mat v, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(v);
  n.requires_grad = requires_grad;
  return Var{this, emplace(std::move(n))};
}

Var Graph::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{this, it->second};
  Node n;
  n.op = Op::kLeaf;
  n.requires_grad = true;
  n.bound = &p;
  const int id = emplace(std::move(n));
  param_nodes_.emplace(&p, id);
  return Var{this, id};
}

Var Graph::frozen(const Parameter& p) {
  Node n;
  n.op = Op::kLeaf;
  n.requires_grad = false;
  n.borrowed = &p.value;
  return Var{this, emplace(std::move(n))};
}

const Mat& Graph::value(Var v) const { return node_value(node(v)); }

Mat Graph::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.size() == 0) {
    const Mat& val = node_value(n);
    return Mat::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

Mat& Graph::grad_buf(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    const Mat& val = node_value(n);
    n.grad = Mat::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

void Graph::backward(Var loss) {
  const Node& top = node(loss);
  const Mat& top_val = node_value(top);
  if (top_val.rows() != 1 || top_val.cols() != 1)
    throw std::invalid_argument("backward: loss must be 1x1, got " + shape_str(top_val));
  grad_buf(loss.id)(0, 0) += Scalar(1);

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    const Mat& g = n.grad;

    auto want = [&](int in) {
      return in >= 0 && nodes_[static_cast<std::size_t>(in)].requires_grad;
    };
    auto in_val = [&](int in) -> const Mat& {
      return node_value(nodes_[static_cast<std::size_t>(in)]);
    };

    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatmul: {
        if (want(n.in0)) grad_buf(n.in0) += g * in_val(n.in1).transpose();
        if (want(n.in1)) grad_buf(n.in1) += in_val(n.in0).transpose() * g;
        break;
      }
      case Op::kAdd:
      case Op::kSub: {
        const Scalar sign = (n.op == Op::kSub) ? Scalar(-1) : Scalar(1);
        if (want(n.in0)) {
          const Mat& av = in_val(n.in0);
          grad_buf(n.in0) += reduce_to(g, av.rows(), av.cols());
        }
        if (want(n.in1)) {
          const Mat& bv = in_val(n.in1);
          grad_buf(n.in1) += sign * reduce_to(g, bv.rows(), bv.cols());
        }
        break;
      }
      case Op::kMul: {
        const Mat& av = in_val(n.in0);
        const Mat& bv = in_val(n.in1);
        const Index r = n.value.rows(), c = n.value.cols();
        if (want(n.in0))
          grad_buf(n.in0) +=
              reduce_to(g.cwiseProduct(broadcast_to(bv, r, c)), av.rows(), av.cols());
        if (want(n.in1))
          grad_buf(n.in1) +=
              reduce_to(g.cwiseProduct(broadcast_to(av, r, c)), bv.rows(), bv.cols());
        break;
      }
      case Op::kAffine: {
        if (want(n.in0)) grad_buf(n.in0) += n.s0 * g;
        break;
      }
      case Op::kTanh: {
        if (want(n.in0))
          grad_buf(n.in0).array() += g.array() * (1 - n.value.array().square());
        break;
      }
      case Op::kSigmoid: {
        if (want(n.in0))
          grad_buf(n.in0).array() += g.array() * n.value.array() * (1 - n.value.array());
        break;
      }
      case Op::kRelu: {
        if (want(n.in0)) {
          const Mat& x = in_val(n.in0);
          grad_buf(n.in0).array() +=
              g.array() * (x.array() > 0).cast<Scalar>();
        }
        break;
      }
      case Op::kSelu: {
        if (want(n.in0)) {
          const Mat& x = in_val(n.in0);
          Mat d = x.unaryExpr([](Scalar v) {
            return v > 0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(v);
          });
          grad_buf(n.in0).array() += g.array() * d.array();
        }
        break;
      }
      case Op::kSoftmaxXent: {
        if (want(n.in0)) {
          const Scalar seed = g(0, 0);
          const Mat& probs = n.aux;           // B x V softmax rows
          const Mat& w = n.aux2;              // B x 1 weights
          const Scalar wsum = w.sum();
          Mat& gx = grad_buf(n.in0);
          for (Index b = 0; b < probs.rows(); ++b) {
            const Scalar scale = seed * w(b, 0) / wsum;
            if (scale == 0) continue;
            gx.row(b) += scale * probs.row(b);
            gx(b, n.ids[static_cast<std::size_t>(b)]) -= scale;
          }
        }
        break;
      }
      case Op::kCosineRows: {
        const Mat& a = in_val(n.in0);
        const Mat& b = in_val(n.in1);
        for (Index r = 0; r < a.rows(); ++r) {
          const Scalar seed = g(r, 0);
          if (seed == 0) continue;
          const Scalar na = n.aux(r, 0), nb = n.aux(r, 1), cs = n.aux(r, 2);
          if (want(n.in0))
            grad_buf(n.in0).row(r) +=
                seed * (cs * a.row(r) / (na * na) - b.row(r) / (na * nb));
          if (want(n.in1))
            grad_buf(n.in1).row(r) +=
                seed * (cs * b.row(r) / (nb * nb) - a.row(r) / (na * nb));
        }
        break;
      }
      case Op::kLogClamped: {
        if (want(n.in0)) {
          const Mat& x = in_val(n.in0);
          const Scalar eps = n.s0;
          Mat& gx = grad_buf(n.in0);
          for (Index r = 0; r < x.rows(); ++r)
            for (Index c = 0; c < x.cols(); ++c)
              if (x(r, c) > eps) gx(r, c) += g(r, c) / x(r, c);
          break;
        }
        break;
      }
      case Op::kEmbedding: {
        if (want(n.in0)) {
          Mat& gt = grad_buf(n.in0);
          for (Index b = 0; b < n.value.rows(); ++b)
            gt.row(n.ids[static_cast<std::size_t>(b)]) += g.row(b);
        }
        break;
      }
      case Op::kSliceCols: {
        if (want(n.in0)) grad_buf(n.in0).middleCols(n.i0, n.i1) += g;
        break;
      }
      case Op::kMeanAll: {
        if (want(n.in0)) {
          const Mat& x = in_val(n.in0);
          grad_buf(n.in0).array() += g(0, 0) / static_cast<Scalar>(x.size());
        }
        break;
      }
      case Op::kSumAll: {
        if (want(n.in0)) grad_buf(n.in0).array() += g(0, 0);
        break;
      }
      case Op::kDropout: {
        if (want(n.in0)) grad_buf(n.in0) += g.cwiseProduct(n.aux);
        break;
      }
    }
  }

  for (auto& [p, id] : param_nodes_) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() != 0) {
      n.bound->grad += n.grad;
      n.grad.setZero();  // keep repeated backward() calls from double-counting
    }
  }
}

// --- ops --------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = OpBuilder::same_graph(a, b);
  const Mat& av = OpBuilder::val(a);
  const Mat& bv = OpBuilder::val(b);
  if (av.cols() != bv.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(av) +
                                " * " + shape_str(bv));
  OpBuilder::Node n;
  n.op = OpBuilder::Op::kMatmul;
  n.in0 = a.id;
  n.in1 = b.id;
  n.requires_grad = OpBuilder::needs_grad(a) || OpBuilder::needs_grad(b);
  n.value = av * bv;
  return OpBuilder::make(g, std::move(n));
}

Var operator+(Var a, Var b) { return OpBuilder::elementwise(a, b, OpBuilder::Op::kAdd, "add"); }
Var operator-(Var a, Var b) { return OpBuilder::elementwise(a, b, OpBuilder::Op::kSub, "sub"); }
Var operator*(Var a, Var b) { return OpBuilder::elementwise(a, b, OpBuilder::Op::kMul, "mul"); }

Var affine(Var x, Scalar mul, Scalar add) {
  const Mat& xv = OpBuilder::val(x);
  OpBuilder::Node n;
  n.op = OpBuilder::Op::kAffine;
  n.in0 = x.id;
  n.s0 = mul;
  n.s1 = add;
  n.requires_grad = OpBuilder::needs_grad(x);
  n.value = (mul * xv.array() + add).matrix();
  return OpBuilder::make(OpBuilder::graph_of(x), std::move(n));
}

Var tanh(Var x) {
  return OpBuilder::unary(x, OpBuilder::Op::kTanh, OpBuilder::val(x).array().tanh().matrix());
}

Var sigmoid(Var x) {
  Mat v = OpBuilder::val(x).unaryExpr([](Scalar t) { return stable_sigmoid(t); });
  return OpBuilder::unary(x, OpBuilder::Op::kSigmoid, std::move(v));
}

Var relu(Var x) {
  return OpBuilder::unary(x, OpBuilder::Op::kRelu, OpBuilder::val(x).cwiseMax(Scalar(0)));
}

Var selu(Var x) {
  Mat v = OpBuilder::val(x).unaryExpr([](Scalar t) {
    return t > 0 ? kSeluLambda * t : kSeluLambda * kSeluAlpha * (std::exp(t) - 1);
  });
  return OpBuilder::unary(x, OpBuilder::Op::kSelu, std::move(v));
}

Var log_clamped(Var x, Scalar eps) {
  if (!(eps > 0)) throw std::invalid_argument("log_clamped: eps must be positive");
  OpBuilder::Node n;
  n.op = OpBuilder::Op::kLogClamped;
  n.in0 = x.id;
  n.s0 = eps;
  n.requires_grad = OpBuilder::needs_grad(x);
  n.value = OpBuilder::val(x).unaryExpr(
      [eps](Scalar t) { return std::log(t > eps ? t : eps); });
  return OpBuilder::make(OpBuilder::graph_of(x), std::move(n));
}

namespace {

Var xent_impl(Var logits, const std::vector<int>& targets, const Mat& weights) {
  const Mat& x = OpBuilder::val(logits);
  const Index B = x.rows(), V = x.cols();
  if (static_cast<Index>(targets.size()) != B)
    throw std::invalid_argument("softmax_cross_entropy: one target per row required");
  if (weights.rows() != B)
    throw std::invalid_argument("softmax_cross_entropy: one weight per row required");
  const Scalar wsum = weights.sum();
  if (!(wsum > 0))
    throw std::invalid_argument("softmax_cross_entropy: weights sum to zero");

  Mat probs(B, V);
  Scalar loss = 0;
  for (Index b = 0; b < B; ++b) {
    const int t = targets[static_cast<std::size_t>(b)];
    if (t < 0 || t >= V)
      throw std::out_of_range("softmax_cross_entropy: target id " + std::to_string(t) +
                              " outside vocabulary of size " + std::to_string(V));
    const Scalar mx = x.row(b).maxCoeff();
    const Eigen::Array<Scalar, 1, Eigen::Dynamic> shifted = x.row(b).array() - mx;
    const Scalar lse = std::log(shifted.exp().sum());
    probs.row(b) = (shifted - lse).exp().matrix();
    loss += weights(b, 0) * (lse - shifted(t));
  }
  loss /= wsum;

  OpBuilder::Node n;
  n.op = OpBuilder::Op::kSoftmaxXent;
  n.in0 = logits.id;
  n.requires_grad = OpBuilder::needs_grad(logits);
  n.value = Mat::Constant(1, 1, loss);
  n.aux = std::move(probs);
  n.aux2 = weights;
  n.ids = targets;
  return OpBuilder::make(OpBuilder::graph_of(logits), std::move(n));
}

}  // namespace

Var softmax_cross_entropy(Var logits, const std::vector<int>& targets) {
  return xent_impl(logits, targets, Mat::Ones(OpBuilder::val(logits).rows(), 1));
}

Var softmax_cross_entropy(Var logits, const std::vector<int>& targets,
                          const std::vector<Scalar>& weights) {
  const Index B = OpBuilder::val(logits).rows();
  if (static_cast<Index>(weights.size()) != B)
    throw std::invalid_argument("softmax_cross_entropy: one weight per row required");
  Mat w(B, 1);
  for (Index b = 0; b < B; ++b) w(b, 0) = weights[static_cast<std::size_t>(b)];
  return xent_impl(logits, targets, w);
}

Var cosine_distance(Var a, Var b) {
  Graph& g = OpBuilder::same_graph(a, b);
  const Mat& av = OpBuilder::val(a);
  const Mat& bv = OpBuilder::val(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols())
    throw std::invalid_argument("cosine_distance: shapes disagree, " + shape_str(av) +
                                " vs " + shape_str(bv));
  const Index B = av.rows();
  Mat aux(B, 3);
  Mat value(B, 1);
  for (Index r = 0; r < B; ++r) {
    const Scalar na = av.row(r).norm();
    const Scalar nb = bv.row(r).norm();
    if (na == 0 || nb == 0)
      throw std::runtime_error("cosine_distance: zero-norm row " + std::to_string(r));
    const Scalar cs = av.row(r).dot(bv.row(r)) / (na * nb);
    aux(r, 0) = na;
    aux(r, 1) = nb;
    aux(r, 2) = cs;
    value(r, 0) = Scalar(1) - cs;
  }
  OpBuilder::Node n;
  n.op = OpBuilder::Op::kCosineRows;
  n.in0 = a.id;
  n.in1 = b.id;
  n.requires_grad = OpBuilder::needs_grad(a) || OpBuilder::needs_grad(b);
  n.value = std::move(value);
  n.aux = std::move(aux);
  return OpBuilder::make(g, std::move(n));
}

Var embedding_lookup(Var table, const std::vector<int>& ids) {
  const Mat& tv = OpBuilder::val(table);
  Mat value(static_cast<Index>(ids.size()), tv.cols());
  for (std::size_t b = 0; b < ids.size(); ++b) {
    const int id = ids[b];
    if (id < 0 || id >= tv.rows())
      throw std::out_of_range("embedding_lookup: id " + std::to_string(id) +
                              " outside table of " + std::to_string(tv.rows()) + " rows");
    value.row(static_cast<Index>(b)) = tv.row(id);
  }
  OpBuilder::Node n;
  n.op = OpBuilder::Op::kEmbedding;
  n.in0 = table.id;
  n.requires_grad = OpBuilder::needs_grad(table);
  n.value = std::move(value);
  n.ids = ids;
  return OpBuilder::make(OpBuilder::graph_of(table), std::move(n));
}

Var slice_cols(Var x, Index start, Index count) {
  const Mat& xv = OpBuilder::val(x);
  if (start < 0 || count < 0 || start + count > xv.cols())
    throw std::invalid_argument("slice_cols: range [" + std::to_string(start) + ", " +
                                std::to_string(start + count) + ") outside " +
                                shape_str(xv));
  OpBuilder::Node n;
  n.op = OpBuilder::Op::kSliceCols;
  n.in0 = x.id;
  n.i0 = start;
  n.i1 = count;
  n.requires_grad = OpBuilder::needs_grad(x);
  n.value = xv.middleCols(start, count);
  return OpBuilder::make(OpBuilder::graph_of(x), std::move(n));
}

Var mean_all(Var x) {
  const Mat& xv = OpBuilder::val(x);
  if (xv.size() == 0) throw std::invalid_argument("mean_all: empty input");
  return OpBuilder::unary(x, OpBuilder::Op::kMeanAll, Mat::Constant(1, 1, xv.mean()));
}

Var sum_all(Var x) {
  return OpBuilder::unary(x, OpBuilder::Op::kSumAll,
                          Mat::Constant(1, 1, OpBuilder::val(x).sum()));
}

Var dropout(Var x, Scalar p, std::mt19937_64& rng) {
  if (p < 0 || p >= 1)
    throw std::invalid_argument("dropout: p must be in [0, 1)");
  const Mat& xv = OpBuilder::val(x);
  Mat mask;
  if (p == 0) {
    mask = Mat::Ones(xv.rows(), xv.cols());  // draws nothing from rng
  } else {
    mask.resize(xv.rows(), xv.cols());
    std::bernoulli_distribution keep(1.0 - static_cast<double>(p));
    const Scalar scale = Scalar(1) / (Scalar(1) - p);
    for (Index r = 0; r < xv.rows(); ++r)
      for (Index c = 0; c < xv.cols(); ++c) mask(r, c) = keep(rng) ? scale : Scalar(0);
  }
  OpBuilder::Node n;
  n.op = OpBuilder::Op::kDropout;
  n.in0 = x.id;
  n.requires_grad = OpBuilder::needs_grad(x);
  n.value = xv.cwiseProduct(mask);
  n.aux = std::move(mask);
  return OpBuilder::make(OpBuilder::graph_of(x), std::move(n));
}

}  // namespace emb2emb
