#include "emb2emb/mapping.hpp"

#include <cmath>
#include <stdexcept>

#include "emb2emb/checkpoint.hpp"

namespace emb2emb {

namespace {

constexpr Scalar kSeluAlpha = Scalar(1.6732632423543772848170429916717);
constexpr Scalar kSeluLambda = Scalar(1.0507009873554804934193349852946);

Scalar selu_s(Scalar x) {
  return x > 0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * (std::exp(x) - 1);
}

Mat selu_mat(Mat m) {
  return m.unaryExpr([](Scalar v) { return selu_s(v); });
}

void init_uniform(Mat& m, Scalar bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound),
                                              static_cast<double>(bound));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = static_cast<Scalar>(dist(rng));
}

}  // namespace

std::string to_string(MappingKind kind) {
  switch (kind) {
    case MappingKind::kMlp: return "mlp";
    case MappingKind::kOffsetNet: return "offsetnet";
    case MappingKind::kResNet: return "resnet";
    case MappingKind::kMeanOffset: return "meanoffset";
  }
  throw std::logic_error("mapping: unknown kind");
}

MappingKind mapping_kind_from_string(const std::string& name) {
  if (name == "mlp") return MappingKind::kMlp;
  if (name == "offsetnet") return MappingKind::kOffsetNet;
  if (name == "resnet") return MappingKind::kResNet;
  if (name == "meanoffset") return MappingKind::kMeanOffset;
  throw std::invalid_argument("mapping: unknown kind '" + name +
                              "' (expected mlp|offsetnet|resnet|meanoffset)");
}

Mapping::Mapping(MappingConfig cfg, std::mt19937_64& init_rng) : cfg_(cfg) {
  if (cfg_.d < 1) throw std::invalid_argument("mapping: d must be positive");
  const Index d = cfg_.d;
  const Scalar ws = Scalar(1) / std::sqrt(static_cast<Scalar>(d));

  auto add_mat = [&](const std::string& name, Index r, Index c, bool zero) {
    Parameter& p = params_.add(name, r, c);
    if (!zero) init_uniform(p.value, ws, init_rng);
    return &p;
  };

  switch (cfg_.kind) {
    case MappingKind::kMeanOffset:
      v1_ = add_mat("v1", 1, d, true);
      v2_ = add_mat("v2", 1, d, true);
      return;
    case MappingKind::kMlp: {
      if (cfg_.layers < 1) throw std::invalid_argument("mapping: layers must be >= 1");
      for (int j = 1; j <= cfg_.layers; ++j) {
        Layer l;
        l.W = add_mat("W" + std::to_string(j), d, d, false);
        l.bw = add_mat("b" + std::to_string(j), 1, d, true);
        layers_.push_back(l);
      }
      out_W_ = add_mat("out_W", d, d, false);
      out_b_ = add_mat("out_b", 1, d, true);
      return;
    }
    case MappingKind::kOffsetNet:
    case MappingKind::kResNet: {
      if (cfg_.layers < 1) throw std::invalid_argument("mapping: layers must be >= 1");
      const bool zero_v =
          cfg_.kind == MappingKind::kOffsetNet && cfg_.zero_init_offsets;
      for (int j = 1; j <= cfg_.layers; ++j) {
        Layer l;
        l.W = add_mat("W" + std::to_string(j), d, d, false);
        l.bw = add_mat("bw" + std::to_string(j), 1, d, true);
        l.V = add_mat("V" + std::to_string(j), d, d, zero_v);
        l.bv = add_mat("bv" + std::to_string(j), 1, d, true);
        layers_.push_back(l);
      }
      if (cfg_.kind == MappingKind::kResNet) {
        out_W_ = add_mat("out_W", d, d, false);
        out_b_ = add_mat("out_b", 1, d, true);
      }
      return;
    }
  }
  throw std::logic_error("mapping: unknown kind");
}

Mapping Mapping::mean_offset(Mat v1, Mat v2, Scalar alpha) {
  if (v1.rows() != 1 || v2.rows() != 1 || v1.cols() != v2.cols())
    throw std::invalid_argument("mean_offset: v1 and v2 must be 1 x d rows");
  MappingConfig cfg;
  cfg.kind = MappingKind::kMeanOffset;
  cfg.d = v1.cols();
  cfg.alpha = alpha;
  std::mt19937_64 unused(0);
  Mapping m(cfg, unused);
  m.v1_->value = std::move(v1);
  m.v2_->value = std::move(v2);
  m.freeze();
  return m;
}

void Mapping::set_alpha(Scalar alpha) {
  if (cfg_.kind != MappingKind::kMeanOffset)
    throw std::logic_error("mapping: alpha only applies to the mean-offset kind");
  cfg_.alpha = alpha;
}

Var Mapping::bind(Graph& g, Parameter& p) {
  return frozen_ ? g.frozen(p) : g.param(p);
}

Var Mapping::forward_in_graph(Graph& g, Var z) {
  if (g.cols(z) != cfg_.d)
    throw std::invalid_argument("mapping: input has dimension " +
                                std::to_string(g.cols(z)) + " but expects " +
                                std::to_string(cfg_.d));
  switch (cfg_.kind) {
    case MappingKind::kMeanOffset: {
      Mat shift = cfg_.alpha * (v2_->value - v1_->value);
      return z + g.constant(std::move(shift));
    }
    case MappingKind::kMlp: {
      Var y = z;
      for (const Layer& l : layers_)
        y = selu(matmul(y, bind(g, *l.W)) + bind(g, *l.bw));
      return matmul(y, bind(g, *out_W_)) + bind(g, *out_b_);
    }
    case MappingKind::kOffsetNet: {
      Var y = z;
      for (const Layer& l : layers_) {
        Var hidden = selu(matmul(y, bind(g, *l.W)) + bind(g, *l.bw));
        y = y + (matmul(hidden, bind(g, *l.V)) + bind(g, *l.bv));
      }
      return y;
    }
    case MappingKind::kResNet: {
      Var y = z;
      for (const Layer& l : layers_) {
        Var hidden = selu(matmul(y, bind(g, *l.W)) + bind(g, *l.bw));
        y = selu(y + (matmul(hidden, bind(g, *l.V)) + bind(g, *l.bv)));
      }
      return matmul(y, bind(g, *out_W_)) + bind(g, *out_b_);
    }
  }
  throw std::logic_error("mapping: unknown kind");
}

Mat Mapping::forward(const Mat& z) const {
  if (z.cols() != cfg_.d)
    throw std::invalid_argument("mapping: input has dimension " +
                                std::to_string(z.cols()) + " but expects " +
                                std::to_string(cfg_.d));
  switch (cfg_.kind) {
    case MappingKind::kMeanOffset: {
      Mat out = z;
      out.rowwise() += (cfg_.alpha * (v2_->value - v1_->value)).row(0);
      return out;
    }
    case MappingKind::kMlp: {
      Mat y = z;
      for (const Layer& l : layers_) {
        Mat pre = y * l.W->value;
        pre.rowwise() += l.bw->value.row(0);
        y = selu_mat(std::move(pre));
      }
      Mat out = y * out_W_->value;
      out.rowwise() += out_b_->value.row(0);
      return out;
    }
    case MappingKind::kOffsetNet: {
      Mat y = z;
      for (const Layer& l : layers_) {
        Mat pre = y * l.W->value;
        pre.rowwise() += l.bw->value.row(0);
        Mat offset = selu_mat(std::move(pre)) * l.V->value;
        offset.rowwise() += l.bv->value.row(0);
        y += offset;
      }
      return y;
    }
    case MappingKind::kResNet: {
      Mat y = z;
      for (const Layer& l : layers_) {
        Mat pre = y * l.W->value;
        pre.rowwise() += l.bw->value.row(0);
        Mat offset = selu_mat(std::move(pre)) * l.V->value;
        offset.rowwise() += l.bv->value.row(0);
        y = selu_mat(y + offset);
      }
      Mat out = y * out_W_->value;
      out.rowwise() += out_b_->value.row(0);
      return out;
    }
  }
  throw std::logic_error("mapping: unknown kind");
}

std::string Mapping::hash() const { return params_hash(params_); }

void Mapping::save(const std::string& path) const {
  CheckpointData data;
  data.kind = "mapping";
  data.config["mapping_kind"] = to_string(cfg_.kind);
  data.config["d"] = std::to_string(cfg_.d);
  data.config["layers"] = std::to_string(cfg_.layers);
  data.config["alpha"] = std::to_string(cfg_.alpha);
  data.config["zero_init_offsets"] = cfg_.zero_init_offsets ? "1" : "0";
  data.config["frozen"] = frozen_ ? "1" : "0";
  for (const Parameter* p : params_.all()) data.arrays.emplace_back(p->name, p->value);
  save_checkpoint(path, data);
}

Mapping Mapping::load(const std::string& path) {
  CheckpointData data = load_checkpoint(path, "mapping");
  MappingConfig cfg;
  cfg.kind = mapping_kind_from_string(data.config.at("mapping_kind"));
  cfg.d = static_cast<Index>(std::stoll(data.config.at("d")));
  cfg.layers = std::stoi(data.config.at("layers"));
  cfg.alpha = static_cast<Scalar>(std::stod(data.config.at("alpha")));
  cfg.zero_init_offsets = data.config.at("zero_init_offsets") == "1";

  std::mt19937_64 unused(0);
  Mapping m(cfg, unused);
  for (Parameter* p : m.params_.all()) {
    auto it = std::find_if(data.arrays.begin(), data.arrays.end(),
                           [&](const auto& a) { return a.first == p->name; });
    if (it == data.arrays.end())
      throw std::runtime_error("mapping checkpoint missing array " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw std::runtime_error("mapping checkpoint shape mismatch for " + p->name);
    p->value = it->second;
  }
  m.frozen_ = data.config.at("frozen") == "1";
  return m;
}

Mapping fit_mean_offsets(const Autoencoder& ae, const std::vector<TokenSeq>& class0,
                         const std::vector<TokenSeq>& class1, Scalar alpha) {
  if (class0.empty() || class1.empty())
    throw std::invalid_argument("fit_mean_offsets: both classes must be nonempty");
  const Mat z0 = ae.encode(class0);
  const Mat z1 = ae.encode(class1);
  return Mapping::mean_offset(z0.colwise().mean(), z1.colwise().mean(), alpha);
}

}  // namespace emb2emb
