#include "emb2emb/classifier.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "emb2emb/checkpoint.hpp"

namespace emb2emb {

namespace {

void init_uniform(Mat& m, Index fan_in, std::mt19937_64& rng) {
  const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(fan_in));
  std::uniform_real_distribution<Scalar> dist(-bound, bound);
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
}

std::string join_dims(const std::vector<Index>& dims) {
  std::ostringstream os;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ',';
    os << dims[i];
  }
  return os.str();
}

std::vector<Index> split_dims(const std::string& s) {
  std::vector<Index> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ','))
    if (!item.empty()) out.push_back(static_cast<Index>(std::stoll(item)));
  return out;
}

}  // namespace

ClassifierConfig style_classifier_config(Index input_dim) {
  ClassifierConfig cfg;
  cfg.input_dim = input_dim;
  cfg.hidden = {512};
  cfg.dropout = Scalar(0.5);
  cfg.input_noise_sigma = Scalar(0.5);
  cfg.lr = Scalar(1e-4);
  return cfg;
}

ClassifierConfig discriminator_config(Index input_dim) {
  ClassifierConfig cfg;
  cfg.input_dim = input_dim;
  cfg.hidden = {300, 300};
  cfg.dropout = 0;
  cfg.input_noise_sigma = 0;
  cfg.lr = Scalar(1e-5);
  return cfg;
}

MlpBinaryClassifier::MlpBinaryClassifier(ClassifierConfig cfg, std::mt19937_64& init_rng)
    : cfg_(std::move(cfg)) {
  if (cfg_.input_dim <= 0) throw std::invalid_argument("classifier input_dim must be positive");
  if (cfg_.dropout < 0 || cfg_.dropout >= 1)
    throw std::invalid_argument("classifier dropout must be in [0,1)");
  Index in = cfg_.input_dim;
  for (std::size_t i = 0; i < cfg_.hidden.size(); ++i) {
    const Index out = cfg_.hidden[i];
    if (out <= 0) throw std::invalid_argument("classifier hidden size must be positive");
    Parameter& W = params_.add("W" + std::to_string(i + 1), in, out);
    Parameter& b = params_.add("b" + std::to_string(i + 1), 1, out);
    init_uniform(W.value, in, init_rng);
    layers_.push_back({&W, &b});
    in = out;
  }
  out_W_ = &params_.add("out_W", in, 1);
  out_b_ = &params_.add("out_b", 1, 1);
  init_uniform(out_W_->value, in, init_rng);
}

Var MlpBinaryClassifier::logit_in_graph(Graph& g, Var x, bool training,
                                        std::mt19937_64* rng) {
  if (training && rng == nullptr)
    throw std::invalid_argument("training classifier pass needs an rng");
  auto bind = [&](Parameter& p) { return frozen_ ? g.frozen(p) : g.param(p); };

  Var h = x;
  if (training && cfg_.input_noise_sigma > 0) {
    std::normal_distribution<Scalar> noise(0, cfg_.input_noise_sigma);
    Mat n(g.rows(x), g.cols(x));
    for (Index r = 0; r < n.rows(); ++r)
      for (Index c = 0; c < n.cols(); ++c) n(r, c) = noise(*rng);
    h = h + g.constant(std::move(n));
  }
  if (training && cfg_.dropout > 0) h = dropout(h, cfg_.dropout, *rng);
  for (const Layer& layer : layers_) {
    h = relu(matmul(h, bind(*layer.W)) + bind(*layer.b));
    if (training && cfg_.dropout > 0) h = dropout(h, cfg_.dropout, *rng);
  }
  return matmul(h, bind(*out_W_)) + bind(*out_b_);
}

Var MlpBinaryClassifier::prob_in_graph(Graph& g, Var x, bool training,
                                       std::mt19937_64* rng) {
  return sigmoid(logit_in_graph(g, x, training, rng));
}

Var MlpBinaryClassifier::logit_in_graph_detached(Graph& g, Var x) const {
  Var h = x;
  for (const Layer& layer : layers_)
    h = relu(matmul(h, g.frozen(*layer.W)) + g.frozen(*layer.b));
  return matmul(h, g.frozen(*out_W_)) + g.frozen(*out_b_);
}

Var MlpBinaryClassifier::prob_in_graph_detached(Graph& g, Var x) const {
  return sigmoid(logit_in_graph_detached(g, x));
}

Mat MlpBinaryClassifier::prob(const Mat& x) const {
  if (x.cols() != cfg_.input_dim)
    throw std::invalid_argument("classifier input has wrong width");
  Mat h = x;
  for (const Layer& layer : layers_) {
    Mat a = h * layer.W->value;
    a.rowwise() += layer.b->value.row(0);
    h = a.cwiseMax(Scalar(0));
  }
  Mat logit = h * out_W_->value;
  logit.array() += out_b_->value(0, 0);
  // numerically stable sigmoid
  return logit.unaryExpr([](Scalar v) {
    if (v >= 0) return Scalar(1) / (Scalar(1) + std::exp(-v));
    const Scalar e = std::exp(v);
    return e / (Scalar(1) + e);
  });
}

std::string MlpBinaryClassifier::hash() const { return params_hash(params_); }

void MlpBinaryClassifier::save(const std::string& path,
                               const std::map<std::string, std::string>& extra) const {
  CheckpointData data;
  data.kind = "classifier";
  data.config = extra;
  data.config["input_dim"] = std::to_string(cfg_.input_dim);
  data.config["hidden"] = join_dims(cfg_.hidden);
  data.config["dropout"] = std::to_string(cfg_.dropout);
  data.config["input_noise_sigma"] = std::to_string(cfg_.input_noise_sigma);
  data.config["frozen"] = frozen_ ? "1" : "0";
  for (const Parameter* p : params_.all()) data.arrays.emplace_back(p->name, p->value);
  save_checkpoint(path, data);
}

MlpBinaryClassifier MlpBinaryClassifier::load(const std::string& path) {
  CheckpointData data = load_checkpoint(path, "classifier");
  ClassifierConfig cfg;
  cfg.input_dim = static_cast<Index>(std::stoll(data.config.at("input_dim")));
  cfg.hidden = split_dims(data.config.at("hidden"));
  cfg.dropout = static_cast<Scalar>(std::stod(data.config.at("dropout")));
  cfg.input_noise_sigma =
      static_cast<Scalar>(std::stod(data.config.at("input_noise_sigma")));
  std::mt19937_64 rng(0);
  MlpBinaryClassifier model(cfg, rng);
  for (Parameter* p : model.params_.all()) {
    bool found = false;
    for (const auto& [name, value] : data.arrays) {
      if (name != p->name) continue;
      if (value.rows() != p->value.rows() || value.cols() != p->value.cols())
        throw std::runtime_error("classifier checkpoint: shape mismatch for " + name);
      p->value = value;
      found = true;
      break;
    }
    if (!found) throw std::runtime_error("classifier checkpoint: missing array " + p->name);
  }
  if (data.config.at("frozen") == "1") model.freeze();
  return model;
}

}  // namespace emb2emb
