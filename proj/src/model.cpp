#include "i2s/model.hpp"

namespace i2s {

namespace {

template <typename Params, typename F>
void visit(Params& p, F&& f) {
  auto mlp = [&](const std::string& name, auto& m) {
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      f(name + ".w" + std::to_string(l), m.weights[l]);
      f(name + ".b" + std::to_string(l), m.biases[l]);
    }
  };
  EmbeddingParams::visit_mlps(p.embedding, mlp);
  f("metric.gamma_raw", p.metric.gamma_raw);
  mlp("metric.importance", p.metric.importance);
  mlp("metric.scaling", p.metric.scaling);
}

}  // namespace

ModelParams ModelParams::init(const ModelDims& dims, Rng& rng) {
  ModelParams p;
  p.dims = dims;
  p.embedding = EmbeddingParams::init(dims, rng);
  p.metric = MetricParams::init(dims.d_emb, rng);
  return p;
}

ModelParams ModelParams::zeros(const ModelDims& dims) {
  ModelParams p;
  p.dims = dims;
  p.embedding = EmbeddingParams::zeros(dims);
  p.metric = MetricParams::zeros(dims.d_emb);
  return p;
}

void ModelParams::for_each(const std::function<void(const std::string&, Tensor&)>& f) {
  visit(*this, f);
}

void ModelParams::for_each(
    const std::function<void(const std::string&, const Tensor&)>& f) const {
  visit(*this, f);
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out;
  for_each([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  std::vector<const Tensor*> out;
  for_each([&](const std::string&, const Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out;
  for_each([&](const std::string& n, const Tensor&) { out.push_back(n); });
  return out;
}

std::vector<Tensor> ModelParams::snapshot() const {
  std::vector<Tensor> out;
  for_each([&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

void ModelParams::assign(const std::vector<Tensor>& values) {
  auto ts = tensors();
  if (ts.size() != values.size()) throw ShapeError("assign: wrong number of tensors");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (!ts[i]->same_shape(values[i])) {
      throw ShapeError("assign: tensor " + names()[i] + " has shape " +
                       shape_string(values[i].shape()) + ", expected " +
                       shape_string(ts[i]->shape()));
    }
    *ts[i] = values[i];
  }
}

void ModelParams::add(const ModelParams& other) {
  auto mine = tensors();
  auto theirs = other.tensors();
  for (std::size_t i = 0; i < mine.size(); ++i) {
    auto a = mine[i]->values();
    auto b = theirs[i]->values();
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
  }
}

void ModelParams::scale(double factor) {
  for (Tensor* t : tensors())
    for (auto& v : t->values()) v *= factor;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += t->size();
  return n;
}

bool ModelParams::all_finite() const {
  for (const Tensor* t : tensors())
    if (!t->all_finite()) return false;
  return true;
}

}  // namespace i2s
