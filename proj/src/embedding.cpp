#include "i2s/embedding.hpp"

#include <string>

namespace i2s {

namespace {

MlpSpec hidden_spec(std::size_t in, std::size_t hidden, std::size_t out,
                    FinalActivation final = FinalActivation::none) {
  return MlpSpec{{in, hidden, out}, Activation::relu, final};
}

struct Specs {
  MlpSpec image_proj, transform, scorer, gate_h, gate_t, gate_i, fusion;
};

Specs specs_for(const ModelDims& d) {
  Specs s;
  s.image_proj = MlpSpec{{d.d_im, d.d_mod}, Activation::relu, FinalActivation::none};
  s.transform = hidden_spec(d.d_w, d.d_mod, d.d_mod);
  s.scorer = hidden_spec(d.d_mod, d.d_mod, 1);
  s.gate_h = hidden_spec(d.d_mod, d.d_mod, d.d_mod, FinalActivation::sigmoid);
  s.gate_t = s.gate_h;
  s.gate_i = hidden_spec(2 * d.d_mod, d.d_mod, d.d_mod, FinalActivation::sigmoid);
  s.fusion = hidden_spec(3 * d.d_mod, d.d_emb, d.d_emb);
  return s;
}

void check_dim(std::size_t got, std::size_t want, const std::string& what) {
  if (got != want) {
    throw ShapeError(what + ": dimension " + std::to_string(got) + ", expected " +
                     std::to_string(want));
  }
}

Vec concat(std::initializer_list<std::span<const double>> parts) {
  Vec out;
  for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace

EmbeddingParams EmbeddingParams::zeros(const ModelDims& dims) {
  const Specs s = specs_for(dims);
  return EmbeddingParams{Mlp::zeros(s.image_proj), Mlp::zeros(s.transform), Mlp::zeros(s.scorer),
                         Mlp::zeros(s.transform),  Mlp::zeros(s.scorer),    Mlp::zeros(s.gate_h),
                         Mlp::zeros(s.gate_t),     Mlp::zeros(s.gate_i),    Mlp::zeros(s.fusion)};
}

EmbeddingParams EmbeddingParams::init(const ModelDims& dims, Rng& rng) {
  const Specs s = specs_for(dims);
  EmbeddingParams p;
  p.image_proj = Mlp::glorot(s.image_proj, rng);
  p.hashtag_transform = Mlp::glorot(s.transform, rng);
  p.hashtag_scorer = Mlp::glorot(s.scorer, rng);
  p.title_transform = Mlp::glorot(s.transform, rng);
  p.title_scorer = Mlp::glorot(s.scorer, rng);
  p.gate_h = Mlp::glorot(s.gate_h, rng);
  p.gate_t = Mlp::glorot(s.gate_t, rng);
  p.gate_i = Mlp::glorot(s.gate_i, rng);
  p.fusion = Mlp::glorot(s.fusion, rng);
  return p;
}

std::pair<Vec, AttentionScores> attentive_average(std::span<const Vec> words, const Mlp& transform,
                                                  const Mlp& scorer) {
  AttentiveTrace trace;
  Vec out = attentive_average(words, transform, scorer, trace);
  return {std::move(out), std::move(trace.scores)};
}

Vec attentive_average(std::span<const Vec> words, const Mlp& transform, const Mlp& scorer,
                      AttentiveTrace& trace) {
  if (words.empty()) throw ShapeError("attentive_average: empty word list");
  if (scorer.spec.output_width() != 1) throw ShapeError("attentive_average: scorer must be scalar");
  check_dim(scorer.spec.input_width(), transform.spec.output_width(), "attentive_average scorer");
  const std::size_t n = words.size();
  trace.transform.resize(n);
  trace.scorer.resize(n);
  trace.transformed.resize(n);
  trace.scores.e.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    check_dim(words[i].size(), transform.spec.input_width(), "attentive_average word");
    trace.transformed[i] = mlp_forward(transform, words[i], trace.transform[i]);
    trace.scores.e[i] = mlp_forward(scorer, trace.transformed[i], trace.scorer[i])[0];
  }
  trace.scores.alpha = softmax(trace.scores.e);
  Vec out(transform.spec.output_width(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = trace.scores.alpha[i];
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += a * trace.transformed[i][k];
  }
  return out;
}

void attentive_average_backward(const Mlp& transform, const Mlp& scorer,
                                const AttentiveTrace& trace, std::span<const double> grad_out,
                                Mlp& grad_transform, Mlp& grad_scorer) {
  const std::size_t n = trace.transformed.size();
  Vec g_alpha(n);
  for (std::size_t i = 0; i < n; ++i) g_alpha[i] = dot(trace.transformed[i], grad_out);
  const Vec g_e = softmax_backward(trace.scores.alpha, g_alpha);
  for (std::size_t i = 0; i < n; ++i) {
    const double ge[1] = {g_e[i]};
    Vec g_f = mlp_backward(scorer, trace.scorer[i], ge, grad_scorer);
    const double a = trace.scores.alpha[i];
    for (std::size_t k = 0; k < g_f.size(); ++k) g_f[k] += a * grad_out[k];
    mlp_backward(transform, trace.transform[i], g_f, grad_transform);
  }
}

std::pair<Vec, Vec> cross_gate(std::span<const double> f_h, std::span<const double> f_t,
                               const Mlp& gate_h, const Mlp& gate_t) {
  check_dim(f_t.size(), gate_h.spec.input_width(), "cross_gate hashtag gate input");
  check_dim(f_h.size(), gate_t.spec.input_width(), "cross_gate title gate input");
  check_dim(gate_h.spec.output_width(), f_h.size(), "cross_gate hashtag gate output");
  check_dim(gate_t.spec.output_width(), f_t.size(), "cross_gate title gate output");
  const Vec s_h = mlp_forward(gate_h, f_t);
  const Vec s_t = mlp_forward(gate_t, f_h);
  Vec h(f_h.size()), t(f_t.size());
  for (std::size_t k = 0; k < h.size(); ++k) h[k] = f_h[k] * s_h[k];
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = f_t[k] * s_t[k];
  return {std::move(h), std::move(t)};
}

Vec image_gate(std::span<const double> f_im, std::span<const double> f_h_gated,
               std::span<const double> f_t_gated, const Mlp& gate_i) {
  check_dim(f_h_gated.size() + f_t_gated.size(), gate_i.spec.input_width(), "image_gate input");
  check_dim(gate_i.spec.output_width(), f_im.size(), "image_gate output");
  const Vec s = mlp_forward(gate_i, concat({f_h_gated, f_t_gated}));
  Vec out(f_im.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = f_im[k] * s[k];
  return out;
}

EmbeddedItem embed_item(const ItemFeatures& item, const EmbeddingParams& params) {
  EmbedTrace trace;
  return EmbeddedItem{item.item_id, embed_item(item, params, trace)};
}

Vec embed_item(const ItemFeatures& item, const EmbeddingParams& params, EmbedTrace& trace) {
  const std::size_t d_mod = params.image_proj.spec.output_width();
  if (item.image.size() != params.image_proj.spec.input_width()) {
    throw ShapeError("item " + item.item_id + ": image dimension " +
                     std::to_string(item.image.size()) + ", model expects " +
                     std::to_string(params.image_proj.spec.input_width()));
  }
  try {
    trace.f_im = mlp_forward(params.image_proj, item.image, trace.image_proj);
    trace.has_hashtag = !item.hashtag.empty();
    trace.has_title = !item.title.empty();
    trace.f_h = trace.has_hashtag ? attentive_average(item.hashtag, params.hashtag_transform,
                                                      params.hashtag_scorer, trace.hashtag)
                                  : Vec(d_mod, 0.0);
    trace.f_t = trace.has_title ? attentive_average(item.title, params.title_transform,
                                                    params.title_scorer, trace.title)
                                : Vec(d_mod, 0.0);

    const Vec s_h = mlp_forward(params.gate_h, trace.f_t, trace.gate_h);
    const Vec s_t = mlp_forward(params.gate_t, trace.f_h, trace.gate_t);
    trace.f_h_gated.resize(d_mod);
    trace.f_t_gated.resize(d_mod);
    for (std::size_t k = 0; k < d_mod; ++k) {
      trace.f_h_gated[k] = trace.f_h[k] * s_h[k];
      trace.f_t_gated[k] = trace.f_t[k] * s_t[k];
    }
    const Vec s_i =
        mlp_forward(params.gate_i, concat({trace.f_h_gated, trace.f_t_gated}), trace.gate_i);
    trace.f_im_gated.resize(d_mod);
    for (std::size_t k = 0; k < d_mod; ++k) trace.f_im_gated[k] = trace.f_im[k] * s_i[k];

    return mlp_forward(params.fusion,
                       concat({trace.f_im_gated, trace.f_h_gated, trace.f_t_gated}),
                       trace.fusion);
  } catch (const ShapeError& e) {
    throw ShapeError("item " + item.item_id + ": " + e.what());
  }
}

void embed_item_backward(const EmbeddingParams& params, const EmbedTrace& trace,
                         std::span<const double> grad_f, EmbeddingParams& grads) {
  const std::size_t d = trace.f_im.size();
  const Vec g_cat = mlp_backward(params.fusion, trace.fusion, grad_f, grads.fusion);
  Vec g_im_gated(g_cat.begin(), g_cat.begin() + static_cast<std::ptrdiff_t>(d));
  Vec g_h_gated(g_cat.begin() + static_cast<std::ptrdiff_t>(d),
                g_cat.begin() + static_cast<std::ptrdiff_t>(2 * d));
  Vec g_t_gated(g_cat.begin() + static_cast<std::ptrdiff_t>(2 * d), g_cat.end());

  // f_im' = f_im * s_i, s_i = gate_i([f_h', f_t'])
  const Vec& s_i = trace.gate_i.output;
  Vec g_f_im(d), g_s_i(d);
  for (std::size_t k = 0; k < d; ++k) {
    g_f_im[k] = g_im_gated[k] * s_i[k];
    g_s_i[k] = g_im_gated[k] * trace.f_im[k];
  }
  const Vec g_gate_in = mlp_backward(params.gate_i, trace.gate_i, g_s_i, grads.gate_i);
  for (std::size_t k = 0; k < d; ++k) {
    g_h_gated[k] += g_gate_in[k];
    g_t_gated[k] += g_gate_in[d + k];
  }

  // f_h' = f_h * s_h(f_t), f_t' = f_t * s_t(f_h), both from the originals.
  const Vec& s_h = trace.gate_h.output;
  const Vec& s_t = trace.gate_t.output;
  Vec g_f_h(d), g_f_t(d), g_s_h(d), g_s_t(d);
  for (std::size_t k = 0; k < d; ++k) {
    g_f_h[k] = g_h_gated[k] * s_h[k];
    g_s_h[k] = g_h_gated[k] * trace.f_h[k];
    g_f_t[k] = g_t_gated[k] * s_t[k];
    g_s_t[k] = g_t_gated[k] * trace.f_t[k];
  }
  const Vec from_h_gate = mlp_backward(params.gate_h, trace.gate_h, g_s_h, grads.gate_h);
  const Vec from_t_gate = mlp_backward(params.gate_t, trace.gate_t, g_s_t, grads.gate_t);
  for (std::size_t k = 0; k < d; ++k) {
    g_f_t[k] += from_h_gate[k];
    g_f_h[k] += from_t_gate[k];
  }

  mlp_backward(params.image_proj, trace.image_proj, g_f_im, grads.image_proj);
  if (trace.has_hashtag) {
    attentive_average_backward(params.hashtag_transform, params.hashtag_scorer, trace.hashtag,
                               g_f_h, grads.hashtag_transform, grads.hashtag_scorer);
  }
  if (trace.has_title) {
    attentive_average_backward(params.title_transform, params.title_scorer, trace.title, g_f_t,
                               grads.title_transform, grads.title_scorer);
  }
}

}  // namespace i2s
