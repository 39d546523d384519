// Multi-modal item embedding: attentive averaging over word sets, cross-gated
// fusion of hashtag and title features, image gating and the fusion MLP.
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "i2s/features.hpp"
#include "i2s/numcore.hpp"

namespace i2s {

struct ModelDims {
  std::size_t d_im = 16;
  std::size_t d_w = 8;
  std::size_t d_mod = 16;
  std::size_t d_emb = 16;
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct EmbeddingParams {
  Mlp image_proj;         // linear d_im -> d_mod
  Mlp hashtag_transform;  // d_w -> d_mod -> d_mod
  Mlp hashtag_scorer;     // d_mod -> d_mod -> 1
  Mlp title_transform;
  Mlp title_scorer;
  Mlp gate_h;             // f_t -> sigmoid scores for f_h
  Mlp gate_t;             // f_h -> sigmoid scores for f_t
  Mlp gate_i;             // [f_h', f_t'] -> sigmoid scores for f_im
  Mlp fusion;             // [f_im', f_h', f_t'] -> d_emb, 2 layers

  static EmbeddingParams zeros(const ModelDims& dims);
  static EmbeddingParams init(const ModelDims& dims, Rng& rng);

  template <typename Self, typename F>
  static void visit_mlps(Self& self, F&& f) {
    f("embed.image_proj", self.image_proj);
    f("embed.hashtag_transform", self.hashtag_transform);
    f("embed.hashtag_scorer", self.hashtag_scorer);
    f("embed.title_transform", self.title_transform);
    f("embed.title_scorer", self.title_scorer);
    f("embed.gate_h", self.gate_h);
    f("embed.gate_t", self.gate_t);
    f("embed.gate_i", self.gate_i);
    f("embed.fusion", self.fusion);
  }
};

struct AttentionScores {
  Vec e;      // unnormalized, one per word
  Vec alpha;  // softmax(e)
};

struct AttentiveTrace {
  std::vector<MlpTrace> transform;
  std::vector<MlpTrace> scorer;
  std::vector<Vec> transformed;
  AttentionScores scores;
};

/// Weighted average of transform(word) with softmax(scorer(transform(word)))
/// weights. `words` must be nonempty.
std::pair<Vec, AttentionScores> attentive_average(std::span<const Vec> words, const Mlp& transform,
                                                  const Mlp& scorer);
Vec attentive_average(std::span<const Vec> words, const Mlp& transform, const Mlp& scorer,
                      AttentiveTrace& trace);
void attentive_average_backward(const Mlp& transform, const Mlp& scorer,
                                const AttentiveTrace& trace, std::span<const double> grad_out,
                                Mlp& grad_transform, Mlp& grad_scorer);

/// Simultaneous update from the original inputs:
///   f_h' = f_h * sigmoid(gate_h(f_t)),  f_t' = f_t * sigmoid(gate_t(f_h)).
std::pair<Vec, Vec> cross_gate(std::span<const double> f_h, std::span<const double> f_t,
                               const Mlp& gate_h, const Mlp& gate_t);

/// f_im' = f_im * sigmoid(gate_i([f_h', f_t'])).
Vec image_gate(std::span<const double> f_im, std::span<const double> f_h_gated,
               std::span<const double> f_t_gated, const Mlp& gate_i);

struct EmbeddedItem {
  std::string item_id;
  Vec f;
};

struct EmbedTrace {
  MlpTrace image_proj;
  bool has_hashtag = false;
  bool has_title = false;
  AttentiveTrace hashtag;
  AttentiveTrace title;
  Vec f_im, f_h, f_t;           // before gating
  MlpTrace gate_h, gate_t, gate_i;
  Vec f_h_gated, f_t_gated, f_im_gated;
  MlpTrace fusion;
};

EmbeddedItem embed_item(const ItemFeatures& item, const EmbeddingParams& params);
Vec embed_item(const ItemFeatures& item, const EmbeddingParams& params, EmbedTrace& trace);
/// Accumulates gradients of the embedding parameters given dL/df.
void embed_item_backward(const EmbeddingParams& params, const EmbedTrace& trace,
                         std::span<const double> grad_f, EmbeddingParams& grads);

}  // namespace i2s
