#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

#include "mcoref/corpus.hpp"
#include "mcoref/embeddings.hpp"
#include "mcoref/model.hpp"

namespace mcoref {

// ---------------------------------------------------------------------------
// Grounding math on plain matrices.
// ---------------------------------------------------------------------------

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Per-document grounding scores: raw g and its row-softmax.
template <typename Scalar>
struct GroundingScoresT {
  MatX<Scalar> g;      // |S| x |I|
  MatX<Scalar> g_bar;  // rows are distributions over regions
};

template <typename Scalar>
struct CompatibilityMatrixT {
  MatX<Scalar> f;  // |S| x |S|, symmetric, entries in (0,1]
};

using GroundingScores = GroundingScoresT<float>;
using CompatibilityMatrix = CompatibilityMatrixT<float>;

// Softmax over regions.
template <typename Scalar>
VecX<Scalar> ground_prob(const VecX<Scalar>& g_row) {
  if (g_row.size() == 0) throw std::invalid_argument("ground_prob: empty score row");
  MatX<Scalar> m = g_row.transpose();
  Tape<Scalar>::softmax_rows_inplace(m);
  return m.transpose();
}

// Highest correlation of one word over the regions: max of the softmaxed
// dot products. Always in (0, 1].
template <typename Scalar>
Scalar word_attention(const VecX<Scalar>& word_emb, const MatX<Scalar>& region_embs) {
  if (region_embs.rows() < 1) throw std::invalid_argument("word_attention: no regions");
  VecX<Scalar> p = ground_prob<Scalar>(region_embs * word_emb);
  return p.maxCoeff();
}

// Attention-weighted sum of the word embeddings; the weights are not
// renormalized over words unless `normalize` is set. kAverage drops the
// attention entirely and returns the plain mean.
template <typename Scalar>
VecX<Scalar> mention_embedding(const MatX<Scalar>& word_embs, const MatX<Scalar>& region_embs,
                               AttentionMode mode = AttentionMode::kCross,
                               bool normalize = false) {
  if (word_embs.rows() < 1) throw std::invalid_argument("mention_embedding: no words");
  if (mode == AttentionMode::kAverage)
    return word_embs.colwise().mean().transpose();
  VecX<Scalar> a = VecX<Scalar>::Zero(word_embs.cols());
  Scalar weight_sum = 0;
  for (Eigen::Index w = 0; w < word_embs.rows(); ++w) {
    Scalar abar = word_attention<Scalar>(word_embs.row(w).transpose(), region_embs);
    a += abar * word_embs.row(w).transpose();
    weight_sum += abar;
  }
  if (normalize && weight_sum > 0) a /= weight_sum;
  return a;
}

// g(m, r) per region: dot products against the region embeddings.
template <typename Scalar>
VecX<Scalar> score(const VecX<Scalar>& mention_emb, const MatX<Scalar>& region_embs) {
  if (region_embs.cols() != mention_emb.size())
    throw std::invalid_argument("score: dimension mismatch");
  return region_embs * mention_emb;
}

// f = g_bar g_bar^T: inner products of grounding distributions.
template <typename Scalar>
CompatibilityMatrixT<Scalar> compatibility(const MatX<Scalar>& g_bar) {
  return CompatibilityMatrixT<Scalar>{g_bar * g_bar.transpose()};
}

// Argmax region; ties break to the lowest index.
template <typename Scalar>
int impute_region(const VecX<Scalar>& g_row) {
  if (g_row.size() < 1) throw std::invalid_argument("impute_region: empty score row");
  Eigen::Index arg;
  Tape<Scalar>::row_max(g_row.transpose(), arg);
  return static_cast<int>(arg);
}

// ---------------------------------------------------------------------------
// Engine-generic document pipeline: encoders -> cross-attention -> scores ->
// grounding distributions -> compatibility. Shared by inference (eager) and
// training (tape).
// ---------------------------------------------------------------------------

template <typename Scalar>
struct DocInputs {
  MatX<Scalar> region_inputs;             // |I| x (4 + d_o + d_v)
  std::vector<MatX<Scalar>> word_inputs;  // per mention, |m| x d_w
  MatX<Scalar> trace_inputs;              // |S| x 6
};

template <typename Scalar>
DocInputs<Scalar> build_doc_inputs(const Document& doc, const EmbeddingProvider& provider,
                                   const ModelConfig& cfg) {
  if (provider.dim() != cfg.d_w)
    throw std::invalid_argument("embedding provider dimension does not match ModelConfig.d_w");
  DocInputs<Scalar> in;
  in.region_inputs = region_input_matrix<Scalar>(doc.regions, cfg);
  const auto n_mentions = static_cast<Eigen::Index>(doc.mentions.size());
  in.trace_inputs.resize(n_mentions, 6);
  for (Eigen::Index i = 0; i < n_mentions; ++i) {
    const Mention& m = doc.mentions[static_cast<size_t>(i)];
    in.word_inputs.push_back(word_input_matrix<Scalar>(m, doc.tokens, provider));
    in.trace_inputs.row(i) = trace_input_row<Scalar>(m);
  }
  return in;
}

template <typename Scalar, class Engine>
typename Engine::Handle mention_embedding_fwd(const BoundModel<Scalar, Engine>& b,
                                              typename Engine::Handle words,
                                              typename Engine::Handle region_embs) {
  auto& e = *b.eng;
  const Eigen::Index n_words = e.value(words).rows();
  if (b.cfg->attention == AttentionMode::kAverage) {
    MatX<Scalar> ones = MatX<Scalar>::Constant(n_words, 1, Scalar(1) / static_cast<Scalar>(n_words));
    return e.matmul_tn(e.leaf(std::move(ones)), words);
  }
  auto corr = e.softmax_rows(e.matmul_nt(words, region_embs));
  auto abar = e.rowwise_max(corr);      // |m| x 1
  auto a = e.matmul_tn(abar, words);    // 1 x d
  if (b.cfg->normalize_attention) a = e.divide_by_scalar(a, e.sum(abar));
  return a;
}

template <class Handle>
struct DocGraph {
  Handle region_embs;   // |I| x d
  Handle mention_embs;  // |S| x d
  Handle g;             // |S| x |I|
  Handle g_bar;
  Handle f;             // |S| x |S|
};

template <typename Scalar, class Engine>
DocGraph<typename Engine::Handle> document_graph(const BoundModel<Scalar, Engine>& b,
                                                 const DocInputs<Scalar>& in) {
  auto& e = *b.eng;
  if (in.word_inputs.empty())
    throw std::invalid_argument("document_graph: document has no mentions");
  DocGraph<typename Engine::Handle> out;
  out.region_embs = encode_regions_fwd(b, e.leaf(in.region_inputs));

  typename Engine::Handle trace_embs;
  if (b.cfg->use_traces) trace_embs = encode_trace_fwd(b, e.leaf(in.trace_inputs));

  std::vector<typename Engine::Handle> rows;
  for (size_t i = 0; i < in.word_inputs.size(); ++i) {
    auto w = encode_words_fwd(b, e.leaf(in.word_inputs[i]));
    if (b.cfg->use_traces)
      w = fuse_text_trace_fwd(b, w, e.slice_rows(trace_embs, static_cast<Eigen::Index>(i), 1));
    rows.push_back(mention_embedding_fwd(b, w, out.region_embs));
  }
  out.mention_embs = e.concat_rows(rows);
  out.g = e.matmul_nt(out.mention_embs, out.region_embs);
  out.g_bar = e.softmax_rows(out.g);
  out.f = e.matmul_nt(out.g_bar, out.g_bar);
  return out;
}

// Eager forward pass over one document.
template <typename Scalar>
struct DocumentForward {
  MatX<Scalar> region_embs;
  MatX<Scalar> mention_embs;
  GroundingScoresT<Scalar> scores;
  CompatibilityMatrixT<Scalar> compat;
};

template <typename Scalar>
DocumentForward<Scalar> run_document_forward(const Document& doc,
                                             const ModelStateT<Scalar>& state,
                                             const EmbeddingProvider& provider) {
  EagerEngine<Scalar> eng;
  auto bound = BoundModel<Scalar, EagerEngine<Scalar>>::bind(eng, state);
  auto graph = document_graph(bound, build_doc_inputs<Scalar>(doc, provider, state.config));
  DocumentForward<Scalar> out;
  out.region_embs = std::move(graph.region_embs);
  out.mention_embs = std::move(graph.mention_embs);
  out.scores.g = std::move(graph.g);
  out.scores.g_bar = std::move(graph.g_bar);
  out.compat.f = std::move(graph.f);
  return out;
}

}  // namespace mcoref
