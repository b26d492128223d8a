#pragma once

#include <Eigen/Dense>

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcoref/autodiff.hpp"
#include "mcoref/corpus.hpp"
#include "mcoref/embeddings.hpp"
#include "mcoref/rng.hpp"

namespace mcoref {

enum class Arch { kMlp, kTransformer };
enum class AttentionMode { kCross, kAverage };

inline std::string arch_name(Arch a) { return a == Arch::kMlp ? "mlp" : "transformer"; }
inline Arch arch_from_name(const std::string& s) {
  if (s == "mlp") return Arch::kMlp;
  if (s == "transformer" || s == "tr") return Arch::kTransformer;
  throw std::invalid_argument("unknown arch: " + s);
}

struct TransformerConfig {
  int layers = 2;
  int heads = 2;
  int ffn_dim1 = 2048;
  int ffn_dim2 = 1024;  // must equal d (residual path)
};

struct ModelConfig {
  Arch arch = Arch::kMlp;
  int d = 1024;    // shared embedding dimension
  int d_w = 300;   // word-vector dimension
  int d_m = 128;   // trace embedding dimension
  int d_o = 300;   // category embedding dimension (from corpus)
  int d_v = 2048;  // visual feature dimension (from corpus)
  bool use_traces = false;
  int mlp_hidden = 0;  // 0 -> d
  TransformerConfig transformer;
  AttentionMode attention = AttentionMode::kCross;
  bool normalize_attention = false;  // renormalize word weights (off: literal weighted sum)

  int region_input_dim() const { return 4 + d_o + d_v; }
  int trace_input_dim() const { return 6; }  // 5 coords + presence flag
  int hidden() const { return mlp_hidden > 0 ? mlp_hidden : d; }

  void validate() const {
    auto positive = [](int v, const char* name) {
      if (v <= 0) throw std::invalid_argument(std::string("ModelConfig.") + name + " must be positive");
    };
    positive(d, "d");
    positive(d_w, "d_w");
    positive(d_m, "d_m");
    positive(d_o, "d_o");
    positive(d_v, "d_v");
    if (arch == Arch::kTransformer) {
      positive(transformer.layers, "transformer.layers");
      positive(transformer.heads, "transformer.heads");
      positive(transformer.ffn_dim1, "transformer.ffn_dim1");
      positive(transformer.ffn_dim2, "transformer.ffn_dim2");
      if (d % transformer.heads != 0)
        throw std::invalid_argument("ModelConfig: d must be divisible by attention heads");
      if (transformer.ffn_dim2 != d)
        throw std::invalid_argument("ModelConfig: transformer.ffn_dim2 must equal d");
    }
  }
};

// All encoder parameters, keyed by name in a sorted map so iteration order
// (checkpointing, optimizer state, gradient checks) is deterministic.
template <typename Scalar>
struct ModelStateT {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  ModelConfig config;
  std::uint64_t init_seed = 0;
  std::map<std::string, Mat> params;

  const Mat& param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }
};

using ModelState = ModelStateT<float>;

enum class ParamKind { kWeight, kBias, kLayerNormGain, kLayerNormBias, kTypeEmbedding };

struct ParamSpec {
  std::string name;
  int rows;
  int cols;
  ParamKind kind;
};

// Canonical parameter list for a config; the order defines the RNG draw
// order during initialization.
std::vector<ParamSpec> parameter_specs(const ModelConfig& cfg);

template <typename Scalar>
ModelStateT<Scalar> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelStateT<Scalar> state;
  state.config = cfg;
  state.init_seed = seed;
  DeterministicRng rng(seed);
  for (const ParamSpec& spec : parameter_specs(cfg)) {
    typename ModelStateT<Scalar>::Mat m(spec.rows, spec.cols);
    switch (spec.kind) {
      case ParamKind::kWeight: {
        const double a = std::sqrt(6.0 / (spec.rows + spec.cols));
        for (int i = 0; i < spec.rows; ++i)
          for (int j = 0; j < spec.cols; ++j) m(i, j) = static_cast<Scalar>(rng.uniform(-a, a));
        break;
      }
      case ParamKind::kBias:
      case ParamKind::kLayerNormBias:
        m.setZero();
        break;
      case ParamKind::kLayerNormGain:
        m.setOnes();
        break;
      case ParamKind::kTypeEmbedding:
        for (int i = 0; i < spec.rows; ++i)
          for (int j = 0; j < spec.cols; ++j) m(i, j) = static_cast<Scalar>(rng.uniform(-0.02, 0.02));
        break;
    }
    state.params.emplace(spec.name, std::move(m));
  }
  return state;
}

// ---------------------------------------------------------------------------
// Engines: the encoders below are written once against this interface and
// run either eagerly (inference) or on the autodiff tape (training).
// ---------------------------------------------------------------------------

template <typename Scalar>
struct EagerEngine {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Handle = Mat;

  Handle leaf(Mat m) const { return m; }
  const Mat& value(const Handle& h) const { return h; }

  Handle matmul(const Handle& a, const Handle& b) const { return a * b; }
  Handle matmul_nt(const Handle& a, const Handle& b) const { return a * b.transpose(); }
  Handle matmul_tn(const Handle& a, const Handle& b) const { return a.transpose() * b; }
  Handle add(const Handle& a, const Handle& b) const { return a + b; }
  Handle sub(const Handle& a, const Handle& b) const { return a - b; }
  Handle hadamard(const Handle& a, const Handle& b) const { return a.cwiseProduct(b); }
  Handle scale(const Handle& a, Scalar c) const { return a * c; }
  Handle add_rowvec(const Handle& a, const Handle& row) const {
    return a.rowwise() + row.row(0);
  }
  Handle relu(const Handle& a) const { return a.cwiseMax(Scalar(0)); }
  Handle square(const Handle& a) const { return a.array().square().matrix(); }
  Handle sum(const Handle& a) const {
    Mat out(1, 1);
    out(0, 0) = a.sum();
    return out;
  }
  Handle divide_by_scalar(const Handle& a, const Handle& s) const { return a / s(0, 0); }
  Handle softmax_rows(Handle a) const {
    Tape<Scalar>::softmax_rows_inplace(a);
    return a;
  }
  Handle rowwise_max(const Handle& a) const {
    Mat out(a.rows(), 1);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      Eigen::Index arg;
      out(i, 0) = Tape<Scalar>::row_max(a.row(i), arg);
    }
    return out;
  }
  Handle concat_rows(const std::vector<Handle>& parts) const {
    Eigen::Index r = 0;
    for (const auto& p : parts) r += p.rows();
    Mat out(r, parts.at(0).cols());
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      out.middleRows(at, p.rows()) = p;
      at += p.rows();
    }
    return out;
  }
  Handle concat_cols(const std::vector<Handle>& parts) const {
    Eigen::Index c = 0;
    for (const auto& p : parts) c += p.cols();
    Mat out(parts.at(0).rows(), c);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      out.middleCols(at, p.cols()) = p;
      at += p.cols();
    }
    return out;
  }
  Handle slice_rows(const Handle& a, Eigen::Index r0, Eigen::Index n) const {
    return a.middleRows(r0, n);
  }
  Handle slice_cols(const Handle& a, Eigen::Index c0, Eigen::Index n) const {
    return a.middleCols(c0, n);
  }
  Handle replicate_row(const Handle& a, Eigen::Index n) const { return a.replicate(n, 1); }
  Handle layernorm_rows(const Handle& x, const Handle& gamma, const Handle& beta,
                        Scalar eps = Scalar(1e-5)) const {
    Mat out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      Scalar mu = x.row(i).mean();
      Scalar var = (x.row(i).array() - mu).square().mean();
      Scalar is = Scalar(1) / std::sqrt(var + eps);
      out.row(i) =
          ((x.row(i).array() - mu) * is).matrix().cwiseProduct(gamma.row(0)) + beta.row(0);
    }
    return out;
  }
};

template <typename Scalar>
struct TapeEngine {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Handle = typename Tape<Scalar>::Var;

  Tape<Scalar>* tape;

  Handle leaf(Mat m) const { return tape->leaf(std::move(m)); }
  const Mat& value(const Handle& h) const { return tape->value(h); }

  Handle matmul(Handle a, Handle b) const { return tape->matmul(a, b); }
  Handle matmul_nt(Handle a, Handle b) const { return tape->matmul_nt(a, b); }
  Handle matmul_tn(Handle a, Handle b) const { return tape->matmul_tn(a, b); }
  Handle add(Handle a, Handle b) const { return tape->add(a, b); }
  Handle sub(Handle a, Handle b) const { return tape->sub(a, b); }
  Handle hadamard(Handle a, Handle b) const { return tape->hadamard(a, b); }
  Handle scale(Handle a, Scalar c) const { return tape->scale(a, c); }
  Handle add_rowvec(Handle a, Handle row) const { return tape->add_rowvec(a, row); }
  Handle relu(Handle a) const { return tape->relu(a); }
  Handle square(Handle a) const { return tape->square(a); }
  Handle sum(Handle a) const { return tape->sum(a); }
  Handle divide_by_scalar(Handle a, Handle s) const { return tape->divide_by_scalar(a, s); }
  Handle softmax_rows(Handle a) const { return tape->softmax_rows(a); }
  Handle rowwise_max(Handle a) const { return tape->rowwise_max(a); }
  Handle concat_rows(const std::vector<Handle>& parts) const { return tape->concat_rows(parts); }
  Handle concat_cols(const std::vector<Handle>& parts) const { return tape->concat_cols(parts); }
  Handle slice_rows(Handle a, Eigen::Index r0, Eigen::Index n) const {
    return tape->slice_rows(a, r0, n);
  }
  Handle slice_cols(Handle a, Eigen::Index c0, Eigen::Index n) const {
    return tape->slice_cols(a, c0, n);
  }
  Handle replicate_row(Handle a, Eigen::Index n) const { return tape->replicate_row(a, n); }
  Handle layernorm_rows(Handle x, Handle gamma, Handle beta, Scalar eps = Scalar(1e-5)) const {
    return tape->layernorm_rows(x, gamma, beta, eps);
  }
};

// Model parameters lifted into an engine. Bind once per tape so every use of
// a parameter shares one node and gradients accumulate.
template <typename Scalar, class Engine>
struct BoundModel {
  const ModelConfig* cfg;
  Engine* eng;
  std::map<std::string, typename Engine::Handle> p;

  static BoundModel bind(Engine& engine, const ModelStateT<Scalar>& state) {
    BoundModel b;
    b.cfg = &state.config;
    b.eng = &engine;
    for (const auto& [name, value] : state.params) b.p.emplace(name, engine.leaf(value));
    return b;
  }

  typename Engine::Handle operator[](const std::string& name) const {
    auto it = p.find(name);
    if (it == p.end()) throw std::out_of_range("unbound parameter: " + name);
    return it->second;
  }
};

namespace detail {

// relu(x W1 + b1) W2 + b2
template <typename Scalar, class Engine>
typename Engine::Handle mlp_block(const BoundModel<Scalar, Engine>& b,
                                  const std::string& prefix,
                                  typename Engine::Handle x) {
  auto& e = *b.eng;
  auto h = e.relu(e.add_rowvec(e.matmul(x, b[prefix + ".w1"]), b[prefix + ".b1"]));
  return e.add_rowvec(e.matmul(h, b[prefix + ".w2"]), b[prefix + ".b2"]);
}

// Standard encoder layer: multi-head self attention and an FFN whose two FC
// layers each carry a ReLU, with residual connections and layer norm.
template <typename Scalar, class Engine>
typename Engine::Handle transformer_layer(const BoundModel<Scalar, Engine>& b,
                                          const std::string& prefix,
                                          typename Engine::Handle x) {
  auto& e = *b.eng;
  const int d = b.cfg->d;
  const int heads = b.cfg->transformer.heads;
  const int head_dim = d / heads;
  auto q = e.add_rowvec(e.matmul(x, b[prefix + ".attn.wq"]), b[prefix + ".attn.bq"]);
  auto k = e.add_rowvec(e.matmul(x, b[prefix + ".attn.wk"]), b[prefix + ".attn.bk"]);
  auto v = e.add_rowvec(e.matmul(x, b[prefix + ".attn.wv"]), b[prefix + ".attn.bv"]);
  std::vector<typename Engine::Handle> head_outs;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(head_dim));
  for (int h = 0; h < heads; ++h) {
    auto qh = e.slice_cols(q, h * head_dim, head_dim);
    auto kh = e.slice_cols(k, h * head_dim, head_dim);
    auto vh = e.slice_cols(v, h * head_dim, head_dim);
    auto attn = e.softmax_rows(e.scale(e.matmul_nt(qh, kh), inv_sqrt));
    head_outs.push_back(e.matmul(attn, vh));
  }
  auto o = e.add_rowvec(e.matmul(e.concat_cols(head_outs), b[prefix + ".attn.wo"]),
                        b[prefix + ".attn.bo"]);
  auto x1 = e.layernorm_rows(e.add(x, o), b[prefix + ".ln1.g"], b[prefix + ".ln1.b"]);
  auto f = e.relu(e.add_rowvec(e.matmul(x1, b[prefix + ".ffn.w1"]), b[prefix + ".ffn.b1"]));
  auto f2 = e.relu(e.add_rowvec(e.matmul(f, b[prefix + ".ffn.w2"]), b[prefix + ".ffn.b2"]));
  return e.layernorm_rows(e.add(x1, f2), b[prefix + ".ln2.g"], b[prefix + ".ln2.b"]);
}

}  // namespace detail

// region rows -> |I| x d embeddings
template <typename Scalar, class Engine>
typename Engine::Handle encode_regions_fwd(const BoundModel<Scalar, Engine>& b,
                                           typename Engine::Handle region_inputs) {
  auto& e = *b.eng;
  if (b.cfg->arch == Arch::kMlp) return detail::mlp_block(b, "img", region_inputs);
  auto x = e.add_rowvec(e.matmul(region_inputs, b["img.proj.w"]), b["img.proj.b"]);
  for (int l = 0; l < b.cfg->transformer.layers; ++l)
    x = detail::transformer_layer(b, "img.l" + std::to_string(l), x);
  return x;
}

// word-vector rows -> |m| x d embeddings (always the MLP text encoder)
template <typename Scalar, class Engine>
typename Engine::Handle encode_words_fwd(const BoundModel<Scalar, Engine>& b,
                                         typename Engine::Handle word_inputs) {
  return detail::mlp_block(b, "txt", word_inputs);
}

// (5 coords + presence) rows -> n x d_m embeddings
template <typename Scalar, class Engine>
typename Engine::Handle encode_trace_fwd(const BoundModel<Scalar, Engine>& b,
                                         typename Engine::Handle trace_inputs) {
  return detail::mlp_block(b, "trc", trace_inputs);
}

// word embeddings (|m| x d) + one trace embedding (1 x d_m) -> fused |m| x d
template <typename Scalar, class Engine>
typename Engine::Handle fuse_text_trace_fwd(const BoundModel<Scalar, Engine>& b,
                                            typename Engine::Handle word_embs,
                                            typename Engine::Handle trace_emb) {
  auto& e = *b.eng;
  if (!b.cfg->use_traces)
    throw std::logic_error("fuse_text_trace requires use_traces=true");
  const Eigen::Index n_words = e.value(word_embs).rows();
  if (b.cfg->arch == Arch::kMlp) {
    auto joined = e.concat_cols({word_embs, e.replicate_row(trace_emb, n_words)});
    return detail::mlp_block(b, "joint", joined);
  }
  // transformer: word tokens plus one projected trace token, each offset by
  // its modality-type embedding; word positions of the output are returned
  auto trace_tok = e.add_rowvec(e.matmul(trace_emb, b["joint.trace_proj.w"]),
                                b["joint.trace_proj.b"]);
  auto words_typed = e.add_rowvec(word_embs, b["joint.type.text"]);
  auto trace_typed = e.add_rowvec(trace_tok, b["joint.type.trace"]);
  auto x = e.concat_rows({words_typed, trace_typed});
  for (int l = 0; l < b.cfg->transformer.layers; ++l)
    x = detail::transformer_layer(b, "joint.l" + std::to_string(l), x);
  return e.slice_rows(x, 0, n_words);
}

// ---------------------------------------------------------------------------
// Input preparation shared by both engines.
// ---------------------------------------------------------------------------

// concat(box, category embedding, L2-normalized visual features) per region
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> region_input_matrix(
    const std::vector<Region>& regions, const ModelConfig& cfg) {
  if (regions.empty()) throw std::invalid_argument("encode_regions: empty region list");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m(
      static_cast<Eigen::Index>(regions.size()), cfg.region_input_dim());
  for (size_t r = 0; r < regions.size(); ++r) {
    const Region& reg = regions[r];
    if (static_cast<int>(reg.category_embedding.size()) != cfg.d_o ||
        static_cast<int>(reg.visual_features.size()) != cfg.d_v)
      throw std::invalid_argument("region feature dimensions do not match model config");
    Eigen::Index at = 0;
    for (double v : reg.box) m(r, at++) = static_cast<Scalar>(v);
    for (double v : reg.category_embedding) m(r, at++) = static_cast<Scalar>(v);
    double norm = 0;
    for (double v : reg.visual_features) norm += v * v;
    norm = norm > 0 ? std::sqrt(norm) : 1.0;
    for (double v : reg.visual_features) m(r, at++) = static_cast<Scalar>(v / norm);
  }
  return m;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> word_input_matrix(
    const Mention& mention, const std::vector<std::string>& tokens,
    const EmbeddingProvider& provider) {
  if (!(0 <= mention.start && mention.start < mention.end &&
        mention.end <= static_cast<int>(tokens.size())))
    throw std::invalid_argument("mention span out of token range");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m(mention.length(), provider.dim());
  for (int w = 0; w < mention.length(); ++w)
    m.row(w) = provider.lookup(tokens[static_cast<size_t>(mention.start + w)])
                   .template cast<Scalar>()
                   .transpose();
  return m;
}

// (x_min, x_max, y_min, y_max, area, presence); absent -> zeros with flag 0
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> trace_input_row(const Mention& mention) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> row =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(1, 6);
  if (mention.trace) {
    for (int i = 0; i < 5; ++i) row(0, i) = static_cast<Scalar>((*mention.trace)[i]);
    row(0, 5) = Scalar(1);
  }
  return row;
}

// ---------------------------------------------------------------------------
// Spec-surface encoder operations (eager).
// ---------------------------------------------------------------------------

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> encode_regions(
    const std::vector<Region>& regions, const ModelStateT<Scalar>& state) {
  EagerEngine<Scalar> e;
  auto b = BoundModel<Scalar, EagerEngine<Scalar>>::bind(e, state);
  return encode_regions_fwd(b, region_input_matrix<Scalar>(regions, state.config));
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> encode_words(
    const Mention& mention, const std::vector<std::string>& tokens,
    const EmbeddingProvider& provider, const ModelStateT<Scalar>& state) {
  if (provider.dim() != state.config.d_w)
    throw std::invalid_argument("embedding provider dimension does not match ModelConfig.d_w");
  EagerEngine<Scalar> e;
  auto b = BoundModel<Scalar, EagerEngine<Scalar>>::bind(e, state);
  return encode_words_fwd(b, word_input_matrix<Scalar>(mention, tokens, provider));
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> encode_trace(
    const Mention& mention, const ModelStateT<Scalar>& state) {
  EagerEngine<Scalar> e;
  auto b = BoundModel<Scalar, EagerEngine<Scalar>>::bind(e, state);
  return encode_trace_fwd(b, trace_input_row<Scalar>(mention));
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> fuse_text_trace(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& word_embs,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& trace_emb,
    const ModelStateT<Scalar>& state) {
  EagerEngine<Scalar> e;
  auto b = BoundModel<Scalar, EagerEngine<Scalar>>::bind(e, state);
  return fuse_text_trace_fwd(b, word_embs, trace_emb);
}

}  // namespace mcoref
