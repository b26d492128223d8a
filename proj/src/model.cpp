#include "mcoref/model.hpp"

namespace mcoref {

namespace {

void add_mlp_block(std::vector<ParamSpec>& out, const std::string& prefix, int in_dim,
                   int hidden, int out_dim) {
  out.push_back({prefix + ".w1", in_dim, hidden, ParamKind::kWeight});
  out.push_back({prefix + ".b1", 1, hidden, ParamKind::kBias});
  out.push_back({prefix + ".w2", hidden, out_dim, ParamKind::kWeight});
  out.push_back({prefix + ".b2", 1, out_dim, ParamKind::kBias});
}

void add_transformer_layer(std::vector<ParamSpec>& out, const std::string& prefix, int d,
                           const TransformerConfig& tc) {
  for (const char* w : {"wq", "wk", "wv", "wo"})
    out.push_back({prefix + ".attn." + w, d, d, ParamKind::kWeight});
  for (const char* b : {"bq", "bk", "bv", "bo"})
    out.push_back({prefix + ".attn." + b, 1, d, ParamKind::kBias});
  out.push_back({prefix + ".ln1.g", 1, d, ParamKind::kLayerNormGain});
  out.push_back({prefix + ".ln1.b", 1, d, ParamKind::kLayerNormBias});
  out.push_back({prefix + ".ffn.w1", d, tc.ffn_dim1, ParamKind::kWeight});
  out.push_back({prefix + ".ffn.b1", 1, tc.ffn_dim1, ParamKind::kBias});
  out.push_back({prefix + ".ffn.w2", tc.ffn_dim1, tc.ffn_dim2, ParamKind::kWeight});
  out.push_back({prefix + ".ffn.b2", 1, tc.ffn_dim2, ParamKind::kBias});
  out.push_back({prefix + ".ln2.g", 1, d, ParamKind::kLayerNormGain});
  out.push_back({prefix + ".ln2.b", 1, d, ParamKind::kLayerNormBias});
}

}  // namespace

std::vector<ParamSpec> parameter_specs(const ModelConfig& cfg) {
  std::vector<ParamSpec> out;
  const int d = cfg.d;
  const int h = cfg.hidden();

  if (cfg.arch == Arch::kMlp) {
    add_mlp_block(out, "img", cfg.region_input_dim(), h, d);
  } else {
    out.push_back({"img.proj.w", cfg.region_input_dim(), d, ParamKind::kWeight});
    out.push_back({"img.proj.b", 1, d, ParamKind::kBias});
    for (int l = 0; l < cfg.transformer.layers; ++l)
      add_transformer_layer(out, "img.l" + std::to_string(l), d, cfg.transformer);
  }

  // the text and trace encoders stay MLP blocks in both variants
  add_mlp_block(out, "txt", cfg.d_w, h, d);
  add_mlp_block(out, "trc", cfg.trace_input_dim(), cfg.d_m, cfg.d_m);

  if (cfg.arch == Arch::kMlp) {
    add_mlp_block(out, "joint", d + cfg.d_m, h, d);
  } else {
    out.push_back({"joint.trace_proj.w", cfg.d_m, d, ParamKind::kWeight});
    out.push_back({"joint.trace_proj.b", 1, d, ParamKind::kBias});
    out.push_back({"joint.type.text", 1, d, ParamKind::kTypeEmbedding});
    out.push_back({"joint.type.trace", 1, d, ParamKind::kTypeEmbedding});
    for (int l = 0; l < cfg.transformer.layers; ++l)
      add_transformer_layer(out, "joint.l" + std::to_string(l), d, cfg.transformer);
  }
  return out;
}

}  // namespace mcoref
