#pragma once

#include "ricl/nn/graph.hpp"

#include <cmath>

namespace ricl::nn {

struct ModelConfig {
  int layers = 4;
  int heads = 4;
  int width = 128;
  int context_length = 512;
  int vocab = 0;   // id-bearing vocabulary size
  int groups = 5;  // neighbor groups + query
  bool causal = true;

  int head_dim() const { return width / heads; }
  void validate() const {
    require(width % heads == 0, "config-invalid", "width must divide into heads");
    require(vocab > 0 && layers >= 1 && context_length >= 1, "config-invalid", "bad model config");
    require(causal, "config-invalid", "only causal attention is supported");
  }
};

// One flattened context: ids (-1 at image positions), per-position segment,
// group and position tags, and dense rows holding the frozen image token
// vectors (zero at non-image positions). Positions are explicit so contexts
// can be right-aligned to the decode window.
template <typename S>
struct TokenizedInput {
  std::vector<int> ids;
  std::vector<int> segments;
  std::vector<int> groups;
  std::vector<int> positions;
  Mat<S> image_rows;  // T x width

  int length() const { return int(ids.size()); }
};

inline constexpr int kSegmentKinds = 5;

// Decoder-only causal transformer over a mixed token/vector context.
// Training uses the tape in graph.hpp; deployment uses an incremental
// KV-cache path over the same parameters.
template <typename S>
class TransformerModel {
 public:
  TransformerModel(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const int W = cfg_.width, V = cfg_.vocab;
    tok_ = store_.add("tok_embed", V, W);
    pos_ = store_.add("pos_embed", cfg_.context_length, W);
    seg_ = store_.add("seg_embed", kSegmentKinds, W);
    grp_ = store_.add("grp_embed", cfg_.groups, W);
    layers_.resize(size_t(cfg_.layers));
    for (int l = 0; l < cfg_.layers; ++l) {
      auto& L = layers_[size_t(l)];
      std::string p = "layer" + std::to_string(l) + ".";
      L.ln1_g = store_.add(p + "ln1_g", 1, W);
      L.ln1_b = store_.add(p + "ln1_b", 1, W);
      L.qkv_w = store_.add(p + "qkv_w", W, 3 * W);
      L.qkv_b = store_.add(p + "qkv_b", 1, 3 * W);
      L.out_w = store_.add(p + "out_w", W, W);
      L.out_b = store_.add(p + "out_b", 1, W);
      L.ln2_g = store_.add(p + "ln2_g", 1, W);
      L.ln2_b = store_.add(p + "ln2_b", 1, W);
      L.fc_w = store_.add(p + "fc_w", W, 4 * W);
      L.fc_b = store_.add(p + "fc_b", 1, 4 * W);
      L.proj_w = store_.add(p + "proj_w", 4 * W, W);
      L.proj_b = store_.add(p + "proj_b", 1, W);
    }
    lnf_g_ = store_.add("lnf_g", 1, W);
    lnf_b_ = store_.add("lnf_b", 1, W);
    head_w_ = store_.add("head_w", W, V);
    head_b_ = store_.add("head_b", 1, V);
    init_parameters(seed);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<S>& params() { return store_; }
  const ParamStore<S>& params() const { return store_; }

  // ---- training path (tape) ----

  typename Graph<S>::Id forward(Graph<S>& g, const TokenizedInput<S>& in) const {
    const int T = in.length();
    require(T >= 1, "shape-mismatch", "empty input");
    require(T <= cfg_.context_length, "context-overflow",
            std::to_string(T) + " tokens > context_length " + std::to_string(cfg_.context_length));
    require(in.image_rows.rows() == T && in.image_rows.cols() == cfg_.width, "shape-mismatch",
            "image_rows must be T x width");
    require(int(in.positions.size()) == T, "shape-mismatch", "one position per token");
    for (int p : in.positions)
      require(p >= 0 && p < cfg_.context_length, "context-overflow", "position out of range");

    auto x = g.add(g.add(g.embed(g.param(tok_), in.ids), g.embed(g.param(seg_), in.segments)),
                   g.add(g.embed(g.param(grp_), in.groups), g.embed(g.param(pos_), in.positions)));
    x = g.add(x, g.input(in.image_rows));

    const int H = cfg_.heads, hs = cfg_.head_dim();
    const S inv_sqrt_hs = S(1) / std::sqrt(S(hs));
    for (const auto& L : layers_) {
      auto a = g.layernorm(x, g.param(L.ln1_g), g.param(L.ln1_b));
      auto qkv = g.add_rowvec(g.matmul(a, g.param(L.qkv_w)), g.param(L.qkv_b));
      std::vector<typename Graph<S>::Id> head_outs;
      head_outs.reserve(size_t(H));
      for (int h = 0; h < H; ++h) {
        auto q = g.slice_cols(qkv, h * hs, hs);
        auto k = g.slice_cols(qkv, cfg_.width + h * hs, hs);
        auto v = g.slice_cols(qkv, 2 * cfg_.width + h * hs, hs);
        auto scores = g.scale(g.matmul_nt(q, k), inv_sqrt_hs);
        auto probs = g.causal_softmax(scores);
        head_outs.push_back(g.matmul(probs, v));
      }
      auto attn = g.add_rowvec(g.matmul(g.concat_cols(head_outs), g.param(L.out_w)),
                               g.param(L.out_b));
      x = g.add(x, attn);
      auto a2 = g.layernorm(x, g.param(L.ln2_g), g.param(L.ln2_b));
      auto mlp = g.add_rowvec(
          g.matmul(g.gelu(g.add_rowvec(g.matmul(a2, g.param(L.fc_w)), g.param(L.fc_b))),
                   g.param(L.proj_w)),
          g.param(L.proj_b));
      x = g.add(x, mlp);
    }
    auto hf = g.layernorm(x, g.param(lnf_g_), g.param(lnf_b_));
    return g.add_rowvec(g.matmul(hf, g.param(head_w_)), g.param(head_b_));
  }

  // ---- deployment path (KV cache, no tape) ----

  struct KvCache {
    std::vector<Mat<S>> k, v;  // per layer, len x width
    int len = 0;
  };

  KvCache make_cache() const {
    KvCache c;
    c.k.assign(size_t(cfg_.layers), Mat<S>(cfg_.context_length, cfg_.width));
    c.v.assign(size_t(cfg_.layers), Mat<S>(cfg_.context_length, cfg_.width));
    return c;
  }

  // Embedding row for one id token appended during decoding.
  Vec<S> compose_row(int id, int segment, int group, int position) const {
    require(position < cfg_.context_length, "context-overflow", "decode past context_length");
    Vec<S> row = tok_->value.row(id).transpose();
    row += seg_->value.row(segment).transpose();
    row += grp_->value.row(group).transpose();
    row += pos_->value.row(position).transpose();
    return row;
  }

  // Runs the full prefix, fills the cache, returns logits at the last position.
  Vec<S> prefill(const TokenizedInput<S>& in, KvCache& cache) const {
    const int T = in.length();
    require(T <= cfg_.context_length, "context-overflow", "prefill longer than context_length");
    require(int(in.positions.size()) == T, "shape-mismatch", "one position per token");
    Mat<S> x(T, cfg_.width);
    for (int i = 0; i < T; ++i) {
      int id = in.ids[size_t(i)];
      if (id >= 0)
        x.row(i) = tok_->value.row(id);
      else
        x.row(i).setZero();
      x.row(i) += seg_->value.row(in.segments[size_t(i)]);
      x.row(i) += grp_->value.row(in.groups[size_t(i)]);
      x.row(i) += pos_->value.row(in.positions[size_t(i)]);
      x.row(i) += in.image_rows.row(i);
    }

    const int H = cfg_.heads, hs = cfg_.head_dim();
    const S scale = S(1) / std::sqrt(S(hs));
    cache.len = T;
    for (int l = 0; l < cfg_.layers; ++l) {
      const auto& L = layers_[size_t(l)];
      Mat<S> a = eval_layernorm(x, L.ln1_g->value, L.ln1_b->value);
      Mat<S> qkv = (a * L.qkv_w->value).rowwise() + L.qkv_b->value.row(0);
      cache.k[size_t(l)].topRows(T) = qkv.middleCols(cfg_.width, cfg_.width);
      cache.v[size_t(l)].topRows(T) = qkv.middleCols(2 * cfg_.width, cfg_.width);
      Mat<S> attn(T, cfg_.width);
      for (int h = 0; h < H; ++h) {
        auto q = qkv.middleCols(h * hs, hs);
        auto k = cache.k[size_t(l)].topRows(T).middleCols(h * hs, hs);
        auto v = cache.v[size_t(l)].topRows(T).middleCols(h * hs, hs);
        Mat<S> scores = q * k.transpose() * scale;
        for (int r = 0; r < T; ++r) {
          auto row = scores.row(r).head(r + 1).array();
          S mx = row.maxCoeff();
          Eigen::Array<S, 1, Eigen::Dynamic> ex = (row - mx).exp();
          ex /= ex.sum();
          attn.block(r, h * hs, 1, hs) = ex.matrix() * v.topRows(r + 1);
        }
      }
      x += (attn * L.out_w->value).rowwise() + L.out_b->value.row(0);
      Mat<S> a2 = eval_layernorm(x, L.ln2_g->value, L.ln2_b->value);
      Mat<S> fc = (a2 * L.fc_w->value).rowwise() + L.fc_b->value.row(0);
      eval_gelu_inplace(fc);
      x += (fc * L.proj_w->value).rowwise() + L.proj_b->value.row(0);
    }
    Mat<S> hf = eval_layernorm(x.bottomRows(1), lnf_g_->value, lnf_b_->value);
    return ((hf * head_w_->value).rowwise() + head_b_->value.row(0)).row(0).transpose();
  }

  // Appends one embedded row, returns logits for the next prediction.
  Vec<S> decode_step(const Vec<S>& row, KvCache& cache) const {
    require(cache.len + 1 <= cfg_.context_length, "context-overflow", "decode past context_length");
    const int H = cfg_.heads, hs = cfg_.head_dim();
    const S scale = S(1) / std::sqrt(S(hs));
    Mat<S> x = row.transpose();  // 1 x W
    const int t = cache.len;
    for (int l = 0; l < cfg_.layers; ++l) {
      const auto& L = layers_[size_t(l)];
      Mat<S> a = eval_layernorm(x, L.ln1_g->value, L.ln1_b->value);
      Mat<S> qkv = (a * L.qkv_w->value).rowwise() + L.qkv_b->value.row(0);
      cache.k[size_t(l)].row(t) = qkv.middleCols(cfg_.width, cfg_.width);
      cache.v[size_t(l)].row(t) = qkv.middleCols(2 * cfg_.width, cfg_.width);
      Mat<S> attn(1, cfg_.width);
      for (int h = 0; h < H; ++h) {
        auto q = qkv.middleCols(h * hs, hs);
        auto k = cache.k[size_t(l)].topRows(t + 1).middleCols(h * hs, hs);
        auto v = cache.v[size_t(l)].topRows(t + 1).middleCols(h * hs, hs);
        Eigen::Array<S, 1, Eigen::Dynamic> scores = (q * k.transpose() * scale).row(0).array();
        S mx = scores.maxCoeff();
        Eigen::Array<S, 1, Eigen::Dynamic> ex = (scores - mx).exp();
        ex /= ex.sum();
        attn.block(0, h * hs, 1, hs) = ex.matrix() * v;
      }
      x += (attn * L.out_w->value).rowwise() + L.out_b->value.row(0);
      Mat<S> a2 = eval_layernorm(x, L.ln2_g->value, L.ln2_b->value);
      Mat<S> fc = (a2 * L.fc_w->value).rowwise() + L.fc_b->value.row(0);
      eval_gelu_inplace(fc);
      x += (fc * L.proj_w->value).rowwise() + L.proj_b->value.row(0);
    }
    cache.len = t + 1;
    Mat<S> hf = eval_layernorm(x, lnf_g_->value, lnf_b_->value);
    return ((hf * head_w_->value).rowwise() + head_b_->value.row(0)).row(0).transpose();
  }

 private:
  struct Layer {
    Param<S>*ln1_g, *ln1_b, *qkv_w, *qkv_b, *out_w, *out_b, *ln2_g, *ln2_b, *fc_w, *fc_b, *proj_w,
        *proj_b;
  };

  void init_parameters(uint64_t seed) {
    Rng rng(Rng::substream(seed, 0x7A));
    auto fill_gaussian = [&](Param<S>* p, S std_dev) {
      for (Eigen::Index r = 0; r < p->value.rows(); ++r)
        for (Eigen::Index c = 0; c < p->value.cols(); ++c)
          p->value(r, c) = S(rng.normal()) * std_dev;
    };
    const S base = S(0.02);
    const S resid = base / std::sqrt(S(2 * cfg_.layers));
    fill_gaussian(tok_, base);
    fill_gaussian(pos_, base);
    fill_gaussian(seg_, base);
    fill_gaussian(grp_, base);
    for (auto& L : layers_) {
      L.ln1_g->value.setOnes();
      L.ln2_g->value.setOnes();
      fill_gaussian(L.qkv_w, base);
      fill_gaussian(L.out_w, resid);
      fill_gaussian(L.fc_w, base);
      fill_gaussian(L.proj_w, resid);
    }
    lnf_g_->value.setOnes();
    fill_gaussian(head_w_, base);
  }

  static Mat<S> eval_layernorm(const Mat<S>& x, const Mat<S>& gain, const Mat<S>& bias) {
    const S eps = S(1e-5);
    Mat<S> out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      S mu = x.row(r).mean();
      S var = (x.row(r).array() - mu).square().mean();
      S is = S(1) / std::sqrt(var + eps);
      out.row(r) = ((x.row(r).array() - mu) * is) * gain.row(0).array();
      out.row(r) += bias.row(0);
    }
    return out;
  }

  static void eval_gelu_inplace(Mat<S>& x) {
    const S c = S(0.7978845608028654);
    x.array() =
        S(0.5) * x.array() * (S(1) + ((c * (x.array() + S(0.044715) * x.array().cube())).tanh()));
  }

  ModelConfig cfg_;
  ParamStore<S> store_;
  Param<S>*tok_, *pos_, *seg_, *grp_, *lnf_g_, *lnf_b_, *head_w_, *head_b_;
  std::vector<Layer> layers_;
};

}  // namespace ricl::nn
