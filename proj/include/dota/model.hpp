#pragma once

// Decoder-only transformer over [audio frames ; text tokens].
//
// Audio frames (n_mels * k wide after stacking) and token embeddings are
// linearly projected to the model width, sinusoidal positions are added over
// the concatenated sequence, and pre-norm blocks run under either a causal
// mask or a prefix mask in which audio frames also see later audio frames.
// Logits are produced only at text positions; position t predicts token t+1.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dota/common.hpp"
#include "dota/frontend.hpp"
#include "dota/params.hpp"
#include "dota/vocab.hpp"

namespace dota {

struct ModelConfig {
  std::size_t n_layers = 16;
  std::size_t model_dim = 768;
  std::size_t n_heads = 12;
  std::size_t embed_dim = 128;
  std::size_t stack_factor = 4;
  std::size_t vocab_size = 30522;
  std::size_t max_text_tokens = kMaxTextTokens;
  std::size_t n_mels = 80;
  std::size_t mel_frames = 3000;
  bool bidirectional_audio = false;

  std::size_t ff_dim() const { return 4 * model_dim; }
  std::size_t head_dim() const { return model_dim / n_heads; }
  std::size_t audio_width() const { return n_mels * stack_factor; }
  std::size_t n_audio_frames() const { return mel_frames / stack_factor; }

  void validate() const {
    if (n_layers == 0 || model_dim == 0 || n_heads == 0 || embed_dim == 0 || vocab_size == 0 || n_mels == 0)
      throw ConfigError("model: dimensions must be positive");
    if (model_dim % n_heads != 0) throw ConfigError("model: model_dim must be divisible by n_heads");
    if (model_dim % 2 != 0) throw ConfigError("model: model_dim must be even for sinusoidal positions");
    if (stack_factor == 0 || mel_frames % stack_factor != 0)
      throw ConfigError("model: mel_frames must be divisible by stack_factor");
    if (max_text_tokens < 2) throw ConfigError("model: max_text_tokens must be at least 2");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Ordered parameter shapes implied by a configuration.
inline std::vector<ParamInfo> param_layout(const ModelConfig& c) {
  const auto d = static_cast<Eigen::Index>(c.model_dim);
  const auto e = static_cast<Eigen::Index>(c.embed_dim);
  const auto f = static_cast<Eigen::Index>(c.ff_dim());
  const auto v = static_cast<Eigen::Index>(c.vocab_size);
  const auto a = static_cast<Eigen::Index>(c.audio_width());
  using K = ParamKind;
  std::vector<ParamInfo> p = {
      {"audio_proj.weight", a, d, K::kWeight},
      {"audio_proj.bias", 1, d, K::kBias},
      {"token_embed.weight", v, e, K::kWeight},
      {"token_proj.weight", e, d, K::kWeight},
      {"token_proj.bias", 1, d, K::kBias},
  };
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    const std::vector<ParamInfo> layer = {
        {pre + "ln1.gain", 1, d, K::kNormGain}, {pre + "ln1.bias", 1, d, K::kNormBias},
        {pre + "attn.q.weight", d, d, K::kWeight}, {pre + "attn.q.bias", 1, d, K::kBias},
        {pre + "attn.k.weight", d, d, K::kWeight}, {pre + "attn.k.bias", 1, d, K::kBias},
        {pre + "attn.v.weight", d, d, K::kWeight}, {pre + "attn.v.bias", 1, d, K::kBias},
        {pre + "attn.out.weight", d, d, K::kResidual}, {pre + "attn.out.bias", 1, d, K::kBias},
        {pre + "ln2.gain", 1, d, K::kNormGain}, {pre + "ln2.bias", 1, d, K::kNormBias},
        {pre + "ff.in.weight", d, f, K::kWeight}, {pre + "ff.in.bias", 1, f, K::kBias},
        {pre + "ff.out.weight", f, d, K::kResidual}, {pre + "ff.out.bias", 1, d, K::kBias},
    };
    p.insert(p.end(), layer.begin(), layer.end());
  }
  const std::vector<ParamInfo> tail = {
      {"final_ln.gain", 1, d, K::kNormGain}, {"final_ln.bias", 1, d, K::kNormBias},
      {"head.proj.weight", d, e, K::kWeight}, {"head.proj.bias", 1, e, K::kBias},
      {"head.out.weight", e, v, K::kWeight}, {"head.out.bias", 1, v, K::kBias},
  };
  p.insert(p.end(), tail.begin(), tail.end());
  return p;
}

inline std::size_t param_count(const ModelConfig& c) {
  std::size_t n = 0;
  for (const auto& i : param_layout(c)) n += i.numel();
  return n;
}

/// Positions of each named tensor inside the ParamSet, fixed by param_layout.
struct LayerSlots {
  std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
};

struct ModelSlots {
  std::size_t audio_w = 0, audio_b = 1, embed = 2, tok_w = 3, tok_b = 4;
  std::vector<LayerSlots> layers;
  std::size_t lnf_g, lnf_b, proj_w, proj_b, out_w, out_b;

  explicit ModelSlots(const ModelConfig& c) {
    std::size_t i = 5;
    for (std::size_t l = 0; l < c.n_layers; ++l) {
      layers.push_back({i, i + 1, i + 2, i + 3, i + 4, i + 5, i + 6, i + 7, i + 8, i + 9, i + 10, i + 11, i + 12,
                        i + 13, i + 14, i + 15});
      i += 16;
    }
    lnf_g = i, lnf_b = i + 1, proj_w = i + 2, proj_b = i + 3, out_w = i + 4, out_b = i + 5;
  }
};

template <class T>
struct ModelParams {
  ModelConfig config;
  ParamSet<T> tensors;

  template <class U>
  ModelParams<U> cast() const {
    return {config, tensors.template cast<U>()};
  }
};

/// Normal(0, 0.02) weights, residual-output weights further scaled by
/// 1/sqrt(2 * n_layers), zero biases, unit layer-norm gains.
template <class T = double>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams<T> p{cfg, ParamSet<T>(param_layout(cfg))};
  Rng rng(mix_seed(seed, 0x1A17));
  const double resid_std = 0.02 / std::sqrt(2.0 * static_cast<double>(cfg.n_layers));
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    auto& m = p.tensors[i];
    switch (p.tensors.info(i).kind) {
      case ParamKind::kWeight:
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<T>(0.02 * rng.normal());
        break;
      case ParamKind::kResidual:
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<T>(resid_std * rng.normal());
        break;
      case ParamKind::kNormGain: m.setOnes(); break;
      case ParamKind::kBias:
      case ParamKind::kNormBias: m.setZero(); break;
    }
  }
  return p;
}

/// (n x d) interleaved sinusoidal encoding: (pos, 2i) = sin(pos / 10000^(2i/d)),
/// (pos, 2i+1) = cos of the same angle.
template <class T = double>
MatrixRM<T> sinusoidal_positions(std::size_t n, std::size_t d) {
  if (d % 2 != 0) throw ShapeError("sinusoidal_positions: dimension must be even");
  MatrixRM<T> p(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d / 2; ++i) {
    const double inv = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
    for (std::size_t pos = 0; pos < n; ++pos) {
      const double ang = static_cast<double>(pos) * inv;
      p(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(2 * i)) = static_cast<T>(std::sin(ang));
      p(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(2 * i + 1)) = static_cast<T>(std::cos(ang));
    }
  }
  return p;
}

struct AttentionMaskSpec {
  std::size_t n_audio = 0;
  std::size_t n_text = 0;
  bool bidirectional_audio = false;
};

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// allowed(i, j): j <= i, or (bidirectional) both i and j are audio positions.
inline Mask build_mask(const AttentionMaskSpec& s) {
  const auto n = static_cast<Eigen::Index>(s.n_audio + s.n_text);
  const auto na = static_cast<Eigen::Index>(s.n_audio);
  Mask m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = j <= i || (s.bidirectional_audio && i < na && j < na);
  return m;
}

namespace nn {

inline constexpr double kLayerNormEps = 1e-5;

template <class T>
T gelu(T x) {
  return static_cast<T>(0.5) * x * (static_cast<T>(1) + std::erf(x * static_cast<T>(M_SQRT1_2)));
}

template <class T>
T gelu_grad(T x) {
  const T cdf = static_cast<T>(0.5) * (static_cast<T>(1) + std::erf(x * static_cast<T>(M_SQRT1_2)));
  const T pdf = std::exp(static_cast<T>(-0.5) * x * x) * static_cast<T>(0.5 * M_2_SQRTPI * M_SQRT1_2);
  return cdf + x * pdf;
}

template <class T>
struct LayerNormCache {
  MatrixRM<T> xhat;
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;
};

template <class T>
MatrixRM<T> layer_norm(const MatrixRM<T>& x, const MatrixRM<T>& gain, const MatrixRM<T>& bias,
                       LayerNormCache<T>* cache) {
  const Eigen::Index n = x.rows(), d = x.cols();
  MatrixRM<T> xhat(n, d);
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).mean();
    const T var = (x.row(i).array() - mean).square().mean();
    rstd[i] = static_cast<T>(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    xhat.row(i) = (x.row(i).array() - mean) * rstd[i];
  }
  MatrixRM<T> y = (xhat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
  if (cache) *cache = {std::move(xhat), std::move(rstd)};
  return y;
}

template <class T>
MatrixRM<T> layer_norm_backward(const MatrixRM<T>& dy, const MatrixRM<T>& gain, const LayerNormCache<T>& c,
                                MatrixRM<T>& dgain, MatrixRM<T>& dbias) {
  dgain.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  const MatrixRM<T> dxhat = dy.array().rowwise() * gain.row(0).array();
  MatrixRM<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const T m1 = dxhat.row(i).mean();
    const T m2 = (dxhat.row(i).array() * c.xhat.row(i).array()).mean();
    dx.row(i) = c.rstd[i] * (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2);
  }
  return dx;
}

template <class T>
void softmax_rows(MatrixRM<T>& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const T mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp();
    s.row(i) /= s.row(i).sum();
  }
}

}  // namespace nn

template <class T>
struct LayerCache {
  nn::LayerNormCache<T> ln1, ln2;
  MatrixRM<T> u, q, k, v, attn, x1, u2, pre, act;
  std::vector<MatrixRM<T>> probs;  // per head, n x n
};

/// Intermediate values retained by forward() for backward().
template <class T>
struct ForwardCache {
  std::size_t n_audio = 0;
  std::vector<TokenId> tokens;
  MatrixRM<T> audio;  // input features
  Mask mask;
  std::vector<LayerCache<T>> layers;
  MatrixRM<T> hidden;  // residual stream after the last block, all positions
  nn::LayerNormCache<T> lnf;
  MatrixRM<T> z_text, head_hidden;
};

/// Logits (n_text x vocab) for one utterance. `mask` overrides the mask the
/// configuration implies.
template <class T>
MatrixRM<T> forward(const ModelParams<T>& mp, const MelFeatures& audio, std::span<const TokenId> tokens,
                    ForwardCache<T>* cache = nullptr, const Mask* mask = nullptr) {
  const ModelConfig& cfg = mp.config;
  const ParamSet<T>& P = mp.tensors;
  const ModelSlots S(cfg);
  if (static_cast<std::size_t>(audio.cols()) != cfg.audio_width())
    throw ShapeError("forward: audio width " + std::to_string(audio.cols()) + " != " +
                     std::to_string(cfg.audio_width()));
  if (tokens.size() > cfg.max_text_tokens) throw ShapeError("forward: too many text tokens");
  for (TokenId t : tokens)
    if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab_size) throw ShapeError("forward: token id out of range");

  const auto na = audio.rows();
  const auto nt = static_cast<Eigen::Index>(tokens.size());
  const Eigen::Index n = na + nt;
  const auto d = static_cast<Eigen::Index>(cfg.model_dim);
  const auto dh = static_cast<Eigen::Index>(cfg.head_dim());
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

  ForwardCache<T> local;
  ForwardCache<T>& c = cache ? *cache : local;
  const bool keep = cache != nullptr;
  c.n_audio = static_cast<std::size_t>(na);
  c.tokens.assign(tokens.begin(), tokens.end());
  c.audio = audio.cast<T>();
  c.mask = mask ? *mask : build_mask({static_cast<std::size_t>(na), tokens.size(), cfg.bidirectional_audio});
  if (c.mask.rows() != n || c.mask.cols() != n) throw ShapeError("forward: mask shape mismatch");

  MatrixRM<T> x(n, d);
  if (na > 0) x.topRows(na) = (c.audio * P[S.audio_w]).rowwise() + P[S.audio_b].row(0);
  if (nt > 0) {
    MatrixRM<T> emb(nt, P[S.embed].cols());
    for (Eigen::Index i = 0; i < nt; ++i) emb.row(i) = P[S.embed].row(tokens[static_cast<std::size_t>(i)]);
    x.bottomRows(nt) = (emb * P[S.tok_w]).rowwise() + P[S.tok_b].row(0);
  }
  x += sinusoidal_positions<T>(static_cast<std::size_t>(n), cfg.model_dim);

  c.layers.assign(cfg.n_layers, {});
  const T neg_inf = -std::numeric_limits<T>::infinity();
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerSlots& L = S.layers[l];
    LayerCache<T>& lc = c.layers[l];
    lc.u = nn::layer_norm(x, P[L.ln1_g], P[L.ln1_b], &lc.ln1);
    lc.q = (lc.u * P[L.wq]).rowwise() + P[L.bq].row(0);
    lc.k = (lc.u * P[L.wk]).rowwise() + P[L.bk].row(0);
    lc.v = (lc.u * P[L.wv]).rowwise() + P[L.bv].row(0);
    lc.attn.resize(n, d);
    lc.probs.resize(cfg.n_heads);
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      const auto col = static_cast<Eigen::Index>(h) * dh;
      MatrixRM<T> s = (lc.q.middleCols(col, dh) * lc.k.middleCols(col, dh).transpose()) * scale;
      s = c.mask.select(s, neg_inf);
      nn::softmax_rows(s);
      lc.attn.middleCols(col, dh) = s * lc.v.middleCols(col, dh);
      lc.probs[h] = std::move(s);
    }
    lc.x1 = x + ((lc.attn * P[L.wo]).rowwise() + P[L.bo].row(0));
    lc.u2 = nn::layer_norm(lc.x1, P[L.ln2_g], P[L.ln2_b], &lc.ln2);
    lc.pre = (lc.u2 * P[L.w1]).rowwise() + P[L.b1].row(0);
    lc.act = lc.pre.unaryExpr([](T v) { return nn::gelu(v); });
    x = lc.x1 + ((lc.act * P[L.w2]).rowwise() + P[L.b2].row(0));
    if (!keep) lc = {};
  }
  c.hidden = x;
  const MatrixRM<T> xt = x.bottomRows(nt);
  c.z_text = nn::layer_norm(xt, P[S.lnf_g], P[S.lnf_b], &c.lnf);
  c.head_hidden = (c.z_text * P[S.proj_w]).rowwise() + P[S.proj_b].row(0);
  return (c.head_hidden * P[S.out_w]).rowwise() + P[S.out_b].row(0);
}

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logits).
template <class T>
void backward(const ModelParams<T>& mp, const ForwardCache<T>& c, const MatrixRM<T>& dlogits, ParamSet<T>& G) {
  const ModelConfig& cfg = mp.config;
  const ParamSet<T>& P = mp.tensors;
  const ModelSlots S(cfg);
  const auto na = static_cast<Eigen::Index>(c.n_audio);
  const auto nt = static_cast<Eigen::Index>(c.tokens.size());
  const Eigen::Index n = na + nt;
  const auto d = static_cast<Eigen::Index>(cfg.model_dim);
  const auto dh = static_cast<Eigen::Index>(cfg.head_dim());
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  if (dlogits.rows() != nt || dlogits.cols() != static_cast<Eigen::Index>(cfg.vocab_size))
    throw ShapeError("backward: dlogits shape mismatch");
  if (c.layers.size() != cfg.n_layers || (cfg.n_layers > 0 && c.layers[0].q.size() == 0))
    throw Error("backward: forward cache is incomplete");

  G[S.out_w].noalias() += c.head_hidden.transpose() * dlogits;
  G[S.out_b].row(0) += dlogits.colwise().sum();
  const MatrixRM<T> dhead = dlogits * P[S.out_w].transpose();
  G[S.proj_w].noalias() += c.z_text.transpose() * dhead;
  G[S.proj_b].row(0) += dhead.colwise().sum();
  const MatrixRM<T> dz = dhead * P[S.proj_w].transpose();

  MatrixRM<T> dx = MatrixRM<T>::Zero(n, d);
  if (nt > 0) dx.bottomRows(nt) = nn::layer_norm_backward(dz, P[S.lnf_g], c.lnf, G[S.lnf_g], G[S.lnf_b]);

  for (std::size_t li = cfg.n_layers; li-- > 0;) {
    const LayerSlots& L = S.layers[li];
    const LayerCache<T>& lc = c.layers[li];
    // feed-forward branch
    G[L.w2].noalias() += lc.act.transpose() * dx;
    G[L.b2].row(0) += dx.colwise().sum();
    MatrixRM<T> dpre = dx * P[L.w2].transpose();
    dpre.array() *= lc.pre.unaryExpr([](T v) { return nn::gelu_grad(v); }).array();
    G[L.w1].noalias() += lc.u2.transpose() * dpre;
    G[L.b1].row(0) += dpre.colwise().sum();
    const MatrixRM<T> du2 = dpre * P[L.w1].transpose();
    dx += nn::layer_norm_backward(du2, P[L.ln2_g], lc.ln2, G[L.ln2_g], G[L.ln2_b]);
    // attention branch
    G[L.wo].noalias() += lc.attn.transpose() * dx;
    G[L.bo].row(0) += dx.colwise().sum();
    const MatrixRM<T> dattn = dx * P[L.wo].transpose();
    MatrixRM<T> dq(n, d), dk(n, d), dv(n, d);
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      const auto col = static_cast<Eigen::Index>(h) * dh;
      const MatrixRM<T>& p = lc.probs[h];
      const auto dout = dattn.middleCols(col, dh);
      dv.middleCols(col, dh) = p.transpose() * dout;
      MatrixRM<T> dp = dout * lc.v.middleCols(col, dh).transpose();
      const Eigen::Matrix<T, Eigen::Dynamic, 1> rs = (dp.array() * p.array()).rowwise().sum();
      MatrixRM<T> ds = p.array() * (dp.array().colwise() - rs.array());
      ds *= scale;
      dq.middleCols(col, dh) = ds * lc.k.middleCols(col, dh);
      dk.middleCols(col, dh) = ds.transpose() * lc.q.middleCols(col, dh);
    }
    G[L.wq].noalias() += lc.u.transpose() * dq;
    G[L.bq].row(0) += dq.colwise().sum();
    G[L.wk].noalias() += lc.u.transpose() * dk;
    G[L.bk].row(0) += dk.colwise().sum();
    G[L.wv].noalias() += lc.u.transpose() * dv;
    G[L.bv].row(0) += dv.colwise().sum();
    MatrixRM<T> du = dq * P[L.wq].transpose();
    du.noalias() += dk * P[L.wk].transpose();
    du.noalias() += dv * P[L.wv].transpose();
    dx += nn::layer_norm_backward(du, P[L.ln1_g], lc.ln1, G[L.ln1_g], G[L.ln1_b]);
  }

  if (na > 0) {
    G[S.audio_w].noalias() += c.audio.transpose() * dx.topRows(na);
    G[S.audio_b].row(0) += dx.topRows(na).colwise().sum();
  }
  if (nt > 0) {
    const auto dxt = dx.bottomRows(nt);
    MatrixRM<T> emb(nt, P[S.embed].cols());
    for (Eigen::Index i = 0; i < nt; ++i) emb.row(i) = P[S.embed].row(c.tokens[static_cast<std::size_t>(i)]);
    G[S.tok_w].noalias() += emb.transpose() * dxt;
    G[S.tok_b].row(0) += dxt.colwise().sum();
    const MatrixRM<T> demb = dxt * P[S.tok_w].transpose();
    for (Eigen::Index i = 0; i < nt; ++i) G[S.embed].row(c.tokens[static_cast<std::size_t>(i)]) += demb.row(i);
  }
}

/// Greedy-decoding state. Audio positions never attend to text, so their
/// keys and values are computed once; each text step then processes a
/// single position against the cached keys and values.
template <class T>
class IncrementalDecoder {
 public:
  IncrementalDecoder(const ModelParams<T>& mp, const MelFeatures& audio) : mp_(mp), slots_(mp.config) {
    const ModelConfig& cfg = mp.config;
    if (static_cast<std::size_t>(audio.cols()) != cfg.audio_width()) throw ShapeError("decoder: audio width mismatch");
    keys_.resize(cfg.n_layers);
    values_.resize(cfg.n_layers);
    ForwardCache<T> c;
    forward(mp, audio, std::span<const TokenId>{}, &c);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      keys_[l] = c.layers[l].k;
      values_[l] = c.layers[l].v;
    }
    pos_ = static_cast<std::size_t>(audio.rows());
    n_audio_ = pos_;
  }

  std::size_t n_text() const { return pos_ - n_audio_; }

  /// Feeds one token and returns the logits predicting the next one.
  Eigen::Matrix<T, 1, Eigen::Dynamic> step(TokenId token) {
    const ModelConfig& cfg = mp_.config;
    const ParamSet<T>& P = mp_.tensors;
    const ModelSlots& S = slots_;
    if (token < 0 || static_cast<std::size_t>(token) >= cfg.vocab_size) throw ShapeError("decoder: token out of range");
    const auto d = static_cast<Eigen::Index>(cfg.model_dim);
    const auto dh = static_cast<Eigen::Index>(cfg.head_dim());
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    MatrixRM<T> x = (P[S.embed].row(token) * P[S.tok_w]) + P[S.tok_b];
    x += sinusoidal_positions<T>(pos_ + 1, cfg.model_dim).bottomRows(1);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      const LayerSlots& L = S.layers[l];
      const MatrixRM<T> u = nn::layer_norm<T>(x, P[L.ln1_g], P[L.ln1_b], nullptr);
      const MatrixRM<T> q = (u * P[L.wq]) + P[L.bq];
      append_row(keys_[l], (u * P[L.wk]) + P[L.bk]);
      append_row(values_[l], (u * P[L.wv]) + P[L.bv]);
      MatrixRM<T> attn(1, d);
      for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        const auto col = static_cast<Eigen::Index>(h) * dh;
        MatrixRM<T> s = (q.middleCols(col, dh) * keys_[l].middleCols(col, dh).transpose()) * scale;
        nn::softmax_rows(s);
        attn.middleCols(col, dh) = s * values_[l].middleCols(col, dh);
      }
      const MatrixRM<T> x1 = x + (attn * P[L.wo]) + P[L.bo];
      const MatrixRM<T> u2 = nn::layer_norm<T>(x1, P[L.ln2_g], P[L.ln2_b], nullptr);
      const MatrixRM<T> act = ((u2 * P[L.w1]) + P[L.b1]).unaryExpr([](T v) { return nn::gelu(v); });
      x = x1 + (act * P[L.w2]) + P[L.b2];
    }
    const MatrixRM<T> z = nn::layer_norm<T>(x, P[S.lnf_g], P[S.lnf_b], nullptr);
    const MatrixRM<T> hh = (z * P[S.proj_w]) + P[S.proj_b];
    ++pos_;
    return (hh * P[S.out_w]) + P[S.out_b];
  }

 private:
  static void append_row(MatrixRM<T>& m, const MatrixRM<T>& row) {
    m.conservativeResize(m.rows() + 1, Eigen::NoChange);
    m.row(m.rows() - 1) = row;
  }

  const ModelParams<T>& mp_;
  ModelSlots slots_;
  std::vector<MatrixRM<T>> keys_, values_;
  std::size_t pos_ = 0, n_audio_ = 0;
};

}  // namespace dota
