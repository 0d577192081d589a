#ifndef LOE_TRANSFORMER_HPP_
#define LOE_TRANSFORMER_HPP_

// Minimal pre-layernorm GPT-style decoder with a KV cache. The forward
// pass runs either in plain doubles or on the fixed-point ring, and
// records the input/output of every linear layer for the last position,
// plus the attention internals (prefix matrix, scores, probabilities).

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "loe/fxp.hpp"

namespace loe::tfm {

enum class Activation { kGelu, kRelu };

inline const char* to_string(Activation a) {
  return a == Activation::kGelu ? "gelu" : "relu";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "gelu") return Activation::kGelu;
  if (s == "relu") return Activation::kRelu;
  throw std::invalid_argument("unknown activation: " + s);
}

struct ModelConfig {
  int num_layers = 2;
  int d_model = 64;
  int num_heads = 4;
  int d_ffn = 256;
  int vocab_size = 64;
  int max_seq = 64;
  Activation activation = Activation::kGelu;

  int d_head() const { return d_model / num_heads; }

  void validate() const {
    if (num_layers < 1 || d_model < 1 || num_heads < 1 || d_ffn < 1 ||
        vocab_size < 1 || max_seq < 1)
      throw std::invalid_argument("ModelConfig: all dimensions must be >= 1");
    if (d_model % num_heads != 0)
      throw std::invalid_argument("ModelConfig: d_model must be divisible by num_heads");
  }
};

struct LayerWeights {
  Eigen::MatrixXd w_qkv; // d_model x 3*d_model
  Eigen::MatrixXd w_o;   // d_model x d_model
  Eigen::MatrixXd w_h1;  // d_model x d_ffn
  Eigen::MatrixXd w_h2;  // d_ffn x d_model
  Eigen::VectorXd ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

struct Model {
  ModelConfig cfg;
  Eigen::MatrixXd embedding; // vocab_size x d_model
  Eigen::MatrixXd pos;       // max_seq x d_model
  Eigen::VectorXd lnf_gain, lnf_bias;
  std::vector<LayerWeights> layers;
};

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols,
                                     std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng) * scale;
  return m;
}

inline Model init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  Model m;
  m.cfg = cfg;
  m.embedding = random_matrix(cfg.vocab_size, cfg.d_model, rng);
  m.pos = random_matrix(cfg.max_seq, cfg.d_model, rng) * 0.1;
  m.lnf_gain = Eigen::VectorXd::Ones(cfg.d_model);
  m.lnf_bias = Eigen::VectorXd::Zero(cfg.d_model);
  for (int l = 0; l < cfg.num_layers; ++l) {
    LayerWeights w;
    w.w_qkv = random_matrix(cfg.d_model, 3 * cfg.d_model, rng);
    w.w_o = random_matrix(cfg.d_model, cfg.d_model, rng);
    w.w_h1 = random_matrix(cfg.d_model, cfg.d_ffn, rng);
    w.w_h2 = random_matrix(cfg.d_ffn, cfg.d_model, rng);
    w.ln1_gain = Eigen::VectorXd::Ones(cfg.d_model);
    w.ln1_bias = Eigen::VectorXd::Zero(cfg.d_model);
    w.ln2_gain = Eigen::VectorXd::Ones(cfg.d_model);
    w.ln2_bias = Eigen::VectorXd::Zero(cfg.d_model);
    m.layers.push_back(std::move(w));
  }
  return m;
}

// ---- nonlinearities ----

inline Eigen::VectorXd layernorm(const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& gain,
                                 const Eigen::VectorXd& bias) {
  const double mean = x.mean();
  const Eigen::VectorXd centered = x.array() - mean;
  const double var = centered.squaredNorm() / static_cast<double>(x.size());
  const Eigen::VectorXd normed = centered / std::sqrt(var + 1e-12);
  return (normed.array() * gain.array() + bias.array()).matrix();
}

// tanh approximation, fixed constants
inline double gelu(double x) {
  constexpr double kC = 0.7978845608028654; // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(kC * (x + 0.044715 * x * x * x)));
}

inline Eigen::VectorXd act(const Eigen::VectorXd& x, Activation a) {
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    out[i] = a == Activation::kGelu ? gelu(x[i]) : std::max(0.0, x[i]);
  return out;
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& x) {
  const double mx = x.maxCoeff();
  Eigen::VectorXd e = (x.array() - mx).exp();
  return e / e.sum();
}

// softmax(q K^T / sqrt(d_k)) V for a single query row over the prefix.
inline Eigen::VectorXd attention(const Eigen::RowVectorXd& q,
                                 const Eigen::MatrixXd& k,
                                 const Eigen::MatrixXd& v, int d_k) {
  if (k.rows() == 0) throw std::invalid_argument("attention: empty prefix");
  const Eigen::VectorXd scores =
      (k * q.transpose()) / std::sqrt(static_cast<double>(d_k));
  const Eigen::VectorXd probs = softmax(scores);
  return v.transpose() * probs;
}

inline Eigen::VectorXd ffn(const Eigen::VectorXd& x, const Eigen::MatrixXd& w_h1,
                           const Eigen::MatrixXd& w_h2, Activation a) {
  if (x.size() != w_h1.rows() || w_h1.cols() != w_h2.rows())
    throw std::invalid_argument("ffn: shape mismatch");
  return w_h2.transpose() * act(w_h1.transpose() * x, a);
}

// ---- traces ----

struct LinearIO {
  Eigen::VectorXd input;
  Eigen::VectorXd output;
};

struct LayerTrace {
  LinearIO qkv, o, h1, h2;
  Eigen::MatrixXd x_pre;            // T x d_model, ln1 outputs (inputs to W_k/W_v)
  std::vector<Eigen::VectorXd> s;   // per head, pre-softmax scores, length T
  std::vector<Eigen::VectorXd> p;   // per head, softmax probabilities, length T
  std::vector<Eigen::MatrixXd> k;   // per head, T x d_head
  std::vector<Eigen::MatrixXd> v;   // per head, T x d_head
};

struct ActivationTrace {
  std::vector<LayerTrace> layers;
  Eigen::VectorXd logits;
  Eigen::VectorXd y;
};

// Names of the linear layers in attack order within one decoder layer.
inline const std::vector<std::string>& linear_names() {
  static const std::vector<std::string> names = {"qkv", "o", "h1", "h2"};
  return names;
}

inline const LinearIO& linear_io(const LayerTrace& t, const std::string& name) {
  if (name == "qkv") return t.qkv;
  if (name == "o") return t.o;
  if (name == "h1") return t.h1;
  if (name == "h2") return t.h2;
  throw std::invalid_argument("unknown linear layer: " + name);
}

inline std::pair<int, int> linear_dims(const ModelConfig& cfg, const std::string& name) {
  if (name == "qkv") return {cfg.d_model, 3 * cfg.d_model};
  if (name == "o") return {cfg.d_model, cfg.d_model};
  if (name == "h1") return {cfg.d_model, cfg.d_ffn};
  if (name == "h2") return {cfg.d_ffn, cfg.d_model};
  throw std::invalid_argument("unknown linear layer: " + name);
}

inline const Eigen::MatrixXd& linear_weight(const LayerWeights& w, const std::string& name) {
  if (name == "qkv") return w.w_qkv;
  if (name == "o") return w.w_o;
  if (name == "h1") return w.w_h1;
  if (name == "h2") return w.w_h2;
  throw std::invalid_argument("unknown linear layer: " + name);
}

// ---- plaintext forward ----

inline void check_tokens(const Model& model, const std::vector<int>& tokens) {
  if (tokens.empty()) throw std::invalid_argument("forward: empty token sequence");
  if (static_cast<int>(tokens.size()) > model.cfg.max_seq)
    throw std::invalid_argument("forward: sequence longer than max_seq");
  for (int t : tokens)
    if (t < 0 || t >= model.cfg.vocab_size)
      throw std::invalid_argument("forward: token id out of range");
}

inline ActivationTrace forward_plain(const Model& model, const std::vector<int>& tokens) {
  check_tokens(model, tokens);
  const ModelConfig& cfg = model.cfg;
  const int T = static_cast<int>(tokens.size());
  const int H = cfg.num_heads;
  const int dh = cfg.d_head();

  Eigen::MatrixXd x(T, cfg.d_model); // residual stream per position
  for (int t = 0; t < T; ++t)
    x.row(t) = model.embedding.row(tokens[t]) + model.pos.row(t);

  ActivationTrace trace;
  trace.layers.resize(cfg.num_layers);

  for (int l = 0; l < cfg.num_layers; ++l) {
    const LayerWeights& w = model.layers[l];
    LayerTrace& lt = trace.layers[l];

    // attention block
    Eigen::MatrixXd h(T, cfg.d_model);
    for (int t = 0; t < T; ++t)
      h.row(t) = layernorm(x.row(t).transpose(), w.ln1_gain, w.ln1_bias).transpose();
    Eigen::MatrixXd qkv = h * w.w_qkv; // T x 3*d_model

    lt.x_pre = h;
    lt.qkv.input = h.row(T - 1).transpose();
    lt.qkv.output = qkv.row(T - 1).transpose();

    lt.s.resize(H);
    lt.p.resize(H);
    lt.k.resize(H);
    lt.v.resize(H);
    Eigen::MatrixXd attn_out(T, cfg.d_model);
    for (int head = 0; head < H; ++head) {
      const Eigen::MatrixXd q = qkv.middleCols(head * dh, dh);
      const Eigen::MatrixXd k = qkv.middleCols(cfg.d_model + head * dh, dh);
      const Eigen::MatrixXd v = qkv.middleCols(2 * cfg.d_model + head * dh, dh);
      // causal: position t attends to 0..t (KV cache prefix)
      for (int t = 0; t < T; ++t) {
        const Eigen::VectorXd scores =
            (k.topRows(t + 1) * q.row(t).transpose()) / std::sqrt(static_cast<double>(dh));
        const Eigen::VectorXd probs = softmax(scores);
        attn_out.block(t, head * dh, 1, dh) =
            (v.topRows(t + 1).transpose() * probs).transpose();
        if (t == T - 1) {
          lt.s[head] = scores;
          lt.p[head] = probs;
        }
      }
      lt.k[head] = k;
      lt.v[head] = v;
    }
    Eigen::MatrixXd o = attn_out * w.w_o;
    lt.o.input = attn_out.row(T - 1).transpose();
    lt.o.output = o.row(T - 1).transpose();
    x += o;

    // FFN block
    Eigen::MatrixXd h2(T, cfg.d_model);
    for (int t = 0; t < T; ++t)
      h2.row(t) = layernorm(x.row(t).transpose(), w.ln2_gain, w.ln2_bias).transpose();
    Eigen::MatrixXd a1 = h2 * w.w_h1;
    lt.h1.input = h2.row(T - 1).transpose();
    lt.h1.output = a1.row(T - 1).transpose();
    Eigen::MatrixXd a2(T, cfg.d_ffn);
    for (int t = 0; t < T; ++t)
      a2.row(t) = act(a1.row(t).transpose(), cfg.activation).transpose();
    Eigen::MatrixXd f = a2 * w.w_h2;
    lt.h2.input = a2.row(T - 1).transpose();
    lt.h2.output = f.row(T - 1).transpose();
    x += f;
  }

  const Eigen::VectorXd final_h =
      layernorm(x.row(T - 1).transpose(), model.lnf_gain, model.lnf_bias);
  trace.logits = model.embedding * final_h;
  trace.y = softmax(trace.logits);
  return trace;
}

// ---- fixed-point forward ----

// Ring-encoded copy of the model weights, built once per campaign.
struct FxpModel {
  fxp::FxpConfig cfg;
  std::vector<fxp::RingTensor> w_qkv, w_o, w_h1, w_h2;
  fxp::RingTensor emb_t; // d_model x vocab_size (transposed unembedding)
};

inline FxpModel encode_model(const Model& model, const fxp::FxpConfig& cfg) {
  cfg.validate();
  FxpModel fm;
  fm.cfg = cfg;
  for (const LayerWeights& w : model.layers) {
    fm.w_qkv.push_back(fxp::encode_tensor(w.w_qkv, cfg));
    fm.w_o.push_back(fxp::encode_tensor(w.w_o, cfg));
    fm.w_h1.push_back(fxp::encode_tensor(w.w_h1, cfg));
    fm.w_h2.push_back(fxp::encode_tensor(w.w_h2, cfg));
  }
  fm.emb_t = fxp::encode_tensor(model.embedding.transpose(), cfg);
  return fm;
}

namespace detail {

// Re-encode the result of a plaintext nonlinear layer. In probabilistic
// mode this uses stochastic rounding, emulating the truncation the secure
// protocol applies when the result is re-shared; this is what makes
// repeated identical prompts produce epsilon-close, not identical, traces.
inline fxp::RingTensor reencode(const Eigen::MatrixXd& m, const fxp::FxpConfig& cfg,
                                fxp::Rng& rng) {
  if (cfg.error_mode == fxp::ErrorMode::kProbabilistic)
    return fxp::encode_tensor_stochastic(m, cfg, rng);
  return fxp::encode_tensor(m, cfg);
}

inline fxp::RingTensor row_of(const fxp::RingTensor& t, Eigen::Index r) {
  fxp::RingTensor out(1, t.cols);
  for (Eigen::Index c = 0; c < t.cols; ++c) out(0, c) = t(r, c);
  return out;
}

} // namespace detail

inline ActivationTrace forward_fxp(const Model& model, const FxpModel& fm,
                                   const std::vector<int>& tokens, fxp::Rng& rng) {
  check_tokens(model, tokens);
  const ModelConfig& cfg = model.cfg;
  const fxp::FxpConfig& fc = fm.cfg;
  const int T = static_cast<int>(tokens.size());
  const int H = cfg.num_heads;
  const int dh = cfg.d_head();
  fxp::Rng* prng = fc.error_mode == fxp::ErrorMode::kProbabilistic ? &rng : nullptr;

  Eigen::MatrixXd emb(T, cfg.d_model);
  for (int t = 0; t < T; ++t)
    emb.row(t) = model.embedding.row(tokens[t]) + model.pos.row(t);
  fxp::RingTensor x = fxp::encode_tensor(emb, fc); // T x d_model residual stream

  const fxp::RingValue inv_sqrt_dk = fxp::encode(1.0 / std::sqrt(static_cast<double>(dh)), fc);

  ActivationTrace trace;
  trace.layers.resize(cfg.num_layers);

  for (int l = 0; l < cfg.num_layers; ++l) {
    const LayerWeights& w = model.layers[l];
    LayerTrace& lt = trace.layers[l];

    // ln1 in plaintext on decoded values, re-encoded
    Eigen::MatrixXd x_f = fxp::decode_tensor(x, fc);
    Eigen::MatrixXd h_f(T, cfg.d_model);
    for (int t = 0; t < T; ++t)
      h_f.row(t) = layernorm(x_f.row(t).transpose(), w.ln1_gain, w.ln1_bias).transpose();
    fxp::RingTensor h = detail::reencode(h_f, fc, rng);
    Eigen::MatrixXd h_dec = fxp::decode_tensor(h, fc);

    fxp::RingTensor qkv = fxp::linear_fxp(h, fm.w_qkv[l], fc, prng);
    Eigen::MatrixXd qkv_dec = fxp::decode_tensor(qkv, fc);

    lt.x_pre = h_dec;
    lt.qkv.input = h_dec.row(T - 1).transpose();
    lt.qkv.output = qkv_dec.row(T - 1).transpose();

    lt.s.resize(H);
    lt.p.resize(H);
    lt.k.resize(H);
    lt.v.resize(H);
    fxp::RingTensor attn_out(T, cfg.d_model);
    for (int head = 0; head < H; ++head) {
      // per-head slices of qkv, kept on the ring
      fxp::RingTensor q(T, dh), k(T, dh), v(T, dh);
      for (int t = 0; t < T; ++t)
        for (int c = 0; c < dh; ++c) {
          q(t, c) = qkv(t, head * dh + c);
          k(t, c) = qkv(t, cfg.d_model + head * dh + c);
          v(t, c) = qkv(t, 2 * cfg.d_model + head * dh + c);
        }
      for (int t = 0; t < T; ++t) {
        // s = q_t K^T / sqrt(d_k), fixed-point
        fxp::RingTensor kt(dh, t + 1);
        for (int r = 0; r <= t; ++r)
          for (int c = 0; c < dh; ++c) kt(c, r) = k(r, c);
        fxp::RingTensor s_raw =
            fxp::linear_fxp(detail::row_of(q, t), kt, fc, prng);
        fxp::RingTensor s_ring(1, t + 1);
        for (int c = 0; c <= t; ++c)
          s_ring(0, c) = fxp::mul_trunc(s_raw(0, c), inv_sqrt_dk, fc, prng);
        // softmax in plaintext, re-encode
        Eigen::VectorXd s_dec = fxp::decode_tensor(s_ring, fc).row(0).transpose();
        Eigen::VectorXd p_f = softmax(s_dec);
        fxp::RingTensor p_ring = detail::reencode(p_f.transpose(), fc, rng);
        fxp::RingTensor vt(t + 1, dh);
        for (int r = 0; r <= t; ++r)
          for (int c = 0; c < dh; ++c) vt(r, c) = v(r, c);
        fxp::RingTensor head_out = fxp::linear_fxp(p_ring, vt, fc, prng);
        for (int c = 0; c < dh; ++c) attn_out(t, head * dh + c) = head_out(0, c);
        if (t == T - 1) {
          lt.s[head] = s_dec;
          lt.p[head] = fxp::decode_tensor(p_ring, fc).row(0).transpose();
        }
      }
      lt.k[head] = fxp::decode_tensor(k, fc);
      lt.v[head] = fxp::decode_tensor(v, fc);
    }
    fxp::RingTensor o = fxp::linear_fxp(attn_out, fm.w_o[l], fc, prng);
    lt.o.input = fxp::decode_tensor(attn_out, fc).row(T - 1).transpose();
    lt.o.output = fxp::decode_tensor(o, fc).row(T - 1).transpose();
    x = fxp::add(x, o, fc);

    // FFN block
    x_f = fxp::decode_tensor(x, fc);
    Eigen::MatrixXd h2_f(T, cfg.d_model);
    for (int t = 0; t < T; ++t)
      h2_f.row(t) = layernorm(x_f.row(t).transpose(), w.ln2_gain, w.ln2_bias).transpose();
    fxp::RingTensor h2 = detail::reencode(h2_f, fc, rng);
    fxp::RingTensor a1 = fxp::linear_fxp(h2, fm.w_h1[l], fc, prng);
    lt.h1.input = fxp::decode_tensor(h2, fc).row(T - 1).transpose();
    lt.h1.output = fxp::decode_tensor(a1, fc).row(T - 1).transpose();

    Eigen::MatrixXd a1_dec = fxp::decode_tensor(a1, fc);
    Eigen::MatrixXd a2_f(T, cfg.d_ffn);
    for (int t = 0; t < T; ++t)
      a2_f.row(t) = act(a1_dec.row(t).transpose(), cfg.activation).transpose();
    fxp::RingTensor a2 = detail::reencode(a2_f, fc, rng);
    fxp::RingTensor f = fxp::linear_fxp(a2, fm.w_h2[l], fc, prng);
    lt.h2.input = fxp::decode_tensor(a2, fc).row(T - 1).transpose();
    lt.h2.output = fxp::decode_tensor(f, fc).row(T - 1).transpose();
    x = fxp::add(x, f, fc);
  }

  Eigen::MatrixXd x_f = fxp::decode_tensor(x, fc);
  Eigen::VectorXd final_f =
      layernorm(x_f.row(T - 1).transpose(), model.lnf_gain, model.lnf_bias);
  fxp::RingTensor fh = detail::reencode(final_f.transpose(), fc, rng);
  fxp::RingTensor logits = fxp::linear_fxp(fh, fm.emb_t, fc, prng);
  trace.logits = fxp::decode_tensor(logits, fc).row(0).transpose();
  trace.y = softmax(trace.logits);
  return trace;
}

} // namespace loe::tfm

#endif // LOE_TRANSFORMER_HPP_
