#ifndef LOE_ORACLE_HPP_
#define LOE_ORACLE_HPP_

// The LOE inference interface O(S): each query runs the fixed-point
// forward and reveals every linear layer's input/output vectors under
// fresh secret permutations, with optional Gaussian noise and a
// private-layernorm mode that withholds the inputs of layers fed by a
// layernorm. Ground truth (permutations + unshuffled trace) is kept in a
// separate harness-only structure that attack code never receives.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "loe/fxp.hpp"
#include "loe/permutation.hpp"
#include "loe/transformer.hpp"

namespace loe::oracle {

struct OracleConfig {
  fxp::FxpConfig fxp;
  double noise_sigma = 0.0;      // std of Gaussian noise on revealed activations
  bool layernorm_private = false; // withhold inputs of layers following a layernorm
  std::uint64_t seed = 0;

  void validate() const {
    fxp.validate();
    if (noise_sigma < 0) throw std::invalid_argument("noise_sigma must be >= 0");
  }
};

struct RevealedLinear {
  std::optional<Eigen::VectorXd> input; // absent under layernorm_private
  Eigen::VectorXd output;
};

// Attention internals revealed for one decoder layer (last position).
// x_pre rows (prefix positions) are shuffled by the layer's prefix
// permutation rho, shared with the s/p row-wise shuffles across heads;
// x_pre columns follow the qkv input permutation.
struct RevealedAttention {
  Eigen::MatrixXd x_pre;
  std::vector<Eigen::VectorXd> s;
  std::vector<Eigen::VectorXd> p;
};

struct RevealedLayer {
  RevealedLinear qkv, o, h1, h2;
  RevealedAttention attn;
};

struct QueryRecord {
  std::uint64_t query_id = 0;
  std::vector<RevealedLayer> layers;
  Eigen::VectorXd y;

  const RevealedLinear& linear(int layer, const std::string& name) const {
    const RevealedLayer& l = layers.at(layer);
    if (name == "qkv") return l.qkv;
    if (name == "o") return l.o;
    if (name == "h1") return l.h1;
    if (name == "h2") return l.h2;
    throw std::invalid_argument("unknown linear layer: " + name);
  }
};

struct LayerPermutations {
  perm::Permutation qkv_in, qkv_out, o_in, o_out, h1_in, h1_out, h2_in, h2_out;
  perm::Permutation rho; // prefix-dimension shuffle shared by s/p/x_pre rows

  const perm::Permutation& in(const std::string& name) const {
    if (name == "qkv") return qkv_in;
    if (name == "o") return o_in;
    if (name == "h1") return h1_in;
    if (name == "h2") return h2_in;
    throw std::invalid_argument("unknown linear layer: " + name);
  }
  const perm::Permutation& out(const std::string& name) const {
    if (name == "qkv") return qkv_out;
    if (name == "o") return o_out;
    if (name == "h1") return h1_out;
    if (name == "h2") return h2_out;
    throw std::invalid_argument("unknown linear layer: " + name);
  }
};

// Harness-only. Attack modules accept QueryRecord only.
struct GroundTruth {
  std::uint64_t query_id = 0;
  std::vector<LayerPermutations> perms;
  tfm::ActivationTrace trace;
};

namespace detail {

inline Eigen::VectorXd reveal(const Eigen::VectorXd& x, const perm::Permutation& pi,
                              double noise_sigma, fxp::Rng& rng) {
  Eigen::VectorXd out = perm::apply(pi, x);
  if (noise_sigma > 0) {
    std::normal_distribution<double> n(0.0, noise_sigma);
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += n(rng);
  }
  return out;
}

} // namespace detail

inline std::pair<QueryRecord, GroundTruth> query(const tfm::Model& model,
                                                 const tfm::FxpModel& fm,
                                                 const std::vector<int>& prompt,
                                                 const OracleConfig& cfg,
                                                 std::uint64_t query_id,
                                                 fxp::Rng& rng) {
  cfg.validate();
  tfm::ActivationTrace trace = tfm::forward_fxp(model, fm, prompt, rng);
  const tfm::ModelConfig& mc = model.cfg;
  const std::size_t T = prompt.size();

  QueryRecord rec;
  GroundTruth truth;
  rec.query_id = truth.query_id = query_id;
  rec.y = trace.y;

  for (int l = 0; l < mc.num_layers; ++l) {
    const tfm::LayerTrace& lt = trace.layers[l];
    LayerPermutations lp;
    lp.qkv_in = perm::random_permutation(mc.d_model, rng);
    lp.qkv_out = perm::random_permutation(3 * mc.d_model, rng);
    lp.o_in = perm::random_permutation(mc.d_model, rng);
    lp.o_out = perm::random_permutation(mc.d_model, rng);
    lp.h1_in = perm::random_permutation(mc.d_model, rng);
    lp.h1_out = perm::random_permutation(mc.d_ffn, rng);
    lp.h2_in = perm::random_permutation(mc.d_ffn, rng);
    lp.h2_out = perm::random_permutation(mc.d_model, rng);
    lp.rho = perm::random_permutation(T, rng);

    RevealedLayer rl;
    // qkv and h1 inputs come straight out of a layernorm
    if (!cfg.layernorm_private)
      rl.qkv.input = detail::reveal(lt.qkv.input, lp.qkv_in, cfg.noise_sigma, rng);
    rl.qkv.output = detail::reveal(lt.qkv.output, lp.qkv_out, cfg.noise_sigma, rng);
    rl.o.input = detail::reveal(lt.o.input, lp.o_in, cfg.noise_sigma, rng);
    rl.o.output = detail::reveal(lt.o.output, lp.o_out, cfg.noise_sigma, rng);
    if (!cfg.layernorm_private)
      rl.h1.input = detail::reveal(lt.h1.input, lp.h1_in, cfg.noise_sigma, rng);
    rl.h1.output = detail::reveal(lt.h1.output, lp.h1_out, cfg.noise_sigma, rng);
    rl.h2.input = detail::reveal(lt.h2.input, lp.h2_in, cfg.noise_sigma, rng);
    rl.h2.output = detail::reveal(lt.h2.output, lp.h2_out, cfg.noise_sigma, rng);

    rl.attn.x_pre = perm::apply_rows(lp.rho, perm::apply_cols(lp.qkv_in, lt.x_pre));
    rl.attn.s.resize(mc.num_heads);
    rl.attn.p.resize(mc.num_heads);
    for (int h = 0; h < mc.num_heads; ++h) {
      rl.attn.s[h] = perm::apply(lp.rho, lt.s[h]);
      rl.attn.p[h] = perm::apply(lp.rho, lt.p[h]);
    }

    rec.layers.push_back(std::move(rl));
    truth.perms.push_back(std::move(lp));
  }
  truth.trace = std::move(trace);
  return {std::move(rec), std::move(truth)};
}

} // namespace loe::oracle

#endif // LOE_ORACLE_HPP_
