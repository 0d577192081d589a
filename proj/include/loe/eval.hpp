#ifndef LOE_EVAL_HPP_
#define LOE_EVAL_HPP_

// Harness-side metrics: alignment correctness against the oracle
// alignment, L1 weight differences up to the secret permutations,
// condition-cap sweeps, functional invariance of permuted weights, and a
// forward-agreement score between original and stolen models.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "loe/align.hpp"
#include "loe/extract.hpp"
#include "loe/permutation.hpp"
#include "loe/transformer.hpp"

namespace loe::eval {

struct AlignmentSideReport {
  std::string layer;
  std::string side; // "input" or "output"
  double correct_count = 0.0; // average correctly corresponded elements per vector
  int total = 0;              // vector length h
  double value_match_count = 0.0; // secondary count comparing values, not indices
  double mse = 0.0;           // vs oracle-aligned vectors

  double correct_rate() const { return total ? correct_count / total : 0.0; }
};

// Compare an aligned dataset against the oracle alignment derived from the
// true per-query permutations. true_perms[i] is the permutation the oracle
// applied to vector i; true_vectors[i] is the unshuffled trace vector.
inline AlignmentSideReport alignment_metrics(
    const align::AlignedDataset& ds,
    const std::vector<perm::Permutation>& true_perms,
    const std::vector<Eigen::VectorXd>& true_vectors) {
  const std::size_t n = ds.assignments.size();
  if (true_perms.size() != n || true_vectors.size() != n)
    throw std::invalid_argument("alignment_metrics: query count mismatch");
  const std::size_t h = static_cast<std::size_t>(ds.aligned.cols());
  const perm::Permutation ref_inv = true_perms[ds.reference_index].inverse();

  AlignmentSideReport rep;
  rep.total = static_cast<int>(h);
  double correct = 0.0, value_match = 0.0, sq = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == ds.reference_index) continue;
    // coordinate at reference position j is ref_inv(j); in vector i it
    // sits at position sigma_i(ref_inv(j)).
    const perm::Permutation truth = ref_inv.then(true_perms[i]);
    const Eigen::VectorXd oracle_aligned =
        perm::apply(true_perms[ds.reference_index], true_vectors[i]);
    const auto& pred = ds.assignments[i].a_to_b;
    for (std::size_t j = 0; j < h; ++j) {
      if (pred[j] == truth.sigma[j]) correct += 1.0;
      const double got = ds.aligned(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const double want = oracle_aligned[static_cast<Eigen::Index>(j)];
      if (got == want) value_match += 1.0;
      sq += (got - want) * (got - want);
    }
    counted += 1;
  }
  if (counted > 0) {
    rep.correct_count = correct / static_cast<double>(counted);
    rep.value_match_count = value_match / static_cast<double>(counted);
    rep.mse = sq / static_cast<double>(counted * h);
  }
  return rep;
}

// Mean/max absolute element difference between W_prime and the
// ground-truth permuted weight pi_in^- W pi_out.
inline Eigen::MatrixXd permuted_weight(const Eigen::MatrixXd& w,
                                       const perm::Permutation& pi_in,
                                       const perm::Permutation& pi_out) {
  return perm::apply_rows(pi_in, perm::apply_cols(pi_out, w));
}

struct L1Diff {
  double mean = 0.0;
  double max = 0.0;
};

inline L1Diff weight_l1(const Eigen::MatrixXd& w_prime, const Eigen::MatrixXd& w,
                        const perm::Permutation& pi_in, const perm::Permutation& pi_out) {
  const Eigen::MatrixXd target = permuted_weight(w, pi_in, pi_out);
  if (target.rows() != w_prime.rows() || target.cols() != w_prime.cols())
    throw std::invalid_argument("weight_l1: shape mismatch");
  const Eigen::MatrixXd diff = (w_prime - target).cwiseAbs();
  return {diff.mean(), diff.maxCoeff()};
}

struct WeightLayerReport {
  std::string layer;
  bool recoverable = true;
  double l1_mean = 0.0;
  double l1_max = 0.0;
  int retained_rank = 0;
  double condition_number = 0.0;
};

struct SweepPoint {
  double condition_cap = 0.0;
  double l1_mean = 0.0;
};

struct SweepReport {
  std::string layer;
  std::vector<SweepPoint> points; // condition caps strictly increasing
};

inline SweepReport condition_sweep(const extract::AlignedSystem& sys,
                                   const Eigen::MatrixXd& target_weight,
                                   const std::vector<double>& c_list) {
  SweepReport rep;
  rep.layer = sys.layer;
  double prev = 0.0;
  for (double c : c_list) {
    if (c <= prev)
      throw std::invalid_argument("condition_sweep: C values must be strictly increasing");
    prev = c;
    extract::PinvConfig cfg;
    cfg.condition_cap = c;
    extract::ExtractedWeights w = extract::solve_weights(sys, cfg);
    rep.points.push_back({c, (w.w_prime - target_weight).cwiseAbs().mean()});
  }
  return rep;
}

// ---- functionally equivalent permuted models ----

// A consistent set of permutations under which the decoder computes the
// same function: one shared residual-stream permutation, per-layer
// per-head permutations for Q/K (shared, so q.k inner products survive)
// and for V (mirrored in W_o rows), and a per-layer mid-FFN permutation.
struct PermSet {
  perm::Permutation residual; // d_model
  struct Layer {
    std::vector<perm::Permutation> qk;  // per head, d_head
    std::vector<perm::Permutation> v;   // per head, d_head
    perm::Permutation ffn;              // d_ffn
  };
  std::vector<Layer> layers;
};

template <typename Rng>
PermSet random_perm_set(const tfm::ModelConfig& cfg, Rng& rng) {
  PermSet ps;
  ps.residual = perm::random_permutation(cfg.d_model, rng);
  for (int l = 0; l < cfg.num_layers; ++l) {
    PermSet::Layer lay;
    for (int h = 0; h < cfg.num_heads; ++h) {
      lay.qk.push_back(perm::random_permutation(cfg.d_head(), rng));
      lay.v.push_back(perm::random_permutation(cfg.d_head(), rng));
    }
    lay.ffn = perm::random_permutation(cfg.d_ffn, rng);
    ps.layers.push_back(std::move(lay));
  }
  return ps;
}

inline PermSet identity_perm_set(const tfm::ModelConfig& cfg) {
  PermSet ps;
  ps.residual = perm::Permutation::identity(cfg.d_model);
  for (int l = 0; l < cfg.num_layers; ++l) {
    PermSet::Layer lay;
    for (int h = 0; h < cfg.num_heads; ++h) {
      lay.qk.push_back(perm::Permutation::identity(cfg.d_head()));
      lay.v.push_back(perm::Permutation::identity(cfg.d_head()));
    }
    lay.ffn = perm::Permutation::identity(cfg.d_ffn);
    ps.layers.push_back(std::move(lay));
  }
  return ps;
}

inline void validate_perm_set(const tfm::ModelConfig& cfg, const PermSet& ps) {
  auto check = [](const perm::Permutation& p, std::size_t len, const char* what) {
    if (p.size() != len || !p.is_valid())
      throw std::invalid_argument(std::string("PermSet: inconsistent boundary permutation: ") + what);
  };
  check(ps.residual, cfg.d_model, "residual");
  if (ps.layers.size() != static_cast<std::size_t>(cfg.num_layers))
    throw std::invalid_argument("PermSet: layer count mismatch");
  for (const auto& l : ps.layers) {
    if (l.qk.size() != static_cast<std::size_t>(cfg.num_heads) ||
        l.v.size() != static_cast<std::size_t>(cfg.num_heads))
      throw std::invalid_argument("PermSet: head count mismatch");
    for (const auto& p : l.qk) check(p, cfg.d_head(), "qk head");
    for (const auto& p : l.v) check(p, cfg.d_head(), "v head");
    check(l.ffn, cfg.d_ffn, "ffn");
  }
}

// The structured permutation of the qkv output dimension implied by the
// per-head Q/K and V permutations.
inline perm::Permutation qkv_out_perm(const tfm::ModelConfig& cfg, const PermSet::Layer& l) {
  const int d = cfg.d_model;
  const int dh = cfg.d_head();
  std::vector<std::size_t> s(3 * d);
  for (int h = 0; h < cfg.num_heads; ++h)
    for (int j = 0; j < dh; ++j) {
      s[h * dh + j] = h * dh + l.qk[h].sigma[j];
      s[d + h * dh + j] = d + h * dh + l.qk[h].sigma[j];
      s[2 * d + h * dh + j] = 2 * d + h * dh + l.v[h].sigma[j];
    }
  return perm::Permutation(std::move(s));
}

inline perm::Permutation concat_head_perm(const tfm::ModelConfig& cfg, const PermSet::Layer& l) {
  const int dh = cfg.d_head();
  std::vector<std::size_t> s(cfg.d_model);
  for (int h = 0; h < cfg.num_heads; ++h)
    for (int j = 0; j < dh; ++j) s[h * dh + j] = h * dh + l.v[h].sigma[j];
  return perm::Permutation(std::move(s));
}

inline tfm::Model make_permuted_model(const tfm::Model& model, const PermSet& ps) {
  validate_perm_set(model.cfg, ps);
  tfm::Model out = model;
  out.embedding = perm::apply_cols(ps.residual, model.embedding);
  out.pos = perm::apply_cols(ps.residual, model.pos);
  out.lnf_gain = perm::apply(ps.residual, model.lnf_gain);
  out.lnf_bias = perm::apply(ps.residual, model.lnf_bias);
  for (int l = 0; l < model.cfg.num_layers; ++l) {
    const tfm::LayerWeights& w = model.layers[l];
    tfm::LayerWeights& pw = out.layers[l];
    const perm::Permutation qkv_out = qkv_out_perm(model.cfg, ps.layers[l]);
    const perm::Permutation concat = concat_head_perm(model.cfg, ps.layers[l]);
    pw.w_qkv = perm::apply_rows(ps.residual, perm::apply_cols(qkv_out, w.w_qkv));
    pw.w_o = perm::apply_rows(concat, perm::apply_cols(ps.residual, w.w_o));
    pw.w_h1 = perm::apply_rows(ps.residual, perm::apply_cols(ps.layers[l].ffn, w.w_h1));
    pw.w_h2 = perm::apply_rows(ps.layers[l].ffn, perm::apply_cols(ps.residual, w.w_h2));
    pw.ln1_gain = perm::apply(ps.residual, w.ln1_gain);
    pw.ln1_bias = perm::apply(ps.residual, w.ln1_bias);
    pw.ln2_gain = perm::apply(ps.residual, w.ln2_gain);
    pw.ln2_bias = perm::apply(ps.residual, w.ln2_bias);
  }
  return out;
}

// Max absolute logit gap between the original model and a permuted-weight
// model across prompts. The unembedding shares the permuted embedding, so
// the final logits come out in the original order and no un-permutation
// of the output is needed.
inline double functional_equivalence(const tfm::Model& model, const tfm::Model& permuted,
                                     const std::vector<std::vector<int>>& prompts) {
  if (permuted.cfg.d_model != model.cfg.d_model ||
      permuted.cfg.num_layers != model.cfg.num_layers)
    throw std::invalid_argument("functional_equivalence: model shape mismatch");
  double gap = 0.0;
  for (const auto& prompt : prompts) {
    const Eigen::VectorXd a = tfm::forward_plain(model, prompt).logits;
    const Eigen::VectorXd b = tfm::forward_plain(permuted, prompt).logits;
    gap = std::max(gap, (a - b).cwiseAbs().maxCoeff());
  }
  return gap;
}

struct Agreement {
  double top1_match_rate = 0.0;
  double mean_kl = 0.0;
};

// Greedy next-token agreement and mean KL(original || stolen) over prompts.
inline Agreement forward_agreement(const tfm::Model& original, const tfm::Model& stolen,
                                   const std::vector<std::vector<int>>& prompts) {
  if (original.cfg.vocab_size != stolen.cfg.vocab_size)
    throw std::invalid_argument("forward_agreement: vocab mismatch");
  Agreement agg;
  if (prompts.empty()) return agg;
  double kl_sum = 0.0;
  int matches = 0;
  for (const auto& prompt : prompts) {
    const Eigen::VectorXd ya = tfm::forward_plain(original, prompt).y;
    const Eigen::VectorXd yb = tfm::forward_plain(stolen, prompt).y;
    Eigen::Index ia, ib;
    ya.maxCoeff(&ia);
    yb.maxCoeff(&ib);
    if (ia == ib) matches += 1;
    double kl = 0.0;
    for (Eigen::Index i = 0; i < ya.size(); ++i) {
      const double p = std::max(ya[i], 1e-12);
      const double q = std::max(yb[i], 1e-12);
      kl += p * std::log(p / q);
    }
    kl_sum += kl;
  }
  agg.top1_match_rate = static_cast<double>(matches) / prompts.size();
  agg.mean_kl = kl_sum / prompts.size();
  return agg;
}

} // namespace loe::eval

#endif // LOE_EVAL_HPP_
