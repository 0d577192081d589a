#ifndef LOE_EXTRACT_HPP_
#define LOE_EXTRACT_HPP_

// Weight recovery from aligned activation matrices: condition-capped
// truncated-SVD pseudo-inverse, per-layer least squares, and the
// equivalent attention weight systems (Kronecker-lifted W_qk and the
// stacked W_vo).

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace loe::extract {

struct PinvConfig {
  double condition_cap = 1e7; // C: singular values below sigma_max/C are discarded

  void validate() const {
    if (!(condition_cap > 1.0))
      throw std::invalid_argument("condition_cap must be > 1");
  }
};

inline double condition_number(const Eigen::MatrixXd& x) {
  if (x.size() == 0 || x.isZero(0.0))
    throw std::invalid_argument("condition_number: zero matrix");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x);
  const Eigen::VectorXd& s = svd.singularValues();
  const double smax = s(0);
  const double smin = s(s.size() - 1);
  const double tol = smax * std::numeric_limits<double>::epsilon() *
                     static_cast<double>(std::max(x.rows(), x.cols()));
  if (smin <= tol) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

struct TruncatedPinv {
  Eigen::MatrixXd pinv;
  int retained_rank = 0;
  double sigma_max = 0.0;
  double sigma_min_retained = 0.0;
};

inline TruncatedPinv truncated_pinv(const Eigen::MatrixXd& x, const PinvConfig& cfg) {
  cfg.validate();
  if (x.size() == 0 || x.isZero(0.0))
    throw std::invalid_argument("truncated_pinv: zero matrix");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  TruncatedPinv out;
  out.sigma_max = s(0);
  const double cutoff = out.sigma_max / cfg.condition_cap;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) >= cutoff && s(i) > 0) {
      inv(i) = 1.0 / s(i);
      out.retained_rank += 1;
      out.sigma_min_retained = s(i);
    }
  }
  out.pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  return out;
}

struct AlignedSystem {
  Eigen::MatrixXd x_in;  // n x h_in
  Eigen::MatrixXd x_out; // n x h_out
  std::string layer;
};

struct ExtractedWeights {
  Eigen::MatrixXd w_prime; // h_in x h_out
  std::string layer;
  int retained_rank = 0;
  double sigma_max = 0.0;
  double sigma_min_retained = 0.0;
  bool rank_deficient = false;
};

inline ExtractedWeights solve_weights(const AlignedSystem& sys, const PinvConfig& cfg) {
  if (sys.x_in.rows() != sys.x_out.rows())
    throw std::invalid_argument("solve_weights: row count mismatch");
  if (sys.x_in.rows() < sys.x_in.cols())
    throw std::invalid_argument("solve_weights: need n >= h_in");
  TruncatedPinv p = truncated_pinv(sys.x_in, cfg);
  ExtractedWeights w;
  w.layer = sys.layer;
  w.w_prime = p.pinv * sys.x_out;
  w.retained_rank = p.retained_rank;
  w.sigma_max = p.sigma_max;
  w.sigma_min_retained = p.sigma_min_retained;
  w.rank_deficient = p.retained_rank < sys.x_in.cols();
  return w;
}

// ---- equivalent attention weights (privately computed activation products) ----

// One query's contribution to the per-head system s^h = x W_qk^h X_pre^T.
// vec(W_qk^h) is row-major over d_model x d_model entries; each prefix row
// t yields the equation kron(x, X_pre[t]) . vec(W_qk^h) = s^h[t].
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> build_qk_system(
    const Eigen::VectorXd& x, const Eigen::MatrixXd& x_pre, const Eigen::VectorXd& s_h) {
  if (x.size() != x_pre.cols())
    throw std::invalid_argument("build_qk_system: x / X_pre width mismatch");
  if (s_h.size() != x_pre.rows())
    throw std::invalid_argument("build_qk_system: s / X_pre height mismatch");
  const Eigen::Index d = x.size();
  const Eigen::Index t_rows = x_pre.rows();
  Eigen::MatrixXd rows(t_rows, d * d);
  for (Eigen::Index t = 0; t < t_rows; ++t)
    for (Eigen::Index u = 0; u < d; ++u)
      for (Eigen::Index v = 0; v < d; ++v)
        rows(t, u * d + v) = x[u] * x_pre(t, v);
  return {std::move(rows), s_h};
}

inline Eigen::MatrixXd unvec_qk(const Eigen::VectorXd& w, Eigen::Index d) {
  if (w.size() != d * d) throw std::invalid_argument("unvec_qk: bad length");
  Eigen::MatrixXd out(d, d);
  for (Eigen::Index u = 0; u < d; ++u)
    for (Eigen::Index v = 0; v < d; ++v) out(u, v) = w[u * d + v];
  return out;
}

// Solve vec(W_qk^h) from accumulated (x, X_pre, s^h) records.
inline Eigen::MatrixXd solve_qk(const std::vector<Eigen::VectorXd>& xs,
                                const std::vector<Eigen::MatrixXd>& x_pres,
                                const std::vector<Eigen::VectorXd>& s_hs,
                                const PinvConfig& cfg) {
  if (xs.empty() || xs.size() != x_pres.size() || xs.size() != s_hs.size())
    throw std::invalid_argument("solve_qk: inconsistent record lists");
  const Eigen::Index d = xs[0].size();
  Eigen::Index total = 0;
  for (const auto& xp : x_pres) total += xp.rows();
  if (total < d * d)
    throw std::invalid_argument("solve_qk: not enough equations for vec(W_qk)");
  Eigen::MatrixXd a(total, d * d);
  Eigen::VectorXd b(total);
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    auto [rows, rhs] = build_qk_system(xs[i], x_pres[i], s_hs[i]);
    a.middleRows(at, rows.rows()) = rows;
    b.segment(at, rhs.size()) = rhs;
    at += rows.rows();
  }
  TruncatedPinv p = truncated_pinv(a, cfg);
  return unvec_qk(p.pinv * b, d);
}

struct VoRecord {
  std::vector<Eigen::VectorXd> p; // softmax probabilities per head, length T
  Eigen::MatrixXd x_pre;          // T x d_model
  Eigen::VectorXd o;              // W_o output, length d_model
};

struct EquivalentAttnWeights {
  Eigen::MatrixXd w_vo; // (H * d_model) x d_model
  int retained_rank = 0;
  double sigma_max = 0.0;
};

// Stacked system [p^1 X_pre | ... | p^H X_pre] W_vo = o.
inline EquivalentAttnWeights solve_vo(const std::vector<VoRecord>& records,
                                      const PinvConfig& cfg) {
  if (records.empty()) throw std::invalid_argument("solve_vo: no records");
  const Eigen::Index heads = static_cast<Eigen::Index>(records[0].p.size());
  const Eigen::Index d = records[0].x_pre.cols();
  const Eigen::Index n = static_cast<Eigen::Index>(records.size());
  if (n < heads * d)
    throw std::invalid_argument("solve_vo: need at least H*d_model records");
  Eigen::MatrixXd a(n, heads * d);
  Eigen::MatrixXd b(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const VoRecord& r = records[i];
    if (static_cast<Eigen::Index>(r.p.size()) != heads || r.x_pre.cols() != d)
      throw std::invalid_argument("solve_vo: inconsistent record shapes");
    for (Eigen::Index h = 0; h < heads; ++h)
      a.block(i, h * d, 1, d) = (r.p[h].transpose() * r.x_pre);
    b.row(i) = r.o.transpose();
  }
  TruncatedPinv p = truncated_pinv(a, cfg);
  EquivalentAttnWeights out;
  out.w_vo = p.pinv * b;
  out.retained_rank = p.retained_rank;
  out.sigma_max = p.sigma_max;
  return out;
}

} // namespace loe::extract

#endif // LOE_EXTRACT_HPP_
