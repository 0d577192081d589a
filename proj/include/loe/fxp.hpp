#ifndef LOE_FXP_HPP_
#define LOE_FXP_HPP_

// Fixed-point ring arithmetic as seen by one logical party of an MPC
// engine: encode/decode between doubles and Z_{2^l}, and multiplication
// followed by truncation with a configurable 1-ulp error model.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace loe::fxp {

enum class ErrorMode {
  kProbabilistic,      // truncation adds e in {0,1}, P(e=1) = discarded fraction
  kDeterministicFloor, // plain floor shift, e = 0
  kNone,               // round-to-nearest truncation (exact up to 2^-p-1)
};

inline const char* to_string(ErrorMode m) {
  switch (m) {
    case ErrorMode::kProbabilistic: return "probabilistic";
    case ErrorMode::kDeterministicFloor: return "deterministic-floor";
    case ErrorMode::kNone: return "none";
  }
  return "?";
}

inline ErrorMode error_mode_from_string(const std::string& s) {
  if (s == "probabilistic") return ErrorMode::kProbabilistic;
  if (s == "deterministic-floor") return ErrorMode::kDeterministicFloor;
  if (s == "none") return ErrorMode::kNone;
  throw std::invalid_argument("unknown error_mode: " + s);
}

struct FxpConfig {
  int ring_bits = 64;      // l, ring modulus 2^l
  int precision_bits = 18; // p, fractional scale 2^p
  ErrorMode error_mode = ErrorMode::kProbabilistic;

  void validate() const {
    if (!(1 <= precision_bits && precision_bits < ring_bits && ring_bits <= 64))
      throw std::invalid_argument("FxpConfig requires 1 <= p < l <= 64");
  }

  // Mask selecting the low l bits (all ones for l == 64).
  std::uint64_t ring_mask() const {
    return ring_bits == 64 ? ~std::uint64_t{0}
                           : ((std::uint64_t{1} << ring_bits) - 1);
  }
  double scale() const { return std::ldexp(1.0, precision_bits); }
  // Largest representable magnitude, 2^(l-p-1).
  double range() const { return std::ldexp(1.0, ring_bits - precision_bits - 1); }
};

using RingValue = std::uint64_t;
using Rng = std::mt19937_64;

// Two's-complement interpretation of a ring value.
inline std::int64_t signed_interpretation(RingValue x, const FxpConfig& cfg) {
  const std::uint64_t m = cfg.ring_mask();
  x &= m;
  if (cfg.ring_bits == 64) return static_cast<std::int64_t>(x);
  const std::uint64_t sign_bit = std::uint64_t{1} << (cfg.ring_bits - 1);
  if (x & sign_bit) return static_cast<std::int64_t>(x) - static_cast<std::int64_t>(m + 1);
  return static_cast<std::int64_t>(x);
}

inline RingValue to_ring(std::int64_t v, const FxpConfig& cfg) {
  return static_cast<RingValue>(v) & cfg.ring_mask();
}

// encode: x -> floor(x * 2^p) rounded half away from zero, reduced mod 2^l.
inline RingValue encode(double x_f, const FxpConfig& cfg) {
  if (!(std::fabs(x_f) < cfg.range()))
    throw std::range_error("fxp encode: value out of range");
  const double scaled = x_f * cfg.scale();
  const double rounded = scaled >= 0 ? std::floor(scaled + 0.5) : std::ceil(scaled - 0.5);
  return to_ring(static_cast<std::int64_t>(rounded), cfg);
}

// Stochastic variant: floor plus a Bernoulli(frac) unit, so the expected
// encoding is exact. Mirrors a probabilistic truncation applied to the
// re-shared result of a plaintext nonlinear layer.
inline RingValue encode_stochastic(double x_f, const FxpConfig& cfg, Rng& rng) {
  if (!(std::fabs(x_f) < cfg.range()))
    throw std::range_error("fxp encode: value out of range");
  const double scaled = x_f * cfg.scale();
  const double lo = std::floor(scaled);
  const double frac = scaled - lo;
  std::int64_t v = static_cast<std::int64_t>(lo);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < frac) v += 1;
  return to_ring(v, cfg);
}

inline double decode(RingValue x, const FxpConfig& cfg) {
  return static_cast<double>(signed_interpretation(x, cfg)) / cfg.scale();
}

namespace detail {

// Truncate a signed 2p-scaled product down to scale 2^p per the error mode.
inline std::int64_t truncate_product(__int128 prod, const FxpConfig& cfg, Rng* rng) {
  const int p = cfg.precision_bits;
  const __int128 one = __int128{1} << p;
  __int128 shifted = prod >> p; // arithmetic shift == floor division
  const std::uint64_t frac = static_cast<std::uint64_t>(prod - (shifted << p));
  switch (cfg.error_mode) {
    case ErrorMode::kDeterministicFloor:
      break;
    case ErrorMode::kNone:
      if (frac * 2 >= (std::uint64_t{1} << p)) shifted += 1;
      break;
    case ErrorMode::kProbabilistic: {
      if (rng == nullptr)
        throw std::invalid_argument("probabilistic truncation needs an rng");
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const double pr = static_cast<double>(frac) / static_cast<double>(one);
      if (u(*rng) < pr) shifted += 1;
      break;
    }
  }
  return static_cast<std::int64_t>(shifted);
}

} // namespace detail

// Multiply two p-scaled ring values and rescale back to p bits.
inline RingValue mul_trunc(RingValue a, RingValue b, const FxpConfig& cfg,
                           Rng* rng = nullptr) {
  const __int128 prod = static_cast<__int128>(signed_interpretation(a, cfg)) *
                        static_cast<__int128>(signed_interpretation(b, cfg));
  return to_ring(detail::truncate_product(prod, cfg, rng), cfg);
}

// Dense ring tensor, row-major.
struct RingTensor {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<RingValue> data;

  RingTensor() = default;
  RingTensor(Eigen::Index r, Eigen::Index c) : rows(r), cols(c), data(r * c, 0) {}

  RingValue& operator()(Eigen::Index r, Eigen::Index c) { return data[r * cols + c]; }
  RingValue operator()(Eigen::Index r, Eigen::Index c) const { return data[r * cols + c]; }
};

inline RingTensor encode_tensor(const Eigen::MatrixXd& m, const FxpConfig& cfg) {
  RingTensor t(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t(r, c) = encode(m(r, c), cfg);
  return t;
}

inline RingTensor encode_tensor_stochastic(const Eigen::MatrixXd& m,
                                           const FxpConfig& cfg, Rng& rng) {
  RingTensor t(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t(r, c) = encode_stochastic(m(r, c), cfg, rng);
  return t;
}

inline Eigen::MatrixXd decode_tensor(const RingTensor& t, const FxpConfig& cfg) {
  Eigen::MatrixXd m(t.rows, t.cols);
  for (Eigen::Index r = 0; r < t.rows; ++r)
    for (Eigen::Index c = 0; c < t.cols; ++c) m(r, c) = decode(t(r, c), cfg);
  return m;
}

inline RingTensor add(const RingTensor& a, const RingTensor& b, const FxpConfig& cfg) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw std::invalid_argument("ring add: shape mismatch");
  RingTensor out(a.rows, a.cols);
  for (size_t i = 0; i < a.data.size(); ++i)
    out.data[i] = (a.data[i] + b.data[i]) & cfg.ring_mask();
  return out;
}

// X (n x k) times W (k x m): each scalar product accumulates at scale 2^2p
// and a single truncation is applied per output element.
inline RingTensor linear_fxp(const RingTensor& X, const RingTensor& W,
                             const FxpConfig& cfg, Rng* rng = nullptr) {
  if (X.cols != W.rows) throw std::invalid_argument("linear_fxp: inner dims mismatch");
  RingTensor out(X.rows, W.cols);
  for (Eigen::Index i = 0; i < X.rows; ++i) {
    for (Eigen::Index j = 0; j < W.cols; ++j) {
      __int128 acc = 0;
      for (Eigen::Index k = 0; k < X.cols; ++k) {
        acc += static_cast<__int128>(signed_interpretation(X(i, k), cfg)) *
               static_cast<__int128>(signed_interpretation(W(k, j), cfg));
      }
      out(i, j) = to_ring(detail::truncate_product(acc, cfg, rng), cfg);
    }
  }
  return out;
}

} // namespace loe::fxp

#endif // LOE_FXP_HPP_
