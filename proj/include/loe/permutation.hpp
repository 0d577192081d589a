#ifndef LOE_PERMUTATION_HPP_
#define LOE_PERMUTATION_HPP_

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace loe::perm {

// Bijection on {0..h-1}. sigma[i] is the destination of element i, so
// applying the permutation gives out[sigma[i]] = x[i], i.e. (x pi)[j] =
// x[sigma^-1(j)] in the right-multiplication convention.
struct Permutation {
  std::vector<std::size_t> sigma;

  Permutation() = default;
  explicit Permutation(std::vector<std::size_t> s) : sigma(std::move(s)) {}

  static Permutation identity(std::size_t h) {
    std::vector<std::size_t> s(h);
    std::iota(s.begin(), s.end(), 0);
    return Permutation(std::move(s));
  }

  std::size_t size() const { return sigma.size(); }

  bool is_valid() const {
    std::vector<std::size_t> s = sigma;
    std::sort(s.begin(), s.end());
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] != i) return false;
    return true;
  }

  Permutation inverse() const {
    std::vector<std::size_t> inv(sigma.size());
    for (std::size_t i = 0; i < sigma.size(); ++i) inv[sigma[i]] = i;
    return Permutation(std::move(inv));
  }

  // this followed by other: element i lands at other.sigma[this->sigma[i]].
  Permutation then(const Permutation& other) const {
    if (size() != other.size())
      throw std::invalid_argument("permutation compose: size mismatch");
    std::vector<std::size_t> s(sigma.size());
    for (std::size_t i = 0; i < sigma.size(); ++i) s[i] = other.sigma[sigma[i]];
    return Permutation(std::move(s));
  }
};

template <typename Derived>
Eigen::VectorXd apply(const Permutation& p, const Eigen::MatrixBase<Derived>& x) {
  if (static_cast<std::size_t>(x.size()) != p.size())
    throw std::invalid_argument("permutation apply: length mismatch");
  Eigen::VectorXd out(x.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[p.sigma[i]] = x[i];
  return out;
}

// Shuffle matrix columns: out column sigma[c] = in column c.
inline Eigen::MatrixXd apply_cols(const Permutation& p, const Eigen::MatrixXd& m) {
  if (static_cast<std::size_t>(m.cols()) != p.size())
    throw std::invalid_argument("permutation apply_cols: width mismatch");
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t c = 0; c < p.size(); ++c) out.col(p.sigma[c]) = m.col(c);
  return out;
}

// Shuffle matrix rows: out row sigma[r] = in row r.
inline Eigen::MatrixXd apply_rows(const Permutation& p, const Eigen::MatrixXd& m) {
  if (static_cast<std::size_t>(m.rows()) != p.size())
    throw std::invalid_argument("permutation apply_rows: height mismatch");
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t r = 0; r < p.size(); ++r) out.row(p.sigma[r]) = m.row(r);
  return out;
}

template <typename UniformRng>
Permutation random_permutation(std::size_t h, UniformRng& rng) {
  if (h < 1) throw std::invalid_argument("random_permutation: h must be >= 1");
  std::vector<std::size_t> s(h);
  std::iota(s.begin(), s.end(), 0);
  // Fisher-Yates
  for (std::size_t i = h - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> d(0, i);
    std::swap(s[i], s[d(rng)]);
  }
  return Permutation(std::move(s));
}

} // namespace loe::perm

#endif // LOE_PERMUTATION_HPP_
