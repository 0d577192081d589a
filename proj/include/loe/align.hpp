#ifndef LOE_ALIGN_HPP_
#define LOE_ALIGN_HPP_

// Aligning differently shuffled but numerically close vectors: build the
// squared-distance cost matrix, solve the assignment problem (O(h^3)
// shortest-augmenting-path solver, or the O(h log h) sort path that is
// optimal for 1-D points), and re-express a set of vectors under one
// reference permutation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace loe::align {

enum class Solver { kHungarian, kSorted, kBoth };

inline Solver solver_from_string(const std::string& s) {
  if (s == "hungarian") return Solver::kHungarian;
  if (s == "sorted") return Solver::kSorted;
  if (s == "both") return Solver::kBoth;
  throw std::invalid_argument("unknown solver: " + s);
}

inline Eigen::MatrixXd cost_matrix(const Eigen::VectorXd& x_a, const Eigen::VectorXd& x_b) {
  if (x_a.size() != x_b.size())
    throw std::invalid_argument("cost_matrix: length mismatch");
  const Eigen::Index h = x_a.size();
  Eigen::MatrixXd d(h, h);
  for (Eigen::Index i = 0; i < h; ++i)
    for (Eigen::Index j = 0; j < h; ++j) {
      const double diff = x_a[i] - x_b[j];
      d(i, j) = diff * diff;
    }
  return d;
}

// a_to_b[i] = index in x_b matched to position i of x_a; equivalently
// M[a_to_b[i], i] = 1 for the permutation matrix of the objective.
struct Assignment {
  std::vector<std::size_t> a_to_b;
};

// Shortest augmenting path with potentials (Jonker-Volgenant style),
// minimizing sum of D[i, assignment(i)] over perfect matchings.
inline std::pair<Assignment, double> solve_assignment(const Eigen::MatrixXd& d) {
  if (d.rows() != d.cols()) throw std::invalid_argument("solve_assignment: not square");
  if (!d.allFinite()) throw std::invalid_argument("solve_assignment: non-finite entries");
  const int n = static_cast<int>(d.rows());
  const double kInf = std::numeric_limits<double>::infinity();

  // 1-based arrays; way[j] = previous column on the alternating path
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = match[j0];
      double delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = d(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }

  // match[j] = row assigned to column j; row i of D indexes x_a, column j
  // indexes x_b, so position i of x_a is matched to b-index column.
  Assignment a;
  a.a_to_b.resize(n);
  double cost = 0.0;
  for (int j = 1; j <= n; ++j) {
    const int i = match[j];
    a.a_to_b[i - 1] = static_cast<std::size_t>(j - 1);
    cost += d(i - 1, j - 1);
  }
  return {std::move(a), cost};
}

// Rank matching: optimal for squared distance between 1-D point sets.
inline Assignment solve_assignment_1d(const Eigen::VectorXd& x_a, const Eigen::VectorXd& x_b) {
  if (x_a.size() != x_b.size())
    throw std::invalid_argument("solve_assignment_1d: length mismatch");
  const std::size_t h = static_cast<std::size_t>(x_a.size());
  std::vector<std::size_t> order_a(h), order_b(h);
  std::iota(order_a.begin(), order_a.end(), 0);
  std::iota(order_b.begin(), order_b.end(), 0);
  std::stable_sort(order_a.begin(), order_a.end(),
                   [&](std::size_t l, std::size_t r) { return x_a[l] < x_a[r]; });
  std::stable_sort(order_b.begin(), order_b.end(),
                   [&](std::size_t l, std::size_t r) { return x_b[l] < x_b[r]; });
  Assignment a;
  a.a_to_b.resize(h);
  for (std::size_t r = 0; r < h; ++r) a.a_to_b[order_a[r]] = order_b[r];
  return a;
}

// || x_a - x_b * M ||_2 for the permutation represented by the assignment.
inline double alignment_objective(const Eigen::VectorXd& x_a, const Eigen::VectorXd& x_b,
                                  const Assignment& m) {
  if (x_a.size() != x_b.size() ||
      m.a_to_b.size() != static_cast<std::size_t>(x_a.size()))
    throw std::invalid_argument("alignment_objective: size mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x_a.size(); ++i) {
    const double diff = x_a[i] - x_b[m.a_to_b[i]];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

inline Eigen::VectorXd reexpress(const Eigen::VectorXd& x_b, const Assignment& m) {
  Eigen::VectorXd out(x_b.size());
  for (Eigen::Index i = 0; i < x_b.size(); ++i) out[i] = x_b[m.a_to_b[i]];
  return out;
}

struct AlignedDataset {
  std::size_t reference_index = 0;
  Eigen::MatrixXd aligned; // n x h, row i = vector i re-expressed under pi_k
  std::vector<Assignment> assignments; // identity for row k
};

inline Assignment solve(const Eigen::VectorXd& ref, const Eigen::VectorXd& other,
                        Solver solver) {
  switch (solver) {
    case Solver::kSorted:
      return solve_assignment_1d(ref, other);
    case Solver::kHungarian:
      return solve_assignment(cost_matrix(ref, other)).first;
    case Solver::kBoth: {
      Assignment fast = solve_assignment_1d(ref, other);
      auto [slow, cost] = solve_assignment(cost_matrix(ref, other));
      const double fast_cost = alignment_objective(ref, other, fast);
      if (fast_cost * fast_cost > cost + 1e-9 * (1.0 + cost))
        throw std::runtime_error("solver cross-check failed: sorted path suboptimal");
      return fast;
    }
  }
  throw std::invalid_argument("unknown solver");
}

inline AlignedDataset align_dataset(const std::vector<Eigen::VectorXd>& vectors,
                                    std::size_t k, Solver solver) {
  if (vectors.size() < 2) throw std::invalid_argument("align_dataset: need n >= 2");
  if (k >= vectors.size()) throw std::invalid_argument("align_dataset: bad reference index");
  const Eigen::Index h = vectors[0].size();
  for (const auto& v : vectors)
    if (v.size() != h) throw std::invalid_argument("align_dataset: ragged vectors");

  AlignedDataset out;
  out.reference_index = k;
  out.aligned.resize(static_cast<Eigen::Index>(vectors.size()), h);
  out.assignments.resize(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (i == k) {
      out.assignments[i].a_to_b.resize(h);
      std::iota(out.assignments[i].a_to_b.begin(), out.assignments[i].a_to_b.end(), 0);
      out.aligned.row(static_cast<Eigen::Index>(i)) = vectors[i].transpose();
    } else {
      out.assignments[i] = solve(vectors[k], vectors[i], solver);
      out.aligned.row(static_cast<Eigen::Index>(i)) =
          reexpress(vectors[i], out.assignments[i]).transpose();
    }
  }
  return out;
}

} // namespace loe::align

#endif // LOE_ALIGN_HPP_
