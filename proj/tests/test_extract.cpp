#include "doctest.h"

#include <random>

#include "loe/extract.hpp"
#include "loe/permutation.hpp"

using namespace loe;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = n(rng);
  return m;
}

} // namespace

TEST_CASE("condition_number known values") {
  CHECK(extract::condition_number(Eigen::MatrixXd::Identity(4, 4)) ==
        doctest::Approx(1.0).epsilon(1e-12));
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(3, 3);
  d(0, 0) = 10.0;
  d(1, 1) = 1.0;
  d(2, 2) = 0.1;
  CHECK(extract::condition_number(d) == doctest::Approx(100.0).epsilon(1e-9));

  Eigen::MatrixXd rank1(3, 3);
  rank1.setOnes();
  CHECK(std::isinf(extract::condition_number(rank1)));

  CHECK_THROWS_AS(extract::condition_number(Eigen::MatrixXd::Zero(2, 2)),
                  std::invalid_argument);
}

TEST_CASE("truncated_pinv matches the exact inverse when well conditioned") {
  const Eigen::MatrixXd x = gaussian(12, 6, 1);
  extract::PinvConfig cfg;
  const extract::TruncatedPinv p = extract::truncated_pinv(x, cfg);
  CHECK(p.retained_rank == 6);
  // Penrose identities
  CHECK(((x * p.pinv * x) - x).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(((p.pinv * x * p.pinv) - p.pinv).cwiseAbs().maxCoeff() < 1e-10);
  // left inverse on full column rank
  CHECK(((p.pinv * x) - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("truncated_pinv discards singular values below sigma_max / C") {
  // orthogonal columns scaled to sigma = {1, 1e-9}
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 2);
  x(0, 0) = 1.0;
  x(1, 1) = 1e-9;
  extract::PinvConfig cfg;
  cfg.condition_cap = 1e7;
  const extract::TruncatedPinv p = extract::truncated_pinv(x, cfg);
  CHECK(p.retained_rank == 1);
  CHECK(p.sigma_max == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.sigma_min_retained == doctest::Approx(1.0).epsilon(1e-12));
  // the discarded direction maps to zero instead of exploding
  CHECK(p.pinv.cwiseAbs().maxCoeff() < 2.0);

  cfg.condition_cap = 1e10;
  CHECK(extract::truncated_pinv(x, cfg).retained_rank == 2);
  cfg.condition_cap = 0.5;
  CHECK_THROWS_AS(extract::truncated_pinv(x, cfg), std::invalid_argument);
}

TEST_CASE("solve_weights recovers a random weight exactly in float") {
  const Eigen::MatrixXd x = gaussian(64, 16, 2);
  const Eigen::MatrixXd w = gaussian(16, 8, 3);
  extract::AlignedSystem sys;
  sys.x_in = x;
  sys.x_out = x * w;
  sys.layer = "t";
  const extract::ExtractedWeights got = extract::solve_weights(sys, {});
  CHECK_FALSE(got.rank_deficient);
  CHECK(got.retained_rank == 16);
  CHECK((got.w_prime - w).cwiseAbs().mean() < 1e-10);
}

TEST_CASE("solve_weights under a common shuffle returns the permuted weight") {
  std::mt19937_64 rng(7);
  const Eigen::MatrixXd x = gaussian(48, 12, 4);
  const Eigen::MatrixXd w = gaussian(12, 10, 5);
  const auto pi_in = perm::random_permutation(12, rng);
  const auto pi_out = perm::random_permutation(10, rng);
  extract::AlignedSystem sys;
  sys.x_in = perm::apply_cols(pi_in, x);
  sys.x_out = perm::apply_cols(pi_out, x * w);
  const extract::ExtractedWeights got = extract::solve_weights(sys, {});
  const Eigen::MatrixXd target = perm::apply_rows(pi_in, perm::apply_cols(pi_out, w));
  CHECK((got.w_prime - target).cwiseAbs().mean() < 1e-10);
}

TEST_CASE("solve_weights input validation and rank deficiency") {
  extract::AlignedSystem sys;
  sys.x_in = gaussian(4, 8, 1);
  sys.x_out = gaussian(4, 2, 2);
  CHECK_THROWS_AS(extract::solve_weights(sys, {}), std::invalid_argument); // n < h_in
  sys.x_in = gaussian(8, 4, 1);
  sys.x_out = gaussian(6, 2, 2);
  CHECK_THROWS_AS(extract::solve_weights(sys, {}), std::invalid_argument); // row mismatch

  // rank-1 inputs with n >= h flag deficiency
  Eigen::MatrixXd low = Eigen::MatrixXd::Ones(8, 4);
  sys.x_in = low;
  sys.x_out = Eigen::MatrixXd::Ones(8, 2);
  const extract::ExtractedWeights got = extract::solve_weights(sys, {});
  CHECK(got.rank_deficient);
  CHECK(got.retained_rank == 1);
}

TEST_CASE("build_qk_system scalar and 2x2 hand cases") {
  Eigen::VectorXd x1(1), s1(1);
  x1 << 2.0;
  s1 << 5.0;
  Eigen::MatrixXd xp1(1, 1);
  xp1 << 3.0;
  auto [rows1, rhs1] = extract::build_qk_system(x1, xp1, s1);
  CHECK(rows1(0, 0) == 6.0);
  CHECK(rhs1[0] == 5.0);

  Eigen::VectorXd x(2);
  x << 2.0, -1.0;
  Eigen::MatrixXd xp(1, 2);
  xp << 3.0, 4.0;
  Eigen::VectorXd s(1);
  s << 0.0;
  auto [rows, rhs] = extract::build_qk_system(x, xp, s);
  // row layout is x[u] * x_pre[v] at column u*d + v
  Eigen::RowVectorXd want(4);
  want << 6.0, 8.0, -3.0, -4.0;
  CHECK(rows.row(0) == want);

  Eigen::VectorXd bad(3);
  bad.setZero();
  CHECK_THROWS_AS(extract::build_qk_system(bad, xp, s), std::invalid_argument);
}

TEST_CASE("unvec_qk inverts the row-major vectorization") {
  Eigen::VectorXd v(4);
  v << 1, 2, 3, 4;
  const Eigen::MatrixXd m = extract::unvec_qk(v, 2);
  CHECK(m(0, 0) == 1);
  CHECK(m(0, 1) == 2);
  CHECK(m(1, 0) == 3);
  CHECK(m(1, 1) == 4);
  CHECK_THROWS_AS(extract::unvec_qk(v, 3), std::invalid_argument);
}

TEST_CASE("solve_qk recovers a synthetic bilinear form") {
  const int d = 3, T = 4, n = 5;
  const Eigen::MatrixXd w = gaussian(d, d, 11);
  std::vector<Eigen::VectorXd> xs;
  std::vector<Eigen::MatrixXd> xps;
  std::vector<Eigen::VectorXd> ss;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd xp = gaussian(T, d, 100 + i);
    Eigen::VectorXd x = gaussian(d, 1, 200 + i).col(0);
    xs.push_back(x);
    ss.push_back(xp * w.transpose() * x); // s[t] = x . W . x_pre[t]
    xps.push_back(std::move(xp));
  }
  const Eigen::MatrixXd got = extract::solve_qk(xs, xps, ss, {});
  CHECK((got - w).cwiseAbs().mean() < 1e-9);

  // too few equations
  std::vector<Eigen::VectorXd> one_x{xs[0]};
  std::vector<Eigen::MatrixXd> one_xp{xps[0]};
  std::vector<Eigen::VectorXd> one_s{ss[0]};
  CHECK_THROWS_AS(extract::solve_qk(one_x, one_xp, one_s, {}), std::invalid_argument);
}

TEST_CASE("solve_vo recovers stacked per-head value-output products") {
  const int H = 2, d = 4, T = 3, n = 24;
  const Eigen::MatrixXd w_vo = gaussian(H * d, d, 21); // block h rows [h*d, d)
  std::vector<extract::VoRecord> recs;
  for (int i = 0; i < n; ++i) {
    extract::VoRecord r;
    r.x_pre = gaussian(T, d, 300 + i);
    Eigen::VectorXd o = Eigen::VectorXd::Zero(d);
    for (int h = 0; h < H; ++h) {
      Eigen::VectorXd p = gaussian(T, 1, 400 + i * H + h).col(0).cwiseAbs();
      p /= p.sum();
      r.p.push_back(p);
      o += w_vo.middleRows(h * d, d).transpose() * (r.x_pre.transpose() * p);
    }
    r.o = o;
    recs.push_back(std::move(r));
  }
  const extract::EquivalentAttnWeights got = extract::solve_vo(recs, {});
  CHECK(got.retained_rank == H * d);
  CHECK((got.w_vo - w_vo).cwiseAbs().mean() < 1e-9);

  recs.resize(H * d - 1);
  CHECK_THROWS_AS(extract::solve_vo(recs, {}), std::invalid_argument);
  CHECK_THROWS_AS(extract::solve_vo({}, {}), std::invalid_argument);
}
