#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <vector>

#include "sc/distance.hpp"
#include "sc/error.hpp"
#include "synthetic.hpp"

using sc::AlignedDistance;
using sc::AligningKey;
using sc::CoordKind;
using sc::DescriptorParams;
using sc::ScanContextDescriptor;
using sc::SemiMetricPose;

namespace {

// Contract re-implementations on a separate floating-point path (.norm()
// instead of the library's dot-based kernel, explicit shifted copies).
double oracle_distance(const Eigen::MatrixXd& q, const Eigen::MatrixXd& m) {
  int valid = 0;
  double sum = 0.0;
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    const double nq = q.col(j).norm();
    const double nm = m.col(j).norm();
    if (nq == 0.0 || nm == 0.0) continue;
    const double cosine = q.col(j).dot(m.col(j)) / (nq * nm);
    sum += std::clamp(1.0 - cosine, 0.0, 1.0);
    ++valid;
  }
  return valid > 0 ? sum / valid : 1.0;
}

Eigen::MatrixXd oracle_shift(const Eigen::MatrixXd& m, int n) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  const auto cols = static_cast<int>(m.cols());
  for (int j = 0; j < cols; ++j) out.col((j + n) % cols) = m.col(j);
  return out;
}

AlignedDistance oracle_brute(const Eigen::MatrixXd& q, const Eigen::MatrixXd& m) {
  AlignedDistance best;
  for (int n = 0; n < static_cast<int>(q.cols()); ++n) {
    const double d = oracle_distance(oracle_shift(q, n), m);
    if (n == 0 || d < best.distance) {
      best.distance = d;
      best.shift = n;
    }
  }
  return best;
}

int oracle_align_keys(const Eigen::VectorXd& q, const Eigen::VectorXd& m) {
  int best_n = 0;
  double best = std::numeric_limits<double>::infinity();
  const auto size = static_cast<int>(q.size());
  for (int n = 0; n < size; ++n) {
    double ss = 0.0;
    for (int j = 0; j < size; ++j) {
      const double diff = q[(j - n + size) % size] - m[j];
      ss += diff * diff;
    }
    if (ss < best) {
      best = ss;
      best_n = n;
    }
  }
  return best_n;
}

DescriptorParams polar_with_cols(int n_a) {
  DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  p.n_a = n_a;
  return p;
}

double min_time_ms(int repeats, auto&& body) {
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best,
                    std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

}  // namespace

TEST_SUITE("distance") {

TEST_CASE("self distance is exactly zero") {
  std::mt19937 rng(61);
  const DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  for (double zero_cols : {0.0, 0.3, 0.9}) {
    const ScanContextDescriptor d = sctest::random_descriptor(rng, p, zero_cols);
    CHECK(sc::column_cosine_distance(d, d) == 0.0);
    const AlignedDistance a = sc::brute_force_align(d, d);
    CHECK(a.distance == 0.0);
    CHECK(a.shift == 0);
  }
}

TEST_CASE("column-orthogonal descriptors are at distance one") {
  DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  p.n_r = 4;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(4, p.n_a);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(4, p.n_a);
  q.topRows(2).setConstant(1.0);
  m.bottomRows(2).setConstant(2.0);
  CHECK(sc::column_cosine_distance(ScanContextDescriptor(q, p),
                                   ScanContextDescriptor(m, p)) == 1.0);
}

TEST_CASE("all-empty pairs fall back to distance one") {
  const DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  const ScanContextDescriptor zero(Eigen::MatrixXd::Zero(p.n_r, p.n_a), p);
  std::mt19937 rng(67);
  const ScanContextDescriptor d = sctest::random_descriptor(rng, p);
  CHECK(sc::column_cosine_distance(zero, zero) == 1.0);
  CHECK(sc::column_cosine_distance(zero, d) == 1.0);
  CHECK(sc::column_cosine_distance(d, zero) == 1.0);
}

TEST_CASE("zero-norm columns are skipped and the rest renormalized") {
  DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  p.n_r = 2;
  p.n_a = 4;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(2, 4);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 4);
  // Column 0: identical (term 0). Column 1: orthogonal (term 1).
  // Columns 2, 3: one side empty, skipped entirely.
  q(0, 0) = 1.0;
  m(0, 0) = 3.0;
  q(0, 1) = 1.0;
  m(1, 1) = 1.0;
  q(0, 2) = 5.0;
  m(1, 3) = 5.0;
  CHECK(sc::column_cosine_distance(ScanContextDescriptor(q, p),
                                   ScanContextDescriptor(m, p)) == 0.5);
}

TEST_CASE("misalignment by one column is visible") {
  std::mt19937 rng(71);
  const DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  const ScanContextDescriptor d = sctest::random_descriptor(rng, p);
  CHECK(sc::column_cosine_distance(d, sc::shift_columns(d, 1)) > 0.0);
}

TEST_CASE("distance stays in [0, 1] on fuzzed inputs") {
  std::mt19937 rng(73);
  const DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  for (int trial = 0; trial < 50; ++trial) {
    const ScanContextDescriptor a = sctest::random_descriptor(rng, p, 0.4, 0.6);
    const ScanContextDescriptor b = sctest::random_descriptor(rng, p, 0.4, 0.6);
    const double d = sc::column_cosine_distance(a, b);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
  }
}

TEST_CASE("kind and shape mismatches are rejected") {
  const DescriptorParams polar = DescriptorParams::defaults(CoordKind::Polar);
  DescriptorParams cart = DescriptorParams::defaults(CoordKind::Cartesian);
  cart.n_r = polar.n_r;
  cart.n_a = polar.n_a;
  const ScanContextDescriptor dp(Eigen::MatrixXd::Zero(20, 60), polar);
  const ScanContextDescriptor dc(Eigen::MatrixXd::Zero(20, 60), cart);
  CHECK_THROWS_AS(sc::column_cosine_distance(dp, dc), sc::ShapeError);
  CHECK_THROWS_AS(sc::brute_force_align(dp, dc), sc::ShapeError);
  CHECK_THROWS_AS(sc::fast_align(dp, dc), sc::ShapeError);

  const ScanContextDescriptor small(
      Eigen::MatrixXd::Zero(20, 30), polar_with_cols(30));
  CHECK_THROWS_AS(sc::column_cosine_distance(dp, small), sc::ShapeError);
}

TEST_CASE("shift_columns: identity, range checks, composition") {
  std::mt19937 rng(79);
  const DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  const ScanContextDescriptor d = sctest::random_descriptor(rng, p);

  CHECK(sc::shift_columns(d, 0).matrix() == d.matrix());
  CHECK_THROWS_AS(sc::shift_columns(d, p.n_a), sc::RangeError);
  CHECK_THROWS_AS(sc::shift_columns(d, -1), sc::RangeError);

  for (int n : {1, 17, 59}) {
    const Eigen::MatrixXd s = sc::shift_columns(d, n).matrix();
    CHECK(s == oracle_shift(d.matrix(), n));
  }
  const int a = 23, b = 50;
  CHECK(sc::shift_columns(sc::shift_columns(d, a), b).matrix() ==
        sc::shift_columns(d, (a + b) % p.n_a).matrix());
}

TEST_CASE("brute force alignment recovers exact circular shifts") {
  std::mt19937 rng(83);
  const DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  const ScanContextDescriptor q = sctest::random_descriptor(rng, p);
  const AlignedDistance self = sc::brute_force_align(q, q);
  CHECK(self.distance == 0.0);
  CHECK(self.shift == 0);

  const AlignedDistance a = sc::brute_force_align(q, sc::shift_columns(q, 5));
  CHECK(a.distance == 0.0);
  CHECK(a.shift == 5);
}

TEST_CASE("brute force alignment ties break to the smallest shift") {
  DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  std::mt19937 rng(89);
  // Period-30 descriptor: shifts 0 and 30 both align perfectly.
  Eigen::MatrixXd m(p.n_r, p.n_a);
  std::uniform_real_distribution<double> val(0.1, 4.0);
  for (int i = 0; i < p.n_r; ++i)
    for (int j = 0; j < 30; ++j) m(i, j) = m(i, j + 30) = val(rng);
  const ScanContextDescriptor d(m, p);
  const AlignedDistance best = sc::brute_force_align(d, sc::shift_columns(d, 30));
  CHECK(best.distance == 0.0);
  CHECK(best.shift == 0);
}

TEST_CASE("brute force alignment equals the exhaustive oracle") {
  std::mt19937 rng(97);
  const DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  for (int trial = 0; trial < 200; ++trial) {
    const double zero_cols = trial % 4 == 0 ? 0.3 : 0.0;
    const ScanContextDescriptor q = sctest::random_descriptor(rng, p, zero_cols);
    const ScanContextDescriptor m = sctest::random_descriptor(rng, p, zero_cols);
    const AlignedDistance got = sc::brute_force_align(q, m);
    const AlignedDistance want = oracle_brute(q.matrix(), m.matrix());
    CHECK(got.shift == want.shift);
    CHECK(std::abs(got.distance - want.distance) <= 1e-12);
  }
}

TEST_CASE("aligned optimum is symmetric and shifts are mutually inverse") {
  std::mt19937 rng(101);
  const DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  for (int trial = 0; trial < 20; ++trial) {
    const ScanContextDescriptor a = sctest::random_descriptor(rng, p);
    const ScanContextDescriptor b = sctest::random_descriptor(rng, p);
    const AlignedDistance ab = sc::brute_force_align(a, b);
    const AlignedDistance ba = sc::brute_force_align(b, a);
    CHECK(std::abs(ab.distance - ba.distance) <= 1e-12);
  }
  const ScanContextDescriptor q = sctest::random_descriptor(rng, p);
  const ScanContextDescriptor m = sc::shift_columns(q, 13);
  CHECK((sc::brute_force_align(q, m).shift + sc::brute_force_align(m, q).shift) %
            p.n_a ==
        0);
}

TEST_CASE("alignment is invariant to positive scaling") {
  std::mt19937 rng(103);
  const DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  const ScanContextDescriptor a = sctest::random_descriptor(rng, p);
  const ScanContextDescriptor b = sctest::random_descriptor(rng, p);
  const ScanContextDescriptor scaled(a.matrix() * 2.5, p);
  const AlignedDistance plain = sc::brute_force_align(a, b);
  const AlignedDistance scl = sc::brute_force_align(scaled, b);
  CHECK(scl.shift == plain.shift);
  CHECK(std::abs(scl.distance - plain.distance) <= 1e-12);
}

TEST_CASE("align_keys basics and oracle equivalence") {
  std::mt19937 rng(107);
  const DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  const ScanContextDescriptor d = sctest::random_descriptor(rng, p);
  const AligningKey w = sc::aligning_key(d);
  CHECK(sc::align_keys(w, w) == 0);
  CHECK(sc::align_keys(w, sc::aligning_key(sc::shift_columns(d, 7))) == 7);

  for (int trial = 0; trial < 100; ++trial) {
    const AligningKey a = sc::aligning_key(sctest::random_descriptor(rng, p, 0.2));
    const AligningKey b = sc::aligning_key(sctest::random_descriptor(rng, p, 0.2));
    CHECK(sc::align_keys(a, b) == oracle_align_keys(a.values, b.values));
  }

  AligningKey shorter{Eigen::VectorXd::Zero(p.n_a - 1)};
  CHECK_THROWS_AS(sc::align_keys(w, shorter), sc::ShapeError);
}

TEST_CASE("fast_align: exact pre-alignment cases") {
  std::mt19937 rng(109);
  const DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  const ScanContextDescriptor q = sctest::random_descriptor(rng, p);
  for (int hw : {0, 3, p.n_a / 2}) {
    const AlignedDistance self = sc::fast_align(q, q, hw);
    CHECK(self.distance == 0.0);
    CHECK(self.shift == 0);
  }
  for (int k : {2, 59}) {
    const AlignedDistance a = sc::fast_align(q, sc::shift_columns(q, k), 0);
    CHECK(a.distance == 0.0);
    CHECK(a.shift == k);
  }
}

TEST_CASE("fast_align window wraps around the column count") {
  std::mt19937 rng(113);
  const DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  const ScanContextDescriptor q = sctest::random_descriptor(rng, p);
  const AlignedDistance a = sc::fast_align(q, sc::shift_columns(q, 59), 1);
  CHECK(a.distance == 0.0);
  CHECK(a.shift == 59);
}

TEST_CASE("fast_align at full width reproduces brute force bit for bit") {
  std::mt19937 rng(127);
  const DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  for (int trial = 0; trial < 100; ++trial) {
    const ScanContextDescriptor q =
        sctest::random_descriptor(rng, p, trial % 5 == 0 ? 0.3 : 0.0);
    const ScanContextDescriptor m =
        sctest::random_descriptor(rng, p, trial % 5 == 0 ? 0.3 : 0.0);
    const AlignedDistance brute = sc::brute_force_align(q, m);
    const AlignedDistance fast = sc::fast_align(q, m, p.n_a / 2);
    CHECK(fast.distance == brute.distance);
    CHECK(fast.shift == brute.shift);
  }
}

TEST_CASE("fast_align validates half_width") {
  std::mt19937 rng(131);
  const DescriptorParams p = DescriptorParams::defaults(CoordKind::Polar);
  const ScanContextDescriptor q = sctest::random_descriptor(rng, p);
  CHECK_THROWS_AS(sc::fast_align(q, q, -1), sc::InvalidParam);
  CHECK_THROWS_AS(sc::fast_align(q, q, p.n_a / 2 + 1), sc::InvalidParam);
}

TEST_CASE("shift_to_pose: yaw wrap and lateral sign") {
  const DescriptorParams pc = DescriptorParams::defaults(CoordKind::Polar);
  CHECK(sc::shift_to_pose(0, pc) ==
        SemiMetricPose{SemiMetricPose::Kind::Yaw, 0.0});
  CHECK(sc::shift_to_pose(30, pc).value == 180.0);
  CHECK(sc::shift_to_pose(31, pc).value == -174.0);
  CHECK(sc::shift_to_pose(2, pc).value == 12.0);
  CHECK(sc::shift_to_pose(59, pc).value == -6.0);
  CHECK_THROWS_AS(sc::shift_to_pose(-1, pc), sc::RangeError);
  CHECK_THROWS_AS(sc::shift_to_pose(60, pc), sc::RangeError);

  const DescriptorParams cc = DescriptorParams::defaults(CoordKind::Cartesian);
  CHECK(sc::shift_to_pose(2, cc) ==
        SemiMetricPose{SemiMetricPose::Kind::Lateral, 4.0});
  CHECK(sc::shift_to_pose(38, cc).value == -4.0);
  CHECK(sc::shift_to_pose(20, cc).value == 40.0);
  CHECK_THROWS_AS(sc::shift_to_pose(40, cc), sc::RangeError);
}

TEST_CASE("pre-aligned search is markedly cheaper than brute force") {
  std::mt19937 rng(137);
  std::vector<int> sizes{60, 120, 240};
  std::vector<double> brute_ms, fast_ms;
  for (const int n_a : sizes) {
    const DescriptorParams p = polar_with_cols(n_a);
    const ScanContextDescriptor q = sctest::random_descriptor(rng, p);
    const ScanContextDescriptor m = sctest::random_descriptor(rng, p);
    volatile double sink = 0.0;
    brute_ms.push_back(min_time_ms(3, [&] {
      for (int i = 0; i < 20; ++i) sink = sink + sc::brute_force_align(q, m).distance;
    }));
    fast_ms.push_back(min_time_ms(3, [&] {
      for (int i = 0; i < 20; ++i) sink = sink + sc::fast_align(q, m, 0).distance;
    }));
  }
  // The pre-alignment drops the n_r factor from the shift scan, so the gap is
  // a large constant at every size and brute-force cost grows superlinearly.
  for (std::size_t i = 0; i < sizes.size(); ++i)
    CHECK(brute_ms[i] >= 4.0 * fast_ms[i]);
  CHECK(brute_ms.back() >= 4.0 * brute_ms.front());
}

}  // TEST_SUITE
