#include "sc/distance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sc/error.hpp"

namespace sc {

namespace {

void check_compatible(const ScanContextDescriptor& query,
                      const ScanContextDescriptor& map) {
  if (query.kind() != map.kind())
    throw ShapeError("descriptor kind mismatch (polar vs cartesian)");
  if (query.rows() != map.rows() || query.cols() != map.cols())
    throw ShapeError("descriptor shape mismatch: " + std::to_string(query.rows()) +
                     "x" + std::to_string(query.cols()) + " vs " +
                     std::to_string(map.rows()) + "x" + std::to_string(map.cols()));
}

// Per-column squared norms via the same dot kernel used for the cross terms,
// so a self-comparison yields numerator == denominator bit for bit.
Eigen::VectorXd column_sq_norms(const Eigen::MatrixXd& m) {
  Eigen::VectorXd out(m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) out[j] = m.col(j).dot(m.col(j));
  return out;
}

}  // namespace

namespace detail {

double distance_at_shift(const Eigen::MatrixXd& query, const Eigen::MatrixXd& map,
                         const Eigen::VectorXd& query_sq_norms,
                         const Eigen::VectorXd& map_sq_norms, int n) {
  const Eigen::Index cols = map.cols();
  double sum = 0.0;
  Eigen::Index valid = 0;
  for (Eigen::Index j = 0; j < cols; ++j) {
    const Eigen::Index qi = (j - n + cols) % cols;
    const double qn = query_sq_norms[qi];
    const double mn = map_sq_norms[j];
    if (qn == 0.0 || mn == 0.0) continue;  // empty column: no direction to compare
    const double cosine = query.col(qi).dot(map.col(j)) / std::sqrt(qn * mn);
    // Entries are non-negative, so the true cosine is in [0, 1]; clamp the
    // rounding spill.
    sum += std::clamp(1.0 - cosine, 0.0, 1.0);
    ++valid;
  }
  return valid > 0 ? sum / static_cast<double>(valid) : 1.0;
}

}  // namespace detail

double column_cosine_distance(const ScanContextDescriptor& query,
                              const ScanContextDescriptor& map) {
  check_compatible(query, map);
  return detail::distance_at_shift(query.matrix(), map.matrix(),
                                   column_sq_norms(query.matrix()),
                                   column_sq_norms(map.matrix()), 0);
}

ScanContextDescriptor shift_columns(const ScanContextDescriptor& scd, int n) {
  const Eigen::Index cols = scd.cols();
  if (n < 0 || n >= cols)
    throw RangeError("column shift " + std::to_string(n) + " outside [0, " +
                     std::to_string(cols) + ")");
  Eigen::MatrixXd shifted(scd.rows(), cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    shifted.col(j) = scd.matrix().col((j - n + cols) % cols);
  return ScanContextDescriptor(ScanContextDescriptor::unchecked_t{},
                               std::move(shifted), scd.params(), scd.tag());
}

AlignedDistance brute_force_align(const ScanContextDescriptor& query,
                                  const ScanContextDescriptor& map) {
  check_compatible(query, map);
  const Eigen::VectorXd query_sq = column_sq_norms(query.matrix());
  const Eigen::VectorXd map_sq = column_sq_norms(map.matrix());
  AlignedDistance best{std::numeric_limits<double>::infinity(), 0};
  for (int n = 0; n < query.cols(); ++n) {
    const double d = detail::distance_at_shift(query.matrix(), map.matrix(),
                                               query_sq, map_sq, n);
    if (d < best.distance) best = {d, n};
  }
  return best;
}

int align_keys(const AligningKey& query, const AligningKey& map) {
  const Eigen::Index n_a = map.values.size();
  if (query.values.size() != n_a)
    throw ShapeError("aligning key length mismatch: " +
                     std::to_string(query.values.size()) + " vs " +
                     std::to_string(n_a));
  // argmin over L2 == argmin over the squared sum; skip the sqrt. The query
  // index j - n wraps exactly once, so split the circle into two contiguous
  // runs instead of taking a modulo per element.
  double best = std::numeric_limits<double>::infinity();
  int best_n = 0;
  for (Eigen::Index n = 0; n < n_a; ++n) {
    double ss = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double diff = query.values[j - n + n_a] - map.values[j];
      ss += diff * diff;
    }
    for (Eigen::Index j = n; j < n_a; ++j) {
      const double diff = query.values[j - n] - map.values[j];
      ss += diff * diff;
    }
    if (ss < best) {
      best = ss;
      best_n = static_cast<int>(n);
    }
  }
  return best_n;
}

AlignedDistance fast_align(const ScanContextDescriptor& query,
                           const ScanContextDescriptor& map, int half_width) {
  check_compatible(query, map);
  const int n_a = static_cast<int>(map.cols());
  if (half_width < 0 || half_width > n_a / 2)
    throw InvalidParam("half_width " + std::to_string(half_width) +
                       " outside [0, " + std::to_string(n_a / 2) + "]");
  const int center = align_keys(aligning_key(query), aligning_key(map));
  std::vector<char> in_window(static_cast<std::size_t>(n_a), 0);
  for (int d = -half_width; d <= half_width; ++d)
    in_window[static_cast<std::size_t>(((center + d) % n_a + n_a) % n_a)] = 1;

  const Eigen::VectorXd query_sq = column_sq_norms(query.matrix());
  const Eigen::VectorXd map_sq = column_sq_norms(map.matrix());
  // Ascending scan with strict '<' reproduces brute_force_align bit for bit
  // once the window covers every shift.
  AlignedDistance best{std::numeric_limits<double>::infinity(), 0};
  for (int n = 0; n < n_a; ++n) {
    if (!in_window[static_cast<std::size_t>(n)]) continue;
    const double d = detail::distance_at_shift(query.matrix(), map.matrix(),
                                               query_sq, map_sq, n);
    if (d < best.distance) best = {d, n};
  }
  return best;
}

SemiMetricPose shift_to_pose(int shift, const DescriptorParams& params) {
  params.validate();
  if (shift < 0 || shift >= params.n_a)
    throw RangeError("shift " + std::to_string(shift) + " outside [0, " +
                     std::to_string(params.n_a) + ")");
  if (params.kind == CoordKind::Polar) {
    double yaw = shift * params.delta_a();  // in [0, 360)
    if (yaw > 180.0) yaw -= 360.0;
    return {SemiMetricPose::Kind::Yaw, yaw};
  }
  const int s = shift <= params.n_a / 2 ? shift : shift - params.n_a;
  return {SemiMetricPose::Kind::Lateral, s * params.delta_a()};
}

}  // namespace sc
