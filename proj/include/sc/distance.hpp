#pragma once

#include "sc/descriptor.hpp"

namespace sc {

/// Result of aligning a query descriptor against a map descriptor.
struct AlignedDistance {
  /// Normalized column-cosine distance in [0, 1].
  double distance = 1.0;
  /// Optimal circular column shift n* in [0, n_a): shifting the query's
  /// columns right by n* best matches the map.
  int shift = 0;
};

/// 1-DOF relative pose of the query with respect to the matched map place:
/// yaw (ccw-positive degrees, wrapped to (-180, 180]) for polar descriptors,
/// lateral displacement along the map frame's +y (meters) for cartesian.
struct SemiMetricPose {
  enum class Kind : std::uint8_t { Yaw = 0, Lateral = 1 };
  Kind kind = Kind::Yaw;
  double value = 0.0;  // degrees or meters

  bool operator==(const SemiMetricPose&) const = default;
};

/// Mean over columns of (1 - cosine similarity), skipping column pairs where
/// either side has zero norm and renormalizing by the count of valid pairs;
/// 1.0 when no pair is valid. Throws ShapeError on kind/shape mismatch.
double column_cosine_distance(const ScanContextDescriptor& query,
                              const ScanContextDescriptor& map);

/// Circular right shift: column j of the output is column (j - n) mod n_a of
/// the input. Throws RangeError unless 0 <= n < n_a.
ScanContextDescriptor shift_columns(const ScanContextDescriptor& scd, int n);

/// Minimizes column_cosine_distance over all n_a circular shifts of the
/// query; ties break to the smallest shift.
AlignedDistance brute_force_align(const ScanContextDescriptor& query,
                                  const ScanContextDescriptor& map);

/// Pre-alignment: argmin over n of the L2 distance between the circularly
/// shifted query aligning key and the map aligning key; ties break to the
/// smallest shift. Throws ShapeError on length mismatch.
int align_keys(const AligningKey& query, const AligningKey& map);

/// Aligns via the aligning keys first, then minimizes the full-descriptor
/// distance only over shifts within +-half_width of the pre-aligned shift
/// (mod n_a). half_width 0 trusts the pre-alignment outright; n_a/2 covers
/// every shift and reproduces brute_force_align exactly. Throws ShapeError on
/// mismatch, InvalidParam when half_width < 0 or > n_a/2.
AlignedDistance fast_align(const ScanContextDescriptor& query,
                           const ScanContextDescriptor& map, int half_width = 0);

/// Converts an optimal column shift into the 1-DOF semi-metric pose. Polar:
/// yaw = shift * delta_a wrapped to (-180, 180] degrees. Cartesian: lateral =
/// s * delta_a meters with s = shift for shift <= n_a/2, else shift - n_a.
/// Throws RangeError unless 0 <= shift < n_a.
SemiMetricPose shift_to_pose(int shift, const DescriptorParams& params);

namespace detail {
/// d(shift_columns(query, n), map) without materializing the shifted matrix.
/// `query_sq_norms` / `map_sq_norms` are per-column squared norms.
double distance_at_shift(const Eigen::MatrixXd& query, const Eigen::MatrixXd& map,
                         const Eigen::VectorXd& query_sq_norms,
                         const Eigen::VectorXd& map_sq_norms, int n);
}  // namespace detail

}  // namespace sc
