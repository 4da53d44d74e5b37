#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "sc/error.hpp"
#include "sc/pointcloud.hpp"

namespace sc {

enum class CoordKind : std::uint8_t { Polar = 0, Cartesian = 1 };

/// Bird's-eye-view partitioning: rows along the R-axis (radius for polar,
/// longitudinal x for cartesian), columns along the A-axis (azimuth degrees
/// for polar, lateral y meters for cartesian).
struct DescriptorParams {
  CoordKind kind = CoordKind::Polar;
  double r_min = 0.0, r_max = 80.0;   // meters
  double a_min = 0.0, a_max = 360.0;  // degrees (polar) or meters (cartesian)
  int n_r = 20;
  int n_a = 60;
  /// Added to z before encoding so heights are non-negative; the sensor
  /// usually sits above ground and raw z is often negative. Values clamp at 0,
  /// which is also the empty-bin marker.
  double height_offset = 2.0;

  double delta_r() const { return (r_max - r_min) / n_r; }
  double delta_a() const { return (a_max - a_min) / n_a; }

  /// Throws InvalidParam on inconsistent ranges/counts; polar descriptors
  /// require a_range exactly [0, 360].
  void validate() const;

  /// Polar: [0,80] m x [0,360)°, 20x60. Cartesian: [-100,100] m x [-40,40] m,
  /// 40x40. height_offset 2 m for both.
  static DescriptorParams defaults(CoordKind kind);

  bool operator==(const DescriptorParams&) const = default;
};

struct AugmentationTag {
  enum class Kind : std::uint8_t { Original = 0, RootShift = 1, DoubleFlip = 2 };
  Kind kind = Kind::Original;
  /// Lateral offset of the virtual origin, meters; 0 unless kind==RootShift.
  double lateral_m = 0.0;

  static AugmentationTag original() { return {}; }
  static AugmentationTag root_shift(double lateral_m) {
    return {Kind::RootShift, lateral_m};
  }
  static AugmentationTag double_flipped() { return {Kind::DoubleFlip, 0.0}; }

  bool operator==(const AugmentationTag&) const = default;
};

/// n_r x n_a matrix of bin-encoded values (max offset height per bin, meters);
/// 0 marks an empty bin. Entries are non-negative.
class ScanContextDescriptor {
 public:
  /// Validates dimensions against params and non-negativity of all entries.
  ScanContextDescriptor(Eigen::MatrixXd matrix, DescriptorParams params,
                        AugmentationTag tag = {});

  const Eigen::MatrixXd& matrix() const { return matrix_; }
  const DescriptorParams& params() const { return params_; }
  CoordKind kind() const { return params_.kind; }
  const AugmentationTag& tag() const { return tag_; }
  int rows() const { return static_cast<int>(matrix_.rows()); }
  int cols() const { return static_cast<int>(matrix_.cols()); }

  /// Row-major CSV, one descriptor row per line.
  void write_csv(std::ostream& out) const;

  /// Binary record: u32 n_r, u32 n_a, u8 kind, u8 tag, f32 offset (the tag's
  /// lateral offset), then n_r*n_a little-endian f32 row-major.
  void write_binary(std::ostream& out) const;

  /// Reads a record written by write_binary. `params` supplies ranges and the
  /// height offset (they are not part of the record); kind and dimensions are
  /// cross-checked. Throws FormatError / VersionError on mismatch.
  static ScanContextDescriptor read_binary(std::istream& in,
                                           const DescriptorParams& params);

 private:
  struct unchecked_t {};
  ScanContextDescriptor(unchecked_t, Eigen::MatrixXd matrix,
                        DescriptorParams params, AugmentationTag tag)
      : matrix_(std::move(matrix)), params_(params), tag_(tag) {}

  friend ScanContextDescriptor make_descriptor(const PointCloud&,
                                               const DescriptorParams&);
  friend ScanContextDescriptor double_flip(const ScanContextDescriptor&);
  friend ScanContextDescriptor shift_columns(const ScanContextDescriptor&, int);

  Eigen::MatrixXd matrix_;
  DescriptorParams params_;
  AugmentationTag tag_;
};

/// Per-row summary (row mean of |entries|), permutation invariant over
/// columns. Used for k-d tree candidate search.
struct RetrievalKey {
  Eigen::VectorXd values;  // length n_r, entries >= 0
};

/// Per-column summary (column mean of |entries|); circularly shifts with the
/// descriptor columns. Used to pre-estimate the optimal column shift.
struct AligningKey {
  Eigen::VectorXd values;  // length n_a, entries >= 0
};

/// Bins every point by (R, A) coordinate, half-open cells with the upper
/// boundary excluded (polar azimuth wraps 360° to column 0), and encodes each
/// bin as max(z + height_offset, 0) over its members; empty bins stay 0.
ScanContextDescriptor make_descriptor(const PointCloud& cloud,
                                      const DescriptorParams& params);

RetrievalKey retrieval_key(const ScanContextDescriptor& scd);
AligningKey aligning_key(const ScanContextDescriptor& scd);

/// Reverses both axes (M'[i,j] = M[n_r-1-i, n_a-1-j]). Cartesian descriptors
/// only; throws KindError for polar. An involution.
ScanContextDescriptor double_flip(const ScanContextDescriptor& cc);

/// For each lateral offset d, the cloud as seen from a virtual origin
/// displaced +d along y: transform(cloud, translation (0, -d, 0)).
std::vector<PointCloud> root_shift_clouds(const PointCloud& cloud,
                                          std::span<const double> lateral_offsets);

/// Lane-width virtual viewpoints used by polar-context augmentation.
inline constexpr std::array<double, 2> kDefaultRootShiftOffsets{+2.0, -2.0};

}  // namespace sc
