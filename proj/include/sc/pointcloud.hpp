#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "sc/error.hpp"

namespace sc {

/// One 3D point in the sensor frame: x forward (travel direction), y lateral
/// left, z up. Meters. Coordinates are finite past ingestion.
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct PointCloud {
  std::vector<Point3> points;
  /// Per-point intensity, unitless. Either empty or one value per point.
  /// Parsed and retained; the default height encoder ignores it.
  std::vector<float> intensities;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// SE(3) transform. rotation must be orthonormal with det +1 (tol 1e-9).
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform translate(double x, double y, double z);
  /// Rotation about +z, ccw-positive, degrees.
  static RigidTransform yaw_deg(double degrees);

  RigidTransform inverse() const;
  bool is_valid(double tol = 1e-9) const;
};

/// KITTI velodyne format: packed little-endian float32 quadruples
/// (x, y, z, intensity). Throws IoError on unreadable files, FormatError when
/// the byte length is not a multiple of 16 or a value is not finite.
PointCloud load_kitti_bin(const std::filesystem::path& path);

/// Text format: one "x,y,z[,i]" per line; blank lines and lines starting with
/// '#' are skipped. Throws IoError / ParseError (with line number).
PointCloud load_csv(const std::filesystem::path& path);

/// Voxel-grid downsampling: points grouped by floor(p/leaf) per axis
/// (half-open cells, boundary points belong to the higher-index voxel), one
/// centroid per nonempty voxel. Output ordered by voxel index so results are
/// reproducible across runs. Throws InvalidParam when leaf <= 0.
PointCloud voxel_downsample(const PointCloud& cloud, double leaf);

/// Applies p' = R*p + t to every point, order preserved. Intensities carried
/// through. Throws InvalidParam when the transform is not rigid.
PointCloud transform(const PointCloud& cloud, const RigidTransform& pose);

}  // namespace sc
