#include "sc/pointcloud.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <unordered_map>

namespace sc {

namespace {

struct VoxelIndex {
  std::int64_t i, j, k;
  bool operator==(const VoxelIndex&) const = default;
};

struct VoxelHash {
  std::size_t operator()(const VoxelIndex& v) const {
    // FNV-style mix of the three cell indices.
    std::size_t h = 1469598103934665603ull;
    for (std::int64_t c : {v.i, v.j, v.k}) {
      h ^= static_cast<std::size_t>(c);
      h *= 1099511628211ull;
    }
    return h;
  }
};

float read_le_f32(const unsigned char* p) {
  std::uint32_t u = static_cast<std::uint32_t>(p[0]) |
                    static_cast<std::uint32_t>(p[1]) << 8 |
                    static_cast<std::uint32_t>(p[2]) << 16 |
                    static_cast<std::uint32_t>(p[3]) << 24;
  return std::bit_cast<float>(u);
}

}  // namespace

RigidTransform RigidTransform::translate(double x, double y, double z) {
  RigidTransform t;
  t.translation = Eigen::Vector3d(x, y, z);
  return t;
}

RigidTransform RigidTransform::yaw_deg(double degrees) {
  RigidTransform t;
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad);
  const double s = std::sin(rad);
  // Written out so the z row and column are exact (AngleAxis would compute
  // the (2,2) entry as (1-c)+c, which can land one ulp off 1 and wobble z).
  t.rotation << c, -s, 0.0,  //
      s, c, 0.0,             //
      0.0, 0.0, 1.0;
  return t;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(rotation.transpose() * translation);
  return inv;
}

bool RigidTransform::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Eigen::Matrix3d should_be_identity = rotation.transpose() * rotation;
  if ((should_be_identity - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol)
    return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

PointCloud load_kitti_bin(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());
  if (bytes.size() % 16 != 0)
    throw FormatError(path.string() + ": byte length " +
                      std::to_string(bytes.size()) + " not divisible by 16");

  PointCloud cloud;
  const std::size_t n = bytes.size() / 16;
  cloud.points.reserve(n);
  cloud.intensities.reserve(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < n; ++i, p += 16) {
    const float x = read_le_f32(p);
    const float y = read_le_f32(p + 4);
    const float z = read_le_f32(p + 8);
    const float intensity = read_le_f32(p + 12);
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
      throw FormatError(path.string() + ": non-finite coordinate at point " +
                        std::to_string(i));
    cloud.points.push_back({x, y, z});
    cloud.intensities.push_back(intensity);
  }
  return cloud;
}

PointCloud load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  PointCloud cloud;
  bool any_intensity = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // Strip a trailing CR so DOS files parse too.
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '#') continue;

    std::array<double, 4> v{0, 0, 0, 0};
    int fields = 0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (fields >= 4) throw ParseError("too many fields", line_no);
      std::size_t consumed = 0;
      try {
        v[fields] = std::stod(cell, &consumed);
      } catch (const std::exception&) {
        throw ParseError("not a number: '" + cell + "'", line_no);
      }
      while (consumed < cell.size() &&
             (cell[consumed] == ' ' || cell[consumed] == '\t'))
        ++consumed;
      if (consumed != cell.size())
        throw ParseError("not a number: '" + cell + "'", line_no);
      ++fields;
    }
    if (fields < 3) throw ParseError("expected x,y,z[,i]", line_no);
    if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2]))
      throw ParseError("non-finite coordinate", line_no);

    cloud.points.push_back({v[0], v[1], v[2]});
    if (fields == 4) {
      any_intensity = true;
      cloud.intensities.resize(cloud.points.size() - 1, 0.0f);
      cloud.intensities.push_back(static_cast<float>(v[3]));
    } else if (any_intensity) {
      cloud.intensities.push_back(0.0f);
    }
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
  return cloud;
}

PointCloud voxel_downsample(const PointCloud& cloud, double leaf) {
  if (!(leaf > 0.0)) throw InvalidParam("voxel leaf must be > 0");

  struct Acc {
    double x = 0, y = 0, z = 0;
    std::size_t n = 0;
  };
  std::unordered_map<VoxelIndex, Acc, VoxelHash> cells;
  cells.reserve(cloud.size());
  for (const Point3& p : cloud.points) {
    const VoxelIndex idx{static_cast<std::int64_t>(std::floor(p.x / leaf)),
                         static_cast<std::int64_t>(std::floor(p.y / leaf)),
                         static_cast<std::int64_t>(std::floor(p.z / leaf))};
    Acc& a = cells[idx];
    a.x += p.x;
    a.y += p.y;
    a.z += p.z;
    a.n += 1;
  }

  std::vector<std::pair<VoxelIndex, Acc>> ordered(cells.begin(), cells.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    return std::tie(a.first.i, a.first.j, a.first.k) <
           std::tie(b.first.i, b.first.j, b.first.k);
  });

  PointCloud out;
  out.points.reserve(ordered.size());
  for (const auto& [idx, a] : ordered) {
    const double inv = 1.0 / static_cast<double>(a.n);
    out.points.push_back({a.x * inv, a.y * inv, a.z * inv});
  }
  return out;
}

PointCloud transform(const PointCloud& cloud, const RigidTransform& pose) {
  if (!pose.is_valid()) throw InvalidParam("transform is not rigid");
  PointCloud out;
  out.points.reserve(cloud.size());
  out.intensities = cloud.intensities;
  for (const Point3& p : cloud.points) {
    const Eigen::Vector3d q =
        pose.rotation * Eigen::Vector3d(p.x, p.y, p.z) + pose.translation;
    out.points.push_back({q.x(), q.y(), q.z()});
  }
  return out;
}

}  // namespace sc
