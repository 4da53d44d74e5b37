#include <doctest.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "sc/error.hpp"
#include "sc/pointcloud.hpp"
#include "synthetic.hpp"

using sc::PointCloud;
using sc::RigidTransform;
using sctest::TempDir;

namespace {

void write_bytes(const std::filesystem::path& path,
                 const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void append_f32(std::vector<unsigned char>& bytes, float v) {
  const auto u = std::bit_cast<std::uint32_t>(v);
  bytes.push_back(static_cast<unsigned char>(u));
  bytes.push_back(static_cast<unsigned char>(u >> 8));
  bytes.push_back(static_cast<unsigned char>(u >> 16));
  bytes.push_back(static_cast<unsigned char>(u >> 24));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string what_of(const std::exception& e) { return e.what(); }

}  // namespace

TEST_SUITE("pointcloud") {

TEST_CASE("kitti bin decodes packed little-endian float quadruples") {
  TempDir tmp;
  std::vector<unsigned char> bytes;
  for (float v : {1.0f, 2.0f, 3.0f, 0.5f, 4.0f, 5.0f, 6.0f, 0.1f})
    append_f32(bytes, v);
  write_bytes(tmp.file("a.bin"), bytes);

  const PointCloud cloud = sc::load_kitti_bin(tmp.file("a.bin"));
  REQUIRE(cloud.size() == 2);
  CHECK(cloud.points[0].x == 1.0);
  CHECK(cloud.points[0].y == 2.0);
  CHECK(cloud.points[0].z == 3.0);
  CHECK(cloud.points[1].x == 4.0);
  REQUIRE(cloud.intensities.size() == 2);
  CHECK(cloud.intensities[0] == 0.5f);
  CHECK(cloud.intensities[1] == 0.1f);
}

TEST_CASE("kitti bin: empty file gives an empty cloud") {
  TempDir tmp;
  write_bytes(tmp.file("empty.bin"), {});
  CHECK(sc::load_kitti_bin(tmp.file("empty.bin")).empty());
}

TEST_CASE("kitti bin: length not divisible by 16 is rejected") {
  TempDir tmp;
  write_bytes(tmp.file("bad.bin"), std::vector<unsigned char>(17, 0));
  CHECK_THROWS_AS(sc::load_kitti_bin(tmp.file("bad.bin")), sc::FormatError);
}

TEST_CASE("kitti bin: non-finite coordinate is rejected") {
  TempDir tmp;
  std::vector<unsigned char> bytes;
  append_f32(bytes, 1.0f);
  append_f32(bytes, std::numeric_limits<float>::infinity());
  append_f32(bytes, 3.0f);
  append_f32(bytes, 0.0f);
  write_bytes(tmp.file("inf.bin"), bytes);
  CHECK_THROWS_AS(sc::load_kitti_bin(tmp.file("inf.bin")), sc::FormatError);
}

TEST_CASE("kitti bin: missing file raises IoError") {
  TempDir tmp;
  CHECK_THROWS_AS(sc::load_kitti_bin(tmp.file("nope.bin")), sc::IoError);
}

TEST_CASE("csv: basic rows") {
  TempDir tmp;
  write_text(tmp.file("a.csv"), "0,0,1\n2,0,3\n");
  const PointCloud cloud = sc::load_csv(tmp.file("a.csv"));
  REQUIRE(cloud.size() == 2);
  CHECK(cloud.points[0].z == 1.0);
  CHECK(cloud.points[1].x == 2.0);
  CHECK(cloud.intensities.empty());
}

TEST_CASE("csv: comments, blank lines, CRLF, and intensity backfill") {
  TempDir tmp;
  write_text(tmp.file("b.csv"),
             "# header\r\n\n1,1,1\r\n  \t\n2,2,2,0.75\n3,3,3\n");
  const PointCloud cloud = sc::load_csv(tmp.file("b.csv"));
  REQUIRE(cloud.size() == 3);
  REQUIRE(cloud.intensities.size() == 3);
  CHECK(cloud.intensities[0] == 0.0f);
  CHECK(cloud.intensities[1] == 0.75f);
  CHECK(cloud.intensities[2] == 0.0f);
}

TEST_CASE("csv: bad number reports the 1-based line") {
  TempDir tmp;
  write_text(tmp.file("bad.csv"), "1,x,3\n");
  try {
    sc::load_csv(tmp.file("bad.csv"));
    FAIL("expected ParseError");
  } catch (const sc::ParseError& e) {
    CHECK(what_of(e).find("line 1") != std::string::npos);
  }

  write_text(tmp.file("bad2.csv"), "1,2,3\n4,5\n");
  try {
    sc::load_csv(tmp.file("bad2.csv"));
    FAIL("expected ParseError");
  } catch (const sc::ParseError& e) {
    CHECK(what_of(e).find("line 2") != std::string::npos);
  }
}

TEST_CASE("csv: too many fields, trailing garbage, non-finite") {
  TempDir tmp;
  write_text(tmp.file("five.csv"), "1,2,3,4,5\n");
  CHECK_THROWS_AS(sc::load_csv(tmp.file("five.csv")), sc::ParseError);
  write_text(tmp.file("junk.csv"), "1,2junk,3\n");
  CHECK_THROWS_AS(sc::load_csv(tmp.file("junk.csv")), sc::ParseError);
  write_text(tmp.file("nan.csv"), "1,nan,3\n");
  CHECK_THROWS_AS(sc::load_csv(tmp.file("nan.csv")), sc::ParseError);
  CHECK_THROWS_AS(sc::load_csv(tmp.file("missing.csv")), sc::IoError);
}

TEST_CASE("csv round-trips the writer used by the test fixtures") {
  TempDir tmp;
  std::mt19937 rng(7);
  const PointCloud cloud = sctest::random_polar_cloud(rng, 50);
  sctest::write_cloud_csv(tmp.file("rt.csv"), cloud);
  const PointCloud back = sc::load_csv(tmp.file("rt.csv"));
  REQUIRE(back.size() == cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK(back.points[i].x == cloud.points[i].x);
    CHECK(back.points[i].y == cloud.points[i].y);
    CHECK(back.points[i].z == cloud.points[i].z);
  }
}

TEST_CASE("voxel: two near points collapse to their centroid") {
  PointCloud cloud;
  cloud.points = {{0.1, 0.1, 0.1}, {0.2, 0.2, 0.2}};
  const PointCloud out = sc::voxel_downsample(cloud, 0.5);
  REQUIRE(out.size() == 1);
  CHECK(out.points[0].x == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(out.points[0].y == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(out.points[0].z == doctest::Approx(0.15).epsilon(1e-12));
}

TEST_CASE("voxel: empty cloud and invalid leaf") {
  CHECK(sc::voxel_downsample(PointCloud{}, 0.5).empty());
  PointCloud one;
  one.points = {{1, 1, 1}};
  CHECK_THROWS_AS(sc::voxel_downsample(one, 0.0), sc::InvalidParam);
  CHECK_THROWS_AS(sc::voxel_downsample(one, -1.0), sc::InvalidParam);
}

TEST_CASE("voxel: boundary point belongs to the higher-index cell") {
  PointCloud cloud;
  cloud.points = {{0.49, 0.0, 0.0}, {0.5, 0.0, 0.0}, {-0.1, 0.0, 0.0}};
  const PointCloud out = sc::voxel_downsample(cloud, 0.5);
  CHECK(out.size() == 3);  // cells -1, 0, and 1 along x
}

TEST_CASE("voxel: uniform cube stays within half a cell diagonal") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> coord(0.0, 10.0);
  PointCloud cloud;
  for (int i = 0; i < 1000; ++i)
    cloud.points.push_back({coord(rng), coord(rng), coord(rng)});

  const double leaf = 0.5;
  const PointCloud out = sc::voxel_downsample(cloud, leaf);
  CHECK(out.size() <= 8000);
  CHECK(out.size() <= cloud.size());

  const double bound = std::sqrt(3.0) / 2.0 * leaf + 1e-12;
  for (const sc::Point3& p : cloud.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const sc::Point3& q : out.points) {
      const double d = std::hypot(p.x - q.x, p.y - q.y, p.z - q.z);
      if (d < best) best = d;
    }
    CHECK(best <= bound);
  }

  // Count idempotence: every output point stays alone in its own voxel.
  CHECK(sc::voxel_downsample(out, leaf).size() == out.size());
}

TEST_CASE("voxel output is ordered by cell index") {
  std::mt19937 rng(13);
  const PointCloud cloud = sctest::random_polar_cloud(rng, 300);
  const double leaf = 0.5;
  const PointCloud out = sc::voxel_downsample(cloud, leaf);
  auto cell = [&](const sc::Point3& p) {
    return std::array<std::int64_t, 3>{
        static_cast<std::int64_t>(std::floor(p.x / leaf)),
        static_cast<std::int64_t>(std::floor(p.y / leaf)),
        static_cast<std::int64_t>(std::floor(p.z / leaf))};
  };
  for (std::size_t i = 1; i < out.size(); ++i)
    CHECK(cell(out.points[i - 1]) < cell(out.points[i]));
}

TEST_CASE("transform: identity, translation, yaw") {
  PointCloud cloud;
  cloud.points = {{1, 0, 0}};
  cloud.intensities = {0.3f};

  const PointCloud same = sc::transform(cloud, RigidTransform::identity());
  CHECK(same.points[0].x == 1.0);
  CHECK(same.intensities == cloud.intensities);

  const PointCloud moved =
      sc::transform(cloud, RigidTransform::translate(0, 2, 0));
  CHECK(moved.points[0].x == 1.0);
  CHECK(moved.points[0].y == 2.0);

  const PointCloud turned = sc::transform(cloud, RigidTransform::yaw_deg(90));
  CHECK(std::abs(turned.points[0].x - 0.0) <= 1e-12);
  CHECK(std::abs(turned.points[0].y - 1.0) <= 1e-12);
}

TEST_CASE("transform: inverse round-trips within 1e-9") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> angle(-3.0, 3.0);
  const PointCloud cloud = sctest::random_polar_cloud(rng, 100);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::Vector3d axis(unit(rng), unit(rng), unit(rng));
    if (axis.norm() < 1e-3) axis = Eigen::Vector3d::UnitX();
    axis.normalize();
    RigidTransform t;
    t.rotation = Eigen::AngleAxisd(angle(rng), axis).toRotationMatrix();
    t.translation = Eigen::Vector3d(unit(rng), unit(rng), unit(rng)) * 10.0;
    REQUIRE(t.is_valid());

    const PointCloud back = sc::transform(sc::transform(cloud, t), t.inverse());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      CHECK(std::abs(back.points[i].x - cloud.points[i].x) <= 1e-9);
      CHECK(std::abs(back.points[i].y - cloud.points[i].y) <= 1e-9);
      CHECK(std::abs(back.points[i].z - cloud.points[i].z) <= 1e-9);
    }
  }
}

TEST_CASE("transform: non-rigid matrices are rejected") {
  RigidTransform t;
  t.rotation *= 2.0;
  CHECK_FALSE(t.is_valid());
  PointCloud cloud;
  cloud.points = {{1, 2, 3}};
  CHECK_THROWS_AS(sc::transform(cloud, t), sc::InvalidParam);

  RigidTransform reflect;
  reflect.rotation(2, 2) = -1.0;  // det -1, still orthonormal
  CHECK_FALSE(reflect.is_valid());
  CHECK_THROWS_AS(sc::transform(cloud, reflect), sc::InvalidParam);
}

}  // TEST_SUITE
