#include "sc/descriptor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>

namespace sc {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_f32(std::ostream& out, float v) {
  write_u32(out, std::bit_cast<std::uint32_t>(v));
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw VersionError("truncated descriptor record");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 |
         static_cast<std::uint32_t>(b[3]) << 24;
}

float read_f32(std::istream& in) { return std::bit_cast<float>(read_u32(in)); }

std::uint8_t read_u8(std::istream& in) {
  char c;
  in.read(&c, 1);
  if (!in) throw VersionError("truncated descriptor record");
  return static_cast<std::uint8_t>(c);
}

}  // namespace

void DescriptorParams::validate() const {
  if (!(r_min < r_max)) throw InvalidParam("descriptor params: R_min must be < R_max");
  if (!(a_min < a_max)) throw InvalidParam("descriptor params: A_min must be < A_max");
  if (n_r < 1 || n_a < 1) throw InvalidParam("descriptor params: n_r and n_a must be >= 1");
  if (!std::isfinite(r_min) || !std::isfinite(r_max) || !std::isfinite(a_min) ||
      !std::isfinite(a_max) || !std::isfinite(height_offset))
    throw InvalidParam("descriptor params: non-finite value");
  if (kind == CoordKind::Polar && (a_min != 0.0 || a_max != 360.0))
    throw InvalidParam("polar descriptor requires a_range [0, 360]");
}

DescriptorParams DescriptorParams::defaults(CoordKind kind) {
  DescriptorParams p;
  p.kind = kind;
  if (kind == CoordKind::Polar) {
    p.r_min = 0.0;
    p.r_max = 80.0;
    p.a_min = 0.0;
    p.a_max = 360.0;
    p.n_r = 20;
    p.n_a = 60;
  } else {
    p.r_min = -100.0;  // longitudinal
    p.r_max = 100.0;
    p.a_min = -40.0;  // lateral
    p.a_max = 40.0;
    p.n_r = 40;
    p.n_a = 40;
  }
  p.height_offset = 2.0;
  return p;
}

ScanContextDescriptor::ScanContextDescriptor(Eigen::MatrixXd matrix,
                                             DescriptorParams params,
                                             AugmentationTag tag)
    : matrix_(std::move(matrix)), params_(params), tag_(tag) {
  params_.validate();
  if (matrix_.rows() != params_.n_r || matrix_.cols() != params_.n_a)
    throw ShapeError("descriptor matrix does not match params");
  if (matrix_.size() > 0 && (!matrix_.allFinite() || matrix_.minCoeff() < 0.0))
    throw InvalidParam("descriptor entries must be finite and >= 0");
}

ScanContextDescriptor make_descriptor(const PointCloud& cloud,
                                      const DescriptorParams& params) {
  params.validate();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(params.n_r, params.n_a);
  const double dr = params.delta_r();
  const double da = params.delta_a();

  for (const Point3& p : cloud.points) {
    double rc, ac;
    if (params.kind == CoordKind::Polar) {
      rc = std::hypot(p.x, p.y);
      ac = std::atan2(p.y, p.x) * kRadToDeg;
      if (ac < 0.0) ac += 360.0;
      if (ac >= 360.0) ac = 0.0;  // fp wrap of angles just below 0
    } else {
      rc = p.x;
      ac = p.y;
    }
    if (rc < params.r_min || rc >= params.r_max) continue;
    if (ac < params.a_min || ac >= params.a_max) continue;

    // Half-open cells; values a hair under the upper range edge can still
    // round up to n, hence the clamp.
    int row = static_cast<int>(std::floor((rc - params.r_min) / dr));
    int col = static_cast<int>(std::floor((ac - params.a_min) / da));
    row = std::min(row, params.n_r - 1);
    col = std::min(col, params.n_a - 1);

    const double h = std::max(p.z + params.height_offset, 0.0);
    if (h > m(row, col)) m(row, col) = h;
  }
  return ScanContextDescriptor(ScanContextDescriptor::unchecked_t{},
                               std::move(m), params, AugmentationTag::original());
}

RetrievalKey retrieval_key(const ScanContextDescriptor& scd) {
  return {scd.matrix().cwiseAbs().rowwise().mean()};
}

AligningKey aligning_key(const ScanContextDescriptor& scd) {
  return {scd.matrix().cwiseAbs().colwise().mean().transpose()};
}

ScanContextDescriptor double_flip(const ScanContextDescriptor& cc) {
  if (cc.kind() != CoordKind::Cartesian)
    throw KindError("double_flip applies to cartesian descriptors only");
  return ScanContextDescriptor(ScanContextDescriptor::unchecked_t{},
                               cc.matrix().reverse(), cc.params(),
                               AugmentationTag::double_flipped());
}

std::vector<PointCloud> root_shift_clouds(const PointCloud& cloud,
                                          std::span<const double> lateral_offsets) {
  for (double d : lateral_offsets)
    if (!std::isfinite(d)) throw InvalidParam("root shift offset must be finite");
  std::vector<PointCloud> out;
  out.reserve(lateral_offsets.size());
  for (double d : lateral_offsets)
    out.push_back(transform(cloud, RigidTransform::translate(0.0, -d, 0.0)));
  return out;
}

void ScanContextDescriptor::write_csv(std::ostream& out) const {
  const auto old_precision = out.precision(17);
  for (int i = 0; i < matrix_.rows(); ++i) {
    for (int j = 0; j < matrix_.cols(); ++j) {
      if (j) out << ',';
      out << matrix_(i, j);
    }
    out << '\n';
  }
  out.precision(old_precision);
}

void ScanContextDescriptor::write_binary(std::ostream& out) const {
  write_u32(out, static_cast<std::uint32_t>(params_.n_r));
  write_u32(out, static_cast<std::uint32_t>(params_.n_a));
  out.put(static_cast<char>(params_.kind));
  out.put(static_cast<char>(tag_.kind));
  write_f32(out, static_cast<float>(tag_.lateral_m));
  for (int i = 0; i < matrix_.rows(); ++i)
    for (int j = 0; j < matrix_.cols(); ++j)
      write_f32(out, static_cast<float>(matrix_(i, j)));
}

ScanContextDescriptor ScanContextDescriptor::read_binary(
    std::istream& in, const DescriptorParams& params) {
  const std::uint32_t n_r = read_u32(in);
  const std::uint32_t n_a = read_u32(in);
  const std::uint8_t kind = read_u8(in);
  const std::uint8_t tag_kind = read_u8(in);
  const float offset = read_f32(in);

  if (kind > 1) throw FormatError("descriptor record: bad kind byte");
  if (tag_kind > 2) throw FormatError("descriptor record: bad tag byte");
  if (static_cast<CoordKind>(kind) != params.kind ||
      static_cast<int>(n_r) != params.n_r || static_cast<int>(n_a) != params.n_a)
    throw FormatError("descriptor record does not match expected params");

  Eigen::MatrixXd m(params.n_r, params.n_a);
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      const float v = read_f32(in);
      if (!std::isfinite(v) || v < 0.0f)
        throw FormatError("descriptor record: invalid bin value");
      m(i, j) = v;
    }
  AugmentationTag tag{static_cast<AugmentationTag::Kind>(tag_kind),
                      static_cast<double>(offset)};
  return ScanContextDescriptor(unchecked_t{}, std::move(m), params, tag);
}

}  // namespace sc
