#include "sc/database.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <utility>

#include "sc/error.hpp"

namespace sc {

namespace {

constexpr char kMagic[4] = {'S', 'C', 'D', 'B'};
constexpr std::uint32_t kVersion = 1;

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

void write_u8(std::ostream& out, std::uint8_t v) {
  out.put(static_cast<char>(v));
}

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  write_u32(out, static_cast<std::uint32_t>(v));
  write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void write_f64(std::ostream& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::uint8_t read_u8(std::istream& in) {
  char c;
  in.read(&c, 1);
  if (!in) throw VersionError("truncated database file");
  return static_cast<std::uint8_t>(c);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw VersionError("truncated database file");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 |
         static_cast<std::uint32_t>(b[3]) << 24;
}

std::uint64_t read_u64(std::istream& in) {
  const std::uint64_t lo = read_u32(in);
  const std::uint64_t hi = read_u32(in);
  return lo | hi << 32;
}

double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

void write_config(std::ostream& out, const DatabaseConfig& c) {
  write_u8(out, static_cast<std::uint8_t>(c.params.kind));
  write_f64(out, c.params.r_min);
  write_f64(out, c.params.r_max);
  write_f64(out, c.params.a_min);
  write_f64(out, c.params.a_max);
  write_u32(out, static_cast<std::uint32_t>(c.params.n_r));
  write_u32(out, static_cast<std::uint32_t>(c.params.n_a));
  write_f64(out, c.params.height_offset);
  write_u32(out, static_cast<std::uint32_t>(c.k));
  write_f64(out, c.tau);
  write_u64(out, static_cast<std::uint64_t>(c.exclusion_window));
  write_u8(out, static_cast<std::uint8_t>(c.augmentation));
  write_u32(out, static_cast<std::uint32_t>(c.rebuild_every));
  write_u32(out, static_cast<std::uint32_t>(c.half_width));
  write_f64(out, c.downsample_leaf);
}

DatabaseConfig read_config(std::istream& in) {
  DatabaseConfig c;
  const std::uint8_t kind = read_u8(in);
  if (kind > 1) throw VersionError("database config carries an unknown descriptor kind");
  c.params.kind = static_cast<CoordKind>(kind);
  c.params.r_min = read_f64(in);
  c.params.r_max = read_f64(in);
  c.params.a_min = read_f64(in);
  c.params.a_max = read_f64(in);
  c.params.n_r = static_cast<int>(read_u32(in));
  c.params.n_a = static_cast<int>(read_u32(in));
  c.params.height_offset = read_f64(in);
  c.k = static_cast<int>(read_u32(in));
  c.tau = read_f64(in);
  c.exclusion_window = static_cast<std::int64_t>(read_u64(in));
  const std::uint8_t aug = read_u8(in);
  if (aug > 2) throw VersionError("database config carries an unknown augmentation");
  c.augmentation = static_cast<Augmentation>(aug);
  c.rebuild_every = static_cast<int>(read_u32(in));
  c.half_width = static_cast<int>(read_u32(in));
  c.downsample_leaf = read_f64(in);
  return c;
}

}  // namespace

void DatabaseConfig::validate() const {
  params.validate();
  if (k < 1) throw InvalidParam("candidate count k must be >= 1");
  if (!(tau >= 0.0 && tau <= 1.0))
    throw InvalidParam("acceptance threshold tau must lie in [0, 1]");
  if (exclusion_window < 0)
    throw InvalidParam("exclusion window must be >= 0");
  if (rebuild_every < 1)
    throw InvalidParam("rebuild interval must be >= 1");
  if (half_width < 0 || half_width > params.n_a / 2)
    throw InvalidParam("half_width must lie in [0, n_a/2]");
  if (!std::isfinite(downsample_leaf) || downsample_leaf < 0.0)
    throw InvalidParam("voxel leaf must be >= 0 (0 disables downsampling)");
  if (augmentation == Augmentation::RootShiftPC && params.kind != CoordKind::Polar)
    throw InvalidParam("root-shift augmentation requires a polar descriptor");
  if (augmentation == Augmentation::DoubleFlipCC &&
      params.kind != CoordKind::Cartesian)
    throw InvalidParam("double-flip augmentation requires a cartesian descriptor");
}

PlaceDatabase::PlaceDatabase(DatabaseConfig config) : config_(std::move(config)) {
  config_.validate();
}

PlaceDatabase::PlaceDatabase(Loaded&& loaded)
    : config_(std::move(loaded.config)), entries_(std::move(loaded.entries)) {
  config_.validate();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (i == 0 || entries_[i].place_id != entries_[i - 1].place_id) ++place_count_;
  }
  if (!entries_.empty()) {
    last_place_id_ = entries_.back().place_id;
    has_places_ = true;
  }
  rebuild_index();
}

std::size_t PlaceDatabase::entry_count() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::size_t PlaceDatabase::place_count() const {
  std::shared_lock lock(mutex_);
  return place_count_;
}

std::vector<PlaceEntry> PlaceDatabase::make_entries(const PointCloud& cloud,
                                                    std::int64_t place_id,
                                                    const DatabaseConfig& config) {
  config.validate();
  const PointCloud processed = config.downsample_leaf > 0.0
                                   ? voxel_downsample(cloud, config.downsample_leaf)
                                   : cloud;
  std::vector<PlaceEntry> out;
  auto append = [&](ScanContextDescriptor desc) {
    RetrievalKey rk = retrieval_key(desc);
    AligningKey ak = aligning_key(desc);
    out.push_back(PlaceEntry{place_id, std::move(desc), std::move(rk), std::move(ak)});
  };
  ScanContextDescriptor original = make_descriptor(processed, config.params);
  switch (config.augmentation) {
    case Augmentation::None:
      append(std::move(original));
      break;
    case Augmentation::RootShiftPC: {
      append(original);
      // Offsets are lane-width multiples of the default voxel leaf, so
      // shifting after downsampling matches shifting the raw scan.
      auto shifted = root_shift_clouds(processed, kDefaultRootShiftOffsets);
      for (std::size_t i = 0; i < shifted.size(); ++i) {
        ScanContextDescriptor desc = make_descriptor(shifted[i], config.params);
        append(ScanContextDescriptor(desc.matrix(), config.params,
                                     AugmentationTag::root_shift(
                                         kDefaultRootShiftOffsets[i])));
      }
      break;
    }
    case Augmentation::DoubleFlipCC: {
      ScanContextDescriptor flipped = double_flip(original);
      append(std::move(original));
      append(std::move(flipped));
      break;
    }
  }
  return out;
}

void PlaceDatabase::add_entries(std::vector<PlaceEntry> entries) {
  if (entries.empty()) throw InvalidParam("add_entries needs at least one entry");
  const std::int64_t id = entries.front().place_id;
  for (const PlaceEntry& e : entries)
    if (e.place_id != id)
      throw InvalidParam("add_entries expects one place per call");
  std::unique_lock lock(mutex_);
  if (has_places_ && id <= last_place_id_)
    throw OrderError("place id " + std::to_string(id) +
                     " does not exceed the last added id " +
                     std::to_string(last_place_id_));
  for (PlaceEntry& e : entries) entries_.push_back(std::move(e));
  last_place_id_ = id;
  has_places_ = true;
  ++place_count_;
  if (++places_since_rebuild_ >= static_cast<std::size_t>(config_.rebuild_every))
    rebuild_locked();
}

void PlaceDatabase::add_place(const PointCloud& cloud, std::int64_t place_id) {
  add_entries(make_entries(cloud, place_id, config_));
}

void PlaceDatabase::rebuild_index() {
  std::unique_lock lock(mutex_);
  rebuild_locked();
}

void PlaceDatabase::rebuild_locked() {
  std::vector<Eigen::VectorXd> keys;
  keys.reserve(entries_.size());
  for (const PlaceEntry& e : entries_) keys.push_back(e.retrieval_key.values);
  index_ = KdTree(std::move(keys));
  indexed_count_ = entries_.size();
  places_since_rebuild_ = 0;
}

std::optional<MatchResult> PlaceDatabase::query_best(const PointCloud& cloud,
                                                     std::int64_t query_id,
                                                     StageTiming* timing) const {
  const auto t0 = Clock::now();
  const PointCloud processed =
      config_.downsample_leaf > 0.0 ? voxel_downsample(cloud, config_.downsample_leaf)
                                    : cloud;
  const ScanContextDescriptor desc = make_descriptor(processed, config_.params);
  const RetrievalKey key = retrieval_key(desc);
  if (timing) timing->describe_ms = ms_between(t0, Clock::now());
  return query_descriptor(desc, key, query_id, timing);
}

std::optional<MatchResult> PlaceDatabase::query(const PointCloud& cloud,
                                                std::int64_t query_id) const {
  std::optional<MatchResult> best = query_best(cloud, query_id);
  if (!best || !(best->distance < config_.tau)) return std::nullopt;
  return best;
}

std::optional<MatchResult> PlaceDatabase::query_descriptor(
    const ScanContextDescriptor& query, const RetrievalKey& key,
    std::int64_t query_id, StageTiming* timing) const {
  std::shared_lock lock(mutex_);
  if (entries_.empty()) throw EmptyDatabaseError("query on an empty database");

  const auto t1 = Clock::now();
  const auto admissible = [&](std::size_t idx) {
    const std::int64_t d = query_id - entries_[idx].place_id;
    return (d < 0 ? -d : d) > config_.exclusion_window;
  };
  const std::size_t k = static_cast<std::size_t>(config_.k);
  std::vector<KdTree::Neighbor> found =
      index_.knn(key.values, k, admissible);
  for (std::size_t idx = indexed_count_; idx < entries_.size(); ++idx) {
    if (!admissible(idx)) continue;
    const double d = (entries_[idx].retrieval_key.values - key.values).squaredNorm();
    found.push_back(KdTree::Neighbor{idx, d});
  }
  std::sort(found.begin(), found.end(),
            [](const KdTree::Neighbor& a, const KdTree::Neighbor& b) {
              if (a.dist_sq != b.dist_sq) return a.dist_sq < b.dist_sq;
              return a.index < b.index;
            });
  if (found.size() > k) found.resize(k);
  if (timing) timing->tree_ms = ms_between(t1, Clock::now());
  if (found.empty()) return std::nullopt;

  const auto t2 = Clock::now();
  MatchResult result;
  result.candidates.reserve(found.size());
  bool have_best = false;
  AlignedDistance best{};
  std::size_t best_idx = 0;
  for (const KdTree::Neighbor& nb : found) {
    const PlaceEntry& entry = entries_[nb.index];
    result.candidates.push_back(
        CandidateInfo{entry.place_id, std::sqrt(nb.dist_sq), nb.index});
    const AlignedDistance aligned =
        fast_align(query, entry.descriptor, config_.half_width);
    if (!have_best || aligned.distance < best.distance) {
      have_best = true;
      best = aligned;
      best_idx = nb.index;
    }
  }
  const PlaceEntry& matched = entries_[best_idx];
  result.place_id = matched.place_id;
  result.distance = best.distance;
  result.shift = best.shift;
  result.pose = shift_to_pose(best.shift, config_.params);
  // A double-flipped entry renders the place from a reversed heading; its +y
  // is the original frame's -y, so the lateral estimate flips sign.
  if (matched.descriptor.tag().kind == AugmentationTag::Kind::DoubleFlip)
    result.pose.value = -result.pose.value;
  result.matched_tag = matched.descriptor.tag();
  if (timing) timing->align_ms = ms_between(t2, Clock::now());
  return result;
}

void PlaceDatabase::save(const std::string& path) const {
  std::shared_lock lock(mutex_);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_config(out, config_);
  write_u64(out, entries_.size());
  for (const PlaceEntry& e : entries_) {
    write_u64(out, static_cast<std::uint64_t>(e.place_id));
    e.descriptor.write_binary(out);
  }
  out.flush();
  if (!out) throw IoError("failed while writing " + path);
}

PlaceDatabase::Loaded PlaceDatabase::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in) throw VersionError("truncated database file");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw VersionError(path + " is not a place database file");
  const std::uint32_t version = read_u32(in);
  if (version != kVersion)
    throw VersionError("unsupported database version " + std::to_string(version));
  Loaded loaded;
  loaded.config = read_config(in);
  loaded.config.validate();
  const std::uint64_t count = read_u64(in);
  loaded.entries.reserve(count < 1024 ? count : 1024);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto place_id = static_cast<std::int64_t>(read_u64(in));
    ScanContextDescriptor desc =
        ScanContextDescriptor::read_binary(in, loaded.config.params);
    RetrievalKey rk = retrieval_key(desc);
    AligningKey ak = aligning_key(desc);
    loaded.entries.push_back(
        PlaceEntry{place_id, std::move(desc), std::move(rk), std::move(ak)});
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError(path + " has trailing bytes after the database payload");
  return loaded;
}

PlaceDatabase PlaceDatabase::load(const std::string& path) {
  return PlaceDatabase(parse_file(path));
}

}  // namespace sc
