#pragma once

#include <cstdint>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "sc/descriptor.hpp"
#include "sc/distance.hpp"
#include "sc/kdtree.hpp"
#include "sc/pointcloud.hpp"

namespace sc {

enum class Augmentation : std::uint8_t {
  None = 0,
  RootShiftPC = 1,  // polar only: extra entries from +-2 m lateral root shifts
  DoubleFlipCC = 2,  // cartesian only: one extra entry, descriptor flipped 180 deg
};

struct DatabaseConfig {
  DescriptorParams params = DescriptorParams::defaults(CoordKind::Polar);
  int k = 1;                       // tree candidates per query
  double tau = 0.15;               // acceptance threshold on the descriptor distance
  std::int64_t exclusion_window = 50;  // skip entries with |query_id - place_id| <= this
  Augmentation augmentation = Augmentation::None;
  int rebuild_every = 10;          // add_place calls between index rebuilds
  int half_width = 0;              // search half-width around the pre-aligned shift
  double downsample_leaf = 0.5;    // voxel leaf in meters; 0 disables downsampling

  /// Throws InvalidParam on out-of-range fields or an augmentation that does
  /// not match the descriptor kind.
  void validate() const;

  bool operator==(const DatabaseConfig&) const = default;
};

struct PlaceEntry {
  std::int64_t place_id = 0;  // augmented entries share their original's id
  ScanContextDescriptor descriptor;
  RetrievalKey retrieval_key;
  AligningKey aligning_key;
};

/// One tree candidate, kept for diagnostics.
struct CandidateInfo {
  std::int64_t place_id = 0;
  double key_distance = 0.0;  // Euclidean distance between retrieval keys
  std::size_t entry_index = 0;
};

struct MatchResult {
  std::int64_t place_id = 0;
  double distance = 1.0;
  int shift = 0;
  SemiMetricPose pose;
  /// Tag of the matched entry. A RootShift tag reports the known lateral
  /// offset of the virtual viewpoint; a DoubleFlip tag means the match is
  /// against the reversed-heading rendering (pose already re-expressed in the
  /// original place's frame).
  AugmentationTag matched_tag;
  std::vector<CandidateInfo> candidates;
};

/// Wall-clock breakdown of one query, milliseconds.
struct StageTiming {
  double describe_ms = 0.0;
  double tree_ms = 0.0;
  double align_ms = 0.0;
  double total_ms() const { return describe_ms + tree_ms + align_ms; }
};

/// Append-only place database with a k-d tree over retrieval keys.
///
/// Entries added since the last rebuild sit in a pending span that queries
/// scan linearly, so no place is ever invisible. Writers (add_place,
/// add_entries, rebuild_index) are exclusive; query/query_best/save take a
/// shared lock and may run concurrently.
class PlaceDatabase {
 public:
  explicit PlaceDatabase(DatabaseConfig config);

  const DatabaseConfig& config() const { return config_; }

  /// Total entries including augmented ones.
  std::size_t entry_count() const;
  /// Number of add_place/add_entries calls, i.e. original places.
  std::size_t place_count() const;

  /// Descriptor + keys for one place, including configured augmentations.
  /// Pure; safe to fan out across threads before add_entries.
  static std::vector<PlaceEntry> make_entries(const PointCloud& cloud,
                                              std::int64_t place_id,
                                              const DatabaseConfig& config);

  /// Appends the entries of one place. Throws OrderError unless place_id
  /// exceeds the last added id. Triggers a rebuild every rebuild_every calls.
  void add_entries(std::vector<PlaceEntry> entries);

  void add_place(const PointCloud& cloud, std::int64_t place_id);

  /// Rebuilds the k-d tree over all entries and empties the pending span.
  void rebuild_index();

  /// Best admissible match regardless of the acceptance threshold; nullopt
  /// when every entry is excluded by the window. Throws EmptyDatabaseError on
  /// an empty database. Optionally reports per-stage timing.
  std::optional<MatchResult> query_best(const PointCloud& cloud,
                                        std::int64_t query_id,
                                        StageTiming* timing = nullptr) const;

  /// query_best gated by the acceptance threshold: distance < tau.
  std::optional<MatchResult> query(const PointCloud& cloud,
                                   std::int64_t query_id) const;

  void save(const std::string& path) const;
  static PlaceDatabase load(const std::string& path);

 private:
  struct Loaded {
    DatabaseConfig config;
    std::vector<PlaceEntry> entries;
  };
  explicit PlaceDatabase(Loaded&& loaded);
  static Loaded parse_file(const std::string& path);

  void rebuild_locked();  // callers hold the write lock
  std::optional<MatchResult> query_descriptor(const ScanContextDescriptor& query,
                                              const RetrievalKey& key,
                                              std::int64_t query_id,
                                              StageTiming* timing) const;

  DatabaseConfig config_;
  std::vector<PlaceEntry> entries_;
  KdTree index_;                    // covers entries_[0..indexed_count_)
  std::size_t indexed_count_ = 0;
  std::size_t places_since_rebuild_ = 0;
  std::size_t place_count_ = 0;
  std::int64_t last_place_id_ = 0;
  bool has_places_ = false;
  mutable std::shared_mutex mutex_;
};

}  // namespace sc
