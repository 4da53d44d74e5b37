#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sc/database.hpp"

namespace sc {

struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double timestamp = 0.0;  // sequence ordinal when the source carries no clock
};

/// A query together with its nearest true-revisit node (ground truth) or its
/// detected match, expressed as non-negative pose offsets.
struct RevisitEvent {
  std::int64_t query_id = 0;
  std::int64_t nearest_map_id = 0;
  double translational_m = 0.0;
  double rotational_deg = 0.0;  // |relative yaw|, in [0, 180]
};

struct EvalRow {
  double tau = 0.0;
  double precision = 1.0;
  double recall = 0.0;
  double f1 = 0.0;
  double kld = 0.0;  // KL(ground truth || detected) at this threshold
};

struct EvalCurve {
  std::vector<EvalRow> rows;
};

/// Normalized 2D histogram over (translational, rotational) offsets.
/// mass(i, j) covers [i*cell_m, (i+1)*cell_m) x [j*cell_deg, (j+1)*cell_deg);
/// total mass is 1, or a 0x0 matrix when built from no events.
struct Histogram2D {
  double cell_m = 0.5;
  double cell_deg = 10.0;
  Eigen::MatrixXd mass;
};

/// Ungated best match of one query: distance +inf / matched_id -1 when no
/// admissible candidate existed.
struct QueryRecord {
  std::int64_t query_id = 0;
  double distance = std::numeric_limits<double>::infinity();
  std::int64_t matched_id = -1;
};

/// Row-major 3x4 rigid poses, 12 floats per whitespace-separated line.
/// Throws IoError (unopenable) or ParseError with the 1-based line number.
std::vector<Pose> load_kitti_poses(const std::string& path);

/// Greedy arc-length subsampling: index 0, then every index at which the
/// cumulative travel distance since the last kept one reaches spacing.
std::vector<std::size_t> equidistant_sample(const std::vector<Pose>& poses,
                                            double spacing = 1.0);

/// True revisit: translation distance < radius and id separation > window.
/// Throws RangeError on ids outside the pose list.
bool is_revisit(const std::vector<Pose>& poses, std::int64_t query_id,
                std::int64_t map_id, double radius = 8.0,
                std::int64_t window = 50);

/// Yaw of b relative to a, ccw-positive degrees in (-180, 180].
double relative_yaw_deg(const Pose& a, const Pose& b);

/// Threshold sweep over per-query best matches. Per tau: a query is accepted
/// when distance < tau; TP if the match is a true revisit, FP otherwise; FN
/// when not accepted but a true revisit exists among the query's admissible
/// past nodes. Precision defaults to 1 with no acceptances; recall to 0 with
/// no positives. The kld column compares the detected offset distribution at
/// each tau against the ground-truth one (0 when there is no ground truth).
EvalCurve pr_curve(const std::vector<QueryRecord>& results,
                   const std::vector<Pose>& poses,
                   const std::vector<double>& taus, double radius = 8.0,
                   std::int64_t window = 50, double cell_m = 0.5,
                   double cell_deg = 10.0);

Histogram2D recall_histogram(const std::vector<RevisitEvent>& events,
                             double cell_m = 0.5, double cell_deg = 10.0);

/// KL(p_ref || q) with additive smoothing 1e-9 per cell and renormalization,
/// over the union extent of both histograms (missing cells count as zero
/// mass). Throws ShapeError when the cell sizes differ.
double kl_divergence(const Histogram2D& p_ref, const Histogram2D& q);

/// Step integral of precision over recall along the sweep (average
/// precision); rows must be in sweep order.
double curve_auc(const EvalCurve& curve);

struct BenchmarkConfig {
  DatabaseConfig db;
  double spacing = 1.0;  // equidistant sampling step, meters
  double radius = 8.0;   // revisit radius, meters
  double tau_min = 0.0;
  double tau_max = 1.0;
  int tau_steps = 100;
  /// <0: online, every sampled node queries then inserts. >=0: sampled
  /// ordinals below the split only insert (map session), the rest only query.
  std::int64_t split_index = -1;
  double hist_cell_m = 0.5;
  double hist_cell_deg = 10.0;

  void validate() const;
};

struct MatchRow {
  std::int64_t query_id = 0;
  std::int64_t match_id = -1;
  double distance = std::numeric_limits<double>::infinity();
  int shift = -1;
  double pose_value = 0.0;  // degrees (polar) or meters (cartesian)
  bool correct = false;
};

struct TimingRow {
  std::int64_t query_id = 0;
  double describe_ms = 0.0;
  double tree_ms = 0.0;
  double align_ms = 0.0;
  double total_ms = 0.0;
};

struct Report {
  CoordKind kind = CoordKind::Polar;
  EvalCurve curve;
  double auc = 0.0;
  double max_f1 = 0.0;
  double max_f1_tau = 0.0;
  double mean_query_ms = 0.0;
  double max_query_ms = 0.0;
  double mean_describe_ms = 0.0;
  double mean_tree_ms = 0.0;
  double mean_align_ms = 0.0;
  /// Mean |estimate - truth| over true-positive matches at the max-F1
  /// threshold; degrees for polar, meters for cartesian.
  double pose_error_mean = 0.0;
  std::int64_t pose_error_count = 0;
  std::size_t sampled_count = 0;
  std::size_t query_count = 0;
  std::size_t place_count = 0;
  std::size_t entry_count = 0;
  std::vector<QueryRecord> records;
  std::vector<MatchRow> matches;
  std::vector<TimingRow> timing;
};

/// Scan files (*.bin KITTI velodyne or *.csv) in lexicographic filename
/// order. Throws IoError when the directory cannot be read.
std::vector<std::string> list_scan_files(const std::string& dir);

/// Loads one scan by extension (.bin or .csv).
PointCloud load_scan(const std::string& path);

/// Streams the scan sequence through a fresh database in sampled order and
/// sweeps the acceptance threshold. Scan count must equal pose count
/// (AlignmentError otherwise).
Report run_benchmark(const std::string& scan_dir, const std::string& pose_file,
                     const BenchmarkConfig& config);

/// Writes pr_curve.csv, matches.csv, timing.csv and report.json into out_dir
/// (created if missing).
void write_report_files(const Report& report, const std::string& out_dir);

}  // namespace sc
