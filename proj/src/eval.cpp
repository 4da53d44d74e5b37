#include "sc/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <system_error>
#include <utility>

#include <json.hpp>

#include "sc/error.hpp"

namespace fs = std::filesystem;

namespace sc {

namespace {

constexpr double kDegPerRad = 180.0 / std::numbers::pi;

double wrap_deg(double deg) {
  deg = std::fmod(deg, 360.0);
  if (deg > 180.0) deg -= 360.0;
  if (deg <= -180.0) deg += 360.0;
  return deg;
}

// Shortest round-trip decimal, so CSV output is byte-stable across runs.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<double> linspace(double lo, double hi, int steps) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(steps));
  if (steps == 1) {
    out.push_back(lo);
    return out;
  }
  for (int s = 0; s < steps; ++s)
    out.push_back(lo + (hi - lo) * s / (steps - 1));
  return out;
}

double pose_distance(const Pose& a, const Pose& b) {
  return (a.translation - b.translation).norm();
}

struct QueryTruth {
  bool has_revisit = false;
  std::int64_t nearest_id = -1;
  double trans_m = 0.0;
  double rot_deg = 0.0;
  bool match_correct = false;
  double match_trans_m = 0.0;
  double match_rot_deg = 0.0;
};

}  // namespace

std::vector<Pose> load_kitti_poses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Pose> poses;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream ss(line);
    double v[12];
    for (double& x : v) {
      if (!(ss >> x))
        throw ParseError("expected 12 pose values per line", line_no);
    }
    std::string rest;
    if (ss >> rest)
      throw ParseError("expected 12 pose values per line", line_no);
    Pose p;
    p.rotation << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
    p.translation << v[3], v[7], v[11];
    p.timestamp = static_cast<double>(poses.size());
    poses.push_back(std::move(p));
  }
  return poses;
}

std::vector<std::size_t> equidistant_sample(const std::vector<Pose>& poses,
                                            double spacing) {
  if (!std::isfinite(spacing) || spacing <= 0.0)
    throw InvalidParam("sampling spacing must be > 0");
  std::vector<std::size_t> kept;
  if (poses.empty()) return kept;
  kept.push_back(0);
  double travelled = 0.0;
  for (std::size_t i = 1; i < poses.size(); ++i) {
    travelled += pose_distance(poses[i], poses[i - 1]);
    if (travelled >= spacing) {
      kept.push_back(i);
      travelled = 0.0;
    }
  }
  return kept;
}

bool is_revisit(const std::vector<Pose>& poses, std::int64_t query_id,
                std::int64_t map_id, double radius, std::int64_t window) {
  const auto n = static_cast<std::int64_t>(poses.size());
  if (query_id < 0 || query_id >= n || map_id < 0 || map_id >= n)
    throw RangeError("pose id outside the trajectory");
  const std::int64_t sep = query_id > map_id ? query_id - map_id : map_id - query_id;
  return pose_distance(poses[static_cast<std::size_t>(query_id)],
                       poses[static_cast<std::size_t>(map_id)]) < radius &&
         sep > window;
}

double relative_yaw_deg(const Pose& a, const Pose& b) {
  const Eigen::Matrix3d rel = a.rotation.transpose() * b.rotation;
  return wrap_deg(std::atan2(rel(1, 0), rel(0, 0)) * kDegPerRad);
}

EvalCurve pr_curve(const std::vector<QueryRecord>& results,
                   const std::vector<Pose>& poses,
                   const std::vector<double>& taus, double radius,
                   std::int64_t window, double cell_m, double cell_deg) {
  const auto n = static_cast<std::int64_t>(poses.size());
  for (const QueryRecord& r : results) {
    if (r.query_id < 0 || r.query_id >= n || r.matched_id < -1 || r.matched_id >= n)
      throw ShapeError("query record references a pose outside the trajectory");
  }

  std::vector<QueryTruth> truths(results.size());
  std::vector<RevisitEvent> gt_events;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const QueryRecord& r = results[i];
    QueryTruth& t = truths[i];
    const Pose& qp = poses[static_cast<std::size_t>(r.query_id)];
    // Online ground truth: only nodes already in the map when the query ran.
    double best = radius;
    for (std::int64_t j = 0; j < r.query_id - window; ++j) {
      const double d = pose_distance(qp, poses[static_cast<std::size_t>(j)]);
      if (d < best) {
        best = d;
        t.nearest_id = j;
      }
    }
    if (t.nearest_id >= 0) {
      t.has_revisit = true;
      t.trans_m = best;
      t.rot_deg = std::abs(
          relative_yaw_deg(poses[static_cast<std::size_t>(t.nearest_id)], qp));
      gt_events.push_back(RevisitEvent{r.query_id, t.nearest_id, t.trans_m, t.rot_deg});
    }
    if (r.matched_id >= 0 && is_revisit(poses, r.query_id, r.matched_id, radius, window)) {
      t.match_correct = true;
      const Pose& mp = poses[static_cast<std::size_t>(r.matched_id)];
      t.match_trans_m = pose_distance(qp, mp);
      t.match_rot_deg = std::abs(relative_yaw_deg(mp, qp));
    }
  }
  const Histogram2D gt_hist = recall_histogram(gt_events, cell_m, cell_deg);

  EvalCurve curve;
  curve.rows.reserve(taus.size());
  std::vector<RevisitEvent> detected;
  for (const double tau : taus) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    detected.clear();
    for (std::size_t i = 0; i < results.size(); ++i) {
      const QueryRecord& r = results[i];
      const QueryTruth& t = truths[i];
      if (r.distance < tau) {
        if (t.match_correct) {
          ++tp;
          detected.push_back(
              RevisitEvent{r.query_id, r.matched_id, t.match_trans_m, t.match_rot_deg});
        } else {
          ++fp;
        }
      } else if (t.has_revisit) {
        ++fn;
      }
    }
    EvalRow row;
    row.tau = tau;
    row.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
    row.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    row.f1 = row.precision + row.recall > 0.0
                 ? 2.0 * row.precision * row.recall / (row.precision + row.recall)
                 : 0.0;
    row.kld = gt_events.empty()
                  ? 0.0
                  : kl_divergence(gt_hist, recall_histogram(detected, cell_m, cell_deg));
    curve.rows.push_back(row);
  }
  return curve;
}

Histogram2D recall_histogram(const std::vector<RevisitEvent>& events,
                             double cell_m, double cell_deg) {
  if (!std::isfinite(cell_m) || cell_m <= 0.0 || !std::isfinite(cell_deg) ||
      cell_deg <= 0.0)
    throw InvalidParam("histogram cell sizes must be > 0");
  Histogram2D hist;
  hist.cell_m = cell_m;
  hist.cell_deg = cell_deg;
  hist.mass.resize(0, 0);
  if (events.empty()) return hist;
  Eigen::Index rows = 0, cols = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> bins;
  bins.reserve(events.size());
  for (const RevisitEvent& e : events) {
    if (!std::isfinite(e.translational_m) || e.translational_m < 0.0 ||
        !std::isfinite(e.rotational_deg) || e.rotational_deg < 0.0)
      throw InvalidParam("revisit offsets must be finite and non-negative");
    const auto r = static_cast<Eigen::Index>(e.translational_m / cell_m);
    const auto c = static_cast<Eigen::Index>(e.rotational_deg / cell_deg);
    rows = std::max(rows, r + 1);
    cols = std::max(cols, c + 1);
    bins.emplace_back(r, c);
  }
  hist.mass = Eigen::MatrixXd::Zero(rows, cols);
  const double share = 1.0 / static_cast<double>(bins.size());
  for (const auto& [r, c] : bins) hist.mass(r, c) += share;
  return hist;
}

double kl_divergence(const Histogram2D& p_ref, const Histogram2D& q) {
  if (p_ref.cell_m != q.cell_m || p_ref.cell_deg != q.cell_deg)
    throw ShapeError("histogram grids differ");
  const Eigen::Index rows = std::max(p_ref.mass.rows(), q.mass.rows());
  const Eigen::Index cols = std::max(p_ref.mass.cols(), q.mass.cols());
  if (rows == 0 || cols == 0) return 0.0;
  constexpr double kEps = 1e-9;
  const auto cell = [](const Histogram2D& h, Eigen::Index i, Eigen::Index j) {
    return i < h.mass.rows() && j < h.mass.cols() ? h.mass(i, j) : 0.0;
  };
  const double denom_p =
      p_ref.mass.sum() + kEps * static_cast<double>(rows * cols);
  const double denom_q = q.mass.sum() + kEps * static_cast<double>(rows * cols);
  double kl = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double pv = (cell(p_ref, i, j) + kEps) / denom_p;
      const double qv = (cell(q, i, j) + kEps) / denom_q;
      kl += pv * std::log(pv / qv);
    }
  }
  return kl > 0.0 ? kl : 0.0;
}

double curve_auc(const EvalCurve& curve) {
  double auc = 0.0;
  double prev_recall = 0.0;
  for (const EvalRow& row : curve.rows) {
    if (row.recall > prev_recall) {
      auc += (row.recall - prev_recall) * row.precision;
      prev_recall = row.recall;
    }
  }
  return auc;
}

void BenchmarkConfig::validate() const {
  db.validate();
  if (!std::isfinite(spacing) || spacing <= 0.0)
    throw InvalidParam("sampling spacing must be > 0");
  if (!std::isfinite(radius) || radius <= 0.0)
    throw InvalidParam("revisit radius must be > 0");
  if (tau_steps < 1) throw InvalidParam("tau sweep needs at least one step");
  if (!std::isfinite(tau_min) || !std::isfinite(tau_max) || tau_max < tau_min)
    throw InvalidParam("tau sweep range is inverted");
  if (!std::isfinite(hist_cell_m) || hist_cell_m <= 0.0 ||
      !std::isfinite(hist_cell_deg) || hist_cell_deg <= 0.0)
    throw InvalidParam("histogram cell sizes must be > 0");
}

std::vector<std::string> list_scan_files(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec) || ec)
    throw IoError(dir + " is not a readable directory");
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".bin" || ext == ".csv") out.push_back(entry.path().string());
  }
  if (ec) throw IoError("failed reading directory " + dir);
  std::sort(out.begin(), out.end());
  return out;
}

PointCloud load_scan(const std::string& path) {
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".bin") return load_kitti_bin(path);
  if (ext == ".csv") return load_csv(path);
  throw FormatError(path + ": unsupported scan extension (expected .bin or .csv)");
}

Report run_benchmark(const std::string& scan_dir, const std::string& pose_file,
                     const BenchmarkConfig& config) {
  config.validate();
  const std::vector<Pose> all_poses = load_kitti_poses(pose_file);
  const std::vector<std::string> scans = list_scan_files(scan_dir);
  if (scans.size() != all_poses.size())
    throw AlignmentError("scan count " + std::to_string(scans.size()) +
                         " does not match pose count " +
                         std::to_string(all_poses.size()));

  const std::vector<std::size_t> sample = equidistant_sample(all_poses, config.spacing);
  std::vector<Pose> poses;
  poses.reserve(sample.size());
  for (const std::size_t idx : sample) poses.push_back(all_poses[idx]);

  PlaceDatabase db(config.db);
  Report report;
  report.kind = config.db.params.kind;
  report.sampled_count = sample.size();

  for (std::int64_t i = 0; i < static_cast<std::int64_t>(sample.size()); ++i) {
    const PointCloud cloud = load_scan(scans[sample[static_cast<std::size_t>(i)]]);
    const bool do_query = config.split_index < 0 || i >= config.split_index;
    const bool do_add = config.split_index < 0 || i < config.split_index;
    if (do_query) {
      StageTiming t{};
      std::optional<MatchResult> r;
      try {
        r = db.query_best(cloud, i, &t);
      } catch (const EmptyDatabaseError&) {
        // First query of an online run has nothing to match against.
      }
      QueryRecord rec;
      rec.query_id = i;
      MatchRow row;
      row.query_id = i;
      if (r) {
        rec.distance = r->distance;
        rec.matched_id = r->place_id;
        row.match_id = r->place_id;
        row.distance = r->distance;
        row.shift = r->shift;
        row.pose_value = r->pose.value;
        row.correct = is_revisit(poses, i, r->place_id, config.radius,
                                 config.db.exclusion_window);
      }
      report.records.push_back(rec);
      report.matches.push_back(row);
      report.timing.push_back(
          TimingRow{i, t.describe_ms, t.tree_ms, t.align_ms, t.total_ms()});
    }
    if (do_add) db.add_place(cloud, i);
  }

  report.query_count = report.records.size();
  report.place_count = db.place_count();
  report.entry_count = db.entry_count();

  const std::vector<double> taus = linspace(config.tau_min, config.tau_max, config.tau_steps);
  report.curve = pr_curve(report.records, poses, taus, config.radius,
                          config.db.exclusion_window, config.hist_cell_m,
                          config.hist_cell_deg);
  report.auc = curve_auc(report.curve);
  for (const EvalRow& row : report.curve.rows) {
    if (row.f1 > report.max_f1) {
      report.max_f1 = row.f1;
      report.max_f1_tau = row.tau;
    }
  }

  for (const TimingRow& t : report.timing) {
    report.mean_describe_ms += t.describe_ms;
    report.mean_tree_ms += t.tree_ms;
    report.mean_align_ms += t.align_ms;
    report.mean_query_ms += t.total_ms;
    report.max_query_ms = std::max(report.max_query_ms, t.total_ms);
  }
  if (!report.timing.empty()) {
    const auto q = static_cast<double>(report.timing.size());
    report.mean_describe_ms /= q;
    report.mean_tree_ms /= q;
    report.mean_align_ms /= q;
    report.mean_query_ms /= q;
  }

  // Pose accuracy over the true positives at the operating point.
  double err_sum = 0.0;
  for (const MatchRow& m : report.matches) {
    if (!m.correct || !(m.distance < report.max_f1_tau)) continue;
    const Pose& qp = poses[static_cast<std::size_t>(m.query_id)];
    const Pose& mp = poses[static_cast<std::size_t>(m.match_id)];
    double err;
    if (report.kind == CoordKind::Polar) {
      err = std::abs(wrap_deg(m.pose_value - relative_yaw_deg(mp, qp)));
    } else {
      const double actual = (mp.rotation.transpose() * (qp.translation - mp.translation)).y();
      err = std::abs(m.pose_value - actual);
    }
    err_sum += err;
    ++report.pose_error_count;
  }
  if (report.pose_error_count > 0)
    report.pose_error_mean = err_sum / static_cast<double>(report.pose_error_count);
  return report;
}

void write_report_files(const Report& report, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir);
  const auto open = [&](const char* name) {
    std::ofstream out(fs::path(out_dir) / name);
    if (!out) throw IoError(std::string("cannot open ") + name + " for writing");
    return out;
  };

  {
    std::ofstream out = open("pr_curve.csv");
    out << "tau,precision,recall,f1,kld\n";
    for (const EvalRow& r : report.curve.rows)
      out << fmt(r.tau) << ',' << fmt(r.precision) << ',' << fmt(r.recall) << ','
          << fmt(r.f1) << ',' << fmt(r.kld) << '\n';
    if (!out) throw IoError("failed while writing pr_curve.csv");
  }
  {
    std::ofstream out = open("matches.csv");
    out << "query_id,match_id,distance,shift,pose,correct\n";
    for (const MatchRow& m : report.matches)
      out << m.query_id << ',' << m.match_id << ',' << fmt(m.distance) << ','
          << m.shift << ',' << fmt(m.pose_value) << ',' << (m.correct ? 1 : 0)
          << '\n';
    if (!out) throw IoError("failed while writing matches.csv");
  }
  {
    std::ofstream out = open("timing.csv");
    out << "query_id,describe_ms,tree_ms,align_ms,total_ms\n";
    for (const TimingRow& t : report.timing)
      out << t.query_id << ',' << fmt(t.describe_ms) << ',' << fmt(t.tree_ms)
          << ',' << fmt(t.align_ms) << ',' << fmt(t.total_ms) << '\n';
    if (!out) throw IoError("failed while writing timing.csv");
  }
  {
    nlohmann::ordered_json j;
    j["auc"] = report.auc;
    j["max_f1"] = report.max_f1;
    j["max_f1_tau"] = report.max_f1_tau;
    j["mean_query_ms"] = report.mean_query_ms;
    j["max_query_ms"] = report.max_query_ms;
    j["mean_describe_ms"] = report.mean_describe_ms;
    j["mean_tree_ms"] = report.mean_tree_ms;
    j["mean_align_ms"] = report.mean_align_ms;
    j["pose_error_mean"] = report.pose_error_mean;
    j["pose_error_count"] = report.pose_error_count;
    j["pose_unit"] = report.kind == CoordKind::Polar ? "deg" : "m";
    j["sampled"] = report.sampled_count;
    j["queries"] = report.query_count;
    j["places"] = report.place_count;
    j["entries"] = report.entry_count;
    std::ofstream out = open("report.json");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed while writing report.json");
  }
}

}  // namespace sc
