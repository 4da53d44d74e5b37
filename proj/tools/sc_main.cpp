#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sc/database.hpp"
#include "sc/error.hpp"
#include "sc/eval.hpp"

namespace {

struct RunConfig {
  std::string kind = "polar";
  bool augment = false;
  sc::BenchmarkConfig bench;

  /// CLI11 validates flag values; this resolves the cross-field ones.
  void resolve() {
    // --height-offset already landed in params; keep it across the reset.
    const double height_offset = bench.db.params.height_offset;
    bench.db.params = sc::DescriptorParams::defaults(
        kind == "cart" ? sc::CoordKind::Cartesian : sc::CoordKind::Polar);
    bench.db.params.height_offset = height_offset;
    if (augment)
      bench.db.augmentation = kind == "cart" ? sc::Augmentation::DoubleFlipCC
                                             : sc::Augmentation::RootShiftPC;
    else
      bench.db.augmentation = sc::Augmentation::None;
  }
};

unsigned worker_count(std::size_t jobs) {
  unsigned workers = std::thread::hardware_concurrency();
  if (workers == 0) workers = 1;
  if (const char* env = std::getenv("SC_THREADS"); env && *env) {
    const long v = std::strtol(env, nullptr, 10);
    workers = v < 1 ? 1 : static_cast<unsigned>(v > 64 ? 64 : v);
  }
  if (workers > jobs) workers = static_cast<unsigned>(jobs);
  return workers == 0 ? 1 : workers;
}

int cmd_describe(const std::string& scan_path, const std::string& out_prefix,
                 const RunConfig& cfg) {
  const sc::PointCloud cloud = sc::load_scan(scan_path);
  const sc::PointCloud processed =
      cfg.bench.db.downsample_leaf > 0.0
          ? sc::voxel_downsample(cloud, cfg.bench.db.downsample_leaf)
          : cloud;
  const sc::ScanContextDescriptor desc =
      sc::make_descriptor(processed, cfg.bench.db.params);

  {
    std::ofstream out(out_prefix + ".csv");
    if (!out) throw sc::IoError("cannot open " + out_prefix + ".csv for writing");
    desc.write_csv(out);
  }
  {
    std::ofstream out(out_prefix + ".scd", std::ios::binary);
    if (!out) throw sc::IoError("cannot open " + out_prefix + ".scd for writing");
    desc.write_binary(out);
  }
  {
    std::ofstream out(out_prefix + ".keys.csv");
    if (!out)
      throw sc::IoError("cannot open " + out_prefix + ".keys.csv for writing");
    out.precision(17);
    const Eigen::VectorXd& rk = sc::retrieval_key(desc).values;
    const Eigen::VectorXd& ak = sc::aligning_key(desc).values;
    out << "retrieval";
    for (Eigen::Index i = 0; i < rk.size(); ++i) out << ',' << rk[i];
    out << "\naligning";
    for (Eigen::Index i = 0; i < ak.size(); ++i) out << ',' << ak[i];
    out << '\n';
  }
  std::cout << desc.rows() << "x" << desc.cols() << '\n';
  return 0;
}

int cmd_index(const std::string& scan_dir, const std::string& out_path,
              const RunConfig& cfg) {
  const std::vector<std::string> files = sc::list_scan_files(scan_dir);
  if (files.empty())
    throw sc::InvalidParam("no scan files (*.bin, *.csv) in " + scan_dir);

  sc::PlaceDatabase db(cfg.bench.db);
  const unsigned workers = worker_count(files.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < files.size(); ++i)
      db.add_place(sc::load_scan(files[i]), static_cast<std::int64_t>(i));
  } else {
    std::vector<std::vector<sc::PlaceEntry>> made(files.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= files.size()) return;
          try {
            made[i] = sc::PlaceDatabase::make_entries(
                sc::load_scan(files[i]), static_cast<std::int64_t>(i),
                cfg.bench.db);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            return;
          }
        }
      });
    }
    for (std::thread& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    for (std::size_t i = 0; i < files.size(); ++i)
      db.add_entries(std::move(made[i]));
  }
  db.rebuild_index();
  db.save(out_path);
  const std::size_t entries = db.entry_count();
  const std::size_t places = db.place_count();
  std::cout << "indexed " << places << " places into " << entries << " entries ("
            << entries - places << " augmented) -> " << out_path << '\n';
  return 0;
}

int cmd_query(const std::string& db_path, const std::string& scan_path,
              std::int64_t query_id, bool tau_overridden, double tau_flag) {
  const sc::PlaceDatabase db = sc::PlaceDatabase::load(db_path);
  const double tau = tau_overridden ? tau_flag : db.config().tau;
  const sc::PointCloud cloud = sc::load_scan(scan_path);
  const std::optional<sc::MatchResult> best = db.query_best(cloud, query_id);

  nlohmann::ordered_json j;
  j["matched"] = best.has_value() && best->distance < tau;
  const char* pose_key =
      db.config().params.kind == sc::CoordKind::Polar ? "pose_deg" : "pose_m";
  if (best) {
    j["place_id"] = best->place_id;
    j["distance"] = best->distance;
    j["shift"] = best->shift;
    j[pose_key] = best->pose.value;
    switch (best->matched_tag.kind) {
      case sc::AugmentationTag::Kind::Original:
        j["matched_tag"] = "original";
        break;
      case sc::AugmentationTag::Kind::RootShift:
        j["matched_tag"] = "root_shift";
        j["matched_tag_lateral_m"] = best->matched_tag.lateral_m;
        break;
      case sc::AugmentationTag::Kind::DoubleFlip:
        j["matched_tag"] = "double_flip";
        break;
    }
  } else {
    j["place_id"] = nullptr;
    j["distance"] = nullptr;
    j["shift"] = nullptr;
    j[pose_key] = nullptr;
  }
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_eval(const std::string& scan_dir, const std::string& pose_file,
             const std::string& out_dir, const RunConfig& cfg) {
  const sc::Report report = sc::run_benchmark(scan_dir, pose_file, cfg.bench);
  sc::write_report_files(report, out_dir);
  std::cout << "auc=" << report.auc << " max_f1=" << report.max_f1
            << " queries=" << report.query_count << " -> " << out_dir << '\n';
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"structural place recognition over range scans"};
  app.require_subcommand(1);

  RunConfig cfg;
  app.add_option("--kind", cfg.kind, "descriptor kind")
      ->check(CLI::IsMember({"polar", "cart"}))
      ->capture_default_str();
  app.add_flag("--augment,!--no-augment", cfg.augment,
               "index augmented entries (root shifts for polar, double flip "
               "for cart)");
  double tau = cfg.bench.db.tau;
  CLI::Option* tau_opt =
      app.add_option("--tau", tau, "acceptance threshold on descriptor distance")
          ->capture_default_str();
  app.add_option("--k", cfg.bench.db.k, "tree candidates per query")
      ->capture_default_str();
  app.add_option("--half-width", cfg.bench.db.half_width,
                 "column search half-width around the pre-aligned shift")
      ->capture_default_str();
  app.add_option("--exclude", cfg.bench.db.exclusion_window,
                 "exclusion window on |query_id - place_id|")
      ->capture_default_str();
  app.add_option("--rebuild-every", cfg.bench.db.rebuild_every,
                 "insertions between index rebuilds")
      ->capture_default_str();
  app.add_option("--leaf", cfg.bench.db.downsample_leaf,
                 "voxel downsampling leaf in meters (0 disables)")
      ->capture_default_str();
  app.add_option("--height-offset", cfg.bench.db.params.height_offset,
                 "height added to z before binning")
      ->capture_default_str();
  app.add_option("--spacing", cfg.bench.spacing,
                 "equidistant sampling step in meters")
      ->capture_default_str();
  app.add_option("--radius", cfg.bench.radius, "revisit radius in meters")
      ->capture_default_str();
  app.add_option("--tau-min", cfg.bench.tau_min, "threshold sweep start")
      ->capture_default_str();
  app.add_option("--tau-max", cfg.bench.tau_max, "threshold sweep end")
      ->capture_default_str();
  app.add_option("--tau-steps", cfg.bench.tau_steps, "threshold sweep rows")
      ->capture_default_str();
  app.add_option("--split", cfg.bench.split_index,
                 "multi-session split: sampled ordinals below this only build "
                 "the map (<0 runs online)")
      ->capture_default_str();
  app.set_config("--config", "", "flat key=value config file");

  auto* describe = app.add_subcommand("describe", "write descriptor and keys for one scan");
  std::string scan_path;
  std::string describe_out = "descriptor";
  describe->add_option("scan", scan_path, "scan file (.bin or .csv)")->required();
  describe->add_option("--out", describe_out, "output path prefix")
      ->capture_default_str();

  auto* index = app.add_subcommand("index", "build a place database from a scan directory");
  std::string scan_dir;
  std::string db_out;
  index->add_option("scan_dir", scan_dir, "directory of scans")->required();
  index->add_option("--out", db_out, "database output path")->required();

  auto* query = app.add_subcommand("query", "match one scan against a database");
  std::string db_path;
  std::string query_scan;
  std::int64_t query_id = 0;
  query->add_option("db", db_path, "database file")->required();
  query->add_option("scan", query_scan, "scan file")->required();
  CLI::Option* qid_opt = query->add_option(
      "--query-id", query_id,
      "id used against the exclusion window (default: far future)");

  auto* eval = app.add_subcommand("eval", "run the benchmark over a scan/pose sequence");
  std::string eval_dir;
  std::string pose_file;
  std::string eval_out = "eval_out";
  eval->add_option("scan_dir", eval_dir, "directory of scans")->required();
  eval->add_option("poses", pose_file, "ground-truth pose file")->required();
  eval->add_option("--out", eval_out, "report output directory")
      ->capture_default_str();

  // Let the shared options (--kind, --tau, ...) appear after the subcommand
  // name, which is how people actually type them.
  for (CLI::App* sub : {describe, index, query, eval}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or a one-line diagnostic
    return code == 0 ? 0 : 3;
  }
  cfg.bench.db.tau = tau;
  cfg.resolve();

  if (describe->parsed()) return cmd_describe(scan_path, describe_out, cfg);
  if (index->parsed()) return cmd_index(scan_dir, db_out, cfg);
  if (query->parsed()) {
    if (qid_opt->count() == 0)
      query_id = std::numeric_limits<std::int64_t>::max() / 2;
    return cmd_query(db_path, query_scan, query_id, tau_opt->count() > 0, tau);
  }
  if (eval->parsed()) return cmd_eval(eval_dir, pose_file, eval_out, cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const sc::IoError& e) {
    std::cerr << "sc: " << e.what() << '\n';
    return 2;
  } catch (const sc::FormatError& e) {
    std::cerr << "sc: " << e.what() << '\n';
    return 2;
  } catch (const sc::ParseError& e) {
    std::cerr << "sc: " << e.what() << '\n';
    return 2;
  } catch (const sc::VersionError& e) {
    std::cerr << "sc: " << e.what() << '\n';
    return 2;
  } catch (const sc::AlignmentError& e) {
    std::cerr << "sc: " << e.what() << '\n';
    return 4;
  } catch (const sc::Error& e) {
    std::cerr << "sc: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "sc: " << e.what() << '\n';
    return 1;
  }
}
