// catpose: command-line front end.
//
//   catpose solve     2D-3D correspondences + category scale -> pose JSON
//   catpose evaluate  predictions/ground truth JSON-lines -> mAP table, AP curves
//   catpose simulate  decoupled vs coupled synthetic experiment grid -> CSV
//   catpose stats     ground-truth scale listing -> per-category statistics
//
// Exit codes: 0 success, 1 input/config error, 2 numerical/solver failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "catpose/catpose.hpp"
#include "catpose/io.hpp"

namespace fs = std::filesystem;
using namespace catpose;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNumerical = 2;

/// Writes through a sibling temp file and renames it into place.
void write_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path() && !fs::exists(target.parent_path())) {
    throw Error(Errc::InvalidArgument, "output directory '" + target.parent_path().string() + "' does not exist");
  }
  const fs::path tmp = target.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::InvalidArgument, "cannot write '" + path + "'");
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error(Errc::InvalidArgument, "failed writing '" + path + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(Errc::InvalidArgument, "cannot move output into '" + path + "'");
  }
}

void emit(const std::optional<std::string>& path, const std::string& content) {
  if (path) {
    write_atomic(*path, content);
  } else {
    std::cout << content;
  }
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ParseError, "cannot open '" + path + "'");
  return in;
}

// --------------------------------------------------------------------------
// solve
// --------------------------------------------------------------------------

struct SolveOptions {
  std::string correspondences;
  std::string intrinsics;
  std::string stats;
  std::string category;
  std::optional<double> delta;
  std::string predictor = "mean";
  std::string model;
  std::string prior;
  std::string deformation;
  std::string matrix;
  std::optional<std::string> output;
  RansacConfig ransac;
};

int run_solve(const SolveOptions& o) {
  const auto k = io::intrinsics_from_json(io::load_json(o.intrinsics));
  const auto corr_file = io::correspondences_from_json(io::load_json(o.correspondences));

  const auto all_stats = io::stats_from_json(io::load_json(o.stats));
  if (all_stats.empty()) throw Error(Errc::ParseError, o.stats + ": no category statistics");
  const CategoryStats* stats = nullptr;
  if (o.category.empty()) {
    if (all_stats.size() != 1) throw Error(Errc::InvalidArgument, "--category is required when the stats file lists several");
    stats = &all_stats.front();
  } else {
    for (const auto& s : all_stats) {
      if (s.category == o.category) stats = &s;
    }
    if (!stats) throw Error(Errc::UnknownCategory, "category '" + o.category + "' not in " + o.stats);
  }

  double delta = 0.0;
  if (o.delta) {
    delta = *o.delta;
  } else if (o.predictor == "mean") {
    delta = mean_scale_predictor()->predict_offset({stats->category, 0, std::nullopt, {}}, *stats);
  } else {
    throw Error(Errc::InvalidArgument, "unknown predictor '" + o.predictor + "'");
  }
  const ScalePrediction sp = recover_scale(*stats, delta);

  // model side: C * (P_r + D) when a matrix is given, else per-entry model points
  PointSet3 nocs_points;
  if (!o.matrix.empty()) {
    NocsModel model;
    if (!o.model.empty()) {
      model = io::model_from_json(io::load_json(o.model));
    } else if (!o.prior.empty()) {
      const auto prior = io::prior_from_json(io::load_json(o.prior));
      const DeformationField d = o.deformation.empty()
                                     ? DeformationField{PointSet3(prior.size(), Vec3::Zero())}
                                     : io::deformation_from_json(io::load_json(o.deformation));
      model = apply_deformation(prior, d);
    } else {
      throw Error(Errc::InvalidArgument, "--matrix requires --model or --prior");
    }
    const auto c = io::matrix_from_json(io::load_json(o.matrix));
    nocs_points = assign(c, model);
    if (nocs_points.size() != corr_file.image.size()) {
      throw Error(Errc::DimensionMismatch, "matrix rows differ from the number of image points");
    }
  } else {
    for (const auto& c : corr_file.complete()) nocs_points.push_back(c.model);
  }

  const PointSet3 metric = scale_model_points(sp.scale, nocs_points);
  Correspondences corr(metric.size());
  for (std::size_t i = 0; i < metric.size(); ++i) corr[i] = {corr_file.image[i], metric[i]};

  const PnPResult res = ransac_pnp(corr, k, o.ransac);
  io::Json j = io::to_json(res);
  j["category"] = stats->category;
  j["delta"] = sp.delta;
  j["scale"] = sp.scale;
  j["seed"] = o.ransac.rng_seed;
  j["reprojection_threshold"] = o.ransac.reprojection_threshold;
  emit(o.output, j.dump(2) + "\n");
  return kExitOk;
}

// --------------------------------------------------------------------------
// evaluate
// --------------------------------------------------------------------------

struct EvaluateOptions {
  std::string predictions;
  std::string ground_truth;
  std::string out_dir;
  std::string symmetry = "on";
  MetricThresholds thresholds;
  std::vector<double> iou_grid;
  std::vector<double> rot_grid;
  std::vector<double> trans_grid;
};

std::vector<double> linspace(double lo, double hi, double step) {
  std::vector<double> v;
  const int n = static_cast<int>(std::llround((hi - lo) / step));
  for (int i = 0; i <= n; ++i) v.push_back(lo + step * i);
  return v;
}

int run_evaluate(EvaluateOptions o) {
  if (o.symmetry != "on" && o.symmetry != "off") {
    throw Error(Errc::InvalidArgument, "--symmetry takes on|off");
  }
  if (!fs::is_directory(o.out_dir)) {
    throw Error(Errc::InvalidArgument, "output directory '" + o.out_dir + "' does not exist");
  }
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
  {
    auto in = open_input(o.predictions);
    try {
      dets = io::detections_from_jsonl(in);
    } catch (const Error& e) {
      throw Error(e.code(), o.predictions + ": " + e.detail());
    }
  }
  {
    auto in = open_input(o.ground_truth);
    try {
      gts = io::ground_truth_from_jsonl(in);
    } catch (const Error& e) {
      throw Error(e.code(), o.ground_truth + ": " + e.detail());
    }
  }
  const EvalOptions eopt{o.symmetry == "on"};
  const RecordSet records = match_detections(dets, gts);
  const MetricTable table = metric_table(records, o.thresholds, eopt);
  for (const auto& w : table.warnings) std::cerr << "warning: " << w << '\n';

  if (o.iou_grid.empty()) o.iou_grid = linspace(0.0, 1.0, 0.02);
  if (o.rot_grid.empty()) o.rot_grid = linspace(0.0, 60.0, 1.0);
  if (o.trans_grid.empty()) o.trans_grid = linspace(0.0, 15.0, 0.5);

  const fs::path dir(o.out_dir);
  write_atomic((dir / "metrics.csv").string(), table.to_csv());
  write_atomic((dir / "metrics.txt").string(), table.to_text());
  write_atomic((dir / "ap_iou.csv").string(), ap_curves(records, MetricAxis::Iou, o.iou_grid, eopt).to_csv());
  write_atomic((dir / "ap_rotation.csv").string(),
               ap_curves(records, MetricAxis::Rotation, o.rot_grid, eopt).to_csv());
  write_atomic((dir / "ap_translation.csv").string(),
               ap_curves(records, MetricAxis::Translation, o.trans_grid, eopt).to_csv());
  std::cout << "rotation error: " << (eopt.symmetry ? "symmetry-aware (bottle, bowl, can)" : "raw geodesic")
            << '\n'
            << table.to_text();
  return kExitOk;
}

// --------------------------------------------------------------------------
// simulate
// --------------------------------------------------------------------------

struct SimulateOptions {
  std::string config;
  std::optional<std::string> output;
  std::optional<std::string> summary;
  std::vector<std::string> categories = synthetic_categories();
  std::vector<double> pixel_noise{0.0};
  std::vector<double> outlier_fraction{0.0};
  std::vector<double> scale_error{0.0};
  std::string scale_mode = "systematic";
  std::vector<double> depth_noise{0.0, 0.02, 0.05, 0.1};
  long long trials = 20;
  std::uint64_t seed = 0;
  std::size_t points = 128;
  RansacConfig ransac;
};

template <class T>
void override_from(const io::Json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j[key].get<T>();
  } catch (const io::Json::exception& e) {
    throw Error(Errc::ParseError, std::string("config field '") + key + "': " + e.what());
  }
}

void apply_config(SimulateOptions& o) {
  const io::Json j = io::load_json(o.config);
  if (!j.is_object()) throw Error(Errc::ParseError, o.config + ": config must be a JSON object");
  static const std::vector<std::string> known{"output", "summary", "categories", "pixel_noise", "outlier_fraction",
                                              "scale_error", "scale_mode", "depth_noise", "trials", "seed",
                                              "points", "ransac"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error(Errc::ParseError, o.config + ": unknown config field '" + key + "'");
    }
  }
  if (j.contains("output")) o.output = j["output"].get<std::string>();
  if (j.contains("summary")) o.summary = j["summary"].get<std::string>();
  override_from(j, "categories", o.categories);
  override_from(j, "pixel_noise", o.pixel_noise);
  override_from(j, "outlier_fraction", o.outlier_fraction);
  override_from(j, "scale_error", o.scale_error);
  override_from(j, "scale_mode", o.scale_mode);
  override_from(j, "depth_noise", o.depth_noise);
  override_from(j, "trials", o.trials);
  override_from(j, "seed", o.seed);
  override_from(j, "points", o.points);
  if (j.contains("ransac")) {
    const auto& r = j["ransac"];
    override_from(r, "threshold", o.ransac.reprojection_threshold);
    override_from(r, "max_iterations", o.ransac.max_iterations);
    override_from(r, "confidence", o.ransac.confidence);
    override_from(r, "seed", o.ransac.rng_seed);
  }
}

int run_simulate(SimulateOptions o) {
  if (!o.config.empty()) apply_config(o);
  if (o.trials < 1) throw Error(Errc::InvalidArgument, "--trials must be >= 1");
  if (!o.output) {
    const char* env = std::getenv("CATPOSE_OUTPUT_DIR");
    o.output = (fs::path(env && *env ? env : ".") / "simulation.csv").string();
  }
  o.ransac.validate();

  GridConfig g;
  g.categories = o.categories;
  for (const auto& c : g.categories) default_category_stats(c);
  g.trials = static_cast<std::size_t>(o.trials);
  g.master_seed = o.seed;
  g.scene.points = o.points;
  g.ransac = o.ransac;
  g.noise_points.clear();
  const ScaleErrorMode mode = parse_scale_mode(o.scale_mode);
  for (double px : o.pixel_noise)
    for (double of : o.outlier_fraction)
      for (double se : o.scale_error)
        for (double dn : o.depth_noise) g.noise_points.push_back({px, of, se, mode, dn});

  const GridResult grid = run_grid(g);
  write_atomic(*o.output, grid.trials_csv());
  if (o.summary) write_atomic(*o.summary, grid.summary_csv());

  std::cout << "noise  pixel   outlier  scale_err  depth_noise  arm        median_rot_deg  median_trans_cm\n";
  for (std::size_t ni = 0; ni < g.noise_points.size(); ++ni) {
    const auto& ns = g.noise_points[ni];
    for (Pipeline p : {Pipeline::Decoupled, Pipeline::Coupled}) {
      std::vector<double> rot, trans;
      for (const auto& r : grid.rows) {
        if (r.noise_index != ni || r.pipeline != p || !r.result.ok) continue;
        rot.push_back(r.result.rot_err_deg);
        trans.push_back(r.result.trans_err_cm);
      }
      char line[256];
      std::snprintf(line, sizeof line, "%-6zu %-7.3g %-8.3g %-10.3g %-12.3g %-10s %-15.6g %.6g\n", ni,
                    ns.pixel_noise_sigma, ns.outlier_fraction, ns.scale_rel_error, ns.depth_rel_noise, to_string(p),
                    median(rot), median(trans));
      std::cout << line;
    }
  }
  return kExitOk;
}

// --------------------------------------------------------------------------
// stats
// --------------------------------------------------------------------------

struct StatsOptions {
  std::string input;
  std::optional<std::string> output;
  std::optional<std::string> csv;
};

int run_stats(const StatsOptions& o) {
  auto in = open_input(o.input);
  std::vector<io::ScaleSample> samples;
  try {
    samples = io::scale_listing_from_jsonl(in);
  } catch (const Error& e) {
    throw Error(e.code(), o.input + ": " + e.detail());
  }
  std::map<std::string, std::vector<double>> grouped;
  for (const auto& s : samples) grouped[s.category].push_back(s.scale);
  if (grouped.empty()) throw Error(Errc::EmptyList, o.input + ": no scale samples");

  std::vector<CategoryStats> stats;
  for (const auto& [cat, scales] : grouped) stats.push_back(compute_stats(cat, scales));

  if (o.csv) {
    std::ostringstream os;
    os << "category,mean_scale,std_dev,count\n";
    for (const auto& s : stats) {
      os << s.category << ',' << format_g17(s.mean_scale) << ',' << format_g17(s.std_dev) << ',' << s.count << '\n';
    }
    write_atomic(*o.csv, os.str());
  }
  emit(o.output, io::to_json(stats).dump(2) + "\n");
  return kExitOk;
}

template <class F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_numerical_failure(e.code()) ? kExitNumerical : kExitInput;
  } catch (const io::Json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Category-level pose toolkit: decoupled scale + RANSAC-PnP solving, benchmark evaluation, "
               "synthetic experiments."};
  app.require_subcommand(1);

  SolveOptions so;
  auto* solve = app.add_subcommand("solve", "Estimate a pose from 2D-3D correspondences and a category scale");
  solve->add_option("--correspondences", so.correspondences, "JSON array of {image:[u,v], model:[x,y,z]}")->required();
  solve->add_option("--intrinsics", so.intrinsics, "JSON {fx, fy, cx, cy}")->required();
  solve->add_option("--stats", so.stats, "category stats JSON array")->required();
  solve->add_option("--category", so.category, "category to take the mean scale from");
  solve->add_option("--delta", so.delta, "relative scale offset (overrides --predictor)");
  solve->add_option("--predictor", so.predictor, "scale predictor when --delta is absent")->check(CLI::IsMember({"mean"}));
  solve->add_option("--model", so.model, "reconstructed NOCS model JSON (used with --matrix)");
  solve->add_option("--prior", so.prior, "shape prior JSON (used with --matrix)");
  solve->add_option("--deformation", so.deformation, "deformation field JSON applied to --prior");
  solve->add_option("--matrix", so.matrix, "correspondence matrix JSON; model points become C * model");
  solve->add_option("--threshold", so.ransac.reprojection_threshold, "RANSAC inlier threshold (px)");
  solve->add_option("--max-iterations", so.ransac.max_iterations, "RANSAC iteration cap");
  solve->add_option("--confidence", so.ransac.confidence, "RANSAC confidence");
  solve->add_option("--seed", so.ransac.rng_seed, "RANSAC seed");
  solve->add_option("--output", so.output, "output JSON path (stdout if omitted)");

  EvaluateOptions eo;
  auto* evaluate = app.add_subcommand("evaluate", "mAP table and AP curves from predictions and ground truth");
  evaluate->add_option("--predictions", eo.predictions, "predictions JSON-lines")->required();
  evaluate->add_option("--gt", eo.ground_truth, "ground truth JSON-lines")->required();
  evaluate->add_option("--out-dir", eo.out_dir, "directory for report files")->required();
  evaluate->add_option("--symmetry", eo.symmetry, "symmetry-aware rotation error for bottle/bowl/can (on|off)");
  evaluate->add_option("--iou-loose", eo.thresholds.iou_loose, "first IoU threshold");
  evaluate->add_option("--iou-strict", eo.thresholds.iou_strict, "second IoU threshold");
  evaluate->add_option("--rot-deg", eo.thresholds.rot_deg, "rotation threshold (degrees)");
  evaluate->add_option("--trans-cm", eo.thresholds.trans_cm, "translation threshold (cm)");
  evaluate->add_option("--iou-grid", eo.iou_grid, "IoU thresholds for the AP curve")->delimiter(',');
  evaluate->add_option("--rot-grid", eo.rot_grid, "rotation thresholds (deg) for the AP curve")->delimiter(',');
  evaluate->add_option("--trans-grid", eo.trans_grid, "translation thresholds (cm) for the AP curve")->delimiter(',');

  SimulateOptions mo;
  auto* simulate = app.add_subcommand("simulate", "Decoupled vs coupled synthetic experiment grid");
  simulate->add_option("--config", mo.config, "JSON config; its fields override flags");
  simulate->add_option("--output", mo.output, "per-trial CSV (default $CATPOSE_OUTPUT_DIR/simulation.csv)");
  simulate->add_option("--summary", mo.summary, "per-cell summary CSV");
  simulate->add_option("--categories", mo.categories, "categories")->delimiter(',');
  simulate->add_option("--pixel-noise", mo.pixel_noise, "pixel noise sigmas (px)")->delimiter(',');
  simulate->add_option("--outlier-fraction", mo.outlier_fraction, "outlier fractions")->delimiter(',');
  simulate->add_option("--scale-error", mo.scale_error, "scale errors (relative)")->delimiter(',');
  simulate->add_option("--scale-mode", mo.scale_mode, "systematic|stochastic|mean");
  simulate->add_option("--depth-noise", mo.depth_noise, "relative pseudo-depth noise levels")->delimiter(',');
  simulate->add_option("--trials", mo.trials, "trials per cell");
  simulate->add_option("--seed", mo.seed, "master seed");
  simulate->add_option("--points", mo.points, "model points per scene");
  simulate->add_option("--threshold", mo.ransac.reprojection_threshold, "RANSAC inlier threshold (px)");
  simulate->add_option("--max-iterations", mo.ransac.max_iterations, "RANSAC iteration cap");
  simulate->add_option("--confidence", mo.ransac.confidence, "RANSAC confidence");

  StatsOptions to;
  auto* stats = app.add_subcommand("stats", "Per-category mean scale and deviation from a scale listing");
  stats->add_option("--input", to.input, "JSON-lines of {category, scale}")->required();
  stats->add_option("--output", to.output, "stats JSON path (stdout if omitted)");
  stats->add_option("--csv", to.csv, "CSV of per-category deviation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  if (*solve) return guarded([&] { return run_solve(so); });
  if (*evaluate) return guarded([&] { return run_evaluate(eo); });
  if (*simulate) return guarded([&] { return run_simulate(mo); });
  if (*stats) return guarded([&] { return run_stats(to); });
  return kExitInput;
}
