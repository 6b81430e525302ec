#pragma once

// Counting equation, error metrics and the validation studies.

#include "stackcount/carve/carve.hpp"
#include "stackcount/occupancy/occupancy.hpp"
#include "stackcount/render/views.hpp"
#include "stackcount/simlab/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace stackcount::evalkit {

using geom::AABB;
using geom::TriMesh;
using json = nlohmann::ordered_json;
using render::View;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Ties go to the even neighbour.
inline std::int64_t round_half_even(double x) {
  double f = std::floor(x);
  double r = x - f;
  if (r > 0.5 || (r == 0.5 && std::fmod(f, 2.0) != 0.0)) f += 1.0;
  return static_cast<std::int64_t>(f);
}

struct CountReport {
  std::string scene_id;
  double gamma = 0.0;
  double stack_volume = 0.0;
  double unit_volume = 0.0;
  double n_est = 0.0;
  std::int64_t n_rounded = 0;
  std::optional<double> n_gt;
};

inline CountReport count_from(double gamma, double stack_volume, double unit_volume, std::string scene_id = "") {
  if (!(unit_volume > 0.0) || !std::isfinite(unit_volume)) throw DataError("count_from: unit volume must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DataError("count_from: gamma must lie in [0, 1]");
  if (!(stack_volume >= 0.0) || !std::isfinite(stack_volume)) throw DataError("count_from: stack volume must be >= 0");
  CountReport r;
  r.scene_id = std::move(scene_id);
  r.gamma = gamma;
  r.stack_volume = stack_volume;
  r.unit_volume = unit_volume;
  r.n_est = gamma * stack_volume / unit_volume;
  r.n_rounded = round_half_even(r.n_est);
  return r;
}

// Metrics that do not apply to a call are NaN.
struct MetricsTable {
  std::size_t n = 0;
  double mae = kNaN, rmse = kNaN, nae = kNaN, sre = kNaN, smape = kNaN, r2 = kNaN;
  double mean_signed_error = kNaN;  // mean of (prediction - truth)

  std::vector<std::pair<std::string, double>> entries() const {
    return {{"n", double(n)}, {"MAE", mae},   {"RMSE", rmse}, {"NAE", nae},
            {"SRE", sre},     {"sMAPE", smape}, {"R2", r2},   {"mean_signed_error", mean_signed_error}};
  }

  json to_json() const {
    json j = json::object();
    for (const auto& [k, v] : entries()) j[k] = std::isfinite(v) ? json(v) : json(nullptr);
    return j;
  }
};

inline void check_pairs(const std::vector<double>& preds, const std::vector<double>& gts, const char* who) {
  if (preds.size() != gts.size())
    throw DataError(std::string(who) + ": length mismatch (" + std::to_string(preds.size()) + " predictions, " +
                    std::to_string(gts.size()) + " ground truths)");
  if (preds.empty()) throw DataError(std::string(who) + ": empty input");
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (!std::isfinite(preds[i]) || !std::isfinite(gts[i])) throw DataError(std::string(who) + ": non-finite value");
}

// Shared per-element sums, accumulated in input order.
inline void fill_errors(MetricsTable& m, const std::vector<double>& p, const std::vector<double>& y) {
  double abs = 0.0, sq = 0.0, sgn = 0.0, sm = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double e = p[i] - y[i];
    abs += std::abs(e);
    sq += e * e;
    sgn += e;
    double den = (std::abs(y[i]) + std::abs(p[i])) / 2.0;
    sm += den > 0.0 ? std::abs(e) / den : 0.0;
  }
  double n = double(p.size());
  m.n = p.size();
  m.mae = abs / n;
  m.rmse = std::sqrt(sq / n);
  m.mean_signed_error = sgn / n;
  m.smape = 100.0 * sm / n;
}

// NAE = sum|y - p| / sum y, SRE = sum (y - p)^2 / sum y^2, sMAPE in percent.
inline MetricsTable count_metrics(const std::vector<double>& preds, const std::vector<double>& gts) {
  check_pairs(preds, gts, "count_metrics");
  MetricsTable m;
  fill_errors(m, preds, gts);
  double sy = 0.0, sy2 = 0.0, abs = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    double e = gts[i] - preds[i];
    sy += gts[i];
    sy2 += gts[i] * gts[i];
    abs += std::abs(e);
    sq += e * e;
  }
  if (!(sy > 0.0) || !(sy2 > 0.0)) throw DataError("count_metrics: all-zero denominator (ground truths sum to zero)");
  m.nae = abs / sy;
  m.sre = sq / sy2;
  return m;
}

// R^2 = 1 - sum (y - p)^2 / sum (y - mean y)^2.
inline MetricsTable regression_metrics(const std::vector<double>& preds, const std::vector<double>& gts) {
  check_pairs(preds, gts, "regression_metrics");
  if (gts.size() < 2) throw DataError("regression_metrics: need at least 2 samples");
  MetricsTable m;
  fill_errors(m, preds, gts);
  double mean = 0.0;
  for (double y : gts) mean += y;
  mean /= double(gts.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    ss_tot += (gts[i] - mean) * (gts[i] - mean);
    ss_res += (gts[i] - preds[i]) * (gts[i] - preds[i]);
  }
  if (!(ss_tot > 0.0)) throw DataError("regression_metrics: zero variance in ground truth, R^2 undefined");
  m.r2 = 1.0 - ss_res / ss_tot;
  return m;
}

// Least-squares line y = intercept + slope * x.
inline std::pair<double, double> fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  double n = double(x.size()), mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) return {kNaN, kNaN};
  double slope = sxy / sxx;
  return {my - slope * mx, slope};
}

inline std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream ss;
  ss.precision(10);
  ss << v;
  return ss.str();
}

inline std::string summary_csv(const std::vector<std::pair<std::string, MetricsTable>>& tables) {
  std::ostringstream ss;
  ss << "suite,metric,value\n";
  for (const auto& [name, m] : tables)
    for (const auto& [k, v] : m.entries()) ss << name << ',' << k << ',' << fmt(v) << '\n';
  return ss.str();
}

// --- scene suites ------------------------------------------------------------

struct SceneRecord {
  std::string id;
  std::filesystem::path dir;
  simlab::Scene scene;
  TriMesh object;
};

// Subdirectories of `root` holding a manifest.json, sorted by name.
inline std::vector<std::filesystem::path> list_scene_dirs(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw DataError("scene suite " + root.string() + " is not a directory");
  std::vector<std::filesystem::path> dirs;
  if (std::filesystem::exists(root / "manifest.json")) dirs.push_back(root);
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory() && std::filesystem::exists(e.path() / "manifest.json")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

inline SceneRecord load_record(const std::filesystem::path& dir) {
  auto l = simlab::load_scene(dir);
  return {dir.filename().string(), dir, std::move(l.scene), std::move(l.object)};
}

inline std::vector<SceneRecord> load_suite(const std::filesystem::path& root) {
  std::vector<SceneRecord> out;
  for (const auto& d : list_scene_dirs(root)) out.push_back(load_record(d));
  if (out.empty()) throw DataError("no scenes (manifest.json) under " + root.string());
  return out;
}

// --- counting-equation validation ---------------------------------------------

struct ValidationRow {
  std::string scene_id;
  double n_gt = 0.0;
  double gamma = 0.0;
  double unit_volume = 0.0;
  double v_hull = 0.0;    // convex hull of the stack
  double v_region = 0.0;  // region gamma was measured over
  double n_est = 0.0;     // gamma * v_hull / v
  double n_est_region = 0.0;
};

struct ValidationReport {
  std::vector<ValidationRow> rows;
  MetricsTable hull;    // n_est against n_gt
  MetricsTable region;  // n_est_region against n_gt
  double slope = kNaN, intercept = kNaN;  // n_est ~ intercept + slope * n_gt

  std::string scatter_csv() const {
    std::ostringstream ss;
    ss.precision(10);
    ss << "scene_id,n_gt,n_est,n_est_region,gamma,v_hull,v_region,unit_volume\n";
    for (const auto& r : rows)
      ss << r.scene_id << ',' << r.n_gt << ',' << r.n_est << ',' << r.n_est_region << ',' << r.gamma << ','
         << r.v_hull << ',' << r.v_region << ',' << r.unit_volume << '\n';
    return ss.str();
  }

  std::string summary() const {
    std::ostringstream ss;
    ss.precision(6);
    ss << "scenes " << rows.size() << "\nR2 " << hull.r2 << "\nMAE " << hull.mae << "\nmean signed error "
       << hull.mean_signed_error << " (" << (hull.mean_signed_error > 0 ? "over" : "under") << "estimation)\nslope "
       << slope << " intercept " << intercept << "\nregion-volume variant: R2 " << region.r2 << " MAE " << region.mae
       << "\n";
    return ss.str();
  }
};

// Volume of the region a ground-truth gamma refers to.
inline double gamma_region_volume(const SceneRecord& rec) {
  const auto& s = rec.scene;
  auto region = s.gt.gamma_region.empty() ? simlab::default_region(s.container)
                                          : simlab::GammaRegion::parse(s.gt.gamma_region);
  if (region.kind == simlab::GammaRegion::Kind::ConvexHull) return s.gt.stack_volume;
  if (region.kind == simlab::GammaRegion::Kind::SubBox) return std::pow(region.side, 3);
  auto hp = simlab::hull_points(rec.object);
  std::vector<AABB> boxes;
  for (const auto& p : s.poses) boxes.push_back(simlab::posed_bounds(hp, p));
  return simlab::filled_cavity(s.container, boxes).volume();
}

inline void check_ground_truth(const SceneRecord& rec) {
  const auto& g = rec.scene.gt;
  auto missing = [&](const char* field) {
    throw DataError("scene " + rec.id + ": missing or invalid ground truth field '" + field + "'");
  };
  if (g.count == 0) missing("count");
  if (!(g.gamma > 0.0 && g.gamma <= 1.0)) missing("gamma");
  if (!(g.stack_volume > 0.0)) missing("stack_volume");
  if (!(g.unit_volume > 0.0)) missing("unit_volume");
}

inline ValidationReport validate_counting_equation(const std::vector<SceneRecord>& scenes, std::size_t min_scenes = 50) {
  if (scenes.size() < min_scenes)
    throw DataError("validate: need at least " + std::to_string(min_scenes) + " scenes, got " +
                    std::to_string(scenes.size()));
  ValidationReport rep;
  std::vector<double> gt, est, est_region;
  for (const auto& rec : scenes) {
    check_ground_truth(rec);
    const auto& g = rec.scene.gt;
    ValidationRow r;
    r.scene_id = rec.id;
    r.n_gt = double(g.count);
    r.gamma = g.gamma;
    r.unit_volume = g.unit_volume;
    r.v_hull = g.stack_volume;
    r.v_region = gamma_region_volume(rec);
    r.n_est = count_from(g.gamma, r.v_hull, r.unit_volume).n_est;
    r.n_est_region = count_from(g.gamma, r.v_region, r.unit_volume).n_est;
    gt.push_back(r.n_gt);
    est.push_back(r.n_est);
    est_region.push_back(r.n_est_region);
    rep.rows.push_back(r);
  }
  rep.hull = regression_metrics(est, gt);
  rep.region = regression_metrics(est_region, gt);
  std::tie(rep.intercept, rep.slope) = fit_line(gt, est);
  return rep;
}

// --- end-to-end pipeline -----------------------------------------------------

struct PipelineResult {
  CountReport report;
  std::size_t key_view = 0;
  occupancy::GammaEstimate gamma;
  carve::VolumeEstimate volume;
  double t_ratio = 0.0;

  json log() const {
    return json{{"scene_id", report.scene_id},
                {"key_view", key_view},
                {"gamma", {{"value", gamma.value}, {"method", gamma.method}}},
                {"volume", {{"value", volume.value}, {"method", volume.method}, {"params", volume.params}}},
                {"unit_volume", report.unit_volume},
                {"n_est", report.n_est},
                {"n_rounded", report.n_rounded}};
  }
};

inline double unit_volume_of(const simlab::Scene& scene, const TriMesh& object) {
  return scene.gt.unit_volume > 0.0 ? scene.gt.unit_volume : geom::mesh_volume(object);
}

// Key view -> gamma, carve -> erode -> volume, then the counting equation.
inline PipelineResult run_pipeline(const simlab::Scene& scene, const TriMesh& object, const std::vector<View>& views,
                                   const occupancy::EstimatorSpec& estimator, const carve::CarveParams& params,
                                   int jobs = 1, const std::string& scene_id = "") {
  if (views.empty()) throw DataError("pipeline: no views for scene " + scene_id);
  estimator.validate();
  PipelineResult out;
  out.key_view = render::key_view_select(views);
  const View& kv = views[out.key_view];
  out.gamma = occupancy::estimate(estimator, kv.depth, kv.mask);
  out.t_ratio = scene.container.has_container ? scene.container.wall_ratio : 0.0;
  auto cr = carve::estimate_volume(views, out.t_ratio, scene.container.inner_dims, params, jobs);
  out.volume = cr.volume;
  out.report = count_from(out.gamma.value, out.volume.value, unit_volume_of(scene, object), scene_id);
  if (scene.gt.count > 0) out.report.n_gt = double(scene.gt.count);
  log_info("pipeline " + scene_id + ": key view " + std::to_string(kv.id) + ", gamma " + fmt(out.gamma.value) +
           ", V " + fmt(out.volume.value) + ", n_est " + fmt(out.report.n_est));
  return out;
}

inline PipelineResult run_pipeline(const SceneRecord& rec, const occupancy::EstimatorSpec& estimator,
                                   const carve::CarveParams& params, int jobs = 1) {
  auto views = render::load_views(rec.dir / "views");
  return run_pipeline(rec.scene, rec.object, views, estimator, params, jobs, rec.id);
}

inline std::string report_csv(const std::vector<CountReport>& reports) {
  std::ostringstream ss;
  ss.precision(10);
  ss << "scene_id,gamma_est,V_est,v,n_est,n_rounded,n_gt\n";
  for (const auto& r : reports)
    ss << r.scene_id << ',' << r.gamma << ',' << r.stack_volume << ',' << r.unit_volume << ',' << r.n_est << ','
       << r.n_rounded << ',' << (r.n_gt ? fmt(*r.n_gt) : "") << '\n';
  return ss.str();
}

// Count metrics over the reports that carry a ground truth.
inline MetricsTable suite_metrics(const std::vector<CountReport>& reports) {
  std::vector<double> p, y;
  for (const auto& r : reports)
    if (r.n_gt) {
      p.push_back(r.n_est);
      y.push_back(*r.n_gt);
    }
  MetricsTable m = count_metrics(p, y);
  if (p.size() >= 2) {
    try {
      m.r2 = regression_metrics(p, y).r2;
    } catch (const DataError&) {
    }
  }
  return m;
}

// --- occupancy study ---------------------------------------------------------

// Seeded permutation; the first round(train_fraction * n) indices train.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, std::uint64_t seed,
                                                                                   double train_fraction = 0.8) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("train fraction must lie in (0, 1)");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = substream(seed, 0x5eed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[std::size_t(uniform01(rng) * double(i))]);
  std::size_t n_train = static_cast<std::size_t>(round_half_even(train_fraction * double(n)));
  std::vector<std::size_t> train(idx.begin(), idx.begin() + n_train), test(idx.begin() + n_train, idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

struct OccupancyRow {
  std::string scene_id;
  occupancy::DepthFeatures features;
  double gt_gamma = 0.0;
};

// Features of the key view of each scene, against the manifest gamma.
inline OccupancyRow occupancy_row(const SceneRecord& rec, occupancy::PixelSet pixels = occupancy::PixelSet::Objects) {
  check_ground_truth(rec);
  auto views = render::load_views(rec.dir / "views");
  const View& kv = views[render::key_view_select(views)];
  return {rec.id, occupancy::depth_features(kv.depth, kv.mask, pixels), rec.scene.gt.gamma};
}

struct OccupancyStudy {
  occupancy::CorrectorModel model;
  double mean_constant = 0.0;  // training mean of gt gamma
  std::vector<std::size_t> train, test;
  std::vector<std::pair<std::string, MetricsTable>> methods;  // held-out scenes
  std::vector<std::vector<double>> predictions;                // per method, per test row

  const MetricsTable& metrics(const std::string& name) const {
    for (const auto& [k, m] : methods)
      if (k == name) return m;
    throw UsageError("unknown method " + name);
  }
};

inline OccupancyStudy occupancy_study(const std::vector<OccupancyRow>& rows, std::uint64_t seed,
                                      double train_fraction = 0.8, std::size_t min_train = 20) {
  OccupancyStudy st;
  std::tie(st.train, st.test) = split_indices(rows.size(), seed, train_fraction);
  if (st.test.size() < 2) throw DataError("occupancy study: fewer than 2 held-out scenes");
  std::vector<occupancy::TrainingRow> tr;
  for (auto i : st.train) {
    tr.push_back({rows[i].features, rows[i].gt_gamma});
    st.mean_constant += rows[i].gt_gamma;
  }
  st.model = occupancy::fit_corrector(tr, seed, min_train);
  st.mean_constant /= double(st.train.size());
  std::vector<double> y, corr, mean, extra;
  for (auto i : st.test) {
    y.push_back(rows[i].gt_gamma);
    corr.push_back(occupancy::gamma_corrected(rows[i].features, st.model).value);
    mean.push_back(st.mean_constant);
    extra.push_back(occupancy::gamma_extrapolated(rows[i].features).value);
  }
  st.methods = {{"corrected", regression_metrics(corr, y)},
                {"mean", regression_metrics(mean, y)},
                {"extrapolated", regression_metrics(extra, y)}};
  st.predictions = {corr, mean, extra};
  return st;
}

inline std::string occupancy_csv(const OccupancyStudy& st, const std::vector<OccupancyRow>& rows) {
  std::ostringstream ss;
  ss.precision(10);
  ss << "scene_id,gt_gamma,gamma_norm,depth_variance_norm,corrected,mean,extrapolated\n";
  for (std::size_t k = 0; k < st.test.size(); ++k) {
    const auto& r = rows[st.test[k]];
    ss << r.scene_id << ',' << r.gt_gamma << ',' << r.features.gamma_norm << ',' << r.features.depth_variance_norm
       << ',' << st.predictions[0][k] << ',' << st.predictions[1][k] << ',' << st.predictions[2][k] << '\n';
  }
  return ss.str();
}

// --- volume study ------------------------------------------------------------

struct VolumeRow {
  std::string scene_id;
  double v_ref = 0.0;  // ground-truth stack volume
  double carve = 0.0, convex = 0.0, alpha = kNaN;
};

inline VolumeRow volume_row(const simlab::Scene& scene, const std::vector<View>& views,
                            const carve::CarveParams& params, int jobs = 1, const std::string& id = "") {
  VolumeRow r;
  r.scene_id = id;
  r.v_ref = scene.gt.stack_volume;
  if (!(r.v_ref > 0.0)) throw DataError("volume study: scene " + id + " has no ground-truth stack volume");
  double t = scene.container.has_container ? scene.container.wall_ratio : 0.0;
  r.carve = carve::estimate_volume(views, t, scene.container.inner_dims, params, jobs).volume.value;
  auto pts = carve::unproject_inside(views);
  r.convex = carve::convex_volume(carve::subsample(pts, 20000)).value;
  try {
    r.alpha = carve::alpha_volume(carve::subsample(pts, 20000)).value;
  } catch (const Error& e) {
    log_info("volume study: alpha hull failed for " + id + ": " + e.what());
  }
  return r;
}

struct VolumeStudy {
  std::vector<VolumeRow> rows;
  double smape_carve = kNaN, smape_convex = kNaN, smape_alpha = kNaN;

  std::string csv() const {
    std::ostringstream ss;
    ss.precision(10);
    ss << "scene_id,v_ref,carve,convex,alpha\n";
    for (const auto& r : rows)
      ss << r.scene_id << ',' << r.v_ref << ',' << r.carve << ',' << r.convex << ',' << fmt(r.alpha) << '\n';
    return ss.str();
  }
};

inline VolumeStudy volume_study(std::vector<VolumeRow> rows) {
  if (rows.empty()) throw DataError("volume study: no scenes");
  VolumeStudy st;
  std::vector<double> y, c, h, ya, a;
  for (const auto& r : rows) {
    y.push_back(r.v_ref);
    c.push_back(r.carve);
    h.push_back(r.convex);
    if (std::isfinite(r.alpha)) {
      ya.push_back(r.v_ref);
      a.push_back(r.alpha);
    }
  }
  st.smape_carve = count_metrics(c, y).smape;
  st.smape_convex = count_metrics(h, y).smape;
  if (!a.empty()) st.smape_alpha = count_metrics(a, ya).smape;
  st.rows = std::move(rows);
  return st;
}

}  // namespace stackcount::evalkit
