// stackcount: generate, render, carve, estimate and count stacked objects.

#include "stackcount/evalkit/evalkit.hpp"
#include "stackcount/geom/curvature.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iomanip>

namespace fs = std::filesystem;
using namespace stackcount;
using geom::TriMesh;
using json = nlohmann::ordered_json;

namespace {

// --- config file -------------------------------------------------------------

// Flags from a JSON config: top-level scalars apply to every command, an
// object under the command's name applies to that command only.
void append_config_args(const json& j, std::vector<std::string>& args) {
  for (const auto& [key, val] : j.items()) {
    if (val.is_object()) continue;
    std::string flag = "--" + key;
    if (val.is_boolean()) {
      if (val.get<bool>()) args.push_back(flag);
    } else if (val.is_array()) {
      args.push_back(flag);
      for (const auto& v : val) args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    } else if (val.is_string()) {
      args.push_back(flag);
      args.push_back(val.get<std::string>());
    } else if (!val.is_null()) {
      args.push_back(flag);
      args.push_back(val.dump());
    }
  }
}

// argv with --config expanded in front of the user's own flags, so flags win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> in(argv + 1, argv + argc), rest;
  std::optional<std::string> config;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] == "--config") {
      if (i + 1 >= in.size()) throw UsageError("--config needs a file");
      config = in[++i];
    } else if (in[i].rfind("--config=", 0) == 0) {
      config = in[i].substr(9);
    } else {
      rest.push_back(in[i]);
    }
  }
  if (!config) return rest;
  json j;
  try {
    j = simlab::read_json(*config);
  } catch (const DataError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("config " + *config + ": expected a JSON object");
  auto cmd = std::find_if(rest.begin(), rest.end(), [](const std::string& s) { return !s.empty() && s[0] != '-'; });
  if (cmd == rest.end()) return rest;
  std::vector<std::string> extra;
  append_config_args(j, extra);
  if (j.contains(*cmd) && j.at(*cmd).is_object()) append_config_args(j.at(*cmd), extra);
  std::vector<std::string> out(rest.begin(), cmd + 1);
  out.insert(out.end(), extra.begin(), extra.end());
  out.insert(out.end(), cmd + 1, rest.end());
  return out;
}

// --- shared helpers ----------------------------------------------------------

std::string default_id(const fs::path& dir) {
  auto name = fs::absolute(dir).lexically_normal().filename().string();
  return name.empty() ? fs::absolute(dir).lexically_normal().parent_path().filename().string() : name;
}

// One scene directory, or every scene below a suite root.
std::vector<fs::path> scene_dirs(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("no such scene or suite: " + path.string());
  if (fs::exists(path / "manifest.json")) return {path};
  auto dirs = evalkit::list_scene_dirs(path);
  if (dirs.empty()) throw DataError("no scenes (manifest.json) under " + path.string());
  return dirs;
}

void write_out(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  simlab::write_text(path, text);
}

struct EstimatorOpts {
  std::string method = "extrapolated";
  std::string model;
  double constant = occupancy::kReferenceMeanGamma;
  std::string gamma_file;
  std::string pixels = "objects";

  void add(CLI::App* c) {
    c->add_option("--estimator", method, "extrapolated | corrected | mean | external")->capture_default_str();
    c->add_option("--model", model, "corrector model JSON (estimator corrected)");
    c->add_option("--constant", constant, "constant for estimator mean")->capture_default_str();
    c->add_option("--gamma-file", gamma_file, "sidecar with one gamma value (estimator external)");
    c->add_option("--pixels", pixels, "objects | objects+container")->capture_default_str();
  }

  occupancy::EstimatorSpec spec() const {
    occupancy::EstimatorSpec s;
    s.method = occupancy::EstimatorSpec::parse_method(method);
    s.pixels = occupancy::parse_pixel_set(pixels);
    s.constant = constant;
    s.sidecar = gamma_file;
    if (!model.empty()) s.model = occupancy::load_model(model);
    s.validate();
    if (s.method == occupancy::EstimatorSpec::Method::External && !fs::exists(s.sidecar))
      throw DataError("missing gamma sidecar " + s.sidecar.string());
    return s;
  }
};

struct CarveOpts {
  carve::CarveParams params;
  double depth_tolerance = -1.0;

  void add(CLI::App* c) {
    c->add_option("--resolution", params.resolution, "voxels along the longest axis")->capture_default_str();
    c->add_option("--depth-tolerance", depth_tolerance, "depth slack in meters (default: voxel diagonal)");
    c->add_option("--min-views", params.min_views_inside, "views that must see a voxel inside (0: all)")
        ->capture_default_str();
  }

  carve::CarveParams get() const {
    carve::CarveParams p = params;
    if (depth_tolerance >= 0.0) p.depth_tolerance = depth_tolerance;
    p.validate();
    return p;
  }
};

std::vector<render::View> views_for(const fs::path& scene, const std::string& views_dir) {
  return render::load_views(views_dir.empty() ? scene / "views" : fs::path(views_dir));
}

// --- commands ----------------------------------------------------------------

struct GenOpts {
  std::string mesh;
  std::vector<std::string> shapes;
  int scenes = 1;
  std::uint64_t seed = 0;
  std::string out;
  simlab::GenConfig cfg;
  std::vector<double> dims;
  double wall_ratio = -1.0;
  int jobs = 1;
};

void cmd_gen(const GenOpts& o) {
  if (o.mesh.empty() == o.shapes.empty()) throw UsageError("gen: give exactly one of --mesh or --shape");
  if (o.scenes < 1) throw UsageError("gen: --scenes must be >= 1");
  simlab::GenConfig cfg = o.cfg;
  if (!o.dims.empty()) cfg.fixed_dims = Vec3(o.dims[0], o.dims[1], o.dims[2]);
  if (o.wall_ratio >= 0.0) cfg.fixed_wall_ratio = o.wall_ratio;
  cfg.validate();
  std::vector<std::pair<std::string, TriMesh>> meshes;
  if (!o.mesh.empty()) {
    meshes.emplace_back(fs::path(o.mesh).stem().string(), geom::load_obj(o.mesh));
  } else {
    for (const auto& s : o.shapes) meshes.emplace_back(s, geom::make_named_shape(s));
  }
  for (const auto& [name, m] : meshes) simlab::make_template(m, cfg.object_side);
  fs::create_directories(o.out);
  std::vector<std::string> rows(std::size_t(o.scenes));
  parallel_for(std::size_t(o.scenes), o.jobs, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto& [name, mesh] = meshes[i % meshes.size()];
      std::ostringstream id;
      id << "scene_" << std::setw(4) << std::setfill('0') << i;
      auto g = simlab::generate_scene(cfg, mesh, o.seed + i);
      simlab::save_scene(fs::path(o.out) / id.str(), g.scene, g.object.mesh);
      std::ostringstream row;
      row.precision(10);
      row << id.str() << ',' << name << ',' << g.scene.seed << ',' << g.scene.gt.count << ',' << g.scene.gt.gamma << ','
          << g.scene.gt.stack_volume << ',' << g.scene.gt.unit_volume << ',' << (g.scene.partially_full ? 1 : 0);
      rows[i] = row.str();
      log_info("generated " + id.str() + " (" + name + ", " + std::to_string(g.scene.gt.count) + " objects)");
    }
  });
  std::string csv = "scene_id,shape,seed,count,gamma,stack_volume,unit_volume,partially_full\n";
  for (const auto& r : rows) csv += r + "\n";
  simlab::write_text(fs::path(o.out) / "suite.csv", csv);
  std::cout << csv;
}

struct RenderOpts {
  std::string scene, out;
  render::RenderConfig cfg;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

void cmd_render(const RenderOpts& o) {
  auto dirs = scene_dirs(o.scene);
  bool suite = dirs.size() > 1 || dirs[0] != fs::path(o.scene);
  o.cfg.validate();
  parallel_for(dirs.size(), dirs.size() > 1 ? o.jobs : 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      auto loaded = simlab::load_scene(dirs[i]);
      render::RenderConfig cfg = o.cfg;
      cfg.seed = o.seed.value_or(loaded.scene.seed);
      cfg.jobs = dirs.size() > 1 ? 1 : o.jobs;
      fs::path dst = o.out.empty() ? dirs[i] : (suite ? fs::path(o.out) / dirs[i].filename() : fs::path(o.out));
      auto tracer = render::make_tracer(loaded.scene, loaded.object);
      auto cams = render::default_cameras(loaded.scene, loaded.object, cfg);
      for (std::size_t k = 0; k < cams.size(); ++k) {
        render::View v;
        v.id = static_cast<int>(k);
        v.camera = cams[k];
        std::tie(v.depth, v.mask) = render::render_view(tracer, cams[k], cfg.jobs);
        render::save_view(dst / "views", v);
      }
      log_info("rendered " + std::to_string(cams.size()) + " views into " + (dst / "views").string());
    }
  });
}

struct GtGammaOpts {
  std::string scene, out, region;
  std::size_t samples = 200000;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

void cmd_gtgamma(const GtGammaOpts& o) {
  auto dirs = scene_dirs(o.scene);
  std::ostringstream ss;
  ss.precision(10);
  ss << "scene_id,region,gamma,std_error,n_samples\n";
  for (const auto& d : dirs) {
    auto l = simlab::load_scene(d);
    auto region = o.region.empty() ? simlab::default_region(l.scene.container) : simlab::GammaRegion::parse(o.region);
    auto g = simlab::gt_gamma(l.scene.container, l.object, l.scene.poses, region, o.samples,
                              o.seed.value_or(l.scene.seed), o.jobs);
    ss << default_id(d) << ',' << region.name() << ',' << g.value << ',' << g.std_error << ',' << g.n_samples << '\n';
  }
  if (!o.out.empty()) write_out(o.out, ss.str());
  std::cout << ss.str();
}

struct CarveCmdOpts {
  std::string scene, views, out;
  CarveOpts carve;
  double t_ratio = -1.0;
  bool baselines = false;
  int jobs = 1;
};

void cmd_carve(const CarveCmdOpts& o) {
  if (o.out.empty()) throw UsageError("carve: --out is required");
  auto l = simlab::load_scene(o.scene);
  auto views = views_for(o.scene, o.views);
  double t = o.t_ratio >= 0.0 ? o.t_ratio : (l.scene.container.has_container ? l.scene.container.wall_ratio : 0.0);
  auto r = carve::estimate_volume(views, t, l.scene.container.inner_dims, o.carve.get(), o.jobs);
  fs::create_directories(o.out);
  carve::save_grid(fs::path(o.out) / "carved.vox", r.carved);
  carve::save_grid(fs::path(o.out) / "eroded.vox", r.eroded);
  json j = {{"volume", r.volume.value}, {"method", r.volume.method}, {"params", r.volume.params}};
  if (o.baselines) {
    auto pts = carve::subsample(carve::unproject_inside(views), 20000);
    j["convex"] = carve::convex_volume(pts).value;
    try {
      j["alpha"] = carve::alpha_volume(pts).value;
    } catch (const Error& e) {
      log_info(std::string("alpha hull failed: ") + e.what());
      j["alpha"] = nullptr;
    }
  }
  simlab::write_json(fs::path(o.out) / "volume.json", j);
  std::cout << j.dump(2) << "\n";
}

struct GammaOpts {
  std::string scene, views, out;
  EstimatorOpts est;
};

void cmd_gamma(const GammaOpts& o) {
  auto spec = o.est.spec();
  auto views = views_for(o.scene, o.views);
  std::size_t k = render::key_view_select(views);
  auto g = occupancy::estimate(spec, views[k].depth, views[k].mask);
  json j = {{"scene_id", default_id(o.scene)}, {"key_view", views[k].id}, {"gamma", g.value}, {"method", g.method}};
  if (spec.method != occupancy::EstimatorSpec::Method::External && spec.method != occupancy::EstimatorSpec::Method::Mean) {
    auto f = occupancy::depth_features(views[k].depth, views[k].mask, spec.pixels);
    j["features"] = {{"gamma_norm", f.gamma_norm}, {"depth_variance_norm", f.depth_variance_norm}, {"K", f.K}};
  }
  if (!o.out.empty()) write_out(o.out, j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
}

struct FitOpts {
  std::string suite, out, pixels = "objects";
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  int jobs = 1;
};

void cmd_fit(const FitOpts& o) {
  if (o.out.empty()) throw UsageError("fit-corrector: --out is required");
  auto records = evalkit::load_suite(o.suite);
  auto pixels = occupancy::parse_pixel_set(o.pixels);
  std::vector<evalkit::OccupancyRow> rows(records.size());
  parallel_for(records.size(), o.jobs, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) rows[i] = evalkit::occupancy_row(records[i], pixels);
  });
  auto st = evalkit::occupancy_study(rows, o.seed, o.train_fraction);
  fs::create_directories(o.out);
  occupancy::save_model(fs::path(o.out) / "model.json", st.model);
  simlab::write_text(fs::path(o.out) / "occupancy_study.csv", evalkit::occupancy_csv(st, rows));
  simlab::write_text(fs::path(o.out) / "occupancy_summary.csv", evalkit::summary_csv(st.methods));
  json j = {{"model", occupancy::model_json(st.model)}, {"mean_constant", st.mean_constant}, {"held_out", json::object()}};
  for (const auto& [name, m] : st.methods) j["held_out"][name] = m.to_json();
  std::cout << j.dump(2) << "\n";
}

struct CountOpts {
  std::string scene, views, out;
  EstimatorOpts est;
  CarveOpts carve;
  int jobs = 1;
};

void cmd_count(const CountOpts& o) {
  auto spec = o.est.spec();
  auto rec = evalkit::load_record(o.scene);
  rec.id = default_id(o.scene);
  auto views = views_for(o.scene, o.views);
  auto r = evalkit::run_pipeline(rec.scene, rec.object, views, spec, o.carve.get(), o.jobs, rec.id);
  auto csv = evalkit::report_csv({r.report});
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    simlab::write_text(fs::path(o.out) / "report.csv", csv);
    simlab::write_json(fs::path(o.out) / "pipeline.json", r.log());
  }
  std::cout << csv;
}

struct EvalOpts {
  std::string suite, out;
  EstimatorOpts est;
  CarveOpts carve;
  bool baselines = false;
  int jobs = 1;
};

void cmd_eval(const EvalOpts& o) {
  if (o.out.empty()) throw UsageError("eval: --out is required");
  auto spec = o.est.spec();
  auto params = o.carve.get();
  auto records = evalkit::load_suite(o.suite);
  std::vector<evalkit::CountReport> reports(records.size());
  std::vector<evalkit::VolumeRow> vrows(records.size());
  parallel_for(records.size(), o.jobs, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      reports[i] = evalkit::run_pipeline(records[i], spec, params).report;
      if (o.baselines)
        vrows[i] = evalkit::volume_row(records[i].scene, render::load_views(records[i].dir / "views"), params, 1,
                                       records[i].id);
    }
  });
  fs::create_directories(o.out);
  simlab::write_text(fs::path(o.out) / "report.csv", evalkit::report_csv(reports));
  std::vector<std::pair<std::string, evalkit::MetricsTable>> tables = {{"count", evalkit::suite_metrics(reports)}};
  if (o.baselines) {
    auto vs = evalkit::volume_study(vrows);
    simlab::write_text(fs::path(o.out) / "volume_study.csv", vs.csv());
    std::cout << "sMAPE carve " << vs.smape_carve << " convex " << vs.smape_convex << " alpha " << vs.smape_alpha
              << "\n";
  }
  auto summary = evalkit::summary_csv(tables);
  simlab::write_text(fs::path(o.out) / "summary.csv", summary);
  std::cout << summary;
}

struct ValidateOpts {
  std::string suite, out, region;
  std::size_t min_scenes = 50;
  std::size_t samples = 200000;
  int jobs = 1;
};

void cmd_validate(const ValidateOpts& o) {
  if (o.out.empty()) throw UsageError("validate: --out is required");
  std::optional<simlab::GammaRegion> region;
  if (!o.region.empty()) {
    region = simlab::GammaRegion::parse(o.region);
    if (region->kind != simlab::GammaRegion::Kind::SubBox) throw UsageError("validate: --region must be subbox:<side>");
  }
  auto records = evalkit::load_suite(o.suite);
  auto rep = evalkit::validate_counting_equation(records, o.min_scenes);
  fs::create_directories(o.out);
  simlab::write_text(fs::path(o.out) / "scatter.csv", rep.scatter_csv());
  std::string summary = rep.summary();
  simlab::write_text(fs::path(o.out) / "summary.csv",
                     evalkit::summary_csv({{"hull_volume", rep.hull}, {"region_volume", rep.region}}));
  if (region) {
    std::vector<simlab::BorderInput> in;
    for (const auto& r : records) in.push_back({r.id, &r.scene, &r.object});
    auto br = simlab::border_effect_study(in, region->side, o.samples, o.jobs);
    simlab::write_text(fs::path(o.out) / "border.csv", br.csv());
    std::ostringstream ss;
    ss.precision(6);
    ss << "border: mean gamma_with_edges " << br.mean_with << " gamma_no_edges " << br.mean_no
       << " relative difference " << br.relative_difference << " (" << br.rows.size() << " scenes)\n";
    summary += ss.str();
  }
  simlab::write_text(fs::path(o.out) / "summary.txt", summary);
  std::cout << summary;
}

struct ComplexityOpts {
  std::vector<std::string> meshes, shapes;
  double kappa0 = 0.0;
};

void cmd_complexity(const ComplexityOpts& o) {
  std::vector<std::pair<std::string, TriMesh>> meshes;
  for (const auto& p : o.meshes) meshes.emplace_back(p, geom::load_obj(p));
  for (const auto& s : o.shapes) meshes.emplace_back(s, geom::make_named_shape(s));
  if (meshes.empty()) throw UsageError("complexity: give --mesh or --shape");
  double k0 = o.kappa0;
  if (k0 <= 0.0)
    for (const auto& [n, m] : meshes) k0 = std::max(k0, geom::scaled_mean_curvature(m));
  std::cout << std::setprecision(10) << "mesh,kappa,scaled_kappa,kappa_term,convexity_defect,complexity\n";
  for (const auto& [n, m] : meshes) {
    auto c = geom::complexity_score(m, k0);
    std::cout << n << ',' << c.kappa << ',' << c.scaled_kappa << ',' << c.kappa_term << ',' << c.convexity_defect << ','
              << c.total << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  }

  CLI::App app{"Count stacked objects from depth views: N = gamma * V / v", "stackcount"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "no progress messages on stderr");

  GenOpts gen;
  auto* c_gen = app.add_subcommand("gen", "simulate scenes and write manifests");
  c_gen->add_option("--mesh", gen.mesh, "object mesh (OBJ)");
  c_gen->add_option("--shape", gen.shapes, "built-in shape(s), cycled over scenes")->delimiter(',');
  c_gen->add_option("--scenes", gen.scenes, "number of scenes")->capture_default_str();
  c_gen->add_option("--seed", gen.seed, "seed of scene 0; scene i uses seed + i")->required();
  c_gen->add_option("--out", gen.out, "output directory")->required();
  c_gen->add_option("--object-side", gen.cfg.object_side, "object cube-normalized size (m)")->capture_default_str();
  c_gen->add_option("--container-scale", gen.cfg.container_scale, "per-axis scale range lo hi")->expected(2);
  c_gen->add_option("--wall-ratio-range", gen.cfg.wall_ratio, "wall ratio range lo hi")->expected(2);
  c_gen->add_option("--dims", gen.dims, "fixed inner dimensions x y z")->expected(3);
  c_gen->add_option("--wall-ratio", gen.wall_ratio, "fixed wall thickness ratio");
  c_gen->add_option("--partial-prob", gen.cfg.p_partial, "probability of a partially full scene")->capture_default_str();
  c_gen->add_option("--no-container-prob", gen.cfg.p_no_container, "probability of a scene without container")
      ->capture_default_str();
  c_gen->add_option("--max-batches", gen.cfg.max_batches)->capture_default_str();
  c_gen->add_option("--batch-grid", gen.cfg.sim.batch_grid, "objects per batch nx ny nz")->expected(3);
  c_gen->add_option("--gamma-samples", gen.cfg.gamma_samples)->capture_default_str();
  c_gen->add_option("--solver-iterations", gen.cfg.sim.solver_iterations)->capture_default_str();
  c_gen->add_option("--jobs", gen.jobs, "parallel scenes")->capture_default_str();

  RenderOpts rnd;
  auto* c_render = app.add_subcommand("render", "render nadir + sphere views of a scene or suite");
  c_render->add_option("--scene", rnd.scene, "scene directory or suite root")->required();
  c_render->add_option("--out", rnd.out, "output root (default: the scene directory)");
  c_render->add_option("--views", rnd.cfg.n_views, "number of views")->capture_default_str();
  c_render->add_option("--width", rnd.cfg.width)->capture_default_str();
  c_render->add_option("--height", rnd.cfg.height)->capture_default_str();
  c_render->add_option("--fov", rnd.cfg.fov_deg, "field of view along the shorter side (deg)")->capture_default_str();
  c_render->add_option("--margin", rnd.cfg.margin, "framing margin")->capture_default_str();
  c_render->add_option("--seed", rnd.seed, "sphere-view seed (default: manifest seed)");
  c_render->add_option("--jobs", rnd.jobs)->capture_default_str();

  GtGammaOpts gg;
  auto* c_gt = app.add_subcommand("gtgamma", "Monte-Carlo ground-truth occupancy ratio");
  c_gt->add_option("--scene", gg.scene, "scene directory or suite root")->required();
  c_gt->add_option("--region", gg.region, "cavity | hull | subbox:<side> (default: cavity, hull without container)");
  c_gt->add_option("--samples", gg.samples)->capture_default_str();
  c_gt->add_option("--seed", gg.seed, "sampling seed (default: manifest seed)");
  c_gt->add_option("--out", gg.out, "CSV file");
  c_gt->add_option("--jobs", gg.jobs)->capture_default_str();

  CarveCmdOpts cc;
  auto* c_carve = app.add_subcommand("carve", "carve, erode and measure the stack volume");
  c_carve->add_option("--scene", cc.scene)->required();
  c_carve->add_option("--views", cc.views, "views directory (default: <scene>/views)");
  c_carve->add_option("--out", cc.out, "output directory")->required();
  c_carve->add_option("--wall-ratio", cc.t_ratio, "wall thickness ratio (default: manifest)");
  c_carve->add_flag("--baselines", cc.baselines, "also report convex and alpha hull volumes");
  c_carve->add_option("--jobs", cc.jobs)->capture_default_str();
  cc.carve.add(c_carve);

  GammaOpts ga;
  auto* c_gamma = app.add_subcommand("gamma", "estimate gamma from the key view");
  c_gamma->add_option("--scene", ga.scene)->required();
  c_gamma->add_option("--views", ga.views);
  c_gamma->add_option("--out", ga.out, "JSON file");
  ga.est.add(c_gamma);

  FitOpts fit;
  auto* c_fit = app.add_subcommand("fit-corrector", "fit the depth corrector on a seeded 80/20 split");
  c_fit->add_option("--suite", fit.suite, "rendered suite root")->required();
  c_fit->add_option("--out", fit.out, "output directory")->required();
  c_fit->add_option("--seed", fit.seed, "split seed")->required();
  c_fit->add_option("--train-fraction", fit.train_fraction)->capture_default_str();
  c_fit->add_option("--pixels", fit.pixels)->capture_default_str();
  c_fit->add_option("--jobs", fit.jobs)->capture_default_str();

  CountOpts cnt;
  auto* c_count = app.add_subcommand("count", "run the full pipeline on one scene");
  c_count->add_option("--scene", cnt.scene)->required();
  c_count->add_option("--views", cnt.views);
  c_count->add_option("--out", cnt.out, "output directory");
  c_count->add_option("--jobs", cnt.jobs)->capture_default_str();
  cnt.est.add(c_count);
  cnt.carve.add(c_count);

  EvalOpts ev;
  auto* c_eval = app.add_subcommand("eval", "run the pipeline over a rendered suite");
  c_eval->add_option("--suite", ev.suite)->required();
  c_eval->add_option("--out", ev.out, "output directory")->required();
  c_eval->add_flag("--baselines", ev.baselines, "volume study: carve vs convex vs alpha");
  c_eval->add_option("--jobs", ev.jobs)->capture_default_str();
  ev.est.add(c_eval);
  ev.carve.add(c_eval);

  ValidateOpts va;
  auto* c_val = app.add_subcommand("validate", "counting-equation fidelity and border study");
  c_val->add_option("--suite", va.suite)->required();
  c_val->add_option("--out", va.out, "output directory")->required();
  c_val->add_option("--min-scenes", va.min_scenes)->capture_default_str();
  c_val->add_option("--region", va.region, "subbox:<side> runs the border study");
  c_val->add_option("--samples", va.samples, "Monte-Carlo samples for the border study")->capture_default_str();
  c_val->add_option("--jobs", va.jobs)->capture_default_str();

  ComplexityOpts cx;
  auto* c_cx = app.add_subcommand("complexity", "shape complexity score");
  c_cx->add_option("--mesh", cx.meshes, "OBJ mesh(es)");
  c_cx->add_option("--shape", cx.shapes, "built-in shape(s)")->delimiter(',');
  c_cx->add_option("--kappa0", cx.kappa0, "normalizer (default: max scaled curvature of the inputs)");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  log_enabled() = !quiet;

  try {
    if (*c_gen) cmd_gen(gen);
    if (*c_render) cmd_render(rnd);
    if (*c_gt) cmd_gtgamma(gg);
    if (*c_carve) cmd_carve(cc);
    if (*c_gamma) cmd_gamma(ga);
    if (*c_fit) cmd_fit(fit);
    if (*c_count) cmd_count(cnt);
    if (*c_eval) cmd_eval(ev);
    if (*c_val) cmd_validate(va);
    if (*c_cx) cmd_complexity(cx);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
