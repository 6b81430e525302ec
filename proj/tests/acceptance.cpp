// Acceptance run: one PASS/FAIL line per criterion. Arguments select
// criteria by number (default: all). Artifacts go to $STACKCOUNT_ACCEPT_DIR
// or a temporary directory.

#include "stackcount/evalkit/evalkit.hpp"
#include "stackcount/geom/contains.hpp"
#include "stackcount/geom/curvature.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <set>

using namespace stackcount;
using geom::AABB;
using geom::TriMesh;
namespace fs = std::filesystem;

namespace {

fs::path g_root;
const std::vector<std::string> kShapes = {"cube", "sphere", "lprism", "torus", "capsule"};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int prec = 4) {
  std::ostringstream ss;
  ss.precision(prec);
  ss << v;
  return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<render::View> render_views(const simlab::Scene& scene, const TriMesh& object, int n, int px,
                                       std::uint64_t seed) {
  render::RenderConfig cfg;
  cfg.width = cfg.height = px;
  cfg.n_views = n;
  cfg.seed = seed;
  auto tracer = render::make_tracer(scene, object);
  std::vector<render::View> views;
  for (const auto& cam : render::default_cameras(scene, object, cfg)) {
    render::View v;
    v.id = static_cast<int>(views.size());
    v.camera = cam;
    std::tie(v.depth, v.mask) = render::render_view(tracer, cam);
    views.push_back(std::move(v));
  }
  return views;
}

evalkit::SceneRecord generate(const simlab::GenConfig& cfg, const std::string& shape, std::uint64_t seed) {
  auto g = simlab::generate_scene(cfg, geom::make_named_shape(shape), seed);
  char id[32];
  std::snprintf(id, sizeof id, "scene_%04llu", static_cast<unsigned long long>(seed));
  return {id, {}, std::move(g.scene), std::move(g.object.mesh)};
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Relative path -> bytes for every file below `dir`.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_bytes(e.path());
  return out;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string("\"") + STACKCOUNT_CLI + "\" " + args + " --quiet > /dev/null";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// --- suites shared by criteria 1 and 3 ---------------------------------------

const std::vector<evalkit::SceneRecord>& counting_suite() {
  static std::vector<evalkit::SceneRecord> suite = [] {
    simlab::GenConfig cfg;
    cfg.container_scale = {0.12, 0.25};
    cfg.gamma_samples = 200000;
    std::vector<evalkit::SceneRecord> out;
    auto t0 = std::chrono::steady_clock::now();
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      out.push_back(generate(cfg, kShapes[seed % kShapes.size()], seed));
      if ((seed + 1) % 25 == 0)
        std::fprintf(stderr, "  generated %llu/200 scenes (%.0f s)\n", static_cast<unsigned long long>(seed + 1),
                     seconds_since(t0));
    }
    return out;
  }();
  return suite;
}

// --- criteria ----------------------------------------------------------------

Outcome criterion1() {
  const auto& suite = counting_suite();
  auto rep = evalkit::validate_counting_equation(suite, 50);
  simlab::write_text(g_root / "c1_scatter.csv", rep.scatter_csv());
  std::set<std::string> shapes;
  for (std::size_t i = 0; i < suite.size(); ++i) shapes.insert(kShapes[i % kShapes.size()]);
  bool pass = rep.hull.r2 >= 0.85 && suite.size() >= 200 && shapes.size() >= 5;
  return {pass, "scenes " + std::to_string(suite.size()) + ", R2 " + num(rep.hull.r2) + " (need >= 0.85, target 0.90), MAE " +
                    num(rep.hull.mae) + ", mean signed error " + num(rep.hull.mean_signed_error) + ", slope " +
                    num(rep.slope)};
}

Outcome criterion2() {
  simlab::GenConfig cfg;
  cfg.container_scale = {0.4, 0.55};
  cfg.gamma_samples = 10000;
  const std::vector<std::string> shapes = {"cube", "lprism", "sphere"};
  carve::CarveParams params;
  params.resolution = 256;
  std::vector<evalkit::VolumeRow> rows;
  auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t k = 0; k < 20; ++k) {
    auto rec = generate(cfg, shapes[k % shapes.size()], 1000 + k);
    auto views = render_views(rec.scene, rec.object, 30, 256, 1000 + k);
    rows.push_back(evalkit::volume_row(rec.scene, views, params, 1, rec.id));
    std::fprintf(stderr, "  volume scene %llu/20 (%.0f s)\n", static_cast<unsigned long long>(k + 1), seconds_since(t0));
  }
  auto st = evalkit::volume_study(rows);
  simlab::write_text(g_root / "c2_volume.csv", st.csv());
  bool pass = st.smape_carve <= 12.0 && st.smape_carve < st.smape_convex;
  return {pass, "sMAPE carve " + num(st.smape_carve) + "% (need <= 12), convex " + num(st.smape_convex) + "%, alpha " +
                    num(st.smape_alpha) + "%"};
}

Outcome criterion3() {
  const auto& suite = counting_suite();
  std::vector<evalkit::OccupancyRow> rows;
  for (const auto& rec : suite) {
    auto views = render_views(rec.scene, rec.object, 1, 256, rec.scene.seed);
    rows.push_back({rec.id, occupancy::depth_features(views[0].depth, views[0].mask), rec.scene.gt.gamma});
  }
  auto st = evalkit::occupancy_study(rows, 0);
  simlab::write_text(g_root / "c3_occupancy.csv", evalkit::occupancy_csv(st, rows));
  double c = st.metrics("corrected").mae, m = st.metrics("mean").mae, e = st.metrics("extrapolated").mae;
  double bias = st.metrics("extrapolated").mean_signed_error;
  bool pass = rows.size() >= 150 && c < m && m < e && bias < 0.0;
  return {pass, "held-out " + std::to_string(st.test.size()) + ": MAE corrected " + num(c) + " < mean " + num(m) +
                    " < extrapolated " + num(e) + " [" + (c < m && m < e ? "ordering holds" : "ordering fails") +
                    "], extrapolated mean signed error " + num(bias) + " (need < 0)"};
}

Outcome criterion4() {
  simlab::GenConfig cfg;
  cfg.object_side = 0.1;
  cfg.fixed_dims = Vec3(1, 1, 1);
  cfg.p_partial = 0.0;
  cfg.gamma_samples = 10000;
  const std::vector<std::string> shapes = {"cube", "lprism"};
  std::vector<evalkit::SceneRecord> recs;
  auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t k = 0; k < 50; ++k) {
    recs.push_back(generate(cfg, shapes[k % shapes.size()], 2000 + k));
    if ((k + 1) % 10 == 0)
      std::fprintf(stderr, "  unit-box scene %llu/50 (%.0f s)\n", static_cast<unsigned long long>(k + 1), seconds_since(t0));
  }
  std::vector<simlab::BorderInput> in;
  for (const auto& r : recs) in.push_back({r.id, &r.scene, &r.object});
  const std::size_t samples = 200000;
  auto rep = simlab::border_effect_study(in, 0.5, samples);
  simlab::write_text(g_root / "c4_border.csv", rep.csv());
  double se = 0.0;
  for (const auto& r : rep.rows) se = std::max({se, r.stderr_with, r.stderr_no});
  double n = double(rep.rows.size());
  double se_diff = std::sqrt((rep.std_with * rep.std_with + rep.std_no * rep.std_no) / n);
  bool pass = rep.rows.size() >= 50 && samples >= 200000 && rep.relative_difference < 0.05;
  return {pass, "scenes " + std::to_string(rep.rows.size()) + ", mean gamma with edges " + num(rep.mean_with) +
                    ", no edges " + num(rep.mean_no) + ", relative difference " + num(rep.relative_difference) +
                    " (need < 0.05); max per-scene MC stderr " + num(se, 2) + ", stderr of mean difference " +
                    num(se_diff, 2)};
}

Outcome criterion5() {
  std::vector<std::string> failed;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };
  check(std::abs(geom::mesh_volume(geom::make_cube(1.0)) - 1.0) <= 1e-12, "cube volume");

  simlab::ContainerSpec box;
  auto sphere = geom::make_icosphere(0.5, 5);
  std::vector<geom::RigidPose> at_center{geom::RigidPose(Quat::Identity(), box.cavity().center())};
  auto g = simlab::gt_gamma(box, sphere, at_center, simlab::GammaRegion::parse("cavity"), 1000000, 5);
  check(std::abs(g.value - kPi / 6.0) <= 3.0 * g.std_error, "sphere containment");

  check(std::abs(geom::integrated_mean_curvature(geom::make_cube(1.0)) / (3 * kPi) - 1.0) <= 0.01, "cube curvature");

  auto a = evalkit::count_metrics({50}, {100});
  check(std::abs(a.smape - 200.0 / 3.0) <= 1e-12, "sMAPE");
  auto b = evalkit::count_metrics({0, 20}, {10, 10});
  check(std::abs(b.nae - 1.0) <= 1e-12 && std::abs(b.sre - 1.0) <= 1e-12 && std::abs(b.mae - 10.0) <= 1e-12,
        "NAE/SRE/MAE");
  std::vector<double> y = {0.2, 0.35, 0.4, 0.55, 0.31}, ybar(5, 0.362);
  check(std::abs(evalkit::regression_metrics(y, y).r2 - 1.0) <= 1e-12, "R2 perfect");
  check(std::abs(evalkit::regression_metrics(ybar, y).r2) <= 1e-12, "R2 mean");

  bool exact = true;
  for (double gam : {0.1, 0.323, 0.9})
    for (double V : {0.37, 2.0, 19.1})
      for (double s : {0.25, 0.5, 2.0, 8.0}) {
        double s3 = s * s * s;
        exact &= evalkit::count_from(gam, s3 * V, s3 * 0.013).n_est == evalkit::count_from(gam, V, 0.013).n_est;
      }
  check(exact, "count_from scale invariance");

  std::string d = "cube volume, sphere MC " + num(g.value, 6) + " vs pi/6 " + num(kPi / 6, 6) + " (3 sigma " +
                  num(3 * g.std_error, 2) + "), cube curvature, metric closed forms, count_from scaling";
  if (!failed.empty()) {
    d += "; failed:";
    for (const auto& f : failed) d += " " + f;
  }
  return {failed.empty(), d};
}

Outcome criterion6() {
  simlab::Scene lone;
  lone.container.has_container = false;
  lone.container.base_center = Vec3(0, 0, -3);
  lone.poses.emplace_back(Quat::Identity(), Vec3::Zero());
  std::size_t lost_total = 0, inner_total = 0;
  std::string d;
  for (const char* name : {"cube", "sphere"}) {
    TriMesh m = std::string(name) == "cube" ? geom::make_cube(1.0) : geom::make_icosphere(0.5, 4);
    render::RenderConfig cfg;
    cfg.width = cfg.height = 256;
    Rng rng(11);
    auto tracer = render::make_tracer(lone, m);
    std::vector<render::View> views;
    for (const auto& cam : render::make_sphere_cameras(lone, m, 30, rng, cfg)) {
      render::View v;
      v.id = static_cast<int>(views.size());
      v.camera = cam;
      std::tie(v.depth, v.mask) = render::render_view(tracer, cam);
      views.push_back(std::move(v));
    }
    carve::CarveParams p;
    p.resolution = 128;
    auto grid = carve::carve_views(views, p);
    geom::MeshLocator loc(m);
    std::size_t inner = 0, lost = 0;
    for (int k = 0; k < grid.dims[2]; ++k)
      for (int j = 0; j < grid.dims[1]; ++j)
        for (int i = 0; i < grid.dims[0]; ++i)
          if (loc.contains(grid.center(i, j, k))) {
            ++inner;
            lost += !grid.at(i, j, k);
          }
    inner_total += inner;
    lost_total += lost;
    d += std::string(d.empty() ? "" : ", ") + name + ": " + std::to_string(lost) + " of " + std::to_string(inner) +
         " interior voxels removed";
  }
  return {lost_total == 0 && inner_total > 0, d + " (grid 128, eps = voxel diagonal)"};
}

Outcome criterion7() {
  fs::path d = g_root / "c7";
  fs::remove_all(d);
  fs::create_directories(d);
  std::string gen = "gen --shape cube,sphere --scenes 2 --seed 11 --container-scale 0.12 0.16 --gamma-samples 20000";
  bool ok = run_cli(gen + " --out \"" + (d / "gen_a").string() + "\"") == 0 &&
            run_cli(gen + " --out \"" + (d / "gen_b").string() + "\"") == 0;
  bool gen_same = ok && tree(d / "gen_a") == tree(d / "gen_b");

  std::string scene = (d / "gen_a" / "scene_0000").string();
  std::string rnd = "render --scene \"" + scene + "\" --views 8 --width 96 --height 96 --seed 3";
  ok = run_cli(rnd + " --out \"" + (d / "render_a").string() + "\"") == 0 &&
       run_cli(rnd + " --out \"" + (d / "render_b").string() + "\"") == 0;
  bool render_same = ok && !tree(d / "render_a").empty() && tree(d / "render_a") == tree(d / "render_b");

  std::string gt = "gtgamma --scene \"" + (d / "gen_a").string() + "\" --samples 50000 --seed 5";
  ok = run_cli(gt + " --out \"" + (d / "gt_a.csv").string() + "\"") == 0 &&
       run_cli(gt + " --jobs 4 --out \"" + (d / "gt_b.csv").string() + "\"") == 0;
  bool gt_same = ok && read_bytes(d / "gt_a.csv") == read_bytes(d / "gt_b.csv");

  std::string views = (d / "render_a" / "views").string();
  std::string carve = "carve --scene \"" + scene + "\" --views \"" + views + "\" --resolution 96";
  ok = run_cli(carve + " --jobs 1 --out \"" + (d / "carve_1").string() + "\"") == 0 &&
       run_cli(carve + " --jobs 8 --out \"" + (d / "carve_8").string() + "\"") == 0;
  bool carve_same = ok && tree(d / "carve_1") == tree(d / "carve_8");

  auto yn = [](bool b) { return b ? std::string("identical") : std::string("DIFFERENT"); };
  return {gen_same && render_same && gt_same && carve_same,
          "gen " + yn(gen_same) + ", render " + yn(render_same) + ", gtgamma " + yn(gt_same) + ", carve jobs 1 vs 8 " +
              yn(carve_same)};
}

// Lattice of L^3 cubes filling a unit cavity, counted through the CLI.
std::pair<bool, double> lattice_count(int L, std::string& err) {
  fs::path d = g_root / ("c8_lattice" + std::to_string(L));
  fs::remove_all(d);
  simlab::Scene s;
  s.container.inner_dims = Vec3::Ones();
  s.container.wall_ratio = 0.02;
  TriMesh cube = geom::make_cube(1.0 / L);
  AABB cav = s.container.cavity();
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j)
      for (int k = 0; k < L; ++k) s.poses.emplace_back(Quat::Identity(), cav.min + Vec3(i + 0.5, j + 0.5, k + 0.5) / L);
  s.gt.count = s.poses.size();
  s.gt.unit_volume = geom::mesh_volume(cube);
  s.gt.gamma = 1.0;
  s.gt.stack_volume = simlab::gt_stack_volume(cube, s.poses);
  s.gt.gamma_region = "cavity";
  simlab::save_scene(d / "scene", s, cube);
  simlab::write_text(d / "gamma.txt", "1\n");
  std::string sc = "\"" + (d / "scene").string() + "\"";
  if (run_cli("render --scene " + sc + " --views 30 --width 256 --height 256") != 0) {
    err = "render failed";
    return {false, 0.0};
  }
  if (run_cli("count --scene " + sc + " --estimator external --gamma-file \"" + (d / "gamma.txt").string() +
              "\" --resolution 256 --out \"" + (d / "count").string() + "\"") != 0) {
    err = "count failed";
    return {false, 0.0};
  }
  std::istringstream csv(read_bytes(d / "count" / "report.csv"));
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  std::vector<std::string> f;
  std::stringstream rs(row);
  for (std::string x; std::getline(rs, x, ',');) f.push_back(x);
  if (f.size() < 7) {
    err = "bad report " + row;
    return {false, 0.0};
  }
  double n_est = std::stod(f[4]);
  long long n_rounded = std::stoll(f[5]);
  return {n_rounded == static_cast<long long>(s.gt.count), n_est};
}

Outcome criterion8() {
  std::string err;
  auto [ok2, n2] = lattice_count(2, err);
  if (!err.empty()) return {false, err};
  std::string d = "2x2x2 lattice: n_est " + num(n2, 6) + " -> " + (ok2 ? "8 exact" : "wrong count");
  auto [ok3, n3] = lattice_count(3, err);
  d += "; note: 3x3x3 n_est " + num(n3, 6) + (ok3 ? " (exact)" : " (not exact)");
  return {ok2, d};
}

}  // namespace

int main(int argc, char** argv) {
  log_enabled() = false;
  std::set<int> want;
  for (int i = 1; i < argc; ++i) want.insert(std::atoi(argv[i]));
  if (want.empty()) want = {1, 2, 3, 4, 5, 6, 7, 8};
  const char* env = std::getenv("STACKCOUNT_ACCEPT_DIR");
  g_root = env ? fs::path(env) : fs::temp_directory_path() / "stackcount_acceptance";
  fs::create_directories(g_root);

  const std::vector<std::pair<const char*, Outcome (*)()>> criteria = {
      {"counting-equation fidelity", criterion1}, {"volume estimation ordering", criterion2},
      {"occupancy-baseline ordering", criterion3}, {"border effects", criterion4},
      {"analytic unit suite", criterion5},         {"carving soundness", criterion6},
      {"determinism", criterion7},                 {"full-box lattice count", criterion8}};
  int failures = 0;
  for (int id = 1; id <= 8; ++id) {
    if (!want.count(id)) continue;
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[id - 1].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %d (%s): %s [%.0f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[id - 1].first,
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("artifacts in %s\n", g_root.string().c_str());
  return failures == 0 ? 0 : 1;
}
