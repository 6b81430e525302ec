#include "stackcount/simlab/scene.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace stackcount;
using namespace stackcount::simlab;

namespace {

ContainerSpec unit_container(double ratio = 0.02) {
  ContainerSpec c;
  c.inner_dims = Vec3::Ones();
  c.wall_ratio = ratio;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("stackcount_simlab_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

GenConfig small_config() {
  GenConfig cfg;
  cfg.container_scale = {0.14, 0.18};
  cfg.sim.batch_grid = {2, 2, 2};
  cfg.max_batches = 3;
  cfg.gamma_samples = 20000;
  return cfg;
}

// Half of a centered 0.5 sub-box: a slab standing on the floor up to the rim.
struct HalfFixture {
  ContainerSpec container = unit_container();
  TriMesh object = geom::make_box(Vec3(-0.125, -0.25, -0.5), Vec3(0.125, 0.25, 0.5));
  std::vector<RigidPose> poses;
  HalfFixture() {
    double mid = container.floor_z() + 0.5;
    poses.emplace_back(Quat::Identity(), Vec3(-0.125, 0.0, mid));
  }
};

}  // namespace

TEST(Container, UnitDimsAndWalls) {
  auto c = unit_container();
  EXPECT_NEAR(c.thickness(), 0.02, 1e-15);
  Vec3 cav = c.cavity().extent(), out = c.outer().extent();
  EXPECT_NEAR(cav.x(), 1.0, 1e-12);
  EXPECT_NEAR(cav.z(), 1.0, 1e-12);
  EXPECT_NEAR(out.x(), 1.04, 1e-12);
  EXPECT_NEAR(out.y(), 1.04, 1e-12);
  EXPECT_NEAR(out.z(), 1.02, 1e-12);
}

TEST(Container, MeshIsWatertightShell) {
  auto c = unit_container();
  TriMesh m = make_container(c);
  auto check = geom::check_mesh(m);
  EXPECT_TRUE(check.watertight);
  EXPECT_EQ(check.components, 1u);
  EXPECT_NEAR(geom::signed_volume(m), 1.04 * 1.04 * 1.02 - 1.0, 1e-12);
}

TEST(Container, SlabsCoverShellVolume) {
  auto c = unit_container(0.03);
  double total = 0.0;
  for (const auto& s : c.slabs()) total += s.volume();
  EXPECT_NEAR(total, geom::signed_volume(make_container(c)), 1e-12);
}

TEST(Container, Errors) {
  auto c = unit_container(0.0);
  EXPECT_THROW(
      {
        try {
          make_container(c);
        } catch (const DataError& e) {
          EXPECT_NE(std::string(e.what()).find("degenerate"), std::string::npos);
          throw;
        }
      },
      DataError);
  EXPECT_THROW(make_container(unit_container(0.2)), DataError);
  auto sideways = unit_container();
  sideways.up_axis = 0;
  EXPECT_THROW(sideways.validate(), UsageError);
}

TEST(Container, NoContainerGivesEmptyMesh) {
  auto c = unit_container();
  c.has_container = false;
  EXPECT_TRUE(make_container(c).triangles.empty());
  EXPECT_TRUE(c.slabs().empty());
}

TEST(SimParams, Validation) {
  SimParams p;
  EXPECT_NO_THROW(p.validate());
  p.timestep = 1.0 / 30.0;
  EXPECT_THROW(p.validate(), UsageError);
  p = SimParams{};
  p.restitution = 0.1;
  EXPECT_THROW(p.validate(), UsageError);
  p = SimParams{};
  p.batch_grid = {4, 0, 5};
  EXPECT_THROW(p.validate(), UsageError);
}

TEST(SimParams, JsonRoundTrip) {
  SimParams p;
  p.friction = 0.3;
  p.batch_grid = {2, 3, 4};
  SimParams q = json_sim(sim_json(p));
  EXPECT_EQ(q.friction, 0.3);
  EXPECT_EQ(q.batch_grid, p.batch_grid);
  EXPECT_EQ(sim_json(q).dump(), sim_json(p).dump());
}

TEST(Proxy, CubeHasCornersEdgeSamplesAndSixPlanes) {
  auto p = make_proxy(geom::make_cube(1.0), 0.25);
  EXPECT_EQ(p.normals.size(), 6u);
  EXPECT_EQ(p.points.size(), 8u + 12u * 3u);
  std::size_t face = 0;
  EXPECT_NEAR(p.plane_distance(Vec3(0.0, 0.0, 0.7), face), 0.2, 1e-12);
  EXPECT_NEAR(p.normals[face].z(), 1.0, 1e-12);
  EXPECT_NEAR(p.plane_distance(Vec3::Zero(), face), -0.5, 1e-12);
}

TEST(Settle, CubeRestsFlatOnFloor) {
  auto obj = make_template(geom::make_cube(1.0), 0.05);
  auto c = unit_container();
  c.inner_dims = Vec3(0.3, 0.3, 0.3);
  SceneSimulator sim(obj, c, SimParams{});
  Rng rng(3);
  sim.add(RigidPose(spawn_rotation(rng, 20.0, 0.0), Vec3(0.0, 0.0, c.floor_z() + 0.1)));
  ASSERT_TRUE(sim.settle());
  auto pose = sim.poses()[0];
  EXPECT_NEAR(pose.translation.z(), c.floor_z() + 0.025, 1e-3);
  EXPECT_GT(std::abs((pose.rotation * Vec3::UnitZ()).z()), 1.0 - 1e-4);
}

TEST(Settle, StackedSpheresDoNotInterpenetrate) {
  auto obj = make_template(geom::make_icosphere(1.0, 2), 0.05);
  auto c = unit_container();
  c.inner_dims = Vec3(0.3, 0.3, 0.4);
  SceneSimulator sim(obj, c, SimParams{});
  sim.add(RigidPose(Quat::Identity(), Vec3(0.0, 0.0, c.floor_z() + 0.05)));
  sim.add(RigidPose(Quat::Identity(), Vec3(0.0, 0.0, c.floor_z() + 0.15)));
  sim.settle();
  auto poses = sim.poses();
  double d = (poses[0].translation - poses[1].translation).norm();
  double diameter = obj.mesh.bounds().extent().z();
  EXPECT_GE(d, diameter - 1e-3);
}

TEST(Settle, PileIsDeterministicAndShallowlyPenetrating) {
  auto run = [] {
    auto obj = make_template(geom::make_named_shape("lprism"), 0.05);
    auto c = unit_container();
    c.inner_dims = Vec3(0.15, 0.15, 0.3);
    SimParams p;
    SceneSimulator sim(obj, c, p);
    Rng rng(11);
    for (int k = 0; k < 12; ++k) {
      Vec3 x(uniform(rng, -0.04, 0.04), uniform(rng, -0.04, 0.04), c.floor_z() + 0.05 + 0.06 * k);
      sim.add(RigidPose(spawn_rotation(rng, 20.0, 20.0), x));
    }
    bool ok = sim.settle();
    return std::make_tuple(ok, sim.poses(), sim.max_penetration());
  };
  auto [ok1, poses1, pen1] = run();
  auto [ok2, poses2, pen2] = run();
  EXPECT_TRUE(ok1);
  EXPECT_LE(pen1, 1e-3);
  ASSERT_EQ(poses1.size(), poses2.size());
  for (std::size_t i = 0; i < poses1.size(); ++i) {
    EXPECT_EQ(poses1[i].translation, poses2[i].translation);
    EXPECT_EQ(poses1[i].rotation.coeffs(), poses2[i].rotation.coeffs());
  }
}

TEST(Overflow, SentinelCases) {
  auto c = unit_container();
  EXPECT_FALSE(overflow_check(c, {}));
  double rim = c.rim_z();
  EXPECT_TRUE(overflow_check(c, {AABB(Vec3(-0.1, -0.1, rim + 0.01), Vec3(0.1, 0.1, rim + 0.2))}));
  EXPECT_TRUE(overflow_check(c, {AABB(Vec3(-0.1, -0.1, rim - 0.05), Vec3(0.1, 0.1, rim + 0.05))}));
  EXPECT_FALSE(overflow_check(c, {AABB(Vec3(-0.1, -0.1, c.floor_z()), Vec3(0.1, 0.1, rim - 0.01))}));
  c.has_container = false;
  EXPECT_FALSE(overflow_check(c, {AABB(Vec3(0, 0, 5), Vec3(1, 1, 6))}));
}

TEST(Prune, RetainedRule) {
  auto c = unit_container();
  double r = 0.05;
  EXPECT_TRUE(retained(c, Vec3(0.0, 0.0, 0.5)));
  EXPECT_TRUE(retained(c, Vec3(0.0, 0.0, c.rim_z() - 0.5 * r)));
  EXPECT_FALSE(retained(c, Vec3(0.0, 0.0, c.rim_z() + 0.5 * r)));
  EXPECT_FALSE(retained(c, Vec3(0.49, 0.0, c.rim_z() + 0.5 * r)));
  EXPECT_FALSE(retained(c, Vec3(0.51, 0.0, 0.5)));
  EXPECT_FALSE(retained(c, Vec3(0.0, 0.0, c.floor_z() - 0.001)));
  c.has_container = false;
  EXPECT_TRUE(retained(c, Vec3(5, 5, 5)));
}

TEST(GtGamma, RegionInsideOneObject) {
  auto c = unit_container();
  TriMesh big = geom::make_cube(1.2);
  std::vector<RigidPose> poses{RigidPose(Quat::Identity(), c.cavity().center())};
  auto g = gt_gamma(c, big, poses, GammaRegion::parse("cavity"), 10000, 1);
  EXPECT_EQ(g.value, 1.0);
  EXPECT_EQ(g.std_error, 0.0);
}

TEST(GtGamma, RegionWithoutObjects) {
  auto c = unit_container();
  TriMesh small = geom::make_cube(0.1);
  std::vector<RigidPose> poses{RigidPose(Quat::Identity(), Vec3(-0.44, -0.44, c.floor_z() + 0.05))};
  auto g = gt_gamma(c, small, poses, GammaRegion::parse("subbox:0.1"), 10000, 2);
  EXPECT_EQ(g.value, 0.0);
}

TEST(GtGamma, HalfFilledSubBox) {
  HalfFixture f;
  auto g = gt_gamma(f.container, f.object, f.poses, GammaRegion::parse("subbox:0.5"), 200000, 5);
  EXPECT_NEAR(g.value, 0.5, 3.0 * g.std_error);
  EXPECT_DOUBLE_EQ(g.std_error, std::sqrt(g.value * (1.0 - g.value) / 200000.0));
  EXPECT_EQ(g.n_samples, 200000u);
}

TEST(GtGamma, StdErrorScalesAsInverseSqrtN) {
  HalfFixture f;
  std::vector<double> se;
  for (std::size_t n : {10000u, 40000u, 160000u})
    se.push_back(gt_gamma(f.container, f.object, f.poses, GammaRegion::parse("subbox:0.5"), n, 9).std_error);
  EXPECT_NEAR(se[0] / se[1], 2.0, 0.05);
  EXPECT_NEAR(se[1] / se[2], 2.0, 0.05);
}

TEST(GtGamma, IndependentOfJobs) {
  HalfFixture f;
  auto a = gt_gamma(f.container, f.object, f.poses, GammaRegion::parse("subbox:0.5"), 50000, 4, 1);
  auto b = gt_gamma(f.container, f.object, f.poses, GammaRegion::parse("subbox:0.5"), 50000, 4, 3);
  EXPECT_EQ(a.value, b.value);
}

TEST(GtGamma, SphereLatticeHullAndCavityAgree) {
  auto c = unit_container();
  const int n = 10;
  const double d = 1.0 / n;
  TriMesh sphere = geom::make_icosphere(d / 2, 2);
  std::vector<RigidPose> poses;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        poses.emplace_back(Quat::Identity(), Vec3(-0.5 + (i + 0.5) * d, -0.5 + (j + 0.5) * d, c.floor_z() + (k + 0.5) * d));
  auto cav = gt_gamma(c, sphere, poses, GammaRegion::parse("cavity"), 200000, 21);
  auto hull = gt_gamma(c, sphere, poses, GammaRegion::parse("hull"), 200000, 22);
  double combined = std::hypot(cav.std_error, hull.std_error);
  EXPECT_NEAR(cav.value, hull.value, 3.0 * combined);
  EXPECT_GT(cav.value, 0.0);
  EXPECT_LE(hull.value, 1.0);
}

TEST(GtGamma, Errors) {
  HalfFixture f;
  EXPECT_THROW(gt_gamma(f.container, f.object, {}, GammaRegion{}, 10000, 1), DataError);
  EXPECT_THROW(gt_gamma(f.container, f.object, f.poses, GammaRegion::parse("subbox:2"), 10000, 1), DataError);
  EXPECT_THROW(GammaRegion::parse("sphere"), UsageError);
  EXPECT_THROW(GammaRegion::parse("subbox:-1"), UsageError);
  auto open = f.container;
  open.has_container = false;
  EXPECT_THROW(gt_gamma(open, f.object, f.poses, GammaRegion::parse("cavity"), 10000, 1), DataError);
}

TEST(StackVolume, UnitCubes) {
  TriMesh cube = geom::make_cube(1.0);
  std::vector<RigidPose> one{RigidPose(Quat::Identity(), Vec3(0, 0, 0.5))};
  EXPECT_NEAR(gt_stack_volume(cube, one), 1.0, 1e-12);
  auto two = one;
  two.emplace_back(Quat::Identity(), Vec3(0, 0, 1.5));
  EXPECT_NEAR(gt_stack_volume(cube, two), 2.0, 1e-12);
  EXPECT_THROW(gt_stack_volume(cube, {}), DataError);
}

TEST(Template, RejectsOpenMesh) {
  TriMesh m = geom::make_cube(1.0);
  m.triangles.pop_back();
  try {
    make_template(m, 0.05);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("check_mesh"), std::string::npos);
  }
}

TEST(Template, NormalizedAndCentered) {
  auto t = make_template(geom::make_named_shape("torus"), 0.05);
  EXPECT_NEAR(t.mesh.bounds().extent().maxCoeff(), 0.05, 1e-12);
  EXPECT_LT(geom::mass_properties(t.mesh).centroid.norm(), 1e-12);
  EXPECT_GT(t.volume, 0.0);
}

TEST(Generate, ManifestIsByteIdenticalPerSeed) {
  auto cfg = small_config();
  auto mesh = geom::make_named_shape("cube");
  auto a = generate_scene(cfg, mesh, 42);
  auto b = generate_scene(cfg, mesh, 42);
  EXPECT_EQ(scene_json(a.scene).dump(2), scene_json(b.scene).dump(2));
  auto c = generate_scene(cfg, mesh, 43);
  EXPECT_NE(scene_json(a.scene).dump(2), scene_json(c.scene).dump(2));
}

TEST(Generate, GroundTruthInvariants) {
  auto cfg = small_config();
  for (const char* shape : {"cube", "sphere", "lprism"}) {
    auto g = generate_scene(cfg, geom::make_named_shape(shape), 5);
    const Scene& s = g.scene;
    ASSERT_EQ(s.gt.count, s.poses.size()) << shape;
    EXPECT_GT(s.gt.unit_volume, 0.0);
    EXPECT_GT(s.gt.gamma, 0.0);
    EXPECT_LE(s.gt.gamma, 1.0);
    EXPECT_EQ(s.gt.gamma_region, "cavity");
    AABB cav = s.container.cavity();
    auto hp = hull_points(g.object.mesh);
    for (const auto& p : s.poses) {
      EXPECT_TRUE(posed_bounds(hp, p).intersects(cav)) << shape;
      EXPECT_GE(p.translation.z(), cav.min.z()) << shape;
    }
    double n = double(s.gt.count);
    double nest = s.gt.gamma * s.gt.stack_volume / s.gt.unit_volume;
    // A handful of objects against the walls: coarse agreement only.
    EXPECT_LE(std::abs(n - nest) / n, 0.5) << shape;
  }
}

TEST(Generate, SingleBatchEarlyStopIsPartial) {
  auto cfg = small_config();
  cfg.container_scale = {0.3, 0.3};
  cfg.max_batches = 1;
  auto g = generate_scene(cfg, geom::make_named_shape("cube"), 1);
  EXPECT_TRUE(g.scene.partially_full);
  EXPECT_EQ(g.scene.batches, 1u);
  EXPECT_EQ(g.scene.gt.count, 8u);
}

TEST(Generate, WithoutContainerUsesHullRegion) {
  auto cfg = small_config();
  cfg.p_no_container = 1.0;
  auto g = generate_scene(cfg, geom::make_named_shape("sphere"), 2);
  EXPECT_FALSE(g.scene.container.has_container);
  EXPECT_FALSE(g.scene.partially_full);
  EXPECT_EQ(g.scene.gt.gamma_region, "hull");
  EXPECT_GT(g.scene.gt.gamma, 0.0);
}

TEST(Generate, ObjectLargerThanCavity) {
  auto cfg = small_config();
  cfg.object_side = 0.5;
  EXPECT_THROW(generate_scene(cfg, geom::make_named_shape("cube"), 0), DataError);
}

TEST(SceneIo, SaveLoadRoundTrip) {
  auto g = generate_scene(small_config(), geom::make_named_shape("lprism"), 8);
  auto dir = temp_dir("roundtrip");
  save_scene(dir, g.scene, g.object.mesh);
  EXPECT_TRUE(std::filesystem::exists(dir / "assets" / "container.obj"));
  auto loaded = load_scene(dir);
  EXPECT_EQ(scene_json(loaded.scene).dump(), scene_json(g.scene).dump());
  EXPECT_NEAR(geom::mesh_volume(loaded.object), g.object.volume, 1e-15);
  std::filesystem::remove_all(dir);
}

TEST(SceneIo, CorruptManifestNamesPath) {
  auto dir = temp_dir("corrupt");
  write_text(dir / "manifest.json", "{\"schema_version\": 1, \"seed\": ");
  try {
    load_scene(dir);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("manifest.json"), std::string::npos);
  }
  write_text(dir / "manifest.json", "{\"schema_version\": 1}");
  EXPECT_THROW(load_scene(dir), DataError);
  std::filesystem::remove_all(dir);
}

TEST(BorderStudy, ReportsBothRegionsAndSkipsOpenScenes) {
  HalfFixture f;
  Scene with;
  with.container = f.container;
  with.poses = f.poses;
  Scene open = with;
  open.container.has_container = false;
  std::vector<BorderInput> in{{"a", &with, &f.object}, {"b", &open, &f.object}};
  auto rep = border_effect_study(in, 0.5, 40000);
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_EQ(rep.skipped, 1u);
  EXPECT_NEAR(rep.rows[0].gamma_with_edges, 0.125, 4.0 * rep.rows[0].stderr_with);
  EXPECT_NEAR(rep.rows[0].gamma_no_edges, 0.5, 4.0 * rep.rows[0].stderr_no);
  EXPECT_EQ(rep.csv().rfind("scene_id,gamma_with_edges,stderr_with,gamma_no_edges,stderr_no\n", 0), 0u);
  EXPECT_THROW(border_effect_study({}, 0.5, 40000), DataError);
  EXPECT_THROW(border_effect_study({in[1]}, 0.5, 40000), DataError);
}
