#include "stackcount/render/views.hpp"

#include <gtest/gtest.h>

using namespace stackcount;
using namespace stackcount::render;
using simlab::Scene;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("stackcount_render_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

Scene unit_box_scene() {
  Scene s;
  s.container.inner_dims = Vec3::Ones();
  s.container.wall_ratio = 0.02;
  return s;
}

// Unit box filled by a 4x4x4 lattice of 0.25 cubes.
struct FullBox {
  Scene scene = unit_box_scene();
  TriMesh cube = geom::make_cube(0.25);
  FullBox() {
    AABB cav = scene.container.cavity();
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 4; ++k)
          scene.poses.emplace_back(Quat::Identity(), cav.min + Vec3(i + 0.5, j + 0.5, k + 0.5) * 0.25);
  }
};

// A few loose cubes in a small box.
struct Loose {
  Scene scene = unit_box_scene();
  TriMesh cube = geom::make_cube(0.2);
  Loose() {
    double z = scene.container.floor_z() + 0.1;
    scene.poses.emplace_back(Quat::Identity(), Vec3(-0.2, -0.2, z));
    scene.poses.emplace_back(Quat(Eigen::AngleAxisd(0.4, Vec3(1, 1, 0).normalized())), Vec3(0.2, 0.1, z + 0.05));
    scene.poses.emplace_back(Quat(Eigen::AngleAxisd(0.9, Vec3::UnitZ())), Vec3(0.0, 0.25, z));
  }
};

RenderConfig small_cfg(int w = 96, int h = 80) {
  RenderConfig c;
  c.width = w;
  c.height = h;
  return c;
}

}  // namespace

TEST(Camera, JsonRoundTripAndValidation) {
  Camera c = look_at(Vec3(1, 2, 3), Vec3(0, 0, 0.5), Vec3::UnitZ(), 100.0, 64, 48);
  Camera d = json_camera(camera_json(c));
  EXPECT_TRUE(d.R.isApprox(c.R, 1e-15));
  EXPECT_TRUE(d.t.isApprox(c.t, 1e-15));
  EXPECT_EQ(d.width, 64);
  EXPECT_EQ(camera_json(c).at("world_to_camera").size(), 16u);

  json bad = camera_json(c);
  bad["world_to_camera"][0] = 2.0;
  EXPECT_THROW(json_camera(bad), DataError);
  bad = camera_json(c);
  bad["cx"] = 64.0;
  EXPECT_THROW(json_camera(bad), DataError);
  bad = camera_json(c);
  bad["fx"] = 0.0;
  EXPECT_THROW(json_camera(bad), DataError);
}

TEST(Camera, ProjectUnprojectAgree) {
  Camera c = look_at(Vec3(0.3, -1.5, 1.2), Vec3(0, 0, 0.2), Vec3::UnitZ(), 80.0, 101, 75);
  Rng rng(1);
  for (int k = 0; k < 100; ++k) {
    int i = static_cast<int>(uniform(rng, 0, 101)), j = static_cast<int>(uniform(rng, 0, 75));
    double depth = uniform(rng, 0.1, 3.0);
    Vec3 p = c.unproject(i, j, depth);
    double u, v, range;
    ASSERT_TRUE(c.project(p, u, v, range));
    EXPECT_NEAR(u, i + 0.5, 1e-9);
    EXPECT_NEAR(v, j + 0.5, 1e-9);
    EXPECT_NEAR(range, depth, 1e-12);
  }
  double u, v, r;
  EXPECT_FALSE(c.project(c.center() - c.forward(), u, v, r));
}

TEST(Nadir, FramesUnitBoxWithinMargin) {
  FullBox f;
  auto cfg = small_cfg(200, 150);
  Camera cam = make_nadir_camera(f.scene, f.cube, cfg);
  EXPECT_NEAR(cam.forward().z(), -1.0, 1e-15);
  AABB o = f.scene.container.outer();
  double umin = 1e9, umax = -1e9, vmin = 1e9, vmax = -1e9;
  for (int k = 0; k < 8; ++k) {
    Vec3 p(k & 1 ? o.max.x() : o.min.x(), k & 2 ? o.max.y() : o.min.y(), k & 4 ? o.max.z() : o.min.z());
    double u, v, r;
    ASSERT_TRUE(cam.project(p, u, v, r));
    umin = std::min(umin, u), umax = std::max(umax, u), vmin = std::min(vmin, v), vmax = std::max(vmax, v);
  }
  EXPECT_LE(umax - umin, 0.9 * cfg.width + 1e-9);
  EXPECT_LE(vmax - vmin, 0.9 * cfg.height + 1e-9);
  EXPECT_NEAR(std::max((umax - umin) / cfg.width, (vmax - vmin) / cfg.height), 0.9, 1e-9);
}

TEST(Nadir, WithoutContainerFramesStack) {
  Loose f;
  f.scene.container.has_container = false;
  auto cfg = small_cfg();
  Camera cam = make_nadir_camera(f.scene, f.cube, cfg);
  AABB b = stack_bounds(f.scene, f.cube);
  Vec3 eye = cam.center();
  EXPECT_NEAR(eye.x(), b.center().x(), 1e-12);
  EXPECT_NEAR(eye.y(), b.center().y(), 1e-12);
  EXPECT_GT(eye.z(), b.max.z());
}

TEST(Nadir, DegenerateMargin) {
  FullBox f;
  auto cfg = small_cfg();
  cfg.margin = 1.0;
  EXPECT_THROW(make_nadir_camera(f.scene, f.cube, cfg), UsageError);
}

TEST(SphereCameras, DistinctAimedAndDeterministic) {
  Loose f;
  auto cfg = small_cfg();
  Rng a(17), b(17);
  auto cams = make_sphere_cameras(f.scene, f.cube, 29, a, cfg);
  auto again = make_sphere_cameras(f.scene, f.cube, 29, b, cfg);
  ASSERT_EQ(cams.size(), 29u);
  Vec3 target = stack_centroid(f.scene);
  for (std::size_t k = 0; k < cams.size(); ++k) {
    Vec3 local = cams[k].to_camera(target);
    EXPECT_LT(std::hypot(local.x(), local.y()) / local.z(), 1e-9);
    Vec3 dir = (cams[k].center() - target).normalized();
    double el = std::asin(dir.z()) * 180.0 / kPi;
    EXPECT_GE(el, 15.0 - 1e-9);
    EXPECT_LE(el, 85.0 + 1e-9);
    EXPECT_EQ(cams[k].R, again[k].R);
    EXPECT_EQ(cams[k].t, again[k].t);
    for (std::size_t m = 0; m < k; ++m) EXPECT_GT((cams[k].center() - cams[m].center()).norm(), 1e-6);
  }
  Rng c(3);
  EXPECT_EQ(make_sphere_cameras(f.scene, f.cube, 1, c, cfg).size(), 1u);
}

TEST(SphereCameras, SceneStaysInFrame) {
  FullBox f;
  auto cfg = small_cfg();
  Rng rng(5);
  AABB all = scene_bounds(f.scene, f.cube);
  for (const auto& cam : make_sphere_cameras(f.scene, f.cube, 10, rng, cfg))
    for (int k = 0; k < 8; ++k) {
      Vec3 p(k & 1 ? all.max.x() : all.min.x(), k & 2 ? all.max.y() : all.min.y(), k & 4 ? all.max.z() : all.min.z());
      double u, v, r;
      ASSERT_TRUE(cam.project(p, u, v, r));
      EXPECT_GE(u, 0.0);
      EXPECT_LT(u, cfg.width);
      EXPECT_GE(v, 0.0);
      EXPECT_LT(v, cfg.height);
    }
}

TEST(RenderView, EmptyContainerCenterDepth) {
  FullBox f;
  auto cfg = small_cfg(101, 101);
  Camera cam = make_nadir_camera(f.scene, f.cube, cfg);
  SceneTracer empty(f.cube, {}, simlab::make_container(f.scene.container), f.scene.container.ground_z());
  auto [depth, mask] = render_view(empty, cam);
  EXPECT_EQ(mask.at(50, 50), kContainer);
  EXPECT_NEAR(depth.at(50, 50), cam.center().z() - f.scene.container.floor_z(), 1e-6);
}

TEST(RenderView, RimPixelIsContainerAndOutsideIsGround) {
  Loose f;
  auto cfg = small_cfg(201, 201);
  Camera cam = make_nadir_camera(f.scene, f.cube, cfg);
  auto tracer = make_tracer(f.scene, f.cube);
  auto [depth, mask] = render_view(tracer, cam);
  const auto& c = f.scene.container;
  double u, v, r;
  ASSERT_TRUE(cam.project(Vec3(0.5 + 0.5 * c.thickness(), 0.0, c.rim_z()), u, v, r));
  EXPECT_EQ(mask.at(int(u), int(v)), kContainer);
  EXPECT_EQ(mask.at(0, 0), kGround);
  EXPECT_TRUE(std::isfinite(depth.at(0, 0)));  // the ground plane is hit
}

TEST(RenderView, FullBoxNadirIsMostlyObjects) {
  FullBox f;
  auto cfg = small_cfg(120, 120);
  Camera cam = make_nadir_camera(f.scene, f.cube, cfg);
  auto [depth, mask] = render_view(make_tracer(f.scene, f.cube), cam);
  AABB cav = f.scene.container.cavity();
  std::size_t foot = 0, obj = 0;
  for (int j = 0; j < cfg.height; ++j)
    for (int i = 0; i < cfg.width; ++i) {
      Vec3 p = cam.unproject(i, j, 1.0);
      Vec3 d = (p - cam.center()).normalized();
      double t = (cav.max.z() - cam.center().z()) / d.z();
      Vec3 q = cam.center() + t * d;
      if (std::abs(q.x()) < 0.5 && std::abs(q.y()) < 0.5) {
        ++foot;
        obj += mask.at(i, j) == kObjects;
      }
    }
  ASSERT_GT(foot, 0u);
  EXPECT_GT(double(obj) / double(foot), 0.5);
}

TEST(RenderView, DepthConsistency) {
  Loose f;
  auto cfg = small_cfg(160, 120);
  auto tracer = make_tracer(f.scene, f.cube);
  Rng pick(2);
  int checked = 0;
  for (const auto& cam : default_cameras(f.scene, f.cube, [&] {
         auto c = cfg;
         c.n_views = 3;
         return c;
       }())) {
    auto [depth, mask] = render_view(tracer, cam);
    std::vector<int> obj;
    for (int k = 0; k < int(mask.data.size()); ++k)
      if (mask.data[k] == kObjects) obj.push_back(k);
    for (int k = 0; k < 1000 && !obj.empty(); ++k) {
      int idx = obj[static_cast<std::size_t>(uniform(pick, 0, double(obj.size())))];
      int i = idx % cfg.width, j = idx / cfg.width;
      Vec3 p = cam.unproject(i, j, depth.at(i, j));
      EXPECT_LE(tracer.object_distance(p, 0.01), 1e-4);
      ++checked;
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(RenderView, OccluderNeverIncreasesDepth) {
  Loose f;
  auto cfg = small_cfg(80, 80);
  Rng rng(9);
  auto cams = make_sphere_cameras(f.scene, f.cube, 2, rng, cfg);
  cams.push_back(make_nadir_camera(f.scene, f.cube, cfg));
  Scene more = f.scene;
  more.poses.emplace_back(Quat::Identity(), Vec3(0.0, 0.0, f.scene.container.rim_z() + 0.2));
  auto before = make_tracer(f.scene, f.cube), after = make_tracer(more, f.cube);
  for (const auto& cam : cams) {
    auto a = render_view(before, cam).first;
    auto b = render_view(after, cam).first;
    for (std::size_t k = 0; k < a.data.size(); ++k) EXPECT_LE(b.data[k], a.data[k]);
  }
}

TEST(RenderView, LabelsPartitionAndThreadsAgree) {
  Loose f;
  auto cfg = small_cfg(64, 48);
  Vec3 target = f.scene.container.cavity().center();
  Camera cam = look_at(target + Vec3(0.6, -0.4, 1.8), target, Vec3::UnitZ(), focal_for_fov(64, 48, 50), 64, 48);
  auto tracer = make_tracer(f.scene, f.cube);
  auto [d1, m1] = render_view(tracer, cam, 1);
  auto [d3, m3] = render_view(tracer, cam, 3);
  EXPECT_EQ(d1.data, d3.data);
  EXPECT_EQ(m1.data, m3.data);
  for (auto v : m1.data) EXPECT_TRUE(valid_label(v));
  EXPECT_GT(count_label(m1, kObjects), 0u);
  EXPECT_GT(count_label(m1, kContainer), 0u);
}

TEST(KeyView, NadirBeatsGrazingView) {
  Loose f;
  auto cfg = small_cfg(96, 96);
  auto tracer = make_tracer(f.scene, f.cube);
  Vec3 target = f.scene.container.cavity().center();
  Camera grazing = look_at(target + Vec3(4.0, 0.0, 0.3), target, Vec3::UnitZ(), focal_for_fov(96, 96, 50), 96, 96);
  std::vector<View> views(2);
  views[0].id = 0;
  views[0].camera = grazing;
  std::tie(views[0].depth, views[0].mask) = render_view(tracer, grazing);
  views[1].id = 1;
  views[1].camera = make_nadir_camera(f.scene, f.cube, cfg);
  std::tie(views[1].depth, views[1].mask) = render_view(tracer, views[1].camera);
  EXPECT_EQ(key_view_select(views), 1u);
  std::vector<View> single{views[1]};
  EXPECT_EQ(key_view_select(single), 0u);
}

TEST(KeyView, TiesAndEmpty) {
  std::vector<View> views(3);
  for (int k = 0; k < 3; ++k) {
    views[k].id = k;
    views[k].mask = SegMask(4, 4, kGround);
  }
  EXPECT_THROW(key_view_select(views), DataError);
  EXPECT_THROW(key_view_select({}), DataError);
  views[1].mask.at(0, 0) = kObjects;
  views[2].mask.at(3, 3) = kObjects;
  EXPECT_EQ(key_view_select(views), 1u);
  std::swap(views[1], views[2]);
  EXPECT_EQ(views[key_view_select(views)].id, 1);
}

TEST(Crop, Cases) {
  DepthMap d(5, 4, 2.0f);
  for (std::size_t k = 0; k < d.data.size(); ++k) d.data[k] = float(k);
  SegMask full(5, 4, kObjects);
  auto same = crop_to_mask(d, full, kObjects);
  EXPECT_EQ(same.width, 5);
  EXPECT_EQ(same.data, d.data);

  SegMask one(5, 4, kGround);
  one.at(3, 2) = kObjects;
  auto px = crop_to_mask(d, one, kObjects);
  EXPECT_EQ(px.width, 1);
  EXPECT_EQ(px.height, 1);
  EXPECT_EQ(px.data[0], d.at(3, 2));

  SegMask l(5, 4, kContainer);
  l.at(1, 1) = kObjects;
  l.at(3, 2) = kObjects;
  EXPECT_EQ(label_bounds(l, kObjects), (PixelBox{1, 1, 4, 3}));
  auto c = crop_to_mask(d, l, kObjects);
  EXPECT_EQ(c.width, 3);
  EXPECT_EQ(c.height, 2);
  EXPECT_EQ(c.at(0, 0), d.at(1, 1));
  EXPECT_EQ(c.at(2, 1), d.at(3, 2));
  EXPECT_TRUE(std::isinf(c.at(1, 0)));

  EXPECT_THROW(crop_to_mask(d, SegMask(5, 4, kGround), kObjects), DataError);
  EXPECT_THROW(crop_to_mask(d, SegMask(4, 4, kObjects), kObjects), DataError);
}

TEST(Crop, ObjectBoundsOfFixtureScene) {
  FullBox f;
  auto cfg = small_cfg(101, 101);
  cfg.margin = 0.0;
  Camera cam = make_nadir_camera(f.scene, f.cube, cfg);
  auto [depth, mask] = render_view(make_tracer(f.scene, f.cube), cam);
  PixelBox b = label_bounds(mask, kObjects);
  // Project the top face of the lattice (the cavity footprint at the rim).
  AABB cav = f.scene.container.cavity();
  double u0, v0, u1, v1, r;
  cam.project(Vec3(cav.min.x(), cav.max.y(), cav.max.z()), u0, v0, r);
  cam.project(Vec3(cav.max.x(), cav.min.y(), cav.max.z()), u1, v1, r);
  auto first_center = [](double a) { return int(std::ceil(a - 0.5)); };
  auto last_center = [](double a) { return int(std::floor(a - 0.5)) + 1; };
  EXPECT_EQ(b.x0, first_center(u0));
  EXPECT_EQ(b.y0, first_center(v0));
  EXPECT_EQ(b.x1, last_center(u1));
  EXPECT_EQ(b.y1, last_center(v1));
  auto crop = crop_to_mask(depth, mask, kObjects);
  EXPECT_EQ(crop.width, b.width());
}

TEST(RasterIo, DepthRoundTripKeepsInfinity) {
  auto dir = temp_dir("depth");
  DepthMap d(3, 2, 1.5f);
  d.at(1, 0) = kNoDepth;
  d.at(2, 1) = 0.125f;
  save_depth(dir / "a.depth", d);
  auto e = load_depth(dir / "a.depth");
  EXPECT_EQ(e.width, 3);
  EXPECT_EQ(e.height, 2);
  EXPECT_EQ(e.data, d.data);
  std::string text = detail::read_file(dir / "a.depth");
  EXPECT_EQ(text.substr(0, 17), "stackdepth 1 3 2\n");
  EXPECT_EQ(text.size(), 17u + 24u);
  // Little-endian 1.5f = 0x3fc00000.
  EXPECT_EQ(static_cast<unsigned char>(text[17 + 3]), 0x3f);
  EXPECT_EQ(static_cast<unsigned char>(text[17 + 2]), 0xc0);

  {
    std::ofstream(dir / "bad.depth", std::ios::binary) << "stackdepth 2 1 1\n0000";
    EXPECT_THROW(load_depth(dir / "bad.depth"), DataError);
    std::ofstream(dir / "short.depth", std::ios::binary) << "stackdepth 1 2 2\n0000";
    EXPECT_THROW(load_depth(dir / "short.depth"), DataError);
  }
  std::filesystem::remove_all(dir);
}

TEST(RasterIo, MaskRoundTripAndLabelCheck) {
  auto dir = temp_dir("mask");
  SegMask m(4, 3, kGround);
  m.at(0, 0) = kObjects;
  m.at(3, 2) = kContainer;
  save_mask(dir / "m.pgm", m);
  EXPECT_EQ(detail::read_file(dir / "m.pgm").substr(0, 11), "P5\n4 3\n255\n");
  auto n = load_mask(dir / "m.pgm");
  EXPECT_EQ(n.data, m.data);
  std::ofstream(dir / "c.pgm", std::ios::binary) << "P5\n# comment\n2 1\n255\n" << char(0) << char(255);
  EXPECT_EQ(load_mask(dir / "c.pgm").at(1, 0), kObjects);
  std::ofstream(dir / "bad.pgm", std::ios::binary) << "P5\n2 1\n255\n" << char(0) << char(7);
  EXPECT_THROW(load_mask(dir / "bad.pgm"), DataError);
  std::ofstream(dir / "ascii.pgm", std::ios::binary) << "P2\n1 1\n255\n0\n";
  EXPECT_THROW(load_mask(dir / "ascii.pgm"), DataError);
  std::filesystem::remove_all(dir);
}

TEST(Views, SaveLoadAndMissingFiles) {
  auto dir = temp_dir("views");
  Loose f;
  auto cfg = small_cfg(40, 30);
  cfg.n_views = 2;
  auto tracer = make_tracer(f.scene, f.cube);
  auto cams = default_cameras(f.scene, f.cube, cfg);
  ASSERT_EQ(cams.size(), 2u);
  for (int k = 0; k < 2; ++k) {
    View v;
    v.id = k;
    v.camera = cams[k];
    std::tie(v.depth, v.mask) = render_view(tracer, cams[k]);
    save_view(dir, v);
  }
  auto views = load_views(dir);
  ASSERT_EQ(views.size(), 2u);
  EXPECT_TRUE(views[1].camera.R.isApprox(cams[1].R, 1e-15));
  std::filesystem::remove(dir / "view_001.pgm");
  try {
    load_views(dir);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("view_001.pgm"), std::string::npos);
  }
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  EXPECT_THROW(load_views(dir), DataError);
  std::filesystem::remove_all(dir);
}
