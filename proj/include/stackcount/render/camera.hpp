#pragma once

// Pinhole camera in the OpenCV convention: camera x right, y down, z forward.
// Pixel (i, j) covers [i, i+1) x [j, j+1); its center ray passes through
// (i + 0.5, j + 0.5).

#include "stackcount/common.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

namespace stackcount::render {

using json = nlohmann::ordered_json;

struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.5, cy = 0.5;
  int width = 1, height = 1;
  Mat3 R = Mat3::Identity();  // world -> camera rotation
  Vec3 t = Vec3::Zero();      // world -> camera translation

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw DataError("camera: fx and fy must be positive");
    if (width < 1 || height < 1) throw DataError("camera: image size must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
      throw DataError("camera: principal point outside the image");
    if ((R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 || std::abs(R.determinant() - 1.0) > 1e-9)
      throw DataError("camera: world_to_camera is not a rigid transform");
    if (!t.allFinite()) throw DataError("camera: translation is not finite");
  }

  Vec3 center() const { return -(R.transpose() * t); }
  Vec3 forward() const { return R.row(2).transpose(); }

  Eigen::Matrix4d world_to_camera() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = R;
    m.topRightCorner<3, 1>() = t;
    return m;
  }

  Vec3 to_camera(const Vec3& world) const { return R * world + t; }

  // Continuous pixel coordinates of a world point and its distance from the
  // camera center. False when the point is not in front of the camera.
  bool project(const Vec3& world, double& u, double& v, double& range) const {
    Vec3 c = to_camera(world);
    if (!(c.z() > 0.0)) return false;
    u = fx * c.x() / c.z() + cx;
    v = fy * c.y() / c.z() + cy;
    range = c.norm();
    return true;
  }

  // Unit world-space direction through continuous pixel coordinates.
  Vec3 direction(double u, double v) const {
    Vec3 d((u - cx) / fx, (v - cy) / fy, 1.0);
    return (R.transpose() * d).normalized();
  }

  Vec3 pixel_direction(int i, int j) const { return direction(i + 0.5, j + 0.5); }

  // World point at Euclidean `depth` along the center ray of pixel (i, j).
  Vec3 unproject(int i, int j, double depth) const { return center() + depth * pixel_direction(i, j); }
};

inline Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height) {
  Vec3 z = target - eye;
  if (!(z.norm() > 0.0)) throw DataError("look_at: eye and target coincide");
  z.normalize();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-12) throw DataError("look_at: view direction parallel to up");
  x.normalize();
  Vec3 y = z.cross(x);
  Camera c;
  c.R.row(0) = x.transpose();
  c.R.row(1) = y.transpose();
  c.R.row(2) = z.transpose();
  c.t = -(c.R * eye);
  c.fx = c.fy = focal;
  c.width = width;
  c.height = height;
  c.cx = width / 2.0;
  c.cy = height / 2.0;
  return c;
}

inline double focal_for_fov(int width, int height, double fov_deg) {
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw UsageError("field of view must lie in (0, 180) degrees");
  return 0.5 * std::min(width, height) / std::tan(0.5 * fov_deg * kPi / 180.0);
}

inline json camera_json(const Camera& c) {
  auto m = c.world_to_camera();
  json w = json::array();
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 4; ++k) w.push_back(m(r, k));
  return json{{"fx", c.fx}, {"fy", c.fy},         {"cx", c.cx},
              {"cy", c.cy}, {"width", c.width}, {"height", c.height},
              {"world_to_camera", w}};
}

inline Camera json_camera(const json& j) {
  try {
    Camera c;
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    const auto& w = j.at("world_to_camera");
    if (!w.is_array() || w.size() != 16) throw DataError("camera: world_to_camera must have 16 numbers");
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r)
      for (int k = 0; k < 4; ++k) m(r, k) = w[r * 4 + k].get<double>();
    if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0)
      throw DataError("camera: world_to_camera bottom row must be 0 0 0 1");
    c.R = m.topLeftCorner<3, 3>();
    c.t = m.topRightCorner<3, 1>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("camera: ") + e.what());
  }
}

inline void save_camera(const std::filesystem::path& path, const Camera& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << camera_json(c).dump(2) << "\n";
}

inline Camera load_camera(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json_camera(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace stackcount::render
