#pragma once

// Occupancy-ratio estimators working on a single (key) depth view.

#include "stackcount/render/raster.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>

namespace stackcount::occupancy {

using render::DepthMap;
using render::SegMask;
using json = nlohmann::ordered_json;

// Pixels that enter the depth features. Objects is the default; the union
// with container pixels is kept for comparison runs.
enum class PixelSet { Objects, ObjectsAndContainer };

inline PixelSet parse_pixel_set(const std::string& s) {
  if (s == "objects") return PixelSet::Objects;
  if (s == "objects+container") return PixelSet::ObjectsAndContainer;
  throw UsageError("unknown pixel set '" + s + "' (expected objects or objects+container)");
}

struct DepthFeatures {
  double gamma_norm = 0.0;           // mean of d_i / d_max
  double depth_variance_norm = 0.0;  // population variance of d_i / d_max
  std::size_t K = 0;

  static const std::vector<std::string>& names() {
    static const std::vector<std::string> n = {"gamma_norm", "depth_variance_norm"};
    return n;
  }
  Eigen::Vector2d vector() const { return {gamma_norm, depth_variance_norm}; }
};

struct GammaEstimate {
  double value = 0.0;
  std::string method;
};

inline DepthFeatures depth_features(const DepthMap& depth, const SegMask& mask, PixelSet set = PixelSet::Objects) {
  if (!mask.same_size(depth.width, depth.height)) throw DataError("depth_features: depth and mask sizes differ");
  std::vector<double> d;
  for (std::size_t k = 0; k < depth.data.size(); ++k) {
    std::uint8_t l = mask.data[k];
    bool use = l == render::kObjects || (set == PixelSet::ObjectsAndContainer && l == render::kContainer);
    if (use && std::isfinite(depth.data[k])) d.push_back(depth.data[k]);
  }
  if (d.empty()) throw DataError("depth_features: no object pixels with finite depth");
  double dmax = *std::max_element(d.begin(), d.end());
  if (!(dmax > 0.0)) throw DataError("depth_features: maximal depth is zero");
  DepthFeatures f;
  f.K = d.size();
  for (double v : d) f.gamma_norm += v / dmax;
  f.gamma_norm /= double(f.K);
  for (double v : d) f.depth_variance_norm += (v / dmax - f.gamma_norm) * (v / dmax - f.gamma_norm);
  f.depth_variance_norm /= double(f.K);
  return f;
}

inline GammaEstimate gamma_extrapolated(const DepthFeatures& f) { return {std::clamp(f.gamma_norm, 0.0, 1.0), "extrapolated"}; }

inline GammaEstimate gamma_extrapolated(const DepthMap& depth, const SegMask& mask, PixelSet set = PixelSet::Objects) {
  return gamma_extrapolated(depth_features(depth, mask, set));
}

struct CorrectorModel {
  Eigen::Vector2d weights = Eigen::Vector2d::Zero();
  double intercept = 0.0;
  std::size_t n_train = 0;
  std::uint64_t split_seed = 0;

  double predict(const DepthFeatures& f) const { return std::clamp(weights.dot(f.vector()) + intercept, 0.0, 1.0); }
};

struct TrainingRow {
  DepthFeatures features;
  double gt_gamma = 0.0;
};

// Ordinary least squares of gt gamma on [gamma_norm, variance, 1].
inline CorrectorModel fit_corrector(const std::vector<TrainingRow>& rows, std::uint64_t split_seed = 0,
                                    std::size_t min_rows = 20) {
  if (rows.size() < min_rows)
    throw DataError("fit_corrector: need at least " + std::to_string(min_rows) + " training scenes, got " +
                    std::to_string(rows.size()));
  Eigen::MatrixXd X(rows.size(), 3);
  Eigen::VectorXd y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    X.row(i) << rows[i].features.gamma_norm, rows[i].features.depth_variance_norm, 1.0;
    y(i) = rows[i].gt_gamma;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3)
    throw DataError("fit_corrector: rank-deficient design matrix (rank " + std::to_string(qr.rank()) +
                    " of 3); features do not vary across the training scenes");
  Eigen::Vector3d b = qr.solve(y);
  if (!b.allFinite()) throw DataError("fit_corrector: non-finite weights");
  CorrectorModel m;
  m.weights = b.head<2>();
  m.intercept = b(2);
  m.n_train = rows.size();
  m.split_seed = split_seed;
  return m;
}

inline GammaEstimate gamma_corrected(const DepthFeatures& f, const CorrectorModel& m) { return {m.predict(f), "corrected"}; }

inline GammaEstimate gamma_mean(double constant) {
  if (!(constant >= 0.0 && constant <= 1.0)) throw UsageError("mean estimator constant must lie in [0, 1]");
  return {constant, "mean"};
}

inline constexpr double kReferenceMeanGamma = 0.323;

inline json model_json(const CorrectorModel& m) {
  return json{{"weights", {m.weights(0), m.weights(1)}},
              {"intercept", m.intercept},
              {"feature_names", DepthFeatures::names()},
              {"training", {{"n", m.n_train}, {"seed", m.split_seed}}}};
}

inline CorrectorModel json_model(const json& j) {
  try {
    CorrectorModel m;
    const auto& w = j.at("weights");
    if (!w.is_array() || w.size() != 2) throw DataError("corrector model: expected 2 weights");
    if (j.contains("feature_names") && j.at("feature_names").get<std::vector<std::string>>() != DepthFeatures::names())
      throw DataError("corrector model: feature names do not match gamma_norm, depth_variance_norm");
    m.weights = Eigen::Vector2d(w[0].get<double>(), w[1].get<double>());
    m.intercept = j.at("intercept").get<double>();
    if (!m.weights.allFinite() || !std::isfinite(m.intercept)) throw DataError("corrector model: non-finite weights");
    if (j.contains("training")) {
      m.n_train = j.at("training").value("n", std::size_t{0});
      m.split_seed = j.at("training").value("seed", std::uint64_t{0});
    }
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("corrector model: ") + e.what());
  }
}

inline void save_model(const std::filesystem::path& path, const CorrectorModel& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << model_json(m).dump(2) << "\n";
}

inline CorrectorModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corrector model " + path.string());
  try {
    return json_model(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// One decimal in [0, 1].
inline double read_gamma_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing gamma sidecar " + path.string());
  std::string tok, extra;
  if (!(in >> tok)) throw DataError(path.string() + ": empty gamma sidecar");
  if (in >> extra) throw DataError(path.string() + ": gamma sidecar must hold a single number");
  double v = 0.0;
  try {
    std::size_t used = 0;
    v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
  } catch (const std::exception&) {
    throw DataError(path.string() + ": '" + tok + "' is not a number");
  }
  if (!(v >= 0.0 && v <= 1.0)) throw DataError(path.string() + ": gamma " + tok + " outside [0, 1]");
  return v;
}

struct EstimatorSpec {
  enum class Method { Extrapolated, Corrected, Mean, External } method = Method::Extrapolated;
  std::optional<CorrectorModel> model;
  double constant = kReferenceMeanGamma;
  std::filesystem::path sidecar;
  PixelSet pixels = PixelSet::Objects;

  static Method parse_method(const std::string& s) {
    if (s == "extrapolated") return Method::Extrapolated;
    if (s == "corrected") return Method::Corrected;
    if (s == "mean") return Method::Mean;
    if (s == "external") return Method::External;
    throw UsageError("unknown estimator '" + s + "' (expected extrapolated, corrected, mean or external)");
  }

  std::string name() const {
    switch (method) {
      case Method::Extrapolated:
        return "extrapolated";
      case Method::Corrected:
        return "corrected";
      case Method::Mean:
        return "mean";
      default:
        return "external";
    }
  }

  void validate() const {
    if (method == Method::Corrected && !model) throw UsageError("estimator 'corrected' needs a corrector model");
    if (method == Method::Mean) gamma_mean(constant);
    if (method == Method::External && sidecar.empty()) throw UsageError("estimator 'external' needs a gamma file");
  }
};

inline GammaEstimate estimate(const EstimatorSpec& spec, const DepthMap& depth, const SegMask& mask) {
  spec.validate();
  switch (spec.method) {
    case EstimatorSpec::Method::Extrapolated:
      return gamma_extrapolated(depth, mask, spec.pixels);
    case EstimatorSpec::Method::Corrected:
      return gamma_corrected(depth_features(depth, mask, spec.pixels), *spec.model);
    case EstimatorSpec::Method::Mean:
      return gamma_mean(spec.constant);
    default:
      return {read_gamma_sidecar(spec.sidecar), "external"};
  }
}

}  // namespace stackcount::occupancy
