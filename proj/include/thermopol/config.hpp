#pragma once

// Pipeline configuration: one JSON document with scene / capture / train /
// eval / paths sections. Every key is optional, but unknown keys and values of
// the wrong type are rejected so that a typo cannot silently fall back to a
// default.

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "thermopol/errors.hpp"
#include "thermopol/mesh.hpp"
#include "thermopol/polcore.hpp"
#include "thermopol/reconstruct.hpp"
#include "thermopol/scene.hpp"
#include "thermopol/simulator.hpp"

namespace thermopol {

struct CaptureConfig {
  int views = 20;
  double distance = 4.0;
  double elevation = 0.3;  // radians
  Vec3 look_at = Vec3::Zero();
  Intrinsics intrinsics;
  RenderMode mode = RenderMode::kLwirEmission;
  double noise_sigma = 0.0;
  std::vector<double> polarizer_angles{0.0, 0.25 * kPi, 0.5 * kPi, 0.75 * kPi};
  double ambient_radiance = 0.0;
  double env_radiance = 1.0;
  std::uint64_t seed = 0;
  double ambiguity_fraction = 0.0;
};

struct SceneConfig {
  AnalyticShape shape = Sphere{};
  Dielectric material{1.5, 1.0};
  ThermalState thermal{310.0, 10e-6};
  Box bbox;
  double bounding_radius = 1.5;
};

struct EvalConfig {
  int mesh_resolution = 128;
  std::size_t sample_count = 100000;
  int icp_max_iterations = 50;
  double icp_tolerance = 1e-8;
  std::uint64_t seed = 0;
};

struct PathsConfig {
  std::string data;
  std::string output;
};

struct PipelineConfig {
  SceneConfig scene;
  CaptureConfig capture;
  TrainConfig train;
  EvalConfig eval;
  PathsConfig paths;

  RenderJob render_job() const {
    RenderJob job;
    job.shape = scene.shape;
    job.material = scene.material;
    job.thermal = scene.thermal;
    job.views = turntable_poses(capture.views, capture.distance, capture.elevation, capture.look_at,
                                capture.intrinsics);
    job.mode = capture.mode;
    job.noise_sigma = capture.noise_sigma;
    job.polarizer_angles = capture.polarizer_angles;
    job.ambient_radiance = capture.ambient_radiance;
    job.env_radiance = capture.env_radiance;
    job.seed = capture.seed;
    return job;
  }
};

namespace config_detail {

using nlohmann::json;

// Reads keys of one JSON object, remembering which were consumed so leftovers
// can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError("unknown key " + path_ + "." + it.key());
    }
  }

  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  bool has(const std::string& key) {
    used_.insert(key);
    return j_.contains(key);
  }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  std::string where(const std::string& key) const { return path_ + "." + key; }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.get<long long>() < 0) throw ConfigError("");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError("wrong type for " + where(key));
    }
  }

  void read_vec3(const std::string& key, Vec3& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number()) {
      throw ConfigError(where(key) + " must be an array of three numbers");
    }
    out = Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline Sphere parse_sphere(const json& j, const std::string& path) {
  Sphere s;
  Section sec(j, path);
  std::string type;
  sec.read("type", type);
  sec.read_vec3("center", s.center);
  sec.read("radius", s.radius);
  if (!(s.radius > 0.0)) throw ConfigError(path + ".radius must be positive");
  return s;
}

inline AnalyticShape parse_shape(const json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
    throw ConfigError(path + " needs a string 'type'");
  }
  const std::string type = j.at("type").get<std::string>();
  if (type == "sphere") return parse_sphere(j, path);
  Section sec(j, path);
  sec.has("type");
  if (type == "ellipsoid") {
    Ellipsoid e;
    sec.read_vec3("center", e.center);
    sec.read_vec3("semi_axes", e.semi_axes);
    if (!(e.semi_axes.minCoeff() > 0.0)) throw ConfigError(path + ".semi_axes must be positive");
    return e;
  }
  if (type == "torus") {
    Torus t;
    sec.read_vec3("center", t.center);
    sec.read("major_radius", t.major_radius);
    sec.read("minor_radius", t.minor_radius);
    if (!(t.minor_radius > 0.0) || !(t.major_radius > t.minor_radius)) {
      throw ConfigError(path + " needs major_radius > minor_radius > 0");
    }
    return t;
  }
  if (type == "smooth_union") {
    SmoothUnion u;
    sec.read("blend", u.blend);
    if (!sec.has("spheres") || !sec.raw("spheres").is_array() || sec.raw("spheres").empty()) {
      throw ConfigError(path + ".spheres must be a nonempty array");
    }
    int i = 0;
    for (const auto& s : sec.raw("spheres")) {
      u.spheres.push_back(parse_sphere(s, path + ".spheres[" + std::to_string(i++) + "]"));
    }
    if (!(u.blend > 0.0)) throw ConfigError(path + ".blend must be positive");
    return u;
  }
  throw ConfigError("unknown shape type '" + type + "' in " + path);
}

inline void parse_scene(const json& j, SceneConfig& out) {
  Section sec(j, "scene");
  if (sec.has("shape")) out.shape = parse_shape(sec.raw("shape"), "scene.shape");
  double eta = out.material.eta(), rho = out.material.rho();
  double temperature = out.thermal.temperature(), wavelength = out.thermal.wavelength();
  if (sec.has("material")) {
    Section m(sec.raw("material"), "scene.material");
    m.read("eta", eta);
    m.read("rho", rho);
  }
  if (sec.has("thermal")) {
    Section t(sec.raw("thermal"), "scene.thermal");
    t.read("temperature_k", temperature);
    t.read("wavelength_m", wavelength);
  }
  try {
    out.material = Dielectric(eta, rho);
    out.thermal = ThermalState(temperature, wavelength);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("scene: ") + e.what());
  }
  if (sec.has("bbox")) {
    Section b(sec.raw("bbox"), "scene.bbox");
    b.read_vec3("min", out.bbox.lo);
    b.read_vec3("max", out.bbox.hi);
    if (!((out.bbox.hi - out.bbox.lo).minCoeff() > 0.0)) throw ConfigError("scene.bbox is empty");
  }
  sec.read("bounding_radius", out.bounding_radius);
  if (!(out.bounding_radius > 0.0)) throw ConfigError("scene.bounding_radius must be positive");
}

inline void parse_capture(const json& j, CaptureConfig& out) {
  Section sec(j, "capture");
  sec.read("views", out.views);
  sec.read("distance", out.distance);
  sec.read("elevation", out.elevation);
  sec.read_vec3("look_at", out.look_at);
  if (sec.has("intrinsics")) {
    Section k(sec.raw("intrinsics"), "capture.intrinsics");
    k.read("fx", out.intrinsics.fx);
    k.read("fy", out.intrinsics.fy);
    k.read("cx", out.intrinsics.cx);
    k.read("cy", out.intrinsics.cy);
    k.read("width", out.intrinsics.width);
    k.read("height", out.intrinsics.height);
  }
  std::string mode;
  sec.read("mode", mode);
  if (mode == "lwir") {
    out.mode = RenderMode::kLwirEmission;
  } else if (mode == "visible_mixture") {
    out.mode = RenderMode::kVisibleMixture;
  } else if (!mode.empty()) {
    throw ConfigError("capture.mode must be 'lwir' or 'visible_mixture'");
  }
  sec.read("noise_sigma", out.noise_sigma);
  if (sec.has("polarizer_angles_deg")) {
    std::vector<double> deg;
    sec.read("polarizer_angles_deg", deg);
    out.polarizer_angles.clear();
    for (double d : deg) out.polarizer_angles.push_back(d * kPi / 180.0);
  }
  sec.read("ambient_radiance", out.ambient_radiance);
  sec.read("env_radiance", out.env_radiance);
  sec.read("seed", out.seed);
  sec.read("ambiguity_fraction", out.ambiguity_fraction);
  if (out.views < 2) throw ConfigError("capture.views must be at least 2");
  if (!(out.distance > 0.0)) throw ConfigError("capture.distance must be positive");
  if (out.noise_sigma < 0.0) throw ConfigError("capture.noise_sigma must be non-negative");
  if (out.ambiguity_fraction < 0.0 || out.ambiguity_fraction > 1.0) {
    throw ConfigError("capture.ambiguity_fraction must lie in [0, 1]");
  }
  if (out.polarizer_angles.size() < 3) throw ConfigError("capture needs at least three polarizer angles");
}

inline void parse_train(const json& j, TrainConfig& out) {
  Section sec(j, "train");
  sec.read("lambda1", out.lambda1);
  sec.read("lambda2", out.lambda2);
  sec.read("epochs", out.epochs);
  sec.read("batch_pixels", out.batch_pixels);
  sec.read("lr", out.lr);
  sec.read("silhouette_halving_period", out.silhouette_halving_period);
  sec.read("alpha", out.alpha);
  sec.read("seed", out.seed);
  sec.read("ambiguous", out.ambiguous);
  sec.read("eikonal_samples", out.eikonal_samples);
  sec.read("silhouette_samples", out.silhouette_samples);
  sec.read("depth_tolerance", out.depth_tolerance);
  sec.read("frequency_warmup_epochs", out.frequency_warmup_epochs);
  sec.read("batches_per_view", out.batches_per_view);
  sec.read("width", out.network.width);
  sec.read("hidden_layers", out.network.hidden_layers);
  sec.read("num_frequencies", out.network.num_frequencies);
  sec.read("skip_layer", out.network.skip_layer);
  sec.read("softplus_beta", out.network.softplus_beta);
  sec.read("init_radius", out.network.init_radius);
  sec.read("trace_max_steps", out.trace.max_steps);
  sec.read("trace_epsilon", out.trace.hit_epsilon);
  try {
    out.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  if (out.network.width < 1 || out.network.hidden_layers < 1 || out.network.num_frequencies < 0 ||
      out.network.skip_layer < 0 || out.network.skip_layer >= out.network.hidden_layers ||
      !(out.network.softplus_beta > 0.0) || !(out.network.init_radius > 0.0)) {
    throw ConfigError("train: invalid network architecture");
  }
}

inline void parse_eval(const json& j, EvalConfig& out) {
  Section sec(j, "eval");
  sec.read("mesh_resolution", out.mesh_resolution);
  sec.read("sample_count", out.sample_count);
  sec.read("icp_max_iterations", out.icp_max_iterations);
  sec.read("icp_tolerance", out.icp_tolerance);
  sec.read("seed", out.seed);
  if (out.mesh_resolution < 16) throw ConfigError("eval.mesh_resolution must be at least 16");
  if (out.sample_count < 3) throw ConfigError("eval.sample_count must be at least 3");
}

}  // namespace config_detail

inline PipelineConfig parse_config(const nlohmann::json& doc) {
  using namespace config_detail;
  PipelineConfig cfg;
  Section top(doc, "config");
  if (top.has("scene")) parse_scene(top.raw("scene"), cfg.scene);
  if (top.has("capture")) parse_capture(top.raw("capture"), cfg.capture);
  if (top.has("train")) parse_train(top.raw("train"), cfg.train);
  if (top.has("eval")) parse_eval(top.raw("eval"), cfg.eval);
  if (top.has("paths")) {
    Section p(top.raw("paths"), "paths");
    p.read("data", cfg.paths.data);
    p.read("output", cfg.paths.output);
  }
  return cfg;
}

inline PipelineConfig parse_config_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Analytic shape from a compact spec: "sphere[:r]", "ellipsoid:a,b,c",
/// "torus:R,r" (all centred at the origin).
inline AnalyticShape parse_shape_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  std::vector<double> args;
  if (colon != std::string::npos) {
    std::stringstream ss(spec.substr(colon + 1));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        std::size_t used = 0;
        args.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ConfigError("bad number '" + tok + "' in shape spec " + spec);
      }
    }
  }
  auto positive = [&](std::size_t n) {
    if (args.size() != n) throw ConfigError("shape spec " + spec + " needs " + std::to_string(n) + " values");
    for (double a : args) {
      if (!(a > 0.0)) throw ConfigError("shape spec " + spec + " needs positive values");
    }
  };
  if (name == "sphere") {
    if (args.empty()) return Sphere{};
    positive(1);
    return Sphere{Vec3::Zero(), args[0]};
  }
  if (name == "ellipsoid") {
    positive(3);
    return Ellipsoid{Vec3::Zero(), Vec3(args[0], args[1], args[2])};
  }
  if (name == "torus") {
    positive(2);
    if (!(args[0] > args[1])) throw ConfigError("torus spec needs R > r");
    return Torus{Vec3::Zero(), args[0], args[1]};
  }
  throw ConfigError("unknown shape spec " + spec);
}

}  // namespace thermopol
