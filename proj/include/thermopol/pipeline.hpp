#pragma once

// The four pipeline stages behind the command-line tool. Each stage reads and
// writes plain files so the stages can be run and inspected separately.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <variant>

#include <json.hpp>

#include "thermopol/config.hpp"
#include "thermopol/evalkit.hpp"
#include "thermopol/io.hpp"
#include "thermopol/marching_cubes.hpp"
#include "thermopol/reconstruct.hpp"

namespace thermopol {

namespace fs = std::filesystem;

using LogFn = std::function<void(const std::string&)>;

namespace pipeline_detail {

inline std::string angle_tag(double radians) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "i%03d", static_cast<int>(std::lround(radians * 180.0 / kPi)));
  return buf;
}

inline Raster<float> channel(const Raster<float>& img, int c) {
  Raster<float> out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) out.at(x, y) = img.at(x, y, c);
  }
  return out;
}

inline void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline void say(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

}  // namespace pipeline_detail

/// Simulates the capture described by `cfg` into `out_dir`: Stokes, AoLP,
/// DoLP, analyzer images, masks, ground-truth normals/depth/AoLP, cameras and
/// a ground-truth mesh.
inline void cmd_render(const PipelineConfig& cfg, const fs::path& out_dir, const LogFn& log = {}) {
  using namespace pipeline_detail;
  make_dir(out_dir);
  const RenderJob job = cfg.render_job();
  for (std::size_t i = 0; i < job.views.size(); ++i) {
    const int v = static_cast<int>(i);
    Capture<float> cap = capture_view<float>(job, i);
    for (int c = 0; c < 3; ++c) {
      io::write_pfm(out_dir / io::view_file(v, "s" + std::to_string(c)), channel(cap.stokes.values, c));
    }
    Raster<float> aolp = cap.aolp.values;
    corrupt_aolp(aolp, i, cfg.capture.ambiguity_fraction, cfg.capture.seed);
    io::write_pfm(out_dir / io::view_file(v, "aolp"), aolp);
    io::write_pfm(out_dir / io::view_file(v, "dolp"), cap.dolp.values);
    for (std::size_t a = 0; a < cap.intensities.size(); ++a) {
      io::write_pfm(out_dir / io::view_file(v, angle_tag(job.polarizer_angles[a])), cap.intensities[a]);
    }
    io::write_pfm(out_dir / io::view_file(v, "normal"), cap.render.gt_normal);
    io::write_pfm(out_dir / io::view_file(v, "depth"), cap.render.gt_depth);
    io::write_pfm(out_dir / io::view_file(v, "gt_aolp"), cap.render.gt_aolp);
    io::write_pgm(out_dir / io::view_file(v, "mask", ".pgm"), cap.render.mask);
    say(log, "rendered view " + std::to_string(v + 1) + "/" + std::to_string(job.views.size()));
  }
  io::write_json(out_dir / "cameras.json", io::cameras_to_json(job.views));
  const AnalyticField<double> gt{cfg.scene.shape};
  io::write_obj(out_dir / "gt_mesh.obj", marching_cubes(gt, cfg.eval.mesh_resolution, cfg.scene.bbox));
}

/// Trains the SDF network on the dataset in `data_dir`. Writes checkpoint.bin,
/// loss.csv and the network's normal map for every view.
inline TrainState cmd_reconstruct(const PipelineConfig& cfg, const fs::path& data_dir, const fs::path& out_dir,
                                  const LogFn& log = {}) {
  using namespace pipeline_detail;
  make_dir(out_dir);
  const MultiViewAolpDataset ds = io::read_dataset(data_dir, cfg.scene.bbox, cfg.scene.bounding_radius);
  cfg.train.validate();
  TrainState st = initial_state(cfg.train);
  train(st, ds, cfg.train, [&](const EpochLoss& e) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "epoch %d  tsc %.6g  sil %.6g  eik %.6g  total %.6g", e.epoch, e.tsc,
                  e.silhouette, e.eikonal, e.total);
    say(log, buf);
  });
  io::write_checkpoint(out_dir / "checkpoint.bin", st.net, st.adam);
  io::write_loss_csv(out_dir / "loss.csv", st.history);
  FieldTraceOptions trace = cfg.train.trace;
  trace.bounding_radius = cfg.scene.bounding_radius;
  for (std::size_t i = 0; i < ds.views.size(); ++i) {
    io::write_pfm(out_dir / io::view_file(static_cast<int>(i), "normal_est"),
                  render_normal_map(st.net, ds.views[i].camera, trace));
  }
  return st;
}

/// Marching cubes on the zero level set of a trained network.
inline Mesh cmd_extract_mesh(const fs::path& checkpoint, int resolution, const fs::path& out_mesh,
                             const Box& box = {}) {
  const io::Checkpoint ck = io::read_checkpoint(checkpoint);
  Mesh mesh = marching_cubes(ck.net, resolution, box);
  io::write_mesh(out_mesh, mesh);
  return mesh;
}

struct EvalInputs {
  fs::path mesh;
  std::variant<AnalyticShape, fs::path> ground_truth = AnalyticShape{Sphere{}};
  std::optional<fs::path> data_dir;   // holds view_XXX_normal.pfm
  std::optional<fs::path> recon_dir;  // holds view_XXX_normal_est.pfm
};

/// Chamfer after ICP alignment of the mesh onto the ground truth, plus the
/// pixel-weighted normal MAE over all views that have both normal maps.
inline nlohmann::json cmd_evaluate(const EvalInputs& in, const EvalConfig& ecfg, const Box& box = {}) {
  const Mesh est_mesh = io::read_mesh(in.mesh);
  const PointCloud est = sample_mesh(est_mesh, ecfg.sample_count, ecfg.seed);
  PointCloud gt;
  if (const auto* shape = std::get_if<AnalyticShape>(&in.ground_truth)) {
    gt = sample_shape(*shape, ecfg.sample_count, ecfg.seed + 1, box);
  } else {
    gt = sample_mesh(io::read_mesh(std::get<fs::path>(in.ground_truth)), ecfg.sample_count, ecfg.seed + 1);
  }
  IcpOptions icp_opts;
  icp_opts.max_iterations = ecfg.icp_max_iterations;
  icp_opts.tolerance = ecfg.icp_tolerance;
  const IcpResult icp = icp_align(est, gt, icp_opts);

  nlohmann::json out;
  out["chamfer"] = chamfer(transformed(est, icp.transform), gt);
  out["chamfer_unaligned"] = chamfer(est, gt);
  out["icp_iterations"] = icp.iterations;
  out["icp_rmse"] = icp.rmse;
  out["normal_mae_deg"] = nullptr;

  if (in.data_dir && in.recon_dir) {
    double weighted = 0.0;
    std::size_t pixels = 0, gt_pixels = 0;
    for (int v = 0;; ++v) {
      const fs::path g = *in.data_dir / io::view_file(v, "normal");
      const fs::path e = *in.recon_dir / io::view_file(v, "normal_est");
      if (!fs::exists(g) || !fs::exists(e)) break;
      const Raster<float> gn = io::read_pfm(g), en = io::read_pfm(e);
      if (!gn.same_size(en) || gn.channels != 3 || en.channels != 3) {
        throw ShapeMismatch("normal maps differ in shape for view " + std::to_string(v));
      }
      Mask both(gn.width, gn.height);
      std::size_t count = 0;
      for (int y = 0; y < gn.height; ++y) {
        for (int x = 0; x < gn.width; ++x) {
          const bool g_ok = std::isfinite(gn.at(x, y, 0));
          gt_pixels += g_ok;
          if (g_ok && std::isfinite(en.at(x, y, 0))) {
            both.at(x, y) = 1;
            ++count;
          }
        }
      }
      if (count == 0) continue;
      weighted += normal_mae(en, gn, both) * static_cast<double>(count);
      pixels += count;
    }
    if (pixels > 0) {
      out["normal_mae_deg"] = weighted / static_cast<double>(pixels);
      out["normal_coverage"] = static_cast<double>(pixels) / static_cast<double>(gt_pixels);
    }
  }
  return out;
}

}  // namespace thermopol
