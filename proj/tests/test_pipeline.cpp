#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "thermopol/thermopol.hpp"

using namespace thermopol;
namespace fs = std::filesystem;

namespace {

const fs::path kQuickConfig = THERMOPOL_SOURCE_DIR "/configs/quick.json";

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "thermopol_test_pipeline" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + THERMOPOL_CLI + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count_files(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.is_regular_file();
  return n;
}

}  // namespace

TEST(Render, WritesExpectedFilesDeterministically) {
  const PipelineConfig cfg = load_config(kQuickConfig);
  const fs::path a = scratch("render_a"), b = scratch("render_b");
  cmd_render(cfg, a);
  cmd_render(cfg, b);
  // Per view: s0 s1 s2 aolp dolp, four analyzer images, normal depth gt_aolp, mask.
  EXPECT_EQ(count_files(a), 6u * 13u + 2u);
  EXPECT_TRUE(fs::exists(a / "view_000_i045.pfm"));
  EXPECT_TRUE(fs::exists(a / "view_005_mask.pgm"));
  for (const auto& e : fs::directory_iterator(a)) {
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path().filename();
  }
  const auto ds = io::read_dataset(a, cfg.scene.bbox, cfg.scene.bounding_radius);
  EXPECT_EQ(ds.views.size(), 6u);
}

TEST(Render, AmbiguityFractionAppliedToAolpOnly) {
  PipelineConfig cfg = load_config(kQuickConfig);
  const fs::path clean = scratch("render_clean"), dirty = scratch("render_dirty");
  cmd_render(cfg, clean);
  cfg.capture.ambiguity_fraction = 0.5;
  cmd_render(cfg, dirty);
  EXPECT_NE(slurp(clean / "view_002_aolp.pfm"), slurp(dirty / "view_002_aolp.pfm"));
  EXPECT_EQ(slurp(clean / "view_002_gt_aolp.pfm"), slurp(dirty / "view_002_gt_aolp.pfm"));
  EXPECT_EQ(slurp(clean / "view_002_s1.pfm"), slurp(dirty / "view_002_s1.pfm"));
}

TEST(Pipeline, EndToEndQuick) {
  const PipelineConfig cfg = load_config(kQuickConfig);
  const fs::path data = scratch("e2e_data"), out = scratch("e2e_out");
  cmd_render(cfg, data);
  const TrainState st = cmd_reconstruct(cfg, data, out);
  EXPECT_EQ(st.history.size(), 2u);
  EXPECT_TRUE(fs::exists(out / "checkpoint.bin"));
  EXPECT_TRUE(fs::exists(out / "loss.csv"));
  EXPECT_TRUE(fs::exists(out / "view_003_normal_est.pfm"));
  const Mesh m = cmd_extract_mesh(out / "checkpoint.bin", 32, out / "mesh.obj");
  EXPECT_GT(m.faces.size(), 100u);
  EvalInputs in;
  in.mesh = out / "mesh.obj";
  in.data_dir = data;
  in.recon_dir = out;
  const auto metrics = cmd_evaluate(in, cfg.eval);
  EXPECT_TRUE(metrics["chamfer"].is_number());
  EXPECT_TRUE(metrics["normal_mae_deg"].is_number());
  EXPECT_GE(metrics["chamfer"].get<double>(), 0.0);
}

TEST(Evaluate, GroundTruthAgainstItself) {
  PipelineConfig cfg = load_config(kQuickConfig);
  cfg.eval.sample_count = 50000;  // independent samples on both sides; residual shrinks with density
  const fs::path dir = scratch("eval_self");
  const Mesh gt = marching_cubes(AnalyticField<double>{Ellipsoid{Vec3::Zero(), Vec3(1.0, 0.7, 0.5)}}, 48, Box{});
  io::write_obj(dir / "gt.obj", gt);
  EvalInputs in;
  in.mesh = dir / "gt.obj";
  in.ground_truth = dir / "gt.obj";
  EXPECT_LT(cmd_evaluate(in, cfg.eval)["chamfer"].get<double>(), 0.01);

  // A rigidly moved copy is aligned by ICP before measuring.
  Mesh moved = gt;
  const Mat3 r = Eigen::AngleAxisd(0.1, Vec3::UnitZ()).toRotationMatrix();
  for (auto& v : moved.vertices) v = r * v + Vec3(0.1, -0.06, 0.0);
  io::write_obj(dir / "moved.obj", moved);
  in.mesh = dir / "moved.obj";
  const auto metrics = cmd_evaluate(in, cfg.eval);
  EXPECT_LT(metrics["chamfer"].get<double>(), 0.01);
  EXPECT_GT(metrics["chamfer_unaligned"].get<double>(), 5.0 * metrics["chamfer"].get<double>());
  EXPECT_TRUE(metrics["normal_mae_deg"].is_null());
}

TEST(Evaluate, MismatchedNormalMapsRejected) {
  const PipelineConfig cfg = load_config(kQuickConfig);
  const fs::path data = scratch("eval_mismatch_data"), recon = scratch("eval_mismatch_recon");
  io::write_obj(data / "gt.obj", marching_cubes(AnalyticField<double>{Sphere{}}, 24, Box{}));
  io::write_pfm(data / io::view_file(0, "normal"), Raster<float>(8, 8, 3, 0.5f));
  io::write_pfm(recon / io::view_file(0, "normal_est"), Raster<float>(9, 8, 3, 0.5f));
  EvalInputs in;
  in.mesh = data / "gt.obj";
  in.ground_truth = AnalyticShape{Sphere{}};
  in.data_dir = data;
  in.recon_dir = recon;
  EXPECT_THROW(cmd_evaluate(in, cfg.eval), ShapeMismatch);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("render --out " + dir.string()), 2);  // missing --config
  {
    std::ofstream bad(dir / "bad.json");
    bad << R"({"train": {"epochz": 1}})";
  }
  EXPECT_EQ(run_cli("render --config " + (dir / "bad.json").string() + " --out " + (dir / "d").string()), 2);
  EXPECT_EQ(run_cli("render --config " + kQuickConfig.string() + " --out " + (dir / "d").string()), 0);
  EXPECT_EQ(count_files(dir / "d"), 6u * 13u + 2u);
  EXPECT_EQ(run_cli("reconstruct --config " + kQuickConfig.string() + " --data " + (dir / "missing").string() +
                    " --out " + (dir / "r").string()),
            2);
  EXPECT_EQ(run_cli("extract-mesh --ckpt " + (dir / "nope.bin").string() + " --res 32 --out " +
                    (dir / "m.obj").string()),
            2);
  // A network whose zero set lies outside the grid has nothing to mesh.
  const SdfNetwork<float> far(NetworkArch{8, 4, 0, 2, 100.0, 5.0}, 1);
  io::write_checkpoint(dir / "far.bin", far, AdamState<float>(far.parameters(), 1e-3));
  EXPECT_EQ(run_cli("extract-mesh --ckpt " + (dir / "far.bin").string() + " --res 16 --out " +
                    (dir / "m.obj").string()),
            3);
  EXPECT_EQ(run_cli("extract-mesh --ckpt " + (dir / "far.bin").string() + " --res 8 --out " +
                    (dir / "m.obj").string()),
            2);
  EXPECT_EQ(run_cli("evaluate --mesh " + (dir / "d" / "gt_mesh.obj").string() + " --gt sphere --out " +
                    (dir / "metrics.json").string()),
            0);
  const auto metrics = io::read_json(dir / "metrics.json");
  EXPECT_LT(metrics["chamfer"].get<double>(), 0.05);
  EXPECT_EQ(run_cli("evaluate --mesh " + (dir / "d" / "gt_mesh.obj").string() + " --gt cube --out " +
                    (dir / "metrics.json").string()),
            2);
}
