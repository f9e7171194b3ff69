// thermopol: render / reconstruct / extract-mesh / evaluate.
//
// Exit codes: 0 success, 2 bad configuration or input files, 3 numerical
// failure (divergence, empty level set), 1 anything else.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "thermopol/thermopol.hpp"

namespace fs = std::filesystem;
using namespace thermopol;

namespace {

void log_line(const std::string& s) { std::cerr << s << "\n"; }

PipelineConfig config_or_default(const std::string& path) {
  return path.empty() ? PipelineConfig{} : load_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thermal-polarization multi-view surface reconstruction"};
  app.require_subcommand(1);

  std::string config_path, out, data, ckpt, mesh, gt, recon;
  int res = 128;

  auto* render = app.add_subcommand("render", "Simulate a polarimetric capture into a dataset directory");
  render->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
  render->add_option("--out", out, "Output dataset directory")->required();

  auto* reconstruct = app.add_subcommand("reconstruct", "Train an SDF network on a dataset");
  reconstruct->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
  reconstruct->add_option("--data", data, "Dataset directory")->required();
  reconstruct->add_option("--out", out, "Output directory")->required();

  auto* extract = app.add_subcommand("extract-mesh", "Mesh the zero level set of a checkpoint");
  extract->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  extract->add_option("--res", res, "Grid resolution per axis (>= 16)");
  extract->add_option("--out", out, "Output mesh (.obj or .ply)")->required();
  extract->add_option("--config", config_path, "JSON config (scene.bbox)");

  auto* evaluate = app.add_subcommand("evaluate", "Chamfer distance and normal error against ground truth");
  evaluate->add_option("--mesh", mesh, "Reconstructed mesh")->required();
  evaluate->add_option("--gt", gt, "Ground-truth mesh file or shape spec (sphere[:r], ellipsoid:a,b,c, torus:R,r)")
      ->required();
  evaluate->add_option("--out", out, "Metrics JSON")->required();
  evaluate->add_option("--data", data, "Dataset directory with ground-truth normal maps");
  evaluate->add_option("--recon", recon, "Reconstruction directory with estimated normal maps");
  evaluate->add_option("--config", config_path, "JSON config (eval and scene.bbox)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*render) {
      cmd_render(load_config(config_path), out, log_line);
    } else if (*reconstruct) {
      cmd_reconstruct(load_config(config_path), data, out, log_line);
    } else if (*extract) {
      if (res < 16) throw ConfigError("--res must be at least 16");
      const PipelineConfig cfg = config_or_default(config_path);
      const Mesh m = cmd_extract_mesh(ckpt, res, out, cfg.scene.bbox);
      std::cout << "vertices " << m.vertices.size() << "\nfaces " << m.faces.size() << "\n";
    } else if (*evaluate) {
      const PipelineConfig cfg = config_or_default(config_path);
      EvalInputs in;
      in.mesh = mesh;
      const fs::path gt_path(gt);
      if (fs::exists(gt_path) && fs::is_regular_file(gt_path)) {
        in.ground_truth = gt_path;
      } else {
        in.ground_truth = parse_shape_spec(gt);
      }
      if (!data.empty()) in.data_dir = fs::path(data);
      if (!recon.empty()) in.recon_dir = fs::path(recon);
      const auto metrics = cmd_evaluate(in, cfg.eval, cfg.scene.bbox);
      io::write_json(out, metrics);
      std::cout << metrics.dump(2) << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const EmptyLevelSet& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
