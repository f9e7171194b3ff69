#include <gtest/gtest.h>

#include <filesystem>

#include "thermopol/config.hpp"

using namespace thermopol;

TEST(Config, EmptyDocumentGivesDefaults) {
  const PipelineConfig cfg = parse_config_text("{}");
  EXPECT_EQ(cfg.capture.views, 20);
  EXPECT_EQ(cfg.train.lambda1, 50.0);
  EXPECT_EQ(cfg.train.lambda2, 0.1);
  EXPECT_EQ(cfg.train.epochs, 50);
  EXPECT_EQ(cfg.train.batch_pixels, 4096);
  EXPECT_EQ(cfg.train.network.num_frequencies, 10);
  EXPECT_EQ(cfg.eval.mesh_resolution, 128);
  EXPECT_TRUE(std::holds_alternative<Sphere>(cfg.scene.shape));
}

TEST(Config, FullDocumentParsed) {
  const PipelineConfig cfg = parse_config_text(R"({
    "scene": {"shape": {"type": "torus", "major_radius": 0.8, "minor_radius": 0.3},
              "material": {"eta": 1.7, "rho": 0.9},
              "thermal": {"temperature_k": 320, "wavelength_m": 9e-6},
              "bbox": {"min": [-2, -2, -2], "max": [2, 2, 2]}},
    "capture": {"views": 6, "intrinsics": {"fx": 40, "fy": 40, "cx": 16, "cy": 16, "width": 32, "height": 32},
                "mode": "visible_mixture", "noise_sigma": 0.01, "polarizer_angles_deg": [0, 60, 120],
                "ambiguity_fraction": 0.5},
    "train": {"epochs": 3, "width": 16, "num_frequencies": 4, "ambiguous": true, "lr": 1e-4,
              "batches_per_view": 2},
    "eval": {"mesh_resolution": 32, "sample_count": 500},
    "paths": {"data": "d", "output": "o"}
  })");
  EXPECT_TRUE(std::holds_alternative<Torus>(cfg.scene.shape));
  EXPECT_EQ(cfg.scene.material.eta(), 1.7);
  EXPECT_EQ(cfg.scene.thermal.temperature(), 320.0);
  EXPECT_EQ(cfg.scene.bbox.hi.x(), 2.0);
  EXPECT_EQ(cfg.capture.mode, RenderMode::kVisibleMixture);
  ASSERT_EQ(cfg.capture.polarizer_angles.size(), 3u);
  EXPECT_NEAR(cfg.capture.polarizer_angles[1], kPi / 3.0, 1e-15);
  EXPECT_TRUE(cfg.train.ambiguous);
  EXPECT_EQ(cfg.train.network.width, 16);
  EXPECT_EQ(cfg.train.batches_per_view, 2);
  EXPECT_EQ(cfg.eval.sample_count, 500u);
  EXPECT_EQ(cfg.paths.output, "o");
  const RenderJob job = cfg.render_job();
  EXPECT_EQ(job.views.size(), 6u);
  EXPECT_EQ(job.views[0].width(), 32);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(parse_config_text(R"({"trian": {}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"train": {"epoch": 3}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"scene": {"shape": {"type": "sphere", "radus": 2}}})"), ConfigError);
  try {
    parse_config_text(R"({"capture": {"intrinsics": {"fz": 1}}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("capture.intrinsics.fz"), std::string::npos) << e.what();
  }
}

TEST(Config, WrongTypesRejected) {
  EXPECT_THROW(parse_config_text(R"({"train": {"epochs": "50"}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"train": {"epochs": 2.5}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"train": {"ambiguous": 1}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"train": {"seed": -1}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"capture": {"look_at": [0, 0]}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"scene": 3})"), ConfigError);
  EXPECT_THROW(parse_config_text("{not json"), ConfigError);
}

TEST(Config, OutOfRangeValuesRejected) {
  EXPECT_THROW(parse_config_text(R"({"capture": {"views": 1}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"capture": {"ambiguity_fraction": 1.5}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"capture": {"mode": "uv"}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"scene": {"material": {"eta": 0.5}}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"train": {"lr": 0}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"train": {"skip_layer": 8}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"eval": {"mesh_resolution": 8}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"scene": {"shape": {"type": "cube"}}})"), ConfigError);
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, SampleConfigsParse) {
  const std::filesystem::path dir = THERMOPOL_SOURCE_DIR "/configs";
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(e.path())) << e.path();
    ++n;
  }
  EXPECT_GT(n, 0);
}

TEST(ShapeSpec, Parses) {
  EXPECT_EQ(std::get<Sphere>(parse_shape_spec("sphere")).radius, 1.0);
  EXPECT_EQ(std::get<Sphere>(parse_shape_spec("sphere:0.5")).radius, 0.5);
  EXPECT_EQ(std::get<Ellipsoid>(parse_shape_spec("ellipsoid:1,0.6,0.4")).semi_axes, Vec3(1, 0.6, 0.4));
  EXPECT_EQ(std::get<Torus>(parse_shape_spec("torus:0.8,0.3")).minor_radius, 0.3);
  EXPECT_THROW(parse_shape_spec("cube"), ConfigError);
  EXPECT_THROW(parse_shape_spec("sphere:-1"), ConfigError);
  EXPECT_THROW(parse_shape_spec("ellipsoid:1,2"), ConfigError);
  EXPECT_THROW(parse_shape_spec("torus:0.8,abc"), ConfigError);
  EXPECT_THROW(parse_shape_spec("torus:0.3,0.8"), ConfigError);
}
