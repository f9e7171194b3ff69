#include <gtest/gtest.h>

#include <cstring>

#include "thermopol/simulator.hpp"

using namespace thermopol;

namespace {

RenderJob sphere_job(int views = 4) {
  RenderJob job;
  Intrinsics k;
  k.fx = k.fy = 80.0;
  k.cx = k.cy = 32.0;
  k.width = k.height = 64;
  job.views = turntable_poses(views, 4.0, 0.3, Vec3::Zero(), k);
  return job;
}

PolarimetricImage<double> constant_stokes(int w, int h, double s0, double s1, double s2) {
  PolarimetricImage<double> img{ChannelKind::kStokes3, Raster<double>(w, h, 3), Mask(w, h, 1, 1)};
  for (std::size_t p = 0; p < img.values.pixel_count(); ++p) {
    img.values.data[3 * p] = s0;
    img.values.data[3 * p + 1] = s1;
    img.values.data[3 * p + 2] = s2;
  }
  return img;
}

const std::vector<double> kFourAngles{0.0, 0.25 * kPi, 0.5 * kPi, 0.75 * kPi};

}  // namespace

TEST(RenderStokes, CenterPixelUnpolarized) {
  const RenderJob job = sphere_job();
  const auto r = render_stokes<double>(job, job.views[0]);
  const int c = 32;
  ASSERT_TRUE(r.mask.at(c, c));
  const double s0 = r.stokes.values.at(c, c, 0);
  EXPECT_LT(std::abs(r.stokes.values.at(c, c, 1)) / s0, 1e-9);
  EXPECT_LT(std::abs(r.stokes.values.at(c, c, 2)) / s0, 1e-9);
  EXPECT_FALSE(r.mask.at(0, 0));
  EXPECT_TRUE(std::isnan(r.stokes.values.at(0, 0, 0)));
}

TEST(RenderStokes, AolpEqualsGroundTruthAzimuth) {
  const RenderJob job = sphere_job();
  for (const auto& view : job.views) {
    const auto r = render_stokes<double>(job, view);
    int checked = 0;
    for (int y = 0; y < view.height(); ++y) {
      for (int x = 0; x < view.width(); ++x) {
        if (!r.mask.at(x, y) || r.dolp.values.at(x, y) < 1e-6) continue;
        EXPECT_LT(std::abs(angle_diff_pi(r.aolp.values.at(x, y), r.gt_aolp.at(x, y))), 1e-9);
        ++checked;
      }
    }
    EXPECT_GT(checked, 1000);
  }
}

TEST(RenderStokes, DolpFollowsZenith) {
  const RenderJob job = sphere_job();
  const auto& view = job.views[1];
  const auto r = render_stokes<double>(job, view);
  bool saw_quarter = false;
  for (int y = 0; y < view.height(); ++y) {
    for (int x = 0; x < view.width(); ++x) {
      if (!r.mask.at(x, y)) continue;
      const Vec3 n(r.gt_normal.at(x, y, 0), r.gt_normal.at(x, y, 1), r.gt_normal.at(x, y, 2));
      const double theta = std::acos(std::clamp(-n.dot(pixel_ray(view, x, y).direction), 0.0, 1.0));
      if (theta > 1.5) continue;
      EXPECT_NEAR(r.dolp.values.at(x, y), dolp_closed_form(theta, 1.5), 1e-10);
      if (std::abs(theta - kPi / 4) < 0.01) {
        saw_quarter = true;
        EXPECT_NEAR(r.dolp.values.at(x, y), 0.0440, 5e-4);
      }
    }
  }
  EXPECT_TRUE(saw_quarter);
}

TEST(RenderStokes, DepthAndNormalsConsistent) {
  const RenderJob job = sphere_job();
  const auto& view = job.views[2];
  const auto r = render_stokes<double>(job, view);
  for (int y = 0; y < view.height(); y += 3) {
    for (int x = 0; x < view.width(); x += 3) {
      if (!r.mask.at(x, y)) continue;
      const Ray ray = pixel_ray(view, x, y);
      const double depth = r.gt_depth.at(x, y);
      const Vec3 p = ray.at(depth / ray.direction.dot(view.r3()));
      EXPECT_NEAR(p.norm(), 1.0, 1e-6);
      const Vec3 n(r.gt_normal.at(x, y, 0), r.gt_normal.at(x, y, 1), r.gt_normal.at(x, y, 2));
      EXPECT_LT((n - p.normalized()).norm(), 1e-5);
    }
  }
}

TEST(RenderStokes, ThermalAolpIgnoresMaterial) {
  RenderJob base = sphere_job(2);
  const auto ref = render_stokes<double>(base, base.views[0]);
  double max_dolp_change = 0.0;
  for (double eta : {1.3, 1.5, 2.0}) {
    for (double temp : {290.0, 310.0, 350.0}) {
      RenderJob job = base;
      job.material = Dielectric(eta);
      job.thermal = ThermalState(temp, 10e-6);
      const auto r = render_stokes<double>(job, job.views[0]);
      for (std::size_t p = 0; p < r.aolp.values.data.size(); ++p) {
        const double a = r.aolp.values.data[p], b = ref.aolp.values.data[p];
        ASSERT_EQ(std::isnan(a), std::isnan(b));
        if (!std::isnan(a)) EXPECT_LE(std::abs(angle_diff_pi(a, b)), 1e-12);
        const double d = r.dolp.values.data[p] - ref.dolp.values.data[p];
        if (std::isfinite(d)) max_dolp_change = std::max(max_dolp_change, std::abs(d));
      }
    }
  }
  EXPECT_GT(max_dolp_change, 0.01);
}

TEST(RenderStokes, VisibleMixtureShiftsSpecularPixels) {
  RenderJob lwir = sphere_job(2);
  RenderJob vis = lwir;
  vis.mode = RenderMode::kVisibleMixture;
  const auto& view = lwir.views[0];
  const auto a = render_stokes<double>(lwir, view);
  const auto b = render_stokes<double>(vis, view);
  int shifted = 0;
  for (int y = 0; y < view.height(); ++y) {
    for (int x = 0; x < view.width(); ++x) {
      if (!a.mask.at(x, y) || std::isnan(a.aolp.values.at(x, y)) || std::isnan(b.aolp.values.at(x, y))) continue;
      const Vec3 n(a.gt_normal.at(x, y, 0), a.gt_normal.at(x, y, 1), a.gt_normal.at(x, y, 2));
      const double theta = std::acos(std::clamp(-n.dot(pixel_ray(view, x, y).direction), 0.0, 1.0));
      if (theta < 1e-6 || theta >= 0.5 * kPi - 1e-9 || !specular_dominant(theta, vis.material)) continue;
      EXPECT_LT(std::abs(angle_diff_pi(b.aolp.values.at(x, y), a.aolp.values.at(x, y) + 0.5 * kPi)), 1e-9);
      ++shifted;
    }
  }
  EXPECT_GT(shifted, 500);
}

TEST(PolarizerImages, Examples) {
  const auto horiz = polarizer_images(constant_stokes(2, 2, 1, 1, 0), {0.0, 0.5 * kPi});
  EXPECT_NEAR(horiz[0].at(1, 1), 1.0, 1e-15);
  EXPECT_NEAR(horiz[1].at(1, 1), 0.0, 1e-15);
  for (double a : {0.0, 0.3, 1.2, 2.9}) {
    EXPECT_NEAR(polarizer_images(constant_stokes(1, 1, 1, 0, 0), {a})[0].at(0, 0), 0.5, 1e-15);
  }
  const auto imgs = polarizer_images(constant_stokes(3, 3, 0.7, -0.2, 0.3), {0.0, 0.5 * kPi});
  EXPECT_NEAR(imgs[0].at(2, 1) + imgs[1].at(2, 1), 0.7, 1e-15);
}

TEST(EstimateStokes, ExampleAndRoundTrip) {
  Raster<double> i0(1, 1, 1, 0.6), i45(1, 1, 1, 0.55), i90(1, 1, 1, 0.4), i135(1, 1, 1, 0.45);
  const auto s = estimate_stokes(i0, i45, i90, i135);
  EXPECT_NEAR(s.values.at(0, 0, 0), 1.0, 1e-15);
  EXPECT_NEAR(s.values.at(0, 0, 1), 0.2, 1e-15);
  EXPECT_NEAR(s.values.at(0, 0, 2), 0.1, 1e-15);

  const auto src = constant_stokes(4, 3, 1.3, -0.4, 0.25);
  const auto im = polarizer_images(src, kFourAngles);
  const auto back = estimate_stokes(im[0], im[1], im[2], im[3]);
  for (std::size_t i = 0; i < src.values.data.size(); ++i) {
    EXPECT_NEAR(back.values.data[i], src.values.data[i], 1e-12);
  }
  EXPECT_THROW(estimate_stokes(i0, i45, i90, Raster<double>(2, 1)), ShapeMismatch);
}

TEST(AddNoise, ZeroSigmaAndSeeds) {
  const auto im = polarizer_images(constant_stokes(16, 16, 1, 0.1, 0.05), kFourAngles);
  const auto same = add_noise(im, 0.0, 7);
  for (std::size_t k = 0; k < im.size(); ++k) {
    EXPECT_EQ(0, std::memcmp(im[k].data.data(), same[k].data.data(), im[k].data.size() * sizeof(double)));
  }
  const auto a = add_noise(im, 0.01, 7), b = add_noise(im, 0.01, 7), c = add_noise(im, 0.01, 8);
  EXPECT_EQ(a[2].data, b[2].data);
  EXPECT_NE(a[2].data, c[2].data);
  EXPECT_THROW(add_noise(im, -0.1, 7), DomainError);
}

TEST(AddNoise, StokesEstimateUnbiased) {
  const double s1 = 0.2, s2 = 0.1;
  const auto im = polarizer_images(constant_stokes(100, 100, 1.0, s1, s2), kFourAngles);
  const double sigma = 0.01;
  const auto noisy = add_noise(im, sigma, 123);
  const auto est = estimate_stokes(noisy[0], noisy[1], noisy[2], noisy[3]);
  double m[3] = {0, 0, 0};
  const double n = 1e4;
  for (std::size_t p = 0; p < 10000; ++p) {
    for (int c = 0; c < 3; ++c) m[c] += est.values.data[3 * p + c] / n;
  }
  // Each component is a sum of two intensities with noise ~sigma * 0.5, so the
  // standard error of the mean is below 1e-4; allow five of them.
  EXPECT_NEAR(m[0], 1.0, 5e-4);
  EXPECT_NEAR(m[1], s1, 5e-4);
  EXPECT_NEAR(m[2], s2, 5e-4);
}

TEST(AddNoise, AolpSpreadShrinksWithDolp) {
  double prev = 1e9;
  for (double d : {0.02, 0.05, 0.1, 0.3}) {
    const auto im = polarizer_images(constant_stokes(100, 100, 1.0, d, 0.0), kFourAngles);
    const auto noisy = add_noise(im, 0.01, 99);
    const auto a = aolp_image(estimate_stokes(noisy[0], noisy[1], noisy[2], noisy[3]));
    double ss = 0.0;
    for (double v : a.values.data) ss += std::pow(angle_diff_pi(v, 0.0), 2);
    const double sd = std::sqrt(ss / a.values.data.size());
    EXPECT_LT(sd, prev) << d;
    prev = sd;
  }
}

TEST(CaptureView, NoiseFreeMatchesRender) {
  const RenderJob job = sphere_job(2);
  const auto cap = capture_view<double>(job, 1);
  for (std::size_t p = 0; p < cap.aolp.values.data.size(); ++p) {
    const double a = cap.aolp.values.data[p], b = cap.render.aolp.values.data[p];
    ASSERT_EQ(std::isnan(a), std::isnan(b));
    if (!std::isnan(a)) EXPECT_LT(std::abs(angle_diff_pi(a, b)), 1e-9);
  }
  RenderJob odd = job;
  odd.polarizer_angles = {0.0, 0.3, 0.9};
  odd.noise_sigma = 0.01;
  EXPECT_THROW(capture_view<double>(odd, 0), DomainError);
}
