#pragma once

// Multi-view shape recovery from AoLP images: tangent-space consistency,
// silhouette and Eikonal losses on an SDF network, and the training loop.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "thermopol/autodiff.hpp"
#include "thermopol/errors.hpp"
#include "thermopol/mesh.hpp"
#include "thermopol/raster.hpp"
#include "thermopol/raymarch.hpp"
#include "thermopol/scene.hpp"
#include "thermopol/sdf_network.hpp"
#include "thermopol/simulator.hpp"

namespace thermopol {

struct AolpView {
  CameraView camera;
  Raster<float> aolp;  // radians in [0, pi); NaN where undefined
  Mask mask;           // silhouette, 0 or 1
};

struct MultiViewAolpDataset {
  std::vector<AolpView> views;
  Box bbox;
  double bounding_radius = 1.5;

  void validate() const {
    if (views.empty()) throw DomainError("dataset has no views");
    const int w = views.front().aolp.width, h = views.front().aolp.height;
    for (const auto& v : views) {
      if (v.aolp.width != w || v.aolp.height != h || v.mask.width != w || v.mask.height != h ||
          v.camera.width() != w || v.camera.height() != h) {
        throw ShapeMismatch("dataset views must share one image size");
      }
      for (std::size_t i = 0; i < v.mask.data.size(); ++i) {
        if (!v.mask.data[i] && !std::isnan(v.aolp.data[i])) {
          throw DomainError("AoLP must be undefined outside the silhouette");
        }
      }
    }
  }
};

/// Shifts the AoLP of `fraction` of the defined pixels by pi/2. The choice is
/// a pure function of (seed, view, pixel).
inline void corrupt_aolp(Raster<float>& aolp, std::size_t view_index, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) throw DomainError("ambiguity fraction must lie in [0, 1]");
  if (fraction == 0.0) return;
  for (std::size_t p = 0; p < aolp.data.size(); ++p) {
    if (std::isnan(aolp.data[p])) continue;
    const double u = detail::unit_uniform(detail::splitmix64(
        seed ^ detail::splitmix64(0xA0B1C2D3ull + view_index * 0x9E3779B97F4A7C15ull + p)));
    if (u < fraction) aolp.data[p] = static_cast<float>(wrap_pi(aolp.data[p] + 0.5 * kPi));
  }
}

/// Dataset from simulated captures, optionally with pi/2-corrupted AoLP.
inline MultiViewAolpDataset make_dataset(const RenderJob& job, double ambiguity_fraction = 0.0,
                                         std::uint64_t seed = 0, const Box& bbox = {},
                                         double bounding_radius = 1.5) {
  if (ambiguity_fraction < 0.0 || ambiguity_fraction > 1.0) {
    throw DomainError("ambiguity fraction must lie in [0, 1]");
  }
  MultiViewAolpDataset ds;
  ds.bbox = bbox;
  ds.bounding_radius = bounding_radius;
  for (std::size_t i = 0; i < job.views.size(); ++i) {
    const Capture<float> cap = capture_view<float>(job, i);
    AolpView v{job.views[i], cap.aolp.values, cap.render.mask};
    corrupt_aolp(v.aolp, i, ambiguity_fraction, seed);
    ds.views.push_back(std::move(v));
  }
  ds.validate();
  return ds;
}

/// World-space direction whose image projection lies along AoLP `phi`.
inline Vec3 tangent_vector(double phi, const CameraView& view) {
  return view.r1() * std::cos(phi) - view.r2() * std::sin(phi);
}

/// AoLP at the pixel nearest to the projection of x; NaN outside the
/// silhouette or the image.
inline double lookup_aolp(const AolpView& view, const Vec3& x) {
  const auto uv = view.camera.project(x);
  if (!uv) return std::nan("");
  const long u = std::lround((*uv)(0)), v = std::lround((*uv)(1));
  if (u < 0 || v < 0 || u >= view.aolp.width || v >= view.aolp.height) return std::nan("");
  const int iu = static_cast<int>(u), iv = static_cast<int>(v);
  if (!view.mask.at(iu, iv)) return std::nan("");
  return view.aolp.at(iu, iv);
}

// ---------------------------------------------------------------------------
// Visibility

struct VisibilityOptions {
  double depth_tolerance = 5e-3;
  FieldTraceOptions trace;
};

/// Whether each point is seen by `view`: inside the silhouette at its
/// projection, and the first surface crossing along the camera ray lies at the
/// point's own depth. When normals are given, points facing away from the
/// camera are rejected without tracing (they are occluded on closed surfaces).
template <typename Field>
std::vector<char> visibility(const Field& field, const AolpView& view,
                             const std::vector<Vec3>& points, const VisibilityOptions& opts = {},
                             const std::vector<Vec3>* normals = nullptr) {
  std::vector<char> out(points.size(), 0);
  std::vector<Ray> rays;
  std::vector<std::size_t> which;
  std::vector<double> depth;
  const Vec3 c = view.camera.center();
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (std::isnan(lookup_aolp(view, points[k]))) continue;
    const Vec3 d = points[k] - c;
    if (normals && (*normals)[k].dot(d) >= 0.0) continue;
    const double len = d.norm();
    rays.push_back({c, d / len});
    which.push_back(k);
    depth.push_back(len);
  }
  if (rays.empty()) return out;
  const auto hits = trace_field(field, rays, opts.trace);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    if (hits[r].hit() && std::abs(hits[r].distance - depth[r]) < opts.depth_tolerance) {
      out[which[r]] = 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses. Each builder records onto a caller-owned tape and returns the node.

template <typename Scalar>
struct TscTerm {
  typename Tape<Scalar>::Var loss;
  std::size_t points_used = 0;
  std::size_t points_without_views = 0;
};

/// Per-point, per-view tangent data used by the TSC loss.
struct TangentObservations {
  // Row i: view i. Weight 1/(visible views of the point) where visible, else 0.
  Eigen::MatrixXd weight;
  std::array<Eigen::MatrixXd, 3> tangent;       // components of t(phi)
  std::array<Eigen::MatrixXd, 3> tangent_alt;   // components of t(phi + pi/2)
  std::vector<char> used;                       // point has at least one visible view
};

/// Visibility and AoLP lookups for every point in every view. `source_view`
/// (the view the points were traced from) is treated as visible wherever its
/// AoLP is defined.
template <typename Field>
TangentObservations observe_tangents(const Field& field, const MultiViewAolpDataset& ds,
                                     const std::vector<Vec3>& points,
                                     const std::vector<Vec3>* normals,
                                     const VisibilityOptions& opts, int source_view = -1) {
  const auto n = static_cast<Eigen::Index>(points.size());
  const auto v = static_cast<Eigen::Index>(ds.views.size());
  TangentObservations obs;
  obs.weight = Eigen::MatrixXd::Zero(v, n);
  for (int j = 0; j < 3; ++j) {
    obs.tangent[j] = Eigen::MatrixXd::Zero(v, n);
    obs.tangent_alt[j] = Eigen::MatrixXd::Zero(v, n);
  }
  for (Eigen::Index i = 0; i < v; ++i) {
    const AolpView& view = ds.views[static_cast<std::size_t>(i)];
    std::vector<char> vis;
    if (i == source_view) {
      vis.resize(points.size());
      for (std::size_t k = 0; k < points.size(); ++k) vis[k] = !std::isnan(lookup_aolp(view, points[k]));
    } else {
      vis = visibility(field, view, points, opts, normals);
    }
    for (Eigen::Index k = 0; k < n; ++k) {
      if (!vis[static_cast<std::size_t>(k)]) continue;
      const double phi = lookup_aolp(view, points[static_cast<std::size_t>(k)]);
      const Vec3 t = tangent_vector(phi, view.camera);
      const Vec3 t_alt = tangent_vector(phi + 0.5 * kPi, view.camera);
      obs.weight(i, k) = 1.0;
      for (int j = 0; j < 3; ++j) {
        obs.tangent[j](i, k) = t(j);
        obs.tangent_alt[j](i, k) = t_alt(j);
      }
    }
  }
  obs.used.assign(points.size(), 0);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double count = obs.weight.col(k).sum();
    if (count > 0.0) {
      obs.weight.col(k) /= count;
      obs.used[static_cast<std::size_t>(k)] = 1;
    }
  }
  return obs;
}

/// Mean over points of the visibility-weighted mean of (n^T t)^2 with n the
/// normalized field gradient. With `ambiguous`, each term is the smaller of
/// the phi and phi + pi/2 hypotheses.
template <typename Field>
TscTerm<typename Field::Scalar> record_tsc_loss(Tape<typename Field::Scalar>& tape, const Field& field,
                                                const std::vector<Vec3>& points,
                                                const TangentObservations& obs, bool ambiguous) {
  using Scalar = typename Field::Scalar;
  using Matrix = MatrixX<Scalar>;
  TscTerm<Scalar> out;
  std::vector<Eigen::Index> keep;
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (obs.used[k]) {
      keep.push_back(static_cast<Eigen::Index>(k));
    } else {
      ++out.points_without_views;
    }
  }
  out.points_used = keep.size();
  if (keep.empty()) {
    out.loss = tape.constant(Matrix::Zero(1, 1));
    return out;
  }
  const auto m = static_cast<Eigen::Index>(keep.size());
  Points<Scalar> x(3, m);
  for (Eigen::Index c = 0; c < m; ++c) x.col(c) = points[static_cast<std::size_t>(keep[c])].cast<Scalar>();
  const auto nodes = field.record(tape, x, true);
  const auto g = tape.concat_rows(tape.concat_rows(nodes.grad[0], nodes.grad[1]), nodes.grad[2]);
  const auto norm = tape.col_norm(g, Scalar(1e-12));
  std::array<typename Tape<Scalar>::Var, 3> nhat;
  for (int j = 0; j < 3; ++j) nhat[j] = tape.div(nodes.grad[j], norm);

  auto gather = [&](const Eigen::MatrixXd& src, Eigen::Index row) {
    Matrix r(1, m);
    for (Eigen::Index c = 0; c < m; ++c) r(0, c) = static_cast<Scalar>(src(row, keep[c]));
    return r;
  };
  typename Tape<Scalar>::Var total{};
  bool first = true;
  for (Eigen::Index i = 0; i < obs.weight.rows(); ++i) {
    const Matrix w = gather(obs.weight, i);
    if (w.isZero()) continue;
    auto squared_dot = [&](const std::array<Eigen::MatrixXd, 3>& t) {
      auto d = tape.mul(nhat[0], tape.constant(gather(t[0], i)));
      d = tape.add(d, tape.mul(nhat[1], tape.constant(gather(t[1], i))));
      d = tape.add(d, tape.mul(nhat[2], tape.constant(gather(t[2], i))));
      return tape.square(d);
    };
    auto term = squared_dot(obs.tangent);
    if (ambiguous) term = tape.min(term, squared_dot(obs.tangent_alt));
    term = tape.mul(term, tape.constant(w));
    total = first ? term : tape.add(total, term);
    first = false;
  }
  out.loss = tape.scale(tape.sum(total), Scalar(1) / static_cast<Scalar>(m));
  return out;
}

/// Binary cross entropy of label `o` against sigmoid(z), stable for any z.
inline double bce_with_logits(double z, double o) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - o * z;
}

/// Per-ray silhouette term for minimum field value `f_min` along the ray.
inline double silhouette_term(double f_min, bool inside_mask, double alpha) {
  return bce_with_logits(-alpha * f_min, inside_mask ? 1.0 : 0.0);
}

/// Sum over eligible rays of BCE(sigmoid(-alpha f*), O), divided by
/// alpha * batch_size. `points` are the ray minimizers, held fixed.
template <typename Field>
typename Tape<typename Field::Scalar>::Var record_silhouette_loss(
    Tape<typename Field::Scalar>& tape, const Field& field, const std::vector<Vec3>& points,
    const std::vector<char>& labels, double alpha, std::size_t batch_size) {
  using Scalar = typename Field::Scalar;
  using Matrix = MatrixX<Scalar>;
  if (points.empty()) return tape.constant(Matrix::Zero(1, 1));
  const auto m = static_cast<Eigen::Index>(points.size());
  Points<Scalar> x(3, m);
  Matrix o(1, m);
  for (Eigen::Index c = 0; c < m; ++c) {
    x.col(c) = points[static_cast<std::size_t>(c)].cast<Scalar>();
    o(0, c) = labels[static_cast<std::size_t>(c)] ? Scalar(1) : Scalar(0);
  }
  const auto f = field.record(tape, x, false).value;
  const auto z = tape.scale(f, static_cast<Scalar>(-alpha));
  const auto ce = tape.sub(tape.softplus(z, Scalar(1)), tape.mul(tape.constant(o), z));
  return tape.scale(tape.sum(ce), static_cast<Scalar>(1.0 / (alpha * static_cast<double>(batch_size))));
}

/// Mean of (|grad f| - 1)^2 over the sample points.
template <typename Field>
typename Tape<typename Field::Scalar>::Var record_eikonal_loss(Tape<typename Field::Scalar>& tape,
                                                               const Field& field,
                                                               const Points<typename Field::Scalar>& x) {
  using Scalar = typename Field::Scalar;
  const auto nodes = field.record(tape, x, true);
  const auto g = tape.concat_rows(tape.concat_rows(nodes.grad[0], nodes.grad[1]), nodes.grad[2]);
  return tape.mean(tape.square(tape.add_scalar(tape.col_norm(g, Scalar(0)), Scalar(-1))));
}

template <typename Scalar>
Points<Scalar> uniform_box_samples(const Box& box, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Points<Scalar> x(3, n);
  for (int c = 0; c < n; ++c) {
    for (int j = 0; j < 3; ++j) x(j, c) = static_cast<Scalar>(box.lo(j) + (box.hi(j) - box.lo(j)) * u(rng));
  }
  return x;
}

// ---------------------------------------------------------------------------
// Scalar conveniences (value only, double precision)

template <typename Field>
double tsc_loss(const Field& field, const MultiViewAolpDataset& ds, const std::vector<Vec3>& points,
                bool ambiguous = false, const VisibilityOptions& opts = {}, int source_view = -1,
                std::size_t* points_without_views = nullptr) {
  using Scalar = typename Field::Scalar;
  Points<Scalar> x(3, static_cast<Eigen::Index>(points.size()));
  for (std::size_t k = 0; k < points.size(); ++k) x.col(static_cast<Eigen::Index>(k)) = points[k].cast<Scalar>();
  const auto vg = field.evaluate_with_gradient(x);
  std::vector<Vec3> normals(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) {
    normals[k] = vg.gradients.col(static_cast<Eigen::Index>(k)).template cast<double>();
  }
  const auto obs = observe_tangents(field, ds, points, &normals, opts, source_view);
  Tape<Scalar> tape;
  const auto term = record_tsc_loss(tape, field, points, obs, ambiguous);
  if (points_without_views) *points_without_views = term.points_without_views;
  return static_cast<double>(tape.scalar(term.loss));
}

template <typename Field>
double eikonal_loss(const Field& field, const Points<typename Field::Scalar>& x) {
  Tape<typename Field::Scalar> tape;
  return static_cast<double>(tape.scalar(record_eikonal_loss(tape, field, x)));
}

/// Rays of the given pixels of one view that are eligible for the silhouette
/// term (outside the mask, or inside without a surface hit), with labels.
struct SilhouetteBatch {
  std::vector<Ray> rays;
  std::vector<char> labels;
};

template <typename Field>
SilhouetteBatch silhouette_rays(const Field& field, const AolpView& view, const std::vector<int>& pixels,
                                const FieldTraceOptions& trace) {
  std::vector<Ray> all;
  all.reserve(pixels.size());
  for (int p : pixels) all.push_back(pixel_ray(view.camera, p % view.mask.width, p / view.mask.width));
  const auto hits = trace_field(field, all, trace);
  SilhouetteBatch out;
  for (std::size_t k = 0; k < pixels.size(); ++k) {
    const bool inside = view.mask.data[static_cast<std::size_t>(pixels[k])] != 0;
    if (inside && hits[k].hit()) continue;
    out.rays.push_back(all[k]);
    out.labels.push_back(inside ? 1 : 0);
  }
  return out;
}

template <typename Field>
double silhouette_loss(const Field& field, const MultiViewAolpDataset& ds, int view_index,
                       const std::vector<int>& pixels, double alpha, int samples = 128,
                       const FieldTraceOptions& trace = {}) {
  const AolpView& view = ds.views.at(static_cast<std::size_t>(view_index));
  const auto batch = silhouette_rays(field, view, pixels, trace);
  const auto mins = min_field_on_rays(field, batch.rays, ds.bounding_radius, samples);
  std::vector<Vec3> pts;
  for (const auto& m : mins) pts.push_back(m.point);
  Tape<typename Field::Scalar> tape;
  return static_cast<double>(
      tape.scalar(record_silhouette_loss(tape, field, pts, batch.labels, alpha, pixels.size())));
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double lambda1 = 50.0;
  double lambda2 = 0.1;
  int epochs = 50;
  int batch_pixels = 4096;
  double lr = 1e-3;
  int silhouette_halving_period = 10;
  double alpha = 50.0;
  std::uint64_t seed = 0;
  bool ambiguous = false;
  int eikonal_samples = 1024;
  int silhouette_samples = 128;
  double depth_tolerance = 5e-3;
  // Epochs over which the encoding bands are faded in, lowest first (0: all on).
  int frequency_warmup_epochs = 0;
  // Batches drawn from each view per epoch. 0: a full pass, every masked and
  // unmasked pixel once per epoch.
  int batches_per_view = 0;
  NetworkArch network;
  FieldTraceOptions trace;

  void validate() const {
    if (!(lambda1 > 0.0) || !(lambda2 > 0.0) || !(lr > 0.0) || !(alpha > 0.0)) {
      throw DomainError("loss weights, learning rate and alpha must be positive");
    }
    if (epochs < 0 || batch_pixels < 1 || silhouette_halving_period < 1 || eikonal_samples < 1 ||
        silhouette_samples < 2 || frequency_warmup_epochs < 0 || batches_per_view < 0) {
      throw DomainError("invalid training schedule");
    }
  }

  /// Silhouette weight and sigmoid sharpness in effect during `epoch` (0-based).
  std::pair<double, double> schedule(int epoch) const {
    const int halvings = epoch / silhouette_halving_period;
    const double f = std::ldexp(1.0, halvings);
    return {lambda1 / f, alpha * f};
  }

  /// Fraction of the encoding window open at a point of training.
  double band_progress(int epoch, int step_in_epoch, int steps_per_epoch) const {
    if (frequency_warmup_epochs == 0) return 1.0;
    const double e = epoch + static_cast<double>(step_in_epoch) / std::max(steps_per_epoch, 1);
    return std::min(1.0, e / frequency_warmup_epochs);
  }
};

struct EpochLoss {
  int epoch = 0;  // 1-based
  double tsc = 0.0;
  double silhouette = 0.0;
  double eikonal = 0.0;
  double total = 0.0;
};

struct TrainState {
  SdfNetwork<float> net;
  AdamState<float> adam;
  std::vector<EpochLoss> history;
  std::size_t points_without_views = 0;
};

inline TrainState initial_state(const TrainConfig& cfg) {
  SdfNetwork<float> net(cfg.network, cfg.seed);
  AdamState<float> adam(net.parameters(), cfg.lr);
  return {std::move(net), std::move(adam), {}, 0};
}

struct IterationLoss {
  double tsc = 0.0, silhouette = 0.0, eikonal = 0.0, total = 0.0;
};

/// One optimizer step on the given pixels (row-major indices) of `view_index`.
inline IterationLoss train_step(TrainState& st, const MultiViewAolpDataset& ds, const TrainConfig& cfg,
                                int view_index, const std::vector<int>& pixels, int epoch,
                                std::mt19937_64& rng) {
  const auto [lambda1, alpha] = cfg.schedule(epoch);
  const AolpView& view = ds.views[static_cast<std::size_t>(view_index)];

  FieldTraceOptions trace = cfg.trace;
  trace.bounding_radius = ds.bounding_radius;
  trace.compute_normals = false;
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (int p : pixels) rays.push_back(pixel_ray(view.camera, p % view.mask.width, p / view.mask.width));
  const auto hits = trace_field(st.net, rays, trace);

  std::vector<Vec3> surface;
  std::vector<Ray> sil_rays;
  std::vector<char> sil_labels;
  for (std::size_t k = 0; k < pixels.size(); ++k) {
    const bool inside = view.mask.data[static_cast<std::size_t>(pixels[k])] != 0;
    if (inside && hits[k].hit()) {
      surface.push_back(hits[k].point);
    } else {
      sil_rays.push_back(rays[k]);
      sil_labels.push_back(inside ? 1 : 0);
    }
  }

  // Normals for back-face rejection in the visibility test.
  std::vector<Vec3> normals(surface.size());
  if (!surface.empty()) {
    Points<float> xs(3, static_cast<Eigen::Index>(surface.size()));
    for (std::size_t k = 0; k < surface.size(); ++k) xs.col(static_cast<Eigen::Index>(k)) = surface[k].cast<float>();
    const auto vg = st.net.evaluate_with_gradient(xs);
    for (std::size_t k = 0; k < surface.size(); ++k) {
      normals[k] = vg.gradients.col(static_cast<Eigen::Index>(k)).cast<double>();
    }
  }
  VisibilityOptions vis{cfg.depth_tolerance, trace};
  const auto obs = observe_tangents(st.net, ds, surface, &normals, vis, view_index);

  const auto mins = min_field_on_rays(st.net, sil_rays, ds.bounding_radius, cfg.silhouette_samples);
  std::vector<Vec3> sil_points;
  sil_points.reserve(mins.size());
  for (const auto& m : mins) sil_points.push_back(m.point);

  const Points<float> eik_x = uniform_box_samples<float>(ds.bbox, cfg.eikonal_samples, rng);

  Tape<float> tape;
  const auto tsc = record_tsc_loss(tape, st.net, surface, obs, cfg.ambiguous);
  const auto sil = record_silhouette_loss(tape, st.net, sil_points, sil_labels, alpha, pixels.size());
  const auto eik = record_eikonal_loss(tape, st.net, eik_x);
  const auto total = tape.add(tape.add(tsc.loss, tape.scale(sil, static_cast<float>(lambda1))),
                              tape.scale(eik, static_cast<float>(cfg.lambda2)));
  st.points_without_views += tsc.points_without_views;

  IterationLoss out{tape.scalar(tsc.loss), tape.scalar(sil), tape.scalar(eik), tape.scalar(total)};
  if (!std::isfinite(out.total)) {
    throw NumericalFailure("non-finite loss at epoch " + std::to_string(epoch + 1) + " (tsc " +
                           std::to_string(out.tsc) + ", silhouette " + std::to_string(out.silhouette) +
                           ", eikonal " + std::to_string(out.eikonal) + ")");
  }
  tape.backward(total);
  std::vector<MatrixX<float>> grads;
  grads.reserve(st.net.parameters().size());
  for (std::size_t s = 0; s < st.net.parameters().size(); ++s) {
    MatrixX<float> g = tape.parameter_gradient(static_cast<int>(s));
    if (g.size() == 0) g = MatrixX<float>::Zero(st.net.parameters()[s].rows(), st.net.parameters()[s].cols());
    if (!g.allFinite()) throw NumericalFailure("non-finite gradient at epoch " + std::to_string(epoch + 1));
    grads.push_back(std::move(g));
  }
  adam_step(st.adam, st.net.parameters(), grads);
  return out;
}

using EpochCallback = std::function<void(const EpochLoss&)>;

/// Runs the remaining epochs of `st`. Each epoch shuffles every view's pixels,
/// cuts them into batches of `batch_pixels` and visits the batches of all
/// views in one shuffled order.
inline void train(TrainState& st, const MultiViewAolpDataset& ds, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {}) {
  cfg.validate();
  ds.validate();
  if (ds.views.size() < 2) throw DomainError("training needs at least two views");
  struct Batch {
    int view;
    std::vector<int> pixels;
  };
  for (int epoch = static_cast<int>(st.history.size()); epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(detail::splitmix64(cfg.seed ^ detail::splitmix64(static_cast<std::uint64_t>(epoch) + 1)));
    std::vector<Batch> batches;
    for (std::size_t v = 0; v < ds.views.size(); ++v) {
      const Mask& m = ds.views[v].mask;
      std::vector<int> perm(static_cast<std::size_t>(m.width) * m.height);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      const std::size_t size = static_cast<std::size_t>(cfg.batch_pixels);
      std::size_t count = (perm.size() + size - 1) / size;
      if (cfg.batches_per_view > 0) count = std::min(count, static_cast<std::size_t>(cfg.batches_per_view));
      for (std::size_t b = 0; b < count; ++b) {
        const auto first = perm.begin() + static_cast<std::ptrdiff_t>(b * size);
        const auto last = perm.begin() + static_cast<std::ptrdiff_t>(std::min(perm.size(), (b + 1) * size));
        batches.push_back({static_cast<int>(v), std::vector<int>(first, last)});
      }
    }
    std::shuffle(batches.begin(), batches.end(), rng);
    EpochLoss e;
    e.epoch = epoch + 1;
    for (std::size_t k = 0; k < batches.size(); ++k) {
      st.net.encoding().set_band_window(
          cfg.band_progress(epoch, static_cast<int>(k), static_cast<int>(batches.size())));
      const IterationLoss it = train_step(st, ds, cfg, batches[k].view, batches[k].pixels, epoch, rng);
      e.tsc += it.tsc;
      e.silhouette += it.silhouette;
      e.eikonal += it.eikonal;
      e.total += it.total;
    }
    const double n = static_cast<double>(batches.size());
    e.tsc /= n;
    e.silhouette /= n;
    e.eikonal /= n;
    e.total /= n;
    st.history.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  st.net.encoding().set_band_window(cfg.band_progress(cfg.epochs, 0, 1));
}

inline TrainState train(const MultiViewAolpDataset& ds, const TrainConfig& cfg,
                        const EpochCallback& on_epoch = {}) {
  cfg.validate();
  TrainState st = initial_state(cfg);
  train(st, ds, cfg, on_epoch);
  return st;
}

// ---------------------------------------------------------------------------

/// World-frame unit normals of the field seen through `view`; NaN where the
/// pixel ray misses. The normal faces the camera.
template <typename Field>
Raster<float> render_normal_map(const Field& field, const CameraView& view,
                                const FieldTraceOptions& opts = {}) {
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(view.width()) * view.height());
  for (int y = 0; y < view.height(); ++y) {
    for (int x = 0; x < view.width(); ++x) rays.push_back(pixel_ray(view, x, y));
  }
  FieldTraceOptions o = opts;
  o.compute_normals = true;
  const auto hits = trace_field(field, rays, o);
  Raster<float> out = Raster<float>::nan(view.width(), view.height(), 3);
  for (int y = 0; y < view.height(); ++y) {
    for (int x = 0; x < view.width(); ++x) {
      const auto& h = hits[static_cast<std::size_t>(y) * view.width() + x];
      if (!h.hit() || h.normal.isZero()) continue;
      for (int j = 0; j < 3; ++j) out.at(x, y, j) = static_cast<float>(h.normal(j));
    }
  }
  return out;
}

}  // namespace thermopol
