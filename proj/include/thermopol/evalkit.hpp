#pragma once

// Geometry metrics: nearest-neighbour index, Chamfer distance, point-to-point
// ICP and angular error between normal maps.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "thermopol/errors.hpp"
#include "thermopol/marching_cubes.hpp"
#include "thermopol/mesh.hpp"
#include "thermopol/raster.hpp"
#include "thermopol/scene.hpp"

namespace thermopol {

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty or one unit normal per point

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty(); }
};

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform then(const RigidTransform& next) const {
    return {next.rotation * rotation, next.rotation * translation + next.translation};
  }

  RigidTransform inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation)};
  }

  /// Rotation angle in radians.
  double angle() const {
    return std::acos(std::clamp((rotation.trace() - 1.0) * 0.5, -1.0, 1.0));
  }
};

inline PointCloud transformed(const PointCloud& cloud, const RigidTransform& t) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(t.apply(p));
  for (const auto& n : cloud.normals) out.normals.push_back(t.rotation * n);
  return out;
}

// ---------------------------------------------------------------------------

/// Static 3-d tree over a point set (median splits, cycling axes).
class KdTree {
 public:
  explicit KdTree(const std::vector<Vec3>& points) : points_(points) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(points_.size());
    if (!points_.empty()) build(0, static_cast<int>(order_.size()), 0);
  }

  struct Neighbor {
    int index = -1;
    double squared_distance = std::numeric_limits<double>::infinity();
  };

  Neighbor nearest(const Vec3& q) const {
    Neighbor best;
    if (nodes_.empty()) return best;
    search(0, q, best);
    return best;
  }

  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  int build(int begin, int end, int depth) {
    if (begin >= end) return -1;
    const int axis = depth % 3;
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({order_[mid], axis, -1, -1});
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid + 1, end, depth + 1);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  // Near side first so the far side is usually pruned. Ties keep the lower
  // index, which makes the result independent of traversal order.
  void search(int id, const Vec3& q, Neighbor& best) const {
    if (id < 0) return;
    const Node& n = nodes_[id];
    const Vec3& p = points_[n.point];
    const double d2 = (p - q).squaredNorm();
    if (d2 < best.squared_distance || (d2 == best.squared_distance && n.point < best.index)) {
      best = {n.point, d2};
    }
    const double delta = q[n.axis] - p[n.axis];
    search(delta < 0.0 ? n.left : n.right, q, best);
    if (delta * delta <= best.squared_distance) search(delta < 0.0 ? n.right : n.left, q, best);
  }

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

/// Mean distance from each point of `from` to its nearest neighbour in `tree`.
inline double mean_nearest_distance(const std::vector<Vec3>& from, const KdTree& tree) {
  double sum = 0.0;
  for (const auto& p : from) sum += std::sqrt(tree.nearest(p).squared_distance);
  return sum / static_cast<double>(from.size());
}

/// Symmetric, un-squared Chamfer distance.
inline double chamfer(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw DomainError("chamfer distance needs two nonempty clouds");
  const KdTree ta(a.points), tb(b.points);
  return 0.5 * (mean_nearest_distance(a.points, tb) + mean_nearest_distance(b.points, ta));
}

// ---------------------------------------------------------------------------

namespace detail {

inline void require_nondegenerate(const std::vector<Vec3>& pts, const char* which) {
  if (pts.size() < 3) {
    throw DegenerateConfiguration(std::string(which) + " cloud has fewer than three points");
  }
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  const Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 ev = es.eigenvalues();  // ascending
  if (!(ev(1) > 1e-12 * std::max(ev(2), 1e-300))) {
    throw DegenerateConfiguration(std::string(which) + " cloud is collinear");
  }
}

/// Least-squares rigid motion taking src onto dst (Kabsch).
inline RigidTransform kabsch(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(dst.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) h += (src[i] - cs) * (dst[i] - cd).transpose();
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  return {r, cd - r * cs};
}

}  // namespace detail

struct IcpOptions {
  int max_iterations = 50;
  double tolerance = 1e-8;       // stop when the error improves by less than this
  double rejection_factor = 3.0; // drop pairs beyond this multiple of the median distance
};

struct IcpResult {
  RigidTransform transform;
  int iterations = 0;
  double rmse = 0.0;                 // over all source points after alignment
  std::vector<double> error_history; // mean NN distance, starting with the initial pose
};

/// Point-to-point ICP aligning `source` onto `target`. A step is kept only if
/// it does not increase the mean nearest-neighbour distance, so the recorded
/// error sequence never rises.
inline IcpResult icp_align(const PointCloud& source, const PointCloud& target,
                           const IcpOptions& opts = {}, const RigidTransform& initial = {}) {
  detail::require_nondegenerate(source.points, "source");
  detail::require_nondegenerate(target.points, "target");
  const KdTree tree(target.points);

  IcpResult result;
  result.transform = initial;
  std::vector<Vec3> moved(source.size());
  auto evaluate = [&](const RigidTransform& t, std::vector<KdTree::Neighbor>* nn) {
    double sum = 0.0;
    if (nn) nn->resize(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
      moved[i] = t.apply(source.points[i]);
      const auto n = tree.nearest(moved[i]);
      if (nn) (*nn)[i] = n;
      sum += std::sqrt(n.squared_distance);
    }
    return sum / static_cast<double>(source.size());
  };

  std::vector<KdTree::Neighbor> nn;
  double error = evaluate(result.transform, &nn);
  result.error_history.push_back(error);
  for (int it = 0; it < opts.max_iterations; ++it) {
    std::vector<double> dist(nn.size());
    for (std::size_t i = 0; i < nn.size(); ++i) dist[i] = std::sqrt(nn[i].squared_distance);
    std::vector<double> sorted = dist;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double cutoff = opts.rejection_factor * sorted[sorted.size() / 2];
    std::vector<Vec3> src, dst;
    for (std::size_t i = 0; i < nn.size(); ++i) {
      if (dist[i] <= cutoff) {
        src.push_back(moved[i]);
        dst.push_back(target.points[static_cast<std::size_t>(nn[i].index)]);
      }
    }
    if (src.size() < 3) break;
    const RigidTransform candidate = result.transform.then(detail::kabsch(src, dst));
    std::vector<KdTree::Neighbor> cand_nn;
    const double cand_error = evaluate(candidate, &cand_nn);
    if (cand_error > error) break;
    result.transform = candidate;
    result.iterations = it + 1;
    result.error_history.push_back(cand_error);
    nn.swap(cand_nn);
    const double gain = error - cand_error;
    error = cand_error;
    if (gain < opts.tolerance) break;
  }
  double sq = 0.0;
  for (const auto& p : source.points) {
    sq += tree.nearest(result.transform.apply(p)).squared_distance;
  }
  result.rmse = std::sqrt(sq / static_cast<double>(source.size()));
  return result;
}

// ---------------------------------------------------------------------------

/// Mean angle in degrees between two normal maps (3 channels) over `mask`.
/// Both maps are normalized per pixel before comparison.
template <typename T>
double normal_mae(const Raster<T>& est, const Raster<T>& gt, const Mask& mask) {
  if (est.channels != 3 || gt.channels != 3) throw ShapeMismatch("normal maps need 3 channels");
  if (!est.same_size(gt) || !est.same_size(mask)) throw ShapeMismatch("normal map sizes differ");
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < est.height; ++y) {
    for (int x = 0; x < est.width; ++x) {
      if (!mask.at(x, y)) continue;
      const Vec3 a(est.at(x, y, 0), est.at(x, y, 1), est.at(x, y, 2));
      const Vec3 b(gt.at(x, y, 0), gt.at(x, y, 1), gt.at(x, y, 2));
      if (!a.allFinite() || !b.allFinite() || a.norm() == 0.0 || b.norm() == 0.0) {
        throw DomainError("masked pixel has no valid normal");
      }
      sum += std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0));
      ++count;
    }
  }
  if (count == 0) throw DomainError("normal error needs a nonempty mask");
  return sum / static_cast<double>(count) * 180.0 / kPi;
}

// ---------------------------------------------------------------------------
// Surface sampling

/// Uniform area-weighted samples with face normals.
inline PointCloud sample_mesh(const Mesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.empty()) throw DomainError("cannot sample an empty mesh");
  std::vector<double> cdf(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += mesh.face_area(f);
    cdf[f] = total;
  }
  if (!(total > 0.0)) throw DomainError("mesh has zero area");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointCloud out;
  out.points.reserve(n);
  out.normals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = u(rng) * total;
    const auto f = static_cast<std::size_t>(
        std::min<std::ptrdiff_t>(std::lower_bound(cdf.begin(), cdf.end(), pick) - cdf.begin(),
                                 static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    double r1 = u(rng), r2 = u(rng);
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const auto& t = mesh.faces[f];
    const Vec3& a = mesh.vertices[t[0]];
    out.points.push_back(a + r1 * (mesh.vertices[t[1]] - a) + r2 * (mesh.vertices[t[2]] - a));
    out.normals.push_back(mesh.face_normal(f));
  }
  return out;
}

/// Samples on an analytic surface. Spheres are sampled exactly; other shapes
/// are meshed finely and each sample is projected back onto the zero set.
inline PointCloud sample_shape(const AnalyticShape& shape, std::size_t n, std::uint64_t seed,
                               const Box& box = {}, int resolution = 192) {
  PointCloud out;
  out.points.reserve(n);
  out.normals.reserve(n);
  if (const auto* s = std::get_if<Sphere>(&shape)) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    while (out.points.size() < n) {
      const Vec3 d(g(rng), g(rng), g(rng));
      const double len = d.norm();
      if (len < 1e-12) continue;
      out.points.push_back(s->center + s->radius * d / len);
      out.normals.push_back(d / len);
    }
    return out;
  }
  const Mesh mesh = marching_cubes(AnalyticField<double>{shape}, resolution, box);
  PointCloud raw = sample_mesh(mesh, n, seed);
  for (auto& p : raw.points) {
    for (int it = 0; it < 8; ++it) {
      const Vec3 g = shape_gradient(shape, p);
      const double gg = g.squaredNorm();
      if (gg == 0.0) break;
      p -= shape_sdf(shape, p) * g / gg;
    }
    out.points.push_back(p);
    out.normals.push_back(shape_gradient(shape, p).normalized());
  }
  return out;
}

}  // namespace thermopol
