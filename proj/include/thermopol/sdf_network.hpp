#pragma once

// Neural signed distance field: positional encoding followed by a softplus
// MLP with one skip connection. Spatial gradients are propagated in forward
// mode alongside the values (three tangents, one per coordinate), which keeps
// the whole normal computation a plain feed-forward graph; recording that
// graph on a Tape yields exact parameter gradients of losses that depend on
// both f and grad f.

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "thermopol/autodiff.hpp"
#include "thermopol/errors.hpp"
#include "thermopol/polcore.hpp"
#include "thermopol/scene.hpp"

namespace thermopol {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Points = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
struct ValueGradient {
  RowVectorX<Scalar> values;
  Points<Scalar> gradients;
};

/// Tape handles for a field evaluated at a batch of points.
template <typename Scalar>
struct FieldNodes {
  typename Tape<Scalar>::Var value;                 // 1 x N
  std::array<typename Tape<Scalar>::Var, 3> grad{};  // each 1 x N
  bool has_gradient = false;
};

// ---------------------------------------------------------------------------

/// [x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)]
template <typename Scalar>
class PositionalEncoding {
 public:
  explicit PositionalEncoding(int num_frequencies = 10)
      : num_frequencies_(num_frequencies),
        band_weight_(static_cast<std::size_t>(std::max(num_frequencies, 0)), Scalar(1)) {
    if (num_frequencies < 0) throw DomainError("number of frequencies must be non-negative");
  }

  int num_frequencies() const { return num_frequencies_; }
  int dim() const { return 3 + 6 * num_frequencies_; }

  /// Per-band multipliers on the sin/cos features (all 1 by default).
  const std::vector<Scalar>& band_weights() const { return band_weight_; }
  void set_band_weights(std::vector<Scalar> w) {
    if (w.size() != band_weight_.size()) throw ShapeMismatch("one weight per frequency band");
    band_weight_ = std::move(w);
  }

  /// Coarse-to-fine window: band k ramps from 0 to 1 as `progress` (0..1)
  /// sweeps across it with a cosine easing.
  void set_band_window(double progress) {
    const double a = std::clamp(progress, 0.0, 1.0) * num_frequencies_;
    for (int k = 0; k < num_frequencies_; ++k) {
      const double t = std::clamp(a - k, 0.0, 1.0);
      band_weight_[static_cast<std::size_t>(k)] = static_cast<Scalar>(0.5 * (1.0 - std::cos(kPi * t)));
    }
  }

  MatrixX<Scalar> encode(const Points<Scalar>& x) const {
    MatrixX<Scalar> out(dim(), x.cols());
    out.topRows(3) = x;
    for_each_band(x, [&](int k, int j, const auto& sn, const auto& cs, Scalar) {
      const Scalar w = band_weight_[static_cast<std::size_t>(k)];
      out.row(3 + 6 * k + j) = (sn * w).matrix();
      out.row(6 + 6 * k + j) = (cs * w).matrix();
    });
    return out;
  }

  /// d encode / d x_j for each column.
  MatrixX<Scalar> derivative(const Points<Scalar>& x, int j) const {
    MatrixX<Scalar> out = MatrixX<Scalar>::Zero(dim(), x.cols());
    out.row(j).setOnes();
    for_each_band(x, [&](int k, int jj, const auto& sn, const auto& cs, Scalar freq) {
      if (jj != j) return;
      const Scalar w = band_weight_[static_cast<std::size_t>(k)] * freq;
      out.row(3 + 6 * k + j) = (cs * w).matrix();
      out.row(6 + 6 * k + j) = (-sn * w).matrix();
    });
    return out;
  }

 private:
  // Visits sin/cos(2^k pi x_j) for every band k and coordinate j. Higher bands
  // come from the double-angle identities, so only one sin/cos pair is
  // evaluated per coordinate.
  template <typename Visit>
  void for_each_band(const Points<Scalar>& x, Visit&& visit) const {
    using Row = Eigen::Array<Scalar, 1, Eigen::Dynamic>;
    for (int j = 0; j < 3; ++j) {
      const Row arg = x.row(j).array() * static_cast<Scalar>(kPi);
      Row sn = arg.sin(), cs = arg.cos();
      for (int k = 0; k < num_frequencies_; ++k) {
        visit(k, j, sn, cs, static_cast<Scalar>(std::ldexp(kPi, k)));
        if (k + 1 < num_frequencies_) {
          const Row next_sn = Scalar(2) * sn * cs;
          cs = (cs - sn) * (cs + sn);
          sn = next_sn;
        }
      }
    }
  }

  int num_frequencies_;
  std::vector<Scalar> band_weight_;
};

struct NetworkArch {
  int width = 256;
  int hidden_layers = 8;
  int num_frequencies = 10;
  int skip_layer = 4;
  double softplus_beta = 100.0;
  double init_radius = 0.5;

  bool operator==(const NetworkArch&) const = default;
};

template <typename S>
class SdfNetwork {
 public:
  using Scalar = S;
  using Matrix = MatrixX<Scalar>;
  using TapeT = Tape<Scalar>;
  using Var = typename TapeT::Var;

  explicit SdfNetwork(const NetworkArch& arch = {}, std::uint64_t seed = 0)
      : arch_(arch), encoding_(arch.num_frequencies) {
    if (arch.width < 1 || arch.hidden_layers < 1) throw DomainError("invalid network size");
    if (arch.skip_layer < 0 || arch.skip_layer >= arch.hidden_layers) {
      throw DomainError("skip layer must index a hidden layer");
    }
    geometric_init(seed);
  }

  const NetworkArch& arch() const { return arch_; }
  const PositionalEncoding<Scalar>& encoding() const { return encoding_; }
  PositionalEncoding<Scalar>& encoding() { return encoding_; }

  /// Weights and biases interleaved: W0, b0, W1, b1, ..., W_out, b_out.
  std::vector<Matrix>& parameters() { return params_; }
  const std::vector<Matrix>& parameters() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
    return n;
  }

  std::vector<Scalar> flatten() const {
    std::vector<Scalar> out;
    out.reserve(parameter_count());
    for (const auto& p : params_) out.insert(out.end(), p.data(), p.data() + p.size());
    return out;
  }

  void unflatten(const std::vector<Scalar>& flat) {
    if (flat.size() != parameter_count()) throw ShapeMismatch("parameter vector size mismatch");
    std::size_t offset = 0;
    for (auto& p : params_) {
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                flat.begin() + static_cast<std::ptrdiff_t>(offset + p.size()), p.data());
      offset += static_cast<std::size_t>(p.size());
    }
  }

  int layer_count() const { return arch_.hidden_layers + 1; }
  int layer_input_dim(int l) const {
    if (l == 0) return encoding_.dim();
    if (l == arch_.skip_layer) return arch_.width + encoding_.dim();
    return arch_.width;
  }
  int layer_output_dim(int l) const { return l == arch_.hidden_layers ? 1 : arch_.width; }

  // -- evaluation -------------------------------------------------------------

  RowVectorX<Scalar> evaluate(const Points<Scalar>& x) const {
    RowVectorX<Scalar> out(x.cols());
    for (Eigen::Index start = 0; start < x.cols(); start += kChunk) {
      const Eigen::Index n = std::min<Eigen::Index>(kChunk, x.cols() - start);
      out.segment(start, n) = evaluate_chunk(x.middleCols(start, n));
    }
    return out;
  }

  Scalar value_at(const Vec3& x) const {
    return evaluate(Points<Scalar>(x.cast<Scalar>()))(0);
  }

  ValueGradient<Scalar> evaluate_with_gradient(const Points<Scalar>& x) const {
    ValueGradient<Scalar> out{RowVectorX<Scalar>(x.cols()), Points<Scalar>(3, x.cols())};
    for (Eigen::Index start = 0; start < x.cols(); start += kChunk) {
      const Eigen::Index n = std::min<Eigen::Index>(kChunk, x.cols() - start);
      const ValueGradient<Scalar> part = gradient_chunk(x.middleCols(start, n));
      out.values.segment(start, n) = part.values;
      out.gradients.middleCols(start, n) = part.gradients;
    }
    return out;
  }

  /// Unnormalized surface normal (spatial gradient) at one point.
  Vec3 normal(const Vec3& x) const {
    return evaluate_with_gradient(Points<Scalar>(x.cast<Scalar>())).gradients.col(0).template cast<double>();
  }

  /// Records f (and grad f) at x on the tape; parameters become leaves whose
  /// slot equals their index in `parameters()`.
  FieldNodes<Scalar> record(TapeT& tape, const Points<Scalar>& x, bool with_gradient) const {
    const Scalar beta = static_cast<Scalar>(arch_.softplus_beta);
    const Scalar skip_scale = static_cast<Scalar>(1.0 / std::sqrt(2.0));
    const Var enc = tape.constant(encoding_.encode(x));
    std::array<Var, 3> enc_d{};
    if (with_gradient) {
      for (int j = 0; j < 3; ++j) enc_d[j] = tape.constant(encoding_.derivative(x, j));
    }
    Var a = enc;
    std::array<Var, 3> da = enc_d;
    for (int l = 0; l < layer_count(); ++l) {
      if (l == arch_.skip_layer && l > 0) {
        a = tape.scale(tape.concat_rows(a, enc), skip_scale);
        if (with_gradient) {
          for (int j = 0; j < 3; ++j) da[j] = tape.scale(tape.concat_rows(da[j], enc_d[j]), skip_scale);
        }
      }
      const Var w = tape.parameter(2 * l, params_[2 * l]);
      const Var b = tape.parameter(2 * l + 1, params_[2 * l + 1]);
      const Var z = tape.add_bias(tape.matmul(w, a), b);
      std::array<Var, 3> dz{};
      if (with_gradient) {
        for (int j = 0; j < 3; ++j) dz[j] = tape.matmul(w, da[j]);
      }
      if (l == arch_.hidden_layers) {
        a = z;
        da = dz;
        break;
      }
      a = tape.softplus(z, beta);
      if (with_gradient) {
        const Var slope = tape.sigmoid(z, beta);
        for (int j = 0; j < 3; ++j) da[j] = tape.mul(slope, dz[j]);
      }
    }
    FieldNodes<Scalar> out;
    out.value = a;
    out.has_gradient = with_gradient;
    if (with_gradient) out.grad = da;
    return out;
  }

 private:
  static constexpr Eigen::Index kChunk = 1024;

  void geometric_init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    params_.clear();
    const int enc_dim = encoding_.dim();
    for (int l = 0; l < layer_count(); ++l) {
      const int in = layer_input_dim(l);
      const int out = layer_output_dim(l);
      Matrix w(out, in);
      Matrix b = Matrix::Zero(out, 1);
      if (l == arch_.hidden_layers) {
        std::normal_distribution<double> dist(std::sqrt(kPi) / std::sqrt(double(in)), 1e-4);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(dist(rng));
        b(0, 0) = static_cast<Scalar>(-arch_.init_radius);
      } else {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0) / std::sqrt(double(out)));
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(dist(rng));
        // Frequency features start switched off so the initial field is smooth.
        if (l == 0) {
          w.rightCols(in - 3).setZero();
        } else if (l == arch_.skip_layer) {
          w.rightCols(enc_dim - 3).setZero();
        }
      }
      params_.push_back(std::move(w));
      params_.push_back(std::move(b));
    }
    calibrate_output_layer(rng);
  }

  RowVectorX<Scalar> evaluate_chunk(const Points<Scalar>& x) const {
    const int out = arch_.hidden_layers;
    Matrix z = params_[2 * out] * last_hidden(x);
    z.colwise() += params_[2 * out + 1].col(0);
    return z.row(0);
  }

  /// Activations feeding the output layer.
  Matrix last_hidden(const Points<Scalar>& x) const {
    const Scalar beta = static_cast<Scalar>(arch_.softplus_beta);
    const Scalar skip_scale = static_cast<Scalar>(1.0 / std::sqrt(2.0));
    const Matrix enc = encoding_.encode(x);
    Matrix a = enc;
    for (int l = 0; l < arch_.hidden_layers; ++l) {
      if (l == arch_.skip_layer && l > 0) {
        Matrix cat(a.rows() + enc.rows(), a.cols());
        cat << a, enc;
        a = cat * skip_scale;
      }
      Matrix z = params_[2 * l] * a;
      z.colwise() += params_[2 * l + 1].col(0);
      a = TapeT::softplus_value(z, beta);
    }
    return a;
  }

  // Random features make the geometric init direction dependent (the error
  // grows roughly like 0.3 |x|). Refit the output layer by ridge regression
  // towards its geometric value so the field matches |x| - r over the box.
  void calibrate_output_layer(std::mt19937_64& rng) {
    constexpr int kSamples = 4096;
    constexpr double kHalfExtent = 1.5;
    constexpr double kRidge = 1e-6;
    std::uniform_real_distribution<double> u(-kHalfExtent, kHalfExtent);
    Points<Scalar> x(3, kSamples);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<Scalar>(u(rng));
    // Every fourth sample near the origin, where the cone tip of |x| is hardest to fit.
    for (Eigen::Index i = 0; i < kSamples; i += 4) x.col(i) *= static_cast<Scalar>(0.2);
    const Eigen::MatrixXd h = last_hidden(x).template cast<double>();
    const Eigen::Index k = h.rows();
    Eigen::MatrixXd design(kSamples, k + 1);
    design.leftCols(k) = h.transpose();
    design.col(k).setOnes();
    const Eigen::VectorXd target =
        x.template cast<double>().colwise().norm().transpose().array() - arch_.init_radius;
    const int out = arch_.hidden_layers;
    Eigen::VectorXd prior(k + 1);
    prior.head(k) = params_[2 * out].row(0).transpose().template cast<double>();
    prior(k) = static_cast<double>(params_[2 * out + 1](0, 0));
    Eigen::MatrixXd normal = design.transpose() * design;
    const double lambda = kRidge * normal.trace() / static_cast<double>(k + 1);
    normal.diagonal().array() += lambda;
    const Eigen::VectorXd rhs = design.transpose() * target + lambda * prior;
    const Eigen::VectorXd w = normal.ldlt().solve(rhs);
    params_[2 * out].row(0) = w.head(k).transpose().template cast<Scalar>();
    params_[2 * out + 1](0, 0) = static_cast<Scalar>(w(k));
  }

  ValueGradient<Scalar> gradient_chunk(const Points<Scalar>& xs) const {
    const Scalar beta = static_cast<Scalar>(arch_.softplus_beta);
    const Scalar skip_scale = static_cast<Scalar>(1.0 / std::sqrt(2.0));
    const Eigen::Index n = xs.cols();
    const Matrix enc = encoding_.encode(xs);
    // Columns: [values | d/dx | d/dy | d/dz]
    Matrix enc_stack(enc.rows(), 4 * n);
    enc_stack.leftCols(n) = enc;
    for (int j = 0; j < 3; ++j) enc_stack.middleCols((j + 1) * n, n) = encoding_.derivative(xs, j);
    Matrix a = enc_stack;
    for (int l = 0; l < layer_count(); ++l) {
      if (l == arch_.skip_layer && l > 0) {
        Matrix cat(a.rows() + enc_stack.rows(), 4 * n);
        cat << a, enc_stack;
        a = cat * skip_scale;
      }
      Matrix z = params_[2 * l] * a;
      z.leftCols(n).colwise() += params_[2 * l + 1].col(0);
      if (l == arch_.hidden_layers) {
        ValueGradient<Scalar> out{z.leftCols(n), Points<Scalar>(3, n)};
        for (int j = 0; j < 3; ++j) out.gradients.row(j) = z.middleCols((j + 1) * n, n);
        return out;
      }
      const Matrix pre = z.leftCols(n);
      const Matrix slope = TapeT::sigmoid_value(pre, beta);
      a.resize(z.rows(), 4 * n);
      a.leftCols(n) = TapeT::softplus_value(pre, beta);
      for (int j = 0; j < 3; ++j) {
        a.middleCols((j + 1) * n, n) = slope.cwiseProduct(z.middleCols((j + 1) * n, n));
      }
    }
    return {};
  }

  NetworkArch arch_;
  PositionalEncoding<Scalar> encoding_;
  std::vector<Matrix> params_;
};

// ---------------------------------------------------------------------------

/// Analytic shape exposed through the same field interface as SdfNetwork:
/// f(x) = output_scale * sdf(x / input_scale).
template <typename S>
struct AnalyticField {
  using Scalar = S;
  AnalyticShape shape = Sphere{};
  double input_scale = 1.0;
  double output_scale = 1.0;

  Scalar value_at(const Vec3& x) const {
    return static_cast<Scalar>(output_scale * shape_sdf(shape, x / input_scale));
  }

  RowVectorX<Scalar> evaluate(const Points<Scalar>& x) const {
    RowVectorX<Scalar> out(x.cols());
    for (Eigen::Index i = 0; i < x.cols(); ++i) out(i) = value_at(x.col(i).template cast<double>());
    return out;
  }

  ValueGradient<Scalar> evaluate_with_gradient(const Points<Scalar>& x) const {
    ValueGradient<Scalar> out{RowVectorX<Scalar>(x.cols()), Points<Scalar>(3, x.cols())};
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
      const Vec3 p = x.col(i).template cast<double>() / input_scale;
      out.values(i) = static_cast<Scalar>(output_scale * shape_sdf(shape, p));
      out.gradients.col(i) = (shape_gradient(shape, p) * (output_scale / input_scale)).template cast<Scalar>();
    }
    return out;
  }

  FieldNodes<Scalar> record(Tape<Scalar>& tape, const Points<Scalar>& x, bool with_gradient) const {
    const ValueGradient<Scalar> vg = evaluate_with_gradient(x);
    FieldNodes<Scalar> out;
    out.value = tape.constant(vg.values);
    out.has_gradient = with_gradient;
    if (with_gradient) {
      for (int j = 0; j < 3; ++j) out.grad[j] = tape.constant(vg.gradients.row(j));
    }
    return out;
  }
};

// ---------------------------------------------------------------------------

template <typename Scalar>
struct AdamState {
  using Matrix = MatrixX<Scalar>;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::int64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(const std::vector<Matrix>& params, double lr) : learning_rate(lr) {
    for (const auto& p : params) {
      first_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
      second_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
};

/// Bias-corrected Adam update, in place.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, std::vector<MatrixX<Scalar>>& params,
               const std::vector<MatrixX<Scalar>>& grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeMismatch("adam: parameter/gradient/state count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].rows() != grads[i].rows() || params[i].cols() != grads[i].cols() ||
        params[i].rows() != state.first_moment[i].rows() ||
        params[i].cols() != state.first_moment[i].cols()) {
      throw ShapeMismatch("adam: shape mismatch at parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Scalar>(state.beta1);
  const auto b2 = static_cast<Scalar>(state.beta2);
  const auto step_size = static_cast<Scalar>(state.learning_rate / c1);
  const auto inv_sqrt_c2 = static_cast<Scalar>(1.0 / std::sqrt(c2));
  const auto eps = static_cast<Scalar>(state.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = b1 * m + (Scalar(1) - b1) * grads[i];
    v = b2 * v + (Scalar(1) - b2) * grads[i].cwiseAbs2();
    params[i].array() -= step_size * m.array() / (v.array().sqrt() * inv_sqrt_c2 + eps);
  }
}

}  // namespace thermopol
