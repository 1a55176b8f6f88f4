// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#include "ctmpc/riemann.hpp"

#include <algorithm>
#include <cmath>

#include "ctmpc/errors.hpp"

namespace ctmpc {

MetricFunction MetricFunction::constant(Matrix m) {
  MetricFunction metric;
  metric.constant_ = true;
  metric.value_ = 0.5 * (m + m.transpose());
  metric.delta_buf_.resize(metric.value_.rows());
  metric.solve_buf_.resize(metric.value_.rows());
  return metric;
}

MetricFunction MetricFunction::from(std::function<Matrix(const Vector&)> fn) {
  MetricFunction metric;
  metric.fn_ = std::move(fn);
  return metric;
}

MetricFunction MetricFunction::from_certificate(const ContractionCertificate& cert) {
  if (cert.constant_metric()) return constant(cert.metric(Vector::Zero(cert.state_dim())));
  return from_inverse_poly(cert.w());
}

MetricFunction MetricFunction::from_inverse_poly(const PolynomialMatrix& w) {
  if (w.is_constant()) {
    const Matrix w_value = w.eval(Vector::Zero(w.nvars()));
    Matrix m = (0.5 * (w_value + w_value.transpose())).inverse();
    return constant(0.5 * (m + m.transpose()));
  }
  MetricFunction metric;
  metric.poly_ = true;
  metric.w_poly_ = w;
  const int n = w.rows();
  metric.mono_buf_.resize(metric.w_poly_.basis().size());
  metric.mid_buf_.resize(n);
  metric.delta_buf_.resize(n);
  metric.solve_buf_.resize(n);
  metric.w_buf_.resize(n, n);
  return metric;
}

Matrix MetricFunction::operator()(const Vector& x) const {
  if (constant_) return value_;
  if (poly_) {
    w_poly_.eval_into(x, w_buf_, mono_buf_);
    Matrix w = 0.5 * (w_buf_ + w_buf_.transpose());
    Matrix m = w.inverse();
    return 0.5 * (m + m.transpose());
  }
  if (!fn_) throw DomainError("metric function is empty");
  return fn_(x);
}

double MetricFunction::segment_quad(const Vector& a, const Vector& b) const {
  if (constant_) {
    delta_buf_ = b - a;
    solve_buf_.noalias() = value_ * delta_buf_;
    return delta_buf_.dot(solve_buf_);
  }
  if (poly_) {
    mid_buf_ = 0.5 * (a + b);
    delta_buf_ = b - a;
    w_poly_.eval_into(mid_buf_, w_buf_, mono_buf_);
    const int n = static_cast<int>(delta_buf_.size());
    // quadratic form under M = W^{-1}: solve W y = delta
    if (n == 2) {
      const double w00 = w_buf_(0, 0);
      const double w11 = w_buf_(1, 1);
      const double w01 = 0.5 * (w_buf_(0, 1) + w_buf_(1, 0));
      const double det = w00 * w11 - w01 * w01;
      if (!(det > 1e-300)) return std::numeric_limits<double>::infinity();
      const double d0 = delta_buf_[0], d1 = delta_buf_[1];
      return (w11 * d0 * d0 - 2.0 * w01 * d0 * d1 + w00 * d1 * d1) / det;
    }
    const Matrix w = 0.5 * (w_buf_ + w_buf_.transpose());
    solve_buf_ = w.ldlt().solve(delta_buf_);
    return delta_buf_.dot(solve_buf_);
  }
  const Vector delta = b - a;
  return delta.dot((*this)(0.5 * (a + b)) * delta);
}

Vector GeodesicPath::tangent(int segment) const {
  return static_cast<double>(segments()) * (samples[segment + 1] - samples[segment]);
}

namespace {

GeodesicPath straight_path(const Vector& from, const Vector& to, int segments) {
  GeodesicPath path;
  path.samples.reserve(segments + 1);
  for (int i = 0; i <= segments; ++i) {
    const double s = static_cast<double>(i) / segments;
    path.samples.push_back((1.0 - s) * from + s * to);
  }
  path.samples.front() = from;
  path.samples.back() = to;
  return path;
}

void repin_straight(GeodesicPath& path, const Vector& from, const Vector& to) {
  const int segments = path.segments();
  for (int i = 0; i <= segments; ++i) {
    const double s = static_cast<double>(i) / segments;
    path.samples[i] = (1.0 - s) * from + s * to;
  }
  path.samples.front() = from;
  path.samples.back() = to;
}

}  // namespace

double path_length(const MetricFunction& metric, const GeodesicPath& path) {
  double length = 0.0;
  for (int i = 0; i < path.segments(); ++i) {
    const double q = metric.segment_quad(path.samples[i], path.samples[i + 1]);
    length += std::sqrt(std::max(q, 0.0));
  }
  return length;
}

double path_energy(const MetricFunction& metric, const GeodesicPath& path) {
  // sum of S * delta' M delta == (1/S) sum tangent' M tangent
  const double s = path.segments();
  double energy = 0.0;
  for (int i = 0; i < path.segments(); ++i) {
    energy += s * metric.segment_quad(path.samples[i], path.samples[i + 1]);
  }
  return energy;
}

namespace {

/// Energy descent over the interior samples by damped Newton iterations on
/// the full path: the discrete energy couples only adjacent samples, so the
/// Hessian is block tridiagonal and each Newton step is a block Thomas
/// solve. Quadratic convergence matters here because the residual tolerance
/// presumes path lengths accurate to well below 1e-6.
bool descend_energy(const MetricFunction& metric, const GeodesicOptions& options,
                    GeodesicPath& path, double& energy) {
  const int segments = path.segments();
  const int interior = segments - 1;
  const int n = static_cast<int>(path.samples.front().size());
  energy = path_energy(metric, path);
  if (interior <= 0) return true;
  const double scale = std::max(1.0, energy);

  auto seg_q = [&](int i) {
    return segments * metric.segment_quad(path.samples[i], path.samples[i + 1]);
  };
  auto local_energy = [&](int i) { return seg_q(i - 1) + seg_q(i); };

  std::vector<Vector> gradient(interior, Vector::Zero(n));
  std::vector<Matrix> diag(interior, Matrix::Zero(n, n));
  std::vector<Matrix> coupling(std::max(interior - 1, 0), Matrix::Zero(n, n));
  std::vector<Matrix> factor(interior, Matrix::Zero(n, n));
  std::vector<Vector> rhs(interior, Vector::Zero(n));
  std::vector<Vector> delta(interior, Vector::Zero(n));
  std::vector<Vector> saved(interior, Vector::Zero(n));

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    // gradient and diagonal Hessian blocks from the two adjacent segments
    double gradient_norm = 0.0;
    for (int p = 1; p <= interior; ++p) {
      Vector& point = path.samples[p];
      const double base = local_energy(p);
      Vector& g = gradient[p - 1];
      Matrix& d = diag[p - 1];
      for (int k = 0; k < n; ++k) {
        const double h = 1e-6 * std::max(1.0, std::abs(point[k]));
        const double s0 = point[k];
        point[k] = s0 + h;
        const double ep = local_energy(p);
        point[k] = s0 - h;
        const double em = local_energy(p);
        point[k] = s0;
        g[k] = (ep - em) / (2.0 * h);
        d(k, k) = (ep - 2.0 * base + em) / (h * h);
      }
      for (int k = 0; k < n; ++k) {
        for (int l = k + 1; l < n; ++l) {
          const double hk = 1e-6 * std::max(1.0, std::abs(point[k]));
          const double hl = 1e-6 * std::max(1.0, std::abs(point[l]));
          const double sk = point[k], sl = point[l];
          point[k] = sk + hk;
          point[l] = sl + hl;
          const double epp = local_energy(p);
          point[l] = sl - hl;
          const double epm = local_energy(p);
          point[k] = sk - hk;
          const double emm = local_energy(p);
          point[l] = sl + hl;
          const double emp = local_energy(p);
          point[k] = sk;
          point[l] = sl;
          d(k, l) = d(l, k) = (epp - epm - emp + emm) / (4.0 * hk * hl);
        }
      }
      gradient_norm = std::max(gradient_norm, g.lpNorm<Eigen::Infinity>());
    }
    if (gradient_norm < 1e-9 * scale) return true;

    // coupling blocks: only the shared segment contributes
    for (int p = 1; p < interior; ++p) {
      Vector& a = path.samples[p];
      Vector& b = path.samples[p + 1];
      Matrix& o = coupling[p - 1];
      for (int k = 0; k < n; ++k) {
        for (int l = 0; l < n; ++l) {
          const double hk = 1e-6 * std::max(1.0, std::abs(a[k]));
          const double hl = 1e-6 * std::max(1.0, std::abs(b[l]));
          const double sk = a[k], sl = b[l];
          a[k] = sk + hk;
          b[l] = sl + hl;
          const double epp = seg_q(p);
          b[l] = sl - hl;
          const double epm = seg_q(p);
          a[k] = sk - hk;
          const double emm = seg_q(p);
          b[l] = sl + hl;
          const double emp = seg_q(p);
          a[k] = sk;
          b[l] = sl;
          o(k, l) = (epp - epm - emp + emm) / (4.0 * hk * hl);
        }
      }
    }

    // damped Newton step via a block Thomas solve
    bool stepped = false;
    for (double damping = 0.0; damping <= 1e6; damping = damping == 0.0 ? 1e-6 : damping * 100) {
      bool factor_ok = true;
      const Matrix bump = damping * Matrix::Identity(n, n);
      factor[0] = diag[0] + bump;
      rhs[0] = -gradient[0];
      std::vector<Matrix> upper(std::max(interior - 1, 0));
      for (int p = 1; p < interior; ++p) {
        const Eigen::LDLT<Matrix> ldlt(factor[p - 1]);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
          factor_ok = false;
          break;
        }
        upper[p - 1] = ldlt.solve(coupling[p - 1]);
        const Vector solved = ldlt.solve(rhs[p - 1]);
        factor[p] = diag[p] + bump - coupling[p - 1].transpose() * upper[p - 1];
        rhs[p] = -gradient[p] - coupling[p - 1].transpose() * solved;
      }
      if (factor_ok) {
        const Eigen::LDLT<Matrix> last(factor[interior - 1]);
        factor_ok = last.info() == Eigen::Success && last.isPositive();
        if (factor_ok) {
          delta[interior - 1] = last.solve(rhs[interior - 1]);
          for (int p = interior - 2; p >= 0; --p) {
            const Eigen::LDLT<Matrix> ldlt(factor[p]);
            delta[p] = ldlt.solve(rhs[p]) - upper[p] * delta[p + 1];
          }
        }
      }
      if (!factor_ok) continue;

      // backtracking on the total energy
      for (int p = 0; p < interior; ++p) saved[p] = path.samples[p + 1];
      double step_scale = 1.0;
      for (int backtrack = 0; backtrack < 20; ++backtrack) {
        for (int p = 0; p < interior; ++p) {
          path.samples[p + 1] = saved[p] + step_scale * delta[p];
          if (options.clamp_to) {
            const Vector clamped = options.clamp_to->clamp(path.samples[p + 1]);
            if ((clamped - path.samples[p + 1]).lpNorm<Eigen::Infinity>() > 0.0)
              path.clamped = true;
            path.samples[p + 1] = clamped;
          }
        }
        const double trial = path_energy(metric, path);
        if (trial < energy) {
          const double decrease = energy - trial;
          energy = trial;
          stepped = true;
          if (decrease < options.energy_tol * scale) return true;
          break;
        }
        step_scale *= 0.5;
      }
      if (stepped) break;
      for (int p = 0; p < interior; ++p) path.samples[p + 1] = saved[p];
    }
    if (!stepped) return true;  // no descent direction at working precision
  }
  return false;
}

}  // namespace

GeodesicPath geodesic(const MetricFunction& metric, const Vector& from, const Vector& to,
                      const GeodesicOptions& options) {
  if (from.size() != to.size()) throw DimensionError("geodesic: endpoint dimensions differ");
  if (options.segments < 1) throw DomainError("geodesic: needs at least one segment");

  GeodesicPath path = straight_path(from, to, options.segments);
  if (metric.is_constant()) {
    path.energy = metric.segment_quad(from, to);
    path.length = std::sqrt(std::max(path.energy, 0.0));
    return path;
  }

  double energy = 0.0;
  const bool converged = descend_energy(metric, options, path, energy);
  if (!converged) {
    if (!options.relaxed)
      throw GeodesicError("geodesic energy descent did not converge within budget");
    GeodesicPath fallback = straight_path(from, to, options.segments);
    fallback.converged = false;
    fallback.energy = path_energy(metric, fallback);
    fallback.length = path_length(metric, fallback);
    return fallback;
  }

  path.converged = true;
  path.energy = energy;
  path.length = path_length(metric, path);

  // descent starts from the straight line, so its energy never exceeds it;
  // guard the length ordering against discretization noise as well
  GeodesicPath straight = straight_path(from, to, options.segments);
  straight.length = path_length(metric, straight);
  if (straight.length < path.length) {
    straight.energy = path_energy(metric, straight);
    return straight;
  }
  return path;
}

double riemannian_distance(const MetricFunction& metric, const Vector& a, const Vector& b,
                           const GeodesicOptions& options) {
  if (metric.is_constant()) {
    return std::sqrt(std::max(metric.segment_quad(a, b), 0.0));
  }
  return geodesic(metric, a, b, options).length;
}

double riemannian_distance_cached(const MetricFunction& metric, const Vector& a, const Vector& b,
                                  const GeodesicOptions& options, GeodesicCache& cache) {
  if (metric.is_constant()) {
    return std::sqrt(std::max(metric.segment_quad(a, b), 0.0));
  }
  const int segments = options.segments;
  const bool compatible = cache.valid && cache.path.segments() == segments &&
                          cache.path.samples.front().size() == a.size();
  if (compatible) {
    const double moved =
        (cache.anchor_from - a).lpNorm<Eigen::Infinity>() +
        (cache.anchor_to - b).lpNorm<Eigen::Infinity>();
    const double span = std::max((b - a).lpNorm<Eigen::Infinity>(), 1e-6);
    if (options.repin_tol > 0.0 && moved <= options.repin_tol * std::max(span, 1.0)) {
      // stationarity of the energy minimum makes the re-pinned path length
      // second-order accurate in the endpoint move
      cache.path.samples.front() = a;
      cache.path.samples.back() = b;
      return path_length(metric, cache.path);
    }
    if (moved <= 0.25 * span) {
      cache.path.samples.front() = a;
      cache.path.samples.back() = b;
    } else {
      repin_straight(cache.path, a, b);
    }
  } else {
    cache.path = straight_path(a, b, segments);
  }

  double energy = 0.0;
  if (!descend_energy(metric, options, cache.path, energy)) {
    // relaxed semantics: fall back to the straight connection
    repin_straight(cache.path, a, b);
  }
  cache.valid = true;
  cache.anchor_from = a;
  cache.anchor_to = b;
  double length = path_length(metric, cache.path);
  GeodesicPath straight = straight_path(a, b, segments);
  const double straight_length = path_length(metric, straight);
  if (straight_length < length) {
    cache.path = std::move(straight);
    length = straight_length;
  }
  return length;
}

Vector feedback_control(const ContractionCertificate& cert, const SystemModel& model,
                        const Vector& x, const Vector& x_star, const Vector& u_star,
                        const GeodesicOptions& options, bool* saturated) {
  GeodesicOptions opts = options;
  if (!opts.clamp_to) opts.clamp_to = &model.state_box;

  Vector u = u_star;
  if ((x - x_star).lpNorm<Eigen::Infinity>() > 0.0) {
    if (cert.constant_metric()) {
      u += cert.gain(x) * (x - x_star);
    } else {
      // integrate K along the geodesic oriented from the reference to the
      // state, so a constant gain reduces to u* + K (x - x*)
      const MetricFunction metric = MetricFunction::from_certificate(cert);
      const GeodesicPath path = geodesic(metric, x_star, x, opts);
      for (int i = 0; i < path.segments(); ++i) {
        const Vector mid = 0.5 * (path.samples[i] + path.samples[i + 1]);
        u += cert.gain(mid) * (path.samples[i + 1] - path.samples[i]);
      }
    }
  }

  const Vector saturated_u = model.input_box.clamp(u);
  if (saturated) *saturated = (saturated_u - u).lpNorm<Eigen::Infinity>() > 0.0;
  return saturated_u;
}

double constraint_residual(const ContractionCertificate& cert, const SystemModel& model,
                           const Vector& x, const Vector& x_star, const Vector& u,
                           const Vector& u_star, const GeodesicOptions& options) {
  GeodesicOptions opts = options;
  if (!opts.clamp_to) opts.clamp_to = &model.state_box;
  const MetricFunction metric = MetricFunction::from_certificate(cert);

  const Vector x_next = step(model, x, u, cert.tau());
  const Vector x_star_next = step(model, x_star, u_star, cert.tau());
  const double d_next = riemannian_distance(metric, x_next, x_star_next, opts);
  const double d_now = riemannian_distance(metric, x, x_star, opts);
  return d_next - cert.decay_factor() * d_now;
}

}  // namespace ctmpc
