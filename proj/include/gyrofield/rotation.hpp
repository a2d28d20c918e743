#pragma once
//
// SO(3) math for gyro-driven rolling-shutter modelling: gyro integration,
// axis-angle conversion, quaternion SLERP and rotation-only homographies.
//
// Axis convention: omega = (wx, wy, wz) in rad/s about the camera x (right),
// y (down) and z (optical axis) axes, right-handed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gyrofield/error.hpp"

namespace gyrofield {

using Nanoseconds = std::int64_t;

struct Vec2 {
  double x{0.0};
  double y{0.0};
};

struct Vec3 {
  double x{0.0};
  double y{0.0};
  double z{0.0};

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

/// Row-major 3x3 matrix.
class Mat3 {
 public:
  constexpr Mat3() = default;
  constexpr explicit Mat3(const std::array<double, 9>& a) : a_(a) {}

  static constexpr Mat3 identity() { return Mat3({1, 0, 0, 0, 1, 0, 0, 0, 1}); }

  constexpr double& operator()(int r, int c) { return a_[r * 3 + c]; }
  constexpr double operator()(int r, int c) const { return a_[r * 3 + c]; }

  constexpr Mat3 operator*(const Mat3& o) const {
    Mat3 out;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        out(r, c) = (*this)(r, 0) * o(0, c) + (*this)(r, 1) * o(1, c) + (*this)(r, 2) * o(2, c);
    return out;
  }

  constexpr Vec3 operator*(const Vec3& v) const {
    return {(*this)(0, 0) * v.x + (*this)(0, 1) * v.y + (*this)(0, 2) * v.z,
            (*this)(1, 0) * v.x + (*this)(1, 1) * v.y + (*this)(1, 2) * v.z,
            (*this)(2, 0) * v.x + (*this)(2, 1) * v.y + (*this)(2, 2) * v.z};
  }

  constexpr Mat3 operator*(double s) const {
    Mat3 out = *this;
    for (double& v : out.a_) v *= s;
    return out;
  }

  constexpr Mat3 transpose() const {
    Mat3 out;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out(r, c) = (*this)(c, r);
    return out;
  }

  constexpr double det() const {
    const auto& m = *this;
    return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
           m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
           m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
  }

  /// Adjugate inverse; throws on a singular matrix.
  Mat3 inverse() const {
    const auto& m = *this;
    const double d = det();
    if (!(std::abs(d) > 1e-300)) detail::fail(ErrorKind::invalid_argument, "singular 3x3 matrix");
    Mat3 inv;
    inv(0, 0) = m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1);
    inv(0, 1) = m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2);
    inv(0, 2) = m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1);
    inv(1, 0) = m(1, 2) * m(2, 0) - m(1, 0) * m(2, 2);
    inv(1, 1) = m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0);
    inv(1, 2) = m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2);
    inv(2, 0) = m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0);
    inv(2, 1) = m(0, 1) * m(2, 0) - m(0, 0) * m(2, 1);
    inv(2, 2) = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    return inv * (1.0 / d);
  }

  /// Largest absolute element-wise difference.
  double max_abs_diff(const Mat3& o) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < 9; ++i) worst = std::max(worst, std::abs(a_[i] - o.a_[i]));
    return worst;
  }

  const std::array<double, 9>& elements() const { return a_; }

 private:
  std::array<double, 9> a_{};
};

/// Skew-symmetric cross-product matrix [v]x.
constexpr Mat3 skew(const Vec3& v) {
  return Mat3({0, -v.z, v.y, v.z, 0, -v.x, -v.y, v.x, 0});
}

/// Unit quaternion (w, x, y, z) representing a rotation in SO(3).
class Rotation {
 public:
  constexpr Rotation() = default;

  /// Normalizes the input; throws on a zero or non-finite quaternion.
  static Rotation from_quaternion(double w, double x, double y, double z) {
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    if (!std::isfinite(n) || n < 1e-300)
      detail::fail(ErrorKind::invalid_argument, "quaternion must be finite and nonzero");
    return Rotation(w / n, x / n, y / n, z / n);
  }

  static Rotation from_axis_angle(const Vec3& axis_angle);

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }

  Rotation inverse() const { return Rotation(w_, -x_, -y_, -z_); }

  /// Hamilton product; `a * b` applies b first, then a.
  Rotation operator*(const Rotation& o) const {
    return from_quaternion(w_ * o.w_ - x_ * o.x_ - y_ * o.y_ - z_ * o.z_,
                           w_ * o.x_ + x_ * o.w_ + y_ * o.z_ - z_ * o.y_,
                           w_ * o.y_ - x_ * o.z_ + y_ * o.w_ + z_ * o.x_,
                           w_ * o.z_ + x_ * o.y_ - y_ * o.x_ + z_ * o.w_);
  }

  Mat3 matrix() const {
    const double ww = w_ * w_, xx = x_ * x_, yy = y_ * y_, zz = z_ * z_;
    const double xy = x_ * y_, xz = x_ * z_, yz = y_ * z_;
    const double wx = w_ * x_, wy = w_ * y_, wz = w_ * z_;
    return Mat3({ww + xx - yy - zz, 2 * (xy - wz), 2 * (xz + wy),
                 2 * (xy + wz), ww - xx + yy - zz, 2 * (yz - wx),
                 2 * (xz - wy), 2 * (yz + wx), ww - xx - yy + zz});
  }

  Vec3 rotate(const Vec3& v) const { return matrix() * v; }

  /// Rotation angle in [0, pi].
  double angle() const {
    const double s = std::sqrt(x_ * x_ + y_ * y_ + z_ * z_);
    return 2.0 * std::atan2(s, std::abs(w_));
  }

  /// Axis-angle vector of the shortest equivalent rotation.
  Vec3 log() const {
    double w = w_;
    Vec3 v{x_, y_, z_};
    if (w < 0.0) {
      w = -w;
      v = v * -1.0;
    }
    const double s = v.norm();
    if (s < 1e-150) return v * (2.0 / w);
    return v * (2.0 * std::atan2(s, w) / s);
  }

 private:
  constexpr Rotation(double w, double x, double y, double z) : w_(w), x_(x), y_(y), z_(z) {}

  double w_{1.0};
  double x_{0.0};
  double y_{0.0};
  double z_{0.0};
};

/// Angle-axis to rotation. Below a norm of 1e-12 the half-angle terms switch
/// to their second-order series.
inline Rotation rodrigues(const Vec3& axis_angle) {
  if (!axis_angle.finite())
    detail::fail(ErrorKind::invalid_argument, "rodrigues: non-finite axis-angle");
  const double theta = axis_angle.norm();
  if (theta < 1e-12) {
    const double t2 = theta * theta;
    const double half_sinc = 0.5 * (1.0 - t2 / 24.0);
    return Rotation::from_quaternion(1.0 - t2 / 8.0, axis_angle.x * half_sinc,
                                     axis_angle.y * half_sinc, axis_angle.z * half_sinc);
  }
  const double s = std::sin(0.5 * theta) / theta;
  return Rotation::from_quaternion(std::cos(0.5 * theta), axis_angle.x * s, axis_angle.y * s,
                                   axis_angle.z * s);
}

inline Rotation Rotation::from_axis_angle(const Vec3& axis_angle) { return rodrigues(axis_angle); }

/// Geodesic distance between two rotations, in radians.
inline double angle_between(const Rotation& a, const Rotation& b) {
  return (a.inverse() * b).angle();
}

/// Shortest-arc spherical linear interpolation; u must lie in [0, 1].
inline Rotation slerp(const Rotation& a, const Rotation& b, double u) {
  if (!(u >= 0.0 && u <= 1.0)) detail::fail(ErrorKind::range, "slerp: u outside [0, 1]");
  if (u == 0.0) return a;
  if (u == 1.0) return b;
  // log() already picks the shortest arc (sign of w).
  const Vec3 delta = (a.inverse() * b).log();
  return a * rodrigues(delta * u);
}

struct GyroSample {
  Nanoseconds t_ns{0};
  Vec3 omega;
};

/// Timestamped angular-velocity record of one capture.
class GyroTrace {
 public:
  GyroTrace() = default;

  GyroTrace(std::vector<GyroSample> samples, Nanoseconds duration_ns)
      : samples_(std::move(samples)), duration_ns_(duration_ns) {
    if (samples_.size() < 2)
      detail::fail(ErrorKind::invalid_trace, "gyro trace needs at least 2 samples");
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      if (samples_[i].t_ns < 0) detail::fail(ErrorKind::invalid_trace, "gyro trace: negative timestamp");
      if (!samples_[i].omega.finite())
        detail::fail(ErrorKind::invalid_trace, "gyro trace: non-finite angular velocity");
      if (i > 0 && samples_[i].t_ns <= samples_[i - 1].t_ns)
        detail::fail(ErrorKind::invalid_trace, "gyro trace: timestamps must strictly increase");
    }
    if (duration_ns_ < samples_.back().t_ns)
      detail::fail(ErrorKind::invalid_trace, "gyro trace: duration shorter than last timestamp");
  }

  const std::vector<GyroSample>& samples() const { return samples_; }
  Nanoseconds duration_ns() const { return duration_ns_; }
  std::size_t size() const { return samples_.size(); }

 private:
  std::vector<GyroSample> samples_;
  Nanoseconds duration_ns_{0};
};

/// Integrates a trace once and answers orientation queries at arbitrary
/// (fractional) times.
///
/// Angular velocity is held constant from each sample to the next (the first
/// sample's rate also covers [0, t_first), the last one covers the tail up to
/// the trace duration). Orientations at segment boundaries are accumulated by
/// quaternion products of per-segment Rodrigues rotations, and queries inside
/// a segment are answered by SLERP between the boundary orientations.
class TraceIntegrator {
 public:
  explicit TraceIntegrator(const GyroTrace& trace) : duration_ns_(trace.duration_ns()) {
    const auto& s = trace.samples();
    if (s.size() < 2) detail::fail(ErrorKind::invalid_trace, "gyro trace needs at least 2 samples");
    knots_.push_back({0.0, Rotation{}});
    auto advance = [this](double t_end, const Vec3& omega) {
      const Knot& last = knots_.back();
      const double dt = (t_end - last.t_ns) * 1e-9;
      if (dt <= 0.0) return;
      knots_.push_back({t_end, last.orientation * rodrigues(omega * dt)});
    };
    advance(static_cast<double>(s.front().t_ns), s.front().omega);
    for (std::size_t i = 0; i + 1 < s.size(); ++i)
      advance(static_cast<double>(s[i + 1].t_ns), s[i].omega);
    advance(static_cast<double>(duration_ns_), s.back().omega);
  }

  Nanoseconds duration_ns() const { return duration_ns_; }

  /// Camera orientation at time t relative to its pose at t = 0.
  Rotation at(double t_ns) const {
    if (!(t_ns >= 0.0 && t_ns <= static_cast<double>(duration_ns_)))
      detail::fail(ErrorKind::range, "trace query time outside [0, duration]");
    if (knots_.size() == 1) return knots_.front().orientation;
    auto it = std::upper_bound(knots_.begin(), knots_.end(), t_ns,
                               [](double t, const Knot& k) { return t < k.t_ns; });
    if (it == knots_.end()) return knots_.back().orientation;
    const Knot& hi = *it;
    const Knot& lo = *(it - 1);
    const double u = (t_ns - lo.t_ns) / (hi.t_ns - lo.t_ns);
    return slerp(lo.orientation, hi.orientation, std::clamp(u, 0.0, 1.0));
  }

 private:
  struct Knot {
    double t_ns;
    Rotation orientation;
  };

  Nanoseconds duration_ns_;
  std::vector<Knot> knots_;
};

inline Rotation integrate_trace(const GyroTrace& trace, Nanoseconds t_query) {
  if (trace.size() < 2) detail::fail(ErrorKind::invalid_trace, "gyro trace needs at least 2 samples");
  if (t_query < 0 || t_query > trace.duration_ns())
    detail::fail(ErrorKind::range, "integrate_trace: query time outside [0, duration]");
  return TraceIntegrator(trace).at(static_cast<double>(t_query));
}

/// Pinhole intrinsics in pixels.
struct CameraIntrinsics {
  double fx{1.0};
  double fy{1.0};
  double cx{0.0};
  double cy{0.0};
  int width{1};
  int height{1};

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0)) detail::fail(ErrorKind::invalid_argument, "intrinsics: focal lengths must be > 0");
    if (width < 1 || height < 1) detail::fail(ErrorKind::invalid_argument, "intrinsics: image size must be >= 1");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
      detail::fail(ErrorKind::invalid_argument, "intrinsics: principal point outside the image");
  }

  Mat3 matrix() const { return Mat3({fx, 0, cx, 0, fy, cy, 0, 0, 1}); }

  Mat3 inverse_matrix() const {
    return Mat3({1.0 / fx, 0, -cx / fx, 0, 1.0 / fy, -cy / fy, 0, 0, 1});
  }

  /// Intrinsics of the same camera resampled to new_w x new_h, using the
  /// pixel-center convention x' = (x + 0.5) * s - 0.5.
  CameraIntrinsics scaled(int new_w, int new_h) const {
    const double sx = static_cast<double>(new_w) / width;
    const double sy = static_cast<double>(new_h) / height;
    return {fx * sx, fy * sy, (cx + 0.5) * sx - 0.5, (cy + 0.5) * sy - 0.5, new_w, new_h};
  }

  /// Principal point at the image center.
  static CameraIntrinsics centered(double focal_px, int width, int height) {
    return {focal_px, focal_px, 0.5 * (width - 1), 0.5 * (height - 1), width, height};
  }
};

/// Projective 3x3 map, stored with element (2,2) scaled to 1 when nonzero.
class Homography {
 public:
  Homography() : m_(Mat3::identity()) {}

  explicit Homography(const Mat3& m) : m_(m) {
    if (std::abs(m_(2, 2)) > 1e-300) m_ = m_ * (1.0 / m_(2, 2));
    if (!(std::abs(m_.det()) > 1e-12))
      detail::fail(ErrorKind::invalid_argument, "homography is not invertible");
  }

  const Mat3& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }
  Homography inverse() const { return Homography(m_.inverse()); }
  Homography operator*(const Homography& o) const { return Homography(m_ * o.m_); }

 private:
  Mat3 m_;
};

/// K R K^-1 before normalization.
inline Mat3 rotation_homography_matrix(const CameraIntrinsics& k, const Rotation& r) {
  return k.matrix() * r.matrix() * k.inverse_matrix();
}

inline Homography homography_from_rotation(const CameraIntrinsics& k, const Rotation& r) {
  k.validate();
  return Homography(rotation_homography_matrix(k, r));
}

inline Vec2 apply_homography(const Homography& h, const Vec2& p) {
  const Mat3& m = h.matrix();
  const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
  if (!(std::abs(w) > 1e-9))
    detail::fail(ErrorKind::point_at_infinity, "homography maps point to infinity");
  return {(m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2)) / w,
          (m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2)) / w};
}

}  // namespace gyrofield
