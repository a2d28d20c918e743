#pragma once
//
// Intra-frame gyro field: per-row rotations -> dense displacement field, plus
// the resampling kernels that consume it.
//
// Remap convention: out(p) = in(p + G(p)), bilinear, zero outside the source.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "gyrofield/error.hpp"
#include "gyrofield/image.hpp"
#include "gyrofield/parallel.hpp"
#include "gyrofield/rotation.hpp"

namespace gyrofield {

/// Readout timing of one rolling-shutter frame. Row r is exposed at
/// t0_ns + r * readout_ns / (height - 1).
struct RowTiming {
  Nanoseconds readout_ns{30'000'000};
  Nanoseconds t0_ns{0};
  int reference_row{0};

  static RowTiming first_row(Nanoseconds readout_ns, Nanoseconds t0_ns = 0) {
    return {readout_ns, t0_ns, 0};
  }
  static RowTiming center_row(Nanoseconds readout_ns, int height, Nanoseconds t0_ns = 0) {
    return {readout_ns, t0_ns, (height - 1) / 2};
  }

  double row_time_ns(int row, int height) const {
    if (height <= 1) return static_cast<double>(t0_ns);
    return static_cast<double>(t0_ns) +
           static_cast<double>(readout_ns) * row / static_cast<double>(height - 1);
  }
};

/// Rotation from the reference row's pose to each row's pose.
inline std::vector<Rotation> row_rotations(const GyroTrace& trace, const RowTiming& timing, int height) {
  if (height < 1) detail::fail(ErrorKind::invalid_argument, "row_rotations: height must be >= 1");
  if (timing.readout_ns <= 0) detail::fail(ErrorKind::invalid_argument, "row_rotations: readout must be > 0");
  if (timing.reference_row < 0 || timing.reference_row >= height)
    detail::fail(ErrorKind::invalid_argument, "row_rotations: reference row outside the image");
  if (timing.t0_ns < 0 || timing.t0_ns + timing.readout_ns > trace.duration_ns())
    detail::fail(ErrorKind::coverage, "row_rotations: trace does not cover the readout window");

  const TraceIntegrator integrator(trace);
  std::vector<Rotation> poses(static_cast<std::size_t>(height));
  for (int r = 0; r < height; ++r) {
    const double t = std::min(timing.row_time_ns(r, height), static_cast<double>(trace.duration_ns()));
    poses[r] = integrator.at(t);
  }
  const Rotation to_reference = poses[timing.reference_row].inverse();
  for (int r = 0; r < height; ++r) poses[r] = (r == timing.reference_row) ? Rotation{} : to_reference * poses[r];
  return poses;
}

struct IgfResult {
  MotionField field;
  /// False where the row homography sent the pixel to infinity.
  ValidMask mask;
};

/// G(x, y) = pi(H_y [x, y, 1]) - (x, y) with H_y = K R_y K^-1.
inline IgfResult build_igf(const CameraIntrinsics& k, const std::vector<Rotation>& rows, int width,
                           int height, int workers = default_workers()) {
  k.validate();
  if (static_cast<int>(rows.size()) != height)
    detail::fail(ErrorKind::shape, "build_igf: one rotation per row required");
  IgfResult out{MotionField(width, height), ValidMask(width, height, true)};
  const Mat3 kmat = k.matrix();
  const Mat3 kinv = k.inverse_matrix();
  parallel_for(0, height, workers, [&](int y) {
    const Mat3 h = kmat * rows[y].matrix() * kinv;
    for (int x = 0; x < width; ++x) {
      const double w = h(2, 0) * x + h(2, 1) * y + h(2, 2);
      if (!(std::abs(w) > 1e-9)) {
        out.mask.set(x, y, false);
        continue;
      }
      out.field.dx(x, y) = (h(0, 0) * x + h(0, 1) * y + h(0, 2)) / w - x;
      out.field.dy(x, y) = (h(1, 0) * x + h(1, 1) * y + h(1, 2)) / w - y;
    }
  });
  return out;
}

namespace detail {

struct BilinearTap {
  int x0, x1, y0, y1;
  double fx, fy;
};

/// Tap for a sample strictly inside [0, w-1] x [0, h-1]; nullopt otherwise.
inline std::optional<BilinearTap> strict_tap(double sx, double sy, int w, int h) {
  if (!(sx >= 0.0 && sx <= w - 1 && sy >= 0.0 && sy <= h - 1)) return std::nullopt;
  BilinearTap t{};
  t.x0 = static_cast<int>(std::floor(sx));
  t.y0 = static_cast<int>(std::floor(sy));
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.fx = sx - t.x0;
  t.fy = sy - t.y0;
  return t;
}

/// Tap with coordinates clamped to the border (edge extension).
inline BilinearTap clamped_tap(double sx, double sy, int w, int h) {
  sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  return *strict_tap(sx, sy, w, h);
}

template <class T>
inline double sample(const Raster<T>& r, const BilinearTap& t, int c) {
  const double top = (1.0 - t.fx) * r(t.x0, t.y0, c) + t.fx * r(t.x1, t.y0, c);
  const double bottom = (1.0 - t.fx) * r(t.x0, t.y1, c) + t.fx * r(t.x1, t.y1, c);
  return (1.0 - t.fy) * top + t.fy * bottom;
}

/// Separable area-average weights mapping src samples onto dst samples.
struct AreaTaps {
  int first;
  std::vector<double> weights;
};

inline std::vector<AreaTaps> area_taps(int src, int dst) {
  std::vector<AreaTaps> taps(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    const double lo = i * scale;
    const double hi = (i + 1) * scale;
    const int first = static_cast<int>(std::floor(lo));
    const int last = std::min(src - 1, static_cast<int>(std::ceil(hi)) - 1);
    taps[i].first = first;
    for (int j = first; j <= last; ++j) {
      const double overlap = std::min(hi, j + 1.0) - std::max(lo, static_cast<double>(j));
      taps[i].weights.push_back(overlap / scale);
    }
  }
  return taps;
}

inline void area_resize_into(const Raster<double>& in, Raster<double>& out) {
  const int ch = in.channels();
  const auto tx = area_taps(in.width(), out.width());
  const auto ty = area_taps(in.height(), out.height());
  Raster<double> tmp(out.width(), in.height(), ch);
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < tx[x].weights.size(); ++j)
          acc += tx[x].weights[j] * in(tx[x].first + static_cast<int>(j), y, c);
        tmp(x, y, c) = acc;
      }
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < ty[y].weights.size(); ++j)
          acc += ty[y].weights[j] * tmp(x, ty[y].first + static_cast<int>(j), c);
        out(x, y, c) = acc;
      }
}

inline void bilinear_resize_into(const Raster<double>& in, Raster<double>& out) {
  const double sx = static_cast<double>(in.width()) / out.width();
  const double sy = static_cast<double>(in.height()) / out.height();
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      const auto tap = clamped_tap((x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5, in.width(), in.height());
      for (int c = 0; c < in.channels(); ++c) out(x, y, c) = sample(in, tap, c);
    }
}

}  // namespace detail

struct RemapResult {
  ImageBuffer image;
  ValidMask mask;
};

/// out(x, y) = bilinear sample of img at (x, y) + G(x, y). Samples that leave
/// [0, W-1] x [0, H-1] are 0 and masked out.
inline RemapResult remap(const ImageBuffer& img, const MotionField& g, int workers = default_workers()) {
  if (!img.same_extent(g)) detail::fail(ErrorKind::shape, "remap: image and field dimensions differ");
  const int w = img.width(), h = img.height(), ch = img.channels();
  RemapResult out{ImageBuffer(w, h, ch), ValidMask(w, h, true)};
  parallel_for(0, h, workers, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const auto tap = detail::strict_tap(x + g.dx(x, y), y + g.dy(x, y), w, h);
      if (!tap) {
        out.mask.set(x, y, false);
        continue;
      }
      for (int c = 0; c < ch; ++c) out.image(x, y, c) = detail::sample(img, *tap, c);
    }
  });
  return out;
}

/// Transports a validity mask through the remap: a pixel stays valid only if
/// its sample is in bounds and every corner with nonzero weight is valid.
inline ValidMask remap_mask(const ValidMask& mask, const MotionField& g) {
  if (!mask.same_extent(g)) detail::fail(ErrorKind::shape, "remap_mask: mask and field dimensions differ");
  const int w = mask.width(), h = mask.height();
  ValidMask out(w, h, false);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto t = detail::strict_tap(x + g.dx(x, y), y + g.dy(x, y), w, h);
      if (!t) continue;
      const bool need_x1 = t->fx > 0.0, need_y1 = t->fy > 0.0;
      bool ok = mask.valid(t->x0, t->y0);
      if (need_x1) ok = ok && mask.valid(t->x1, t->y0);
      if (need_y1) ok = ok && mask.valid(t->x0, t->y1);
      if (need_x1 && need_y1) ok = ok && mask.valid(t->x1, t->y1);
      out.set(x, y, ok);
    }
  return out;
}

struct InversionDefaults {
  static constexpr int iterations = 10;
  static constexpr double tolerance_px = 1e-3;
};

/// Fixed-point inverse of a displacement field: v(p) = -G(p + v(p)), with G
/// sampled bilinearly (edge-extended). Starts from v = 0 and stops after
/// `iters` sweeps or when the largest per-pixel update drops below `tol`.
/// Throws non_contractive if the largest update grows three sweeps in a row.
inline MotionField invert_field(const MotionField& g, int iters = InversionDefaults::iterations,
                                double tol = InversionDefaults::tolerance_px,
                                int workers = default_workers()) {
  if (iters < 1) detail::fail(ErrorKind::invalid_argument, "invert_field: iters must be >= 1");
  if (!g.all_finite()) detail::fail(ErrorKind::invalid_argument, "invert_field: field is not finite");
  const int w = g.width(), h = g.height();
  MotionField v(w, h);
  MotionField next(w, h);
  std::vector<double> row_update(static_cast<std::size_t>(h));
  double previous = std::numeric_limits<double>::infinity();
  int growth = 0;
  for (int it = 0; it < iters; ++it) {
    parallel_for(0, h, workers, [&](int y) {
      double worst = 0.0;
      for (int x = 0; x < w; ++x) {
        const auto tap = detail::clamped_tap(x + v.dx(x, y), y + v.dy(x, y), w, h);
        const double nx = -detail::sample(g, tap, 0);
        const double ny = -detail::sample(g, tap, 1);
        worst = std::max(worst, std::hypot(nx - v.dx(x, y), ny - v.dy(x, y)));
        next.dx(x, y) = nx;
        next.dy(x, y) = ny;
      }
      row_update[y] = worst;
    });
    std::swap(v, next);
    const double update = *std::max_element(row_update.begin(), row_update.end());
    if (!std::isfinite(update)) detail::fail(ErrorKind::non_contractive, "invert_field: iteration diverged");
    if (update < tol) break;
    growth = update > previous ? growth + 1 : 0;
    if (growth >= 3) detail::fail(ErrorKind::non_contractive, "invert_field: field is not contractive");
    previous = update;
  }
  return v;
}

/// Mean over pixels of |G_inv(p) + G(p + G_inv(p))|.
inline double composition_residual(const MotionField& g, const MotionField& g_inv) {
  if (!g.same_extent(g_inv)) detail::fail(ErrorKind::shape, "composition_residual: dimensions differ");
  const int w = g.width(), h = g.height();
  double total = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto tap = detail::clamped_tap(x + g_inv.dx(x, y), y + g_inv.dy(x, y), w, h);
      total += std::hypot(g_inv.dx(x, y) + detail::sample(g, tap, 0),
                          g_inv.dy(x, y) + detail::sample(g, tap, 1));
    }
  return total / static_cast<double>(g.pixel_count());
}

/// Bilinear (pixel-center) resize with displacements rescaled to the new grid.
inline MotionField upsample_field(const MotionField& g, int new_w, int new_h) {
  if (new_w < 1 || new_h < 1) detail::fail(ErrorKind::invalid_argument, "upsample_field: size must be >= 1");
  if (new_w == g.width() && new_h == g.height()) return g;
  MotionField out(new_w, new_h);
  detail::bilinear_resize_into(g, out);
  const double sx = static_cast<double>(new_w) / g.width();
  const double sy = static_cast<double>(new_h) / g.height();
  for (int y = 0; y < new_h; ++y)
    for (int x = 0; x < new_w; ++x) {
      out.dx(x, y) *= sx;
      out.dy(x, y) *= sy;
    }
  return out;
}

/// Area-average resize of a field, displacements rescaled to the new grid.
inline MotionField downsample_field(const MotionField& g, int new_w, int new_h) {
  if (new_w < 1 || new_h < 1) detail::fail(ErrorKind::invalid_argument, "downsample_field: size must be >= 1");
  if (new_w == g.width() && new_h == g.height()) return g;
  MotionField out(new_w, new_h);
  detail::area_resize_into(g, out);
  const double sx = static_cast<double>(new_w) / g.width();
  const double sy = static_cast<double>(new_h) / g.height();
  for (int y = 0; y < new_h; ++y)
    for (int x = 0; x < new_w; ++x) {
      out.dx(x, y) *= sx;
      out.dy(x, y) *= sy;
    }
  return out;
}

/// Area-average resize; works for magnification too (box reconstruction).
inline ImageBuffer downsample_image(const ImageBuffer& img, int new_w, int new_h) {
  if (new_w < 1 || new_h < 1) detail::fail(ErrorKind::invalid_argument, "downsample_image: size must be >= 1");
  if (new_w == img.width() && new_h == img.height()) return img;
  ImageBuffer out(new_w, new_h, img.channels());
  detail::area_resize_into(img, out);
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace gyrofield
