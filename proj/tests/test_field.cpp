#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "gyrofield/field.hpp"
#include "support.hpp"

using namespace gyrofield;
using Catch::Matchers::WithinAbs;

namespace {

constexpr double kPi = std::numbers::pi;

template <class Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::io;
}

GyroTrace held(const Vec3& omega, Nanoseconds duration) {
  return GyroTrace({{0, omega}, {duration, omega}}, duration);
}

MotionField sinusoid_field(int w, int h, double amp) {
  MotionField g(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      g.dx(x, y) = amp * std::sin(2 * kPi * y / 97.0 + 0.3) * std::cos(2 * kPi * x / 131.0);
      g.dy(x, y) = amp * 0.5 * std::cos(2 * kPi * x / 113.0 - 0.7);
    }
  return g;
}

}  // namespace

TEST_CASE("row_rotations: zero trace gives identities") {
  const auto rows = row_rotations(held({}, 40'000'000), RowTiming::first_row(30'000'000), 50);
  REQUIRE(rows.size() == 50);
  for (const auto& r : rows) CHECK(r.angle() == 0.0);
}

TEST_CASE("row_rotations: constant yaw rate is linear in the row index") {
  const double rate = 0.8;
  const int h = 101;
  const auto rows = row_rotations(held({0, 0, rate}, 40'000'000), RowTiming::first_row(30'000'000), h);
  for (int r = 0; r < h; ++r) {
    const double expected = rate * r * 0.030 / (h - 1);
    CHECK_THAT(rows[r].log().z, WithinAbs(expected, 1e-9));
    CHECK(std::abs(rows[r].log().x) < 1e-12);
  }
}

TEST_CASE("row_rotations: sinusoidal trace matches the fine integrator") {
  std::vector<GyroSample> s;
  for (int k = 0; k <= 40; ++k) {
    const double t = k * 0.001;
    s.push_back({k * 1'000'000LL, {0.4 * std::sin(2 * kPi * 7 * t), 1.2 * std::sin(2 * kPi * 3 * t + 1), 0.3}});
  }
  const GyroTrace trace(s, 40'000'000);
  const RowTiming timing{30'000'000, 5'000'000, 37};
  const int h = 80;
  const auto rows = row_rotations(trace, timing, h);
  const Mat3 ref = testsupport::fine_integrate(trace, timing.row_time_ns(37, h), 10000);
  for (int r = 0; r < h; r += 7) {
    const Mat3 pose = testsupport::fine_integrate(trace, timing.row_time_ns(r, h), 10000);
    CHECK(testsupport::matrix_angle(rows[r].matrix(), ref.transpose() * pose) < 1e-6);
  }
  CHECK(rows[37].angle() == 0.0);
}

TEST_CASE("row_rotations: errors") {
  const auto trace = held({0, 0, 1}, 20'000'000);
  CHECK(kind_of([&] { row_rotations(trace, RowTiming::first_row(30'000'000), 10); }) == ErrorKind::coverage);
  CHECK(kind_of([&] { row_rotations(trace, RowTiming{10'000'000, 15'000'000, 0}, 10); }) == ErrorKind::coverage);
  CHECK(kind_of([&] { row_rotations(trace, RowTiming{10'000'000, 0, 10}, 10); }) == ErrorKind::invalid_argument);
  CHECK(kind_of([&] { row_rotations(trace, RowTiming{0, 0, 0}, 10); }) == ErrorKind::invalid_argument);
}

TEST_CASE("build_igf: identity rows give a zero field") {
  const auto k = CameraIntrinsics::centered(100, 64, 48);
  const auto igf = build_igf(k, std::vector<Rotation>(48), 64, 48, 1);
  CHECK(igf.field.all_zero());
  CHECK(igf.mask.count() == 64u * 48u);
}

TEST_CASE("build_igf: a global rotation matches per-pixel apply_homography") {
  const CameraIntrinsics k{300, 310, 80.5, 60.25, 160, 120};
  const Rotation r = rodrigues({0.01, -0.02, 0.015});
  const auto igf = build_igf(k, std::vector<Rotation>(120, r), 160, 120, 3);
  const Homography hom = homography_from_rotation(k, r);
  double worst = 0.0;
  for (int y = 0; y < 120; ++y)
    for (int x = 0; x < 160; ++x) {
      const Vec2 q = apply_homography(hom, {static_cast<double>(x), static_cast<double>(y)});
      worst = std::max({worst, std::abs(igf.field.dx(x, y) - (q.x - x)), std::abs(igf.field.dy(x, y) - (q.y - y))});
    }
  // The field uses the unnormalized K R K^-1; the projection is identical up to rounding.
  CHECK(worst < 1e-10);
}

TEST_CASE("build_igf: linear pan ramp grows monotonically away from the reference row") {
  const int w = 120, h = 160;
  const auto k = CameraIntrinsics::centered(600, w, h);
  for (int ref : {0, 80}) {
    const auto rows = row_rotations(held({0, 1.5, 0}, 40'000'000), RowTiming{30'000'000, 0, ref}, h);
    const auto igf = build_igf(k, rows, w, h, 2);
    const int x = w / 2;
    double previous = -1.0;
    for (int y = ref; y < h; ++y) {
      const double mag = std::abs(igf.field.dx(x, y));
      CHECK(mag >= previous);
      previous = mag;
    }
    previous = -1.0;
    for (int y = ref; y >= 0; --y) {
      const double mag = std::abs(igf.field.dx(x, y));
      CHECK(mag >= previous);
      previous = mag;
    }
    double ref_row = 0.0;
    for (int xx = 0; xx < w; ++xx)
      ref_row = std::max({ref_row, std::abs(igf.field.dx(xx, ref)), std::abs(igf.field.dy(xx, ref))});
    CHECK(ref_row < 1e-9);
  }
}

TEST_CASE("build_igf: points sent to infinity are masked with zero displacement") {
  // A 90 degree pan sends the principal column to the horizon.
  const CameraIntrinsics k{50, 50, 20, 10, 41, 21};
  const auto igf = build_igf(k, std::vector<Rotation>(21, rodrigues({0, kPi / 2, 0})), 41, 21, 1);
  for (int y = 0; y < 21; ++y) {
    CHECK_FALSE(igf.mask.valid(20, y));
    CHECK(igf.field.dx(20, y) == 0.0);
    CHECK(igf.field.dy(20, y) == 0.0);
    CHECK(igf.mask.valid(5, y));
  }
  CHECK(kind_of([&] { build_igf(k, std::vector<Rotation>(3), 41, 21, 1); }) == ErrorKind::shape);
}

TEST_CASE("remap: zero field is the identity") {
  const auto img = testsupport::smooth_texture(40, 30, 1);
  const auto out = remap(img, MotionField(40, 30), 2);
  CHECK(out.image == img);
  CHECK(out.mask.count() == 40u * 30u);
}

TEST_CASE("remap: integer shift") {
  const auto img = testsupport::smooth_texture(40, 30, 2);
  MotionField shift(40, 30);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) shift.dx(x, y) = 3.0;
  const auto shifted = remap(img, shift, 1);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) {
      if (x <= 36) {
        CHECK(shifted.mask.valid(x, y));
        for (int c = 0; c < 3; ++c) CHECK(shifted.image(x, y, c) == img(x + 3, y, c));
      } else {
        CHECK_FALSE(shifted.mask.valid(x, y));
        CHECK(shifted.image(x, y, 0) == 0.0);
      }
    }
}

TEST_CASE("remap: bilinear-exact image under a smooth random field") {
  // f(x, y) = a + b x + c y + d x y is reproduced exactly by bilinear sampling.
  const int w = 64, h = 48;
  ImageBuffer img(w, h, 1);
  auto f = [](double x, double y) { return 0.1 + 0.004 * x + 0.006 * y + 0.00005 * x * y; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img(x, y) = f(x, y);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 2 * kPi);
  const double p1 = u(rng), p2 = u(rng);
  MotionField g(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      g.dx(x, y) = 1.4 * std::sin(x / 9.0 + p1) * std::cos(y / 7.0);
      g.dy(x, y) = 1.4 * std::cos(x / 11.0 - p2);
    }
  const auto out = remap(img, g, 3);
  std::size_t checked = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!out.mask.valid(x, y)) continue;
      CHECK_THAT(out.image(x, y), WithinAbs(f(x + g.dx(x, y), y + g.dy(x, y)), 1e-6));
      ++checked;
    }
  CHECK(checked > static_cast<std::size_t>(w * h / 2));
}

TEST_CASE("remap: shape mismatch") {
  CHECK(kind_of([] { remap(ImageBuffer(4, 4, 1), MotionField(5, 4), 1); }) == ErrorKind::shape);
}

TEST_CASE("remap_mask: transports invalid source pixels") {
  ValidMask m(10, 10, true);
  m.set(5, 5, false);
  MotionField g(10, 10);
  g.dx(2, 2) = 3.0;
  g.dy(2, 2) = 3.0;  // lands exactly on (5, 5)
  g.dx(3, 3) = 1.5;
  g.dy(3, 3) = 1.0;  // blends (4, 4) and (5, 4): both valid
  g.dx(4, 4) = 0.5;
  g.dy(4, 4) = 0.5;  // blends in (5, 5)
  const auto out = remap_mask(m, g);
  CHECK_FALSE(out.valid(2, 2));
  CHECK(out.valid(3, 3));
  CHECK_FALSE(out.valid(4, 4));
  CHECK_FALSE(out.valid(5, 5));
  CHECK(out.valid(0, 0));
}

TEST_CASE("invert_field: trivial cases") {
  CHECK(invert_field(MotionField(16, 12), 10, 1e-3, 1).all_zero());
  MotionField c(16, 12);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 16; ++x) {
      c.dx(x, y) = 1.25;
      c.dy(x, y) = -0.5;
    }
  const auto inv = invert_field(c, 1, 1e-3, 1);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 16; ++x) {
      CHECK(inv.dx(x, y) == -1.25);
      CHECK(inv.dy(x, y) == 0.5);
    }
}

TEST_CASE("invert_field: smooth 10 px field") {
  const auto g = sinusoid_field(200, 160, 10.0);
  REQUIRE_THAT(g.max_abs(), WithinAbs(10.0, 0.2));
  const auto inv = invert_field(g, 10, 1e-3, 2);
  CHECK(composition_residual(g, inv) < 0.05);
}

TEST_CASE("invert_field: non-contractive field is rejected") {
  // Short-wavelength, large-amplitude field: the fixed-point map is far from a contraction.
  const int w = 400;
  MotionField steep(w, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < w; ++x) steep.dx(x, y) = 10.0 * std::sin(2 * kPi * x / 40.0);
  CHECK(kind_of([&] { invert_field(steep, 50, 1e-9, 1); }) == ErrorKind::non_contractive);
  CHECK(kind_of([] { invert_field(MotionField(4, 4), 0, 1e-3, 1); }) == ErrorKind::invalid_argument);
  MotionField bad(4, 4);
  bad.dx(1, 1) = NAN;
  CHECK(kind_of([&] { invert_field(bad, 10, 1e-3, 1); }) == ErrorKind::invalid_argument);
}

TEST_CASE("field kernels are independent of the worker count") {
  const auto g = sinusoid_field(97, 61, 4.0);
  const auto img = testsupport::smooth_texture(97, 61, 8);
  const auto k = CameraIntrinsics::centered(90, 97, 61);
  const auto rows = row_rotations(held({0.3, 1.1, -0.2}, 40'000'000), RowTiming::first_row(30'000'000), 61);
  const auto ref_inv = invert_field(g, 10, 1e-3, 1);
  const auto ref_remap = remap(img, g, 1);
  const auto ref_igf = build_igf(k, rows, 97, 61, 1);
  for (int workers : {2, 3, 7, 64}) {
    CHECK(invert_field(g, 10, 1e-3, workers) == ref_inv);
    const auto r = remap(img, g, workers);
    CHECK(r.image == ref_remap.image);
    CHECK(r.mask == ref_remap.mask);
    CHECK(build_igf(k, rows, 97, 61, workers).field == ref_igf.field);
  }
}

TEST_CASE("upsample_field: identity and scale law") {
  const auto g = sinusoid_field(30, 20, 2.0);
  CHECK(upsample_field(g, 30, 20) == g);
  MotionField c(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) c.dx(x, y) = 1.0;
  const auto up = upsample_field(c, 128, 128);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      CHECK(up.dx(x, y) == 2.0);
      CHECK(up.dy(x, y) == 0.0);
    }
  MotionField c2(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      c2.dx(x, y) = 0.75;
      c2.dy(x, y) = -0.5;
    }
  const auto up2 = upsample_field(c2, 600, 800);
  CHECK_THAT(up2.dx(17, 333), WithinAbs(0.75 * 600 / 64, 1e-12));
  CHECK_THAT(up2.dy(599, 799), WithinAbs(-0.5 * 800 / 64, 1e-12));
  CHECK(kind_of([&] { upsample_field(g, 0, 5); }) == ErrorKind::invalid_argument);
}

TEST_CASE("upsample_field: model-resolution field approximates the native one") {
  const auto native_k = CameraIntrinsics::centered(600, 600, 800);
  const auto model_k = native_k.scaled(64, 64);
  const auto trace = held({0.8, 1.5, 0.2}, 40'000'000);
  const RowTiming timing = RowTiming::first_row(30'000'000);
  const auto native = build_igf(native_k, row_rotations(trace, timing, 800), 600, 800, 2).field;
  const auto model = build_igf(model_k, row_rotations(trace, timing, 64), 64, 64, 1).field;
  REQUIRE(max_row_rotation(trace, timing, 800) * 180 / kPi <= 3.0);
  const auto up = upsample_field(model, 600, 800);
  double total = 0.0;
  for (int y = 0; y < 800; ++y)
    for (int x = 0; x < 600; ++x) total += std::hypot(up.dx(x, y) - native.dx(x, y), up.dy(x, y) - native.dy(x, y));
  CHECK(total / (600.0 * 800.0) < 0.5);
}

TEST_CASE("downsample_image: identity, blocks and block means") {
  const auto img = testsupport::smooth_texture(9, 7, 3);
  CHECK(downsample_image(img, 9, 7) == img);
  ImageBuffer blocks(4, 4, 1);
  const double vals[2][2] = {{0.1, 0.7}, {0.4, 0.9}};
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) blocks(x, y) = vals[y / 2][x / 2];
  const auto half = downsample_image(blocks, 2, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) CHECK_THAT(half(x, y), WithinAbs(vals[y][x], 1e-15));

  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    ImageBuffer r(8, 8, 3);
    for (double& v : r.data()) v = u(rng);
    const auto d = downsample_image(r, 4, 4);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x)
        for (int c = 0; c < 3; ++c) {
          const double mean =
              (r(2 * x, 2 * y, c) + r(2 * x + 1, 2 * y, c) + r(2 * x, 2 * y + 1, c) + r(2 * x + 1, 2 * y + 1, c)) / 4;
          CHECK_THAT(d(x, y, c), WithinAbs(mean, 1e-7));
        }
  }
}

TEST_CASE("downsample_field: block means with rescaled displacements") {
  MotionField g(8, 8);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-3, 3);
  for (double& v : g.data()) v = u(rng);
  const auto d = downsample_field(g, 4, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) {
      double mx = 0, my = 0;
      for (int yy = 4 * y; yy < 4 * y + 4; ++yy)
        for (int xx = 2 * x; xx < 2 * x + 2; ++xx) {
          mx += g.dx(xx, yy) / 8;
          my += g.dy(xx, yy) / 8;
        }
      CHECK_THAT(d.dx(x, y), WithinAbs(mx * 0.5, 1e-12));
      CHECK_THAT(d.dy(x, y), WithinAbs(my * 0.25, 1e-12));
    }
}

TEST_CASE("round trip through the inverted field reproduces the source") {
  const int w = 150, h = 200;
  const auto k = CameraIntrinsics::centered(150, w, h);
  const auto src = testsupport::smooth_texture(w, h, 42);
  const auto trace = held({0.5, 1.5, 0.3}, 40'000'000);
  const auto igf = build_igf(k, row_rotations(trace, RowTiming::first_row(30'000'000), h), w, h, 2);
  const auto ginv = invert_field(igf.field, 10, 1e-3, 2);
  const auto rs = remap(src, ginv, 2);
  const auto gs = remap(rs.image, igf.field, 2);
  const ValidMask mask = remap_mask(rs.mask, igf.field) && gs.mask;
  double acc = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask.valid(x, y)) continue;
      for (int c = 0; c < 3; ++c) acc += std::pow(gs.image(x, y, c) - src(x, y, c), 2);
      n += 3;
    }
  REQUIRE(n > 0);
  CHECK(10 * std::log10(n / acc) >= 30.0);
}
