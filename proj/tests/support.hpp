#pragma once
// Test-only helpers: procedural images and oracles that do not share code
// paths with the library under test.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "gyrofield/gyrofield.hpp"

namespace testsupport {

namespace gf = gyrofield;

/// Smooth, natural-looking RGB (or gray) texture: low-frequency plane waves
/// plus soft blobs, values inside [0, 1].
inline gf::ImageBuffer smooth_texture(int w, int h, std::uint64_t seed, int channels = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  gf::ImageBuffer img(w, h, channels);
  struct Wave { double kx, ky, phase, amp; };
  struct Blob { double x, y, r, amp; };
  for (int c = 0; c < channels; ++c) {
    std::vector<Wave> waves;
    for (int i = 0; i < 6; ++i) {
      const double wavelength = 40.0 + 160.0 * u(rng);
      const double dir = 2.0 * std::numbers::pi * u(rng);
      waves.push_back({std::cos(dir) / wavelength, std::sin(dir) / wavelength, 2 * std::numbers::pi * u(rng),
                       0.05 + 0.05 * u(rng)});
    }
    std::vector<Blob> blobs;
    for (int i = 0; i < 5; ++i) blobs.push_back({w * u(rng), h * u(rng), 10.0 + 30.0 * u(rng), 0.3 * u(rng) - 0.15});
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = 0.5;
        for (const auto& wv : waves) v += wv.amp * std::sin(2 * std::numbers::pi * (wv.kx * x + wv.ky * y) + wv.phase);
        for (const auto& b : blobs) {
          const double d2 = (x - b.x) * (x - b.x) + (y - b.y) * (y - b.y);
          v += b.amp * std::exp(-d2 / (2 * b.r * b.r));
        }
        img(x, y, c) = std::clamp(v, 0.0, 1.0);
      }
  }
  return img;
}

/// White image with dark vertical lines (Gaussian profile) every `spacing` px.
inline gf::ImageBuffer vertical_lines(int w, int h, int spacing, double sigma = 1.5) {
  gf::ImageBuffer img(w, h, 1, 1.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 1.0;
      for (int c = spacing / 2; c < w; c += spacing) v -= 0.9 * std::exp(-((x - c) * (x - c)) / (2 * sigma * sigma));
      img(x, y, 0) = std::clamp(v, 0.0, 1.0);
    }
  return img;
}

/// Rodrigues matrix exponential computed directly on matrices.
inline gf::Mat3 expm_so3(const gf::Vec3& w) {
  const double t = w.norm();
  const gf::Mat3 k = gf::skew(w);
  const gf::Mat3 k2 = k * k;
  double a, b;
  if (t < 1e-8) {
    a = 1.0 - t * t / 6.0;
    b = 0.5 - t * t / 24.0;
  } else {
    a = std::sin(t) / t;
    b = (1.0 - std::cos(t)) / (t * t);
  }
  gf::Mat3 r = gf::Mat3::identity();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) += a * k(i, j) + b * k2(i, j);
  return r;
}

/// Geodesic angle between rotation matrices via the antisymmetric part
/// (accurate for small angles).
inline double matrix_angle(const gf::Mat3& a, const gf::Mat3& b) {
  const gf::Mat3 r = a.transpose() * b;
  const double sx = 0.5 * (r(2, 1) - r(1, 2)), sy = 0.5 * (r(0, 2) - r(2, 0)), sz = 0.5 * (r(1, 0) - r(0, 1));
  const double s = std::sqrt(sx * sx + sy * sy + sz * sz);
  const double c = 0.5 * (r(0, 0) + r(1, 1) + r(2, 2) - 1.0);
  return std::atan2(s, c);
}

/// Brute-force orientation at time t: right-multiplies `substeps` small
/// matrix exponentials of the zero-order-held rate.
inline gf::Mat3 fine_integrate(const gf::GyroTrace& trace, double t_ns, int substeps = 10000) {
  const auto& s = trace.samples();
  auto rate_at = [&](double t) {
    std::size_t i = 0;
    while (i + 1 < s.size() && static_cast<double>(s[i + 1].t_ns) <= t) ++i;
    return s[i].omega;
  };
  // Substeps are aligned so none straddles a sample boundary.
  std::vector<double> cuts{0.0};
  for (const auto& smp : s)
    if (smp.t_ns > 0 && smp.t_ns < t_ns) cuts.push_back(static_cast<double>(smp.t_ns));
  cuts.push_back(t_ns);
  gf::Mat3 r = gf::Mat3::identity();
  const int per = std::max(1, substeps / static_cast<int>(cuts.size() - 1));
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double dt = (cuts[c + 1] - cuts[c]) / per;
    for (int k = 0; k < per; ++k) {
      const double mid = cuts[c] + (k + 0.5) * dt;
      r = r * expm_so3(rate_at(mid) * (dt * 1e-9));
    }
  }
  return r;
}

inline std::vector<unsigned char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Byte-compares every regular file under two directory trees.
inline bool trees_identical(const std::filesystem::path& a, const std::filesystem::path& b) {
  namespace fs = std::filesystem;
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb || fa.empty()) return false;
  for (const auto& rel : fa)
    if (file_bytes(a / rel) != file_bytes(b / rel)) return false;
  return true;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("gyrofield_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Runs a shell command; returns the process exit status.
inline int run(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace testsupport
