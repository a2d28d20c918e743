#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gyrofield/error.hpp"

namespace gyrofield {

/// Dense row-major raster with interleaved channels.
template <class T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;

  Raster(int width, int height, int channels, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    if (width < 1 || height < 1 || channels < 1)
      detail::fail(ErrorKind::shape, "raster dimensions must be >= 1");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  T& operator()(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  const T& operator()(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  std::span<T> row(int y) {
    return std::span<T>(data_).subspan(index(0, y), static_cast<std::size_t>(width_) * channels_);
  }
  std::span<const T> row(int y) const {
    return std::span<const T>(data_).subspan(index(0, y),
                                             static_cast<std::size_t>(width_) * channels_);
  }

  template <class U>
  bool same_extent(const Raster<U>& o) const {
    return width_ == o.width() && height_ == o.height();
  }

  bool operator==(const Raster& o) const = default;

 protected:
  int width_{0};
  int height_{0};
  int channels_{0};
  std::vector<T> data_;
};

/// Image with 1 or 3 channels, values in [0, 1].
class ImageBuffer : public Raster<double> {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, double fill = 0.0)
      : Raster<double>(width, height, channels, fill) {
    if (channels != 1 && channels != 3) detail::fail(ErrorKind::shape, "image must have 1 or 3 channels");
  }
};

/// Per-pixel displacement (dx, dy) in pixels.
class MotionField : public Raster<double> {
 public:
  MotionField() = default;
  MotionField(int width, int height, double fill = 0.0) : Raster<double>(width, height, 2, fill) {}

  double& dx(int x, int y) { return (*this)(x, y, 0); }
  double& dy(int x, int y) { return (*this)(x, y, 1); }
  double dx(int x, int y) const { return (*this)(x, y, 0); }
  double dy(int x, int y) const { return (*this)(x, y, 1); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }
  bool all_zero() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return v == 0.0; });
  }
  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }
};

/// Per-pixel validity; pixels on black edges are false.
class ValidMask : public Raster<std::uint8_t> {
 public:
  ValidMask() = default;
  ValidMask(int width, int height, bool fill = true)
      : Raster<std::uint8_t>(width, height, 1, fill ? 1 : 0) {}

  bool valid(int x, int y) const { return (*this)(x, y) != 0; }
  void set(int x, int y, bool v) { (*this)(x, y) = v ? 1 : 0; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
  }

  ValidMask operator&&(const ValidMask& o) const {
    if (!same_extent(o)) detail::fail(ErrorKind::shape, "mask dimensions differ");
    ValidMask out(width_, height_, false);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] = (data_[i] && o.data_[i]) ? 1 : 0;
    return out;
  }
};

}  // namespace gyrofield
