#pragma once
//
// Diffusion machinery for field generation: linear noise schedule, forward
// noising, x0-parameterized DDIM steps, classifier-free guidance and the
// training losses. Network-agnostic: the denoiser is any callable that
// predicts x0.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "gyrofield/error.hpp"
#include "gyrofield/field.hpp"
#include "gyrofield/image.hpp"

namespace gyrofield {

namespace defaults {
inline constexpr int diffusion_steps = 1000;
inline constexpr double beta_start = 1e-4;
inline constexpr double beta_end = 0.02;
inline constexpr int sampling_steps = 8;
inline constexpr double eta = 0.0;
inline constexpr double guidance = 1.0;
inline constexpr double condition_dropout = 0.1;
inline constexpr double unconditional_gray = 0.5;
inline constexpr double norm_scale = 8.0;
inline constexpr int model_resolution = 64;
}  // namespace defaults

/// Planar (C, H, W) tensor of reals; a normalized field has C = 2.
struct FieldTensor {
  int channels{0};
  int height{0};
  int width{0};
  std::vector<double> data;

  FieldTensor() = default;
  FieldTensor(int c, int h, int w, double fill = 0.0) : channels(c), height(h), width(w) {
    if (c < 1 || h < 1 || w < 1) detail::fail(ErrorKind::shape, "tensor dimensions must be >= 1");
    data.assign(static_cast<std::size_t>(c) * h * w, fill);
  }

  std::size_t size() const { return data.size(); }
  bool same_shape(const FieldTensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  double& operator()(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double operator()(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool operator==(const FieldTensor&) const = default;
};

namespace detail {
inline void require_same_shape(const FieldTensor& a, const FieldTensor& b, const char* what) {
  if (!a.same_shape(b)) fail(ErrorKind::shape, what);
}
}  // namespace detail

/// Linear beta schedule over T steps with cumulative alpha products.
class NoiseSchedule {
 public:
  NoiseSchedule(int steps, double beta_start, double beta_end) : beta_start_(beta_start), beta_end_(beta_end) {
    if (steps < 1) detail::fail(ErrorKind::invalid_argument, "schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
      detail::fail(ErrorKind::invalid_argument, "schedule: need 0 < beta_start <= beta_end < 1");
    beta_.resize(static_cast<std::size_t>(steps));
    alpha_.resize(beta_.size());
    alpha_bar_.resize(beta_.size());
    double running = 1.0;
    for (int t = 0; t < steps; ++t) {
      beta_[t] = steps == 1 ? beta_start
                            : beta_start + (beta_end - beta_start) * t / static_cast<double>(steps - 1);
      alpha_[t] = 1.0 - beta_[t];
      running *= alpha_[t];
      alpha_bar_[t] = running;
    }
  }

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }
  const std::vector<double>& beta() const { return beta_; }
  const std::vector<double>& alpha() const { return alpha_; }
  const std::vector<double>& alpha_bar() const { return alpha_bar_; }

  /// alpha_bar at step t, with the t = -1 boundary defined as 1.
  double alpha_bar_at(int t) const {
    if (t == -1) return 1.0;
    if (t < 0 || t >= steps()) detail::fail(ErrorKind::range, "schedule: step index out of range");
    return alpha_bar_[t];
  }

 private:
  double beta_start_;
  double beta_end_;
  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
};

inline NoiseSchedule make_schedule(int steps = defaults::diffusion_steps, double beta_start = defaults::beta_start,
                                   double beta_end = defaults::beta_end) {
  return NoiseSchedule(steps, beta_start, beta_end);
}

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
inline FieldTensor q_sample(const FieldTensor& x0, int t, const FieldTensor& eps, const NoiseSchedule& s) {
  detail::require_same_shape(x0, eps, "q_sample: x0 and eps shapes differ");
  if (t < 0 || t >= s.steps()) detail::fail(ErrorKind::range, "q_sample: step out of range");
  const double a = std::sqrt(s.alpha_bar()[t]);
  const double b = std::sqrt(1.0 - s.alpha_bar()[t]);
  FieldTensor out = x0;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a * x0.data[i] + b * eps.data[i];
  return out;
}

/// Noise implied by (x_t, x0_hat): (x_t - sqrt(abar_t) x0_hat) / sqrt(1 - abar_t).
inline FieldTensor predicted_noise(const FieldTensor& x_t, const FieldTensor& x0_hat, int t, const NoiseSchedule& s) {
  detail::require_same_shape(x_t, x0_hat, "predicted_noise: shapes differ");
  const double abar = s.alpha_bar_at(t);
  const double a = std::sqrt(abar);
  const double b = std::sqrt(1.0 - abar);
  FieldTensor eps = x_t;
  for (std::size_t i = 0; i < eps.size(); ++i) eps.data[i] = (x_t.data[i] - a * x0_hat.data[i]) / b;
  return eps;
}

/// One DDIM update from step t to t_prev (t_prev = -1 means the clean end).
inline FieldTensor ddim_step(const FieldTensor& x_t, const FieldTensor& x0_hat, int t, int t_prev, double eta,
                             const NoiseSchedule& s, const std::optional<FieldTensor>& noise = std::nullopt) {
  if (t_prev >= t) detail::fail(ErrorKind::ordering, "ddim_step: t_prev must be < t");
  if (t < 0 || t >= s.steps() || t_prev < -1) detail::fail(ErrorKind::range, "ddim_step: step out of range");
  if (!(eta >= 0.0)) detail::fail(ErrorKind::invalid_argument, "ddim_step: eta must be >= 0");
  if (eta > 0.0 && !noise) detail::fail(ErrorKind::invalid_argument, "ddim_step: eta > 0 requires noise");
  if (noise) detail::require_same_shape(x_t, *noise, "ddim_step: noise shape differs");

  const FieldTensor eps = predicted_noise(x_t, x0_hat, t, s);
  const double abar_t = s.alpha_bar_at(t);
  const double abar_prev = s.alpha_bar_at(t_prev);
  const double sigma =
      eta * std::sqrt((1.0 - abar_prev) / (1.0 - abar_t)) * std::sqrt(1.0 - abar_t / abar_prev);
  const double c_x0 = std::sqrt(abar_prev);
  const double c_eps = std::sqrt(std::max(0.0, 1.0 - abar_prev - sigma * sigma));

  FieldTensor out = x_t;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = c_x0 * x0_hat.data[i] + c_eps * eps.data[i];
    if (sigma > 0.0) v += sigma * noise->data[i];
    out.data[i] = v;
  }
  return out;
}

/// uncond + w (cond - uncond)
inline FieldTensor cfg_combine(const FieldTensor& uncond, const FieldTensor& cond, double w) {
  detail::require_same_shape(uncond, cond, "cfg_combine: shapes differ");
  if (w == 1.0) return cond;
  FieldTensor out = cond;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data[i] = uncond.data[i] + w * (cond.data[i] - uncond.data[i]);
  return out;
}

/// Evenly spaced, strictly decreasing visit order from T-1 down to 0.
inline std::vector<int> ddim_timesteps(int total_steps, int sampling_steps) {
  if (sampling_steps < 1 || sampling_steps > total_steps)
    detail::fail(ErrorKind::invalid_argument, "sampling steps must lie in [1, T]");
  std::vector<int> ts;
  if (sampling_steps == 1) return {total_steps - 1};
  for (int i = 0; i < sampling_steps; ++i) {
    const double pos = static_cast<double>(total_steps - 1) * (sampling_steps - 1 - i) / (sampling_steps - 1);
    ts.push_back(static_cast<int>(std::lround(pos)));
  }
  return ts;
}

/// (x_t, t, condition) -> predicted x0. Must preserve shape and be
/// deterministic for identical inputs.
using Denoiser = std::function<FieldTensor(const FieldTensor& x_t, int t, const ImageBuffer& condition)>;

struct SamplerConfig {
  int steps{defaults::sampling_steps};
  double eta{defaults::eta};
  double guidance{defaults::guidance};
  std::uint64_t seed{0};
  /// Tensor shape (C, H, W); defaults to (2, condition height, condition width).
  std::optional<std::array<int, 3>> shape;
};

/// The unconditional CFG branch sees a flat gray image of the condition's shape.
inline ImageBuffer unconditional_condition(const ImageBuffer& condition) {
  return ImageBuffer(condition.width(), condition.height(), condition.channels(), defaults::unconditional_gray);
}

/// Reverse DDIM from seeded unit-normal x_T down to x0.
inline FieldTensor sample_field(const Denoiser& den, const ImageBuffer& condition, const SamplerConfig& cfg,
                                const NoiseSchedule& s) {
  const auto shape = cfg.shape.value_or(std::array<int, 3>{2, condition.height(), condition.width()});
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  FieldTensor x(shape[0], shape[1], shape[2]);
  for (double& v : x.data) v = normal(rng);

  const ImageBuffer uncond_image = cfg.guidance != 1.0 ? unconditional_condition(condition) : ImageBuffer{};
  auto predict = [&](const FieldTensor& x_t, int t, const ImageBuffer& c) {
    FieldTensor out = den(x_t, t, c);
    if (!out.same_shape(x_t)) detail::fail(ErrorKind::contract, "denoiser changed the tensor shape");
    return out;
  };

  const std::vector<int> ts = ddim_timesteps(s.steps(), cfg.steps);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int t_prev = i + 1 < ts.size() ? ts[i + 1] : -1;
    FieldTensor x0_hat = predict(x, t, condition);
    if (cfg.guidance != 1.0) x0_hat = cfg_combine(predict(x, t, uncond_image), x0_hat, cfg.guidance);
    std::optional<FieldTensor> noise;
    if (cfg.eta > 0.0) {
      noise.emplace(x.channels, x.height, x.width);
      for (double& v : noise->data) v = normal(rng);
    }
    x = ddim_step(x, x0_hat, t, t_prev, cfg.eta, s, noise);
  }
  return x;
}

inline FieldTensor normalize_field(const MotionField& g, double norm_scale = defaults::norm_scale) {
  if (!(norm_scale > 0.0)) detail::fail(ErrorKind::invalid_argument, "norm_scale must be > 0");
  FieldTensor out(2, g.height(), g.width());
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) {
      out(0, y, x) = g.dx(x, y) / norm_scale;
      out(1, y, x) = g.dy(x, y) / norm_scale;
    }
  return out;
}

inline MotionField denormalize_field(const FieldTensor& t, double norm_scale = defaults::norm_scale) {
  if (!(norm_scale > 0.0)) detail::fail(ErrorKind::invalid_argument, "norm_scale must be > 0");
  if (t.channels != 2) detail::fail(ErrorKind::shape, "field tensor must have 2 channels");
  MotionField g(t.width, t.height);
  for (int y = 0; y < t.height; ++y)
    for (int x = 0; x < t.width; ++x) {
      g.dx(x, y) = t(0, y, x) * norm_scale;
      g.dy(x, y) = t(1, y, x) * norm_scale;
    }
  return g;
}

inline double loss_mse(const FieldTensor& x0_hat, const FieldTensor& x0) {
  detail::require_same_shape(x0_hat, x0, "loss_mse: shapes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double d = x0_hat.data[i] - x0.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(x0.size());
}

/// Mean |remap(i_rs, x0_hat * norm_scale) - i_gs| over the remap's valid mask.
inline double loss_photometric(const FieldTensor& x0_hat, const ImageBuffer& i_rs, const ImageBuffer& i_gs,
                               double norm_scale = defaults::norm_scale) {
  if (i_rs.width() != i_gs.width() || i_rs.height() != i_gs.height() || i_rs.channels() != i_gs.channels())
    detail::fail(ErrorKind::shape, "loss_photometric: image shapes differ");
  if (x0_hat.width != i_rs.width() || x0_hat.height != i_rs.height())
    detail::fail(ErrorKind::shape, "loss_photometric: field and image sizes differ");
  const auto warped = remap(i_rs, denormalize_field(x0_hat, norm_scale), 1);
  const std::size_t valid = warped.mask.count();
  if (valid == 0) detail::fail(ErrorKind::degenerate_mask, "loss_photometric: empty valid mask");
  double acc = 0.0;
  for (int y = 0; y < i_gs.height(); ++y)
    for (int x = 0; x < i_gs.width(); ++x) {
      if (!warped.mask.valid(x, y)) continue;
      for (int c = 0; c < i_gs.channels(); ++c) acc += std::abs(warped.image(x, y, c) - i_gs(x, y, c));
    }
  return acc / static_cast<double>(valid * static_cast<std::size_t>(i_gs.channels()));
}

/// Weight applied to the photometric term: |l_mse| / |l_pl|, defined as 0
/// when l_pl < 1e-12. Trainers must treat it as a constant (no gradient).
inline double overall_weight(double l_mse, double l_pl) {
  if (!(l_mse >= 0.0 && l_pl >= 0.0)) detail::fail(ErrorKind::invalid_argument, "losses must be >= 0");
  return l_pl < 1e-12 ? 0.0 : std::abs(l_mse) / std::abs(l_pl);
}

inline double loss_overall(double l_mse, double l_pl) { return l_mse + overall_weight(l_mse, l_pl) * l_pl; }

}  // namespace gyrofield
