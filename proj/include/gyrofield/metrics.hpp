#pragma once
//
// Masked image/flow quality metrics and the dataset evaluation harness.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gyrofield/diffusion.hpp"
#include "gyrofield/error.hpp"
#include "gyrofield/field.hpp"
#include "gyrofield/image.hpp"
#include "gyrofield/io.hpp"
#include "gyrofield/parallel.hpp"
#include "gyrofield/synth.hpp"

namespace gyrofield {

inline constexpr double kPsnrCapDb = 99.0;
inline constexpr int kDefaultEvalRuns = 10;

namespace detail {
inline void require_same_image_shape(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels()) fail(ErrorKind::shape, what);
}
}  // namespace detail

/// 10 log10(1 / mse) over masked pixels and all channels, capped at 99 dB.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b, const ValidMask& mask) {
  detail::require_same_image_shape(a, b, "psnr: image shapes differ");
  if (!a.same_extent(mask)) detail::fail(ErrorKind::shape, "psnr: mask size differs");
  double acc = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      if (!mask.valid(x, y)) continue;
      for (int c = 0; c < a.channels(); ++c) {
        const double d = a(x, y, c) - b(x, y, c);
        acc += d * d;
      }
      n += static_cast<std::size_t>(a.channels());
    }
  if (n == 0) detail::fail(ErrorKind::degenerate_mask, "psnr: empty valid mask");
  const double mse = acc / static_cast<double>(n);
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

/// Rec.601 luma for RGB; gray images pass through.
inline Raster<double> luma(const ImageBuffer& img) {
  Raster<double> out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out(x, y) = img.channels() == 3 ? 0.299 * img(x, y, 0) + 0.587 * img(x, y, 1) + 0.114 * img(x, y, 2)
                                      : img(x, y, 0);
  return out;
}

struct SsimParams {
  static constexpr int window = 11;
  static constexpr double sigma = 1.5;
  static constexpr double k1 = 0.01;
  static constexpr double k2 = 0.03;
  static constexpr double dynamic_range = 1.0;
};

namespace detail {

inline std::array<double, SsimParams::window> gaussian_taps() {
  std::array<double, SsimParams::window> taps{};
  constexpr int r = SsimParams::window / 2;
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    taps[i + r] = std::exp(-(i * i) / (2.0 * SsimParams::sigma * SsimParams::sigma));
    sum += taps[i + r];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

/// Separable "valid" Gaussian filter: output (x, y) is centered at input
/// (x + r, y + r).
inline Raster<double> gaussian_valid(const Raster<double>& in) {
  const auto taps = gaussian_taps();
  constexpr int n = SsimParams::window;
  const int ow = in.width() - n + 1, oh = in.height() - n + 1;
  Raster<double> tmp(ow, in.height(), 1);
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += taps[i] * in(x + i, y);
      tmp(x, y) = acc;
    }
  Raster<double> out(ow, oh, 1);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += taps[i] * tmp(x, y + i);
      out(x, y) = acc;
    }
  return out;
}

}  // namespace detail

/// Single-scale SSIM on luma (11x11 Gaussian, sigma 1.5, K1 0.01, K2 0.03),
/// averaged over fully-inside windows whose center pixel is valid.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b, const ValidMask& mask) {
  detail::require_same_image_shape(a, b, "ssim: image shapes differ");
  if (!a.same_extent(mask)) detail::fail(ErrorKind::shape, "ssim: mask size differs");
  constexpr int n = SsimParams::window, r = n / 2;
  if (a.width() < n || a.height() < n) detail::fail(ErrorKind::size, "ssim: image smaller than the 11x11 window");

  const Raster<double> la = luma(a), lb = luma(b);
  Raster<double> aa(la.width(), la.height(), 1), bb = aa, ab = aa;
  for (std::size_t i = 0; i < la.size(); ++i) {
    aa.data()[i] = la.data()[i] * la.data()[i];
    bb.data()[i] = lb.data()[i] * lb.data()[i];
    ab.data()[i] = la.data()[i] * lb.data()[i];
  }
  const auto mu_a = detail::gaussian_valid(la), mu_b = detail::gaussian_valid(lb);
  const auto e_aa = detail::gaussian_valid(aa), e_bb = detail::gaussian_valid(bb), e_ab = detail::gaussian_valid(ab);
  const double c1 = std::pow(SsimParams::k1 * SsimParams::dynamic_range, 2);
  const double c2 = std::pow(SsimParams::k2 * SsimParams::dynamic_range, 2);

  double acc = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < mu_a.height(); ++y)
    for (int x = 0; x < mu_a.width(); ++x) {
      if (!mask.valid(x + r, y + r)) continue;
      const double ma = mu_a(x, y), mb = mu_b(x, y);
      const double va = e_aa(x, y) - ma * ma, vb = e_bb(x, y) - mb * mb, cov = e_ab(x, y) - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  if (count == 0) detail::fail(ErrorKind::degenerate_mask, "ssim: no valid window centers");
  return acc / static_cast<double>(count);
}

/// Mean endpoint error over masked pixels.
inline double epe(const MotionField& pred, const MotionField& gt, const ValidMask& mask) {
  if (!pred.same_extent(gt) || !pred.same_extent(mask)) detail::fail(ErrorKind::shape, "epe: shapes differ");
  double acc = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      if (!mask.valid(x, y)) continue;
      acc += std::hypot(pred.dx(x, y) - gt.dx(x, y), pred.dy(x, y) - gt.dy(x, y));
      ++n;
    }
  if (n == 0) detail::fail(ErrorKind::degenerate_mask, "epe: empty valid mask");
  return acc / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Evaluation harness

struct Metrics {
  double psnr_db{0.0};
  double ssim{0.0};
  double epe_px{0.0};
};

struct Stat {
  double mean{0.0};
  double std{0.0};
};

struct MetricStats {
  Stat psnr_db;
  Stat ssim;
  Stat epe_px;
};

/// Mean and population standard deviation. The variance is accumulated from
/// pairwise differences so identical values give exactly zero.
inline Stat summarize(const std::vector<double>& values) {
  Stat s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  double pair_sq = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = i + 1; j < values.size(); ++j) {
      const double d = values[i] - values[j];
      pair_sq += d * d;
    }
  s.std = std::sqrt(pair_sq / (n * n));
  return s;
}

inline MetricStats summarize(const std::vector<Metrics>& runs) {
  std::vector<double> p, s, e;
  for (const auto& m : runs) {
    p.push_back(m.psnr_db);
    s.push_back(m.ssim);
    e.push_back(m.epe_px);
  }
  return {summarize(p), summarize(s), summarize(e)};
}

struct SampleEval {
  std::string id;
  bool failed{false};
  std::string error;
  std::vector<Metrics> runs;
  MetricStats stats;
};

struct EvalReport {
  std::string method;
  int run_count{1};
  int failed_count{0};
  std::vector<SampleEval> samples;
  /// Spread of the dataset-level mean across repeated inference runs.
  MetricStats over_runs;
  /// Spread of per-sample (run-averaged) metrics across samples.
  MetricStats over_samples;
};

/// (I_RS at model resolution, sample, run index) -> normalized field. The
/// tensor may be at model or native resolution; it is upsampled as needed.
using Predictor = std::function<FieldTensor(const ImageBuffer& rs_model, const DatasetSample& sample, int run)>;

inline Predictor zero_predictor() {
  return [](const ImageBuffer& rs_model, const DatasetSample&, int) {
    return FieldTensor(2, rs_model.height(), rs_model.width());
  };
}

/// Returns the stored native-resolution ground-truth field.
inline Predictor oracle_predictor(fs::path dataset_dir) {
  return [dir = std::move(dataset_dir)](const ImageBuffer&, const DatasetSample& s, int) {
    return normalize_field(read_flow(dir / s.flow_path), s.norm_scale);
  };
}

/// Reads precomputed flows: <dir>/<id>_run<k>.flo if present, else <dir>/<id>.flo.
inline Predictor flow_dir_predictor(fs::path flow_dir) {
  return [dir = std::move(flow_dir)](const ImageBuffer&, const DatasetSample& s, int run) {
    fs::path per_run = dir / (s.id + "_run" + std::to_string(run) + ".flo");
    const fs::path path = fs::exists(per_run) ? per_run : dir / (s.id + ".flo");
    return normalize_field(read_flow(path), s.norm_scale);
  };
}

struct EvalOptions {
  int runs{kDefaultEvalRuns};
  int workers{default_workers()};
  std::string method{"predictor"};
};

/// Runs the predictor `runs` times per sample, corrects the native RS image
/// with the upsampled field (quantized to 8 bits as a saved output would be)
/// and scores it against the stored GS image and field on the stored mask.
inline EvalReport evaluate(const std::vector<DatasetSample>& manifest, const fs::path& dataset_dir,
                           const Predictor& predictor, const EvalOptions& opt = {}) {
  if (opt.runs < 1) detail::fail(ErrorKind::invalid_argument, "evaluate: runs must be >= 1");
  std::vector<DatasetSample> ordered = manifest;
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  EvalReport report;
  report.method = opt.method;
  report.run_count = opt.runs;
  report.samples.resize(ordered.size());
  parallel_for(0, static_cast<int>(ordered.size()), opt.workers, [&](int i) {
    const DatasetSample& s = ordered[i];
    SampleEval& out = report.samples[i];
    out.id = s.id;
    try {
      const ImageBuffer rs = read_png(dataset_dir / s.rs_path);
      const ImageBuffer gs = read_png(dataset_dir / s.gs_path);
      const MotionField gt = read_flow(dataset_dir / s.flow_path);
      const ValidMask mask =
          s.mask_path.empty() ? ValidMask(rs.width(), rs.height(), true) : read_mask_png(dataset_dir / s.mask_path);
      const ImageBuffer rs_model = !s.rs_model_path.empty() && fs::exists(dataset_dir / s.rs_model_path)
                                       ? read_png(dataset_dir / s.rs_model_path)
                                       : downsample_image(rs, s.model_resolution, s.model_resolution);
      for (int run = 0; run < opt.runs; ++run) {
        const FieldTensor x = predictor(rs_model, s, run);
        const MotionField field = upsample_field(denormalize_field(x, s.norm_scale), rs.width(), rs.height());
        const ImageBuffer corrected = quantize(remap(rs, field, 1).image);
        out.runs.push_back({psnr(corrected, gs, mask), ssim(corrected, gs, mask), epe(field, gt, mask)});
      }
      out.stats = summarize(out.runs);
    } catch (const std::exception& e) {
      out.failed = true;
      out.error = e.what();
      out.runs.clear();
    }
  });

  std::vector<Metrics> per_sample;
  std::vector<Metrics> per_run(static_cast<std::size_t>(opt.runs));
  std::size_t ok = 0;
  for (const auto& s : report.samples) {
    if (s.failed) {
      ++report.failed_count;
      continue;
    }
    ++ok;
    per_sample.push_back({s.stats.psnr_db.mean, s.stats.ssim.mean, s.stats.epe_px.mean});
    for (int r = 0; r < opt.runs; ++r) {
      per_run[r].psnr_db += s.runs[r].psnr_db;
      per_run[r].ssim += s.runs[r].ssim;
      per_run[r].epe_px += s.runs[r].epe_px;
    }
  }
  if (ok > 0) {
    for (auto& m : per_run) {
      m.psnr_db /= static_cast<double>(ok);
      m.ssim /= static_cast<double>(ok);
      m.epe_px /= static_cast<double>(ok);
    }
    report.over_runs = summarize(per_run);
    report.over_samples = summarize(per_sample);
  }
  return report;
}

namespace detail {
inline nlohmann::ordered_json stat_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.std}}; }
inline nlohmann::ordered_json stats_json(const MetricStats& m) {
  return {{"psnr_db", stat_json(m.psnr_db)}, {"ssim", stat_json(m.ssim)}, {"epe_px", stat_json(m.epe_px)}};
}
}  // namespace detail

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json samples = nlohmann::ordered_json::array();
  for (const auto& s : r.samples) {
    nlohmann::ordered_json row{{"id", s.id}, {"failed", s.failed}};
    if (s.failed) {
      row["error"] = s.error;
    } else {
      row["stats"] = detail::stats_json(s.stats);
      nlohmann::ordered_json runs = nlohmann::ordered_json::array();
      for (const auto& m : s.runs) runs.push_back({{"psnr_db", m.psnr_db}, {"ssim", m.ssim}, {"epe_px", m.epe_px}});
      row["runs"] = std::move(runs);
    }
    samples.push_back(std::move(row));
  }
  return {{"method", r.method},
          {"run_count", r.run_count},
          {"sample_count", r.samples.size()},
          {"failed_count", r.failed_count},
          {"aggregate", detail::stats_json(r.over_runs)},
          {"aggregate_over_samples", detail::stats_json(r.over_samples)},
          {"samples", std::move(samples)}};
}

inline void write_report_json(const fs::path& path, const EvalReport& r) {
  detail::write_text(path, report_to_json(r).dump(2) + "\n");
}

/// Table row: method, PSNR, SSIM, EPE with the run std in parentheses.
inline std::string report_to_csv(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%.2f (%.2f),%.3f (%.3f),%.2f (%.2f)\n", r.method.c_str(),
                r.over_runs.psnr_db.mean, r.over_runs.psnr_db.std, r.over_runs.ssim.mean, r.over_runs.ssim.std,
                r.over_runs.epe_px.mean, r.over_runs.epe_px.std);
  return std::string("method,PSNR,SSIM,EPE\n") + buf;
}

}  // namespace gyrofield
