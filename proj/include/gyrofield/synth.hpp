#pragma once
//
// Synthetic gyro traces and self-consistent (RS, GS, field) training triplets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "gyrofield/diffusion.hpp"
#include "gyrofield/error.hpp"
#include "gyrofield/field.hpp"
#include "gyrofield/image.hpp"
#include "gyrofield/io.hpp"
#include "gyrofield/parallel.hpp"
#include "gyrofield/rotation.hpp"

namespace gyrofield {

enum class PatternKind { constant, sinusoid, smooth_noise };

constexpr std::string_view to_string(PatternKind k) {
  switch (k) {
    case PatternKind::constant: return "constant";
    case PatternKind::sinusoid: return "sinusoid";
    case PatternKind::smooth_noise: return "smooth-noise";
  }
  return "constant";
}

inline PatternKind parse_pattern_kind(std::string_view s) {
  if (s == "constant") return PatternKind::constant;
  if (s == "sinusoid") return PatternKind::sinusoid;
  if (s == "smooth-noise") return PatternKind::smooth_noise;
  detail::fail(ErrorKind::invalid_argument, "unknown motion pattern kind: " + std::string(s));
}

/// Angular-velocity pattern. For `constant` the amplitude is the (signed)
/// rate itself; for the other kinds it is the per-axis peak magnitude.
struct MotionPattern {
  PatternKind kind{PatternKind::constant};
  Vec3 amplitude;
  double frequency_hz{1.0};
  double cutoff_hz{10.0};
  std::uint64_t seed{0};
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Zero-mean periodic white noise band-limited to harmonics j / duration with
/// j / duration <= cutoff (at least the fundamental), evaluated at `times_s`
/// and peak-normalized to 1.
inline std::vector<double> band_limited_noise(const std::vector<double>& times_s, double duration_s, double cutoff_hz,
                                              std::mt19937_64& rng) {
  const int harmonics = std::max(1, static_cast<int>(std::floor(cutoff_hz * duration_s + 1e-9)));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> a(harmonics), b(harmonics);
  for (int j = 0; j < harmonics; ++j) {
    a[j] = normal(rng);
    b[j] = normal(rng);
  }
  std::vector<double> out(times_s.size(), 0.0);
  double peak = 0.0;
  for (std::size_t k = 0; k < times_s.size(); ++k) {
    double v = 0.0;
    for (int j = 0; j < harmonics; ++j) {
      const double phase = 2.0 * std::numbers::pi * (j + 1) * times_s[k] / duration_s;
      v += a[j] * std::cos(phase) + b[j] * std::sin(phase);
    }
    out[k] = v;
    peak = std::max(peak, std::abs(v));
  }
  if (peak > 0.0)
    for (double& v : out) v /= peak;
  return out;
}

}  // namespace detail

/// Samples at t_k = round(k * 1e9 / rate_hz) for every t_k <= duration_ns.
inline GyroTrace gen_gyro_trace(const MotionPattern& pattern, Nanoseconds duration_ns, double rate_hz) {
  if (duration_ns <= 0) detail::fail(ErrorKind::invalid_argument, "gen_gyro_trace: duration must be > 0");
  const double duration_s = duration_ns * 1e-9;
  if (!(std::isfinite(rate_hz) && rate_hz >= 2.0 / duration_s))
    detail::fail(ErrorKind::invalid_argument, "gen_gyro_trace: rate must be >= 2 / duration");
  if (!pattern.amplitude.finite()) detail::fail(ErrorKind::invalid_argument, "gen_gyro_trace: amplitude not finite");
  if (pattern.kind != PatternKind::constant &&
      (pattern.amplitude.x < 0 || pattern.amplitude.y < 0 || pattern.amplitude.z < 0))
    detail::fail(ErrorKind::invalid_argument, "gen_gyro_trace: amplitude must be >= 0");
  if (pattern.kind == PatternKind::sinusoid && !(pattern.frequency_hz > 0.0))
    detail::fail(ErrorKind::invalid_argument, "gen_gyro_trace: frequency must be > 0");
  if (pattern.kind == PatternKind::smooth_noise && !(pattern.cutoff_hz > 0.0))
    detail::fail(ErrorKind::invalid_argument, "gen_gyro_trace: cutoff must be > 0");

  std::vector<GyroSample> samples;
  for (long long k = 0;; ++k) {
    const auto t = static_cast<Nanoseconds>(std::llround(static_cast<double>(k) * 1e9 / rate_hz));
    if (t > duration_ns) break;
    samples.push_back({t, {}});
  }
  std::vector<double> times_s(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) times_s[k] = samples[k].t_ns * 1e-9;

  switch (pattern.kind) {
    case PatternKind::constant:
      for (auto& s : samples) s.omega = pattern.amplitude;
      break;
    case PatternKind::sinusoid:
      for (std::size_t k = 0; k < samples.size(); ++k) {
        const double v = std::sin(2.0 * std::numbers::pi * pattern.frequency_hz * times_s[k]);
        samples[k].omega = pattern.amplitude * v;
      }
      break;
    case PatternKind::smooth_noise: {
      std::mt19937_64 rng(pattern.seed);
      const auto nx = detail::band_limited_noise(times_s, duration_s, pattern.cutoff_hz, rng);
      const auto ny = detail::band_limited_noise(times_s, duration_s, pattern.cutoff_hz, rng);
      const auto nz = detail::band_limited_noise(times_s, duration_s, pattern.cutoff_hz, rng);
      for (std::size_t k = 0; k < samples.size(); ++k)
        samples[k].omega = {pattern.amplitude.x * nx[k], pattern.amplitude.y * ny[k], pattern.amplitude.z * nz[k]};
      break;
    }
  }
  return GyroTrace(std::move(samples), duration_ns);
}

inline GyroTrace scale_trace(const GyroTrace& trace, double factor) {
  auto samples = trace.samples();
  for (auto& s : samples) s.omega = s.omega * factor;
  return GyroTrace(std::move(samples), trace.duration_ns());
}

/// Largest rotation angle of any row relative to the reference row.
inline double max_row_rotation(const GyroTrace& trace, const RowTiming& timing, int height) {
  double worst = 0.0;
  for (const auto& r : row_rotations(trace, timing, height)) worst = std::max(worst, r.angle());
  return worst;
}

struct SynthOptions {
  int inversion_iters{InversionDefaults::iterations};
  double inversion_tol{InversionDefaults::tolerance_px};
  /// Round the field to float32 and RS to 8-bit levels before deriving GS, so
  /// the stored files satisfy GS = remap(RS, G) up to GS quantization.
  bool quantize{false};
  int workers{default_workers()};
};

struct SynthPair {
  ImageBuffer rs;
  ImageBuffer gs;
  MotionField flow;
  ValidMask mask;
};

/// RS = remap(src, G^-1), GS = remap(RS, G) with G the gyro field, so the
/// label relation GS = remap(RS, G) holds exactly.
inline SynthPair synth_pair(const ImageBuffer& src, const CameraIntrinsics& k, const GyroTrace& trace,
                            const RowTiming& timing, const SynthOptions& opt = {}) {
  k.validate();
  if (src.width() != k.width || src.height() != k.height)
    detail::fail(ErrorKind::shape, "synth_pair: source size differs from intrinsics");
  const int w = src.width(), h = src.height();
  const auto igf = build_igf(k, row_rotations(trace, timing, h), w, h, opt.workers);
  MotionField g = opt.quantize ? round_to_flow_precision(igf.field) : igf.field;
  const MotionField g_inv = invert_field(g, opt.inversion_iters, opt.inversion_tol, opt.workers);
  auto rs = remap(src, g_inv, opt.workers);
  if (opt.quantize) rs.image = quantize(std::move(rs.image));
  auto gs = remap(rs.image, g, opt.workers);
  ValidMask mask = remap_mask(rs.mask && igf.mask, g) && gs.mask;
  return {std::move(rs.image), std::move(gs.image), std::move(g), std::move(mask)};
}

// ---------------------------------------------------------------------------
// Dataset

struct DatasetSample {
  std::string id;
  std::string rs_path;
  std::string gs_path;
  std::string flow_path;
  std::string trace_path;
  std::string mask_path;
  std::string rs_model_path;
  std::string gs_model_path;
  std::string flow_model_path;
  CameraIntrinsics intrinsics;
  MotionPattern pattern;
  RowTiming timing;
  bool is_identity_pair{false};
  double norm_scale{defaults::norm_scale};
  int model_resolution{defaults::model_resolution};
};

inline void to_json(nlohmann::ordered_json& j, const DatasetSample& s) {
  j = nlohmann::ordered_json{
      {"id", s.id},
      {"rs_path", s.rs_path},
      {"gs_path", s.gs_path},
      {"flow_path", s.flow_path},
      {"trace_path", s.trace_path},
      {"mask_path", s.mask_path},
      {"rs_model_path", s.rs_model_path},
      {"gs_model_path", s.gs_model_path},
      {"flow_model_path", s.flow_model_path},
      {"intrinsics",
       {{"fx", s.intrinsics.fx},
        {"fy", s.intrinsics.fy},
        {"cx", s.intrinsics.cx},
        {"cy", s.intrinsics.cy},
        {"width", s.intrinsics.width},
        {"height", s.intrinsics.height}}},
      {"pattern",
       {{"kind", std::string(to_string(s.pattern.kind))},
        {"amplitude", {s.pattern.amplitude.x, s.pattern.amplitude.y, s.pattern.amplitude.z}},
        {"frequency_hz", s.pattern.frequency_hz},
        {"cutoff_hz", s.pattern.cutoff_hz},
        {"seed", s.pattern.seed}}},
      {"timing",
       {{"readout_ns", s.timing.readout_ns}, {"t0_ns", s.timing.t0_ns}, {"reference_row", s.timing.reference_row}}},
      {"is_identity_pair", s.is_identity_pair},
      {"norm_scale", s.norm_scale},
      {"model_resolution", s.model_resolution},
  };
}

inline void from_json(const nlohmann::ordered_json& j, DatasetSample& s) {
  j.at("id").get_to(s.id);
  j.at("rs_path").get_to(s.rs_path);
  j.at("gs_path").get_to(s.gs_path);
  j.at("flow_path").get_to(s.flow_path);
  j.at("trace_path").get_to(s.trace_path);
  s.mask_path = j.value("mask_path", "");
  s.rs_model_path = j.value("rs_model_path", "");
  s.gs_model_path = j.value("gs_model_path", "");
  s.flow_model_path = j.value("flow_model_path", "");
  const auto& k = j.at("intrinsics");
  k.at("fx").get_to(s.intrinsics.fx);
  k.at("fy").get_to(s.intrinsics.fy);
  k.at("cx").get_to(s.intrinsics.cx);
  k.at("cy").get_to(s.intrinsics.cy);
  k.at("width").get_to(s.intrinsics.width);
  k.at("height").get_to(s.intrinsics.height);
  const auto& p = j.at("pattern");
  s.pattern.kind = parse_pattern_kind(p.at("kind").get<std::string>());
  const auto& amp = p.at("amplitude");
  s.pattern.amplitude = {amp.at(0).get<double>(), amp.at(1).get<double>(), amp.at(2).get<double>()};
  p.at("frequency_hz").get_to(s.pattern.frequency_hz);
  p.at("cutoff_hz").get_to(s.pattern.cutoff_hz);
  p.at("seed").get_to(s.pattern.seed);
  if (j.contains("timing")) {
    const auto& t = j.at("timing");
    t.at("readout_ns").get_to(s.timing.readout_ns);
    t.at("t0_ns").get_to(s.timing.t0_ns);
    t.at("reference_row").get_to(s.timing.reference_row);
  }
  j.at("is_identity_pair").get_to(s.is_identity_pair);
  j.at("norm_scale").get_to(s.norm_scale);
  j.at("model_resolution").get_to(s.model_resolution);
}

inline std::string encode_manifest(const std::vector<DatasetSample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    nlohmann::ordered_json j = s;
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<DatasetSample> decode_manifest(const std::string& text) {
  std::vector<DatasetSample> samples;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      try {
        samples.push_back(nlohmann::ordered_json::parse(line).get<DatasetSample>());
      } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(pos + (e.byte > 0 ? e.byte - 1 : 0), std::string("manifest: ") + e.what());
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(pos, std::string("manifest: ") + e.what());
      } catch (const Error& e) {
        throw FormatError(pos, std::string("manifest: ") + e.what());
      }
    }
    pos = end + 1;
  }
  return samples;
}

inline void write_manifest(const fs::path& path, const std::vector<DatasetSample>& samples) {
  detail::write_text(path, encode_manifest(samples));
}

inline std::vector<DatasetSample> read_manifest(const fs::path& path) {
  return decode_manifest(detail::read_text(path));
}

struct PatternMix {
  double constant{1.0};
  double sinusoid{1.0};
  double smooth_noise{1.0};
};

struct DatasetConfig {
  int count{100};
  double identity_fraction{0.2};
  std::uint64_t seed{0};
  PatternMix mix;
  int width{600};
  int height{800};
  double focal_px{600.0};
  int model_resolution{defaults::model_resolution};
  double norm_scale{defaults::norm_scale};
  Nanoseconds readout_ns{30'000'000};
  double gyro_rate_hz{200.0};
  Nanoseconds trace_duration_ns{500'000'000};
  double max_rotation_deg{3.0};
  bool center_reference{false};
  int max_attempts{8};
  int workers{default_workers()};
};

/// Loads every readable PNG in `dir` (sorted by name) resized to width x
/// height and snapped to 8-bit levels. Unreadable files are skipped with a
/// warning on stderr.
inline std::vector<ImageBuffer> load_sources(const fs::path& dir, int width, int height) {
  if (!fs::is_directory(dir)) detail::fail(ErrorKind::io, "source directory does not exist: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ImageBuffer> images;
  for (const auto& f : files) {
    try {
      images.push_back(quantize(downsample_image(read_png(f), width, height)));
    } catch (const Error& e) {
      std::cerr << "warning: skipping source " << f.string() << ": " << e.what() << "\n";
    }
  }
  if (images.empty()) detail::fail(ErrorKind::io, "no usable source images in " + dir.string());
  return images;
}

namespace detail {

inline MotionPattern draw_pattern(std::mt19937_64& rng, const PatternMix& mix) {
  const double total = mix.constant + mix.sinusoid + mix.smooth_noise;
  if (!(total > 0.0) || mix.constant < 0 || mix.sinusoid < 0 || mix.smooth_noise < 0)
    fail(ErrorKind::invalid_argument, "pattern mix weights must be >= 0 with a positive sum");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double pick = unit(rng) * total;
  MotionPattern p;
  p.kind = pick < mix.constant                  ? PatternKind::constant
           : pick < mix.constant + mix.sinusoid ? PatternKind::sinusoid
                                                : PatternKind::smooth_noise;
  // Pan/tilt rates dominate hand shake; in-plane roll is weaker.
  if (p.kind == PatternKind::constant) {
    p.amplitude = {4.0 * unit(rng) - 2.0, 4.0 * unit(rng) - 2.0, unit(rng) - 0.5};
  } else {
    p.amplitude = {2.5 * unit(rng), 2.5 * unit(rng), 0.6 * unit(rng)};
  }
  p.frequency_hz = 1.0 + 4.0 * unit(rng);
  p.cutoff_hz = 2.0 + 13.0 * unit(rng);
  p.seed = rng();
  return p;
}

inline std::string sample_id(int index) {
  std::string s = std::to_string(index);
  return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

}  // namespace detail

/// Generates `cfg.count` samples under out_dir/{rs,gs,flow,trace,mask} plus
/// model-resolution copies under {rs,gs,flow}_model, and writes
/// out_dir/manifest.jsonl. Output bytes depend only on the sources and cfg
/// (not on cfg.workers).
inline std::vector<DatasetSample> synth_dataset(const fs::path& src_dir, const fs::path& out_dir,
                                                const DatasetConfig& cfg) {
  if (cfg.count < 0) detail::fail(ErrorKind::invalid_argument, "synth_dataset: count must be >= 0");
  if (!(cfg.identity_fraction >= 0.0 && cfg.identity_fraction <= 1.0))
    detail::fail(ErrorKind::invalid_argument, "synth_dataset: identity fraction must lie in [0, 1]");
  const std::vector<ImageBuffer> sources = load_sources(src_dir, cfg.width, cfg.height);
  const CameraIntrinsics k = CameraIntrinsics::centered(cfg.focal_px, cfg.width, cfg.height);
  k.validate();
  const double max_rotation = cfg.max_rotation_deg * std::numbers::pi / 180.0;

  const int identity_count = static_cast<int>(std::llround(cfg.count * cfg.identity_fraction));
  std::vector<int> order(static_cast<std::size_t>(cfg.count));
  for (int i = 0; i < cfg.count; ++i) order[i] = i;
  std::mt19937_64 order_rng(detail::splitmix64(cfg.seed));
  std::shuffle(order.begin(), order.end(), order_rng);
  std::vector<bool> is_identity(static_cast<std::size_t>(cfg.count), false);
  for (int i = 0; i < identity_count; ++i) is_identity[order[i]] = true;

  std::vector<DatasetSample> samples(static_cast<std::size_t>(cfg.count));
  const int m = cfg.model_resolution;
  parallel_for(0, cfg.count, cfg.workers, [&](int index) {
    std::mt19937_64 rng(detail::splitmix64(cfg.seed ^ detail::splitmix64(static_cast<std::uint64_t>(index) + 1)));
    DatasetSample s;
    s.id = detail::sample_id(index);
    s.rs_path = "rs/" + s.id + ".png";
    s.gs_path = "gs/" + s.id + ".png";
    s.flow_path = "flow/" + s.id + ".flo";
    s.trace_path = "trace/" + s.id + ".csv";
    s.mask_path = "mask/" + s.id + ".png";
    s.rs_model_path = "rs_model/" + s.id + ".png";
    s.gs_model_path = "gs_model/" + s.id + ".png";
    s.flow_model_path = "flow_model/" + s.id + ".flo";
    s.intrinsics = k;
    s.norm_scale = cfg.norm_scale;
    s.model_resolution = m;
    s.is_identity_pair = is_identity[index];
    const ImageBuffer& src = sources[rng() % sources.size()];

    std::uniform_int_distribution<Nanoseconds> t0_dist(0, std::max<Nanoseconds>(0, cfg.trace_duration_ns - cfg.readout_ns));
    s.timing = cfg.center_reference ? RowTiming::center_row(cfg.readout_ns, cfg.height, t0_dist(rng))
                                    : RowTiming::first_row(cfg.readout_ns, t0_dist(rng));

    SynthOptions opt;
    opt.quantize = true;
    opt.workers = 1;
    SynthPair pair;
    GyroTrace trace;
    if (s.is_identity_pair) {
      s.pattern = MotionPattern{PatternKind::constant, {}, 1.0, 10.0, 0};
      trace = gen_gyro_trace(s.pattern, cfg.trace_duration_ns, cfg.gyro_rate_hz);
      pair = {src, src, MotionField(cfg.width, cfg.height), ValidMask(cfg.width, cfg.height, true)};
    } else {
      for (int attempt = 0;; ++attempt) {
        s.pattern = detail::draw_pattern(rng, cfg.mix);
        trace = gen_gyro_trace(s.pattern, cfg.trace_duration_ns, cfg.gyro_rate_hz);
        // Shrink the rates until the frame's rotation respects the cap.
        for (int shrink = 0; shrink < 8; ++shrink) {
          const double angle = max_row_rotation(trace, s.timing, cfg.height);
          if (angle <= max_rotation) break;
          const double factor = 0.999 * max_rotation / angle;
          trace = scale_trace(trace, factor);
          s.pattern.amplitude = s.pattern.amplitude * factor;
        }
        try {
          pair = synth_pair(src, k, trace, s.timing, opt);
          break;
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::non_contractive || attempt + 1 >= cfg.max_attempts) throw;
        }
      }
    }

    write_png(out_dir / s.rs_path, pair.rs);
    write_png(out_dir / s.gs_path, pair.gs);
    write_flow(out_dir / s.flow_path, pair.flow);
    write_trace_csv(out_dir / s.trace_path, trace);
    write_mask_png(out_dir / s.mask_path, pair.mask);
    write_png(out_dir / s.rs_model_path, downsample_image(pair.rs, m, m));
    write_png(out_dir / s.gs_model_path, downsample_image(pair.gs, m, m));
    write_flow(out_dir / s.flow_model_path, downsample_field(pair.flow, m, m));
    samples[index] = std::move(s);
  });
  write_manifest(out_dir / "manifest.jsonl", samples);
  return samples;
}

}  // namespace gyrofield
