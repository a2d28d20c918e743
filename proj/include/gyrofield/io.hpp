#pragma once
//
// File formats: Middlebury .flo motion fields, 8-bit PNG images and masks,
// gyro trace CSV and intrinsics JSON.

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "gyrofield/error.hpp"
#include "gyrofield/image.hpp"
#include "gyrofield/rotation.hpp"

namespace gyrofield {

namespace fs = std::filesystem;

inline constexpr float kFlowMagic = 202021.25f;

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.insert(out.end(), bytes.begin(), bytes.end());
}

template <class T>
T get_le(const std::vector<unsigned char>& in, std::size_t offset) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), in.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

inline std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

/// Shortest decimal representation that round-trips.
inline std::string format_double(double v) {
  std::array<char, 32> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Flow files

inline std::vector<unsigned char> encode_flow(const MotionField& g) {
  std::vector<unsigned char> out;
  out.reserve(12 + g.size() * 4);
  detail::put_le(out, kFlowMagic);
  detail::put_le(out, static_cast<std::int32_t>(g.width()));
  detail::put_le(out, static_cast<std::int32_t>(g.height()));
  for (double v : g.data()) detail::put_le(out, static_cast<float>(v));
  return out;
}

inline MotionField decode_flow(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4) throw FormatError(bytes.size(), "flow file truncated in magic");
  if (detail::get_le<float>(bytes, 0) != kFlowMagic) throw FormatError(0, "flow file has bad magic");
  if (bytes.size() < 12) throw FormatError(bytes.size(), "flow file truncated in header");
  const auto w = detail::get_le<std::int32_t>(bytes, 4);
  const auto h = detail::get_le<std::int32_t>(bytes, 8);
  if (w < 1) throw FormatError(4, "flow file has non-positive width");
  if (h < 1) throw FormatError(8, "flow file has non-positive height");
  const std::size_t expected = 12 + static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 8;
  if (bytes.size() < expected) throw FormatError(bytes.size(), "flow file truncated in payload");
  if (bytes.size() > expected) throw FormatError(expected, "flow file has trailing bytes");
  MotionField g(w, h);
  auto data = g.data();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = detail::get_le<float>(bytes, 12 + i * 4);
  return g;
}

inline void write_flow(const fs::path& path, const MotionField& g) { detail::write_bytes(path, encode_flow(g)); }
inline MotionField read_flow(const fs::path& path) { return decode_flow(detail::read_bytes(path)); }

/// Rounds every displacement to float32, i.e. what a flow file stores.
inline MotionField round_to_flow_precision(MotionField g) {
  for (double& v : g.data()) v = static_cast<double>(static_cast<float>(v));
  return g;
}

// ---------------------------------------------------------------------------
// 8-bit images

/// [0, 1] -> 0..255 with round-half-up.
inline std::uint8_t to_byte(double v) {
  const double scaled = std::floor(v * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

inline double from_byte(std::uint8_t b) { return b / 255.0; }

/// Snaps values to the 8-bit levels a PNG round trip would produce.
inline ImageBuffer quantize(ImageBuffer img) {
  for (double& v : img.data()) v = from_byte(to_byte(v));
  return img;
}

inline void write_png(const fs::path& path, const ImageBuffer& img) {
  std::vector<std::uint8_t> bytes(img.size());
  std::transform(img.data().begin(), img.data().end(), bytes.begin(), to_byte);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    detail::fail(ErrorKind::io, "cannot write PNG " + path.string() + ": " + msg);
  }
}

/// Loads an 8-bit PNG as gray or RGB (alpha and palettes are flattened).
inline ImageBuffer read_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    const std::string msg = image.message;
    png_image_free(&image);
    detail::fail(ErrorKind::io, "cannot read PNG " + path.string() + ": " + msg);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(image));
  png_color background{0, 0, 0};
  if (!png_image_finish_read(&image, &background, bytes.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    detail::fail(ErrorKind::io, "cannot decode PNG " + path.string() + ": " + msg);
  }
  ImageBuffer img(static_cast<int>(image.width), static_cast<int>(image.height), color ? 3 : 1);
  std::transform(bytes.begin(), bytes.end(), img.data().begin(), from_byte);
  return img;
}

inline void write_mask_png(const fs::path& path, const ValidMask& mask) {
  ImageBuffer img(mask.width(), mask.height(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) img.data()[i] = mask.data()[i] ? 1.0 : 0.0;
  write_png(path, img);
}

inline ValidMask read_mask_png(const fs::path& path) {
  const ImageBuffer img = read_png(path);
  ValidMask mask(img.width(), img.height(), false);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) mask.set(x, y, img(x, y, 0) >= 0.5);
  return mask;
}

// ---------------------------------------------------------------------------
// Gyro traces: CSV "t_ns,wx,wy,wz"; the trace duration is the last timestamp.

inline std::string encode_trace_csv(const GyroTrace& trace) {
  std::string out = "t_ns,wx,wy,wz\n";
  for (const auto& s : trace.samples()) {
    out += std::to_string(s.t_ns);
    for (double v : {s.omega.x, s.omega.y, s.omega.z}) {
      out += ',';
      out += detail::format_double(v);
    }
    out += '\n';
  }
  return out;
}

inline GyroTrace decode_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line)) throw FormatError(0, "trace CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t_ns,wx,wy,wz") throw FormatError(0, "trace CSV header must be t_ns,wx,wy,wz");
  offset = static_cast<std::size_t>(in.tellg());
  std::vector<GyroSample> samples;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<std::string, 4> cells;
    std::size_t start = 0;
    for (int i = 0; i < 4; ++i) {
      const std::size_t comma = line.find(',', start);
      if ((i < 3) != (comma != std::string::npos)) throw FormatError(line_start, "trace CSV row needs 4 fields");
      cells[i] = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      start = comma + 1;
    }
    GyroSample s;
    auto parse = [&](const std::string& cell, auto& value) {
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size())
        throw FormatError(line_start, "trace CSV has a malformed number: '" + cell + "'");
    };
    parse(cells[0], s.t_ns);
    parse(cells[1], s.omega.x);
    parse(cells[2], s.omega.y);
    parse(cells[3], s.omega.z);
    samples.push_back(s);
  }
  if (samples.empty()) throw FormatError(offset, "trace CSV has no samples");
  const Nanoseconds duration = samples.back().t_ns;
  return GyroTrace(std::move(samples), duration);
}

inline void write_trace_csv(const fs::path& path, const GyroTrace& trace) {
  detail::write_text(path, encode_trace_csv(trace));
}
inline GyroTrace read_trace_csv(const fs::path& path) { return decode_trace_csv(detail::read_text(path)); }

// ---------------------------------------------------------------------------
// Intrinsics JSON {"fx","fy","cx","cy","width","height"}

inline void to_json(nlohmann::json& j, const CameraIntrinsics& k) {
  j = nlohmann::json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

inline void from_json(const nlohmann::json& j, CameraIntrinsics& k) {
  j.at("fx").get_to(k.fx);
  j.at("fy").get_to(k.fy);
  j.at("cx").get_to(k.cx);
  j.at("cy").get_to(k.cy);
  j.at("width").get_to(k.width);
  j.at("height").get_to(k.height);
}

inline CameraIntrinsics read_intrinsics(const fs::path& path) {
  CameraIntrinsics k;
  try {
    k = nlohmann::json::parse(detail::read_text(path)).get<CameraIntrinsics>();
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(e.byte, std::string("intrinsics JSON: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(0, std::string("intrinsics JSON: ") + e.what());
  }
  k.validate();
  return k;
}

inline void write_intrinsics(const fs::path& path, const CameraIntrinsics& k) {
  detail::write_text(path, nlohmann::json(k).dump(2) + "\n");
}

}  // namespace gyrofield
