#include <catch_amalgamated.hpp>

#include <cstring>
#include <random>

#include "gyrofield/io.hpp"
#include "gyrofield/synth.hpp"
#include "gyrofield/testvectors.hpp"
#include "support.hpp"

using namespace gyrofield;

namespace {

template <class Fn>
std::size_t format_offset(Fn&& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    CHECK(e.kind() == ErrorKind::format);
    return e.offset();
  }
  FAIL("expected a FormatError");
  return 0;
}

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

MotionField random_float_field(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<float> u(-40.0f, 40.0f);
  MotionField g(w, h);
  for (double& v : g.data()) v = u(rng);
  return g;
}

}  // namespace

TEST_CASE("flow: byte layout") {
  MotionField g(2, 1);
  g.dx(0, 0) = 1.5;
  g.dy(0, 0) = -2.0;
  g.dx(1, 0) = 0.25;
  const auto bytes = encode_flow(g);
  REQUIRE(bytes.size() == 12 + 16);
  const unsigned char magic[4] = {0x50, 0x49, 0x45, 0x48};  // "PIEH" = 202021.25f little-endian
  CHECK(std::memcmp(bytes.data(), magic, 4) == 0);
  CHECK(bytes[4] == 2);
  CHECK(bytes[8] == 1);
  float first;
  std::memcpy(&first, bytes.data() + 12, 4);
  CHECK(first == 1.5f);
}

TEST_CASE("flow: write then read is bit-identical") {
  std::mt19937_64 rng(1);
  const auto dir = testsupport::scratch_dir("flow");
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = random_float_field(rng, 1 + trial * 7, 1 + trial * 3);
    write_flow(dir / "f.flo", g);
    CHECK(read_flow(dir / "f.flo") == g);
  }
  // Doubles are stored as float32.
  MotionField d(1, 1);
  d.dx(0, 0) = 0.1;
  CHECK(decode_flow(encode_flow(d)) == round_to_flow_precision(d));
}

TEST_CASE("flow: malformed files") {
  std::mt19937_64 rng(2);
  const auto bytes = encode_flow(random_float_field(rng, 4, 3));
  auto bad_magic = bytes;
  bad_magic[0] ^= 0xFF;
  CHECK(format_offset([&] { decode_flow(bad_magic); }) == 0);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 5);
  CHECK(format_offset([&] { decode_flow(truncated); }) == truncated.size());
  CHECK(format_offset([&] { decode_flow({bytes.begin(), bytes.begin() + 7}); }) == 7);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK(format_offset([&] { decode_flow(trailing); }) == bytes.size());
  auto zero_width = bytes;
  std::memset(zero_width.data() + 4, 0, 4);
  CHECK(format_offset([&] { decode_flow(zero_width); }) == 4);
  CHECK(kind_of([] { read_flow("/nonexistent/dir/x.flo"); }) == ErrorKind::io);
}

TEST_CASE("png: 8-bit round trip and rounding") {
  const auto dir = testsupport::scratch_dir("png");
  const auto rgb = quantize(testsupport::smooth_texture(23, 17, 4));
  write_png(dir / "rgb.png", rgb);
  CHECK(read_png(dir / "rgb.png") == rgb);
  const auto gray = quantize(testsupport::smooth_texture(9, 31, 5, 1));
  write_png(dir / "sub/gray.png", gray);
  CHECK(read_png(dir / "sub/gray.png") == gray);

  CHECK(to_byte(0.0) == 0);
  CHECK(to_byte(1.0) == 255);
  CHECK(to_byte(0.5) == 128);  // 127.5 rounds half up
  CHECK(to_byte(-0.2) == 0);
  CHECK(to_byte(1.7) == 255);
  for (int b = 0; b < 256; ++b) CHECK(to_byte(from_byte(static_cast<std::uint8_t>(b))) == b);

  ValidMask m(5, 4, true);
  m.set(1, 2, false);
  write_mask_png(dir / "m.png", m);
  CHECK(read_mask_png(dir / "m.png") == m);

  detail::write_text(dir / "junk.png", "not a png");
  CHECK(kind_of([&] { read_png(dir / "junk.png"); }) == ErrorKind::io);
}

TEST_CASE("trace csv: round trip and errors") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<GyroSample> s;
  for (int k = 0; k < 50; ++k) s.push_back({k * 5'000'000LL + k, {u(rng), u(rng), u(rng)}});
  const GyroTrace trace(s, s.back().t_ns);
  const auto back = decode_trace_csv(encode_trace_csv(trace));
  REQUIRE(back.size() == trace.size());
  CHECK(back.duration_ns() == trace.duration_ns());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(back.samples()[i].t_ns == s[i].t_ns);
    CHECK(back.samples()[i].omega.x == s[i].omega.x);
    CHECK(back.samples()[i].omega.y == s[i].omega.y);
    CHECK(back.samples()[i].omega.z == s[i].omega.z);
  }
  CHECK(decode_trace_csv("t_ns,wx,wy,wz\r\n0,0,0,1\r\n10,0,0,1\r\n").size() == 2);
  CHECK(format_offset([] { decode_trace_csv("time,wx,wy,wz\n0,0,0,0\n"); }) == 0);
  CHECK(format_offset([] { decode_trace_csv("t_ns,wx,wy,wz\n0,0,0,0\n5,1,x,0\n"); }) == 22);
  CHECK(format_offset([] { decode_trace_csv("t_ns,wx,wy,wz\n0,0,0\n"); }) == 14);
  CHECK(kind_of([] { decode_trace_csv("t_ns,wx,wy,wz\n0,0,0,0\n"); }) == ErrorKind::invalid_trace);
  CHECK(kind_of([] { decode_trace_csv("t_ns,wx,wy,wz\n5,0,0,0\n3,0,0,0\n"); }) == ErrorKind::invalid_trace);
}

TEST_CASE("intrinsics json") {
  const auto dir = testsupport::scratch_dir("intr");
  const CameraIntrinsics k{612.5, 600.25, 299.5, 401, 600, 800};
  write_intrinsics(dir / "k.json", k);
  const auto back = read_intrinsics(dir / "k.json");
  CHECK(back.fx == k.fx);
  CHECK(back.fy == k.fy);
  CHECK(back.cx == k.cx);
  CHECK(back.cy == k.cy);
  CHECK(back.width == k.width);
  CHECK(back.height == k.height);
  detail::write_text(dir / "bad.json", "{\"fx\": 1, ");
  CHECK(kind_of([&] { read_intrinsics(dir / "bad.json"); }) == ErrorKind::format);
  detail::write_text(dir / "missing.json", "{\"fx\": 1}");
  CHECK(kind_of([&] { read_intrinsics(dir / "missing.json"); }) == ErrorKind::format);
  detail::write_text(dir / "invalid.json", R"({"fx":0,"fy":1,"cx":0,"cy":0,"width":4,"height":4})");
  CHECK(kind_of([&] { read_intrinsics(dir / "invalid.json"); }) == ErrorKind::invalid_argument);
}

TEST_CASE("manifest: round trips") {
  const auto dir = testsupport::scratch_dir("manifest");
  write_manifest(dir / "empty.jsonl", {});
  CHECK(read_manifest(dir / "empty.jsonl").empty());
  CHECK(decode_manifest("\n  \n").empty());

  std::vector<DatasetSample> samples(3);
  for (int i = 0; i < 3; ++i) {
    auto& s = samples[i];
    s.id = detail::sample_id(i);
    s.rs_path = "rs/" + s.id + ".png";
    s.gs_path = "gs/" + s.id + ".png";
    s.flow_path = "flow/" + s.id + ".flo";
    s.trace_path = "trace/" + s.id + ".csv";
    s.mask_path = "mask/" + s.id + ".png";
    s.intrinsics = CameraIntrinsics::centered(600, 600, 800);
    s.pattern = {PatternKind::smooth_noise, {0.1 * i, -0.25, 1.0 / 3.0}, 2.5, 7.0, 0xFFFFFFFFFFFFFFF0ULL + i};
    s.timing = RowTiming{30'000'000, 1234567 * i, i};
    s.is_identity_pair = i == 1;
    s.norm_scale = 8.0;
    s.model_resolution = 64;
  }
  write_manifest(dir / "m.jsonl", samples);
  const auto back = read_manifest(dir / "m.jsonl");
  REQUIRE(back.size() == 3);
  CHECK(encode_manifest(back) == encode_manifest(samples));
  CHECK(back[2].pattern.seed == samples[2].pattern.seed);
  CHECK(back[1].is_identity_pair);
  CHECK(back[2].pattern.amplitude.z == 1.0 / 3.0);
  CHECK(back[2].timing.t0_ns == 2469134);
}

TEST_CASE("manifest: malformed lines report the byte offset") {
  std::vector<DatasetSample> one(1);
  one[0].id = "000000";
  const std::string good = encode_manifest(one);
  CHECK(format_offset([&] { decode_manifest(good + "{\"id\": \n"); }) >= good.size());
  CHECK(format_offset([&] { decode_manifest(good + "{\"id\": \"x\"}\n"); }) == good.size());
  CHECK(format_offset([] { decode_manifest("[1,2]\n"); }) == 0);
}

TEST_CASE("test vectors: file round trip is bit-exact") {
  const auto dir = testsupport::scratch_dir("tv");
  const auto s = make_schedule();
  const auto tv = make_testvectors(s, 3);
  write_testvectors(dir / "tv.json", tv);
  const auto back = read_testvectors(dir / "tv.json");
  CHECK(back.steps == tv.steps);
  CHECK(back.beta_start == tv.beta_start);
  CHECK(back.beta_end == tv.beta_end);
  REQUIRE(back.alpha_bar.size() == tv.alpha_bar.size());
  for (std::size_t i = 0; i < tv.alpha_bar.size(); ++i) {
    CHECK(back.alpha_bar[i].first == tv.alpha_bar[i].first);
    CHECK(back.alpha_bar[i].second == s.alpha_bar()[tv.alpha_bar[i].first]);
  }
  REQUIRE(back.ddim_cases.size() == tv.ddim_cases.size());
  for (std::size_t i = 0; i < tv.ddim_cases.size(); ++i) {
    const auto& c = back.ddim_cases[i];
    CHECK(c.expected == tv.ddim_cases[i].expected);
    CHECK(c.x_t == tv.ddim_cases[i].x_t);
    const FieldTensor xt(1, 1, 1, c.x_t), x0(1, 1, 1, c.x0_hat);
    CHECK(ddim_step(xt, x0, c.t, c.t_prev, 0.0, s).data[0] == c.expected);
  }
  detail::write_text(dir / "bad.json", "{");
  CHECK(kind_of([&] { read_testvectors(dir / "bad.json"); }) == ErrorKind::format);
}
