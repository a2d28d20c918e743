#pragma once
//
// Scheduler test vectors shared with external trainer implementations.
//
// {"T", "beta_start", "beta_end",
//  "alpha_bar": [[t, value], ...]            32 probe indices
//  "ddim_cases": [{"t", "t_prev", "x_t", "x0_hat", "expected"}, ...]}   eta = 0

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gyrofield/diffusion.hpp"
#include "gyrofield/io.hpp"

namespace gyrofield {

struct DdimCase {
  int t{0};
  int t_prev{-1};
  double x_t{0.0};
  double x0_hat{0.0};
  double expected{0.0};
};

struct SchedulerTestVectors {
  int steps{defaults::diffusion_steps};
  double beta_start{defaults::beta_start};
  double beta_end{defaults::beta_end};
  std::vector<std::pair<int, double>> alpha_bar;
  std::vector<DdimCase> ddim_cases;
};

inline constexpr int kAlphaBarProbes = 32;

inline SchedulerTestVectors make_testvectors(const NoiseSchedule& s, std::uint64_t seed = 0, int ddim_case_count = 24) {
  SchedulerTestVectors tv;
  tv.steps = s.steps();
  tv.beta_start = s.beta_start();
  tv.beta_end = s.beta_end();
  const int probes = std::min(kAlphaBarProbes, s.steps());
  for (int i = 0; i < probes; ++i) {
    const int t = probes == 1 ? 0 : static_cast<int>(std::lround(static_cast<double>(s.steps() - 1) * i / (probes - 1)));
    tv.alpha_bar.emplace_back(t, s.alpha_bar()[t]);
  }

  auto add_case = [&](int t, int t_prev, double x_t, double x0_hat) {
    FieldTensor xt(1, 1, 1, x_t), x0(1, 1, 1, x0_hat);
    tv.ddim_cases.push_back({t, t_prev, x_t, x0_hat, ddim_step(xt, x0, t, t_prev, 0.0, s).data[0]});
  };
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  // The default 8-step visit order first, then random pairs.
  const auto ts = ddim_timesteps(s.steps(), std::min(defaults::sampling_steps, s.steps()));
  for (std::size_t i = 0; i < ts.size(); ++i) add_case(ts[i], i + 1 < ts.size() ? ts[i + 1] : -1, normal(rng), normal(rng));
  std::uniform_int_distribution<int> step(0, s.steps() - 1);
  while (static_cast<int>(tv.ddim_cases.size()) < ddim_case_count) {
    const int t = step(rng);
    const int t_prev = std::uniform_int_distribution<int>(-1, t - 1)(rng);
    add_case(t, t_prev, normal(rng), normal(rng));
  }
  return tv;
}

inline nlohmann::ordered_json testvectors_to_json(const SchedulerTestVectors& tv) {
  nlohmann::ordered_json ab = nlohmann::ordered_json::array();
  for (const auto& [t, v] : tv.alpha_bar) ab.push_back({t, v});
  nlohmann::ordered_json cases = nlohmann::ordered_json::array();
  for (const auto& c : tv.ddim_cases)
    cases.push_back({{"t", c.t}, {"t_prev", c.t_prev}, {"x_t", c.x_t}, {"x0_hat", c.x0_hat}, {"expected", c.expected}});
  return {{"T", tv.steps},
          {"beta_start", tv.beta_start},
          {"beta_end", tv.beta_end},
          {"alpha_bar", std::move(ab)},
          {"ddim_cases", std::move(cases)}};
}

inline SchedulerTestVectors testvectors_from_json(const nlohmann::ordered_json& j) {
  SchedulerTestVectors tv;
  j.at("T").get_to(tv.steps);
  j.at("beta_start").get_to(tv.beta_start);
  j.at("beta_end").get_to(tv.beta_end);
  for (const auto& p : j.at("alpha_bar")) tv.alpha_bar.emplace_back(p.at(0).get<int>(), p.at(1).get<double>());
  for (const auto& c : j.at("ddim_cases"))
    tv.ddim_cases.push_back({c.at("t").get<int>(), c.at("t_prev").get<int>(), c.at("x_t").get<double>(),
                             c.at("x0_hat").get<double>(), c.at("expected").get<double>()});
  return tv;
}

inline void write_testvectors(const fs::path& path, const SchedulerTestVectors& tv) {
  detail::write_text(path, testvectors_to_json(tv).dump(2) + "\n");
}

inline SchedulerTestVectors read_testvectors(const fs::path& path) {
  try {
    return testvectors_from_json(nlohmann::ordered_json::parse(detail::read_text(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(e.byte, std::string("test vectors: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(0, std::string("test vectors: ") + e.what());
  }
}

}  // namespace gyrofield
