// gyrofield command-line driver: one subcommand per pipeline stage.
//
// Exit codes: 0 ok, 1 internal, 2 usage, 3 unknown subcommand, 4 io,
// 5 format, 10+ contract violations (see exit_code()).

#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gyrofield/gyrofield.hpp"

namespace gf = gyrofield;

namespace {

int exit_code(gf::ErrorKind kind) {
  switch (kind) {
    case gf::ErrorKind::io: return 4;
    case gf::ErrorKind::format: return 5;
    case gf::ErrorKind::invalid_argument: return 10;
    case gf::ErrorKind::range: return 11;
    case gf::ErrorKind::shape: return 12;
    case gf::ErrorKind::invalid_trace: return 13;
    case gf::ErrorKind::coverage: return 14;
    case gf::ErrorKind::point_at_infinity: return 15;
    case gf::ErrorKind::non_contractive: return 16;
    case gf::ErrorKind::degenerate_mask: return 17;
    case gf::ErrorKind::ordering: return 18;
    case gf::ErrorKind::contract: return 19;
    case gf::ErrorKind::size: return 20;
  }
  return 1;
}

int report_error(std::string_view kind, int code, const std::string& message) {
  nlohmann::ordered_json j{{"error", kind}, {"code", code}, {"message", message}};
  std::cerr << j.dump() << "\n";
  return code;
}

struct TimingFlags {
  gf::Nanoseconds readout_ns{30'000'000};
  gf::Nanoseconds t0_ns{0};
  std::string reference{"first"};

  void attach(CLI::App* cmd) {
    cmd->add_option("--readout-ns", readout_ns, "Top-to-bottom readout duration in ns")->capture_default_str();
    cmd->add_option("--t0-ns", t0_ns, "Capture time of the first row within the trace")->capture_default_str();
    cmd->add_option("--reference", reference, "Reference row: first, center or an index")->capture_default_str();
  }

  gf::RowTiming timing(int height) const {
    gf::RowTiming t{readout_ns, t0_ns, 0};
    if (reference == "first") return t;
    if (reference == "center") return gf::RowTiming::center_row(readout_ns, height, t0_ns);
    try {
      t.reference_row = std::stoi(reference);
    } catch (const std::exception&) {
      throw gf::Error(gf::ErrorKind::invalid_argument, "--reference must be first, center or a row index");
    }
    return t;
  }
};

gf::PatternMix parse_mix(const std::string& text) {
  std::vector<double> w;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      w.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw gf::Error(gf::ErrorKind::invalid_argument, "--pattern-mix expects three comma-separated weights");
    }
  }
  if (w.size() != 3) throw gf::Error(gf::ErrorKind::invalid_argument, "--pattern-mix expects three weights");
  return {w[0], w[1], w[2]};
}

}  // namespace

int main(int argc, char** argv) {
  const std::set<std::string> known{"igf",  "simulate", "correct",           "invert-field",
                                    "synth", "eval",    "export-testvectors"};
  if (argc > 1 && argv[1][0] != '-' && !known.count(argv[1]))
    return report_error("unknown_subcommand", 3, std::string("unknown subcommand: ") + argv[1]);

  CLI::App app{"Gyro-field rolling-shutter toolkit"};
  app.require_subcommand(1);
  const int default_workers = gf::default_workers();

  // igf ---------------------------------------------------------------------
  auto* igf = app.add_subcommand("igf", "Build the gyro motion field for a trace and camera");
  std::string igf_trace, igf_intr, igf_out, igf_mask;
  TimingFlags igf_timing;
  int igf_workers = default_workers;
  igf->add_option("--trace", igf_trace, "Gyro trace CSV")->required();
  igf->add_option("--intrinsics", igf_intr, "Intrinsics JSON")->required();
  igf->add_option("--out", igf_out, "Output .flo")->required();
  igf->add_option("--mask-out", igf_mask, "Optional validity mask PNG");
  igf->add_option("--workers", igf_workers)->capture_default_str();
  igf_timing.attach(igf);

  // simulate ----------------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "Render a rolling-shutter image from a sharp source and a trace");
  std::string sim_src, sim_trace, sim_intr, sim_out, sim_flow, sim_gs, sim_mask;
  TimingFlags sim_timing;
  int sim_iters = gf::InversionDefaults::iterations;
  double sim_tol = gf::InversionDefaults::tolerance_px;
  int sim_workers = default_workers;
  sim->add_option("--src", sim_src, "Source PNG")->required();
  sim->add_option("--trace", sim_trace, "Gyro trace CSV")->required();
  sim->add_option("--intrinsics", sim_intr, "Intrinsics JSON")->required();
  sim->add_option("--out", sim_out, "Output RS PNG")->required();
  sim->add_option("--flow-out", sim_flow, "Optional correcting field .flo");
  sim->add_option("--gs-out", sim_gs, "Optional GS PNG (remap of the written RS)");
  sim->add_option("--mask-out", sim_mask, "Optional validity mask PNG");
  sim->add_option("--iters", sim_iters)->capture_default_str();
  sim->add_option("--tol", sim_tol)->capture_default_str();
  sim->add_option("--workers", sim_workers)->capture_default_str();
  sim_timing.attach(sim);

  // correct -----------------------------------------------------------------
  auto* cor = app.add_subcommand("correct", "Remap a rolling-shutter image with a correcting field");
  std::string cor_rs, cor_flow, cor_out, cor_mask;
  int cor_workers = default_workers;
  cor->add_option("--rs", cor_rs, "RS PNG")->required();
  cor->add_option("--flow", cor_flow, "Field .flo (resized to the image if needed)")->required();
  cor->add_option("--out", cor_out, "Output GS PNG")->required();
  cor->add_option("--mask-out", cor_mask, "Optional validity mask PNG");
  cor->add_option("--workers", cor_workers)->capture_default_str();

  // invert-field ------------------------------------------------------------
  auto* inv = app.add_subcommand("invert-field", "Numerically invert a displacement field");
  std::string inv_in, inv_out;
  int inv_iters = gf::InversionDefaults::iterations;
  double inv_tol = gf::InversionDefaults::tolerance_px;
  int inv_workers = default_workers;
  inv->add_option("--flow", inv_in, "Input .flo")->required();
  inv->add_option("--out", inv_out, "Output .flo")->required();
  inv->add_option("--iters", inv_iters)->capture_default_str();
  inv->add_option("--tol", inv_tol)->capture_default_str();
  inv->add_option("--workers", inv_workers)->capture_default_str();

  // synth -------------------------------------------------------------------
  auto* syn = app.add_subcommand("synth", "Synthesize an (RS, GS, field) dataset");
  std::string syn_src, syn_out, syn_mix = "1,1,1", syn_reference = "first";
  gf::DatasetConfig syn_cfg;
  syn_cfg.workers = default_workers;
  syn->add_option("--src", syn_src, "Directory of source PNGs")->required();
  syn->add_option("--out", syn_out, "Output dataset directory")->required();
  syn->add_option("--count", syn_cfg.count)->capture_default_str();
  syn->add_option("--identity-fraction", syn_cfg.identity_fraction)->capture_default_str();
  syn->add_option("--seed", syn_cfg.seed)->capture_default_str();
  syn->add_option("--pattern-mix", syn_mix, "Weights for constant,sinusoid,smooth-noise")->capture_default_str();
  syn->add_option("--width", syn_cfg.width)->capture_default_str();
  syn->add_option("--height", syn_cfg.height)->capture_default_str();
  syn->add_option("--focal", syn_cfg.focal_px)->capture_default_str();
  syn->add_option("--model-resolution", syn_cfg.model_resolution)->capture_default_str();
  syn->add_option("--norm-scale", syn_cfg.norm_scale)->capture_default_str();
  syn->add_option("--readout-ns", syn_cfg.readout_ns)->capture_default_str();
  syn->add_option("--gyro-rate", syn_cfg.gyro_rate_hz)->capture_default_str();
  syn->add_option("--trace-duration-ns", syn_cfg.trace_duration_ns)->capture_default_str();
  syn->add_option("--max-rotation-deg", syn_cfg.max_rotation_deg)->capture_default_str();
  syn->add_option("--reference", syn_reference, "first or center")->check(CLI::IsMember({"first", "center"}));
  syn->add_option("--workers", syn_cfg.workers)->capture_default_str();

  // eval --------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "Evaluate a predictor over a dataset manifest");
  std::string ev_manifest, ev_predictor = "oracle", ev_flow_dir, ev_out, ev_csv, ev_method;
  int ev_runs = gf::kDefaultEvalRuns;
  int ev_workers = default_workers;
  ev->add_option("--manifest", ev_manifest, "manifest.jsonl")->required();
  ev->add_option("--predictor", ev_predictor, "oracle, zero or flows")
      ->check(CLI::IsMember({"oracle", "zero", "flows"}))
      ->capture_default_str();
  ev->add_option("--flow-dir", ev_flow_dir, "Directory of predicted flows for --predictor flows");
  ev->add_option("--runs", ev_runs)->capture_default_str();
  ev->add_option("--out", ev_out, "Report JSON (default: stdout)");
  ev->add_option("--csv", ev_csv, "Optional table CSV");
  ev->add_option("--method", ev_method, "Method name in the report (default: predictor name)");
  ev->add_option("--workers", ev_workers)->capture_default_str();

  // export-testvectors ------------------------------------------------------
  auto* tv = app.add_subcommand("export-testvectors", "Write scheduler test vectors as JSON");
  std::string tv_out;
  int tv_steps = gf::defaults::diffusion_steps;
  double tv_b0 = gf::defaults::beta_start, tv_b1 = gf::defaults::beta_end;
  std::uint64_t tv_seed = 0;
  tv->add_option("--out", tv_out)->required();
  tv->add_option("--T", tv_steps)->capture_default_str();
  tv->add_option("--beta-start", tv_b0)->capture_default_str();
  tv->add_option("--beta-end", tv_b1)->capture_default_str();
  tv->add_option("--seed", tv_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", 2, e.what());
  }

  try {
    if (igf->parsed()) {
      const auto trace = gf::read_trace_csv(igf_trace);
      const auto k = gf::read_intrinsics(igf_intr);
      const auto rows = gf::row_rotations(trace, igf_timing.timing(k.height), k.height);
      const auto result = gf::build_igf(k, rows, k.width, k.height, igf_workers);
      gf::write_flow(igf_out, result.field);
      if (!igf_mask.empty()) gf::write_mask_png(igf_mask, result.mask);
    } else if (sim->parsed()) {
      const auto src = gf::read_png(sim_src);
      const auto trace = gf::read_trace_csv(sim_trace);
      const auto k = gf::read_intrinsics(sim_intr);
      gf::SynthOptions opt;
      opt.inversion_iters = sim_iters;
      opt.inversion_tol = sim_tol;
      opt.quantize = true;
      opt.workers = sim_workers;
      const auto pair = gf::synth_pair(src, k, trace, sim_timing.timing(k.height), opt);
      gf::write_png(sim_out, pair.rs);
      if (!sim_flow.empty()) gf::write_flow(sim_flow, pair.flow);
      if (!sim_gs.empty()) gf::write_png(sim_gs, pair.gs);
      if (!sim_mask.empty()) gf::write_mask_png(sim_mask, pair.mask);
    } else if (cor->parsed()) {
      const auto rs = gf::read_png(cor_rs);
      const auto flow = gf::upsample_field(gf::read_flow(cor_flow), rs.width(), rs.height());
      const auto out = gf::remap(rs, flow, cor_workers);
      gf::write_png(cor_out, out.image);
      if (!cor_mask.empty()) gf::write_mask_png(cor_mask, out.mask);
    } else if (inv->parsed()) {
      gf::write_flow(inv_out, gf::invert_field(gf::read_flow(inv_in), inv_iters, inv_tol, inv_workers));
    } else if (syn->parsed()) {
      syn_cfg.mix = parse_mix(syn_mix);
      syn_cfg.center_reference = syn_reference == "center";
      const auto samples = gf::synth_dataset(syn_src, syn_out, syn_cfg);
      std::cout << "wrote " << samples.size() << " samples to " << syn_out << "/manifest.jsonl\n";
    } else if (ev->parsed()) {
      const gf::fs::path manifest_path(ev_manifest);
      const auto dataset_dir = manifest_path.parent_path();
      const auto manifest = gf::read_manifest(manifest_path);
      gf::Predictor predictor;
      if (ev_predictor == "oracle") {
        predictor = gf::oracle_predictor(dataset_dir);
      } else if (ev_predictor == "zero") {
        predictor = gf::zero_predictor();
      } else {
        if (ev_flow_dir.empty()) throw gf::Error(gf::ErrorKind::invalid_argument, "--predictor flows needs --flow-dir");
        predictor = gf::flow_dir_predictor(ev_flow_dir);
      }
      gf::EvalOptions opt;
      opt.runs = ev_runs;
      opt.workers = ev_workers;
      opt.method = ev_method.empty() ? ev_predictor : ev_method;
      const auto report = gf::evaluate(manifest, dataset_dir, predictor, opt);
      if (ev_out.empty())
        std::cout << gf::report_to_json(report).dump(2) << "\n";
      else
        gf::write_report_json(ev_out, report);
      if (!ev_csv.empty()) gf::detail::write_text(ev_csv, gf::report_to_csv(report));
    } else if (tv->parsed()) {
      const auto schedule = gf::make_schedule(tv_steps, tv_b0, tv_b1);
      gf::write_testvectors(tv_out, gf::make_testvectors(schedule, tv_seed));
    }
  } catch (const gf::Error& e) {
    return report_error(gf::to_string(e.kind()), exit_code(e.kind()), e.what());
  } catch (const std::exception& e) {
    return report_error("internal", 1, e.what());
  }
  return 0;
}
