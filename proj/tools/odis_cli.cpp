// odis: command-line front end for the ODIS simulation and reconstruction
// library. Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "odis/odis.hpp"
#include "odis/oracle.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw odis::Error(odis::Errc::io, "cannot open '" + path.string() + "' for writing");
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw odis::Error(odis::Errc::io, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw odis::Error(odis::Errc::malformed, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

std::string metrics_csv(const odis::MetricReport& r) {
  std::ostringstream os;
  os << "metric,value\n";
  os << "psnr_db," << odis::csv_number(r.psnr_db) << '\n';
  os << "ssim," << odis::csv_number(r.ssim) << '\n';
  os << "sam_deg," << odis::csv_number(r.sam_degrees) << '\n';
  os << "sam_excluded_pixels," << r.sam_excluded_pixels << '\n';
  for (std::size_t c = 0; c < r.band_psnr_db.size(); ++c)
    os << "psnr_band_" << c << "_db," << odis::csv_number(r.band_psnr_db[c]) << '\n';
  return os.str();
}

std::string diagnostics_csv(const std::vector<odis::StageDiagnostics>& diags) {
  std::ostringstream os;
  os << "stage,rho,lambda,sigma,pcg_iterations,pcg_relative_residual,pcg_converged,objective,residual_norm\n";
  for (const auto& d : diags)
    os << d.stage << ',' << odis::csv_number(d.rho) << ',' << odis::csv_number(d.lambda) << ','
       << odis::csv_number(d.sigma) << ',' << d.solve.iterations << ','
       << odis::csv_number(d.solve.relative_residual) << ',' << (d.solve.converged ? 1 : 0) << ','
       << odis::csv_number(d.objective) << ',' << odis::csv_number(d.residual_norm) << '\n';
  return os.str();
}

std::vector<std::size_t> parse_budgets(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v == 0)
      throw CLI::ValidationError("--ablate-pcg", "'" + item + "' is not a positive integer");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--ablate-pcg", "needs at least one budget");
  return out;
}

struct SynthArgs {
  std::string kind = "smooth_gradient", dims = "64x64x8", out;
  std::uint64_t seed = 0;
};

struct SimulateArgs {
  std::string cube, system = "ODIS", out_dir = ".";
  std::size_t step = 1;
  double lux = 141, exposure_ms = odis::kReferenceExposureMs, read_sigma = odis::kDefaultReadSigmaE;
  double transmittance = 0.5;
  std::uint64_t seed = 0, mask_seed = 2024;
};

struct ReconstructArgs {
  std::string measurements, config, out, reference, metrics, diagnostics;
};

struct MetricsArgs {
  std::string reference, estimate, out;
};

struct BenchmarkArgs {
  std::string config, ablate, out_dir;
  std::size_t threads = 0;
};

struct RenderArgs {
  std::string cube, out, response;
  std::size_t band = 0;
  int bits = 8;
  bool rgb = false;
};

struct SpectrumArgs {
  std::string cube, out;
  std::size_t row = 0, col = 0;
};

int run_synth(const SynthArgs& a) {
  const auto cube = odis::synth_cube(odis::parse_scene_kind(a.kind), odis::parse_dims(a.dims), a.seed);
  odis::write_cube(cube, a.out);
  std::cout << "wrote " << a.out << " (" << odis::to_string(cube.shape()) << ")\n";
  return 0;
}

int run_simulate(const SimulateArgs& a) {
  const auto cube = odis::read_cube(a.cube);
  const auto kind = odis::parse_system_kind(a.system);
  const auto sys = odis::make_system(kind, cube.shape(), a.step, a.transmittance, a.mask_seed);
  const auto illum = odis::IlluminationModel::from_lux(a.lux, a.seed, a.exposure_ms, a.read_sigma);
  const double full_scale = odis::photometric_full_scale(cube, a.step);
  const auto cap = odis::simulate_capture(cube, sys, illum, full_scale);

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  odis::write_cube(odis::image_as_cube(*cap.noisy.coded), dir / "coded.cube");
  json manifest{{"system", a.system},
                {"dispersion_step", a.step},
                {"height", cube.height()},
                {"width", cube.width()},
                {"channels", cube.channels()},
                {"wavelengths_nm", cube.wavelengths()},
                {"mask", {{"transmittance", a.transmittance}, {"seed", a.mask_seed}}},
                {"lux", a.lux},
                {"exposure_ms", a.exposure_ms},
                {"read_sigma_e", a.read_sigma},
                {"shot_bits", illum.shot_bits},
                {"seed", a.seed},
                {"full_scale", full_scale},
                {"coded_scale", cap.noisy.coded_scale},
                {"coded_file", "coded.cube"},
                {"snr_coded_db", cap.snr_coded_db},
                {"source_cube", fs::absolute(a.cube).string()}};
  if (cap.noisy.pan) {
    odis::write_cube(odis::image_as_cube(*cap.noisy.pan), dir / "pan.cube");
    manifest["pan_scale"] = cap.noisy.pan_scale;
    manifest["pan_file"] = "pan.cube";
    manifest["snr_pan_db"] = *cap.snr_pan_db;
  }
  write_text(dir / "measurements.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << (dir / "measurements.json").string() << " (coded SNR "
            << cap.snr_coded_db << " dB)\n";
  return 0;
}

int run_reconstruct(const ReconstructArgs& a) {
  const fs::path manifest_path(a.measurements);
  const json m = read_json(manifest_path);
  const fs::path base = manifest_path.parent_path();
  odis::RunConfig cfg;
  if (!a.config.empty()) cfg = odis::load_run_config(a.config);

  odis::HsiCube ref;
  bool have_ref = false;
  std::size_t H = 0, W = 0, C = 0, step = 1;
  std::vector<double> wavelengths;
  odis::SystemKind kind{};
  double full_scale = 1, coded_scale = 1, pan_scale = 1, transmittance = 0.5;
  std::uint64_t mask_seed = 0;
  std::string coded_file, pan_file, source;
  try {
    kind = odis::parse_system_kind(m.at("system").get<std::string>());
    step = m.at("dispersion_step").get<std::size_t>();
    H = m.at("height").get<std::size_t>();
    W = m.at("width").get<std::size_t>();
    C = m.at("channels").get<std::size_t>();
    wavelengths = m.at("wavelengths_nm").get<std::vector<double>>();
    transmittance = m.at("mask").at("transmittance").get<double>();
    mask_seed = m.at("mask").at("seed").get<std::uint64_t>();
    full_scale = m.at("full_scale").get<double>();
    coded_scale = m.at("coded_scale").get<double>();
    coded_file = m.at("coded_file").get<std::string>();
    if (m.contains("pan_file")) {
      pan_file = m.at("pan_file").get<std::string>();
      pan_scale = m.at("pan_scale").get<double>();
    }
    source = m.value("source_cube", "");
  } catch (const json::exception& e) {
    throw odis::Error(odis::Errc::malformed, std::string("measurement manifest: ") + e.what());
  }

  const odis::Shape shape{H, W, C};
  const auto sys = odis::make_system(kind, shape, step, transmittance, mask_seed);
  const odis::SystemModel model(sys, shape);
  auto coded = odis::cube_as_image(odis::read_cube(base / coded_file));
  for (auto& v : coded.data()) v *= full_scale / coded_scale;
  std::optional<odis::Image> pan;
  if (!pan_file.empty()) {
    pan = odis::cube_as_image(odis::read_cube(base / pan_file));
    for (auto& v : pan->data()) v *= full_scale / pan_scale;
  }
  const auto rec = odis::reconstruct_system(model, coded, pan, cfg.schedule, cfg.prior, cfg.budget);
  odis::write_cube(odis::make_cube(rec.estimate, wavelengths), a.out);
  std::cout << "wrote " << a.out << '\n';

  const fs::path out(a.out);
  const fs::path diag_path = a.diagnostics.empty() ? fs::path(out.string() + ".diagnostics.csv")
                                                   : fs::path(a.diagnostics);
  write_text(diag_path, diagnostics_csv(rec.diagnostics));

  const std::string ref_path = !a.reference.empty() ? a.reference : source;
  if (!ref_path.empty() && fs::exists(ref_path)) {
    ref = odis::read_cube(ref_path);
    have_ref = true;
  }
  if (have_ref) {
    const auto report = odis::evaluate(ref.volume(), rec.estimate);
    const fs::path metrics_path =
        a.metrics.empty() ? fs::path(out.string() + ".metrics.csv") : fs::path(a.metrics);
    write_text(metrics_path, metrics_csv(report));
    std::cout << "PSNR " << report.psnr_db << " dB, SSIM " << report.ssim << ", SAM " << report.sam_degrees
              << " deg\n";
  } else {
    std::cout << "no reference cube; metrics skipped\n";
  }
  return 0;
}

int run_metrics(const MetricsArgs& a) {
  const auto ref = odis::read_cube(a.reference);
  const auto est = odis::read_cube(a.estimate);
  const auto csv = metrics_csv(odis::evaluate(ref.volume(), est.volume()));
  if (a.out.empty())
    std::cout << csv;
  else
    write_text(a.out, csv);
  return 0;
}

int run_benchmark(const BenchmarkArgs& a) {
  auto cfg = odis::load_run_config(a.config);
  if (!a.ablate.empty()) cfg.ablation_budgets = parse_budgets(a.ablate);
  if (a.threads > 0) cfg.threads = a.threads;
  if (!a.out_dir.empty()) cfg.output_dir = a.out_dir;
  const auto result = odis::benchmark_sweep(cfg);
  std::cout << odis::kSummaryHeader << '\n';
  for (const auto& s : result.summary) std::cout << odis::to_csv(s) << '\n';
  if (!result.ablation.empty()) {
    std::cout << odis::kAblationHeader << '\n';
    for (const auto& r : result.ablation) std::cout << odis::to_csv(r) << '\n';
  }
  std::cout << "outputs in " << cfg.output_dir.string() << '\n';
  return 0;
}

int run_oracle() {
  const auto checks = odis::oracle::run_all();
  std::size_t failed = 0;
  for (const auto& c : checks) {
    std::printf("%s  %-70s err=%.3e tol=%.1e\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.error,
                c.tolerance);
    failed += c.passed ? 0 : 1;
  }
  std::printf("%zu/%zu checks passed\n", checks.size() - failed, checks.size());
  return failed == 0 ? 0 : kExitRuntime;
}

int run_render(const RenderArgs& a) {
  const auto cube = odis::read_cube(a.cube);
  if (a.rgb) {
    std::optional<odis::ResponseMatrix> response;
    if (!a.response.empty()) response = odis::read_response_csv(a.response, cube.channels());
    odis::render_pseudo_rgb(cube, response, a.out);
  } else {
    odis::render_band_png(cube, a.band, a.out, a.bits);
  }
  return 0;
}

int run_spectrum(const SpectrumArgs& a) {
  odis::export_spectrum_csv(odis::read_cube(a.cube), a.row, a.col, a.out);
  return 0;
}

constexpr const char* kCsvColumns =
    "CSV columns:\n"
    "  benchmark.csv: system,scene,lux,shot_bits,seed,snr_coded_db,snr_pan_db,psnr_db,ssim,sam_deg,runtime_ms\n"
    "  summary.csv:   system,lux,shot_bits,rows,mean_snr_coded_db,mean_snr_pan_db,mean_psnr_db,mean_ssim,mean_sam_deg\n"
    "  ablation.csv:  scene,pcg_iterations,psnr_db,ssim,sam_deg,final_relative_residual,runtime_ms\n"
    "  metrics:       metric,value (psnr_db, ssim, sam_deg, sam_excluded_pixels, psnr_band_<c>_db)\n"
    "  diagnostics:   stage,rho,lambda,sigma,pcg_iterations,pcg_relative_residual,pcg_converged,objective,residual_norm\n"
    "  spectrum:      wavelength_nm,value,value_normalized\n"
    "Empty fields mean not applicable (snr_pan_db for systems without a PAN arm).";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ODIS hyperspectral simulation, reconstruction and benchmarking"};
  app.footer(kCsvColumns);
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic cube file");
  s->add_option("--kind", synth.kind, "gaussian_blobs | smooth_gradient | checker_spectra")->capture_default_str();
  s->add_option("--dims", synth.dims, "HxWxC")->capture_default_str();
  s->add_option("--seed", synth.seed)->capture_default_str();
  s->add_option("--out", synth.out, "output cube file")->required();

  SimulateArgs sim;
  auto* m = app.add_subcommand("simulate", "cube -> noisy measurement cube files + measurements.json");
  m->add_option("--cube", sim.cube)->required()->check(CLI::ExistingFile);
  m->add_option("--system", sim.system, "ODIS | SDCASSI | SDCASSI_DC | DDCASSI_DC | PMVIS_DC")->capture_default_str();
  m->add_option("--step", sim.step, "dispersion step d (pixels per channel)")->capture_default_str();
  m->add_option("--lux", sim.lux)->capture_default_str();
  m->add_option("--exposure-ms", sim.exposure_ms)->capture_default_str();
  m->add_option("--read-sigma", sim.read_sigma, "read noise in electrons")->capture_default_str();
  m->add_option("--transmittance", sim.transmittance, "CASSI mask open fraction")->capture_default_str();
  m->add_option("--mask-seed", sim.mask_seed)->capture_default_str();
  m->add_option("--seed", sim.seed, "noise seed")->capture_default_str();
  m->add_option("--out-dir", sim.out_dir)->capture_default_str();

  ReconstructArgs rec;
  auto* r = app.add_subcommand("reconstruct", "measurements.json + config -> cube, metrics and diagnostics CSV");
  r->add_option("--measurements", rec.measurements, "manifest written by simulate")->required()->check(CLI::ExistingFile);
  r->add_option("--config", rec.config, "RunConfig JSON (schedule, prior, pcg)")->check(CLI::ExistingFile);
  r->add_option("--out", rec.out, "output cube file")->required();
  r->add_option("--reference", rec.reference, "ground-truth cube (default: source recorded by simulate)");
  r->add_option("--metrics", rec.metrics, "metrics CSV path (default: <out>.metrics.csv)");
  r->add_option("--diagnostics", rec.diagnostics, "per-stage CSV path (default: <out>.diagnostics.csv)");

  MetricsArgs met;
  auto* t = app.add_subcommand("metrics", "compare two cubes; prints or writes a metrics CSV");
  t->add_option("--reference", met.reference)->required()->check(CLI::ExistingFile);
  t->add_option("--estimate", met.estimate)->required()->check(CLI::ExistingFile);
  t->add_option("--out", met.out, "CSV path (default: stdout)");

  BenchmarkArgs bench;
  auto* b = app.add_subcommand("benchmark", "RunConfig -> benchmark/summary CSV and PSNR/SNR-vs-lux plots");
  b->add_option("--config", bench.config)->required()->check(CLI::ExistingFile);
  b->add_option("--ablate-pcg", bench.ablate, "comma-separated PCG budgets, e.g. 5,10,15,20");
  b->add_option("--threads", bench.threads, "worker threads (default: config value)");
  b->add_option("--out-dir", bench.out_dir, "override output_dir");

  auto* o = app.add_subcommand("oracle", "dense-matrix verification of the operators at tiny sizes");

  RenderArgs ren;
  auto* p = app.add_subcommand("render", "PNG of one band or a pseudo-RGB composite");
  p->add_option("--cube", ren.cube)->required()->check(CLI::ExistingFile);
  p->add_option("--out", ren.out)->required();
  p->add_option("--band", ren.band, "0-based band index")->capture_default_str();
  p->add_option("--bits", ren.bits, "8 or 16")->capture_default_str();
  p->add_flag("--rgb", ren.rgb, "pseudo-RGB instead of a single band");
  p->add_option("--response", ren.response, "3 x C response matrix CSV for --rgb")->check(CLI::ExistingFile);

  SpectrumArgs spec;
  auto* e = app.add_subcommand("spectrum", "export one pixel's spectrum as CSV");
  e->add_option("--cube", spec.cube)->required()->check(CLI::ExistingFile);
  e->add_option("--row", spec.row)->required();
  e->add_option("--col", spec.col)->required();
  e->add_option("--out", spec.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& err) {
    std::cerr << "error: " << err.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*s) return run_synth(synth);
    if (*m) return run_simulate(sim);
    if (*r) return run_reconstruct(rec);
    if (*t) return run_metrics(met);
    if (*b) return run_benchmark(bench);
    if (*o) return run_oracle();
    if (*p) return run_render(ren);
    if (*e) return run_spectrum(spec);
  } catch (const CLI::ValidationError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
