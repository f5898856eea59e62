#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "odis/forward.hpp"
#include "odis/io.hpp"
#include "odis/metrics.hpp"
#include "odis/noise.hpp"
#include "odis/recon.hpp"
#include "odis/simulation.hpp"

namespace odis {

// ---------------------------------------------------------------------------
// RunConfig

struct SceneSpec {
  std::string name;
  std::optional<SceneKind> kind;           // synthetic scene, or
  std::optional<std::filesystem::path> file;  // a cube file
  Shape dims{64, 64, 8};
  std::uint64_t seed = 0;

  HsiCube load() const { return file ? read_cube(*file) : synth_cube(*kind, dims, seed); }
};

struct RunConfig {
  std::vector<SceneSpec> scenes;
  std::vector<SystemKind> systems{SystemKind::odis, SystemKind::sd_cassi_dc};
  std::size_t step = 1;
  double mask_transmittance = 0.5;
  std::uint64_t mask_seed = 2024;
  std::vector<double> lux{2, 4, 9, 18, 35, 141};
  double exposure_ms = kReferenceExposureMs;
  double read_sigma_e = kDefaultReadSigmaE;
  std::vector<std::uint64_t> seeds{1};
  Schedule schedule = default_schedule(8);
  Prior prior = Prior::tv(1e-3);
  SolverBudget budget{};
  std::vector<std::size_t> ablation_budgets;
  std::size_t threads = 1;
  std::filesystem::path output_dir = "benchmark_out";

  void validate() const {
    if (scenes.empty()) throw Error(Errc::invalid_value, "config lists no scenes");
    if (systems.empty()) throw Error(Errc::invalid_value, "config lists no systems");
    if (lux.empty()) throw Error(Errc::invalid_value, "config lists no lux levels");
    if (seeds.empty()) throw Error(Errc::invalid_value, "config lists no seeds");
    if (step < 1) throw Error(Errc::invalid_value, "dispersion step must be >= 1");
    if (!(mask_transmittance > 0.0 && mask_transmittance < 1.0))
      throw Error(Errc::invalid_value, "mask transmittance must lie in (0, 1)");
    for (double l : lux) lux_to_shot_bits(l * exposure_ms / kReferenceExposureMs);
    if (!(exposure_ms > 0.0)) throw Error(Errc::invalid_value, "exposure must be positive");
    if (!(read_sigma_e >= 0.0)) throw Error(Errc::invalid_value, "read noise sigma must be >= 0");
    if (budget.iterations < 1) throw Error(Errc::invalid_value, "PCG budget must be >= 1");
    if (!(budget.tolerance > 0.0)) throw Error(Errc::invalid_value, "PCG tolerance must be positive");
    for (auto b : ablation_budgets)
      if (b < 1) throw Error(Errc::invalid_value, "ablation budgets must be >= 1");
    prior.validate();
    for (const auto& s : scenes) {
      if (s.file && !std::filesystem::exists(*s.file))
        throw Error(Errc::io, "scene file '" + s.file->string() + "' does not exist");
      if (!s.file && (s.dims.height == 0 || s.dims.width == 0 || s.dims.channels == 0))
        throw Error(Errc::invalid_value, "scene '" + s.name + "' has a zero dimension");
    }
  }
};

namespace detail {

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline Shape parse_dims(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    Shape d;
    char x1 = 0, x2 = 0;
    std::istringstream is(s);
    if (!(is >> d.height >> x1 >> d.width >> x2 >> d.channels) || x1 != 'x' || x2 != 'x' || !is.eof())
      throw Error(Errc::malformed, "dims '" + s + "' must look like HxWxC");
    if (d.size() == 0) throw Error(Errc::invalid_value, "dims '" + s + "' must all be positive");
    return d;
  }
  const auto v = j.get<std::vector<std::size_t>>();
  if (v.size() != 3) throw Error(Errc::malformed, "dims must have three entries");
  if (v[0] * v[1] * v[2] == 0) throw Error(Errc::invalid_value, "dims must all be positive");
  return {v[0], v[1], v[2]};
}

}  // namespace detail

inline Shape parse_dims(const std::string& s) { return detail::parse_dims(nlohmann::json(s)); }

inline PaddingPolicy parse_padding(const std::string& s) {
  if (s == "fast") return PaddingPolicy::fast;
  if (s == "exact") return PaddingPolicy::exact;
  throw Error(Errc::unsupported, "unknown padding policy '" + s + "'");
}

inline Prior parse_prior(const nlohmann::json& j) {
  const auto kind = detail::get_or<std::string>(j, "kind", "tv");
  if (kind == "identity") return Prior::identity();
  if (kind == "tv")
    return Prior::tv(detail::get_or(j, "weight", 1e-3), detail::get_or<std::size_t>(j, "iterations", 30));
  if (kind == "guided_filter")
    return Prior::guided(detail::get_or<std::size_t>(j, "radius", 2), detail::get_or(j, "epsilon", 1e-3));
  throw Error(Errc::unsupported, "unknown prior kind '" + kind + "'");
}

inline Schedule parse_schedule(const nlohmann::json& j) {
  if (j.contains("rho")) {
    const auto rho = j.at("rho").get<std::vector<double>>();
    std::vector<double> lambda;
    if (j.contains("lambda") && j.at("lambda").is_array())
      lambda = j.at("lambda").get<std::vector<double>>();
    else
      lambda.assign(rho.size(), detail::get_or(j, "lambda", 1.0));
    return Schedule(rho, lambda);
  }
  return geometric_schedule(detail::get_or<std::size_t>(j, "stages", 8),
                            detail::get_or(j, "rho_start", kDefaultRhoStart),
                            detail::get_or(j, "rho_end", kDefaultRhoEnd), detail::get_or(j, "lambda", 1.0));
}

/// Relative paths (scene files, output_dir) resolve against `base_dir`.
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  RunConfig cfg;
  try {
    if (!j.is_object()) throw Error(Errc::malformed, "run config must be a JSON object");
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    if (j.contains("scenes")) {
      for (const auto& s : j.at("scenes")) {
        SceneSpec spec;
        if (s.contains("file")) {
          spec.file = resolve(s.at("file").get<std::string>());
          spec.name = detail::get_or<std::string>(s, "name", spec.file->stem().string());
        } else {
          spec.kind = parse_scene_kind(detail::get_or<std::string>(s, "kind", "smooth_gradient"));
          if (s.contains("dims")) spec.dims = detail::parse_dims(s.at("dims"));
          spec.seed = detail::get_or<std::uint64_t>(s, "seed", 0);
          spec.name = detail::get_or<std::string>(s, "name", to_string(*spec.kind));
        }
        cfg.scenes.push_back(std::move(spec));
      }
    } else {
      cfg.scenes.push_back({"smooth_gradient", SceneKind::smooth_gradient, std::nullopt, {64, 64, 8}, 0});
    }
    if (j.contains("systems")) {
      cfg.systems.clear();
      for (const auto& s : j.at("systems")) cfg.systems.push_back(parse_system_kind(s.get<std::string>()));
    }
    cfg.step = detail::get_or<std::size_t>(j, "dispersion_step", cfg.step);
    if (j.contains("mask")) {
      cfg.mask_transmittance = detail::get_or(j.at("mask"), "transmittance", cfg.mask_transmittance);
      cfg.mask_seed = detail::get_or(j.at("mask"), "seed", cfg.mask_seed);
    }
    if (j.contains("illumination")) {
      const auto& il = j.at("illumination");
      cfg.lux = detail::get_or(il, "lux", cfg.lux);
      cfg.exposure_ms = detail::get_or(il, "exposure_ms", cfg.exposure_ms);
      cfg.read_sigma_e = detail::get_or(il, "read_sigma_e", cfg.read_sigma_e);
    }
    cfg.seeds = detail::get_or(j, "seeds", cfg.seeds);
    if (j.contains("schedule")) cfg.schedule = parse_schedule(j.at("schedule"));
    if (j.contains("prior")) cfg.prior = parse_prior(j.at("prior"));
    if (j.contains("pcg")) {
      const auto& p = j.at("pcg");
      cfg.budget.iterations = detail::get_or(p, "iterations", cfg.budget.iterations);
      cfg.budget.tolerance = detail::get_or(p, "tolerance", cfg.budget.tolerance);
      if (p.contains("padding")) cfg.budget.padding = parse_padding(p.at("padding").get<std::string>());
    }
    if (j.contains("ablation"))
      cfg.ablation_budgets = detail::get_or(j.at("ablation"), "budgets", cfg.ablation_budgets);
    cfg.threads = detail::get_or<std::size_t>(j, "threads", cfg.threads);
    if (j.contains("output_dir")) cfg.output_dir = resolve(j.at("output_dir").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed, std::string("run config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed, "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Sweep

struct BenchmarkRow {
  std::string system;
  std::string scene;
  double lux = 0.0;
  int shot_bits = 0;
  std::uint64_t seed = 0;
  double snr_coded_db = 0.0;
  double snr_pan_db = std::nan("");  // NaN when the system has no PAN arm
  double psnr_db = 0.0;
  double ssim = 0.0;
  double sam_deg = 0.0;
  double runtime_ms = 0.0;
};

inline constexpr const char* kBenchmarkHeader =
    "system,scene,lux,shot_bits,seed,snr_coded_db,snr_pan_db,psnr_db,ssim,sam_deg,runtime_ms";

inline std::string to_csv(const BenchmarkRow& r) {
  return r.system + ',' + r.scene + ',' + csv_number(r.lux) + ',' + std::to_string(r.shot_bits) + ',' +
         std::to_string(r.seed) + ',' + csv_number(r.snr_coded_db) + ',' + csv_number(r.snr_pan_db) + ',' +
         csv_number(r.psnr_db) + ',' + csv_number(r.ssim) + ',' + csv_number(r.sam_deg) + ',' +
         csv_number(r.runtime_ms);
}

struct SweepTask {
  std::size_t scene = 0;
  SystemKind system = SystemKind::odis;
  double lux = 0.0;
  std::uint64_t seed = 0;
};

/// Row order: scene, system, lux, seed (outer to inner), as listed in the config.
inline std::vector<SweepTask> sweep_tasks(const RunConfig& cfg) {
  std::vector<SweepTask> tasks;
  for (std::size_t s = 0; s < cfg.scenes.size(); ++s)
    for (auto sys : cfg.systems)
      for (double l : cfg.lux)
        for (auto seed : cfg.seeds) tasks.push_back({s, sys, l, seed});
  return tasks;
}

struct PreparedScene {
  std::string name;
  HsiCube cube;
  double full_scale = 1.0;
};

inline std::vector<PreparedScene> prepare_scenes(const RunConfig& cfg) {
  std::vector<PreparedScene> out;
  for (const auto& s : cfg.scenes) {
    PreparedScene p{s.name, s.load(), 1.0};
    p.full_scale = photometric_full_scale(p.cube, cfg.step);
    out.push_back(std::move(p));
  }
  return out;
}

inline BenchmarkRow run_benchmark_row(const RunConfig& cfg, const PreparedScene& scene, const SweepTask& t) {
  const auto start = std::chrono::steady_clock::now();
  const SystemSpec sys =
      make_system(t.system, scene.cube.shape(), cfg.step, cfg.mask_transmittance, cfg.mask_seed);
  const auto illum = IlluminationModel::from_lux(t.lux, t.seed, cfg.exposure_ms, cfg.read_sigma_e);
  const Capture cap = simulate_capture(scene.cube, sys, illum, scene.full_scale);
  const SystemModel model(sys, scene.cube.shape());
  const auto rec = reconstruct_system(model, cap.coded_unit_gain(), cap.pan_unit_gain(), cfg.schedule,
                                      cfg.prior, cfg.budget);
  const auto report = evaluate(scene.cube.volume(), rec.estimate);
  BenchmarkRow row;
  row.system = to_string(t.system);
  row.scene = scene.name;
  row.lux = t.lux;
  row.shot_bits = illum.shot_bits;
  row.seed = t.seed;
  row.snr_coded_db = cap.snr_coded_db;
  if (cap.snr_pan_db) row.snr_pan_db = *cap.snr_pan_db;
  row.psnr_db = report.psnr_db;
  row.ssim = report.ssim;
  row.sam_deg = report.sam_degrees;
  row.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return row;
}

/// Runs `count` jobs on `threads` workers and hands results to `sink` in index
/// order as soon as each prefix is complete. The first job error is rethrown
/// after the rows before it have been delivered.
template <class Job, class Sink>
void ordered_parallel(std::size_t count, std::size_t threads, Job&& job, Sink&& sink) {
  using Result = std::invoke_result_t<Job&, std::size_t>;
  std::vector<std::optional<Result>> done(count);
  std::vector<std::exception_ptr> errors(count);
  std::mutex m;
  std::size_t next_out = 0;
  std::atomic<std::size_t> next_job{0};
  std::atomic<bool> failed{false};

  auto flush = [&] {  // caller holds m
    while (next_out < count && (done[next_out] || errors[next_out])) {
      if (errors[next_out]) return;
      sink(*done[next_out]);
      done[next_out].reset();
      ++next_out;
    }
  };
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next_job.fetch_add(1);
      if (i >= count || failed.load()) return;
      try {
        auto r = job(i);
        std::lock_guard lock(m);
        done[i] = std::move(r);
        flush();
      } catch (...) {
        std::lock_guard lock(m);
        errors[i] = std::current_exception();
        failed = true;
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, count));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  std::lock_guard lock(m);
  flush();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct SummaryRow {
  std::string system;
  double lux = 0.0;
  int shot_bits = 0;
  std::size_t rows = 0;
  double snr_coded_db = 0.0;
  double snr_pan_db = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double sam_deg = 0.0;
};

inline constexpr const char* kSummaryHeader =
    "system,lux,shot_bits,rows,mean_snr_coded_db,mean_snr_pan_db,mean_psnr_db,mean_ssim,mean_sam_deg";

/// Means per (system, lux) over scenes and seeds, in first-appearance order.
inline std::vector<SummaryRow> summarize(const std::vector<BenchmarkRow>& rows) {
  std::vector<SummaryRow> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const SummaryRow& s) { return s.system == r.system && s.lux == r.lux; });
    if (it == out.end()) {
      out.push_back({r.system, r.lux, r.shot_bits});
      it = std::prev(out.end());
    }
    ++it->rows;
    it->snr_coded_db += r.snr_coded_db;
    it->snr_pan_db += r.snr_pan_db;
    it->psnr_db += r.psnr_db;
    it->ssim += r.ssim;
    it->sam_deg += r.sam_deg;
  }
  for (auto& s : out) {
    const double n = static_cast<double>(s.rows);
    s.snr_coded_db /= n;
    s.snr_pan_db /= n;
    s.psnr_db /= n;
    s.ssim /= n;
    s.sam_deg /= n;
  }
  return out;
}

inline std::string to_csv(const SummaryRow& s) {
  return s.system + ',' + csv_number(s.lux) + ',' + std::to_string(s.shot_bits) + ',' +
         std::to_string(s.rows) + ',' + csv_number(s.snr_coded_db) + ',' + csv_number(s.snr_pan_db) + ',' +
         csv_number(s.psnr_db) + ',' + csv_number(s.ssim) + ',' + csv_number(s.sam_deg);
}

// ---------------------------------------------------------------------------
// Line plots (8-bit RGB, no text; series colors are fixed per system).

struct PlotSeries {
  std::array<std::uint8_t, 3> color{};
  std::vector<double> x;
  std::vector<double> y;
};

inline std::array<std::uint8_t, 3> system_color(const std::string& system) {
  if (system == "ODIS") return {200, 30, 30};
  if (system == "SDCASSI") return {30, 90, 200};
  if (system == "SDCASSI_DC") return {30, 150, 60};
  if (system == "DDCASSI_DC") return {150, 60, 170};
  if (system == "PMVIS_DC") return {230, 140, 20};
  return {80, 80, 80};
}

inline void write_line_plot(const std::filesystem::path& path, const std::vector<PlotSeries>& series,
                            std::size_t width = 640, std::size_t height = 400) {
  std::vector<std::uint8_t> px(width * height * 3, 255);
  auto put = [&](long x, long y, const std::array<std::uint8_t, 3>& c) {
    if (x < 0 || y < 0 || x >= static_cast<long>(width) || y >= static_cast<long>(height)) return;
    std::copy(c.begin(), c.end(), px.begin() + static_cast<std::ptrdiff_t>((y * width + x) * 3));
  };
  auto line = [&](long x0, long y0, long x1, long y1, const std::array<std::uint8_t, 3>& c, int thick) {
    const long steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
    for (long s = 0; s <= steps; ++s) {
      const double t = static_cast<double>(s) / static_cast<double>(steps);
      const long x = std::lround(x0 + t * (x1 - x0)), y = std::lround(y0 + t * (y1 - y0));
      for (int dx = 0; dx < thick; ++dx)
        for (int dy = 0; dy < thick; ++dy) put(x + dx, y + dy, c);
    }
  };

  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (!(xmin < xmax)) { xmin -= 1; xmax += 1; }
  if (!(ymin < ymax)) { ymin -= 1; ymax += 1; }
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;

  const long left = 50, right = static_cast<long>(width) - 20, top = 20, bottom = static_cast<long>(height) - 40;
  auto sx = [&](double x) { return left + std::lround((x - xmin) / (xmax - xmin) * (right - left)); };
  auto sy = [&](double y) { return bottom - std::lround((y - ymin) / (ymax - ymin) * (bottom - top)); };
  const std::array<std::uint8_t, 3> grid{225, 225, 225}, axis{40, 40, 40};
  for (int k = 0; k <= 4; ++k) {
    const long y = top + (bottom - top) * k / 4;
    line(left, y, right, y, grid, 1);
  }
  line(left, bottom, right, bottom, axis, 2);
  line(left, top, left, bottom, axis, 2);

  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      const long x = sx(s.x[i]), y = sy(s.y[i]);
      line(x - 3, y - 3, x + 3, y - 3, s.color, 1);
      for (long d = -3; d <= 3; ++d) line(x - 3, y + d, x + 3, y + d, s.color, 1);
      if (i + 1 < s.x.size() && std::isfinite(s.y[i + 1]))
        line(x, y, sx(s.x[i + 1]), sy(s.y[i + 1]), s.color, 2);
    }
  }
  write_png_rgb(path, height, width, px);
}

/// One series per system; x = log2(lux).
inline void plot_metric_vs_lux(const std::vector<SummaryRow>& summary, double SummaryRow::*metric,
                               const std::filesystem::path& path) {
  std::vector<std::string> systems;
  for (const auto& s : summary)
    if (std::find(systems.begin(), systems.end(), s.system) == systems.end()) systems.push_back(s.system);
  std::vector<PlotSeries> series;
  for (const auto& name : systems) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& s : summary)
      if (s.system == name) pts.emplace_back(std::log2(s.lux), s.*metric);
    std::sort(pts.begin(), pts.end());
    PlotSeries p{system_color(name), {}, {}};
    for (auto [x, y] : pts) {
      p.x.push_back(x);
      p.y.push_back(y);
    }
    series.push_back(std::move(p));
  }
  write_line_plot(path, series);
}

// ---------------------------------------------------------------------------
// PCG-budget ablation on noiseless ODIS measurements.

struct AblationRow {
  std::string scene;
  std::size_t pcg_iterations = 0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double sam_deg = 0.0;
  double final_relative_residual = 0.0;
  double runtime_ms = 0.0;
};

inline constexpr const char* kAblationHeader =
    "scene,pcg_iterations,psnr_db,ssim,sam_deg,final_relative_residual,runtime_ms";

inline std::string to_csv(const AblationRow& r) {
  return r.scene + ',' + std::to_string(r.pcg_iterations) + ',' + csv_number(r.psnr_db) + ',' +
         csv_number(r.ssim) + ',' + csv_number(r.sam_deg) + ',' + csv_number(r.final_relative_residual) +
         ',' + csv_number(r.runtime_ms);
}

/// The tolerance is ignored so every stage spends exactly the budget.
inline AblationRow run_ablation_row(const RunConfig& cfg, const PreparedScene& scene, std::size_t budget) {
  const auto start = std::chrono::steady_clock::now();
  const auto spec = OdisSpec::for_shape(scene.cube.shape(), cfg.step);
  const auto m = joint_forward(scene.cube, spec);
  SolverBudget b = cfg.budget;
  b.iterations = budget;
  b.tolerance = 1e-300;
  const auto rec = reconstruct(*m.coded, *m.pan, spec, cfg.schedule, cfg.prior, b);
  const auto report = evaluate(scene.cube.volume(), rec.estimate);
  AblationRow row{scene.name, budget, report.psnr_db, report.ssim, report.sam_degrees,
                  rec.diagnostics.back().solve.relative_residual, 0.0};
  row.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return row;
}

struct BenchmarkOutputs {
  std::vector<BenchmarkRow> rows;
  std::vector<SummaryRow> summary;
  std::vector<AblationRow> ablation;
};

inline std::ofstream open_csv(const std::filesystem::path& path, const char* header) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open '" + path.string() + "' for writing");
  out << header << '\n';
  out.flush();
  return out;
}

/// Writes benchmark.csv (flushed row by row), summary.csv, psnr_vs_lux.png,
/// snr_vs_lux.png and, when budgets are configured, ablation.csv into
/// cfg.output_dir.
inline BenchmarkOutputs benchmark_sweep(const RunConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.output_dir);
  const auto scenes = prepare_scenes(cfg);
  BenchmarkOutputs out;

  const auto tasks = sweep_tasks(cfg);
  {
    auto csv = open_csv(cfg.output_dir / "benchmark.csv", kBenchmarkHeader);
    ordered_parallel(
        tasks.size(), cfg.threads,
        [&](std::size_t i) { return run_benchmark_row(cfg, scenes[tasks[i].scene], tasks[i]); },
        [&](const BenchmarkRow& r) {
          csv << to_csv(r) << '\n';
          csv.flush();
          out.rows.push_back(r);
        });
  }

  out.summary = summarize(out.rows);
  {
    auto csv = open_csv(cfg.output_dir / "summary.csv", kSummaryHeader);
    for (const auto& s : out.summary) csv << to_csv(s) << '\n';
  }
  plot_metric_vs_lux(out.summary, &SummaryRow::psnr_db, cfg.output_dir / "psnr_vs_lux.png");
  plot_metric_vs_lux(out.summary, &SummaryRow::snr_coded_db, cfg.output_dir / "snr_vs_lux.png");

  if (!cfg.ablation_budgets.empty()) {
    auto csv = open_csv(cfg.output_dir / "ablation.csv", kAblationHeader);
    const std::size_t per_scene = cfg.ablation_budgets.size();
    ordered_parallel(
        scenes.size() * per_scene, cfg.threads,
        [&](std::size_t i) { return run_ablation_row(cfg, scenes[i / per_scene], cfg.ablation_budgets[i % per_scene]); },
        [&](const AblationRow& r) {
          csv << to_csv(r) << '\n';
          csv.flush();
          out.ablation.push_back(r);
        });
  }
  return out;
}

}  // namespace odis
