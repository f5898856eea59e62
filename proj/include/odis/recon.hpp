#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "odis/core.hpp"
#include "odis/forward.hpp"
#include "odis/linalg.hpp"

namespace odis {

/// Per-stage ADMM penalties. sigma_k = 1/sqrt(rho_k) is always derived.
class Schedule {
 public:
  Schedule(std::vector<double> rho, std::vector<double> lambda)
      : rho_(std::move(rho)), lambda_(std::move(lambda)) {
    if (rho_.empty()) throw Error(Errc::invalid_value, "schedule needs at least one stage");
    if (rho_.size() != lambda_.size())
      throw Error(Errc::dimension_mismatch, "rho and lambda schedules differ in length");
    for (std::size_t k = 0; k < rho_.size(); ++k) {
      if (!(rho_[k] > 0.0) || !std::isfinite(rho_[k]))
        throw Error(Errc::invalid_value, "rho must be positive at stage " + std::to_string(k));
      if (!(lambda_[k] >= 0.0) || !std::isfinite(lambda_[k]))
        throw Error(Errc::invalid_value, "lambda must be >= 0 at stage " + std::to_string(k));
    }
  }

  std::size_t stages() const noexcept { return rho_.size(); }
  double rho(std::size_t k) const { return rho_.at(k); }
  double lambda(std::size_t k) const { return lambda_.at(k); }
  double sigma(std::size_t k) const { return 1.0 / std::sqrt(rho_.at(k)); }
  const std::vector<double>& rhos() const noexcept { return rho_; }
  const std::vector<double>& lambdas() const noexcept { return lambda_; }

 private:
  std::vector<double> rho_;
  std::vector<double> lambda_;
};

inline constexpr double kDefaultRhoStart = 0.01;
inline constexpr double kDefaultRhoEnd = 1.0;

/// rho geometric from rho_start to rho_end, lambda constant.
inline Schedule geometric_schedule(std::size_t stages, double rho_start, double rho_end,
                                   double lambda) {
  if (stages < 1) throw Error(Errc::invalid_value, "schedule needs K >= 1");
  if (!(rho_start > 0.0) || !(rho_end > 0.0))
    throw Error(Errc::invalid_value, "rho endpoints must be positive");
  std::vector<double> rho(stages);
  for (std::size_t k = 0; k < stages; ++k) {
    const double t = stages == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(stages - 1);
    rho[k] = rho_start * std::pow(rho_end / rho_start, t);
  }
  rho.back() = stages == 1 ? rho_start : rho_end;
  return Schedule(std::move(rho), std::vector<double>(stages, lambda));
}

inline Schedule default_schedule(std::size_t stages) {
  return geometric_schedule(stages, kDefaultRhoStart, kDefaultRhoEnd, 1.0);
}

// ---------------------------------------------------------------------------
// Priors for the z-step.

enum class PriorKind { identity, tv, guided_filter };

struct Prior {
  PriorKind kind = PriorKind::identity;
  double tv_weight = 0.0;  // TV strength = tv_weight * sigma_k^2
  std::size_t tv_iterations = 30;
  std::size_t radius = 2;
  double epsilon = 1e-3;

  static Prior identity() { return {}; }
  static Prior tv(double weight, std::size_t iterations = 30) {
    Prior p{PriorKind::tv, weight, iterations};
    p.validate();
    return p;
  }
  static Prior guided(std::size_t radius, double epsilon) {
    Prior p{PriorKind::guided_filter, 0.0, 1, radius, epsilon};
    p.validate();
    return p;
  }

  void validate() const {
    if (kind == PriorKind::tv) {
      if (tv_iterations < 1) throw Error(Errc::invalid_value, "TV needs at least one inner iteration");
      if (!(tv_weight >= 0.0)) throw Error(Errc::invalid_value, "TV weight must be >= 0");
    }
    if (kind == PriorKind::guided_filter) {
      if (radius < 1) throw Error(Errc::invalid_value, "guided filter radius must be >= 1");
      if (!(epsilon > 0.0)) throw Error(Errc::invalid_value, "guided filter epsilon must be > 0");
    }
  }
};

/// Isotropic ROF denoising, argmin_u 1/2 |u - f|^2 + weight TV(u), by
/// Chambolle's dual projection iteration (step 1/8).
inline void tv_denoise(std::span<const double> f, std::span<double> u, std::size_t height,
                       std::size_t width, double weight, std::size_t iterations) {
  const std::size_t n = height * width;
  if (weight <= 0.0) {
    std::copy(f.begin(), f.end(), u.begin());
    return;
  }
  constexpr double tau = 0.125;
  std::vector<double> px(n, 0.0), py(n, 0.0), div(n, 0.0), g(n);
  auto divergence = [&] {
    for (std::size_t r = 0; r < height; ++r)
      for (std::size_t c = 0; c < width; ++c) {
        const std::size_t i = r * width + c;
        double dx = (r + 1 < height ? px[i] : 0.0) - (r > 0 ? px[i - width] : 0.0);
        double dy = (c + 1 < width ? py[i] : 0.0) - (c > 0 ? py[i - 1] : 0.0);
        div[i] = dx + dy;
      }
  };
  for (std::size_t it = 0; it < iterations; ++it) {
    divergence();
    for (std::size_t i = 0; i < n; ++i) g[i] = div[i] - f[i] / weight;
    for (std::size_t r = 0; r < height; ++r)
      for (std::size_t c = 0; c < width; ++c) {
        const std::size_t i = r * width + c;
        const double gx = r + 1 < height ? g[i + width] - g[i] : 0.0;
        const double gy = c + 1 < width ? g[i + 1] - g[i] : 0.0;
        const double denom = 1.0 + tau * std::sqrt(gx * gx + gy * gy);
        px[i] = (px[i] + tau * gx) / denom;
        py[i] = (py[i] + tau * gy) / denom;
      }
  }
  divergence();
  for (std::size_t i = 0; i < n; ++i) u[i] = f[i] - weight * div[i];
}

namespace detail {

// Mean over the (2r+1)^2 window clipped to the image.
inline std::vector<double> box_mean(std::span<const double> img, std::size_t height,
                                    std::size_t width, std::size_t radius) {
  const std::size_t W1 = width + 1;
  std::vector<double> sat((height + 1) * W1, 0.0);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c)
      sat[(r + 1) * W1 + c + 1] =
          img[r * width + c] + sat[r * W1 + c + 1] + sat[(r + 1) * W1 + c] - sat[r * W1 + c];
  std::vector<double> out(height * width);
  for (std::size_t r = 0; r < height; ++r) {
    const std::size_t r0 = r > radius ? r - radius : 0, r1 = std::min(height, r + radius + 1);
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t c0 = c > radius ? c - radius : 0, c1 = std::min(width, c + radius + 1);
      const double s = sat[r1 * W1 + c1] - sat[r0 * W1 + c1] - sat[r1 * W1 + c0] + sat[r0 * W1 + c0];
      out[r * width + c] = s / static_cast<double>((r1 - r0) * (c1 - c0));
    }
  }
  return out;
}

}  // namespace detail

/// Guided filter of `input` steered by `guide` (same size).
inline void guided_filter(std::span<const double> input, std::span<const double> guide,
                          std::span<double> out, std::size_t height, std::size_t width,
                          std::size_t radius, double epsilon) {
  const std::size_t n = height * width;
  std::vector<double> ii(n), ip(n);
  for (std::size_t i = 0; i < n; ++i) {
    ii[i] = guide[i] * guide[i];
    ip[i] = guide[i] * input[i];
  }
  const auto mean_i = detail::box_mean(guide, height, width, radius);
  const auto mean_p = detail::box_mean(input, height, width, radius);
  const auto corr_i = detail::box_mean(ii, height, width, radius);
  const auto corr_ip = detail::box_mean(ip, height, width, radius);
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double var = std::max(0.0, corr_i[i] - mean_i[i] * mean_i[i]);
    const double cov = corr_ip[i] - mean_i[i] * mean_p[i];
    a[i] = cov / (var + epsilon);
    b[i] = mean_p[i] - a[i] * mean_i[i];
  }
  const auto mean_a = detail::box_mean(a, height, width, radius);
  const auto mean_b = detail::box_mean(b, height, width, radius);
  for (std::size_t i = 0; i < n; ++i) out[i] = mean_a[i] * guide[i] + mean_b[i];
}

/// z = D(v; pan, sigma). The PAN guide is divided by C so epsilon is in
/// per-band intensity units.
inline Volume z_step(const Volume& v, const Prior& prior, double sigma, const Image* y_pan) {
  prior.validate();
  const Shape& s = v.shape();
  switch (prior.kind) {
    case PriorKind::identity: return v;
    case PriorKind::tv: {
      Volume z(s);
      const double weight = prior.tv_weight * sigma * sigma;
      for (std::size_t c = 0; c < s.channels; ++c)
        tv_denoise(v.band(c), z.band(c), s.height, s.width, weight, prior.tv_iterations);
      return z;
    }
    case PriorKind::guided_filter: {
      if (!y_pan || y_pan->height() != s.height || y_pan->width() != s.width)
        throw Error(Errc::dimension_mismatch, "guided-filter prior needs a matching PAN image");
      std::vector<double> guide(y_pan->values().begin(), y_pan->values().end());
      for (auto& g : guide) g /= static_cast<double>(s.channels);
      Volume z(s);
      for (std::size_t c = 0; c < s.channels; ++c)
        guided_filter(v.band(c), guide, z.band(c), s.height, s.width, prior.radius, prior.epsilon);
      return z;
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// ADMM state and steps.

struct StageDiagnostics {
  std::size_t stage = 0;
  double rho = 0.0;
  double lambda = 0.0;
  double sigma = 0.0;
  double objective = 0.0;
  double residual_norm = 0.0;
  PcgReport solve;
};

struct AdmmState {
  Volume x;
  Volume z;
  Volume u;
  std::size_t stage = 0;
  std::vector<StageDiagnostics> diagnostics;

  static AdmmState start(const Volume& x0) { return {x0, x0, Volume(x0.shape()), 0, {}}; }
};

namespace detail {

inline void check_odis_measurements(const Image& y_disp, const Image& y_pan, const OdisSpec& spec) {
  spec.validate();
  if (y_disp.height() != spec.height || y_disp.width() != spec.dispersed_width())
    throw Error(Errc::dimension_mismatch,
                "dispersed measurement is " + std::to_string(y_disp.height()) + "x" +
                    std::to_string(y_disp.width()) + ", expected " + std::to_string(spec.height) +
                    "x" + std::to_string(spec.dispersed_width()));
  if (y_pan.height() != spec.height || y_pan.width() != spec.width)
    throw Error(Errc::dimension_mismatch, "PAN measurement does not match the dispersion geometry");
}

}  // namespace detail

/// x0(x, y, c) = y_pan(x, y) / C.
inline Volume initialize(const Image& y_disp, const Image& y_pan, const OdisSpec& spec) {
  detail::check_odis_measurements(y_disp, y_pan, spec);
  Volume x0 = odis_adjoint_pan(y_pan, spec.channels);
  for (auto& v : x0.data()) v /= static_cast<double>(spec.channels);
  return x0;
}

/// Solves (A_d^T A_d + lambda A_p^T A_p + rho I) x = A_d^T y_d + lambda A_p^T y_p
/// + rho (z - u) by FFT-Woodbury PCG, warm-started at state.x.
inline PcgReport x_step(AdmmState& state, const Image& y_disp, const Image& y_pan,
                        const OdisSpec& spec, double rho, double lambda, std::size_t max_iterations,
                        double tol, PaddingPolicy padding = PaddingPolicy::exact) {
  detail::check_odis_measurements(y_disp, y_pan, spec);
  const Shape shape = spec.cube_shape();
  if (state.x.shape() != shape || state.z.shape() != shape || state.u.shape() != shape)
    throw Error(Errc::dimension_mismatch, "ADMM state does not match the dispersion geometry");
  std::vector<double> rhs(shape.size()), pan_back(shape.size());
  disperse_adjoint(spec, y_disp.values(), rhs);
  pan_adjoint(shape, y_pan.values(), pan_back);
  const auto z = state.z.values();
  const auto u = state.u.values();
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += lambda * pan_back[i] + rho * (z[i] - u[i]);
  const NormalOperator op(spec, rho, lambda);
  const CyclicPreconditioner pre(spec, rho, lambda, padding);
  return pcg_solve(op, pre, rhs, state.x.values(), max_iterations, tol);
}

/// u <- u + x - z.
inline void dual_update(AdmmState& state) {
  auto u = state.u.values();
  const auto x = state.x.values();
  const auto z = state.z.values();
  for (std::size_t i = 0; i < u.size(); ++i) u[i] += x[i] - z[i];
}

/// r = A_disp^T (y_disp - A_disp x).
inline Volume data_residual(const Volume& x, const Image& y_disp, const OdisSpec& spec) {
  spec.validate();
  if (x.shape() != spec.cube_shape() || y_disp.height() != spec.height ||
      y_disp.width() != spec.dispersed_width())
    throw Error(Errc::dimension_mismatch, "data_residual: shape mismatch");
  std::vector<double> diff(y_disp.size());
  disperse(spec, x.values(), diff);
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = y_disp.values()[i] - diff[i];
  Volume r(spec.cube_shape());
  disperse_adjoint(spec, diff, r.values());
  return r;
}

/// 1/2 |A_disp x - y_disp|^2 + lambda/2 |A_pan x - y_pan|^2.
inline double objective(const Volume& x, const Image& y_disp, const Image& y_pan,
                        const OdisSpec& spec, double lambda) {
  detail::check_odis_measurements(y_disp, y_pan, spec);
  if (x.shape() != spec.cube_shape()) throw Error(Errc::dimension_mismatch, "objective: shape mismatch");
  std::vector<double> yd(y_disp.size()), yp(y_pan.size());
  disperse(spec, x.values(), yd);
  pan_sum(spec.cube_shape(), x.values(), yp);
  double disp = 0.0, pan = 0.0;
  for (std::size_t i = 0; i < yd.size(); ++i) disp += (yd[i] - y_disp.values()[i]) * (yd[i] - y_disp.values()[i]);
  for (std::size_t i = 0; i < yp.size(); ++i) pan += (yp[i] - y_pan.values()[i]) * (yp[i] - y_pan.values()[i]);
  return 0.5 * disp + 0.5 * lambda * pan;
}

struct SolverBudget {
  std::size_t iterations = 10;
  double tolerance = 1e-8;
  PaddingPolicy padding = PaddingPolicy::exact;
};

struct Reconstruction {
  Volume estimate;  // z_K clamped to >= 0
  Volume initial;
  std::vector<StageDiagnostics> diagnostics;
};

namespace detail {

template <class XStep, class Objective, class Residual>
Reconstruction run_admm(Volume x0, const Schedule& schedule, const Prior& prior, const Image* guide,
                        XStep&& xstep, Objective&& objective_fn, Residual&& residual_fn) {
  prior.validate();
  AdmmState state = AdmmState::start(x0);
  for (std::size_t k = 0; k < schedule.stages(); ++k) {
    StageDiagnostics diag{k, schedule.rho(k), schedule.lambda(k), schedule.sigma(k), 0.0, 0.0, {}};
    diag.solve = xstep(state, schedule.rho(k), schedule.lambda(k));
    Volume v = state.x;
    auto vv = v.values();
    const auto u = state.u.values();
    for (std::size_t i = 0; i < vv.size(); ++i) vv[i] += u[i];
    state.z = z_step(v, prior, schedule.sigma(k), guide);
    dual_update(state);
    state.stage = k + 1;
    diag.objective = objective_fn(state.x, schedule.lambda(k));
    diag.residual_norm = residual_fn(state.x);
    state.diagnostics.push_back(std::move(diag));
  }
  Reconstruction out{std::move(state.z), std::move(x0), std::move(state.diagnostics)};
  for (auto& v : out.estimate.data()) v = std::max(0.0, v);
  return out;
}

}  // namespace detail

/// Plug-and-play ADMM for ODIS: K stages of {x_step, z_step, dual_update}.
inline Reconstruction reconstruct(const Image& y_disp, const Image& y_pan, const OdisSpec& spec,
                                  const Schedule& schedule, const Prior& prior,
                                  const SolverBudget& budget = {}) {
  Volume x0 = initialize(y_disp, y_pan, spec);
  return detail::run_admm(
      std::move(x0), schedule, prior, &y_pan,
      [&](AdmmState& s, double rho, double lambda) {
        return x_step(s, y_disp, y_pan, spec, rho, lambda, budget.iterations, budget.tolerance,
                      budget.padding);
      },
      [&](const Volume& x, double lambda) { return objective(x, y_disp, y_pan, spec, lambda); },
      [&](const Volume& x) { return norm2(data_residual(x, y_disp, spec).values()); });
}

/// Same ADMM pipeline for any architecture. Measurements are unit gain (the
/// splitter scale already divided out). ODIS uses the FFT-Woodbury PCG; the
/// masked systems fall back to plain CG on their normal equations.
inline Reconstruction reconstruct_system(const SystemModel& model, const Image& coded,
                                         const std::optional<Image>& pan, const Schedule& schedule,
                                         const Prior& prior, const SolverBudget& budget = {}) {
  const Shape shape = model.shape();
  if (coded.height() != shape.height || coded.width() != model.coded_width())
    throw Error(Errc::dimension_mismatch, "coded measurement does not match the system");
  if (model.has_pan() != pan.has_value())
    throw Error(Errc::dimension_mismatch, "PAN arm presence does not match the system");
  if (pan && (pan->height() != shape.height || pan->width() != shape.width))
    throw Error(Errc::dimension_mismatch, "PAN measurement does not match the system");

  if (model.system().kind == SystemKind::odis)
    return reconstruct(coded, *pan, model.dispersion(), schedule, prior, budget);

  const std::size_t C = shape.channels;
  Volume x0(shape);
  if (pan) {
    x0 = odis_adjoint_pan(*pan, C);
  } else {
    model.apply_coded_adjoint(coded.values(), x0.values());
  }
  for (auto& v : x0.data()) v /= static_cast<double>(C);

  std::vector<double> coded_back(shape.size());
  model.apply_coded_adjoint(coded.values(), coded_back);
  std::vector<double> pan_back(shape.size(), 0.0);
  if (pan) pan_adjoint(shape, pan->values(), pan_back);

  auto objective_fn = [&](const Volume& x, double lambda) {
    std::vector<double> yc(coded.size());
    model.apply_coded(x.values(), yc);
    double total = 0.0;
    for (std::size_t i = 0; i < yc.size(); ++i) total += 0.5 * std::pow(yc[i] - coded.values()[i], 2);
    if (pan) {
      std::vector<double> yp(pan->size());
      pan_sum(shape, x.values(), yp);
      for (std::size_t i = 0; i < yp.size(); ++i)
        total += 0.5 * lambda * std::pow(yp[i] - pan->values()[i], 2);
    }
    return total;
  };
  auto residual_fn = [&](const Volume& x) {
    std::vector<double> yc(coded.size());
    model.apply_coded(x.values(), yc);
    for (std::size_t i = 0; i < yc.size(); ++i) yc[i] = coded.values()[i] - yc[i];
    std::vector<double> r(shape.size());
    model.apply_coded_adjoint(yc, r);
    return norm2(r);
  };
  auto xstep = [&](AdmmState& s, double rho, double lambda) {
    const double pan_weight = pan ? lambda : 0.0;
    FunctionOperator op{shape.size(), [&](std::span<const double> v, std::span<double> out) {
                          std::vector<double> yc(model.coded_size());
                          model.apply_coded(v, yc);
                          model.apply_coded_adjoint(yc, out);
                          if (pan_weight != 0.0) {
                            std::vector<double> yp(shape.pixels());
                            pan_sum(shape, v, yp);
                            const std::size_t n = shape.pixels();
                            for (std::size_t c = 0; c < C; ++c)
                              for (std::size_t i = 0; i < n; ++i) out[c * n + i] += pan_weight * yp[i];
                          }
                          for (std::size_t i = 0; i < v.size(); ++i) out[i] += rho * v[i];
                        }};
    std::vector<double> rhs(shape.size());
    const auto z = s.z.values();
    const auto u = s.u.values();
    for (std::size_t i = 0; i < rhs.size(); ++i)
      rhs[i] = coded_back[i] + pan_weight * pan_back[i] + rho * (z[i] - u[i]);
    return cg_solve(op, rhs, s.x.values(), budget.iterations, budget.tolerance);
  };
  return detail::run_admm(std::move(x0), schedule, prior, pan ? &*pan : nullptr, xstep,
                          objective_fn, residual_fn);
}

}  // namespace odis
