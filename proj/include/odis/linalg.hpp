#pragma once

#include <cmath>
#include <complex>
#include <concepts>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "odis/core.hpp"
#include "odis/fft.hpp"
#include "odis/forward.hpp"

namespace odis {

template <class Op>
concept LinearOperator = requires(const Op& op, std::span<const double> in, std::span<double> out) {
  { op.size() } -> std::convertible_to<std::size_t>;
  op.apply(in, out);
};

/// H v = A_disp^T A_disp v + lambda A_pan^T A_pan v + rho v, composed from the
/// forward operators (linear boundary, width-W PAN).
class NormalOperator {
 public:
  NormalOperator(const OdisSpec& spec, double rho, double lambda)
      : spec_(spec), rho_(rho), lambda_(lambda) {
    spec_.validate();
    if (!(rho >= 0.0) || !(lambda >= 0.0) || !std::isfinite(rho) || !std::isfinite(lambda))
      throw Error(Errc::invalid_value, "normal operator needs rho >= 0 and lambda >= 0");
  }

  const OdisSpec& spec() const noexcept { return spec_; }
  double rho() const noexcept { return rho_; }
  double lambda() const noexcept { return lambda_; }
  std::size_t size() const noexcept { return spec_.cube_shape().size(); }

  void apply(std::span<const double> v, std::span<double> out) const {
    detail::require_size(v.size(), size(), "normal operator input");
    detail::require_size(out.size(), size(), "normal operator output");
    const Shape shape = spec_.cube_shape();
    std::vector<double> detector(spec_.height * spec_.dispersed_width());
    disperse(spec_, v, detector);
    disperse_adjoint(spec_, detector, out);
    if (lambda_ != 0.0) {
      std::vector<double> pan(shape.pixels());
      pan_sum(shape, v, pan);
      const std::size_t n = shape.pixels();
      for (std::size_t c = 0; c < shape.channels; ++c)
        for (std::size_t i = 0; i < n; ++i) out[c * n + i] += lambda_ * pan[i];
    }
    for (std::size_t i = 0; i < v.size(); ++i) out[i] += rho_ * v[i];
  }

  std::vector<double> operator()(std::span<const double> v) const {
    std::vector<double> out(v.size());
    apply(v, out);
    return out;
  }

 private:
  OdisSpec spec_;
  double rho_;
  double lambda_;
};

enum class PaddingPolicy {
  exact,  // L = W + d(C-1)
  fast,   // next 7-smooth size >= W + d(C-1)
};

/// FFT-Woodbury inverse of the cyclic normal matrix
///   H~ = A~_disp^T A~_disp + lambda A~_pan^T A~_pan + rho I
/// on rows padded to length L. Along the padded axis every band sees the same
/// circular shift, so H~ block-diagonalizes per frequency f into
///   rho I + psi psi^H + lambda 1 1^T,   psi_c(f) = exp(+2 pi i f d c / L)
/// (forward DFT with negative exponent; the shift by d c multiplies band c by
/// conj(psi_c)). The first two terms form C(f), inverted by Sherman-Morrison;
/// the PAN term is folded in by a rank-1 Woodbury update whose inner inverse
/// is one scalar per frequency.
class CyclicPreconditioner {
 public:
  CyclicPreconditioner(const OdisSpec& spec, double rho, double lambda, std::size_t padded_length)
      : spec_(spec), rho_(rho), lambda_(lambda), length_(padded_length),
        fft_(padded_length, spec.height * spec.channels) {
    init();
  }
  CyclicPreconditioner(const OdisSpec& spec, double rho, double lambda,
                       PaddingPolicy policy = PaddingPolicy::exact)
      : CyclicPreconditioner(spec, rho, lambda, default_length(spec, policy)) {}

  static std::size_t default_length(const OdisSpec& spec, PaddingPolicy policy) {
    const std::size_t minimal = spec.dispersed_width();
    return policy == PaddingPolicy::fast ? next_fast_fft_size(minimal) : minimal;
  }

  const OdisSpec& spec() const noexcept { return spec_; }
  double rho() const noexcept { return rho_; }
  double lambda() const noexcept { return lambda_; }
  std::size_t padded_length() const noexcept { return length_; }
  std::size_t size() const noexcept { return spec_.cube_shape().size(); }
  std::size_t cyclic_size() const noexcept { return spec_.height * length_ * spec_.channels; }
  const LineFft& fft() const noexcept { return fft_; }

  /// psi_c(f) for any integer frequency f in [0, L).
  std::complex<double> phase(std::size_t f, std::size_t c) const {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>((f * spec_.step * c) % length_) /
                         static_cast<double>(length_);
    return std::polar(1.0, angle);
  }

  /// 1^H C(f)^{-1} 1.
  double woodbury_scalar(std::size_t f) const {
    const auto s = ones_hat(f);
    const double C = static_cast<double>(spec_.channels);
    return C / rho_ - std::norm(s) / (rho_ * (rho_ + C));
  }

  /// In place: v <- (rho I + psi(f) psi(f)^H)^{-1} v.
  void apply_c_inverse(std::size_t f, std::span<std::complex<double>> v) const {
    detail::require_size(v.size(), spec_.channels, "apply_c_inverse input");
    const double C = static_cast<double>(spec_.channels);
    std::complex<double> proj{};
    for (std::size_t c = 0; c < spec_.channels; ++c) proj += std::conj(phase(f, c)) * v[c];
    const std::complex<double> coef = proj / (rho_ * (rho_ + C));
    for (std::size_t c = 0; c < spec_.channels; ++c) v[c] = v[c] / rho_ - phase(f, c) * coef;
  }

  /// P^{-1} v for an H x W x C vector: pad rows to L, one forward FFT pass,
  /// per-frequency Woodbury solve, one inverse pass, crop back to W.
  void apply(std::span<const double> v, std::span<double> out) const {
    detail::require_size(v.size(), size(), "preconditioner input");
    detail::require_size(out.size(), size(), "preconditioner output");
    run(v, out, spec_.width);
  }

  /// Exact inverse of H~ on the padded cyclic model (H x L x C vectors).
  void apply_cyclic(std::span<const double> v, std::span<double> out) const {
    detail::require_size(v.size(), cyclic_size(), "cyclic preconditioner input");
    detail::require_size(out.size(), cyclic_size(), "cyclic preconditioner output");
    run(v, out, length_);
  }

 private:
  void init() {
    spec_.validate();
    if (!(rho_ > 0.0) || !std::isfinite(rho_))
      throw Error(Errc::invalid_value, "preconditioner needs rho > 0");
    if (!(lambda_ >= 0.0) || !std::isfinite(lambda_))
      throw Error(Errc::invalid_value, "preconditioner needs lambda >= 0");
    if (length_ < spec_.dispersed_width())
      throw Error(Errc::invalid_value, "padded length " + std::to_string(length_) +
                                           " is shorter than the detector width " +
                                           std::to_string(spec_.dispersed_width()));
    const std::size_t C = spec_.channels, bins = fft_.bins();
    psi_.resize(bins * C);
    c_inv_ones_.resize(bins * C);
    pan_gain_.resize(bins);
    for (std::size_t f = 0; f < bins; ++f) {
      for (std::size_t c = 0; c < C; ++c) {
        psi_[f * C + c] = phase(f, c);
        c_inv_ones_[f * C + c] = 1.0;
      }
      apply_c_inverse(f, std::span(c_inv_ones_).subspan(f * C, C));
      pan_gain_[f] = lambda_ / (1.0 + lambda_ * woodbury_scalar(f));
    }
  }

  std::complex<double> ones_hat(std::size_t f) const {
    std::complex<double> s{};
    for (std::size_t c = 0; c < spec_.channels; ++c) s += std::conj(phase(f, c));
    return s;
  }

  void run(std::span<const double> v, std::span<double> out, std::size_t width) const {
    const std::size_t H = spec_.height, C = spec_.channels, L = length_, bins = fft_.bins();
    auto real = fftw_real_buffer(H * C * L);
    auto spec = fftw_complex_buffer(H * C * bins);
    for (std::size_t line = 0; line < H * C; ++line) {
      double* dst = real.get() + line * L;
      const double* src = v.data() + line * width;
      std::copy(src, src + width, dst);
      std::fill(dst + width, dst + L, 0.0);
    }
    fft_.forward(real.get(), spec.get());

    const double inv_rho = 1.0 / rho_;
    const double sm = 1.0 / (rho_ * (rho_ + static_cast<double>(C)));
    const std::size_t band_stride = H * bins;
    std::vector<std::complex<double>> u(C);
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t f = 0; f < bins; ++f) {
        std::complex<double>* base = spec.get() + r * bins + f;
        const std::complex<double>* psi = psi_.data() + f * C;
        const std::complex<double>* cio = c_inv_ones_.data() + f * C;
        std::complex<double> proj{};
        for (std::size_t c = 0; c < C; ++c) proj += std::conj(psi[c]) * base[c * band_stride];
        proj *= sm;
        std::complex<double> total{};
        for (std::size_t c = 0; c < C; ++c) {
          u[c] = base[c * band_stride] * inv_rho - psi[c] * proj;
          total += u[c];
        }
        const std::complex<double> corr = pan_gain_[f] * total;
        for (std::size_t c = 0; c < C; ++c) base[c * band_stride] = u[c] - cio[c] * corr;
      }
    }

    fft_.inverse(spec.get(), real.get());
    const double scale = 1.0 / static_cast<double>(L);
    for (std::size_t line = 0; line < H * C; ++line) {
      const double* src = real.get() + line * L;
      double* dst = out.data() + line * width;
      for (std::size_t y = 0; y < width; ++y) dst[y] = src[y] * scale;
    }
  }

  OdisSpec spec_;
  double rho_;
  double lambda_;
  std::size_t length_;
  LineFft fft_;
  std::vector<std::complex<double>> psi_;
  std::vector<std::complex<double>> c_inv_ones_;  // C(f)^{-1} 1
  std::vector<double> pan_gain_;                  // lambda / (1 + lambda 1^H C(f)^{-1} 1)
};

struct IdentityPreconditioner {
  std::size_t n = 0;
  std::size_t size() const noexcept { return n; }
  void apply(std::span<const double> v, std::span<double> out) const {
    std::copy(v.begin(), v.end(), out.begin());
  }
};

/// Adapts a callable `void(span<const double>, span<double>)` to LinearOperator.
struct FunctionOperator {
  std::size_t n = 0;
  std::function<void(std::span<const double>, std::span<double>)> fn;
  std::size_t size() const noexcept { return n; }
  void apply(std::span<const double> v, std::span<double> out) const { fn(v, out); }
};

struct PcgReport {
  std::size_t iterations = 0;
  double relative_residual = 0.0;
  std::vector<double> residual_history;  // ||b - H x_k|| / ||b||, k = 0..iterations
  bool converged = false;
};

/// Preconditioned conjugate gradients on H x = b, warm-started from `x`.
/// Stops when ||b - H x|| / ||b|| <= tol or after max_iterations steps.
template <LinearOperator Op, LinearOperator Pre>
PcgReport pcg_solve(const Op& op, const Pre& pre, std::span<const double> b, std::span<double> x,
                    std::size_t max_iterations, double tol) {
  const std::size_t n = op.size();
  detail::require_size(b.size(), n, "pcg right-hand side");
  detail::require_size(x.size(), n, "pcg solution");
  if (max_iterations < 1) throw Error(Errc::invalid_value, "pcg needs at least one iteration");
  if (!(tol > 0.0)) throw Error(Errc::invalid_value, "pcg tolerance must be positive");

  PcgReport report;
  const double bnorm = norm2(b);
  if (!std::isfinite(bnorm)) throw Error(Errc::non_finite, "pcg: non-finite right-hand side");
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    report.residual_history = {0.0};
    report.converged = true;
    return report;
  }

  std::vector<double> r(n), z(n), p(n), hp(n);
  op.apply(x, hp);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - hp[i];
  double rel = norm2(r) / bnorm;
  report.residual_history.push_back(rel);
  if (rel <= tol) {
    report.relative_residual = rel;
    report.converged = true;
    return report;
  }
  pre.apply(r, z);
  p = z;
  double rz = dot(r, z);

  for (std::size_t k = 1; k <= max_iterations; ++k) {
    op.apply(p, hp);
    const double curvature = dot(p, hp);
    const double alpha = rz / curvature;
    if (!std::isfinite(alpha))
      throw Error(Errc::non_finite, "pcg: non-finite step at iteration " + std::to_string(k));
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * hp[i];
    }
    rel = norm2(r) / bnorm;
    if (!std::isfinite(rel)) throw Error(Errc::non_finite, "pcg: non-finite residual");
    report.residual_history.push_back(rel);
    report.iterations = k;
    if (rel <= tol) {
      report.converged = true;
      break;
    }
    pre.apply(r, z);
    const double rz_next = dot(r, z);
    if (rz_next == 0.0) break;
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  report.relative_residual = rel;
  return report;
}

template <LinearOperator Op>
PcgReport cg_solve(const Op& op, std::span<const double> b, std::span<double> x,
                   std::size_t max_iterations, double tol) {
  return pcg_solve(op, IdentityPreconditioner{op.size()}, b, x, max_iterations, tol);
}

// ---------------------------------------------------------------------------
// Dense materialization (test oracle support).

struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major

  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }

  std::vector<double> multiply(std::span<const double> v) const {
    std::vector<double> out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[r] += values[r * cols + c] * v[c];
    return out;
  }
};

inline constexpr std::size_t kMaxDenseDim = 512;

/// Column j is op(e_j).
inline DenseMatrix materialize_dense(
    const std::function<void(std::span<const double>, std::span<double>)>& op, std::size_t in_dim,
    std::size_t out_dim) {
  if (in_dim > kMaxDenseDim || out_dim > kMaxDenseDim)
    throw Error(Errc::invalid_value, "materialize_dense: dimension exceeds guard of " +
                                         std::to_string(kMaxDenseDim));
  DenseMatrix m{out_dim, in_dim, std::vector<double>(out_dim * in_dim)};
  std::vector<double> e(in_dim, 0.0), col(out_dim);
  for (std::size_t j = 0; j < in_dim; ++j) {
    e[j] = 1.0;
    op(e, col);
    e[j] = 0.0;
    for (std::size_t i = 0; i < out_dim; ++i) m(i, j) = col[i];
  }
  return m;
}

template <LinearOperator Op>
DenseMatrix materialize_dense(const Op& op) {
  return materialize_dense([&](std::span<const double> v, std::span<double> o) { op.apply(v, o); },
                           op.size(), op.size());
}

}  // namespace odis
