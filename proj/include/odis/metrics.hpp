#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "odis/core.hpp"

namespace odis {

inline constexpr double kPsnrCapDb = 300.0;

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b)
    throw Error(Errc::dimension_mismatch,
                std::string(what) + ": shapes differ (" + to_string(a) + " vs " + to_string(b) + ")");
}

inline double psnr_from_mse(double mse, double peak) {
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

}  // namespace detail

inline double psnr(std::span<const double> reference, std::span<const double> estimate,
                   double peak = 1.0) {
  if (reference.size() != estimate.size())
    throw Error(Errc::dimension_mismatch, "psnr: sizes differ");
  if (!(peak > 0.0)) throw Error(Errc::invalid_value, "psnr: peak must be positive");
  if (reference.empty()) throw Error(Errc::dimension_mismatch, "psnr: empty input");
  double se = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double e = reference[i] - estimate[i];
    se += e * e;
  }
  return detail::psnr_from_mse(se / static_cast<double>(reference.size()), peak);
}

inline double psnr(const Volume& reference, const Volume& estimate, double peak = 1.0) {
  detail::require_same_shape(reference.shape(), estimate.shape(), "psnr");
  return psnr(reference.values(), estimate.values(), peak);
}

inline std::vector<double> per_band_psnr(const Volume& reference, const Volume& estimate,
                                         double peak = 1.0) {
  detail::require_same_shape(reference.shape(), estimate.shape(), "per_band_psnr");
  std::vector<double> out(reference.shape().channels);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = psnr(reference.band(c), estimate.band(c), peak);
  return out;
}

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Mean SSIM over all fully-contained 11x11 Gaussian windows (sigma 1.5),
/// dynamic range 1.
inline double ssim(std::span<const double> reference, std::span<const double> estimate,
                   std::size_t height, std::size_t width) {
  if (reference.size() != height * width || estimate.size() != height * width)
    throw Error(Errc::dimension_mismatch, "ssim: sizes differ");
  if (height < kSsimWindow || width < kSsimWindow)
    throw Error(Errc::invalid_value, "ssim: image smaller than the 11x11 window");

  std::array<double, kSsimWindow> g{};
  double gsum = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double t = static_cast<double>(i) - static_cast<double>(kSsimWindow / 2);
    g[i] = std::exp(-t * t / (2.0 * kSsimSigma * kSsimSigma));
    gsum += g[i];
  }
  for (auto& v : g) v /= gsum;

  const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t r0 = 0; r0 + kSsimWindow <= height; ++r0) {
    for (std::size_t c0 = 0; c0 + kSsimWindow <= width; ++c0) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t i = 0; i < kSsimWindow; ++i)
        for (std::size_t j = 0; j < kSsimWindow; ++j) {
          const double w = g[i] * g[j];
          const double x = reference[(r0 + i) * width + c0 + j];
          const double y = estimate[(r0 + i) * width + c0 + j];
          mx += w * x;
          my += w * y;
          sxx += w * x * x;
          syy += w * y * y;
          sxy += w * x * y;
        }
      const double vx = std::max(0.0, sxx - mx * mx), vy = std::max(0.0, syy - my * my);
      const double cov = sxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

inline double ssim(const Image& reference, const Image& estimate) {
  if (reference.height() != estimate.height() || reference.width() != estimate.width())
    throw Error(Errc::dimension_mismatch, "ssim: image sizes differ");
  return ssim(reference.values(), estimate.values(), reference.height(), reference.width());
}

/// Unweighted mean of per-band SSIM.
inline double ssim(const Volume& reference, const Volume& estimate) {
  detail::require_same_shape(reference.shape(), estimate.shape(), "ssim");
  const auto& s = reference.shape();
  double total = 0.0;
  for (std::size_t c = 0; c < s.channels; ++c)
    total += ssim(reference.band(c), estimate.band(c), s.height, s.width);
  return total / static_cast<double>(s.channels);
}

struct SamResult {
  double degrees = 0.0;
  std::size_t excluded_pixels = 0;  // zero-norm spectra in either cube
};

/// Mean spectral angle over pixels whose spectra are non-zero in both cubes.
inline SamResult sam_detail(const Volume& reference, const Volume& estimate) {
  detail::require_same_shape(reference.shape(), estimate.shape(), "sam");
  const auto& s = reference.shape();
  const std::size_t n = s.pixels();
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double rr = 0, ee = 0, re = 0;
    for (std::size_t c = 0; c < s.channels; ++c) {
      const double r = reference.values()[c * n + i], e = estimate.values()[c * n + i];
      rr += r * r;
      ee += e * e;
      re += r * e;
    }
    if (rr <= 0.0 || ee <= 0.0) continue;
    const double cosine = std::clamp(re / std::sqrt(rr * ee), -1.0, 1.0);
    total += std::acos(cosine);
    ++counted;
  }
  SamResult out;
  out.excluded_pixels = n - counted;
  out.degrees = counted ? total / static_cast<double>(counted) * 180.0 / std::numbers::pi : 0.0;
  return out;
}

inline double sam(const Volume& reference, const Volume& estimate) {
  return sam_detail(reference, estimate).degrees;
}

struct MetricReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
  double sam_degrees = 0.0;
  std::size_t sam_excluded_pixels = 0;
  std::vector<double> band_psnr_db;
};

inline MetricReport evaluate(const Volume& reference, const Volume& estimate, double peak = 1.0) {
  MetricReport r;
  r.psnr_db = psnr(reference, estimate, peak);
  r.ssim = ssim(reference, estimate);
  const auto s = sam_detail(reference, estimate);
  r.sam_degrees = s.degrees;
  r.sam_excluded_pixels = s.excluded_pixels;
  r.band_psnr_db = per_band_psnr(reference, estimate, peak);
  return r;
}

}  // namespace odis
