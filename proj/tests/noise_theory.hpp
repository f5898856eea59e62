#pragma once

// Exact moments of max(0, Poisson(e) + N(0, s^2)) / g, the clamped sensor
// model, computed from truncated-normal partial moments mixed over the
// Poisson counts. Above the Gaussian-shot threshold the shot term is N(e, e).

#include <cmath>
#include <numbers>

namespace noise_theory {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
  double mu4 = 0.0;  // fourth central moment

  double mean_se(double n) const { return std::sqrt(var / n); }
  double var_se(double n) const { return std::sqrt(std::max(mu4 - var * var, 0.0) / n); }
};

// E[X^j 1{X > 0}] for X ~ N(mu, sd^2), j = 0..4.
inline void partial_moments(double mu, double sd, double out[5]) {
  if (sd == 0.0) {
    for (int j = 0; j < 5; ++j) out[j] = mu > 0.0 ? std::pow(mu, j) : 0.0;
    return;
  }
  const double a = -mu / sd;
  const double phi = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
  double m[5];
  m[0] = 0.5 * std::erfc(a / std::sqrt(2.0));
  m[1] = phi;
  for (int j = 2; j < 5; ++j) m[j] = std::pow(a, j - 1) * phi + (j - 1) * m[j - 2];
  static constexpr double binom[5][5] = {{1}, {1, 1}, {1, 2, 1}, {1, 3, 3, 1}, {1, 4, 6, 4, 1}};
  for (int j = 0; j < 5; ++j) {
    out[j] = 0.0;
    for (int i = 0; i <= j; ++i) out[j] += binom[j][i] * std::pow(mu, j - i) * std::pow(sd, i) * m[i];
  }
}

inline Moments clamped(double level, int bits, double read_sigma, double gaussian_threshold = 1000.0) {
  const double g = std::ldexp(1.0, bits), e = level * g;
  double raw[5] = {0, 0, 0, 0, 0};
  if (e > gaussian_threshold) {
    partial_moments(e, std::sqrt(e + read_sigma * read_sigma), raw);
  } else {
    const double hi = e + 12.0 * std::sqrt(e) + 30.0;
    for (double k = 0; k <= hi; ++k) {
      const double w = e == 0.0 ? (k == 0 ? 1.0 : 0.0) : std::exp(k * std::log(e) - e - std::lgamma(k + 1));
      if (w == 0.0) continue;
      double pm[5];
      partial_moments(k, read_sigma, pm);
      for (int j = 0; j < 5; ++j) raw[j] += w * pm[j];
    }
  }
  const double m1 = raw[1], m2 = raw[2], m3 = raw[3], m4 = raw[4];
  Moments out;
  out.mean = m1 / g;
  out.var = (m2 - m1 * m1) / (g * g);
  out.mu4 = (m4 - 4 * m3 * m1 + 6 * m2 * m1 * m1 - 3 * m1 * m1 * m1 * m1) / (g * g * g * g);
  return out;
}

}  // namespace noise_theory
