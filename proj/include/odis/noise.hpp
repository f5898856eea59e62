#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "odis/core.hpp"

namespace odis {

/// Cap reported for an exact (noise-free) match.
inline constexpr double kSnrCapDb = 300.0;

/// Illumination calibration: lux -> shot-noise bit depth at a 500 ms exposure.
inline constexpr std::array<std::pair<double, int>, 6> kLuxBitTable{{
    {2.0, 5}, {4.0, 6}, {9.0, 7}, {18.0, 8}, {35.0, 9}, {141.0, 11}}};

inline constexpr double kDefaultReadSigmaE = 9.29;
inline constexpr double kReferenceExposureMs = 500.0;

/// Table lookup; off-table values are interpolated linearly in log2(lux),
/// extrapolated with the end segments, rounded and clamped to [1, 16].
inline int lux_to_shot_bits(double lux) {
  if (!(lux > 0.0) || !std::isfinite(lux))
    throw Error(Errc::invalid_value, "illuminance must be positive");
  for (const auto& [l, b] : kLuxBitTable)
    if (lux == l) return b;
  const double x = std::log2(lux);
  std::size_t seg = 0;
  while (seg + 2 < kLuxBitTable.size() && x > std::log2(kLuxBitTable[seg + 1].first)) ++seg;
  const double x0 = std::log2(kLuxBitTable[seg].first), x1 = std::log2(kLuxBitTable[seg + 1].first);
  const double b0 = kLuxBitTable[seg].second, b1 = kLuxBitTable[seg + 1].second;
  const double bits = b0 + (b1 - b0) * (x - x0) / (x1 - x0);
  return std::clamp(static_cast<int>(std::lround(bits)), 1, 16);
}

struct IlluminationModel {
  double lux = 141.0;
  double exposure_ms = kReferenceExposureMs;
  int shot_bits = 11;
  double read_sigma_e = kDefaultReadSigmaE;
  std::uint64_t seed = 0;

  /// Bit depth follows the photon count, so exposure rescales the lux input.
  static IlluminationModel from_lux(double lux, std::uint64_t seed,
                                    double exposure_ms = kReferenceExposureMs,
                                    double read_sigma_e = kDefaultReadSigmaE) {
    if (!(exposure_ms > 0.0)) throw Error(Errc::invalid_value, "exposure must be positive");
    IlluminationModel m{lux, exposure_ms, lux_to_shot_bits(lux * exposure_ms / kReferenceExposureMs),
                        read_sigma_e, seed};
    m.validate();
    return m;
  }

  double peak_electrons() const { return std::ldexp(1.0, shot_bits); }

  void validate() const {
    if (shot_bits < 1 || shot_bits > 16) throw Error(Errc::invalid_value, "shot_bits must lie in [1, 16]");
    if (!(read_sigma_e >= 0.0)) throw Error(Errc::invalid_value, "read noise sigma must be >= 0");
    if (!(exposure_ms > 0.0)) throw Error(Errc::invalid_value, "exposure must be positive");
  }
};

/// SplitMix64 stream keyed by (seed, stream, counter). Each pixel gets its own
/// generator, so samples do not depend on evaluation order.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    std::uint64_t s = seed;
    state_ = next(s);
    state_ ^= next(s) + stream * 0xD1B54A32D192ED03ull;
    state_ = mix(state_);
    state_ ^= counter * 0x9E3779B97F4A7C15ull;
    state_ = mix(state_ + 0x632BE59BD9B4E019ull);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next(state_); }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  static std::uint64_t next(std::uint64_t& s) { return mix(s += 0x9E3779B97F4A7C15ull); }

  std::uint64_t state_;
};

inline constexpr double kGaussianShotThreshold = 1000.0;

/// Poisson shot noise at peak count 2^shot_bits plus Gaussian read noise in
/// electrons; returns the normalized, zero-clamped signal. `stream` separates
/// the two ODIS exposures (or the arms of a dual-camera system).
inline std::vector<double> apply_noise(std::span<const double> clean, const IlluminationModel& model,
                                       std::uint64_t stream = 0) {
  model.validate();
  const double gain = model.peak_electrons();
  std::vector<double> out(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double v = clean[i];
    if (!std::isfinite(v)) throw Error(Errc::non_finite, "non-finite clean signal");
    if (v < 0.0) throw Error(Errc::invalid_value, "clean signal must be non-negative");
    CounterRng rng(model.seed, stream, i);
    const double e = v * gain;
    double electrons = 0.0;
    if (e > kGaussianShotThreshold) {
      std::normal_distribution<double> shot(e, std::sqrt(e));
      electrons = shot(rng);
    } else if (e > 0.0) {
      std::poisson_distribution<long long> shot(e);
      electrons = static_cast<double>(shot(rng));
    }
    if (model.read_sigma_e > 0.0) {
      std::normal_distribution<double> read(0.0, model.read_sigma_e);
      electrons += read(rng);
    }
    out[i] = std::max(0.0, electrons / gain);
  }
  return out;
}

inline Image apply_noise(const Image& clean, const IlluminationModel& model, std::uint64_t stream = 0) {
  return Image(clean.height(), clean.width(), apply_noise(clean.values(), model, stream));
}

/// 10 log10(sum clean^2 / sum (noisy - clean)^2), capped at kSnrCapDb.
inline double measurement_snr(std::span<const double> clean, std::span<const double> noisy) {
  if (clean.size() != noisy.size())
    throw Error(Errc::dimension_mismatch, "measurement_snr: shape mismatch");
  double signal = 0.0, error = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    signal += clean[i] * clean[i];
    const double e = noisy[i] - clean[i];
    error += e * e;
  }
  if (signal == 0.0) throw Error(Errc::invalid_value, "measurement_snr: clean signal is all zero");
  if (error == 0.0) return kSnrCapDb;
  return std::min(kSnrCapDb, 10.0 * std::log10(signal / error));
}

inline double measurement_snr(const Image& clean, const Image& noisy) {
  if (clean.height() != noisy.height() || clean.width() != noisy.width())
    throw Error(Errc::dimension_mismatch, "measurement_snr: shape mismatch");
  return measurement_snr(clean.values(), noisy.values());
}

}  // namespace odis
