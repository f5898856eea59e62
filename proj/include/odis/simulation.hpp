#pragma once

#include <algorithm>
#include <optional>

#include "odis/core.hpp"
#include "odis/forward.hpp"
#include "odis/noise.hpp"

namespace odis {

inline constexpr std::uint64_t kCodedStream = 0;
inline constexpr std::uint64_t kPanStream = 1;

/// Largest clean ODIS reading (dispersed or PAN) at unit throughput. Every
/// architecture is normalized by this value, so the brightest ODIS pixel
/// collects 2^shot_bits electrons and lower-throughput arms collect fewer.
inline double photometric_full_scale(const HsiCube& cube, std::size_t step) {
  const auto m = joint_forward(cube, OdisSpec::for_shape(cube.shape(), step));
  double peak = 0.0;
  for (double v : m.coded->data()) peak = std::max(peak, v);
  for (double v : m.pan->data()) peak = std::max(peak, v);
  if (!(peak > 0.0)) throw Error(Errc::invalid_value, "scene is dark: no light reaches the sensor");
  return peak;
}

struct Capture {
  Measurements clean;  // normalized sensor signal, throughput applied
  Measurements noisy;  // same, after shot and read noise
  double full_scale = 1.0;
  double snr_coded_db = 0.0;
  std::optional<double> snr_pan_db;

  /// Noisy coded arm with normalization and splitter loss removed, ready for
  /// the unit-gain operators.
  Image coded_unit_gain() const { return rescale(*noisy.coded, full_scale / noisy.coded_scale); }
  std::optional<Image> pan_unit_gain() const {
    if (!noisy.pan) return std::nullopt;
    return rescale(*noisy.pan, full_scale / noisy.pan_scale);
  }

  static Image rescale(Image img, double factor) {
    for (auto& v : img.data()) v *= factor;
    return img;
  }
};

inline Capture simulate_capture(const HsiCube& cube, const SystemSpec& sys,
                                const IlluminationModel& illumination, double full_scale) {
  if (!(full_scale > 0.0)) throw Error(Errc::invalid_value, "full scale must be positive");
  Capture cap;
  cap.full_scale = full_scale;
  cap.clean = competitor_forward(cube, sys);
  for (auto& v : cap.clean.coded->data()) v /= full_scale;
  cap.noisy.coded_scale = cap.clean.coded_scale;
  cap.noisy.pan_scale = cap.clean.pan_scale;
  cap.noisy.coded = apply_noise(*cap.clean.coded, illumination, kCodedStream);
  cap.snr_coded_db = measurement_snr(*cap.clean.coded, *cap.noisy.coded);
  if (cap.clean.pan) {
    for (auto& v : cap.clean.pan->data()) v /= full_scale;
    cap.noisy.pan = apply_noise(*cap.clean.pan, illumination, kPanStream);
    cap.snr_pan_db = measurement_snr(*cap.clean.pan, *cap.noisy.pan);
  }
  return cap;
}

/// Builds the coding element each architecture needs: none for ODIS, a
/// Bernoulli mask for CASSI kinds, a channel map for PMVIS.
inline SystemSpec make_system(SystemKind kind, const Shape& shape, std::size_t step,
                              double mask_transmittance, std::uint64_t mask_seed) {
  switch (kind) {
    case SystemKind::odis: return SystemSpec::odis(shape.channels, step);
    case SystemKind::pmvis_dc:
      return SystemSpec::make(kind, shape.channels, step,
                              random_channel_map(shape.height, shape.width, shape.channels, mask_seed));
    default:
      return SystemSpec::make(kind, shape.channels, step,
                              random_binary_mask(shape.height, shape.width, mask_transmittance, mask_seed));
  }
}

}  // namespace odis
