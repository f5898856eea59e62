#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "odis/core.hpp"

namespace odis {

/// Geometry of the ODIS dispersed + PAN acquisition.
struct OdisSpec {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t step = 1;  // pixels per channel

  Shape cube_shape() const noexcept { return {height, width, channels}; }
  std::size_t dispersed_width() const noexcept {
    return DispersedImage::detector_width(width, channels, step);
  }
  void validate() const {
    if (height == 0 || width == 0 || channels == 0)
      throw Error(Errc::dimension_mismatch, "OdisSpec dimensions must be positive");
    if (step < 1) throw Error(Errc::invalid_value, "dispersion step must be >= 1");
  }
  static OdisSpec for_shape(const Shape& s, std::size_t step) {
    OdisSpec spec{s.height, s.width, s.channels, step};
    spec.validate();
    return spec;
  }
};

namespace detail {

inline void require_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw Error(Errc::dimension_mismatch, std::string(what) + ": expected " + std::to_string(want) +
                                              " values, got " + std::to_string(got));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrix-free kernels on flat band-sequential buffers.

/// Y(x, y) = sum_c X(x, y - d c, c) on a detector of width W + d(C-1).
inline void disperse(const OdisSpec& spec, std::span<const double> cube, std::span<double> out) {
  const std::size_t H = spec.height, W = spec.width, C = spec.channels, d = spec.step;
  const std::size_t Wd = spec.dispersed_width();
  detail::require_size(cube.size(), H * W * C, "disperse input");
  detail::require_size(out.size(), H * Wd, "disperse output");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const std::size_t shift = d * c;
    for (std::size_t r = 0; r < H; ++r) {
      const double* src = cube.data() + (c * H + r) * W;
      double* dst = out.data() + r * Wd + shift;
      for (std::size_t y = 0; y < W; ++y) dst[y] += src[y];
    }
  }
}

/// (A^T y)(x, y, c) = Y(x, y + d c).
inline void disperse_adjoint(const OdisSpec& spec, std::span<const double> image,
                             std::span<double> cube) {
  const std::size_t H = spec.height, W = spec.width, C = spec.channels, d = spec.step;
  const std::size_t Wd = spec.dispersed_width();
  detail::require_size(image.size(), H * Wd, "disperse_adjoint input");
  detail::require_size(cube.size(), H * W * C, "disperse_adjoint output");
  for (std::size_t c = 0; c < C; ++c) {
    const std::size_t shift = d * c;
    for (std::size_t r = 0; r < H; ++r) {
      const double* src = image.data() + r * Wd + shift;
      double* dst = cube.data() + (c * H + r) * W;
      for (std::size_t y = 0; y < W; ++y) dst[y] = src[y];
    }
  }
}

inline void pan_sum(const Shape& shape, std::span<const double> cube, std::span<double> out) {
  detail::require_size(cube.size(), shape.size(), "pan input");
  detail::require_size(out.size(), shape.pixels(), "pan output");
  const std::size_t n = shape.pixels();
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t c = 0; c < shape.channels; ++c) {
    const double* src = cube.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) out[i] += src[i];
  }
}

inline void pan_adjoint(const Shape& shape, std::span<const double> image, std::span<double> cube) {
  detail::require_size(image.size(), shape.pixels(), "pan_adjoint input");
  detail::require_size(cube.size(), shape.size(), "pan_adjoint output");
  const std::size_t n = shape.pixels();
  for (std::size_t c = 0; c < shape.channels; ++c)
    std::copy(image.begin(), image.end(), cube.begin() + static_cast<std::ptrdiff_t>(c * n));
}

// ---------------------------------------------------------------------------
// Typed wrappers.

inline DispersedImage odis_disperse(const Volume& cube, std::size_t step) {
  const auto spec = OdisSpec::for_shape(cube.shape(), step);
  DispersedImage out{Image(spec.height, spec.dispersed_width()), spec.width, spec.channels, step};
  disperse(spec, cube.values(), out.pixels.values());
  return out;
}

inline DispersedImage odis_disperse(const HsiCube& cube, std::size_t step) {
  return odis_disperse(cube.volume(), step);
}

inline PanImage odis_pan(const Volume& cube) {
  const auto& s = cube.shape();
  PanImage out(s.height, s.width);
  pan_sum(s, cube.values(), out.values());
  return out;
}

inline PanImage odis_pan(const HsiCube& cube) { return odis_pan(cube.volume()); }

inline Volume odis_adjoint_disperse(const Image& image, const OdisSpec& spec) {
  spec.validate();
  if (image.height() != spec.height || image.width() != spec.dispersed_width())
    throw Error(Errc::dimension_mismatch,
                "dispersed image is " + std::to_string(image.height()) + "x" +
                    std::to_string(image.width()) + ", spec needs " + std::to_string(spec.height) +
                    "x" + std::to_string(spec.dispersed_width()));
  Volume out(spec.cube_shape());
  disperse_adjoint(spec, image.values(), out.values());
  return out;
}

inline Volume odis_adjoint_disperse(const DispersedImage& image, const OdisSpec& spec) {
  return odis_adjoint_disperse(image.pixels, spec);
}

inline Volume odis_adjoint_pan(const PanImage& image, std::size_t channels) {
  if (channels == 0) throw Error(Errc::invalid_value, "channel count must be positive");
  const Shape s{image.height(), image.width(), channels};
  Volume out(s);
  pan_adjoint(s, image.values(), out.values());
  return out;
}

// ---------------------------------------------------------------------------
// Architectures for the cross-system study.

enum class SystemKind { odis, sd_cassi, sd_cassi_dc, dd_cassi_dc, pmvis_dc };

inline std::string to_string(SystemKind k) {
  switch (k) {
    case SystemKind::odis: return "ODIS";
    case SystemKind::sd_cassi: return "SDCASSI";
    case SystemKind::sd_cassi_dc: return "SDCASSI_DC";
    case SystemKind::dd_cassi_dc: return "DDCASSI_DC";
    case SystemKind::pmvis_dc: return "PMVIS_DC";
  }
  return "?";
}

inline SystemKind parse_system_kind(const std::string& name) {
  for (auto k : {SystemKind::odis, SystemKind::sd_cassi, SystemKind::sd_cassi_dc,
                 SystemKind::dd_cassi_dc, SystemKind::pmvis_dc})
    if (to_string(k) == name) return k;
  throw Error(Errc::unsupported, "unknown system kind '" + name + "'");
}

/// Binary mask (CASSI) or 1-based channel-index map (PMVIS), row-major H x W.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<int> values;
  double nominal_transmittance = 1.0;

  int operator()(std::size_t r, std::size_t c) const { return values[r * width + c]; }
  double mean() const {
    double s = 0.0;
    for (int v : values) s += v;
    return values.empty() ? 0.0 : s / static_cast<double>(values.size());
  }
};

/// i.i.d. Bernoulli(transmittance) mask; deterministic in seed.
inline Mask random_binary_mask(std::size_t height, std::size_t width, double transmittance,
                               std::uint64_t seed) {
  if (!(transmittance > 0.0 && transmittance < 1.0))
    throw Error(Errc::invalid_value, "mask transmittance must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution open(transmittance);
  Mask m{height, width, std::vector<int>(height * width), transmittance};
  for (auto& v : m.values) v = open(rng) ? 1 : 0;
  return m;
}

inline Mask uniform_mask(std::size_t height, std::size_t width, int value) {
  return Mask{height, width, std::vector<int>(height * width, value), 1.0};
}

/// One channel per pixel, drawn uniformly from 1..C.
inline Mask random_channel_map(std::size_t height, std::size_t width, std::size_t channels,
                               std::uint64_t seed) {
  if (channels == 0) throw Error(Errc::invalid_value, "channel count must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(1, static_cast<int>(channels));
  Mask m{height, width, std::vector<int>(height * width), 1.0 / static_cast<double>(channels)};
  for (auto& v : m.values) v = pick(rng);
  return m;
}

struct SystemSpec {
  SystemKind kind = SystemKind::odis;
  std::size_t channels = 1;
  std::size_t step = 1;
  Mask mask;              // empty for ODIS
  double splitter = 1.0;  // fraction of light sent to each arm

  static SystemSpec odis(std::size_t channels, std::size_t step) {
    return {SystemKind::odis, channels, step, {}, 1.0};
  }
  static SystemSpec make(SystemKind kind, std::size_t channels, std::size_t step, Mask mask) {
    const bool dual = kind == SystemKind::sd_cassi_dc || kind == SystemKind::dd_cassi_dc ||
                      kind == SystemKind::pmvis_dc;
    SystemSpec s{kind, channels, step, std::move(mask), dual ? 0.5 : 1.0};
    s.validate();
    return s;
  }

  bool has_pan_arm() const noexcept { return kind != SystemKind::sd_cassi; }

  void validate() const {
    if (channels == 0) throw Error(Errc::invalid_value, "system needs at least one channel");
    if (step < 1) throw Error(Errc::invalid_value, "dispersion step must be >= 1");
    if (!(splitter > 0.0 && splitter <= 1.0))
      throw Error(Errc::invalid_value, "splitter fraction must lie in (0, 1]");
    if (kind == SystemKind::odis) return;
    if (mask.values.size() != mask.height * mask.width || mask.values.empty())
      throw Error(Errc::dimension_mismatch, "system mask is empty or inconsistent");
    for (int v : mask.values) {
      if (kind == SystemKind::pmvis_dc) {
        if (v < 1 || v > static_cast<int>(channels))
          throw Error(Errc::invalid_value, "PMVIS channel map entries must lie in 1..C");
      } else if (v != 0 && v != 1) {
        throw Error(Errc::invalid_value, "CASSI mask entries must be 0 or 1");
      }
    }
  }
};

/// Light budget per arm as a fraction of the incident photons.
struct ArmThroughput {
  double coded = 0.0;
  double pan = 0.0;
};

inline ArmThroughput effective_throughput(const SystemSpec& sys) {
  const double t = sys.mask.nominal_transmittance;
  switch (sys.kind) {
    case SystemKind::odis: return {1.0, 1.0};
    case SystemKind::sd_cassi: return {t * sys.splitter, 0.0};
    case SystemKind::sd_cassi_dc:
    case SystemKind::dd_cassi_dc: return {t * sys.splitter, 1.0 - sys.splitter};
    case SystemKind::pmvis_dc:
      return {sys.splitter / static_cast<double>(sys.channels), 1.0 - sys.splitter};
  }
  throw Error(Errc::unsupported, "unknown system kind");
}

/// Measurement set. The scale factors record the deterministic splitter loss
/// that was multiplied into each arm's clean signal.
struct Measurements {
  std::optional<Image> coded;
  std::optional<PanImage> pan;
  double coded_scale = 1.0;
  double pan_scale = 1.0;
};

/// Unit-gain coded-arm operator (and its adjoint) for any architecture.
class SystemModel {
 public:
  SystemModel(SystemSpec sys, Shape shape) : sys_(std::move(sys)), shape_(shape) {
    sys_.validate();
    if (shape_.channels != sys_.channels)
      throw Error(Errc::dimension_mismatch, "system channel count does not match the cube");
    if (sys_.kind != SystemKind::odis &&
        (sys_.mask.height != shape_.height || sys_.mask.width != shape_.width))
      throw Error(Errc::dimension_mismatch, "mask " + std::to_string(sys_.mask.height) + "x" +
                                                std::to_string(sys_.mask.width) +
                                                " does not match cube " + to_string(shape_));
    odis_ = OdisSpec{shape_.height, shape_.width, shape_.channels, sys_.step};
  }

  const SystemSpec& system() const noexcept { return sys_; }
  const Shape& shape() const noexcept { return shape_; }
  const OdisSpec& dispersion() const noexcept { return odis_; }

  std::size_t coded_width() const noexcept {
    switch (sys_.kind) {
      case SystemKind::odis:
      case SystemKind::sd_cassi:
      case SystemKind::sd_cassi_dc: return odis_.dispersed_width();
      default: return shape_.width;
    }
  }
  std::size_t coded_size() const noexcept { return shape_.height * coded_width(); }
  bool has_pan() const noexcept { return sys_.has_pan_arm(); }
  double coded_scale() const noexcept { return sys_.splitter; }
  double pan_scale() const noexcept { return sys_.kind == SystemKind::odis ? 1.0 : 1.0 - sys_.splitter; }

  void apply_coded(std::span<const double> x, std::span<double> y) const {
    detail::require_size(x.size(), shape_.size(), "coded forward input");
    detail::require_size(y.size(), coded_size(), "coded forward output");
    const std::size_t H = shape_.height, W = shape_.width, C = shape_.channels;
    switch (sys_.kind) {
      case SystemKind::odis: disperse(odis_, x, y); return;
      case SystemKind::sd_cassi:
      case SystemKind::sd_cassi_dc: {
        std::vector<double> masked(x.begin(), x.end());
        mask_bands(masked);
        disperse(odis_, masked, y);
        return;
      }
      case SystemKind::dd_cassi_dc:
        std::fill(y.begin(), y.end(), 0.0);
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t r = 0; r < H; ++r)
            for (std::size_t col = 0; col < W; ++col)
              y[r * W + col] += dd_code(r, col, c) * x[shape_.index(r, col, c)];
        return;
      case SystemKind::pmvis_dc:
        for (std::size_t r = 0; r < H; ++r)
          for (std::size_t col = 0; col < W; ++col)
            y[r * W + col] = x[shape_.index(r, col, pmvis_channel(r, col))];
        return;
    }
  }

  void apply_coded_adjoint(std::span<const double> y, std::span<double> x) const {
    detail::require_size(y.size(), coded_size(), "coded adjoint input");
    detail::require_size(x.size(), shape_.size(), "coded adjoint output");
    const std::size_t H = shape_.height, W = shape_.width, C = shape_.channels;
    switch (sys_.kind) {
      case SystemKind::odis: disperse_adjoint(odis_, y, x); return;
      case SystemKind::sd_cassi:
      case SystemKind::sd_cassi_dc:
        disperse_adjoint(odis_, y, x);
        mask_bands(x);
        return;
      case SystemKind::dd_cassi_dc:
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t r = 0; r < H; ++r)
            for (std::size_t col = 0; col < W; ++col)
              x[shape_.index(r, col, c)] = dd_code(r, col, c) * y[r * W + col];
        return;
      case SystemKind::pmvis_dc:
        std::fill(x.begin(), x.end(), 0.0);
        for (std::size_t r = 0; r < H; ++r)
          for (std::size_t col = 0; col < W; ++col)
            x[shape_.index(r, col, pmvis_channel(r, col))] = y[r * W + col];
        return;
    }
  }

 private:
  void mask_bands(std::span<double> cube) const {
    const std::size_t n = shape_.pixels();
    for (std::size_t c = 0; c < shape_.channels; ++c)
      for (std::size_t i = 0; i < n; ++i)
        if (sys_.mask.values[i] == 0) cube[c * n + i] = 0.0;
  }
  // Dual-disperser code seen by channel c at (r, col): the mask sits in the
  // dispersed plane, where the channel lands at column col + d c. The mask is
  // tiled periodically across that wider plane.
  double dd_code(std::size_t r, std::size_t col, std::size_t c) const {
    return sys_.mask(r, (col + sys_.step * c) % shape_.width);
  }
  std::size_t pmvis_channel(std::size_t r, std::size_t col) const {
    return static_cast<std::size_t>(sys_.mask(r, col) - 1);
  }

  SystemSpec sys_;
  Shape shape_;
  OdisSpec odis_;
};

/// Clean measurements of an ODIS capture; both sequential exposures see the
/// full light budget.
inline Measurements joint_forward(const HsiCube& cube, const OdisSpec& spec) {
  spec.validate();
  if (cube.shape() != spec.cube_shape())
    throw Error(Errc::dimension_mismatch, "cube " + to_string(cube.shape()) +
                                              " does not match spec " +
                                              to_string(spec.cube_shape()));
  Measurements m;
  m.coded = odis_disperse(cube, spec.step).pixels;
  m.pan = odis_pan(cube);
  return m;
}

/// Clean measurements of any architecture with its splitter loss applied.
inline Measurements competitor_forward(const HsiCube& cube, const SystemSpec& sys) {
  const SystemModel model(sys, cube.shape());
  Measurements m;
  Image coded(cube.height(), model.coded_width());
  model.apply_coded(cube.values(), coded.values());
  m.coded_scale = model.coded_scale();
  for (auto& v : coded.data()) v *= m.coded_scale;
  m.coded = std::move(coded);
  if (model.has_pan()) {
    m.pan_scale = model.pan_scale();
    PanImage p = odis_pan(cube);
    for (auto& v : p.data()) v *= m.pan_scale;
    m.pan = std::move(p);
  }
  return m;
}

}  // namespace odis
