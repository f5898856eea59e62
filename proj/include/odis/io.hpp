#pragma once

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "odis/core.hpp"

namespace odis {

// ---------------------------------------------------------------------------
// Cube container: one line of JSON header terminated by '\n', followed by
// H*W*C little-endian float32 values, band-sequential, row-major per band.

inline constexpr std::size_t kMaxHeaderBytes = 1 << 20;

namespace detail {

inline std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

}  // namespace detail

inline nlohmann::json cube_header(const HsiCube& cube) {
  return {{"height", cube.height()},
          {"width", cube.width()},
          {"channels", cube.channels()},
          {"wavelengths_nm", cube.wavelengths()},
          {"dtype", "f32"},
          {"byte_order", "little"},
          {"layout", "band_sequential"}};
}

inline void write_cube(const HsiCube& cube, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open '" + path.string() + "' for writing");
  const std::string header = cube_header(cube).dump() + "\n";
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::vector<std::uint32_t> payload(cube.values().size());
  for (std::size_t i = 0; i < payload.size(); ++i)
    payload[i] = detail::to_little(std::bit_cast<std::uint32_t>(static_cast<float>(cube.values()[i])));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(std::uint32_t)));
  if (!out) throw Error(Errc::io, "failed writing '" + path.string() + "'");
}

inline HsiCube read_cube(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open '" + path.string() + "'");
  std::string header;
  char ch = 0;
  while (in.get(ch) && ch != '\n') {
    header.push_back(ch);
    if (header.size() > kMaxHeaderBytes) throw Error(Errc::malformed, "cube header too long");
  }
  if (ch != '\n') throw Error(Errc::malformed, "cube header is not newline-terminated");

  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed, std::string("cube header is not valid JSON: ") + e.what());
  }
  std::size_t height = 0, width = 0, channels = 0;
  std::vector<double> wavelengths;
  std::string dtype, byte_order, layout;
  try {
    height = h.at("height").get<std::size_t>();
    width = h.at("width").get<std::size_t>();
    channels = h.at("channels").get<std::size_t>();
    wavelengths = h.at("wavelengths_nm").get<std::vector<double>>();
    dtype = h.at("dtype").get<std::string>();
    byte_order = h.at("byte_order").get<std::string>();
    layout = h.at("layout").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed, std::string("cube header field missing or mistyped: ") + e.what());
  }
  if (dtype != "f32") throw Error(Errc::unsupported, "unsupported dtype '" + dtype + "' (only f32)");
  if (byte_order != "little")
    throw Error(Errc::unsupported, "unsupported byte_order '" + byte_order + "'");
  if (layout != "band_sequential")
    throw Error(Errc::unsupported, "unsupported layout '" + layout + "'");
  if (height == 0 || width == 0 || channels == 0)
    throw Error(Errc::malformed, "cube header has a zero dimension");

  const std::size_t count = height * width * channels;
  const std::size_t expected = count * sizeof(float);
  std::vector<char> payload(std::istreambuf_iterator<char>(in), {});
  if (payload.size() != expected)
    throw Error(Errc::malformed, "payload length mismatch: expected " + std::to_string(expected) +
                                     " bytes, found " + std::to_string(payload.size()));
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t raw;
    std::memcpy(&raw, payload.data() + i * 4, 4);
    const float v = std::bit_cast<float>(detail::to_little(raw));
    if (!std::isfinite(v))
      throw Error(Errc::non_finite, "non-finite payload value at index " + std::to_string(i));
    data[i] = v;
  }
  return make_cube(height, width, channels, std::move(wavelengths), std::move(data));
}

/// Wraps a 2-D measurement as a single-channel cube for storage.
inline HsiCube image_as_cube(const Image& img, double wavelength_nm = 0.0) {
  return make_cube(img.height(), img.width(), 1, {wavelength_nm}, img.data());
}

inline Image cube_as_image(const HsiCube& cube) {
  if (cube.channels() != 1)
    throw Error(Errc::dimension_mismatch, "measurement files must have exactly one channel");
  return band(cube, 0);
}

// ---------------------------------------------------------------------------
// Synthetic scenes.

enum class SceneKind { gaussian_blobs, smooth_gradient, checker_spectra };

inline SceneKind parse_scene_kind(const std::string& s) {
  if (s == "gaussian_blobs") return SceneKind::gaussian_blobs;
  if (s == "smooth_gradient") return SceneKind::smooth_gradient;
  if (s == "checker_spectra") return SceneKind::checker_spectra;
  throw Error(Errc::unsupported, "unknown scene kind '" + s + "'");
}

inline std::string to_string(SceneKind k) {
  switch (k) {
    case SceneKind::gaussian_blobs: return "gaussian_blobs";
    case SceneKind::smooth_gradient: return "smooth_gradient";
    case SceneKind::checker_spectra: return "checker_spectra";
  }
  return "?";
}

/// 450-650 nm, or 550 nm for a single band.
inline std::vector<double> default_wavelengths(std::size_t channels) {
  if (channels == 1) return {550.0};
  return linspace_wavelengths(450.0, 650.0, channels);
}

/// Deterministic scenes with values in [0, 1].
///
/// smooth_gradient (seed ignored):
///   X(r, y, c) = (c + 1) / C * (r / (H - 1) + y / (W - 1)) / 2,  c = 0..C-1,
///   with a ratio taken as 0 when its dimension is 1.
/// gaussian_blobs: a 0.05 floor plus six Gaussian spots, each with its own
///   Gaussian-bump spectrum, clamped to [0, 1].
/// checker_spectra: square blocks (side max(2, min(H, W) / 8)) each carrying
///   one of four smooth random spectra.
inline HsiCube synth_cube(SceneKind kind, const Shape& dims, std::uint64_t seed) {
  if (dims.height == 0 || dims.width == 0 || dims.channels == 0)
    throw Error(Errc::dimension_mismatch, "scene dimensions must be positive");
  const std::size_t H = dims.height, W = dims.width, C = dims.channels;
  Volume v(dims);
  auto ratio = [](std::size_t i, std::size_t n) {
    return n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
  };
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  switch (kind) {
    case SceneKind::smooth_gradient:
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t r = 0; r < H; ++r)
          for (std::size_t y = 0; y < W; ++y)
            v(r, y, c) = static_cast<double>(c + 1) / static_cast<double>(C) * 0.5 *
                         (ratio(r, H) + ratio(y, W));
      break;
    case SceneKind::gaussian_blobs: {
      struct Blob {
        double r, y, radius, amp, centre, spread;
      };
      std::vector<Blob> blobs(6);
      const double size = static_cast<double>(std::min(H, W));
      for (auto& b : blobs) {
        b.r = unit(rng) * static_cast<double>(H - 1);
        b.y = unit(rng) * static_cast<double>(W - 1);
        b.radius = std::max(0.5, (0.08 + 0.17 * unit(rng)) * size);
        b.amp = 0.3 + 0.5 * unit(rng);
        b.centre = unit(rng);
        b.spread = 0.15 + 0.25 * unit(rng);
      }
      for (std::size_t c = 0; c < C; ++c) {
        const double t = ratio(c, C);
        for (std::size_t r = 0; r < H; ++r)
          for (std::size_t y = 0; y < W; ++y) {
            double s = 0.05;
            for (const auto& b : blobs) {
              const double dr = static_cast<double>(r) - b.r, dy = static_cast<double>(y) - b.y;
              const double spatial = std::exp(-(dr * dr + dy * dy) / (2 * b.radius * b.radius));
              const double dt = (t - b.centre) / b.spread;
              s += b.amp * spatial * std::exp(-0.5 * dt * dt);
            }
            v(r, y, c) = std::clamp(s, 0.0, 1.0);
          }
      }
      break;
    }
    case SceneKind::checker_spectra: {
      const std::size_t block = std::max<std::size_t>(2, std::min(H, W) / 8);
      std::vector<std::vector<double>> palette(4, std::vector<double>(C));
      for (auto& spectrum : palette) {
        const double base = 0.25 + 0.3 * unit(rng), amp = 0.1 + 0.2 * unit(rng);
        const double freq = 0.5 + 1.5 * unit(rng), phase = 2 * 3.141592653589793 * unit(rng);
        for (std::size_t c = 0; c < C; ++c)
          spectrum[c] = std::clamp(base + amp * std::cos(2 * 3.141592653589793 * freq * ratio(c, C) + phase), 0.0, 1.0);
      }
      const std::size_t br = (H + block - 1) / block, bc = (W + block - 1) / block;
      std::vector<std::size_t> assign(br * bc);
      std::uniform_int_distribution<std::size_t> pick(0, palette.size() - 1);
      for (auto& a : assign) a = pick(rng);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t r = 0; r < H; ++r)
          for (std::size_t y = 0; y < W; ++y) v(r, y, c) = palette[assign[(r / block) * bc + y / block]][c];
      break;
    }
  }
  return make_cube(v, default_wavelengths(C));
}

// ---------------------------------------------------------------------------
// PNG output.

namespace detail {

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* file = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (file) std::fclose(file);
  }
};

inline void write_png(const std::filesystem::path& path, std::size_t height, std::size_t width,
                      int bit_depth, int color_type, const std::vector<std::uint8_t>& rows) {
  PngWriter w;
  w.file = std::fopen(path.string().c_str(), "wb");
  if (!w.file) throw Error(Errc::io, "cannot open '" + path.string() + "' for writing");
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) throw Error(Errc::io, "png_create_write_struct failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw Error(Errc::io, "png_create_info_struct failed");
  if (setjmp(png_jmpbuf(w.png))) throw Error(Errc::io, "libpng error writing '" + path.string() + "'");
  png_init_io(w.png, w.file);
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  const std::size_t stride = rows.size() / height;
  for (std::size_t r = 0; r < height; ++r)
    png_write_row(w.png, const_cast<png_bytep>(rows.data() + r * stride));
  png_write_end(w.png, nullptr);
}

}  // namespace detail

/// 8-bit RGB PNG from interleaved bytes.
inline void write_png_rgb(const std::filesystem::path& path, std::size_t height, std::size_t width,
                          const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != height * width * 3) throw Error(Errc::dimension_mismatch, "RGB buffer size mismatch");
  detail::write_png(path, height, width, 8, PNG_COLOR_TYPE_RGB, rgb);
}

/// Grayscale PNG of band c (0-based), linearly scaled from [0, max] to the
/// full pixel range.
inline void render_band_png(const HsiCube& cube, std::size_t c, const std::filesystem::path& path,
                            int bit_depth = 8) {
  if (bit_depth != 8 && bit_depth != 16) throw Error(Errc::invalid_value, "bit depth must be 8 or 16");
  const Image b = band(cube, c);
  const double peak = *std::max_element(b.data().begin(), b.data().end());
  const double full = bit_depth == 8 ? 255.0 : 65535.0;
  std::vector<std::uint8_t> rows;
  rows.reserve(b.size() * (bit_depth / 8));
  for (double v : b.data()) {
    const auto q = static_cast<std::uint16_t>(peak > 0 ? std::lround(std::clamp(v / peak, 0.0, 1.0) * full) : 0);
    if (bit_depth == 16) rows.push_back(static_cast<std::uint8_t>(q >> 8));
    rows.push_back(static_cast<std::uint8_t>(q & 0xFF));
  }
  detail::write_png(path, b.height(), b.width(), bit_depth, PNG_COLOR_TYPE_GRAY, rows);
}

/// 3 x C response, rows = R, G, B.
using ResponseMatrix = std::vector<std::vector<double>>;

/// Gaussian responses at 610 / 540 / 470 nm (sigma 40 nm), rows summing to 1.
inline ResponseMatrix default_rgb_response(const std::vector<double>& wavelengths) {
  ResponseMatrix m(3, std::vector<double>(wavelengths.size()));
  const double centres[3] = {610.0, 540.0, 470.0};
  for (std::size_t k = 0; k < 3; ++k) {
    double sum = 0.0;
    for (std::size_t c = 0; c < wavelengths.size(); ++c) {
      const double t = (wavelengths[c] - centres[k]) / 40.0;
      m[k][c] = std::exp(-0.5 * t * t);
      sum += m[k][c];
    }
    for (auto& v : m[k]) v /= sum;
  }
  return m;
}

inline ResponseMatrix read_response_csv(const std::filesystem::path& path, std::size_t channels) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open '" + path.string() + "'");
  ResponseMatrix m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(Errc::malformed, "response matrix entry '" + cell + "' is not a number");
      }
    }
    m.push_back(std::move(row));
  }
  if (m.size() != 3) throw Error(Errc::dimension_mismatch, "response matrix must have 3 rows");
  for (const auto& row : m)
    if (row.size() != channels)
      throw Error(Errc::dimension_mismatch, "response matrix rows must have " + std::to_string(channels) + " entries");
  return m;
}

/// 8-bit pseudo-RGB; all three channels share one [0, max] scale.
inline void render_pseudo_rgb(const HsiCube& cube, const std::optional<ResponseMatrix>& response,
                              const std::filesystem::path& path) {
  const ResponseMatrix m = response ? *response : default_rgb_response(cube.wavelengths());
  if (m.size() != 3) throw Error(Errc::dimension_mismatch, "response matrix must have 3 rows");
  for (const auto& row : m)
    if (row.size() != cube.channels())
      throw Error(Errc::dimension_mismatch, "response matrix must be 3 x C");
  const std::size_t n = cube.height() * cube.width();
  std::vector<double> rgb(n * 3, 0.0);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t c = 0; c < cube.channels(); ++c) {
      const auto b = cube.volume().band(c);
      for (std::size_t i = 0; i < n; ++i) rgb[i * 3 + k] += m[k][c] * b[i];
    }
  const double peak = *std::max_element(rgb.begin(), rgb.end());
  std::vector<std::uint8_t> bytes(rgb.size());
  for (std::size_t i = 0; i < rgb.size(); ++i)
    bytes[i] = static_cast<std::uint8_t>(peak > 0 ? std::lround(std::clamp(rgb[i] / peak, 0.0, 1.0) * 255.0) : 0);
  write_png_rgb(path, cube.height(), cube.width(), bytes);
}

// ---------------------------------------------------------------------------
// CSV helpers.

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

/// Rows of (wavelength_nm, value, value / max value of the spectrum).
inline void export_spectrum_csv(const HsiCube& cube, std::size_t row, std::size_t col,
                                const std::filesystem::path& path) {
  if (row >= cube.height() || col >= cube.width())
    throw Error(Errc::out_of_range, "pixel (" + std::to_string(row) + ", " + std::to_string(col) +
                                        ") outside " + to_string(cube.shape()));
  double peak = 0.0;
  for (std::size_t c = 0; c < cube.channels(); ++c) peak = std::max(peak, cube(row, col, c));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open '" + path.string() + "' for writing");
  out << "wavelength_nm,value,value_normalized\n";
  for (std::size_t c = 0; c < cube.channels(); ++c) {
    const double v = cube(row, col, c);
    out << csv_number(cube.wavelengths()[c]) << ',' << csv_number(v) << ','
        << csv_number(peak > 0 ? v / peak : 0.0) << '\n';
  }
}

}  // namespace odis
