#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace odis {

enum class Errc {
  dimension_mismatch,
  invalid_value,
  out_of_range,
  not_monotone,
  non_finite,
  unsupported,
  malformed,
  io,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Height x width x channels. Storage is band-sequential: all of band 0, then
// band 1, ...; rows are contiguous inside a band.
struct Shape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t pixels() const noexcept { return height * width; }
  std::size_t size() const noexcept { return height * width * channels; }
  std::size_t index(std::size_t row, std::size_t col, std::size_t band) const noexcept {
    return (band * height + row) * width + col;
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" + std::to_string(s.channels);
}

/// Unconstrained H x W x C array. Operator outputs (adjoints, residuals,
/// solver iterates) live here; they may be negative.
class Volume {
 public:
  Volume() = default;
  explicit Volume(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {}
  Volume(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size())
      throw Error(Errc::dimension_mismatch, "volume " + to_string(shape_) + " needs " +
                                                std::to_string(shape_.size()) + " values, got " +
                                                std::to_string(data_.size()));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t row, std::size_t col, std::size_t band) {
    return data_[shape_.index(row, col, band)];
  }
  double operator()(std::size_t row, std::size_t col, std::size_t band) const {
    return data_[shape_.index(row, col, band)];
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> band(std::size_t c) { return values().subspan(c * shape_.pixels(), shape_.pixels()); }
  std::span<const double> band(std::size_t c) const {
    return values().subspan(c * shape_.pixels(), shape_.pixels());
  }
  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

 private:
  Shape shape_{};
  std::vector<double> data_;
};

/// Row-major 2-D image. Used for PAN images, single bands and coded arms.
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, double fill = 0.0)
      : height_(height), width_(width), data_(height * width, fill) {}
  Image(std::size_t height, std::size_t width, std::vector<double> data)
      : height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != height_ * width_)
      throw Error(Errc::dimension_mismatch, "image " + std::to_string(height_) + "x" +
                                                std::to_string(width_) + " needs " +
                                                std::to_string(height_ * width_) + " values, got " +
                                                std::to_string(data_.size()));
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t row, std::size_t col) { return data_[row * width_ + col]; }
  double operator()(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

using PanImage = Image;

/// Dispersed measurement of an H x W x C cube with integer step d: the
/// detector is W + d(C-1) columns wide.
struct DispersedImage {
  Image pixels;
  std::size_t source_width = 0;
  std::size_t channels = 0;
  std::size_t step = 1;

  static std::size_t detector_width(std::size_t width, std::size_t channels, std::size_t step) {
    return width + step * (channels - 1);
  }
};

struct Wavelengths {
  double start_nm = 0.0;
  double end_nm = 0.0;
  std::size_t count = 0;
};

/// C equally spaced wavelengths including both endpoints.
inline std::vector<double> linspace_wavelengths(double start_nm, double end_nm, std::size_t count) {
  if (count < 2) throw Error(Errc::invalid_value, "linspace_wavelengths needs at least 2 samples");
  if (!(start_nm < end_nm)) throw Error(Errc::not_monotone, "wavelength start must be below end");
  std::vector<double> out(count);
  const double step = (end_nm - start_nm) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) out[i] = start_nm + step * static_cast<double>(i);
  out.back() = end_nm;
  return out;
}

inline std::vector<double> linspace_wavelengths(const Wavelengths& w) {
  return linspace_wavelengths(w.start_nm, w.end_nm, w.count);
}

/// Validated hyperspectral scene: finite, non-negative intensities and
/// strictly increasing wavelength labels. Immutable after construction.
class HsiCube {
 public:
  HsiCube() = default;

  const Shape& shape() const noexcept { return volume_.shape(); }
  std::size_t height() const noexcept { return shape().height; }
  std::size_t width() const noexcept { return shape().width; }
  std::size_t channels() const noexcept { return shape().channels; }
  const std::vector<double>& wavelengths() const noexcept { return wavelengths_; }
  const Volume& volume() const noexcept { return volume_; }
  std::span<const double> values() const noexcept { return volume_.values(); }
  double operator()(std::size_t row, std::size_t col, std::size_t band) const {
    return volume_(row, col, band);
  }

  friend HsiCube make_cube(std::size_t, std::size_t, std::size_t, std::vector<double>,
                           std::vector<double>);

 private:
  Volume volume_;
  std::vector<double> wavelengths_;
};

inline void validate_wavelengths(const std::vector<double>& wavelengths, std::size_t channels) {
  if (wavelengths.size() != channels)
    throw Error(Errc::dimension_mismatch, "expected " + std::to_string(channels) +
                                              " wavelengths, got " +
                                              std::to_string(wavelengths.size()));
  for (std::size_t i = 0; i < wavelengths.size(); ++i) {
    if (!std::isfinite(wavelengths[i]))
      throw Error(Errc::non_finite, "non-finite wavelength at index " + std::to_string(i));
    if (i > 0 && !(wavelengths[i - 1] < wavelengths[i]))
      throw Error(Errc::not_monotone, "wavelengths must be strictly increasing (index " +
                                          std::to_string(i) + ")");
  }
}

inline HsiCube make_cube(std::size_t height, std::size_t width, std::size_t channels,
                         std::vector<double> wavelengths, std::vector<double> data) {
  if (height == 0 || width == 0 || channels == 0)
    throw Error(Errc::dimension_mismatch, "cube dimensions must be positive");
  const Shape shape{height, width, channels};
  if (data.size() != shape.size())
    throw Error(Errc::dimension_mismatch, "cube " + to_string(shape) + " needs " +
                                              std::to_string(shape.size()) + " values, got " +
                                              std::to_string(data.size()));
  validate_wavelengths(wavelengths, channels);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i]))
      throw Error(Errc::non_finite, "non-finite intensity at flat index " + std::to_string(i));
    if (data[i] < 0.0)
      throw Error(Errc::invalid_value, "negative intensity at flat index " + std::to_string(i));
  }
  HsiCube cube;
  cube.volume_ = Volume(shape, std::move(data));
  cube.wavelengths_ = std::move(wavelengths);
  return cube;
}

inline HsiCube make_cube(const Volume& volume, std::vector<double> wavelengths) {
  const auto& s = volume.shape();
  return make_cube(s.height, s.width, s.channels, std::move(wavelengths), volume.data());
}

/// Band c (0-based) as an H x W image.
inline Image band(const HsiCube& cube, std::size_t c) {
  if (c >= cube.channels())
    throw Error(Errc::out_of_range, "band " + std::to_string(c) + " out of range for " +
                                        std::to_string(cube.channels()) + " channels");
  auto b = cube.volume().band(c);
  return Image(cube.height(), cube.width(), std::vector<double>(b.begin(), b.end()));
}

// Small vector helpers shared by the solvers.
inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace odis
