#pragma once

#include <fftw3.h>

#include <atomic>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>

#include "odis/core.hpp"

namespace odis {

namespace detail {

// FFTW's planner is not thread-safe; execution with the new-array API is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};
struct PlanDestroy {
  void operator()(fftw_plan p) const noexcept {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(p);
  }
};
using PlanPtr = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDestroy>;

}  // namespace detail

template <class T>
using FftwBuffer = std::unique_ptr<T[], detail::FftwFree>;

inline FftwBuffer<double> fftw_real_buffer(std::size_t n) {
  return FftwBuffer<double>(fftw_alloc_real(n));
}
inline FftwBuffer<std::complex<double>> fftw_complex_buffer(std::size_t n) {
  return FftwBuffer<std::complex<double>>(reinterpret_cast<std::complex<double>*>(fftw_alloc_complex(n)));
}

/// Smallest n' >= n whose only prime factors are 2, 3, 5, 7.
inline std::size_t next_fast_fft_size(std::size_t n) {
  for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
    std::size_t r = m;
    for (std::size_t p : {2u, 3u, 5u, 7u})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

/// Batched real <-> half-complex transforms of `count` contiguous lines of
/// length `length`. One call to forward()/inverse() is one FFT pass over the
/// whole batch; passes are counted for cost instrumentation.
class LineFft {
 public:
  LineFft(std::size_t length, std::size_t count) : length_(length), count_(count) {
    if (length == 0 || count == 0) throw Error(Errc::invalid_value, "FFT batch must be non-empty");
    auto real = fftw_real_buffer(length * count);
    auto spec = fftw_complex_buffer(bins() * count);
    int n[] = {static_cast<int>(length)};
    std::lock_guard lock(detail::fftw_planner_mutex());
    forward_.reset(fftw_plan_many_dft_r2c(1, n, static_cast<int>(count), real.get(), nullptr, 1,
                                          static_cast<int>(length), as_fftw(spec.get()), nullptr,
                                          1, static_cast<int>(bins()), FFTW_ESTIMATE));
    inverse_.reset(fftw_plan_many_dft_c2r(1, n, static_cast<int>(count), as_fftw(spec.get()),
                                          nullptr, 1, static_cast<int>(bins()), real.get(),
                                          nullptr, 1, static_cast<int>(length), FFTW_ESTIMATE));
    if (!forward_ || !inverse_) throw Error(Errc::unsupported, "FFTW planning failed");
  }

  std::size_t length() const noexcept { return length_; }
  std::size_t count() const noexcept { return count_; }
  std::size_t bins() const noexcept { return length_ / 2 + 1; }

  // Buffers must come from fftw_real_buffer / fftw_complex_buffer.
  void forward(double* in, std::complex<double>* out) const {
    fftw_execute_dft_r2c(forward_.get(), in, as_fftw(out));
    forward_passes_.fetch_add(1, std::memory_order_relaxed);
  }
  // Unnormalized: the result is scaled by length().
  void inverse(std::complex<double>* in, double* out) const {
    fftw_execute_dft_c2r(inverse_.get(), as_fftw(in), out);
    inverse_passes_.fetch_add(1, std::memory_order_relaxed);
  }

  std::size_t forward_passes() const noexcept { return forward_passes_.load(); }
  std::size_t inverse_passes() const noexcept { return inverse_passes_.load(); }
  void reset_counters() const noexcept {
    forward_passes_ = 0;
    inverse_passes_ = 0;
  }

 private:
  static fftw_complex* as_fftw(std::complex<double>* p) { return reinterpret_cast<fftw_complex*>(p); }

  std::size_t length_;
  std::size_t count_;
  detail::PlanPtr forward_;
  detail::PlanPtr inverse_;
  mutable std::atomic<std::size_t> forward_passes_{0};
  mutable std::atomic<std::size_t> inverse_passes_{0};
};

}  // namespace odis
