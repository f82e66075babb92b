#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <deque>
#include <cstddef>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "numerics.hpp"

namespace epiwave {

enum class KernelFamily { gaussian, laplace, tabulated };

/**
 * Even, positive, unit-mass 1-D interaction density K0 (the marginal of
 * a radially symmetric kernel), together with its moment-generating
 * function and exponential abscissa Lambda = sup{mu >= 0 : mgf(mu) < inf}.
 */
class Kernel {
public:
  static Kernel gaussian(double sigma) {
    detail::require(sigma > 0.0, "kernel: gaussian sigma must be positive");
    Kernel k;
    k.family_ = KernelFamily::gaussian;
    k.scale_ = sigma;
    k.abscissa_ = kInf;
    return k;
  }

  static Kernel laplace(double b) {
    detail::require(b > 0.0, "kernel: laplace scale must be positive");
    Kernel k;
    k.family_ = KernelFamily::laplace;
    k.scale_ = b;
    k.abscissa_ = 1.0 / b;
    return k;
  }

  /**
   * K0 sampled at 0 = z_0 < z_1 < ... (mirrored to negative z). The
   * profile is rescaled to unit mass; a notice is recorded when the
   * supplied mass is off by more than 1e-3. Lambda is estimated from the
   * slope of log K0 over the last decade of samples.
   */
  static Kernel tabulated(std::vector<double> z, std::vector<double> values) {
    detail::require(z.size() >= 4 && z.size() == values.size(), "kernel: tabulated kernel needs >= 4 (z, K0) pairs");
    detail::require(z.front() == 0.0, "kernel: tabulated z must start at 0");
    for (std::size_t k = 1; k < z.size(); ++k) detail::require(z[k] > z[k - 1], "kernel: tabulated z must increase");
    for (double v : values)
      detail::require(v > 0.0 && std::isfinite(v), "kernel: K0 must be positive on its stored range");
    Kernel k;
    k.family_ = KernelFamily::tabulated;
    k.z_ = std::move(z);
    k.values_ = std::move(values);
    double half = 0.0;
    for (std::size_t j = 1; j < k.z_.size(); ++j) half += 0.5 * (k.z_[j] - k.z_[j - 1]) * (k.values_[j] + k.values_[j - 1]);
    const double mass = 2.0 * half;
    if (std::abs(mass - 1.0) > 1e-3) k.notices_.push_back("tabulated kernel mass " + std::to_string(mass) + " rescaled to 1");
    for (double& v : k.values_) v /= mass;
    k.estimate_abscissa();
    return k;
  }

  KernelFamily family() const { return family_; }
  double scale() const { return scale_; }
  double abscissa() const { return abscissa_; }
  bool abscissa_estimated() const { return family_ == KernelFamily::tabulated; }
  const std::vector<std::string>& notices() const { return notices_; }

  double density(double z) const {
    z = std::abs(z);
    switch (family_) {
    case KernelFamily::gaussian:
      return std::exp(-0.5 * z * z / (scale_ * scale_)) / (scale_ * std::sqrt(2.0 * std::numbers::pi));
    case KernelFamily::laplace:
      return std::exp(-z / scale_) / (2.0 * scale_);
    case KernelFamily::tabulated: {
      if (z > z_.back()) return 0.0;
      const auto it = std::upper_bound(z_.begin(), z_.end(), z);
      if (it == z_.end()) return values_.back();
      const std::size_t j = static_cast<std::size_t>(it - z_.begin());
      const double t = (z - z_[j - 1]) / (z_[j] - z_[j - 1]);
      return values_[j - 1] + t * (values_[j] - values_[j - 1]);
    }
    }
    return 0.0;
  }

  /// mgf(mu) = int K0(z) exp(mu z) dz, or nullopt when it diverges.
  std::optional<double> mgf(double mu) const {
    const double a = std::abs(mu);
    if (a >= abscissa_) return std::nullopt;
    switch (family_) {
    case KernelFamily::gaussian:
      return std::exp(0.5 * scale_ * scale_ * mu * mu);
    case KernelFamily::laplace:
      return 1.0 / (1.0 - scale_ * scale_ * mu * mu);
    case KernelFamily::tabulated: {
      double body = 0.0;
      for (std::size_t j = 1; j < z_.size(); ++j) {
        const double f0 = values_[j - 1] * std::cosh(a * z_[j - 1]);
        const double f1 = values_[j] * std::cosh(a * z_[j]);
        body += 0.5 * (z_[j] - z_[j - 1]) * (f0 + f1);
      }
      body *= 2.0;
      double tail = 0.0;
      if (std::isfinite(abscissa_)) tail = values_.back() * std::exp(a * z_.back()) / (abscissa_ - a);
      if (tail > 1e-3 * body) return std::nullopt;
      return body + tail;
    }
    }
    return std::nullopt;
  }

  /// Smallest r with mass outside [-r, r] below eps.
  double truncation_radius(double eps) const {
    detail::require(eps > 0.0 && eps < 1.0, "kernel: truncation mass must lie in (0,1)");
    switch (family_) {
    case KernelFamily::gaussian: {
      const double s = bisect([&](double u) { return std::erfc(u) - eps; }, 0.0, 40.0, 1e-14);
      return s * std::sqrt(2.0) * scale_;
    }
    case KernelFamily::laplace:
      return scale_ * std::log(1.0 / eps);
    case KernelFamily::tabulated:
      return z_.back();
    }
    return 0.0;
  }

  /**
   * Discrete kernel taps K0(l dx) dx for |l| <= R, R = ceil(radius / dx),
   * renormalized to unit sum so that constants are preserved exactly.
   */
  std::vector<double> taps(double dx, double eps = 1e-10) const {
    detail::require(dx > 0.0, "kernel: grid step must be positive");
    const auto R = static_cast<std::size_t>(std::ceil(truncation_radius(eps) / dx));
    std::vector<double> w(2 * R + 1);
    double sum = 0.0;
    for (std::size_t l = 0; l < w.size(); ++l) {
      w[l] = density((static_cast<double>(l) - static_cast<double>(R)) * dx) * dx;
      sum += w[l];
    }
    for (double& v : w) v /= sum;
    return w;
  }

private:
  void estimate_abscissa() {
    // last decade: samples within a factor 10 of the smallest stored value
    const double floor_v = *std::min_element(values_.begin(), values_.end());
    std::vector<double> zs, ls;
    for (std::size_t j = 0; j < z_.size(); ++j)
      if (values_[j] <= 10.0 * floor_v && z_[j] > 0.0) {
        zs.push_back(z_[j]);
        ls.push_back(std::log(values_[j]));
      }
    if (zs.size() < 4) {
      zs.clear();
      ls.clear();
      for (std::size_t j = z_.size() - 4; j < z_.size(); ++j) {
        zs.push_back(z_[j]);
        ls.push_back(std::log(values_[j]));
      }
    }
    const auto whole = least_squares(zs, ls);
    // Gaussian-type curvature: the log-slope keeps steepening across the outer half of the table
    std::vector<double> za, la, zb, lb;
    const double zmax = z_.back();
    for (std::size_t j = 0; j < z_.size(); ++j) {
      if (z_[j] >= 0.5 * zmax && z_[j] <= 0.75 * zmax) {
        za.push_back(z_[j]);
        la.push_back(std::log(values_[j]));
      }
      if (z_[j] >= 0.75 * zmax) {
        zb.push_back(z_[j]);
        lb.push_back(std::log(values_[j]));
      }
    }
    bool curved = false;
    if (za.size() >= 2 && zb.size() >= 2) {
      const double inner = least_squares(za, la).slope, outer = least_squares(zb, lb).slope;
      curved = inner < 0.0 && outer < 1.2 * inner;
    }
    abscissa_ = curved ? kInf : std::max(std::abs(whole.slope), 1e-12);
  }

  KernelFamily family_ = KernelFamily::gaussian;
  double scale_ = 1.0;
  double abscissa_ = kInf;
  std::vector<double> z_, values_;
  std::vector<std::string> notices_;
};

inline std::optional<double> mgf(const Kernel& kernel, double mu) { return kernel.mgf(mu); }

/// How a field is continued past the ends of its grid before convolving.
enum class Extension { constant, zero };

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

struct FftwPlanDestroy {
  void operator()(fftw_plan_s* p) const {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(p);
  }
};

inline std::size_t fast_fft_size(std::size_t n) {
  for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
    std::size_t r = m;
    for (std::size_t p : {2u, 3u, 5u, 7u})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

inline double extended_value(std::span<const double> f, std::ptrdiff_t j, Extension ext) {
  const auto n = static_cast<std::ptrdiff_t>(f.size());
  if (j >= 0 && j < n) return f[static_cast<std::size_t>(j)];
  if (ext == Extension::zero) return 0.0;
  return j < 0 ? f.front() : f.back();
}

} // namespace detail

/// Direct O(N R) linear convolution with kernel taps centred at index R.
inline void convolve_direct(std::span<const double> taps, std::span<const double> field, std::span<double> out,
                            Extension ext) {
  const auto R = static_cast<std::ptrdiff_t>(taps.size() / 2);
  const auto n = static_cast<std::ptrdiff_t>(field.size());
  detail::require(n >= static_cast<std::ptrdiff_t>(taps.size()), "convolve: field shorter than the kernel width");
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    double s = 0.0;
    if (j - R >= 0 && j + R < n) {
      for (std::ptrdiff_t l = -R; l <= R; ++l) s += taps[static_cast<std::size_t>(l + R)] * field[static_cast<std::size_t>(j - l)];
    } else {
      for (std::ptrdiff_t l = -R; l <= R; ++l)
        s += taps[static_cast<std::size_t>(l + R)] * detail::extended_value(field, j - l, ext);
    }
    out[static_cast<std::size_t>(j)] = s;
  }
}

/**
 * Linear (zero-padded, non-circular) FFT convolution of fields of a fixed
 * length with fixed taps. Owns its FFTW plans and work buffers, so one
 * instance must not be shared between threads.
 */
class Convolver {
public:
  Convolver(std::vector<double> taps, std::size_t n) : taps_(std::move(taps)), n_(n) {
    detail::require(taps_.size() % 2 == 1, "convolve: taps must have odd length");
    R_ = taps_.size() / 2;
    detail::require(n_ >= taps_.size(), "convolve: field shorter than the kernel width");
    L_ = detail::fast_fft_size(n_ + 4 * R_);
    const std::size_t nc = L_ / 2 + 1;
    real_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * L_)));
    spec_.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * nc)));
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      forward_.reset(fftw_plan_dft_r2c_1d(static_cast<int>(L_), real_.get(), spec_.get(), FFTW_ESTIMATE));
      backward_.reset(fftw_plan_dft_c2r_1d(static_cast<int>(L_), spec_.get(), real_.get(), FFTW_ESTIMATE));
    }
    kspec_ = spectrum_of(taps_);
  }

  Convolver(Convolver&&) noexcept = default;
  Convolver& operator=(Convolver&&) noexcept = default;

  std::size_t size() const { return n_; }
  std::size_t radius() const { return R_; }
  std::span<const double> taps() const { return taps_; }

  void apply(std::span<const double> field, std::span<double> out, Extension ext = Extension::constant) {
    detail::require(field.size() == n_ && out.size() == n_, "convolve: field length does not match the plan");
    double* p = real_.get();
    const double left = ext == Extension::constant ? field.front() : 0.0;
    const double right = ext == Extension::constant ? field.back() : 0.0;
    std::fill(p, p + R_, left);
    std::copy(field.begin(), field.end(), p + R_);
    std::fill(p + R_ + n_, p + 2 * R_ + n_, right);
    std::fill(p + 2 * R_ + n_, p + L_, 0.0);
    transform(kspec_);
    std::copy(p + 2 * R_, p + 2 * R_ + n_, out.begin());
  }

  std::vector<double> apply(std::span<const double> field, Extension ext = Extension::constant) {
    std::vector<double> out(field.size());
    apply(field, out, ext);
    return out;
  }

  /**
   * Same convolution computed on the exponentially weighted field
   * f_j exp(s (j - j0)) with taps K_l exp(s l), then unweighted. Rounding
   * errors scale with the weighted field, so for s > 0 the result keeps
   * relative accuracy to the right of j0 as long as f decays there at
   * least as fast as exp(-s j); faster growth of the weights amplifies noise.
   */
  void apply_weighted(std::span<const double> field, std::span<double> out, Extension ext, double s, std::size_t j0) {
    detail::require(field.size() == n_ && out.size() == n_, "convolve: field length does not match the plan");
    double* p = real_.get();
    const auto R = static_cast<std::ptrdiff_t>(R_);
    const auto n = static_cast<std::ptrdiff_t>(n_);
    const auto c = static_cast<std::ptrdiff_t>(j0);
    const auto& w = weighted(s);
    // w.powers[k + offset] = exp(s k), clamped to the finite range
    const std::ptrdiff_t off = n + 2 * R;
    const double* pw = w.powers.data() + off;
    const double left = ext == Extension::constant ? field.front() : 0.0;
    const double right = ext == Extension::constant ? field.back() : 0.0;
    for (std::ptrdiff_t j = -R; j < 0; ++j) p[j + R] = left == 0.0 ? 0.0 : left * pw[j - c];
    const double* fp = field.data();
    for (std::ptrdiff_t j = 0; j < n; ++j) p[j + R] = fp[j] * pw[j - c];
    for (std::ptrdiff_t j = n; j < n + R; ++j) p[j + R] = right == 0.0 ? 0.0 : right * pw[j - c];
    std::fill(p + 2 * R_ + n_, p + L_, 0.0);
    transform(w.spectrum);
    double* o = out.data();
    for (std::ptrdiff_t j = 0; j < n; ++j) o[j] = p[2 * R + j] * pw[c - j];
  }

  /**
   * Convolution whose far tails on both sides keep relative accuracy: the
   * plain FFT result is used where the field is within a factor `floor`
   * of its maximum, and weighted transforms with rate s per cell beyond
   * the outermost such points. Absolute FFT rounding (about 1e-16 of the
   * maximum) would otherwise dominate exponentially small tails. A tail
   * that decays slower than the weights (or grows again) inflates the
   * weighted rounding error, as do the weighted taps; each output keeps
   * whichever of the two results has the smaller a priori bound
   * (largest weighted input times the weighted taps' 1-norm).
   */
  void apply_tail_accurate(std::span<const double> field, std::span<double> out, Extension ext, double s,
                           double floor = 1e-3) {
    apply(field, out, ext);
    double peak = 0.0;
    for (double v : field) peak = std::max(peak, std::abs(v));
    if (peak == 0.0 || s <= 0.0) return;
    const double level = floor * peak;
    double norm = 0.0;
    for (double v : taps_) norm += std::abs(v);
    // rounding bound of the plain result, up to the common factor eps
    const double log_plain = std::log(peak) + std::log(norm);
    std::size_t lo = 0, hi = n_ - 1;
    while (lo < n_ && std::abs(field[lo]) < level) ++lo;
    while (hi > lo && std::abs(field[hi]) < level) --hi;
    tail_.resize(n_);
    if (hi + 1 < n_) {
      // log of the largest weighted value, including the extension
      double log_big = std::log(peak);
      const double right = ext == Extension::constant ? std::abs(field.back()) : 0.0;
      for (std::size_t j = hi + 1; j < n_; ++j)
        if (field[j] != 0.0) log_big = std::max(log_big, std::log(std::abs(field[j])) + s * static_cast<double>(j - hi));
      if (right > 0.0) log_big = std::max(log_big, std::log(right) + s * static_cast<double>(n_ + R_ - hi));
      log_big += weighted(s).log_norm;
      apply_weighted(field, tail_, ext, s, hi);
      for (std::size_t j = hi + 1; j < n_; ++j) {
        if (log_big - s * static_cast<double>(j - hi) > log_plain) continue;
        detail::ensure(std::isfinite(tail_[j]), "convolve: weighted transform overflowed; lower the tail rate");
        out[j] = tail_[j];
      }
    }
    if (lo > 0) {
      double log_big = std::log(peak);
      const double left = ext == Extension::constant ? std::abs(field.front()) : 0.0;
      for (std::size_t j = 0; j < lo; ++j)
        if (field[j] != 0.0) log_big = std::max(log_big, std::log(std::abs(field[j])) + s * static_cast<double>(lo - j));
      if (left > 0.0) log_big = std::max(log_big, std::log(left) + s * static_cast<double>(lo + R_));
      log_big += weighted(-s).log_norm;
      apply_weighted(field, tail_, ext, -s, lo);
      for (std::size_t j = 0; j < lo; ++j) {
        if (log_big - s * static_cast<double>(lo - j) > log_plain) continue;
        detail::ensure(std::isfinite(tail_[j]), "convolve: weighted transform overflowed; lower the tail rate");
        out[j] = tail_[j];
      }
    }
  }

private:
  std::vector<double> taps_;
  std::size_t n_ = 0, R_ = 0, L_ = 0;
  std::unique_ptr<double, detail::FftwFree> real_;
  std::unique_ptr<fftw_complex, detail::FftwFree> spec_;
  std::unique_ptr<fftw_plan_s, detail::FftwPlanDestroy> forward_, backward_;
  std::vector<std::complex<double>> kspec_;
  struct Weighted {
    double rate = 0.0;
    double log_norm = 0.0; ///< log of the weighted taps' 1-norm
    std::vector<std::complex<double>> spectrum;
    std::vector<double> powers;
  };
  std::deque<Weighted> weighted_;
  std::vector<double> tail_;

  /// real_ <- irfft(rfft(real_) * spectrum)
  void transform(const std::vector<std::complex<double>>& spectrum) {
    fftw_execute(forward_.get());
    const std::size_t nc = L_ / 2 + 1;
    fftw_complex* sp = spec_.get();
    for (std::size_t k = 0; k < nc; ++k) {
      const auto b = std::complex<double>(sp[k][0], sp[k][1]) * spectrum[k];
      sp[k][0] = b.real();
      sp[k][1] = b.imag();
    }
    fftw_execute(backward_.get());
  }

  std::vector<std::complex<double>> spectrum_of(std::span<const double> taps) {
    double* p = real_.get();
    std::fill(p, p + L_, 0.0);
    std::copy(taps.begin(), taps.end(), p);
    fftw_execute(forward_.get());
    const std::size_t nc = L_ / 2 + 1;
    const fftw_complex* sp = spec_.get();
    std::vector<std::complex<double>> out(nc);
    for (std::size_t k = 0; k < nc; ++k) out[k] = std::complex<double>(sp[k][0], sp[k][1]) / double(L_);
    return out;
  }

  const Weighted& weighted(double s) {
    for (const auto& w : weighted_)
      if (w.rate == s) return w;
    Weighted w;
    w.rate = s;
    std::vector<double> t(taps_.size());
    for (std::size_t l = 0; l < t.size(); ++l)
      t[l] = taps_[l] * std::exp(s * (static_cast<double>(l) - static_cast<double>(R_)));
    double norm = 0.0;
    for (double v : t) norm += std::abs(v);
    w.log_norm = std::log(norm);
    // clobbers the input buffer, so callers fetch the tables before filling it
    w.spectrum = spectrum_of(t);
    const auto off = static_cast<std::ptrdiff_t>(n_ + 2 * R_);
    w.powers.resize(static_cast<std::size_t>(2 * off + 1));
    for (std::ptrdiff_t k = -off; k <= off; ++k)
      w.powers[static_cast<std::size_t>(k + off)] = std::exp(std::clamp(s * static_cast<double>(k), -745.0, 700.0));
    weighted_.push_back(std::move(w));
    return weighted_.back();
  }
};

/// K * field on a uniform grid of step dx (FFT path).
inline std::vector<double> convolve_field(const Kernel& kernel, double dx, std::span<const double> field,
                                          Extension ext = Extension::constant, double eps = 1e-10) {
  Convolver conv(kernel.taps(dx, eps), field.size());
  return conv.apply(field, ext);
}

/// K * field on a uniform grid of step dx (direct summation path).
inline std::vector<double> convolve_field_direct(const Kernel& kernel, double dx, std::span<const double> field,
                                                 Extension ext = Extension::constant, double eps = 1e-10) {
  const auto taps = kernel.taps(dx, eps);
  std::vector<double> out(field.size());
  convolve_direct(taps, field, out, ext);
  return out;
}

} // namespace epiwave
