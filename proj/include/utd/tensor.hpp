#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "utd/error.hpp"
#include "utd/rng.hpp"

namespace utd {

/// Dense rank-4 array in row-major (n, c, h, w) order.
class FeatureMap {
 public:
  FeatureMap() = default;

  FeatureMap(int n, int c, int h, int w, double fill = 0.0) : n_(n), c_(c), h_(h), w_(w) {
    if (n <= 0 || c <= 0 || h <= 0 || w <= 0)
      throw InputError("FeatureMap: all dimensions must be positive");
    data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
  }

  FeatureMap(int n, int c, int h, int w, std::vector<double> values) : n_(n), c_(c), h_(h), w_(w) {
    if (n <= 0 || c <= 0 || h <= 0 || w <= 0)
      throw InputError("FeatureMap: all dimensions must be positive");
    if (values.size() != static_cast<std::size_t>(n) * c * h * w)
      throw InputError("FeatureMap: value count does not match n*c*h*w");
    data_ = std::move(values);
  }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x;
  }
  double& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool same_shape(const FeatureMap& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  /// Channels [begin, end) of every sample.
  FeatureMap channels(int begin, int end) const {
    if (begin < 0 || end > c_ || begin >= end) throw InputError("FeatureMap: bad channel range");
    FeatureMap out(n_, end - begin, h_, w_);
    const std::size_t plane = static_cast<std::size_t>(h_) * w_;
    for (int b = 0; b < n_; ++b)
      for (int ch = begin; ch < end; ++ch)
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(index(b, ch, 0, 0)), plane,
                    out.data_.begin() + static_cast<std::ptrdiff_t>(out.index(b, ch - begin, 0, 0)));
    return out;
  }

  /// Channel-wise concatenation; batch and spatial sizes must agree.
  static FeatureMap concat(const FeatureMap& a, const FeatureMap& b) {
    if (a.n_ != b.n_ || a.h_ != b.h_ || a.w_ != b.w_)
      throw InputError("FeatureMap::concat: batch or spatial size mismatch");
    FeatureMap out(a.n_, a.c_ + b.c_, a.h_, a.w_);
    const std::size_t plane = static_cast<std::size_t>(a.h_) * a.w_;
    for (int s = 0; s < a.n_; ++s) {
      std::copy_n(a.data_.begin() + static_cast<std::ptrdiff_t>(a.index(s, 0, 0, 0)), plane * a.c_,
                  out.data_.begin() + static_cast<std::ptrdiff_t>(out.index(s, 0, 0, 0)));
      std::copy_n(b.data_.begin() + static_cast<std::ptrdiff_t>(b.index(s, 0, 0, 0)), plane * b.c_,
                  out.data_.begin() + static_cast<std::ptrdiff_t>(out.index(s, a.c_, 0, 0)));
    }
    return out;
  }

  /// Uniform entries in [lo, hi) from a seeded generator.
  static FeatureMap random(int n, int c, int h, int w, SeededRng& rng, double lo = -0.5,
                           double hi = 0.5) {
    FeatureMap out(n, c, h, w);
    for (auto& v : out.data_) v = rng.uniform(lo, hi);
    return out;
  }

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

}  // namespace utd
