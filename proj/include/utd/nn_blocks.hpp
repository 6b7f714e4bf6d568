#pragma once

#include <algorithm>
#include <concepts>
#include <cmath>
#include <string>
#include <vector>

#include "utd/error.hpp"
#include "utd/rng.hpp"
#include "utd/tensor.hpp"

namespace utd {

inline constexpr double kLeakySlope = 0.1;

inline double leaky_relu(double x) { return x > 0.0 ? x : kLeakySlope * x; }
inline double leaky_relu_derivative(double x) { return x > 0.0 ? 1.0 : kLeakySlope; }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// Squeeze: per-(sample, channel) spatial mean.

inline std::vector<double> global_avg_pool(const FeatureMap& x) {
  std::vector<double> out(static_cast<std::size_t>(x.n()) * x.c(), 0.0);
  const double inv = 1.0 / (static_cast<double>(x.h()) * x.w());
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      double sum = 0.0;
      for (int y = 0; y < x.h(); ++y)
        for (int xx = 0; xx < x.w(); ++xx) sum += x.at(n, c, y, xx);
      out[static_cast<std::size_t>(n) * x.c() + c] = sum * inv;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Squeeze-excitation channel attention.

/// w1 is (channels / r) x channels, w2 is channels x (channels / r), row-major.
struct SEParams {
  int channels = 0;
  int reduction_ratio = 1;
  std::vector<double> w1;
  std::vector<double> w2;

  int hidden() const { return channels / reduction_ratio; }

  void validate() const {
    if (channels <= 0 || reduction_ratio <= 0) throw ConfigError("SEParams: sizes must be positive");
    if (channels % reduction_ratio != 0)
      throw ConfigError("SEParams: channels must be divisible by reduction_ratio");
    const auto expect = static_cast<std::size_t>(channels) * hidden();
    if (w1.size() != expect || w2.size() != expect)
      throw ConfigError("SEParams: weight matrix sizes do not match channels / reduction_ratio");
  }

  static SEParams random(int channels, int reduction_ratio, SeededRng& rng) {
    SEParams p{channels, reduction_ratio, {}, {}};
    if (channels <= 0 || reduction_ratio <= 0 || channels % reduction_ratio != 0)
      throw ConfigError("SEParams: channels must be divisible by reduction_ratio");
    const auto count = static_cast<std::size_t>(channels) * p.hidden();
    p.w1.resize(count);
    p.w2.resize(count);
    for (auto& v : p.w1) v = rng.uniform(-0.5, 0.5);
    for (auto& v : p.w2) v = rng.uniform(-0.5, 0.5);
    return p;
  }
};

namespace detail {

struct SEForward {
  std::vector<double> z;       // n x c
  std::vector<double> hidden;  // n x hidden, pre-activation
  std::vector<double> gate;    // n x c
};

inline SEForward se_forward(const FeatureMap& x, const SEParams& p) {
  p.validate();
  if (x.c() != p.channels) throw InputError("se_block: input channels do not match SEParams");
  const int c = p.channels;
  const int hd = p.hidden();
  SEForward f;
  f.z = global_avg_pool(x);
  f.hidden.assign(static_cast<std::size_t>(x.n()) * hd, 0.0);
  f.gate.assign(static_cast<std::size_t>(x.n()) * c, 0.0);
  for (int n = 0; n < x.n(); ++n) {
    const double* z = &f.z[static_cast<std::size_t>(n) * c];
    double* a = &f.hidden[static_cast<std::size_t>(n) * hd];
    for (int j = 0; j < hd; ++j) {
      double s = 0.0;
      for (int i = 0; i < c; ++i) s += p.w1[static_cast<std::size_t>(j) * c + i] * z[i];
      a[j] = s;
    }
    for (int i = 0; i < c; ++i) {
      double s = 0.0;
      for (int j = 0; j < hd; ++j) s += p.w2[static_cast<std::size_t>(i) * hd + j] * std::max(a[j], 0.0);
      f.gate[static_cast<std::size_t>(n) * c + i] = sigmoid(s);
    }
  }
  return f;
}

}  // namespace detail

/// Per-(sample, channel) gates in (0, 1).
inline std::vector<double> se_gates(const FeatureMap& x, const SEParams& p) {
  return detail::se_forward(x, p).gate;
}

inline FeatureMap se_block(const FeatureMap& x, const SEParams& p) {
  const auto f = detail::se_forward(x, p);
  FeatureMap out = x;
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const double g = f.gate[static_cast<std::size_t>(n) * x.c() + c];
      for (int y = 0; y < x.h(); ++y)
        for (int xx = 0; xx < x.w(); ++xx) out.at(n, c, y, xx) *= g;
    }
  return out;
}

/// Vector-Jacobian product of se_block with respect to its input.
inline FeatureMap se_block_input_gradient(const FeatureMap& x, const SEParams& p,
                                          const FeatureMap& grad_out) {
  if (!grad_out.same_shape(x)) throw InputError("se_block: gradient shape mismatch");
  const auto f = detail::se_forward(x, p);
  const int c = p.channels;
  const int hd = p.hidden();
  const double inv_hw = 1.0 / (static_cast<double>(x.h()) * x.w());
  FeatureMap gx(x.n(), x.c(), x.h(), x.w());
  std::vector<double> d_gate(c), d_t(c), d_a(hd), d_z(c);
  for (int n = 0; n < x.n(); ++n) {
    for (int i = 0; i < c; ++i) {
      double s = 0.0;
      for (int y = 0; y < x.h(); ++y)
        for (int xx = 0; xx < x.w(); ++xx) s += grad_out.at(n, i, y, xx) * x.at(n, i, y, xx);
      d_gate[i] = s;
      const double g = f.gate[static_cast<std::size_t>(n) * c + i];
      d_t[i] = s * g * (1.0 - g);
    }
    const double* a = &f.hidden[static_cast<std::size_t>(n) * hd];
    for (int j = 0; j < hd; ++j) {
      double s = 0.0;
      for (int i = 0; i < c; ++i) s += p.w2[static_cast<std::size_t>(i) * hd + j] * d_t[i];
      d_a[j] = a[j] > 0.0 ? s : 0.0;
    }
    for (int i = 0; i < c; ++i) {
      double s = 0.0;
      for (int j = 0; j < hd; ++j) s += p.w1[static_cast<std::size_t>(j) * c + i] * d_a[j];
      d_z[i] = s;
    }
    for (int i = 0; i < c; ++i) {
      const double g = f.gate[static_cast<std::size_t>(n) * c + i];
      for (int y = 0; y < x.h(); ++y)
        for (int xx = 0; xx < x.w(); ++xx)
          gx.at(n, i, y, xx) = grad_out.at(n, i, y, xx) * g + d_z[i] * inv_hw;
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Dilated 2-D cross-correlation with zero padding.

struct ConvParams {
  int c_out = 0;
  int c_in = 0;
  int k = 1;
  std::vector<double> kernel;  // c_out x c_in x k x k
  std::vector<double> bias;    // c_out, or empty for no bias
  int dilation = 1;
  int stride = 1;
  int padding = 0;

  int effective_extent() const { return k + (k - 1) * (dilation - 1); }

  double weight(int o, int i, int ky, int kx) const {
    return kernel[((static_cast<std::size_t>(o) * c_in + i) * k + ky) * k + kx];
  }

  void validate() const {
    if (c_out <= 0 || c_in <= 0 || k <= 0) throw ConfigError("ConvParams: sizes must be positive");
    if (k % 2 == 0) throw ConfigError("ConvParams: kernel size must be odd");
    if (dilation <= 0 || stride <= 0 || padding < 0)
      throw ConfigError("ConvParams: dilation/stride must be positive, padding nonnegative");
    if (kernel.size() != static_cast<std::size_t>(c_out) * c_in * k * k)
      throw ConfigError("ConvParams: kernel size does not match c_out*c_in*k*k");
    if (!bias.empty() && bias.size() != static_cast<std::size_t>(c_out))
      throw ConfigError("ConvParams: bias length must equal c_out");
  }

  /// Stride-1 layer whose padding keeps the spatial size.
  static ConvParams same(int c_out, int c_in, int k, int dilation, std::vector<double> kernel,
                         std::vector<double> bias = {}) {
    ConvParams p{c_out, c_in, k, std::move(kernel), std::move(bias), dilation, 1,
                 dilation * (k - 1) / 2};
    p.validate();
    return p;
  }

  static ConvParams random_same(int c_out, int c_in, int k, int dilation, SeededRng& rng) {
    std::vector<double> w(static_cast<std::size_t>(c_out) * c_in * k * k);
    for (auto& v : w) v = rng.uniform(-0.5, 0.5);
    std::vector<double> b(static_cast<std::size_t>(c_out));
    for (auto& v : b) v = rng.uniform(-0.5, 0.5);
    return same(c_out, c_in, k, dilation, std::move(w), std::move(b));
  }

  /// Identity map (channel-preserving, centre tap 1).
  static ConvParams identity(int channels, int k) {
    std::vector<double> w(static_cast<std::size_t>(channels) * channels * k * k, 0.0);
    for (int c = 0; c < channels; ++c)
      w[((static_cast<std::size_t>(c) * channels + c) * k + k / 2) * k + k / 2] = 1.0;
    return same(channels, channels, k, 1, std::move(w));
  }
};

inline int conv_output_size(int in, const ConvParams& p) {
  const int span = in + 2 * p.padding - p.effective_extent();
  if (span < 0) return 0;
  return span / p.stride + 1;
}

inline FeatureMap dilated_conv2d(const FeatureMap& x, const ConvParams& p) {
  p.validate();
  if (x.c() != p.c_in) throw InputError("dilated_conv2d: input channels do not match kernel");
  const int oh = conv_output_size(x.h(), p);
  const int ow = conv_output_size(x.w(), p);
  if (oh < 1 || ow < 1) throw InputError("dilated_conv2d: output would be empty");
  FeatureMap out(x.n(), p.c_out, oh, ow);
  for (int n = 0; n < x.n(); ++n) {
    for (int o = 0; o < p.c_out; ++o) {
      const double b = p.bias.empty() ? 0.0 : p.bias[o];
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double s = b;
          for (int i = 0; i < p.c_in; ++i) {
            for (int ky = 0; ky < p.k; ++ky) {
              const int iy = oy * p.stride - p.padding + ky * p.dilation;
              if (iy < 0 || iy >= x.h()) continue;
              for (int kx = 0; kx < p.k; ++kx) {
                const int ix = ox * p.stride - p.padding + kx * p.dilation;
                if (ix < 0 || ix >= x.w()) continue;
                s += p.weight(o, i, ky, kx) * x.at(n, i, iy, ix);
              }
            }
          }
          out.at(n, o, oy, ox) = s;
        }
      }
    }
  }
  return out;
}

inline FeatureMap dilated_conv2d_input_gradient(const FeatureMap& x, const ConvParams& p,
                                                const FeatureMap& grad_out) {
  p.validate();
  const int oh = conv_output_size(x.h(), p);
  const int ow = conv_output_size(x.w(), p);
  if (grad_out.n() != x.n() || grad_out.c() != p.c_out || grad_out.h() != oh || grad_out.w() != ow)
    throw InputError("dilated_conv2d: gradient shape mismatch");
  FeatureMap gx(x.n(), x.c(), x.h(), x.w());
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < p.c_out; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const double g = grad_out.at(n, o, oy, ox);
          for (int i = 0; i < p.c_in; ++i)
            for (int ky = 0; ky < p.k; ++ky) {
              const int iy = oy * p.stride - p.padding + ky * p.dilation;
              if (iy < 0 || iy >= x.h()) continue;
              for (int kx = 0; kx < p.k; ++kx) {
                const int ix = ox * p.stride - p.padding + kx * p.dilation;
                if (ix < 0 || ix >= x.w()) continue;
                gx.at(n, i, iy, ix) += p.weight(o, i, ky, kx) * g;
              }
            }
        }
  return gx;
}

/// Gradient with respect to the kernel weights, same layout as ConvParams::kernel.
inline std::vector<double> dilated_conv2d_kernel_gradient(const FeatureMap& x, const ConvParams& p,
                                                          const FeatureMap& grad_out) {
  p.validate();
  const int oh = conv_output_size(x.h(), p);
  const int ow = conv_output_size(x.w(), p);
  if (grad_out.n() != x.n() || grad_out.c() != p.c_out || grad_out.h() != oh || grad_out.w() != ow)
    throw InputError("dilated_conv2d: gradient shape mismatch");
  std::vector<double> gk(p.kernel.size(), 0.0);
  for (int o = 0; o < p.c_out; ++o)
    for (int i = 0; i < p.c_in; ++i)
      for (int ky = 0; ky < p.k; ++ky)
        for (int kx = 0; kx < p.k; ++kx) {
          double s = 0.0;
          for (int n = 0; n < x.n(); ++n)
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * p.stride - p.padding + ky * p.dilation;
              if (iy < 0 || iy >= x.h()) continue;
              for (int ox = 0; ox < ow; ++ox) {
                const int ix = ox * p.stride - p.padding + kx * p.dilation;
                if (ix < 0 || ix >= x.w()) continue;
                s += grad_out.at(n, o, oy, ox) * x.at(n, i, iy, ix);
              }
            }
          gk[((static_cast<std::size_t>(o) * p.c_in + i) * p.k + ky) * p.k + kx] = s;
        }
  return gk;
}

// ---------------------------------------------------------------------------
// Two-stage cascaded cross-stage-partial block.
//
// Each stage splits its input channels in half. The first half passes through
// untouched; the second half runs 1x1 conv -> leaky -> 3x3 same conv, and the
// two halves are concatenated. Stage 2 consumes stage 1's output. The stage-1
// deep-branch output is also concatenated straight onto stage 2's output,
// with no transition convolution in between:
//
//   out = [shallow2, deep2(half2), deep1(half1)]

struct CspStageParams {
  ConvParams reduce;   // 1x1
  ConvParams spatial;  // 3x3, same padding

  int input_channels() const { return 2 * reduce.c_in; }
  int deep_channels() const { return spatial.c_out; }
  int output_channels() const { return reduce.c_in + spatial.c_out; }

  void validate(int c_in, const std::string& name) const {
    reduce.validate();
    spatial.validate();
    if (c_in % 2 != 0) throw ConfigError(name + ": input channel count " + std::to_string(c_in) + " cannot be split in half");
    if (reduce.c_in != c_in / 2) throw ConfigError(name + ": 1x1 conv input channels must equal half the stage input");
    if (reduce.k != 1 || reduce.stride != 1 || reduce.padding != 0)
      throw ConfigError(name + ": reduce conv must be 1x1, stride 1, unpadded");
    if (spatial.c_in != reduce.c_out) throw ConfigError(name + ": 3x3 conv input must match 1x1 conv output");
    if (spatial.stride != 1 || 2 * spatial.padding != spatial.effective_extent() - 1)
      throw ConfigError(name + ": spatial conv must preserve spatial size");
  }

  static CspStageParams random(int c_in, int mid, int deep_out, SeededRng& rng) {
    if (c_in % 2 != 0) throw ConfigError("CSP stage: input channel count cannot be split in half");
    return {ConvParams::random_same(mid, c_in / 2, 1, 1, rng),
            ConvParams::random_same(deep_out, mid, 3, 1, rng)};
  }
};

struct Csp2Params {
  CspStageParams stage1;
  CspStageParams stage2;

  /// Throws ConfigError unless the channel counts chain for an input of c_in.
  void validate(int c_in) const {
    stage1.validate(c_in, "csp2 stage 1");
    stage2.validate(stage1.output_channels(), "csp2 stage 2");
  }

  int output_channels() const { return stage2.output_channels() + stage1.deep_channels(); }

  static Csp2Params random(int c_in, int mid1, int deep1, int mid2, int deep2, SeededRng& rng) {
    Csp2Params p{CspStageParams::random(c_in, mid1, deep1, rng), {}};
    p.stage2 = CspStageParams::random(p.stage1.output_channels(), mid2, deep2, rng);
    p.validate(c_in);
    return p;
  }

  /// Channel-preserving identity sub-paths.
  static Csp2Params identity(int c_in) {
    const int h1 = c_in / 2;
    Csp2Params p{{ConvParams::identity(h1, 1), ConvParams::identity(h1, 3)},
                 {ConvParams::identity(h1, 1), ConvParams::identity(h1, 3)}};
    p.validate(c_in);
    return p;
  }
};

namespace detail {

inline FeatureMap map_leaky(FeatureMap x) {
  for (auto& v : x.values()) v = leaky_relu(v);
  return x;
}

struct CspStageTrace {
  FeatureMap shallow, deep_in, pre_act, mid, deep_out, out;
};

inline CspStageTrace csp_stage_forward(const FeatureMap& x, const CspStageParams& p) {
  CspStageTrace t;
  const int half = x.c() / 2;
  t.shallow = x.channels(0, half);
  t.deep_in = x.channels(half, x.c());
  t.pre_act = dilated_conv2d(t.deep_in, p.reduce);
  t.mid = map_leaky(t.pre_act);
  t.deep_out = dilated_conv2d(t.mid, p.spatial);
  t.out = FeatureMap::concat(t.shallow, t.deep_out);
  return t;
}

inline FeatureMap csp_stage_backward(const CspStageTrace& t, const CspStageParams& p,
                                     const FeatureMap& grad_out) {
  const int half = t.shallow.c();
  const FeatureMap g_shallow = grad_out.channels(0, half);
  const FeatureMap g_deep = grad_out.channels(half, grad_out.c());
  FeatureMap g_mid = dilated_conv2d_input_gradient(t.mid, p.spatial, g_deep);
  for (std::size_t i = 0; i < g_mid.size(); ++i) g_mid[i] *= leaky_relu_derivative(t.pre_act[i]);
  const FeatureMap g_in = dilated_conv2d_input_gradient(t.deep_in, p.reduce, g_mid);
  return FeatureMap::concat(g_shallow, g_in);
}

}  // namespace detail

inline FeatureMap csp2_block(const FeatureMap& x, const Csp2Params& p) {
  p.validate(x.c());
  const auto s1 = detail::csp_stage_forward(x, p.stage1);
  const auto s2 = detail::csp_stage_forward(s1.out, p.stage2);
  return FeatureMap::concat(s2.out, s1.deep_out);
}

inline FeatureMap csp2_block_input_gradient(const FeatureMap& x, const Csp2Params& p,
                                            const FeatureMap& grad_out) {
  p.validate(x.c());
  const auto s1 = detail::csp_stage_forward(x, p.stage1);
  const auto s2 = detail::csp_stage_forward(s1.out, p.stage2);
  const int w2 = s2.out.c();
  if (grad_out.c() != w2 + s1.deep_out.c() || grad_out.h() != x.h() || grad_out.w() != x.w() ||
      grad_out.n() != x.n())
    throw InputError("csp2_block: gradient shape mismatch");
  FeatureMap g_s1 = detail::csp_stage_backward(s2, p.stage2, grad_out.channels(0, w2));
  const FeatureMap g_direct = grad_out.channels(w2, grad_out.c());
  // The direct connection feeds stage 1's deep output, which sits after the
  // shallow half in stage 1's output.
  const int off = s1.shallow.c();
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < g_direct.c(); ++c)
      for (int y = 0; y < x.h(); ++y)
        for (int xx = 0; xx < x.w(); ++xx) g_s1.at(n, off + c, y, xx) += g_direct.at(n, c, y, xx);
  return detail::csp_stage_backward(s1, p.stage1, g_s1);
}

// ---------------------------------------------------------------------------
// Callable wrappers, so the gradient checker can treat every block alike.

struct SEBlock {
  SEParams params;
  FeatureMap forward(const FeatureMap& x) const { return se_block(x, params); }
  FeatureMap input_gradient(const FeatureMap& x, const FeatureMap& g) const {
    return se_block_input_gradient(x, params, g);
  }
};

struct DilatedConvBlock {
  ConvParams params;
  FeatureMap forward(const FeatureMap& x) const { return dilated_conv2d(x, params); }
  FeatureMap input_gradient(const FeatureMap& x, const FeatureMap& g) const {
    return dilated_conv2d_input_gradient(x, params, g);
  }
};

struct Csp2Block {
  Csp2Params params;
  FeatureMap forward(const FeatureMap& x) const { return csp2_block(x, params); }
  FeatureMap input_gradient(const FeatureMap& x, const FeatureMap& g) const {
    return csp2_block_input_gradient(x, params, g);
  }
};

template <typename B>
concept DifferentiableBlock = requires(const B& b, const FeatureMap& x) {
  { b.forward(x) } -> std::convertible_to<FeatureMap>;
  { b.input_gradient(x, x) } -> std::convertible_to<FeatureMap>;
};

/// Compares the analytic input gradient of sum(block(x)) against central
/// differences. Returns max|analytic - numeric| / max(max|analytic|, max|numeric|).
template <DifferentiableBlock B>
double finite_diff_check(const B& block, const FeatureMap& x, double step) {
  if (!(step >= 1e-6 && step <= 1e-3)) throw ConfigError("finite_diff_check: step must lie in [1e-6, 1e-3]");
  const FeatureMap y = block.forward(x);
  const FeatureMap ones(y.n(), y.c(), y.h(), y.w(), 1.0);
  const FeatureMap analytic = block.input_gradient(x, ones);

  auto total = [&](const FeatureMap& in) {
    const FeatureMap out = block.forward(in);
    double s = 0.0;
    for (double v : out.values()) s += v;
    return s;
  };

  FeatureMap probe = x;
  double max_diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = total(probe);
    probe[i] = orig - step;
    const double down = total(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    max_diff = std::max(max_diff, std::abs(numeric - analytic[i]));
    scale = std::max({scale, std::abs(numeric), std::abs(analytic[i])});
  }
  if (scale == 0.0) return max_diff;
  return max_diff / scale;
}

}  // namespace utd
