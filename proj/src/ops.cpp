#include "cdnet/ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>

namespace cdnet {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  std::size_t cin_g, cout_g, in_h, in_w, out_h, out_w, k;  // k = cin_g * kh * kw
};

ConvGeometry geometry(const ConvSpec& spec, const Shape& in) {
  ConvGeometry g{};
  g.cin_g = spec.in_channels / spec.groups;
  g.cout_g = spec.out_channels / spec.groups;
  g.in_h = in.h;
  g.in_w = in.w;
  g.out_h = spec.out_extent(in.h, spec.kernel_h);
  g.out_w = spec.out_extent(in.w, spec.kernel_w);
  g.k = g.cin_g * spec.kernel_h * spec.kernel_w;
  return g;
}

bool is_plain_pointwise(const ConvSpec& s) {
  return s.kernel_h == 1 && s.kernel_w == 1 && s.stride == 1 && s.padding == 0;
}

// Gathers the receptive fields of one (sample, group) into a k x (out_h*out_w) matrix.
template <typename T>
void im2col(const T* src, const ConvSpec& s, const ConvGeometry& g, T* col) {
  const std::size_t cols = g.out_h * g.out_w;
  const auto pad = static_cast<std::ptrdiff_t>(s.padding);
  for (std::size_t ci = 0; ci < g.cin_g; ++ci) {
    const T* plane = src + ci * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
        T* row = col + ((ci * s.kernel_h + ky) * s.kernel_w + kx) * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky * s.dilation) - pad;
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* line = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * s.stride + kx * s.dilation) - pad;
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w))
                          ? T(0)
                          : line[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

// Transpose of im2col: scatters column gradients back onto the input plane (accumulating).
template <typename T>
void col2im(const T* col, const ConvSpec& s, const ConvGeometry& g, T* dst) {
  const std::size_t cols = g.out_h * g.out_w;
  const auto pad = static_cast<std::ptrdiff_t>(s.padding);
  for (std::size_t ci = 0; ci < g.cin_g; ++ci) {
    T* plane = dst + ci * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
        const T* row = col + ((ci * s.kernel_h + ky) * s.kernel_w + kx) * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky * s.dilation) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          T* line = plane + static_cast<std::size_t>(iy) * g.in_w;
          const T* srow = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * s.stride + kx * s.dilation) - pad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            line[static_cast<std::size_t>(ix)] += srow[ox];
          }
        }
      }
    }
  }
}

void check_conv_operands(const Shape& in, const Shape& w, const ConvSpec& spec) {
  spec.validate();
  if (in.c != spec.in_channels) {
    throw ShapeError("conv2d: input channels " + std::to_string(in.c) + " != declared in_channels " +
                     std::to_string(spec.in_channels));
  }
  if (w != spec.weight_shape()) {
    throw ShapeError("conv2d: weight shape " + w.str() + " != expected " + spec.weight_shape().str());
  }
}

}  // namespace

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0 ||
      dilation == 0 || groups == 0) {
    throw ConfigError("ConvSpec: channels, kernel, stride, dilation and groups must be positive");
  }
  if (in_channels % groups != 0) {
    throw ConfigError("ConvSpec: in_channels " + std::to_string(in_channels) +
                      " not divisible by groups " + std::to_string(groups));
  }
  if (out_channels % groups != 0) {
    throw ConfigError("ConvSpec: out_channels " + std::to_string(out_channels) +
                      " not divisible by groups " + std::to_string(groups));
  }
}

std::size_t ConvSpec::out_extent(std::size_t in, std::size_t kernel) const {
  const auto span = static_cast<std::ptrdiff_t>(in + 2 * padding) -
                    static_cast<std::ptrdiff_t>(dilation * (kernel - 1) + 1);
  if (span < 0) {
    throw ConfigError("ConvSpec: output size < 1 (input extent " + std::to_string(in) +
                      ", kernel " + std::to_string(kernel) + ", dilation " +
                      std::to_string(dilation) + ", padding " + std::to_string(padding) + ")");
  }
  return static_cast<std::size_t>(span) / stride + 1;
}

Shape ConvSpec::output_shape(const Shape& input) const {
  validate();
  if (input.c != in_channels) {
    throw ShapeError("conv2d: input channels " + std::to_string(input.c) +
                     " != declared in_channels " + std::to_string(in_channels));
  }
  return {input.n, out_channels, out_extent(input.h, kernel_h), out_extent(input.w, kernel_w)};
}

Shape ConvSpec::weight_shape() const {
  return {out_channels, in_channels / groups, kernel_h, kernel_w};
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const std::type_identity_t<Tensor<T>>* bias,
                 const ConvSpec& spec) {
  check_conv_operands(input.shape(), weight.shape(), spec);
  if (bias != nullptr && bias->size() != spec.out_channels) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias->size()) +
                     " != out_channels " + std::to_string(spec.out_channels));
  }
  const ConvGeometry g = geometry(spec, input.shape());
  Tensor<T> out(input.n(), spec.out_channels, g.out_h, g.out_w);
  const std::size_t cols = g.out_h * g.out_w;
  const bool direct = is_plain_pointwise(spec);
  std::vector<T> col(direct ? 0 : g.k * cols);

  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t grp = 0; grp < spec.groups; ++grp) {
      const T* src = input.plane(n, grp * g.cin_g);
      const T* colp = src;
      if (!direct) {
        im2col(src, spec, g, col.data());
        colp = col.data();
      }
      CMapMat<T> w(weight.data() + grp * g.cout_g * g.k, g.cout_g, g.k);
      CMapMat<T> c(colp, g.k, cols);
      MapMat<T> y(out.plane(n, grp * g.cout_g), g.cout_g, cols);
      y.noalias() = w * c;
    }
    if (bias != nullptr) {
      for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
        T* p = out.plane(n, oc);
        const T b = (*bias)[oc];
        for (std::size_t i = 0; i < cols; ++i) p[i] += b;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const ConvSpec& spec,
                          const Tensor<T>& grad_out, Tensor<T>* grad_weight, Tensor<T>* grad_bias,
                          bool want_input_grad) {
  check_conv_operands(input.shape(), weight.shape(), spec);
  const ConvGeometry g = geometry(spec, input.shape());
  const Shape expect{input.n(), spec.out_channels, g.out_h, g.out_w};
  if (grad_out.shape() != expect) {
    throw ShapeError("conv2d_backward: grad shape " + grad_out.shape().str() + " != " + expect.str());
  }
  const std::size_t cols = g.out_h * g.out_w;
  const bool direct = is_plain_pointwise(spec);
  std::vector<T> col(direct ? 0 : g.k * cols);
  std::vector<T> dcol(direct ? 0 : g.k * cols);
  Tensor<T> grad_in;
  if (want_input_grad) grad_in = Tensor<T>(input.shape());

  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t grp = 0; grp < spec.groups; ++grp) {
      CMapMat<T> dy(grad_out.plane(n, grp * g.cout_g), g.cout_g, cols);
      CMapMat<T> w(weight.data() + grp * g.cout_g * g.k, g.cout_g, g.k);
      const T* src = input.plane(n, grp * g.cin_g);
      if (grad_weight != nullptr) {
        const T* colp = src;
        if (!direct) {
          im2col(src, spec, g, col.data());
          colp = col.data();
        }
        CMapMat<T> c(colp, g.k, cols);
        MapMat<T> dw(grad_weight->data() + grp * g.cout_g * g.k, g.cout_g, g.k);
        dw.noalias() += dy * c.transpose();
      }
      if (want_input_grad) {
        if (direct) {
          MapMat<T> dx(grad_in.plane(n, grp * g.cin_g), g.k, cols);
          dx.noalias() = w.transpose() * dy;
        } else {
          MapMat<T> dc(dcol.data(), g.k, cols);
          dc.noalias() = w.transpose() * dy;
          col2im(dcol.data(), spec, g, grad_in.plane(n, grp * g.cin_g));
        }
      }
    }
    if (grad_bias != nullptr) {
      for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
        const T* p = grad_out.plane(n, oc);
        T s = 0;
        for (std::size_t i = 0; i < cols; ++i) s += p[i];
        (*grad_bias)[oc] += s;
      }
    }
  }
  return grad_in;
}

std::size_t default_gn_groups(std::size_t channels, std::size_t preferred) {
  if (preferred > 0 && channels >= preferred && channels % preferred == 0) return preferred;
  return channels;
}

template <typename T>
Tensor<T> group_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     std::size_t num_groups, GroupNormCache<T>* cache) {
  const std::size_t C = input.c();
  if (num_groups == 0 || C % num_groups != 0) {
    throw ConfigError("group_norm: channels " + std::to_string(C) + " not divisible by groups " +
                      std::to_string(num_groups));
  }
  if (gamma.size() != C || beta.size() != C) {
    throw ShapeError("group_norm: gamma/beta length must equal channels " + std::to_string(C));
  }
  const std::size_t cpg = C / num_groups;
  const std::size_t hw = input.h() * input.w();
  const std::size_t m = cpg * hw;
  Tensor<T> out(input.shape());
  GroupNormCache<T> local;
  GroupNormCache<T>& gc = cache != nullptr ? *cache : local;
  gc.groups = num_groups;
  gc.mean.assign(input.n() * num_groups, T(0));
  gc.rstd.assign(input.n() * num_groups, T(0));

  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t grp = 0; grp < num_groups; ++grp) {
      const T* x = input.plane(n, grp * cpg);
      // Two-pass statistics in double for stability at single precision.
      double sum = 0;
      for (std::size_t i = 0; i < m; ++i) sum += x[i];
      const double mean = sum / static_cast<double>(m);
      double sq = 0;
      for (std::size_t i = 0; i < m; ++i) {
        const double d = x[i] - mean;
        sq += d * d;
      }
      const double var = sq / static_cast<double>(m);
      const double rstd = 1.0 / std::sqrt(var + kGroupNormEps);
      gc.mean[n * num_groups + grp] = static_cast<T>(mean);
      gc.rstd[n * num_groups + grp] = static_cast<T>(rstd);
      for (std::size_t cc = 0; cc < cpg; ++cc) {
        const std::size_t ch = grp * cpg + cc;
        const T* xp = input.plane(n, ch);
        T* yp = out.plane(n, ch);
        const T gm = gamma[ch];
        const T bt = beta[ch];
        for (std::size_t i = 0; i < hw; ++i) {
          yp[i] = static_cast<T>((xp[i] - mean) * rstd) * gm + bt;
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> group_norm_backward(const Tensor<T>& input, const Tensor<T>& gamma,
                              const GroupNormCache<T>& cache, const Tensor<T>& grad_out,
                              Tensor<T>* grad_gamma, Tensor<T>* grad_beta) {
  input.require_same_shape(grad_out, "group_norm_backward");
  const std::size_t C = input.c();
  const std::size_t groups = cache.groups;
  const std::size_t cpg = C / groups;
  const std::size_t hw = input.h() * input.w();
  const double m = static_cast<double>(cpg * hw);
  Tensor<T> grad_in(input.shape());

  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t grp = 0; grp < groups; ++grp) {
      const double mean = cache.mean[n * groups + grp];
      const double rstd = cache.rstd[n * groups + grp];
      // dxhat = dy * gamma; dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
      double sum_dxhat = 0;
      double sum_dxhat_xhat = 0;
      for (std::size_t cc = 0; cc < cpg; ++cc) {
        const std::size_t ch = grp * cpg + cc;
        const T* xp = input.plane(n, ch);
        const T* dyp = grad_out.plane(n, ch);
        double dg = 0;
        double db = 0;
        for (std::size_t i = 0; i < hw; ++i) {
          const double xhat = (xp[i] - mean) * rstd;
          const double dxhat = static_cast<double>(dyp[i]) * gamma[ch];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
          dg += static_cast<double>(dyp[i]) * xhat;
          db += dyp[i];
        }
        if (grad_gamma != nullptr) (*grad_gamma)[ch] += static_cast<T>(dg);
        if (grad_beta != nullptr) (*grad_beta)[ch] += static_cast<T>(db);
      }
      const double mean_dxhat = sum_dxhat / m;
      const double mean_dxhat_xhat = sum_dxhat_xhat / m;
      for (std::size_t cc = 0; cc < cpg; ++cc) {
        const std::size_t ch = grp * cpg + cc;
        const T* xp = input.plane(n, ch);
        const T* dyp = grad_out.plane(n, ch);
        T* dxp = grad_in.plane(n, ch);
        for (std::size_t i = 0; i < hw; ++i) {
          const double xhat = (xp[i] - mean) * rstd;
          const double dxhat = static_cast<double>(dyp[i]) * gamma[ch];
          dxp[i] = static_cast<T>(rstd * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat));
        }
      }
    }
  }
  return grad_in;
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> activate(const Tensor<T>& input, Activation kind) {
  Tensor<T> out(input.shape());
  const T* x = input.data();
  T* y = out.data();
  const std::size_t n = input.size();
  if (kind == Activation::kRelu) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  } else {
    for (std::size_t i = 0; i < n; ++i) y[i] = sigmoid(x[i]);
  }
  return out;
}

template <typename T>
Tensor<T> activate_backward(const Tensor<T>& output, const Tensor<T>& grad_out, Activation kind) {
  output.require_same_shape(grad_out, "activate_backward");
  Tensor<T> grad_in(output.shape());
  const T* y = output.data();
  const T* dy = grad_out.data();
  T* dx = grad_in.data();
  const std::size_t n = output.size();
  if (kind == Activation::kRelu) {
    for (std::size_t i = 0; i < n; ++i) dx[i] = y[i] > T(0) ? dy[i] : T(0);
  } else {
    for (std::size_t i = 0; i < n; ++i) dx[i] = dy[i] * y[i] * (T(1) - y[i]);
  }
  return grad_in;
}

namespace {

struct Taps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;  // weight of hi; lo gets 1 - frac
};

Taps bilinear_taps(std::size_t in, std::size_t out) {
  Taps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  for (std::size_t i = 0; i < out; ++i) {
    // Integer numerator keeps exact source positions exact (identity when in == out).
    const std::size_t num = out > 1 ? i * (in - 1) : 0;
    const std::size_t den = out > 1 ? out - 1 : 1;
    const std::size_t lo = num / den;
    t.lo[i] = lo;
    t.hi[i] = std::min(lo + 1, in - 1);
    t.frac[i] = static_cast<double>(num % den) / static_cast<double>(den);
  }
  return t;
}

}  // namespace

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& input, std::size_t out_h, std::size_t out_w) {
  if (input.h() == 0 || input.w() == 0 || out_h == 0 || out_w == 0) {
    throw ShapeError("resize_bilinear: spatial extents must be >= 1, got " + input.shape().str());
  }
  const Taps ty = bilinear_taps(input.h(), out_h);
  const Taps tx = bilinear_taps(input.w(), out_w);
  Tensor<T> out(input.n(), input.c(), out_h, out_w);
  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t c = 0; c < input.c(); ++c) {
      const T* src = input.plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t y = 0; y < out_h; ++y) {
        const T* r0 = src + ty.lo[y] * input.w();
        const T* r1 = src + ty.hi[y] * input.w();
        const T fy = static_cast<T>(ty.frac[y]);
        for (std::size_t x = 0; x < out_w; ++x) {
          const T fx = static_cast<T>(tx.frac[x]);
          const T top = r0[tx.lo[x]] * (T(1) - fx) + r0[tx.hi[x]] * fx;
          const T bot = r1[tx.lo[x]] * (T(1) - fx) + r1[tx.hi[x]] * fx;
          dst[y * out_w + x] = top * (T(1) - fy) + bot * fy;
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> resize_bilinear_backward(const Shape& input_shape, const Tensor<T>& grad_out) {
  if (grad_out.n() != input_shape.n || grad_out.c() != input_shape.c) {
    throw ShapeError("resize_bilinear_backward: grad " + grad_out.shape().str() +
                     " incompatible with input " + input_shape.str());
  }
  const std::size_t out_h = grad_out.h();
  const std::size_t out_w = grad_out.w();
  const Taps ty = bilinear_taps(input_shape.h, out_h);
  const Taps tx = bilinear_taps(input_shape.w, out_w);
  Tensor<T> grad_in(input_shape);
  for (std::size_t n = 0; n < input_shape.n; ++n) {
    for (std::size_t c = 0; c < input_shape.c; ++c) {
      const T* g = grad_out.plane(n, c);
      T* dst = grad_in.plane(n, c);
      for (std::size_t y = 0; y < out_h; ++y) {
        T* r0 = dst + ty.lo[y] * input_shape.w;
        T* r1 = dst + ty.hi[y] * input_shape.w;
        const T fy = static_cast<T>(ty.frac[y]);
        for (std::size_t x = 0; x < out_w; ++x) {
          const T fx = static_cast<T>(tx.frac[x]);
          const T v = g[y * out_w + x];
          r0[tx.lo[x]] += v * (T(1) - fy) * (T(1) - fx);
          r0[tx.hi[x]] += v * (T(1) - fy) * fx;
          r1[tx.lo[x]] += v * fy * (T(1) - fx);
          r1[tx.hi[x]] += v * fy * fx;
        }
      }
    }
  }
  return grad_in;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw ShapeError("concat_channels: batch/spatial mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  Tensor<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t hw = a.h() * a.w();
  for (std::size_t n = 0; n < a.n(); ++n) {
    std::copy_n(a.plane(n, 0), a.c() * hw, out.plane(n, 0));
    std::copy_n(b.plane(n, 0), b.c() * hw, out.plane(n, a.c()));
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& grad, std::size_t leading) {
  if (leading > grad.c()) {
    throw ShapeError("split_channels: leading block " + std::to_string(leading) +
                     " exceeds channels " + std::to_string(grad.c()));
  }
  Tensor<T> a(grad.n(), leading, grad.h(), grad.w());
  Tensor<T> b(grad.n(), grad.c() - leading, grad.h(), grad.w());
  const std::size_t hw = grad.h() * grad.w();
  for (std::size_t n = 0; n < grad.n(); ++n) {
    std::copy_n(grad.plane(n, 0), a.c() * hw, a.plane(n, 0));
    std::copy_n(grad.plane(n, leading), b.c() * hw, b.plane(n, 0));
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out = a;
  out += b;
  return out;
}

template <typename T>
Tensor<T> scale_channels(const Tensor<T>& input, const Tensor<T>& weights) {
  if (weights.shape() != Shape{input.n(), input.c(), 1, 1}) {
    throw ShapeError("scale_channels: weights " + weights.shape().str() + " for input " +
                     input.shape().str());
  }
  Tensor<T> out(input.shape());
  const std::size_t hw = input.h() * input.w();
  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t c = 0; c < input.c(); ++c) {
      const T s = weights.at(n, c, 0, 0);
      const T* x = input.plane(n, c);
      T* y = out.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) y[i] = s * x[i];
    }
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> scale_channels_backward(const Tensor<T>& input,
                                                        const Tensor<T>& weights,
                                                        const Tensor<T>& grad_out) {
  input.require_same_shape(grad_out, "scale_channels_backward");
  Tensor<T> dx(input.shape());
  Tensor<T> dw(weights.shape());
  const std::size_t hw = input.h() * input.w();
  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t c = 0; c < input.c(); ++c) {
      const T s = weights.at(n, c, 0, 0);
      const T* x = input.plane(n, c);
      const T* g = grad_out.plane(n, c);
      T* d = dx.plane(n, c);
      T acc = 0;
      for (std::size_t i = 0; i < hw; ++i) {
        d[i] = s * g[i];
        acc += x[i] * g[i];
      }
      dw.at(n, c, 0, 0) = acc;
    }
  }
  return {std::move(dx), std::move(dw)};
}

template <typename T>
Tensor<T> scale_spatial(const Tensor<T>& input, const Tensor<T>& map) {
  if (map.shape() != Shape{input.n(), 1, input.h(), input.w()}) {
    throw ShapeError("scale_spatial: map " + map.shape().str() + " for input " +
                     input.shape().str());
  }
  Tensor<T> out(input.shape());
  const std::size_t hw = input.h() * input.w();
  for (std::size_t n = 0; n < input.n(); ++n) {
    const T* q = map.plane(n, 0);
    for (std::size_t c = 0; c < input.c(); ++c) {
      const T* x = input.plane(n, c);
      T* y = out.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) y[i] = q[i] * x[i];
    }
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> scale_spatial_backward(const Tensor<T>& input, const Tensor<T>& map,
                                                       const Tensor<T>& grad_out) {
  input.require_same_shape(grad_out, "scale_spatial_backward");
  Tensor<T> dx(input.shape());
  Tensor<T> dq(map.shape());
  const std::size_t hw = input.h() * input.w();
  for (std::size_t n = 0; n < input.n(); ++n) {
    const T* q = map.plane(n, 0);
    T* dqp = dq.plane(n, 0);
    for (std::size_t c = 0; c < input.c(); ++c) {
      const T* x = input.plane(n, c);
      const T* g = grad_out.plane(n, c);
      T* d = dx.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        d[i] = q[i] * g[i];
        dqp[i] += x[i] * g[i];
      }
    }
  }
  return {std::move(dx), std::move(dq)};
}

#define CDNET_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,                 \
                            const ConvSpec&);                                                     \
  template Tensor<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const ConvSpec&,         \
                                     const Tensor<T>&, Tensor<T>*, Tensor<T>*, bool);             \
  template Tensor<T> group_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,             \
                                std::size_t, GroupNormCache<T>*);                                 \
  template Tensor<T> group_norm_backward(const Tensor<T>&, const Tensor<T>&,                      \
                                         const GroupNormCache<T>&, const Tensor<T>&, Tensor<T>*,  \
                                         Tensor<T>*);                                             \
  template T sigmoid(T);                                                                          \
  template Tensor<T> activate(const Tensor<T>&, Activation);                                      \
  template Tensor<T> activate_backward(const Tensor<T>&, const Tensor<T>&, Activation);           \
  template Tensor<T> resize_bilinear(const Tensor<T>&, std::size_t, std::size_t);                 \
  template Tensor<T> resize_bilinear_backward(const Shape&, const Tensor<T>&);                    \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                         \
  template std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>&, std::size_t);         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> scale_channels(const Tensor<T>&, const Tensor<T>&);                          \
  template std::pair<Tensor<T>, Tensor<T>> scale_channels_backward(                               \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> scale_spatial(const Tensor<T>&, const Tensor<T>&);                           \
  template std::pair<Tensor<T>, Tensor<T>> scale_spatial_backward(                                \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

CDNET_INSTANTIATE_OPS(float)
CDNET_INSTANTIATE_OPS(double)

#undef CDNET_INSTANTIATE_OPS

}  // namespace cdnet
