#include "dfm/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace dfm::ops {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <class T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <class T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape()));
}

struct ConvGeom {
  std::size_t n, c, h, w, f, kh, kw, stride, pad, oh, ow;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t plane() const { return oh * ow; }
};

// cols[(c*kh + i)*kw + j, s*P + oy*ow + ox] = x[s, c, oy*stride + i - pad, ox*stride + j - pad]
template <class T>
void im2col(const ConvGeom& g, std::span<const T> x, AlignedVector<T>& cols) {
  const std::size_t cols_w = g.n * g.plane();
  cols.assign(g.patch() * cols_w, T(0));
  for (std::size_t s = 0; s < g.n; ++s)
    for (std::size_t c = 0; c < g.c; ++c)
      for (std::size_t i = 0; i < g.kh; ++i)
        for (std::size_t j = 0; j < g.kw; ++j) {
          T* row = cols.data() + ((c * g.kh + i) * g.kw + j) * cols_w + s * g.plane();
          const T* img = x.data() + (s * g.c + c) * g.h * g.w;
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
              row[oy * g.ow + ox] = img[iy * g.w + ix];
            }
          }
        }
}

template <class T>
void col2im_add(const ConvGeom& g, const AlignedVector<T>& cols, std::span<T> dx) {
  const std::size_t cols_w = g.n * g.plane();
  for (std::size_t s = 0; s < g.n; ++s)
    for (std::size_t c = 0; c < g.c; ++c)
      for (std::size_t i = 0; i < g.kh; ++i)
        for (std::size_t j = 0; j < g.kw; ++j) {
          const T* row = cols.data() + ((c * g.kh + i) * g.kw + j) * cols_w + s * g.plane();
          T* img = dx.data() + (s * g.c + c) * g.h * g.w;
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
              img[iy * g.w + ix] += row[oy * g.ow + ox];
            }
          }
        }
}

// [F, N*P] <-> [N, F, P]
template <class T>
void fnp_to_nfp(const ConvGeom& g, const T* src, T* dst) {
  const std::size_t p = g.plane();
  for (std::size_t f = 0; f < g.f; ++f)
    for (std::size_t s = 0; s < g.n; ++s)
      std::copy_n(src + f * g.n * p + s * p, p, dst + (s * g.f + f) * p);
}
template <class T>
void nfp_to_fnp(const ConvGeom& g, const T* src, T* dst) {
  const std::size_t p = g.plane();
  for (std::size_t f = 0; f < g.f; ++f)
    for (std::size_t s = 0; s < g.n; ++s)
      std::copy_n(src + (s * g.f + f) * p, p, dst + f * g.n * p + s * p);
}

}  // namespace

template <class T>
BasicTensor<T> conv2d(Tape<T>& tape, const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t pad) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  ConvGeom g{};
  g.n = x.dim(0), g.c = x.dim(1), g.h = x.dim(2), g.w = x.dim(3);
  g.f = kernel.dim(0), g.kh = kernel.dim(2), g.kw = kernel.dim(3);
  g.stride = stride, g.pad = pad;
  if (kernel.dim(1) != g.c)
    throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) + " expects " + std::to_string(kernel.dim(1)) +
                     " input channels, input " + to_string(x.shape()) + " has " + std::to_string(g.c));
  if (g.kh > g.h + 2 * pad || g.kw > g.w + 2 * pad)
    throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) + " larger than padded input " +
                     to_string(x.shape()));
  if (bias.defined() && bias.shape() != Shape{g.f})
    throw ShapeError("conv2d: bias must be [" + std::to_string(g.f) + "], got " + to_string(bias.shape()));
  g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
  g.ow = (g.w + 2 * pad - g.kw) / stride + 1;

  AlignedVector<T> cols;
  im2col<T>(g, x.data(), cols);
  const std::size_t cols_w = g.n * g.plane();
  AlignedVector<T> out_fnp(g.f * cols_w);
  {
    CMapMat<T> wm(kernel.data().data(), g.f, g.patch());
    CMapMat<T> cm(cols.data(), g.patch(), cols_w);
    MapMat<T> om(out_fnp.data(), g.f, cols_w);
    om.noalias() = wm * cm;
    if (bias.defined())
      for (std::size_t f = 0; f < g.f; ++f) om.row(f).array() += bias[f];
  }
  auto out = BasicTensor<T>::zeros({g.n, g.f, g.oh, g.ow});
  fnp_to_nfp(g, out_fnp.data(), out.data().data());

  if (tape.tracks({&x, &kernel, &bias})) {
    tape.record({x, kernel, bias}, out, [x, kernel, bias, out, g]() mutable {
      const std::size_t cols_w = g.n * g.plane();
      AlignedVector<T> gout(g.f * cols_w);
      nfp_to_fnp(g, out.grad().data(), gout.data());
      CMapMat<T> gm(gout.data(), g.f, cols_w);
      AlignedVector<T> cols;
      if (kernel.requires_grad() || x.requires_grad()) im2col<T>(g, x.data(), cols);
      if (kernel.requires_grad()) {
        CMapMat<T> cm(cols.data(), g.patch(), cols_w);
        MapMat<T> dw(kernel.ensure_grad().data(), g.f, g.patch());
        dw.noalias() += gm * cm.transpose();
      }
      if (bias.defined() && bias.requires_grad()) {
        auto db = bias.ensure_grad();
        for (std::size_t f = 0; f < g.f; ++f) db[f] += gm.row(f).sum();
      }
      if (x.requires_grad()) {
        CMapMat<T> wm(kernel.data().data(), g.f, g.patch());
        MapMat<T> dcols(cols.data(), g.patch(), cols_w);
        dcols.noalias() = wm.transpose() * gm;
        col2im_add<T>(g, cols, x.ensure_grad());
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> linear(Tape<T>& tape, const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias) {
  require_rank(x, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  const std::size_t n = x.dim(0), d = x.dim(1), m = weight.dim(1);
  if (weight.dim(0) != d)
    throw ShapeError("linear: input " + to_string(x.shape()) + " incompatible with weight " +
                     to_string(weight.shape()));
  if (bias.defined() && bias.shape() != Shape{m})
    throw ShapeError("linear: bias must be [" + std::to_string(m) + "], got " + to_string(bias.shape()));
  auto out = BasicTensor<T>::zeros({n, m});
  {
    CMapMat<T> xm(x.data().data(), n, d);
    CMapMat<T> wm(weight.data().data(), d, m);
    MapMat<T> om(out.data().data(), n, m);
    om.noalias() = xm * wm;
    if (bias.defined()) {
      Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bm(bias.data().data(), m);
      om.rowwise() += bm;
    }
  }
  if (tape.tracks({&x, &weight, &bias})) {
    tape.record({x, weight, bias}, out, [x, weight, bias, out, n, d, m]() mutable {
      CMapMat<T> gm(out.grad().data(), n, m);
      if (x.requires_grad()) {
        MapMat<T> dx(x.ensure_grad().data(), n, d);
        dx.noalias() += gm * CMapMat<T>(weight.data().data(), d, m).transpose();
      }
      if (weight.requires_grad()) {
        MapMat<T> dw(weight.ensure_grad().data(), d, m);
        dw.noalias() += CMapMat<T>(x.data().data(), n, d).transpose() * gm;
      }
      if (bias.defined() && bias.requires_grad()) {
        auto db = bias.ensure_grad();
        for (std::size_t j = 0; j < m; ++j) db[j] += gm.col(j).sum();
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> relu(Tape<T>& tape, const BasicTensor<T>& x) {
  auto out = BasicTensor<T>::zeros(x.shape());
  auto xs = x.data();
  auto os = out.data();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = xs[i] > T(0) ? xs[i] : T(0);
  if (tape.tracks({&x})) {
    tape.record({x}, out, [x, out]() mutable {
      auto gx = x.ensure_grad();
      auto go = out.grad();
      auto xs = x.data();
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (xs[i] > T(0)) gx[i] += go[i];
    });
  }
  return out;
}

namespace {
enum class Binary { add, sub, mul };

template <class T>
BasicTensor<T> binary(Tape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b, Binary kind,
                      const char* name) {
  require_same_shape(a, b, name);
  auto out = BasicTensor<T>::zeros(a.shape());
  auto as = a.data();
  auto bs = b.data();
  auto os = out.data();
  switch (kind) {
    case Binary::add:
      for (std::size_t i = 0; i < os.size(); ++i) os[i] = as[i] + bs[i];
      break;
    case Binary::sub:
      for (std::size_t i = 0; i < os.size(); ++i) os[i] = as[i] - bs[i];
      break;
    case Binary::mul:
      for (std::size_t i = 0; i < os.size(); ++i) os[i] = as[i] * bs[i];
      break;
  }
  if (tape.tracks({&a, &b})) {
    tape.record({a, b}, out, [a, b, out, kind]() mutable {
      auto go = out.grad();
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        if (kind == Binary::mul) {
          auto bs = b.data();
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * bs[i];
        } else {
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
        }
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        if (kind == Binary::mul) {
          auto as = a.data();
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * as[i];
        } else if (kind == Binary::sub) {
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
        } else {
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i];
        }
      }
    });
  }
  return out;
}
}  // namespace

template <class T>
BasicTensor<T> add(Tape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(tape, a, b, Binary::add, "add");
}
template <class T>
BasicTensor<T> sub(Tape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(tape, a, b, Binary::sub, "sub");
}
template <class T>
BasicTensor<T> hadamard(Tape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(tape, a, b, Binary::mul, "hadamard");
}

template <class T>
BasicTensor<T> sum(Tape<T>& tape, const BasicTensor<T>& x) {
  double acc = 0;
  for (T v : x.data()) acc += v;
  auto out = BasicTensor<T>::scalar(static_cast<T>(acc));
  if (tape.tracks({&x})) {
    tape.record({x}, out, [x, out]() mutable {
      const T g = out.grad()[0];
      for (auto& v : x.ensure_grad()) v += g;
    });
  }
  return out;
}

template <class T>
BasicTensor<T> reshape(Tape<T>& tape, const BasicTensor<T>& x, Shape shape) {
  auto out = x.detach().reshaped(std::move(shape));
  if (tape.tracks({&x})) {
    tape.record({x}, out, [x, out]() mutable {
      auto gx = x.ensure_grad();
      auto go = out.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

template <class T>
BasicTensor<T> maxpool2x2(Tape<T>& tape, const BasicTensor<T>& x) {
  require_rank(x, 4, "maxpool2x2", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2) throw ShapeError("maxpool2x2: spatial dims must be even, got " + to_string(x.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  auto out = BasicTensor<T>::zeros({n, c, oh, ow});
  std::vector<std::uint32_t> argmax(out.size());
  auto xs = x.data();
  auto os = out.data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = base + 2 * oy * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + (2 * oy + dy) * w + 2 * ox + dx;
            if (xs[idx] > xs[best]) best = idx;
          }
        const std::size_t o = (plane * oh + oy) * ow + ox;
        os[o] = xs[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
  }
  if (tape.tracks({&x})) {
    tape.record({x}, out, [x, out, argmax = std::move(argmax)]() mutable {
      auto gx = x.ensure_grad();
      auto go = out.grad();
      for (std::size_t o = 0; o < go.size(); ++o) gx[argmax[o]] += go[o];
    });
  }
  return out;
}

template <class T>
BasicTensor<T> avgpool(Tape<T>& tape, const BasicTensor<T>& x) {
  require_rank(x, 4, "avgpool", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  auto out = BasicTensor<T>::zeros({n, c});
  auto xs = x.data();
  for (std::size_t p = 0; p < n * c; ++p) {
    double acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += xs[p * plane + i];
    out[p] = static_cast<T>(acc / static_cast<double>(plane));
  }
  if (tape.tracks({&x})) {
    tape.record({x}, out, [x, out, n, c, plane]() mutable {
      auto gx = x.ensure_grad();
      auto go = out.grad();
      const T scale = T(1) / static_cast<T>(plane);
      for (std::size_t p = 0; p < n * c; ++p)
        for (std::size_t i = 0; i < plane; ++i) gx[p * plane + i] += go[p] * scale;
    });
  }
  return out;
}

template <class T>
BasicTensor<T> batchnorm(Tape<T>& tape, const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                         const BasicTensor<T>& beta, BasicTensor<T> running_mean, BasicTensor<T> running_var,
                         const BatchNormOptions& opts) {
  if (x.rank() != 4 && x.rank() != 2)
    throw ShapeError("batchnorm: input must be [N,C,H,W] or [N,C], got " + to_string(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t plane = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  const Shape chan{c};
  if (gamma.shape() != chan || beta.shape() != chan || running_mean.shape() != chan || running_var.shape() != chan)
    throw ShapeError("batchnorm: parameters must all be [" + std::to_string(c) + "]");
  const std::size_t count = n * plane;
  if (opts.training && count < 2) throw ShapeError("batchnorm: training mode needs more than one value per channel");

  std::vector<T> mean(c), inv_std(c);
  auto xs = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (opts.training) {
      double s = 0, ss = 0;
      for (std::size_t s_ = 0; s_ < n; ++s_) {
        const T* p = xs.data() + (s_ * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(count);
      for (std::size_t s_ = 0; s_ < n; ++s_) {
        const T* p = xs.data() + (s_ * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      const double var = ss / static_cast<double>(count);
      mean[ch] = static_cast<T>(mu);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + opts.eps));
      const double unbiased = ss / static_cast<double>(count - 1);
      running_mean[ch] = static_cast<T>((1 - opts.momentum) * running_mean[ch] + opts.momentum * mu);
      running_var[ch] = static_cast<T>((1 - opts.momentum) * running_var[ch] + opts.momentum * unbiased);
    } else {
      mean[ch] = running_mean[ch];
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[ch]) + opts.eps));
    }
  }
  auto out = BasicTensor<T>::zeros(x.shape());
  auto xhat = BasicTensor<T>::zeros(x.shape());
  auto os = out.data();
  auto hs = xhat.data();
  for (std::size_t s_ = 0; s_ < n; ++s_)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (s_ * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        hs[off + i] = (xs[off + i] - mean[ch]) * inv_std[ch];
        os[off + i] = gamma[ch] * hs[off + i] + beta[ch];
      }
    }
  if (tape.tracks({&x, &gamma, &beta})) {
    const bool training = opts.training;
    tape.record({x, gamma, beta}, out,
                [x, gamma, beta, out, xhat, inv_std = std::move(inv_std), n, c, plane, count, training]() mutable {
                  auto go = out.grad();
                  auto hs = xhat.data();
                  std::vector<double> sum_g(c, 0.0), sum_gh(c, 0.0);
                  for (std::size_t s_ = 0; s_ < n; ++s_)
                    for (std::size_t ch = 0; ch < c; ++ch) {
                      const std::size_t off = (s_ * c + ch) * plane;
                      for (std::size_t i = 0; i < plane; ++i) {
                        sum_g[ch] += go[off + i];
                        sum_gh[ch] += go[off + i] * hs[off + i];
                      }
                    }
                  if (gamma.requires_grad()) {
                    auto gg = gamma.ensure_grad();
                    for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += static_cast<T>(sum_gh[ch]);
                  }
                  if (beta.requires_grad()) {
                    auto gb = beta.ensure_grad();
                    for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += static_cast<T>(sum_g[ch]);
                  }
                  if (!x.requires_grad()) return;
                  auto gx = x.ensure_grad();
                  const double m = static_cast<double>(count);
                  for (std::size_t s_ = 0; s_ < n; ++s_)
                    for (std::size_t ch = 0; ch < c; ++ch) {
                      const std::size_t off = (s_ * c + ch) * plane;
                      const double k = static_cast<double>(gamma[ch]) * inv_std[ch];
                      for (std::size_t i = 0; i < plane; ++i) {
                        if (training)
                          gx[off + i] += static_cast<T>(k * (go[off + i] - sum_g[ch] / m - hs[off + i] * sum_gh[ch] / m));
                        else
                          gx[off + i] += static_cast<T>(k * go[off + i]);
                      }
                    }
                });
  }
  return out;
}

template <class T>
BasicTensor<T> softmax_cross_entropy(Tape<T>& tape, const BasicTensor<T>& logits,
                                     std::span<const std::int32_t> labels) {
  require_rank(logits, 2, "softmax_cross_entropy", "logits");
  const std::size_t n = logits.dim(0), m = logits.dim(1);
  if (labels.size() != n)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  for (auto y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= m)
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(y) + " outside [0," +
                              std::to_string(m) + ")");
  auto zs = logits.data();
  std::vector<T> probs(n * m);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = zs.data() + i * m;
    const T zmax = *std::max_element(z, z + m);
    double denom = 0;
    for (std::size_t j = 0; j < m; ++j) denom += std::exp(static_cast<double>(z[j] - zmax));
    const double lse = std::log(denom) + zmax;
    total += lse - z[labels[i]];
    for (std::size_t j = 0; j < m; ++j) probs[i * m + j] = static_cast<T>(std::exp(z[j] - lse));
  }
  auto out = BasicTensor<T>::scalar(static_cast<T>(total / static_cast<double>(n)));
  if (tape.tracks({&logits})) {
    std::vector<std::int32_t> ys(labels.begin(), labels.end());
    tape.record({logits}, out, [logits, out, probs = std::move(probs), ys = std::move(ys), n, m]() mutable {
      const T g = out.grad()[0] / static_cast<T>(n);
      auto gz = logits.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
          gz[i * m + j] += g * (probs[i * m + j] - (static_cast<std::int32_t>(j) == ys[i] ? T(1) : T(0)));
    });
  }
  return out;
}

#define DFM_INSTANTIATE_OPS(T)                                                                                    \
  template BasicTensor<T> conv2d(Tape<T>&, const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,   \
                                 std::size_t, std::size_t);                                                       \
  template BasicTensor<T> linear(Tape<T>&, const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);  \
  template BasicTensor<T> relu(Tape<T>&, const BasicTensor<T>&);                                                  \
  template BasicTensor<T> add(Tape<T>&, const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template BasicTensor<T> sub(Tape<T>&, const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template BasicTensor<T> hadamard(Tape<T>&, const BasicTensor<T>&, const BasicTensor<T>&);                       \
  template BasicTensor<T> sum(Tape<T>&, const BasicTensor<T>&);                                                   \
  template BasicTensor<T> reshape(Tape<T>&, const BasicTensor<T>&, Shape);                                        \
  template BasicTensor<T> maxpool2x2(Tape<T>&, const BasicTensor<T>&);                                            \
  template BasicTensor<T> avgpool(Tape<T>&, const BasicTensor<T>&);                                               \
  template BasicTensor<T> batchnorm(Tape<T>&, const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                    BasicTensor<T>, BasicTensor<T>, const BatchNormOptions&);                     \
  template BasicTensor<T> softmax_cross_entropy(Tape<T>&, const BasicTensor<T>&, std::span<const std::int32_t>);

DFM_INSTANTIATE_OPS(float)
DFM_INSTANTIATE_OPS(double)

}  // namespace dfm::ops
