#ifndef TEMPO_NN_HPP
#define TEMPO_NN_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "tempo/tensor.hpp"

namespace tempo {

// Softmax along the trailing axis, stabilized by max-subtraction.
inline Tensor softmax(const Tensor& a) {
  if (a.ndim() == 0) throw DimensionError("softmax: need at least 1-d tensor");
  const std::int64_t d = a.shape().back();
  const std::int64_t rows = a.size() / d;
  std::vector<double> out(a.data().size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* x = a.data().data() + r * d;
    double mx = x[0];
    for (std::int64_t j = 1; j < d; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      out[r * d + j] = std::exp(x[j] - mx);
      z += out[r * d + j];
    }
    for (std::int64_t j = 0; j < d; ++j) out[r * d + j] /= z;
  }
  return detail::make_op(a.shape(), std::move(out), {a}, [d, rows](detail::Node& nd) {
    auto& p = *nd.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* y = nd.value.data() + r * d;
      const double* g = nd.grad.data() + r * d;
      double dot = 0.0;
      for (std::int64_t j = 0; j < d; ++j) dot += y[j] * g[j];
      for (std::int64_t j = 0; j < d; ++j) p.grad[r * d + j] += y[j] * (g[j] - dot);
    }
  });
}

// Layer normalization over the trailing axis with affine gain/bias of length D.
inline Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
  if (a.ndim() == 0 || gain.ndim() != 1 || bias.ndim() != 1)
    throw DimensionError("layer_norm: bad ranks");
  const std::int64_t d = a.shape().back();
  if (gain.dim(0) != d || bias.dim(0) != d)
    throw DimensionError("layer_norm: affine length mismatch");
  const std::int64_t rows = a.size() / d;
  std::vector<double> out(a.data().size());
  std::vector<double> means(rows), istds(rows);
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* x = a.data().data() + r * d;
    double m = 0.0;
    for (std::int64_t j = 0; j < d; ++j) m += x[j];
    m /= static_cast<double>(d);
    double v = 0.0;
    for (std::int64_t j = 0; j < d; ++j) v += (x[j] - m) * (x[j] - m);
    v /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(v + eps);
    means[r] = m;
    istds[r] = is;
    for (std::int64_t j = 0; j < d; ++j)
      out[r * d + j] = (x[j] - m) * is * gain.data()[j] + bias.data()[j];
  }
  return detail::make_op(
      a.shape(), std::move(out), {a, gain, bias},
      [d, rows, means, istds](detail::Node& nd) {
        auto &pa = *nd.parents[0], &pg = *nd.parents[1], &pb = *nd.parents[2];
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* x = pa.value.data() + r * d;
          const double* g = nd.grad.data() + r * d;
          const double m = means[r], is = istds[r];
          if (pg.requires_grad || pb.requires_grad) {
            if (pg.requires_grad) pg.ensure_grad();
            if (pb.requires_grad) pb.ensure_grad();
            for (std::int64_t j = 0; j < d; ++j) {
              const double xhat = (x[j] - m) * is;
              if (pg.requires_grad) pg.grad[j] += g[j] * xhat;
              if (pb.requires_grad) pb.grad[j] += g[j];
            }
          }
          if (pa.requires_grad) {
            pa.ensure_grad();
            // d xhat = g * gain; dx via standard layer-norm backward
            double sum_gh = 0.0, sum_gh_xhat = 0.0;
            for (std::int64_t j = 0; j < d; ++j) {
              const double gh = g[j] * pg.value[j];
              const double xhat = (x[j] - m) * is;
              sum_gh += gh;
              sum_gh_xhat += gh * xhat;
            }
            const double invd = 1.0 / static_cast<double>(d);
            for (std::int64_t j = 0; j < d; ++j) {
              const double gh = g[j] * pg.value[j];
              const double xhat = (x[j] - m) * is;
              pa.grad[r * d + j] += is * (gh - invd * sum_gh - xhat * invd * sum_gh_xhat);
            }
          }
        }
      });
}

// GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
inline Tensor gelu(const Tensor& a) {
  constexpr double kAlpha = 0.7978845608028653558798921198687;  // sqrt(2/pi)
  constexpr double kBeta = 0.044715;
  std::vector<double> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.data()[i];
    out[i] = 0.5 * x * (1.0 + std::tanh(kAlpha * (x + kBeta * x * x * x)));
  }
  return detail::make_op(a.shape(), std::move(out), {a}, [](detail::Node& nd) {
    auto& p = *nd.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < nd.grad.size(); ++i) {
      const double x = p.value[i];
      const double u = kAlpha * (x + kBeta * x * x * x);
      const double t = std::tanh(u);
      const double du = kAlpha * (1.0 + 3.0 * kBeta * x * x);
      const double dydx = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      p.grad[i] += nd.grad[i] * dydx;
    }
  });
}

// Mean cross-entropy of logits rows [B x C] against integer labels.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels) {
  if (logits.ndim() != 2) throw DimensionError("cross_entropy: need [B x C] logits");
  const std::int64_t b = logits.dim(0), c = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != b)
    throw ContractError("cross_entropy: label count mismatch");
  for (auto l : labels)
    if (l < 0 || l >= c) throw ConfigError("cross_entropy: label out of range");
  std::vector<double> probs(static_cast<std::size_t>(b * c));
  double loss = 0.0;
  for (std::int64_t r = 0; r < b; ++r) {
    const double* x = logits.data().data() + r * c;
    double mx = x[0];
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      probs[r * c + j] = std::exp(x[j] - mx);
      z += probs[r * c + j];
    }
    for (std::int64_t j = 0; j < c; ++j) probs[r * c + j] /= z;
    loss += std::log(z) + mx - x[labels[static_cast<std::size_t>(r)]];
  }
  loss /= static_cast<double>(b);
  return detail::make_op({}, {loss}, {logits}, [b, c, probs, labels](detail::Node& nd) {
    auto& p = *nd.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const double g = nd.grad[0] / static_cast<double>(b);
    for (std::int64_t r = 0; r < b; ++r) {
      for (std::int64_t j = 0; j < c; ++j) p.grad[r * c + j] += g * probs[r * c + j];
      p.grad[r * c + labels[static_cast<std::size_t>(r)]] -= g;
    }
  });
}

inline Tensor cross_entropy(const Tensor& logits, std::int64_t label) {
  Tensor rows = logits.ndim() == 1 ? reshape(logits, {1, logits.dim(0)}) : logits;
  return cross_entropy(rows, std::vector<std::int64_t>{label});
}

// Cosine similarity of two tensors viewed as flat vectors; scalar output.
inline Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps = 1e-12) {
  if (a.size() != b.size())
    throw DimensionError("cosine_similarity: size mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  const auto& x = a.data();
  const auto& y = b.data();
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  // eps only guards the zero-vector case, so cos(x, x) stays exactly 1
  nx = std::max(std::sqrt(nx), eps);
  ny = std::max(std::sqrt(ny), eps);
  const double cosv = x == y ? 1.0 : dot / (nx * ny);
  return detail::make_op({}, {cosv}, {a, b}, [dot, nx, ny, cosv](detail::Node& nd) {
    auto &pa = *nd.parents[0], &pb = *nd.parents[1];
    const double g = nd.grad[0];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < pa.value.size(); ++i)
        pa.grad[i] += g * (pb.value[i] / (nx * ny) - cosv * pa.value[i] / (nx * nx));
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < pb.value.size(); ++i)
        pb.grad[i] += g * (pa.value[i] / (nx * ny) - cosv * pb.value[i] / (ny * ny));
    }
  });
}

// Bilinear interpolation of a [c x h x w] tensor to [c x oh x ow],
// align_corners = false. Gradient scatters with the same weights.
inline Tensor bilinear_resize(const Tensor& a, std::int64_t oh, std::int64_t ow) {
  if (a.ndim() != 3) throw DimensionError("bilinear_resize: need [c x h x w], got " + shape_str(a.shape()));
  if (oh < 1 || ow < 1) throw DimensionError("bilinear_resize: output size must be >= 1");
  const std::int64_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
  if (oh == h && ow == w) {
    // identity resize stays bit-exact
    return detail::make_op(a.shape(), a.data(), {a}, [](detail::Node& nd) {
      detail::accumulate(*nd.parents[0], nd.grad);
    });
  }
  struct Tap {
    std::int64_t lo, hi;
    double wlo, whi;
  };
  auto taps = [](std::int64_t in, std::int64_t out, std::int64_t i) {
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    std::int64_t lo = static_cast<std::int64_t>(src);
    if (lo > in - 1) lo = in - 1;
    std::int64_t hi = std::min(lo + 1, in - 1);
    const double f = src - static_cast<double>(lo);
    return Tap{lo, hi, 1.0 - f, f};
  };
  std::vector<Tap> ty(static_cast<std::size_t>(oh)), tx(static_cast<std::size_t>(ow));
  for (std::int64_t i = 0; i < oh; ++i) ty[static_cast<std::size_t>(i)] = taps(h, oh, i);
  for (std::int64_t j = 0; j < ow; ++j) tx[static_cast<std::size_t>(j)] = taps(w, ow, j);
  std::vector<double> out(static_cast<std::size_t>(c * oh * ow));
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const double* in = a.data().data() + ch * h * w;
    double* o = out.data() + ch * oh * ow;
    for (std::int64_t i = 0; i < oh; ++i) {
      const auto& yt = ty[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < ow; ++j) {
        const auto& xt = tx[static_cast<std::size_t>(j)];
        o[i * ow + j] = yt.wlo * (xt.wlo * in[yt.lo * w + xt.lo] + xt.whi * in[yt.lo * w + xt.hi]) +
                        yt.whi * (xt.wlo * in[yt.hi * w + xt.lo] + xt.whi * in[yt.hi * w + xt.hi]);
      }
    }
  }
  return detail::make_op({c, oh, ow}, std::move(out), {a},
                         [c, h, w, oh, ow, ty, tx](detail::Node& nd) {
                           auto& p = *nd.parents[0];
                           if (!p.requires_grad) return;
                           p.ensure_grad();
                           for (std::int64_t ch = 0; ch < c; ++ch) {
                             double* gin = p.grad.data() + ch * h * w;
                             const double* g = nd.grad.data() + ch * oh * ow;
                             for (std::int64_t i = 0; i < oh; ++i) {
                               const auto& yt = ty[static_cast<std::size_t>(i)];
                               for (std::int64_t j = 0; j < ow; ++j) {
                                 const auto& xt = tx[static_cast<std::size_t>(j)];
                                 const double gv = g[i * ow + j];
                                 gin[yt.lo * w + xt.lo] += gv * yt.wlo * xt.wlo;
                                 gin[yt.lo * w + xt.hi] += gv * yt.wlo * xt.whi;
                                 gin[yt.hi * w + xt.lo] += gv * yt.whi * xt.wlo;
                                 gin[yt.hi * w + xt.hi] += gv * yt.whi * xt.whi;
                               }
                             }
                           }
                         });
}

}  // namespace tempo

#endif  // TEMPO_NN_HPP
