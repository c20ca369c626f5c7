#pragma once

#include <cmath>
#include <string>

#include "dynanet/tape.hpp"

namespace dynanet {

namespace detail {

template <class Scalar>
void require_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <class Scalar>
void require_rank3(const Var<Scalar>& x, const char* op) {
  if (x.value().rank() != 3) {
    throw ShapeError(std::string(op) + ": expected a CxHxW tensor, got " + shape_string(x.shape()));
  }
}

// Number of output positions along one axis. Floor division is accepted only
// when the positions it drops are padding; dropping real input is an error.
inline Index conv_output_extent(Index in, Index kernel, Index stride, Index pad, const char* axis) {
  const Index span = in + 2 * pad - kernel;
  if (span < 0) {
    throw ConfigError(std::string("conv2d: kernel larger than padded input along ") + axis);
  }
  if (span % stride > pad) {
    throw ConfigError(std::string("conv2d: output size along ") + axis + " is not an integer (" +
                      std::to_string(in) + " + 2*" + std::to_string(pad) + " - " + std::to_string(kernel) +
                      " not divisible by stride " + std::to_string(stride) + ")");
  }
  return span / stride + 1;
}

template <class Scalar>
void im2col(const Scalar* in, Index channels, Index height, Index width, Index kh, Index kw, Index stride, Index pad,
            Index out_h, Index out_w, Scalar* cols) {
  const Index plane = out_h * out_w;
  for (Index c = 0; c < channels; ++c) {
    for (Index i = 0; i < kh; ++i) {
      for (Index j = 0; j < kw; ++j) {
        Scalar* dst = cols + ((c * kh + i) * kw + j) * plane;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * stride - pad + i;
          Scalar* row = dst + oy * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(row, row + out_w, Scalar(0));
            continue;
          }
          const Scalar* src = in + (c * height + iy) * width;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox * stride - pad + j;
            row[ox] = (ix >= 0 && ix < width) ? src[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

template <class Scalar>
void col2im(const Scalar* cols, Index channels, Index height, Index width, Index kh, Index kw, Index stride,
            Index pad, Index out_h, Index out_w, Scalar* out) {
  const Index plane = out_h * out_w;
  for (Index c = 0; c < channels; ++c) {
    for (Index i = 0; i < kh; ++i) {
      for (Index j = 0; j < kw; ++j) {
        const Scalar* src = cols + ((c * kh + i) * kw + j) * plane;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * stride - pad + i;
          if (iy < 0 || iy >= height) continue;
          Scalar* dst = out + (c * height + iy) * width;
          const Scalar* row = src + oy * out_w;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox * stride - pad + j;
            if (ix >= 0 && ix < width) dst[ix] += row[ox];
          }
        }
      }
    }
  }
}

template <class Scalar>
Eigen::Map<const Vec<Scalar>> flat(const RowMat<Scalar>& m) {
  return Eigen::Map<const Vec<Scalar>>(m.data(), m.size());
}

}  // namespace detail

// Cross-correlation (no kernel flip) with zero padding.
// input C×H×W, kernel O×C×Kh×Kw, bias O.
template <class Scalar>
Var<Scalar> conv2d(const Var<Scalar>& input, const Var<Scalar>& kernel, const Var<Scalar>& bias, Index stride,
                   Index pad) {
  detail::require_rank3(input, "conv2d");
  const auto& x = input.value();
  const auto& k = kernel.value();
  if (k.rank() != 4) throw ShapeError("conv2d: kernel must be OxCxKhxKw, got " + shape_string(k.shape()));
  if (stride < 1) throw ConfigError("conv2d: stride must be positive");
  if (pad < 0) throw ConfigError("conv2d: padding must be non-negative");
  const Index channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  const Index out_ch = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (k.dim(1) != channels) {
    throw ShapeError("conv2d: input has " + std::to_string(channels) + " channels but kernel expects " +
                     std::to_string(k.dim(1)));
  }
  if (bias.shape() != Shape{out_ch}) {
    throw ShapeError("conv2d: bias shape " + shape_string(bias.shape()) + " does not match " +
                     std::to_string(out_ch) + " output channels");
  }
  const Index out_h = detail::conv_output_extent(height, kh, stride, pad, "height");
  const Index out_w = detail::conv_output_extent(width, kw, stride, pad, "width");
  const Index plane = out_h * out_w;
  const Index patch = channels * kh * kw;
  const bool pointwise = kh == 1 && kw == 1 && stride == 1 && pad == 0;

  RowMat<Scalar> cols;
  if (!pointwise) {
    cols.resize(patch, plane);
    detail::im2col(x.raw(), channels, height, width, kh, kw, stride, pad, out_h, out_w, cols.data());
  }
  const ConstRowMatMap<Scalar> kmat(k.raw(), out_ch, patch);
  Tensor<Scalar> out({out_ch, out_h, out_w});
  RowMatMap<Scalar> omat(out.raw(), out_ch, plane);
  if (pointwise) {
    omat.noalias() = kmat * x.matrix();
  } else {
    omat.noalias() = kmat * cols;
  }
  omat.colwise() += bias.value().data();

  return input.tape().record(
      std::move(out), {input, kernel, bias},
      [=, cols = std::move(cols)](Tape<Scalar>& tape, const Tensor<Scalar>& g) {
        const ConstRowMatMap<Scalar> gmat(g.raw(), out_ch, plane);
        const auto& xv = input.value();
        const ConstRowMatMap<Scalar> src(pointwise ? xv.raw() : cols.data(), patch, plane);
        if (kernel.requires_grad()) {
          RowMat<Scalar> dk = gmat * src.transpose();
          tape.accumulate(kernel, detail::flat(dk));
        }
        if (bias.requires_grad()) {
          Vec<Scalar> db = gmat.rowwise().sum();
          tape.accumulate(bias, db);
        }
        if (input.requires_grad()) {
          const ConstRowMatMap<Scalar> kv(kernel.value().raw(), out_ch, patch);
          RowMat<Scalar> dcols = kv.transpose() * gmat;
          if (pointwise) {
            tape.accumulate(input, detail::flat(dcols));
          } else {
            Vec<Scalar> dx = Vec<Scalar>::Zero(xv.size());
            detail::col2im(dcols.data(), channels, height, width, kh, kw, stride, pad, out_h, out_w, dx.data());
            tape.accumulate(input, dx);
          }
        }
      });
}

// Elementwise max(0, x). Gradient at exactly 0 is 0.
template <class Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape(), x.value().data().cwiseMax(Scalar(0)));
  return x.tape().record(std::move(out), {x}, [x](Tape<Scalar>& tape, const Tensor<Scalar>& g) {
    tape.accumulate(x, (x.value().data().array() > Scalar(0)).select(g.data().array(), Scalar(0)));
  });
}

// Maps R to (0, 1) via 0.5·(tanh(x) + 1).
template <class Scalar>
Var<Scalar> squash(const Var<Scalar>& x) {
  Vec<Scalar> t = x.value().data().array().tanh().matrix();
  Tensor<Scalar> out(x.shape(), ((t.array() + Scalar(1)) * Scalar(0.5)).matrix());
  return x.tape().record(std::move(out), {x}, [x, t = std::move(t)](Tape<Scalar>& tape, const Tensor<Scalar>& g) {
    tape.accumulate(x, g.data().array() * (Scalar(0.5) * (Scalar(1) - t.array().square())));
  });
}

// Per-channel normalization over spatial positions followed by gain·x̂ + shift.
template <class Scalar>
Var<Scalar> instance_norm(const Var<Scalar>& x, const Var<Scalar>& gain, const Var<Scalar>& shift, Scalar eps) {
  detail::require_rank3(x, "instance_norm");
  const auto& xv = x.value();
  const Index channels = xv.dim(0);
  const Index n = xv.dim(1) * xv.dim(2);
  if (gain.shape() != Shape{channels} || shift.shape() != Shape{channels}) {
    throw ShapeError("instance_norm: gain/shift must have shape [" + std::to_string(channels) + "]");
  }
  RowMat<Scalar> xhat(channels, n);
  Vec<Scalar> inv_std(channels);
  const auto xm = xv.matrix();
  for (Index c = 0; c < channels; ++c) {
    const Scalar mean = xm.row(c).mean();
    const Scalar var = (xm.row(c).array() - mean).square().mean();
    inv_std[c] = Scalar(1) / std::sqrt(var + eps);
    xhat.row(c) = (xm.row(c).array() - mean) * inv_std[c];
  }
  Tensor<Scalar> out(xv.shape());
  auto om = out.matrix();
  om = (xhat.array().colwise() * gain.value().data().array()).matrix();
  om.colwise() += shift.value().data();

  return x.tape().record(
      std::move(out), {x, gain, shift},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Scalar>& tape, const Tensor<Scalar>& g) {
        const auto gm = g.matrix();
        if (gain.requires_grad()) {
          Vec<Scalar> dg = (gm.array() * xhat.array()).rowwise().sum().matrix();
          tape.accumulate(gain, dg);
        }
        if (shift.requires_grad()) {
          Vec<Scalar> ds = gm.rowwise().sum();
          tape.accumulate(shift, ds);
        }
        if (x.requires_grad()) {
          RowMat<Scalar> dxhat = (gm.array().colwise() * gain.value().data().array()).matrix();
          RowMat<Scalar> dx(channels, n);
          const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
          for (Index c = 0; c < channels; ++c) {
            const Scalar sum_d = dxhat.row(c).sum();
            const Scalar sum_dx = dxhat.row(c).dot(xhat.row(c));
            dx.row(c) = (inv_std[c] * inv_n) *
                        (static_cast<Scalar>(n) * dxhat.row(c).array() - sum_d - xhat.row(c).array() * sum_dx);
          }
          tape.accumulate(x, detail::flat(dx));
        }
      });
}

// Nearest-neighbour upsampling by an integer factor along H and W.
template <class Scalar>
Var<Scalar> upsample_nearest(const Var<Scalar>& x, Index factor) {
  detail::require_rank3(x, "upsample_nearest");
  if (factor < 1) throw ConfigError("upsample_nearest: factor must be positive");
  const auto& xv = x.value();
  const Index channels = xv.dim(0), height = xv.dim(1), width = xv.dim(2);
  Tensor<Scalar> out({channels, height * factor, width * factor});
  for (Index c = 0; c < channels; ++c) {
    for (Index y = 0; y < height * factor; ++y) {
      for (Index w = 0; w < width * factor; ++w) out.at(c, y, w) = xv.at(c, y / factor, w / factor);
    }
  }
  return x.tape().record(std::move(out), {x}, [=](Tape<Scalar>& tape, const Tensor<Scalar>& g) {
    Tensor<Scalar> dx({channels, height, width});
    for (Index c = 0; c < channels; ++c) {
      for (Index y = 0; y < height * factor; ++y) {
        for (Index w = 0; w < width * factor; ++w) dx.at(c, y / factor, w / factor) += g.at(c, y, w);
      }
    }
    tape.accumulate(x, dx);
  });
}

template <class Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<Scalar> out(a.shape(), a.value().data() + b.value().data());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<Scalar>& tape, const Tensor<Scalar>& g) {
    tape.accumulate(a, g.data());
    tape.accumulate(b, g.data());
  });
}

template <class Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor<Scalar> out(a.shape(), a.value().data() - b.value().data());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<Scalar>& tape, const Tensor<Scalar>& g) {
    tape.accumulate(a, g.data());
    tape.accumulate(b, -g.data());
  });
}

// Elementwise product.
template <class Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<Scalar> out(a.shape(), a.value().data().cwiseProduct(b.value().data()));
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<Scalar>& tape, const Tensor<Scalar>& g) {
    if (a.requires_grad()) tape.accumulate(a, g.data().cwiseProduct(b.value().data()));
    if (b.requires_grad()) tape.accumulate(b, g.data().cwiseProduct(a.value().data()));
  });
}

template <class Scalar>
Var<Scalar> scalar_mul(const Var<Scalar>& x, Scalar s) {
  Tensor<Scalar> out(x.shape(), x.value().data() * s);
  return x.tape().record(std::move(out), {x}, [x, s](Tape<Scalar>& tape, const Tensor<Scalar>& g) {
    tape.accumulate(x, g.data() * s);
  });
}

template <class Scalar>
Var<Scalar> square(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape(), x.value().data().array().square().matrix());
  return x.tape().record(std::move(out), {x}, [x](Tape<Scalar>& tape, const Tensor<Scalar>& g) {
    tape.accumulate(x, Scalar(2) * g.data().cwiseProduct(x.value().data()));
  });
}

// |x| with subgradient 0 at 0.
template <class Scalar>
Var<Scalar> abs(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape(), x.value().data().cwiseAbs());
  return x.tape().record(std::move(out), {x}, [x](Tape<Scalar>& tape, const Tensor<Scalar>& g) {
    tape.accumulate(x, g.data().array() * x.value().data().array().sign());
  });
}

template <class Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  auto out = Tensor<Scalar>::scalar(x.value().data().sum());
  return x.tape().record(std::move(out), {x}, [x](Tape<Scalar>& tape, const Tensor<Scalar>& g) {
    tape.accumulate(x, Vec<Scalar>::Constant(x.value().size(), g[0]));
  });
}

template <class Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  const Index n = x.value().size();
  auto out = Tensor<Scalar>::scalar(x.value().data().sum() / static_cast<Scalar>(n));
  return x.tape().record(std::move(out), {x}, [x, n](Tape<Scalar>& tape, const Tensor<Scalar>& g) {
    tape.accumulate(x, Vec<Scalar>::Constant(n, g[0] / static_cast<Scalar>(n)));
  });
}

// Channel inner products over spatial positions, normalized by C·H·W.
template <class Scalar>
Var<Scalar> gram(const Var<Scalar>& feature) {
  detail::require_rank3(feature, "gram");
  const auto& f = feature.value();
  const Index channels = f.dim(0);
  const Index positions = f.dim(1) * f.dim(2);
  const Scalar norm = Scalar(1) / static_cast<Scalar>(channels * positions);
  const auto fm = f.matrix();
  Tensor<Scalar> out({channels, channels});
  out.matrix().noalias() = (fm * fm.transpose()) * norm;
  return feature.tape().record(
      std::move(out), {feature}, [=](Tape<Scalar>& tape, const Tensor<Scalar>& g) {
        const auto gm = g.matrix();
        RowMat<Scalar> sym = gm + gm.transpose();
        RowMat<Scalar> df = (sym * feature.value().matrix()) * norm;
        tape.accumulate(feature, detail::flat(df));
      });
}

// mean((a - b)^2)
template <class Scalar>
Var<Scalar> mse(const Var<Scalar>& a, const Var<Scalar>& b) {
  return mean(square(sub(a, b)));
}

// mean(|a - b|)
template <class Scalar>
Var<Scalar> l1(const Var<Scalar>& a, const Var<Scalar>& b) {
  return mean(abs(sub(a, b)));
}

template <class Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  return add(a, b);
}

template <class Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  return sub(a, b);
}

template <class Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) {
  return mul(a, b);
}

template <class Scalar>
Var<Scalar> operator*(Scalar s, const Var<Scalar>& x) {
  return scalar_mul(x, s);
}

template <class Scalar>
Var<Scalar> operator*(const Var<Scalar>& x, Scalar s) {
  return scalar_mul(x, s);
}

}  // namespace dynanet
