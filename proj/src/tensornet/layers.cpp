#include "corrpost/tensornet/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace corrpost::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapR = Eigen::Map<const RowMat<T>>;

void require_rank(const auto& x, std::size_t rank, const char* who) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(who) + ": expected rank " + std::to_string(rank) + ", got " + x.shape_string());
  }
}

struct ConvGeometry {
  std::size_t channels, height, width, kernel, stride, pad, out_h, out_w;
  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t plane() const { return out_h * out_w; }
};

// col[(c*k + ky)*k + kx][col_offset + oy*out_w + ox] = x[c][oy*s + ky - pad][ox*s + kx - pad]
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col, std::size_t ld, std::size_t col_offset) {
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = x + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        T* dst = col + ((c * g.kernel + ky) * g.kernel + kx) * ld + col_offset;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          T* out_row = dst + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(out_row, out_row + g.out_w, T(0));
            continue;
          }
          const T* in_row = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            out_row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? T(0) : in_row[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, std::size_t ld, std::size_t col_offset, T* dx) {
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = dx + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const T* src = col + ((c * g.kernel + ky) * g.kernel + kx) * ld + col_offset;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* in_row = plane + static_cast<std::size_t>(iy) * g.width;
          const T* grad_row = src + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) in_row[ix] += grad_row[ox];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                  std::string name)
    : in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(kernel == 3 ? 1 : 0),
      weight_(std::move(name), {out_channels, in_channels, kernel, kernel}, T(0), true, true) {
  if (kernel != 1 && kernel != 3) throw ShapeError("Conv2d: kernel must be 1 or 3");
  if (stride != 1 && stride != 2) throw ShapeError("Conv2d: stride must be 1 or 2");
  if (in_channels == 0 || out_channels == 0) throw ShapeError("Conv2d: channel counts must be >= 1");
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, Mode mode) {
  require_rank(x, 4, "Conv2d");
  if (x.dim(1) != in_) {
    throw ShapeError(weight_.name + ": expected " + std::to_string(in_) + " input channels, got " + x.shape_string());
  }
  const std::size_t n = x.dim(0);
  const std::size_t h = x.dim(2);
  const std::size_t w = x.dim(3);
  if (h % stride_ != 0 || w % stride_ != 0) throw ShapeError(weight_.name + ": spatial dims not divisible by stride");
  const ConvGeometry g{in_, h, w, kernel_, stride_, pad_, h / stride_, w / stride_};

  Tensor<T> y({n, out_, g.out_h, g.out_w});
  // Training batches share one GEMM; inference runs sample by sample so a
  // prediction never depends on what else is in the batch.
  const std::size_t chunk = mode == Mode::kTrain ? std::max<std::size_t>(n, 1) : 1;
  std::vector<T> col;
  std::vector<T> prod;
  CMapR<T> weights(weight_.value.ptr(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(g.rows()));
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    const std::size_t ld = count * g.plane();
    col.resize(g.rows() * ld);
    prod.resize(out_ * ld);
    for (std::size_t s = 0; s < count; ++s) {
      im2col(x.ptr() + (start + s) * in_ * h * w, g, col.data(), ld, s * g.plane());
    }
    CMapR<T> cols(col.data(), static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(ld));
    MapR<T> out(prod.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(ld));
    out.noalias() = weights * cols;
    for (std::size_t s = 0; s < count; ++s) {
      for (std::size_t k = 0; k < out_; ++k) {
        const T* src = prod.data() + k * ld + s * g.plane();
        std::copy(src, src + g.plane(), y.ptr() + ((start + s) * out_ + k) * g.plane());
      }
    }
  }
  if (mode == Mode::kTrain) {
    input_ = x;
    cached_ = true;
  } else {
    cached_ = false;
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  if (!cached_) throw StateError(weight_.name + ": backward without a recorded training forward pass");
  const std::size_t n = input_.dim(0);
  const std::size_t h = input_.dim(2);
  const std::size_t w = input_.dim(3);
  const ConvGeometry g{in_, h, w, kernel_, stride_, pad_, h / stride_, w / stride_};
  if (grad_out.shape() != std::vector<std::size_t>{n, out_, g.out_h, g.out_w}) {
    throw ShapeError(weight_.name + ": gradient shape mismatch " + grad_out.shape_string());
  }
  const std::size_t ld = n * g.plane();
  std::vector<T> col(g.rows() * ld);
  for (std::size_t s = 0; s < n; ++s) im2col(input_.ptr() + s * in_ * h * w, g, col.data(), ld, s * g.plane());

  std::vector<T> grad(out_ * ld);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t k = 0; k < out_; ++k) {
      const T* src = grad_out.ptr() + (s * out_ + k) * g.plane();
      std::copy(src, src + g.plane(), grad.data() + k * ld + s * g.plane());
    }
  }
  CMapR<T> cols(col.data(), static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(ld));
  CMapR<T> gmat(grad.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(ld));
  MapR<T> dweight(weight_.grad.ptr(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(g.rows()));
  dweight.noalias() += gmat * cols.transpose();

  CMapR<T> weights(weight_.value.ptr(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(g.rows()));
  RowMat<T> dcol = weights.transpose() * gmat;
  Tensor<T> dx(input_.shape());
  for (std::size_t s = 0; s < n; ++s) col2im(dcol.data(), g, ld, s * g.plane(), dx.ptr() + s * in_ * h * w);
  cached_ = false;
  input_ = Tensor<T>();
  return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels, std::string name)
    : channels_(channels),
      gain_(name + ".gain", {channels}, T(1), true, false),
      shift_(name + ".shift", {channels}, T(0), true, false),
      running_mean_(name + ".running_mean", {channels}, T(0), false, false),
      running_var_(name + ".running_var", {channels}, T(1), false, false) {
  if (channels == 0) throw ShapeError("BatchNorm2d: channels must be >= 1");
}

template <typename T>
void BatchNorm2d<T>::collect(std::vector<Parameter<T>*>& out) {
  out.push_back(&gain_);
  out.push_back(&shift_);
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, Mode mode) {
  require_rank(x, 4, "BatchNorm2d");
  if (x.dim(1) != channels_) throw ShapeError(gain_.name + ": channel mismatch " + x.shape_string());
  const std::size_t n = x.dim(0);
  const std::size_t plane = x.dim(2) * x.dim(3);
  const std::size_t m = n * plane;
  const T eps = static_cast<T>(kBatchNormEpsilon);
  Tensor<T> y(x.shape());
  inv_std_.assign(channels_, T(0));

  if (mode == Mode::kTrain) {
    if (m < 2) throw DegenerateError(gain_.name + ": batch statistics need N*H*W >= 2 per channel");
    normalized_ = Tensor<T>(x.shape());
    const T momentum = static_cast<T>(kBatchNormMomentum);
    for (std::size_t c = 0; c < channels_; ++c) {
      // Two-pass moments in double keep float batches accurate.
      double sum = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const T* p = x.ptr() + (s * channels_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double mean = sum / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const T* p = x.ptr() + (s * channels_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mean;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(m);
      const T inv = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEpsilon));
      inv_std_[c] = inv;
      const T tm = static_cast<T>(mean);
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t off = (s * channels_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const T xhat = (x[off + i] - tm) * inv;
          normalized_[off + i] = xhat;
          y[off + i] = gain_.value[c] * xhat + shift_.value[c];
        }
      }
      const double unbiased = var * static_cast<double>(m) / static_cast<double>(m - 1);
      running_mean_.value[c] = momentum * running_mean_.value[c] + (T(1) - momentum) * static_cast<T>(mean);
      running_var_.value[c] = momentum * running_var_.value[c] + (T(1) - momentum) * static_cast<T>(unbiased);
    }
  } else {
    for (std::size_t c = 0; c < channels_; ++c) {
      const T rm = running_mean_.value[c];
      const T rv = running_var_.value[c];
      if (!std::isfinite(rm) || !std::isfinite(rv) || rv < T(0)) {
        throw StateError(gain_.name + ": running statistics are not initialized");
      }
      const T inv = T(1) / std::sqrt(rv + eps);
      inv_std_[c] = inv;
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t off = (s * channels_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) y[off + i] = gain_.value[c] * (x[off + i] - rm) * inv + shift_.value[c];
      }
    }
    cached_ = false;
    return y;
  }
  cached_ = true;
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& grad_out) {
  if (!cached_) throw StateError(gain_.name + ": backward without a recorded training forward pass");
  if (grad_out.shape() != normalized_.shape()) throw ShapeError(gain_.name + ": gradient shape mismatch");
  const std::size_t n = normalized_.dim(0);
  const std::size_t plane = normalized_.dim(2) * normalized_.dim(3);
  const auto m = static_cast<T>(n * plane);
  Tensor<T> dx(normalized_.shape());
  for (std::size_t c = 0; c < channels_; ++c) {
    T sum_dy = 0;
    T sum_dy_xhat = 0;
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t off = (s * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += grad_out[off + i];
        sum_dy_xhat += grad_out[off + i] * normalized_[off + i];
      }
    }
    gain_.grad[c] += sum_dy_xhat;
    shift_.grad[c] += sum_dy;
    const T scale = gain_.value[c] * inv_std_[c];
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t off = (s * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        dx[off + i] = scale / m * (m * grad_out[off + i] - sum_dy - normalized_[off + i] * sum_dy_xhat);
      }
    }
  }
  cached_ = false;
  normalized_ = Tensor<T>();
  return dx;
}

// ---------------------------------------------------------------------------
// Swish

template <typename T>
Tensor<T> Swish<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = swish(x[i]);
  cached_ = mode == Mode::kTrain;
  input_ = cached_ ? x : Tensor<T>();
  return y;
}

template <typename T>
Tensor<T> Swish<T>::backward(const Tensor<T>& grad_out) {
  if (!cached_) throw StateError("Swish: backward without a recorded training forward pass");
  if (grad_out.shape() != input_.shape()) throw ShapeError("Swish: gradient shape mismatch");
  Tensor<T> dx(input_.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = grad_out[i] * swish_derivative(input_[i]);
  cached_ = false;
  input_ = Tensor<T>();
  return dx;
}

// ---------------------------------------------------------------------------
// ResidualBlock

template <typename T>
ResidualBlock<T>::ResidualBlock(std::size_t in_channels, std::size_t out_channels, std::size_t stride,
                                const std::string& name)
    : conv1_(in_channels, out_channels, 3, stride, name + ".conv1"),
      bn1_(out_channels, name + ".bn1"),
      conv2_(out_channels, out_channels, 3, 1, name + ".conv2"),
      bn2_(out_channels, name + ".bn2") {
  if (stride != 1 || in_channels != out_channels) {
    proj_conv_ = std::make_unique<Conv2d<T>>(in_channels, out_channels, 1, stride, name + ".proj");
    proj_bn_ = std::make_unique<BatchNorm2d<T>>(out_channels, name + ".proj_bn");
  }
}

template <typename T>
void ResidualBlock<T>::collect(std::vector<Parameter<T>*>& out) {
  conv1_.collect(out);
  bn1_.collect(out);
  conv2_.collect(out);
  bn2_.collect(out);
  if (proj_conv_) {
    proj_conv_->collect(out);
    proj_bn_->collect(out);
  }
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> branch = bn2_.forward(conv2_.forward(act1_.forward(bn1_.forward(conv1_.forward(x, mode), mode), mode), mode), mode);
  if (proj_conv_) {
    const Tensor<T> skip = proj_bn_->forward(proj_conv_->forward(x, mode), mode);
    for (std::size_t i = 0; i < branch.size(); ++i) branch[i] += skip[i];
  } else {
    for (std::size_t i = 0; i < branch.size(); ++i) branch[i] += x[i];
  }
  return act_out_.forward(branch, mode);
}

template <typename T>
Tensor<T> ResidualBlock<T>::backward(const Tensor<T>& grad_out) {
  const Tensor<T> g = act_out_.backward(grad_out);
  Tensor<T> dx = conv1_.backward(bn1_.backward(act1_.backward(conv2_.backward(bn2_.backward(g)))));
  if (proj_conv_) {
    const Tensor<T> dskip = proj_conv_->backward(proj_bn_->backward(g));
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dskip[i];
  } else {
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i];
  }
  return dx;
}

// ---------------------------------------------------------------------------
// GlobalAvgPool

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x, Mode mode) {
  require_rank(x, 4, "GlobalAvgPool");
  const std::size_t n = x.dim(0);
  const std::size_t c = x.dim(1);
  const std::size_t plane = x.dim(2) * x.dim(3);
  Tensor<T> y({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    T acc = 0;
    const T* p = x.ptr() + i * plane;
    for (std::size_t j = 0; j < plane; ++j) acc += p[j];
    y[i] = acc / static_cast<T>(plane);
  }
  cached_ = mode == Mode::kTrain;
  input_shape_ = x.shape();
  return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) {
  if (!cached_) throw StateError("GlobalAvgPool: backward without a recorded training forward pass");
  const std::size_t plane = input_shape_[2] * input_shape_[3];
  Tensor<T> dx(input_shape_);
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    const T v = grad_out[i] / static_cast<T>(plane);
    std::fill(dx.ptr() + i * plane, dx.ptr() + (i + 1) * plane, v);
  }
  cached_ = false;
  return dx;
}

// ---------------------------------------------------------------------------
// DenseSigmoid

template <typename T>
DenseSigmoid<T>::DenseSigmoid(std::size_t in_features, std::string name)
    : in_(in_features),
      weight_(name + ".weight", {in_features}, T(0), true, true),
      bias_(name + ".bias", {1}, T(0), true, false) {}

template <typename T>
void DenseSigmoid<T>::collect(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

template <typename T>
Tensor<T> DenseSigmoid<T>::forward(const Tensor<T>& x, Mode mode) {
  require_rank(x, 2, "DenseSigmoid");
  if (x.dim(1) != in_) throw ShapeError(weight_.name + ": feature mismatch " + x.shape_string());
  const std::size_t n = x.dim(0);
  Tensor<T> y({n});
  for (std::size_t s = 0; s < n; ++s) {
    T z = bias_.value[0];
    for (std::size_t j = 0; j < in_; ++j) z += weight_.value[j] * x[s * in_ + j];
    y[s] = sigmoid(z);
  }
  cached_ = mode == Mode::kTrain;
  input_ = cached_ ? x : Tensor<T>();
  output_ = cached_ ? y : Tensor<T>();
  return y;
}

template <typename T>
Tensor<T> DenseSigmoid<T>::backward(const Tensor<T>& grad_out) {
  if (!cached_) throw StateError(weight_.name + ": backward without a recorded training forward pass");
  const std::size_t n = input_.dim(0);
  Tensor<T> dx({n, in_});
  for (std::size_t s = 0; s < n; ++s) {
    const T p = output_[s];
    const T dz = grad_out[s] * p * (T(1) - p);
    bias_.grad[0] += dz;
    for (std::size_t j = 0; j < in_; ++j) {
      weight_.grad[j] += dz * input_[s * in_ + j];
      dx[s * in_ + j] = dz * weight_.value[j];
    }
  }
  cached_ = false;
  return dx;
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
T bce(const Tensor<T>& pred, const Tensor<T>& labels) {
  if (pred.size() != labels.size() || pred.size() == 0) throw ShapeError("bce: prediction/label size mismatch");
  const T lo = static_cast<T>(kProbabilityClamp);
  const T hi = T(1) - lo;
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred[i], lo, hi);
    const double y = labels[i];
    acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return static_cast<T>(acc / static_cast<double>(pred.size()));
}

template <typename T>
Tensor<T> bce_gradient(const Tensor<T>& pred, const Tensor<T>& labels) {
  if (pred.size() != labels.size() || pred.size() == 0) throw ShapeError("bce: prediction/label size mismatch");
  const T lo = static_cast<T>(kProbabilityClamp);
  const T hi = T(1) - lo;
  const auto n = static_cast<T>(pred.size());
  Tensor<T> g(pred.shape());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T p = pred[i];
    if (p < lo || p > hi) continue;
    g[i] = (p - labels[i]) / (p * (T(1) - p)) / n;
  }
  return g;
}

template <typename T>
T l2_penalty(const std::vector<Parameter<T>*>& params, T l2) {
  double acc = 0.0;
  for (const auto* p : params) {
    if (!p->decayed) continue;
    for (T v : p->value.data()) acc += static_cast<double>(v) * v;
  }
  return static_cast<T>(static_cast<double>(l2) * acc);
}

template <typename T>
void add_l2_gradient(const std::vector<Parameter<T>*>& params, T l2) {
  for (auto* p : params) {
    if (!p->decayed) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += T(2) * l2 * p->value[i];
  }
}

template <typename T>
T bce_loss(const Tensor<T>& pred, const Tensor<T>& labels, const std::vector<Parameter<T>*>& params, T l2) {
  return bce(pred, labels) + l2_penalty(params, l2);
}

#define CORRPOST_INSTANTIATE(T)                                                                          \
  template class Conv2d<T>;                                                                              \
  template class BatchNorm2d<T>;                                                                         \
  template class Swish<T>;                                                                               \
  template class ResidualBlock<T>;                                                                       \
  template class GlobalAvgPool<T>;                                                                       \
  template class DenseSigmoid<T>;                                                                        \
  template T bce<T>(const Tensor<T>&, const Tensor<T>&);                                                 \
  template Tensor<T> bce_gradient<T>(const Tensor<T>&, const Tensor<T>&);                                \
  template T l2_penalty<T>(const std::vector<Parameter<T>*>&, T);                                        \
  template void add_l2_gradient<T>(const std::vector<Parameter<T>*>&, T);                                \
  template T bce_loss<T>(const Tensor<T>&, const Tensor<T>&, const std::vector<Parameter<T>*>&, T);

CORRPOST_INSTANTIATE(float)
CORRPOST_INSTANTIATE(double)

}  // namespace corrpost::nn
