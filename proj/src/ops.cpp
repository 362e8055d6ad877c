// Copyright 2026 The S2CP Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "s2cp/ops.hpp"

#include <algorithm>
#include <cmath>

#include "gemm.hpp"

namespace s2cp {

namespace {

template <typename T>
Node<T>* parent(Node<T>& self, std::size_t i) {
  Node<T>* p = self.parents[i].get();
  return (p != nullptr && p->requires_grad) ? p : nullptr;
}

// im2col over the whole batch: rows (c, ki, kj), columns (n, oh, ow).
template <typename T>
void im2col(const T* x, const Shape& s, std::size_t k, std::size_t stride, std::size_t pad,
            std::size_t oh, std::size_t ow, T* col) {
  const std::size_t cols = s.n * oh * ow;
  for (std::size_t c = 0; c < s.c; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = col + ((c * k + ki) * k + kj) * cols;
        for (std::size_t n = 0; n < s.n; ++n) {
          const T* plane = x + (n * s.c + c) * s.plane();
          T* dst = row + n * oh * ow;
          for (std::size_t i = 0; i < oh; ++i) {
            const long ih = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
            T* drow = dst + i * ow;
            if (ih < 0 || ih >= static_cast<long>(s.h)) {
              std::fill(drow, drow + ow, T(0));
              continue;
            }
            const T* srow = plane + static_cast<std::size_t>(ih) * s.w;
            if (stride == 1) {
              // valid columns form one contiguous run
              const long shift = static_cast<long>(kj) - static_cast<long>(pad);
              const long lo = std::clamp(-shift, 0L, static_cast<long>(ow));
              const long hi = std::clamp(static_cast<long>(s.w) - shift, lo, static_cast<long>(ow));
              std::fill(drow, drow + lo, T(0));
              std::copy(srow + lo + shift, srow + hi + shift, drow + lo);
              std::fill(drow + hi, drow + ow, T(0));
              continue;
            }
            for (std::size_t j = 0; j < ow; ++j) {
              const long iw = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
              drow[j] = (iw < 0 || iw >= static_cast<long>(s.w)) ? T(0)
                                                                 : srow[static_cast<std::size_t>(iw)];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const Shape& s, std::size_t k, std::size_t stride, std::size_t pad,
            std::size_t oh, std::size_t ow, T* dx) {
  const std::size_t cols = s.n * oh * ow;
  for (std::size_t c = 0; c < s.c; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = col + ((c * k + ki) * k + kj) * cols;
        for (std::size_t n = 0; n < s.n; ++n) {
          T* plane = dx + (n * s.c + c) * s.plane();
          const T* src = row + n * oh * ow;
          for (std::size_t i = 0; i < oh; ++i) {
            const long ih = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
            if (ih < 0 || ih >= static_cast<long>(s.h)) continue;
            T* drow = plane + static_cast<std::size_t>(ih) * s.w;
            const T* srow = src + i * ow;
            for (std::size_t j = 0; j < ow; ++j) {
              const long iw = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
              if (iw >= 0 && iw < static_cast<long>(s.w)) drow[iw] += srow[j];
            }
          }
        }
      }
    }
  }
}

// (N, C, P) <-> (C, N, P) transposition used around the batched GEMM.
template <typename T>
void swap_nc(const T* src, std::size_t a, std::size_t b, std::size_t p, T* dst) {
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      std::copy_n(src + (i * b + j) * p, p, dst + (j * a + i) * p);
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  auto dim = [&](std::size_t x, std::size_t y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw ShapeError("cannot broadcast " + to_string(a) + " with " + to_string(b));
  };
  return {dim(a.n, b.n), dim(a.c, b.c), dim(a.h, b.h), dim(a.w, b.w)};
}

struct Strides {
  std::size_t n, c, h, w;
};

Strides broadcast_strides(const Shape& s) {
  const std::size_t w = s.w == 1 ? 0 : 1;
  const std::size_t h = s.h == 1 ? 0 : s.w;
  const std::size_t c = s.c == 1 ? 0 : s.h * s.w;
  const std::size_t n = s.n == 1 ? 0 : s.c * s.h * s.w;
  return {n, c, h, w};
}

// Calls f(out_index, a_index, b_index) over the broadcast output.
template <typename F>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, F&& f) {
  const Strides sa = broadcast_strides(a);
  const Strides sb = broadcast_strides(b);
  std::size_t o = 0;
  for (std::size_t n = 0; n < out.n; ++n)
    for (std::size_t c = 0; c < out.c; ++c)
      for (std::size_t h = 0; h < out.h; ++h) {
        const std::size_t ia = n * sa.n + c * sa.c + h * sa.h;
        const std::size_t ib = n * sb.n + c * sb.c + h * sb.h;
        for (std::size_t w = 0; w < out.w; ++w, ++o) f(o, ia + w * sa.w, ib + w * sb.w);
      }
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameter construction

template <typename T>
BasicConvParams<T> make_conv(std::size_t in_channels, std::size_t out_channels,
                             std::size_t kernel, std::mt19937_64& rng, ConvInit init,
                             bool bias) {
  BasicConvParams<T> p;
  const Shape ws{out_channels, in_channels, kernel, kernel};
  std::vector<T> w(ws.numel(), T(0));
  if (init == ConvInit::kKaimingUniform) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in_channels * kernel * kernel));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : w) v = static_cast<T>(dist(rng));
  }
  p.weight = BasicTensor<T>::from(ws, std::move(w), true);
  if (bias) p.bias = BasicTensor<T>::zeros({1, out_channels, 1, 1}, true);
  p.stride = 1;
  p.padding = (kernel - 1) / 2;
  return p;
}

template <typename T>
void BasicBatchNormParams<T>::reset_running_stats() {
  std::fill(running_mean.begin(), running_mean.end(), T(0));
  std::fill(running_var.begin(), running_var.end(), T(1));
  running_initialized = true;
}

template <typename T>
BasicBatchNormParams<T> make_batch_norm(std::size_t channels) {
  BasicBatchNormParams<T> p;
  p.gamma = BasicTensor<T>::full({1, channels, 1, 1}, T(1), true);
  p.beta = BasicTensor<T>::zeros({1, channels, 1, 1}, true);
  p.running_mean.assign(channels, T(0));
  p.running_var.assign(channels, T(1));
  return p;
}

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicConvParams<T>& p) {
  const Shape s = x.shape();
  const Shape ws = p.weight.shape();
  if (ws.c != s.c) {
    throw ShapeError("conv2d: input " + to_string(s) + " has " + std::to_string(s.c) +
                     " channels, weights " + to_string(ws) + " expect " + std::to_string(ws.c));
  }
  if (ws.h != ws.w) throw ShapeError("conv2d: kernel must be square, got " + to_string(ws));
  if (p.stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t k = ws.h;
  const std::size_t pad = p.padding;
  const std::size_t stride = p.stride;
  if (s.h + 2 * pad < k || s.w + 2 * pad < k) {
    throw ShapeError("conv2d: kernel " + std::to_string(k) + " larger than padded input " +
                     to_string(s));
  }
  if (p.bias.defined() && p.bias.numel() != ws.n) {
    throw ShapeError("conv2d: bias has " + std::to_string(p.bias.numel()) + " entries, expected " +
                     std::to_string(ws.n));
  }
  const std::size_t oh = (s.h + 2 * pad - k) / stride + 1;
  const std::size_t ow = (s.w + 2 * pad - k) / stride + 1;
  const std::size_t plane = oh * ow;
  const std::size_t cols = s.n * plane;
  const std::size_t rows = s.c * k * k;
  const bool direct = (k == 1 && stride == 1 && pad == 0);

  // col: rows x cols. For 1x1 convs the input in (C, N, P) layout is the col matrix.
  std::vector<T> col(rows * cols);
  if (direct)
    swap_nc(x.values().data(), s.n, s.c, plane, col.data());
  else
    im2col(x.values().data(), s, k, stride, pad, oh, ow, col.data());

  std::vector<T> tmp(ws.n * cols);
  detail::gemm(false, false, ws.n, cols, rows, p.weight.values().data(), col.data(), T(0),
               tmp.data());
  if (p.bias.defined()) {
    auto b = p.bias.values();
    for (std::size_t o = 0; o < ws.n; ++o) {
      T* r = tmp.data() + o * cols;
      for (std::size_t i = 0; i < cols; ++i) r[i] += b[o];
    }
  }
  const Shape os{s.n, ws.n, oh, ow};
  std::vector<T> out(os.numel());
  swap_nc(tmp.data(), ws.n, s.n, plane, out.data());

  auto backward = [s, ws, k, pad, stride, oh, ow, plane, cols, rows, direct](Node<T>& self) {
    Node<T>* xn = parent(self, 0);
    Node<T>* wn = parent(self, 1);
    Node<T>* bn = parent(self, 2);
    // gout in (C_out, N*P) layout
    std::vector<T> g(ws.n * cols);
    swap_nc(self.grad.data(), s.n, ws.n, plane, g.data());
    if (bn != nullptr) {
      auto& gb = bn->grad_buffer();
      for (std::size_t o = 0; o < ws.n; ++o) {
        T acc = 0;
        const T* r = g.data() + o * cols;
        for (std::size_t i = 0; i < cols; ++i) acc += r[i];
        gb[o] += acc;
      }
    }
    if (wn != nullptr) {
      const Node<T>& xin = *self.parents[0];
      std::vector<T> col(rows * cols);
      if (direct)
        swap_nc(xin.value.data(), s.n, s.c, plane, col.data());
      else
        im2col(xin.value.data(), s, k, stride, pad, oh, ow, col.data());
      detail::gemm(false, true, ws.n, rows, cols, g.data(), col.data(), T(1),
                   wn->grad_buffer().data());
    }
    if (xn != nullptr) {
      std::vector<T> dcol(rows * cols);
      detail::gemm(true, false, rows, cols, ws.n, self.parents[1]->value.data(), g.data(), T(0),
                   dcol.data());
      auto& gx = xn->grad_buffer();
      if (direct) {
        std::vector<T> back(s.numel());
        swap_nc(dcol.data(), s.c, s.n, plane, back.data());
        for (std::size_t i = 0; i < back.size(); ++i) gx[i] += back[i];
      } else {
        col2im(dcol.data(), s, k, stride, pad, oh, ow, gx.data());
      }
    }
  };
  return make_result<T>(os, std::move(out), {x, p.weight, p.bias}, backward);
}

// ---------------------------------------------------------------------------
// batch_norm

template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, BasicBatchNormParams<T>& p, Mode mode) {
  const Shape s = x.shape();
  const std::size_t channels = s.c;
  if (p.channels() != channels || p.gamma.numel() != channels || p.beta.numel() != channels) {
    throw ShapeError("batch_norm: input " + to_string(s) + " vs " + std::to_string(p.channels()) +
                     " normalized channels");
  }
  if (!(p.epsilon > T(0))) throw ValueError("batch_norm: epsilon must be positive");
  const std::size_t count = s.n * s.plane();
  auto xv = x.values();
  auto gamma = p.gamma.values();
  auto beta = p.beta.values();

  std::vector<T> mean(channels), inv_std(channels);
  if (mode == Mode::kTrain) {
    for (std::size_t c = 0; c < channels; ++c) {
      T m = 0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* v = xv.data() + (n * channels + c) * s.plane();
        for (std::size_t i = 0; i < s.plane(); ++i) m += v[i];
      }
      m /= static_cast<T>(count);
      T var = 0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* v = xv.data() + (n * channels + c) * s.plane();
        for (std::size_t i = 0; i < s.plane(); ++i) var += (v[i] - m) * (v[i] - m);
      }
      var /= static_cast<T>(count);
      mean[c] = m;
      inv_std[c] = T(1) / std::sqrt(var + p.epsilon);
      const T unbiased = count > 1 ? var * static_cast<T>(count) / static_cast<T>(count - 1) : var;
      if (!p.running_initialized) {
        p.running_mean[c] = m;
        p.running_var[c] = unbiased;
      } else {
        p.running_mean[c] = (T(1) - p.momentum) * p.running_mean[c] + p.momentum * m;
        p.running_var[c] = (T(1) - p.momentum) * p.running_var[c] + p.momentum * unbiased;
      }
    }
    p.running_initialized = true;
  } else {
    if (!p.running_initialized) {
      throw ValueError("batch_norm: eval mode requested before running statistics exist");
    }
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = p.running_mean[c];
      inv_std[c] = T(1) / std::sqrt(p.running_var[c] + p.epsilon);
    }
  }

  std::vector<T> xhat(s.numel()), out(s.numel());
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (n * channels + c) * s.plane();
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const T h = (xv[base + i] - mean[c]) * inv_std[c];
        xhat[base + i] = h;
        out[base + i] = gamma[c] * h + beta[c];
      }
    }

  const bool train = mode == Mode::kTrain;
  auto backward = [s, count, train, xhat = std::move(xhat), inv_std](Node<T>& self) {
    Node<T>* xn = parent(self, 0);
    Node<T>* gn = parent(self, 1);
    Node<T>* bn = parent(self, 2);
    const auto& gamma = self.parents[1]->value;
    const auto& g = self.grad;
    for (std::size_t c = 0; c < s.c; ++c) {
      T sum_g = 0, sum_gh = 0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const std::size_t base = (n * s.c + c) * s.plane();
        for (std::size_t i = 0; i < s.plane(); ++i) {
          sum_g += g[base + i];
          sum_gh += g[base + i] * xhat[base + i];
        }
      }
      if (gn != nullptr) gn->grad_buffer()[c] += sum_gh;
      if (bn != nullptr) bn->grad_buffer()[c] += sum_g;
      if (xn == nullptr) continue;
      auto& gx = xn->grad_buffer();
      const T scale = gamma[c] * inv_std[c];
      const T mg = sum_g / static_cast<T>(count);
      const T mgh = sum_gh / static_cast<T>(count);
      for (std::size_t n = 0; n < s.n; ++n) {
        const std::size_t base = (n * s.c + c) * s.plane();
        for (std::size_t i = 0; i < s.plane(); ++i) {
          const std::size_t j = base + i;
          gx[j] += train ? scale * (g[j] - mg - xhat[j] * mgh) : scale * g[j];
        }
      }
    }
  };
  return make_result<T>(s, std::move(out), {x, p.gamma, p.beta}, backward);
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
BasicTensor<T> unary(const BasicTensor<T>& x, Unary kind) {
  auto xv = x.values();
  std::vector<T> out(xv.size());
  const T slope = static_cast<T>(kLeakySlope);
  switch (kind) {
    case Unary::kLeakyRelu:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : slope * xv[i];
      break;
    case Unary::kTanh:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
      break;
    case Unary::kSigmoid:
      for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = xv[i];
        // split by sign so exp never overflows
        out[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
      }
      break;
    case Unary::kExp:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(xv[i]);
      break;
    case Unary::kLog:
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(xv[i] > T(0))) throw ValueError("log of non-positive value");
        out[i] = std::log(xv[i]);
      }
      break;
    case Unary::kSqrt:
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(xv[i] > T(0))) throw ValueError("sqrt of non-positive value");
        out[i] = std::sqrt(xv[i]);
      }
      break;
    case Unary::kSquare:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * xv[i];
      break;
    case Unary::kCos:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::cos(xv[i]);
      break;
    case Unary::kSin:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sin(xv[i]);
      break;
  }

  auto backward = [kind, slope](Node<T>& self) {
    Node<T>* xn = parent(self, 0);
    if (xn == nullptr) return;
    auto& gx = xn->grad_buffer();
    const auto& g = self.grad;
    const auto& y = self.value;
    const auto& xv = xn->value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      T d = 0;
      switch (kind) {
        case Unary::kLeakyRelu: d = xv[i] > T(0) ? T(1) : slope; break;
        case Unary::kTanh: d = T(1) - y[i] * y[i]; break;
        case Unary::kSigmoid: d = y[i] * (T(1) - y[i]); break;
        case Unary::kExp: d = y[i]; break;
        case Unary::kLog: d = T(1) / xv[i]; break;
        case Unary::kSqrt: d = T(0.5) / y[i]; break;
        case Unary::kSquare: d = T(2) * xv[i]; break;
        case Unary::kCos: d = -std::sin(xv[i]); break;
        case Unary::kSin: d = std::cos(xv[i]); break;
      }
      gx[i] += g[i] * d;
    }
  };
  return make_result<T>(x.shape(), std::move(out), {x}, backward);
}

template <typename T>
BasicTensor<T> affine(const BasicTensor<T>& x, T a, T b) {
  auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * xv[i] + b;
  auto backward = [a](Node<T>& self) {
    Node<T>* xn = parent(self, 0);
    if (xn == nullptr) return;
    auto& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += a * self.grad[i];
  };
  return make_result<T>(x.shape(), std::move(out), {x}, backward);
}

template <typename T>
BasicTensor<T> clamp_min(const BasicTensor<T>& x, T floor) {
  auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(xv[i], floor);
  auto backward = [floor](Node<T>& self) {
    Node<T>* xn = parent(self, 0);
    if (xn == nullptr) return;
    auto& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xn->value[i] > floor) gx[i] += self.grad[i];
  };
  return make_result<T>(x.shape(), std::move(out), {x}, backward);
}

template <typename T>
BasicTensor<T> binary(const BasicTensor<T>& a, const BasicTensor<T>& b, Binary kind) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  const Shape so = broadcast_shape(sa, sb);
  auto av = a.values();
  auto bv = b.values();
  if (kind == Binary::kDiv) {
    for (T v : bv)
      if (std::abs(v) < T(1e-12)) throw ValueError("division by a value with magnitude < 1e-12");
  }
  std::vector<T> out(so.numel());
  auto apply = [kind](T x, T y) {
    switch (kind) {
      case Binary::kAdd: return x + y;
      case Binary::kSub: return x - y;
      case Binary::kMul: return x * y;
      case Binary::kDiv: return x / y;
    }
    return T(0);
  };
  if (sa == sb) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(av[i], bv[i]);
  } else {
    for_each_broadcast(so, sa, sb,
                       [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = apply(av[i], bv[j]); });
  }

  auto backward = [kind, sa, sb, so](Node<T>& self) {
    Node<T>* an = parent(self, 0);
    Node<T>* bn = parent(self, 1);
    const auto& g = self.grad;
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    T* ga = an ? an->grad_buffer().data() : nullptr;
    T* gb = bn ? bn->grad_buffer().data() : nullptr;
    auto step = [&](std::size_t o, std::size_t i, std::size_t j) {
      const T go = g[o];
      switch (kind) {
        case Binary::kAdd:
          if (ga) ga[i] += go;
          if (gb) gb[j] += go;
          break;
        case Binary::kSub:
          if (ga) ga[i] += go;
          if (gb) gb[j] -= go;
          break;
        case Binary::kMul:
          if (ga) ga[i] += go * bv[j];
          if (gb) gb[j] += go * av[i];
          break;
        case Binary::kDiv:
          if (ga) ga[i] += go / bv[j];
          if (gb) gb[j] -= go * av[i] / (bv[j] * bv[j]);
          break;
      }
    };
    if (sa == sb) {
      for (std::size_t o = 0; o < g.size(); ++o) step(o, o, o);
    } else {
      for_each_broadcast(so, sa, sb, step);
    }
  };
  return make_result<T>(so, std::move(out), {a, b}, backward);
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
BasicTensor<T> axis_mean(const BasicTensor<T>& x, Axis axis) {
  const Shape s = x.shape();
  Shape os = s;
  if (axis == Axis::kHeight || axis == Axis::kSpatial) os.h = 1;
  if (axis == Axis::kWidth || axis == Axis::kSpatial) os.w = 1;
  const T scale = T(1) / static_cast<T>((s.h / os.h) * (s.w / os.w));
  auto xv = x.values();
  std::vector<T> out(os.numel(), T(0));
  // Output index of input (p, h, w) where p indexes (n, c) planes.
  auto target = [&](std::size_t p, std::size_t h, std::size_t w) {
    return p * os.plane() + (os.h == 1 ? 0 : h) * os.w + (os.w == 1 ? 0 : w);
  };
  for (std::size_t p = 0; p < s.n * s.c; ++p)
    for (std::size_t h = 0; h < s.h; ++h)
      for (std::size_t w = 0; w < s.w; ++w) out[target(p, h, w)] += xv[(p * s.h + h) * s.w + w];
  for (auto& v : out) v *= scale;

  auto backward = [s, os, scale](Node<T>& self) {
    Node<T>* xn = parent(self, 0);
    if (xn == nullptr) return;
    auto& gx = xn->grad_buffer();
    for (std::size_t p = 0; p < s.n * s.c; ++p)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w)
          gx[(p * s.h + h) * s.w + w] +=
              scale * self.grad[p * os.plane() + (os.h == 1 ? 0 : h) * os.w + (os.w == 1 ? 0 : w)];
  };
  return make_result<T>(os, std::move(out), {x}, backward);
}

template <typename T>
BasicTensor<T> channel_sum(const BasicTensor<T>& x) {
  const Shape s = x.shape();
  const Shape os{s.n, 1, s.h, s.w};
  auto xv = x.values();
  std::vector<T> out(os.numel(), T(0));
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < s.plane(); ++i)
        out[n * s.plane() + i] += xv[(n * s.c + c) * s.plane() + i];
  auto backward = [s](Node<T>& self) {
    Node<T>* xn = parent(self, 0);
    if (xn == nullptr) return;
    auto& gx = xn->grad_buffer();
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t c = 0; c < s.c; ++c)
        for (std::size_t i = 0; i < s.plane(); ++i)
          gx[(n * s.c + c) * s.plane() + i] += self.grad[n * s.plane() + i];
  };
  return make_result<T>(os, std::move(out), {x}, backward);
}

template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& x) {
  const Shape s = x.shape();
  auto xv = x.values();
  std::vector<T> out(s.numel());
  const std::size_t pl = s.plane();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < pl; ++i) {
      const std::size_t base = n * s.c * pl + i;
      T mx = xv[base];
      for (std::size_t c = 1; c < s.c; ++c) mx = std::max(mx, xv[base + c * pl]);
      T z = 0;
      for (std::size_t c = 0; c < s.c; ++c) {
        out[base + c * pl] = std::exp(xv[base + c * pl] - mx);
        z += out[base + c * pl];
      }
      for (std::size_t c = 0; c < s.c; ++c) out[base + c * pl] /= z;
    }
  auto backward = [s, pl](Node<T>& self) {
    Node<T>* xn = parent(self, 0);
    if (xn == nullptr) return;
    auto& gx = xn->grad_buffer();
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < pl; ++i) {
        const std::size_t base = n * s.c * pl + i;
        T dot = 0;
        for (std::size_t c = 0; c < s.c; ++c) dot += g[base + c * pl] * y[base + c * pl];
        for (std::size_t c = 0; c < s.c; ++c)
          gx[base + c * pl] += y[base + c * pl] * (g[base + c * pl] - dot);
      }
  };
  return make_result<T>(s, std::move(out), {x}, backward);
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T acc = 0;
  for (T v : x.values()) acc += v;
  auto backward = [](Node<T>& self) {
    Node<T>* xn = parent(self, 0);
    if (xn == nullptr) return;
    auto& gx = xn->grad_buffer();
    for (auto& v : gx) v += self.grad[0];
  };
  return make_result<T>({1, 1, 1, 1}, {acc}, {x}, backward);
}

// ---------------------------------------------------------------------------
// Layout

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: " + to_string(sa) + " vs " + to_string(sb));
  }
  const Shape os{sa.n, sa.c + sb.c, sa.h, sa.w};
  const std::size_t la = sa.c * sa.plane();
  const std::size_t lb = sb.c * sb.plane();
  std::vector<T> out(os.numel());
  for (std::size_t n = 0; n < sa.n; ++n) {
    std::copy_n(a.values().data() + n * la, la, out.data() + n * (la + lb));
    std::copy_n(b.values().data() + n * lb, lb, out.data() + n * (la + lb) + la);
  }
  auto backward = [sa, la, lb](Node<T>& self) {
    Node<T>* an = parent(self, 0);
    Node<T>* bn = parent(self, 1);
    for (std::size_t n = 0; n < sa.n; ++n) {
      const T* g = self.grad.data() + n * (la + lb);
      if (an) {
        T* ga = an->grad_buffer().data() + n * la;
        for (std::size_t i = 0; i < la; ++i) ga[i] += g[i];
      }
      if (bn) {
        T* gb = bn->grad_buffer().data() + n * lb;
        for (std::size_t i = 0; i < lb; ++i) gb[i] += g[la + i];
      }
    }
  };
  return make_result<T>(os, std::move(out), {a, b}, backward);
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::size_t begin, std::size_t end) {
  const Shape s = x.shape();
  if (begin >= end || end > s.c) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + to_string(s));
  }
  const Shape os{s.n, end - begin, s.h, s.w};
  const std::size_t len = os.c * s.plane();
  std::vector<T> out(os.numel());
  for (std::size_t n = 0; n < s.n; ++n)
    std::copy_n(x.values().data() + (n * s.c + begin) * s.plane(), len, out.data() + n * len);
  auto backward = [s, begin, len](Node<T>& self) {
    Node<T>* xn = parent(self, 0);
    if (xn == nullptr) return;
    auto& gx = xn->grad_buffer();
    for (std::size_t n = 0; n < s.n; ++n) {
      T* dst = gx.data() + (n * s.c + begin) * s.plane();
      const T* g = self.grad.data() + n * len;
      for (std::size_t i = 0; i < len; ++i) dst[i] += g[i];
    }
  };
  return make_result<T>(os, std::move(out), {x}, backward);
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

// Source taps for one output coordinate of a 2x bilinear upsample.
struct Taps {
  std::size_t i0, i1;
  double w0, w1;
};

Taps bilinear_taps(std::size_t dst, std::size_t src_len) {
  double src = (static_cast<double>(dst) + 0.5) / 2.0 - 0.5;
  if (src < 0) src = 0;
  const auto i0 = static_cast<std::size_t>(src);
  const std::size_t i1 = std::min(i0 + 1, src_len - 1);
  const double frac = src - static_cast<double>(i0);
  return {i0, i1, 1.0 - frac, frac};
}

}  // namespace

template <typename T>
BasicTensor<T> upsample2x(const BasicTensor<T>& x, Upsample method) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h * 2, s.w * 2};
  std::vector<Taps> th(os.h), tw(os.w);
  for (std::size_t i = 0; i < os.h; ++i)
    th[i] = method == Upsample::kBilinear ? bilinear_taps(i, s.h) : Taps{i / 2, i / 2, 1.0, 0.0};
  for (std::size_t j = 0; j < os.w; ++j)
    tw[j] = method == Upsample::kBilinear ? bilinear_taps(j, s.w) : Taps{j / 2, j / 2, 1.0, 0.0};

  auto xv = x.values();
  std::vector<T> out(os.numel());
  for (std::size_t p = 0; p < s.n * s.c; ++p) {
    const T* src = xv.data() + p * s.plane();
    T* dst = out.data() + p * os.plane();
    for (std::size_t i = 0; i < os.h; ++i) {
      const Taps& a = th[i];
      for (std::size_t j = 0; j < os.w; ++j) {
        const Taps& b = tw[j];
        dst[i * os.w + j] = static_cast<T>(
            a.w0 * (b.w0 * src[a.i0 * s.w + b.i0] + b.w1 * src[a.i0 * s.w + b.i1]) +
            a.w1 * (b.w0 * src[a.i1 * s.w + b.i0] + b.w1 * src[a.i1 * s.w + b.i1]));
      }
    }
  }
  auto backward = [s, os, th = std::move(th), tw = std::move(tw)](Node<T>& self) {
    Node<T>* xn = parent(self, 0);
    if (xn == nullptr) return;
    auto& gx = xn->grad_buffer();
    for (std::size_t p = 0; p < s.n * s.c; ++p) {
      T* dst = gx.data() + p * s.plane();
      const T* g = self.grad.data() + p * os.plane();
      for (std::size_t i = 0; i < os.h; ++i) {
        const Taps& a = th[i];
        for (std::size_t j = 0; j < os.w; ++j) {
          const Taps& b = tw[j];
          const double go = g[i * os.w + j];
          dst[a.i0 * s.w + b.i0] += static_cast<T>(go * a.w0 * b.w0);
          dst[a.i0 * s.w + b.i1] += static_cast<T>(go * a.w0 * b.w1);
          dst[a.i1 * s.w + b.i0] += static_cast<T>(go * a.w1 * b.w0);
          dst[a.i1 * s.w + b.i1] += static_cast<T>(go * a.w1 * b.w1);
        }
      }
    }
  };
  return make_result<T>(os, std::move(out), {x}, backward);
}

template <typename T>
BasicTensor<T> maxpool2(const BasicTensor<T>& x) {
  const Shape s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ShapeError("maxpool2: spatial size must be even, got " + to_string(s));
  }
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  auto xv = x.values();
  std::vector<T> out(os.numel());
  std::vector<std::uint32_t> arg(os.numel());
  for (std::size_t p = 0; p < s.n * s.c; ++p)
    for (std::size_t i = 0; i < os.h; ++i)
      for (std::size_t j = 0; j < os.w; ++j) {
        const std::size_t base = p * s.plane();
        std::size_t best = base + (2 * i) * s.w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = base + (2 * i + di) * s.w + 2 * j + dj;
            if (xv[idx] > xv[best]) best = idx;
          }
        const std::size_t o = (p * os.h + i) * os.w + j;
        out[o] = xv[best];
        arg[o] = static_cast<std::uint32_t>(best);
      }
  auto backward = [arg = std::move(arg)](Node<T>& self) {
    Node<T>* xn = parent(self, 0);
    if (xn == nullptr) return;
    auto& gx = xn->grad_buffer();
    for (std::size_t o = 0; o < arg.size(); ++o) gx[arg[o]] += self.grad[o];
  };
  return make_result<T>(os, std::move(out), {x}, backward);
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
BasicTensor<T> soft_iou_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("soft_iou_loss: pred " + to_string(pred.shape()) + " vs target " +
                     to_string(target.shape()));
  }
  constexpr double kSlack = 1e-6;
  constexpr double kEps = 1e-6;
  auto pv = pred.values();
  auto yv = target.values();
  double inter = 0, sp = 0, sy = 0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (pv[i] < -kSlack || pv[i] > 1 + kSlack) {
      throw ValueError("soft_iou_loss: prediction " + std::to_string(pv[i]) + " outside [0,1]");
    }
    inter += static_cast<double>(pv[i]) * yv[i];
    sp += pv[i];
    sy += yv[i];
  }
  const double num = inter + kEps;
  const double den = sp + sy - inter + kEps;
  const double loss = 1.0 - num / den;
  auto backward = [num, den](Node<T>& self) {
    Node<T>* pn = parent(self, 0);
    if (pn == nullptr) return;
    auto& gp = pn->grad_buffer();
    const auto& yv = self.parents[1]->value;
    const double go = self.grad[0];
    // d(num/den)/dp_i = (y_i * den - num * (1 - y_i)) / den^2
    for (std::size_t i = 0; i < gp.size(); ++i) {
      const double y = yv[i];
      gp[i] += static_cast<T>(-go * (y * den - num * (1.0 - y)) / (den * den));
    }
  };
  return make_result<T>({1, 1, 1, 1}, {static_cast<T>(loss)}, {pred, target}, backward);
}

// ---------------------------------------------------------------------------

#define S2CP_INSTANTIATE(T)                                                                    \
  template BasicConvParams<T> make_conv(std::size_t, std::size_t, std::size_t, std::mt19937_64&, \
                                        ConvInit, bool);                                       \
  template struct BasicBatchNormParams<T>;                                                     \
  template BasicBatchNormParams<T> make_batch_norm(std::size_t);                               \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicConvParams<T>&);            \
  template BasicTensor<T> batch_norm(const BasicTensor<T>&, BasicBatchNormParams<T>&, Mode);   \
  template BasicTensor<T> unary(const BasicTensor<T>&, Unary);                                 \
  template BasicTensor<T> affine(const BasicTensor<T>&, T, T);                                 \
  template BasicTensor<T> clamp_min(const BasicTensor<T>&, T);                                 \
  template BasicTensor<T> binary(const BasicTensor<T>&, const BasicTensor<T>&, Binary);        \
  template BasicTensor<T> axis_mean(const BasicTensor<T>&, Axis);                              \
  template BasicTensor<T> channel_sum(const BasicTensor<T>&);                                  \
  template BasicTensor<T> softmax_channels(const BasicTensor<T>&);                             \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                          \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);       \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, std::size_t, std::size_t);     \
  template BasicTensor<T> upsample2x(const BasicTensor<T>&, Upsample);                         \
  template BasicTensor<T> maxpool2(const BasicTensor<T>&);                                     \
  template BasicTensor<T> soft_iou_loss(const BasicTensor<T>&, const BasicTensor<T>&);

S2CP_INSTANTIATE(float)
S2CP_INSTANTIATE(double)

#undef S2CP_INSTANTIATE

}  // namespace s2cp
