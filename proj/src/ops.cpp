#include "emovc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <Eigen/Dense>

#include "emovc/error.hpp"

namespace emovc::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;
using MapVec = Eigen::Map<Eigen::VectorXd>;

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

bool needs(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

std::vector<double>& grad_of(Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

// Shared by conv1d and conv2d once the receptive fields are flattened: `src`
// maps (kernel tap, output position) to an input offset or -1 for padding.
// The whole batch goes through one GEMM: patches are laid out as
// (c_in * taps) x (n_batch * out_size).
Tensor patch_conv(const Tensor& x, const Tensor& weight, const Tensor& bias, int n_batch, int c_in,
                  int in_size, int taps, int out_size, std::vector<int> src, Shape out_shape) {
  const int c_out = weight.dim(0);
  const int rows = c_in * taps;
  const std::size_t span = static_cast<std::size_t>(n_batch) * out_size;
  auto cols = std::make_shared<RowMat>(rows, static_cast<Eigen::Index>(span));
  const auto xv = x.values();
  for (int ci = 0; ci < c_in; ++ci) {
    for (int k = 0; k < taps; ++k) {
      double* dst_row = cols->data() + static_cast<std::size_t>(ci * taps + k) * span;
      const int* map = src.data() + static_cast<std::size_t>(k) * out_size;
      for (int n = 0; n < n_batch; ++n) {
        const double* xin = xv.data() + (static_cast<std::size_t>(n) * c_in + ci) * in_size;
        double* dst = dst_row + static_cast<std::size_t>(n) * out_size;
        for (int t = 0; t < out_size; ++t) dst[t] = map[t] >= 0 ? xin[map[t]] : 0.0;
      }
    }
  }

  const ConstMapMat w(weight.values().data(), c_out, rows);
  RowMat product(c_out, static_cast<Eigen::Index>(span));
  product.noalias() = w * (*cols);
  const auto bv = bias.values();
  std::vector<double> out(static_cast<std::size_t>(c_out) * span);
  for (int n = 0; n < n_batch; ++n) {
    for (int co = 0; co < c_out; ++co) {
      const double* from = product.data() + static_cast<std::size_t>(co) * span + static_cast<std::size_t>(n) * out_size;
      double* to = out.data() + (static_cast<std::size_t>(n) * c_out + co) * out_size;
      for (int t = 0; t < out_size; ++t) to[t] = from[t] + bv[static_cast<std::size_t>(co)];
    }
  }

  auto map = std::make_shared<std::vector<int>>(std::move(src));
  return make_result(std::move(out_shape), std::move(out), {x, weight, bias}, [=](Node& self) {
    RowMat g(c_out, static_cast<Eigen::Index>(span));
    for (int n = 0; n < n_batch; ++n) {
      for (int co = 0; co < c_out; ++co) {
        std::copy_n(self.grad.data() + (static_cast<std::size_t>(n) * c_out + co) * out_size, out_size,
                    g.data() + static_cast<std::size_t>(co) * span + static_cast<std::size_t>(n) * out_size);
      }
    }
    if (needs(self, 1)) MapMat(grad_of(self, 1).data(), c_out, rows).noalias() += g * cols->transpose();
    if (needs(self, 2)) MapVec(grad_of(self, 2).data(), c_out) += g.rowwise().sum();
    if (needs(self, 0)) {
      const ConstMapMat w(self.parents[1]->value.data(), c_out, rows);
      const RowMat dcol = w.transpose() * g;
      double* dx = grad_of(self, 0).data();
      for (int ci = 0; ci < c_in; ++ci) {
        for (int k = 0; k < taps; ++k) {
          const double* dc_row = dcol.data() + static_cast<std::size_t>(ci * taps + k) * span;
          const int* m = map->data() + static_cast<std::size_t>(k) * out_size;
          for (int n = 0; n < n_batch; ++n) {
            double* dxin = dx + (static_cast<std::size_t>(n) * c_in + ci) * in_size;
            const double* dc = dc_row + static_cast<std::size_t>(n) * out_size;
            for (int t = 0; t < out_size; ++t) {
              if (m[t] >= 0) dxin[m[t]] += dc[t];
            }
          }
        }
      }
    }
  });
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad, PadMode mode) {
  require_rank(x, 3, "conv1d", "input");
  require_rank(weight, 3, "conv1d", "weight");
  const int n_batch = x.dim(0), c_in = x.dim(1), length = x.dim(2);
  const int c_out = weight.dim(0), kernel = weight.dim(2);
  if (weight.dim(1) != c_in) {
    throw ShapeError("conv1d: weight expects " + std::to_string(weight.dim(1)) + " input channels, got " +
                     std::to_string(c_in));
  }
  if (bias.numel() != static_cast<std::size_t>(c_out)) throw ShapeError("conv1d: bias size mismatch");
  if (stride < 1 || pad < 0) throw ConfigError("conv1d: bad stride/padding");
  const int out_len = (length + 2 * pad - kernel) / stride + 1;
  if (length < 1 || length + 2 * pad < kernel || out_len < 1) {
    throw ShapeError("conv1d: input length " + std::to_string(length) + " too short for kernel " +
                     std::to_string(kernel));
  }

  std::vector<int> src(static_cast<std::size_t>(kernel) * out_len);
  for (int k = 0; k < kernel; ++k) {
    for (int t = 0; t < out_len; ++t) {
      int p = t * stride + k - pad;
      if (mode == PadMode::kCircular) {
        p = ((p % length) + length) % length;
      } else if (p < 0 || p >= length) {
        p = -1;
      }
      src[static_cast<std::size_t>(k) * out_len + t] = p;
    }
  }
  return patch_conv(x, weight, bias, n_batch, c_in, length, kernel, out_len, std::move(src),
                    {n_batch, c_out, out_len});
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::array<int, 2> stride,
              std::array<int, 2> pad) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  const int n_batch = x.dim(0), c_in = x.dim(1), height = x.dim(2), width = x.dim(3);
  const int c_out = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != c_in) throw ShapeError("conv2d: input channel mismatch");
  if (bias.numel() != static_cast<std::size_t>(c_out)) throw ShapeError("conv2d: bias size mismatch");
  const int out_h = (height + 2 * pad[0] - kh) / stride[0] + 1;
  const int out_w = (width + 2 * pad[1] - kw) / stride[1] + 1;
  if (height + 2 * pad[0] < kh || width + 2 * pad[1] < kw || out_h < 1 || out_w < 1) {
    throw ShapeError("conv2d: input " + shape_string(x.shape()) + " too small for kernel");
  }
  const int out_size = out_h * out_w;
  std::vector<int> src(static_cast<std::size_t>(kh) * kw * out_size);
  for (int i = 0; i < kh; ++i) {
    for (int j = 0; j < kw; ++j) {
      int* row = src.data() + static_cast<std::size_t>(i * kw + j) * out_size;
      for (int oh = 0; oh < out_h; ++oh) {
        for (int ow = 0; ow < out_w; ++ow) {
          const int h = oh * stride[0] + i - pad[0];
          const int w = ow * stride[1] + j - pad[1];
          row[oh * out_w + ow] = (h < 0 || h >= height || w < 0 || w >= width) ? -1 : h * width + w;
        }
      }
    }
  }
  return patch_conv(x, weight, bias, n_batch, c_in, height * width, kh * kw, out_size, std::move(src),
                    {n_batch, c_out, out_h, out_w});
}

Tensor instance_norm(const Tensor& x, double eps) {
  if (x.rank() < 3) throw ShapeError("instance_norm: need (N, C, ...) input, got " + shape_string(x.shape()));
  const std::size_t groups = static_cast<std::size_t>(x.dim(0)) * x.dim(1);
  const std::size_t len = x.numel() / groups;
  const auto xv = x.values();
  auto y = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    const double* in = xv.data() + g * len;
    double mean = 0.0;
    for (std::size_t i = 0; i < len; ++i) mean += in[i];
    mean /= static_cast<double>(len);
    double var = 0.0;
    for (std::size_t i = 0; i < len; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= static_cast<double>(len);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[g] = inv;
    double* out = y->data() + g * len;
    for (std::size_t i = 0; i < len; ++i) out[i] = (in[i] - mean) * inv;
  }
  std::vector<double> values = *y;
  return make_result(x.shape(), std::move(values), {x}, [=](Node& self) {
    auto& dx = grad_of(self, 0);
    for (std::size_t g = 0; g < groups; ++g) {
      const double* gy = self.grad.data() + g * len;
      const double* yy = y->data() + g * len;
      double mean_g = 0.0, mean_gy = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        mean_g += gy[i];
        mean_gy += gy[i] * yy[i];
      }
      mean_g /= static_cast<double>(len);
      mean_gy /= static_cast<double>(len);
      const double inv = (*inv_std)[g];
      for (std::size_t i = 0; i < len; ++i) dx[g * len + i] += inv * (gy[i] - mean_g - yy[i] * mean_gy);
    }
  });
}

Tensor channel_affine(const Tensor& x, const Tensor& scale, const Tensor& shift) {
  if (x.rank() < 2) throw ShapeError("channel_affine: need (N, C, ...) input");
  const int n_batch = x.dim(0), channels = x.dim(1);
  const std::size_t len = x.numel() / (static_cast<std::size_t>(n_batch) * channels);
  const bool per_example = scale.rank() == 2;
  const Shape expected = per_example ? Shape{n_batch, channels} : Shape{channels};
  if (scale.shape() != expected || shift.shape() != expected) {
    throw ShapeError("channel_affine: scale/shift " + shape_string(scale.shape()) + " do not match input " +
                     shape_string(x.shape()));
  }
  const auto xv = x.values(), sv = scale.values(), bv = shift.values();
  std::vector<double> out(x.numel());
  for (int n = 0; n < n_batch; ++n) {
    for (int c = 0; c < channels; ++c) {
      const std::size_t p = per_example ? static_cast<std::size_t>(n) * channels + c : static_cast<std::size_t>(c);
      const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * len;
      for (std::size_t i = 0; i < len; ++i) out[base + i] = xv[base + i] * sv[p] + bv[p];
    }
  }
  return make_result(x.shape(), std::move(out), {x, scale, shift}, [=](Node& self) {
    const auto& xval = self.parents[0]->value;
    const auto& sval = self.parents[1]->value;
    for (int n = 0; n < n_batch; ++n) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t p = per_example ? static_cast<std::size_t>(n) * channels + c : static_cast<std::size_t>(c);
        const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * len;
        double gs = 0.0, gb = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          gs += self.grad[base + i] * xval[base + i];
          gb += self.grad[base + i];
        }
        if (needs(self, 1)) grad_of(self, 1)[p] += gs;
        if (needs(self, 2)) grad_of(self, 2)[p] += gb;
        if (needs(self, 0)) {
          auto& dx = grad_of(self, 0);
          for (std::size_t i = 0; i < len; ++i) dx[base + i] += self.grad[base + i] * sval[p];
        }
      }
    }
  });
}

Tensor repeat_channels(const Tensor& x, int times) {
  require_rank(x, 2, "repeat_channels", "input");
  const int n_batch = x.dim(0), channels = x.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n_batch) * channels * times);
  const auto xv = x.values();
  for (int n = 0; n < n_batch; ++n) {
    for (int r = 0; r < times; ++r) {
      for (int c = 0; c < channels; ++c) {
        out[(static_cast<std::size_t>(n) * times + r) * channels + c] = xv[static_cast<std::size_t>(n) * channels + c];
      }
    }
  }
  return make_result({n_batch, channels * times}, std::move(out), {x}, [=](Node& self) {
    auto& dx = grad_of(self, 0);
    for (int n = 0; n < n_batch; ++n) {
      for (int r = 0; r < times; ++r) {
        for (int c = 0; c < channels; ++c) {
          dx[static_cast<std::size_t>(n) * channels + c] +=
              self.grad[(static_cast<std::size_t>(n) * times + r) * channels + c];
        }
      }
    }
  });
}

Tensor glu(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("glu: need (N, C, ...) input");
  const int n_batch = x.dim(0), channels = x.dim(1);
  if (channels % 2 != 0) {
    throw ConfigError("glu: channel count " + std::to_string(channels) + " is odd");
  }
  const int half = channels / 2;
  const std::size_t len = x.numel() / (static_cast<std::size_t>(n_batch) * channels);
  const std::size_t block = static_cast<std::size_t>(half) * len;
  Shape out_shape = x.shape();
  out_shape[1] = half;
  const auto xv = x.values();
  auto gate = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n_batch) * block);
  std::vector<double> out(gate->size());
  for (int n = 0; n < n_batch; ++n) {
    const double* a = xv.data() + static_cast<std::size_t>(n) * 2 * block;
    const double* b = a + block;
    for (std::size_t i = 0; i < block; ++i) {
      const double s = stable_sigmoid(b[i]);
      (*gate)[n * block + i] = s;
      out[n * block + i] = a[i] * s;
    }
  }
  return make_result(std::move(out_shape), std::move(out), {x}, [=](Node& self) {
    auto& dx = grad_of(self, 0);
    const auto& xval = self.parents[0]->value;
    for (int n = 0; n < n_batch; ++n) {
      const std::size_t a0 = static_cast<std::size_t>(n) * 2 * block;
      for (std::size_t i = 0; i < block; ++i) {
        const double g = self.grad[n * block + i];
        const double s = (*gate)[n * block + i];
        dx[a0 + i] += g * s;
        dx[a0 + block + i] += g * xval[a0 + i] * s * (1.0 - s);
      }
    }
  });
}

Tensor pixel_shuffle_1d(const Tensor& x, int r) {
  require_rank(x, 3, "pixel_shuffle_1d", "input");
  const int n_batch = x.dim(0), channels = x.dim(1), length = x.dim(2);
  if (r < 1 || channels % r != 0) {
    throw ConfigError("pixel_shuffle_1d: channel count " + std::to_string(channels) + " not divisible by " +
                      std::to_string(r));
  }
  const int out_c = channels / r;
  // index[o] = source offset of output element o
  auto index = std::make_shared<std::vector<std::size_t>>(x.numel());
  for (int n = 0; n < n_batch; ++n) {
    for (int c = 0; c < out_c; ++c) {
      for (int t = 0; t < length; ++t) {
        for (int k = 0; k < r; ++k) {
          const std::size_t o = (static_cast<std::size_t>(n) * out_c + c) * length * r + static_cast<std::size_t>(r) * t + k;
          (*index)[o] = (static_cast<std::size_t>(n) * channels + c * r + k) * length + t;
        }
      }
    }
  }
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = xv[(*index)[o]];
  return make_result({n_batch, out_c, length * r}, std::move(out), {x}, [=](Node& self) {
    auto& dx = grad_of(self, 0);
    for (std::size_t o = 0; o < index->size(); ++o) dx[(*index)[o]] += self.grad[o];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!needs(self, p)) continue;
      auto& d = grad_of(self, p);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    auto& d = grad_of(self, 0);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  auto y = std::make_shared<std::vector<double>>(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < y->size(); ++i) (*y)[i] = stable_sigmoid(xv[i]);
  std::vector<double> out = *y;
  return make_result(x.shape(), std::move(out), {x}, [=](Node& self) {
    auto& d = grad_of(self, 0);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * (*y)[i] * (1.0 - (*y)[i]);
  });
}

Tensor mean_over_time(const Tensor& x) {
  require_rank(x, 3, "mean_over_time", "input");
  const int n_batch = x.dim(0), channels = x.dim(1), length = x.dim(2);
  std::vector<double> out(static_cast<std::size_t>(n_batch) * channels);
  const auto xv = x.values();
  for (std::size_t g = 0; g < out.size(); ++g) {
    double s = 0.0;
    for (int t = 0; t < length; ++t) s += xv[g * length + t];
    out[g] = s / length;
  }
  return make_result({n_batch, channels}, std::move(out), {x}, [=](Node& self) {
    auto& d = grad_of(self, 0);
    for (std::size_t g = 0; g < self.grad.size(); ++g) {
      const double v = self.grad[g] / length;
      for (int t = 0; t < length; ++t) d[g * length + t] += v;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  const int n_batch = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ShapeError("linear: weight expects " + std::to_string(weight.dim(1)) + " inputs, got " + std::to_string(in));
  }
  if (bias.numel() != static_cast<std::size_t>(out_dim)) throw ShapeError("linear: bias size mismatch");
  std::vector<double> out(static_cast<std::size_t>(n_batch) * out_dim);
  MapMat o(out.data(), n_batch, out_dim);
  const ConstMapMat xm(x.values().data(), n_batch, in);
  const ConstMapMat wm(weight.values().data(), out_dim, in);
  o.noalias() = xm * wm.transpose();
  o.rowwise() += ConstMapVec(bias.values().data(), out_dim).transpose();
  return make_result({n_batch, out_dim}, std::move(out), {x, weight, bias}, [=](Node& self) {
    const ConstMapMat g(self.grad.data(), n_batch, out_dim);
    if (needs(self, 0)) {
      MapMat(grad_of(self, 0).data(), n_batch, in).noalias() +=
          g * ConstMapMat(self.parents[1]->value.data(), out_dim, in);
    }
    if (needs(self, 1)) {
      MapMat(grad_of(self, 1).data(), out_dim, in).noalias() +=
          g.transpose() * ConstMapMat(self.parents[0]->value.data(), n_batch, in);
    }
    if (needs(self, 2)) MapVec(grad_of(self, 2).data(), out_dim) += g.colwise().sum().transpose();
  });
}

Tensor gather_columns(const Tensor& x, std::vector<int> columns) {
  require_rank(x, 2, "gather_columns", "input");
  const int n_batch = x.dim(0), width = x.dim(1);
  const int count = static_cast<int>(columns.size());
  for (int c : columns) {
    if (c < 0 || c >= width) throw ShapeError("gather_columns: column " + std::to_string(c) + " out of range");
  }
  std::vector<double> out(static_cast<std::size_t>(n_batch) * count);
  const auto xv = x.values();
  for (int n = 0; n < n_batch; ++n) {
    for (int j = 0; j < count; ++j) {
      out[static_cast<std::size_t>(n) * count + j] = xv[static_cast<std::size_t>(n) * width + columns[j]];
    }
  }
  return make_result({n_batch, count}, std::move(out), {x}, [=](Node& self) {
    auto& d = grad_of(self, 0);
    for (int n = 0; n < n_batch; ++n) {
      for (int j = 0; j < count; ++j) {
        d[static_cast<std::size_t>(n) * width + columns[j]] += self.grad[static_cast<std::size_t>(n) * count + j];
      }
    }
  });
}

Tensor l1_loss(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("l1_loss: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  if (a.numel() == 0) throw ShapeError("l1_loss: empty input");
  const auto av = a.values(), bv = b.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) sum += std::abs(av[i] - bv[i]);
  const double n = static_cast<double>(av.size());
  return make_result({1}, {sum / n}, {a, b}, [n](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    const double g = self.grad[0] / n;
    for (std::size_t p = 0; p < 2; ++p) {
      if (!needs(self, p)) continue;
      auto& d = grad_of(self, p);
      const double sign = p == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < av.size(); ++i) {
        const double diff = av[i] - bv[i];
        if (diff > 0.0) {
          d[i] += sign * g;
        } else if (diff < 0.0) {
          d[i] -= sign * g;
        }
      }
    }
  });
}

namespace {

Tensor mean_neg_log_impl(const Tensor& p, double eps, bool complement) {
  if (p.numel() == 0) throw ShapeError("mean_neg_log: empty input");
  const auto pv = p.values();
  const double n = static_cast<double>(pv.size());
  double sum = 0.0;
  for (double v : pv) {
    const double c = std::clamp(v, eps, 1.0 - eps);
    sum -= std::log(complement ? 1.0 - c : c);
  }
  return make_result({1}, {sum / n}, {p}, [=](Node& self) {
    const auto& val = self.parents[0]->value;
    auto& d = grad_of(self, 0);
    const double g = self.grad[0] / n;
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double v = val[i];
      if (v <= eps || v >= 1.0 - eps) continue;
      d[i] += complement ? g / (1.0 - v) : -g / v;
    }
  });
}

}  // namespace

Tensor mean_neg_log(const Tensor& p, double eps) { return mean_neg_log_impl(p, eps, false); }
Tensor mean_neg_log1m(const Tensor& p, double eps) { return mean_neg_log_impl(p, eps, true); }

Tensor weighted_sum(const std::vector<Tensor>& terms, const std::vector<double>& weights) {
  if (terms.size() != weights.size()) throw ShapeError("weighted_sum: terms/weights length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) total += weights[i] * terms[i].item();
  return make_result({1}, {total}, terms, [weights](Node& self) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (needs(self, i)) grad_of(self, i)[0] += weights[i] * self.grad[0];
    }
  });
}

}  // namespace emovc::nn
