#include "pss/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace pss {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

using detail::Node;

bool wants_graph(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// Creates the output tensor; attaches parents and backward only when recording.
Tensor make_output(Shape shape, std::vector<float> data, std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward_fn) {
  Tensor out(std::move(shape), std::move(data));
  if (wants_graph(inputs)) {
    Node& n = out.node();
    n.requires_grad = true;
    for (const Tensor* t : inputs) n.parents.push_back(t->node_ptr());
    n.backward_fn = std::move(backward_fn);
  }
  return out;
}

void require_4d(const Tensor& t, const char* what) {
  if (t.ndim() != 4) {
    throw DimensionError(std::string(what) + ": expected [n,c,h,w], got " + shape_str(t.shape()));
  }
}

// Rows [y0, y1) of the 3x3/pad-1 patch matrix: col is [c*9, (y1-y0)*w].
void im2col3x3(const float* x, int channels, int h, int w, int y0, int y1, float* col) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t cols = static_cast<std::size_t>(y1 - y0) * w;
  for (int c = 0; c < channels; ++c) {
    const float* plane = x + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        float* row = col + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * cols;
        const int dx = kx - 1;
        for (int y = y0; y < y1; ++y) {
          float* dst = row + static_cast<std::size_t>(y - y0) * w;
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(sy) * w;
          if (dx == 0) {
            std::copy(src, src + w, dst);
          } else if (dx < 0) {
            dst[0] = 0.0f;
            std::copy(src, src + w - 1, dst + 1);
          } else {
            std::copy(src + 1, src + w, dst);
            dst[w - 1] = 0.0f;
          }
        }
      }
    }
  }
}

void col2im3x3(const float* col, int channels, int h, int w, int y0, int y1, float* x) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t cols = static_cast<std::size_t>(y1 - y0) * w;
  for (int c = 0; c < channels; ++c) {
    float* plane = x + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const float* row = col + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * cols;
        const int dx = kx - 1;
        for (int y = y0; y < y1; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const float* src = row + static_cast<std::size_t>(y - y0) * w;
          float* dst = plane + static_cast<std::size_t>(sy) * w;
          if (dx == 0) {
            for (int i = 0; i < w; ++i) dst[i] += src[i];
          } else if (dx < 0) {
            for (int i = 1; i < w; ++i) dst[i - 1] += src[i];
          } else {
            for (int i = 0; i + 1 < w; ++i) dst[i + 1] += src[i];
          }
        }
      }
    }
  }
}

// Per-thread im2col workspace; grows but never shrinks so repeated calls avoid
// fresh page faults.
float* col_workspace(std::size_t n) {
  thread_local std::vector<float> buf;
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

// Rows per patch-matrix chunk, sized so a chunk stays cache resident.
int chunk_rows(int k, int h, int w) {
  constexpr std::size_t kTargetFloats = 128 * 1024;
  const std::size_t per_row = static_cast<std::size_t>(k) * w;
  return std::clamp(static_cast<int>(kTargetFloats / std::max<std::size_t>(1, per_row)), 1, h);
}

using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

}  // namespace

int LayerParams::in_channels() const {
  return kind == LayerKind::conv3x3 ? weight.dim(1) : weight.dim(0);
}

int LayerParams::out_channels() const {
  return kind == LayerKind::conv3x3 ? weight.dim(0) : weight.dim(1);
}

LayerParams LayerParams::clone() const {
  LayerParams p;
  p.kind = kind;
  p.weight = weight.clone();
  p.weight.set_requires_grad(true);
  p.bias = bias.clone();
  p.bias.set_requires_grad(true);
  return p;
}

LayerParams LayerParams::conv3x3(int c_in, int c_out, Rng& rng) {
  LayerParams p;
  p.kind = LayerKind::conv3x3;
  p.weight = Tensor({c_out, c_in, 3, 3}, 0.0f, true);
  p.bias = Tensor({c_out}, 0.0f, true);
  const float s = std::sqrt(1.0f / static_cast<float>(c_in * 9));
  for (float& v : p.weight.data()) v = rng.uniform(-s, s);
  for (float& v : p.bias.data()) v = rng.uniform(-s, s);
  return p;
}

LayerParams LayerParams::tconv2x2(int c_in, int c_out, Rng& rng) {
  LayerParams p;
  p.kind = LayerKind::tconv2x2;
  p.weight = Tensor({c_in, c_out, 2, 2}, 0.0f, true);
  p.bias = Tensor({c_out}, 0.0f, true);
  const float s = std::sqrt(1.0f / static_cast<float>(c_in));
  for (float& v : p.weight.data()) v = rng.uniform(-s, s);
  for (float& v : p.bias.data()) v = rng.uniform(-s, s);
  return p;
}

Tensor conv2d(const Tensor& input, const LayerParams& params) {
  require_4d(input, "conv2d");
  const Tensor& weight = params.weight;
  const Tensor& bias = params.bias;
  if (params.kind != LayerKind::conv3x3 || weight.ndim() != 4 || weight.dim(2) != 3 || weight.dim(3) != 3) {
    throw DimensionError("conv2d: weights must be [c_out,c_in,3,3], got " + shape_str(weight.shape()));
  }
  const int n = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int c_out = weight.dim(0);
  if (weight.dim(1) != c_in) {
    throw DimensionError("conv2d: input has " + std::to_string(c_in) + " channels, weights expect " +
                         std::to_string(weight.dim(1)));
  }
  if (bias.numel() != static_cast<std::size_t>(c_out)) {
    throw DimensionError("conv2d: bias must have " + std::to_string(c_out) + " elements");
  }
  const int k = c_in * 9;
  const std::size_t hw = static_cast<std::size_t>(h) * w;

  const int rows = chunk_rows(k, h, w);
  std::vector<float> out(static_cast<std::size_t>(n) * c_out * hw);
  float* col = col_workspace(static_cast<std::size_t>(k) * rows * w);
  const ConstMatMap wmat(weight.ptr(), c_out, k);
  for (int b = 0; b < n; ++b) {
    for (int y0 = 0; y0 < h; y0 += rows) {
      const int y1 = std::min(h, y0 + rows);
      const Eigen::Index cols = static_cast<Eigen::Index>(y1 - y0) * w;
      im2col3x3(input.ptr() + static_cast<std::size_t>(b) * c_in * hw, c_in, h, w, y0, y1, col);
      StridedMap y(out.data() + static_cast<std::size_t>(b) * c_out * hw + static_cast<std::size_t>(y0) * w, c_out,
                   cols, Eigen::OuterStride<>(static_cast<Eigen::Index>(hw)));
      y.noalias() = wmat * ConstMatMap(col, k, cols);
    }
    MatMap yb(out.data() + static_cast<std::size_t>(b) * c_out * hw, c_out, static_cast<Eigen::Index>(hw));
    for (int co = 0; co < c_out; ++co) yb.row(co).array() += bias.ptr()[co];
  }

  return make_output(
      {n, c_out, h, w}, std::move(out), {&input, &weight, &bias},
      [n, c_in, c_out, h, w, k, hw, rows](Node& self) {
        Node& x = *self.parents[0];
        Node& wt = *self.parents[1];
        Node& bs = *self.parents[2];
        const ConstMatMap wmat(wt.data.data(), c_out, k);
        std::vector<float> col(static_cast<std::size_t>(k) * rows * w);
        std::vector<float> dcol;
        if (x.requires_grad) dcol.resize(col.size());
        for (int b = 0; b < n; ++b) {
          const float* gb = self.grad.data() + static_cast<std::size_t>(b) * c_out * hw;
          if (bs.requires_grad) {
            auto& bg = bs.ensure_grad();
            // Plain loop: Eigen's vectorised sum peels by runtime alignment,
            // which would make results depend on where the buffer landed.
            for (int co = 0; co < c_out; ++co) {
              const float* row = gb + static_cast<std::size_t>(co) * hw;
              float acc = 0.0f;
              for (std::size_t i = 0; i < hw; ++i) acc += row[i];
              bg[co] += acc;
            }
          }
          for (int y0 = 0; y0 < h; y0 += rows) {
            const int y1 = std::min(h, y0 + rows);
            const Eigen::Index cols = static_cast<Eigen::Index>(y1 - y0) * w;
            const ConstStridedMap dy(gb + static_cast<std::size_t>(y0) * w, c_out, cols,
                                     Eigen::OuterStride<>(static_cast<Eigen::Index>(hw)));
            if (wt.requires_grad) {
              im2col3x3(x.data.data() + static_cast<std::size_t>(b) * c_in * hw, c_in, h, w, y0, y1, col.data());
              MatMap(wt.ensure_grad().data(), c_out, k).noalias() += dy * ConstMatMap(col.data(), k, cols).transpose();
            }
            if (x.requires_grad) {
              MatMap(dcol.data(), k, cols).noalias() = wmat.transpose() * dy;
              col2im3x3(dcol.data(), c_in, h, w, y0, y1,
                        x.ensure_grad().data() + static_cast<std::size_t>(b) * c_in * hw);
            }
          }
        }
      });
}

PoolResult maxpool2x2_with_indices(const Tensor& input) {
  require_4d(input, "maxpool2x2");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("maxpool2x2: spatial dims must be even, got " + shape_str(input.shape()));
  }
  const int oh = h / 2, ow = w / 2;
  std::vector<float> out(static_cast<std::size_t>(n) * c * oh * ow);
  std::vector<std::int32_t> idx(out.size());
  const float* x = input.ptr();
  std::size_t o = 0;
  for (int plane = 0; plane < n * c; ++plane) {
    const std::size_t base = static_cast<std::size_t>(plane) * h * w;
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx, ++o) {
        std::size_t best = base + static_cast<std::size_t>(2 * y) * w + 2 * xx;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t ci : cand)
          if (x[ci] > x[best]) best = ci;
        out[o] = x[best];
        idx[o] = static_cast<std::int32_t>(best);
      }
    }
  }
  PoolResult result;
  result.argmax = idx;
  result.output = make_output({n, c, oh, ow}, std::move(out), {&input},
                              [idx = std::move(idx)](Node& self) {
                                auto& g = self.parents[0]->ensure_grad();
                                for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += self.grad[i];
                              });
  return result;
}

Tensor maxpool2x2(const Tensor& input) { return maxpool2x2_with_indices(input).output; }

Tensor transposed_conv2d(const Tensor& input, const LayerParams& params) {
  require_4d(input, "transposed_conv2d");
  const Tensor& weight = params.weight;
  const Tensor& bias = params.bias;
  if (params.kind != LayerKind::tconv2x2 || weight.ndim() != 4 || weight.dim(2) != 2 || weight.dim(3) != 2) {
    throw DimensionError("transposed_conv2d: weights must be [c_in,c_out,2,2], got " +
                         shape_str(weight.shape()));
  }
  const int n = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int c_out = weight.dim(1);
  if (weight.dim(0) != c_in) {
    throw DimensionError("transposed_conv2d: input has " + std::to_string(c_in) +
                         " channels, weights expect " + std::to_string(weight.dim(0)));
  }
  if (bias.numel() != static_cast<std::size_t>(c_out)) {
    throw DimensionError("transposed_conv2d: bias must have " + std::to_string(c_out) + " elements");
  }
  const int oh = 2 * h, ow = 2 * w;
  const auto hw = static_cast<Eigen::Index>(h) * w;
  const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
  const int c4 = c_out * 4;

  std::vector<float> out(static_cast<std::size_t>(n) * c_out * ohw);
  RowMat cols(c4, hw);
  const ConstMatMap wmat(weight.ptr(), c_in, c4);
  for (int b = 0; b < n; ++b) {
    cols.noalias() = wmat.transpose() * ConstMatMap(input.ptr() + b * c_in * hw, c_in, hw);
    float* ob = out.data() + static_cast<std::size_t>(b) * c_out * ohw;
    for (int co = 0; co < c_out; ++co) {
      const float bv = bias.ptr()[co];
      for (int a = 0; a < 2; ++a) {
        for (int bb = 0; bb < 2; ++bb) {
          const float* src = cols.data() + (co * 4 + a * 2 + bb) * hw;
          for (int y = 0; y < h; ++y) {
            float* dst = ob + co * ohw + static_cast<std::size_t>(2 * y + a) * ow + bb;
            for (int x = 0; x < w; ++x) dst[2 * x] = src[y * w + x] + bv;
          }
        }
      }
    }
  }

  return make_output(
      {n, c_out, oh, ow}, std::move(out), {&input, &weight, &bias},
      [n, c_in, c_out, h, w, hw, ohw, ow, c4](Node& self) {
        Node& x = *self.parents[0];
        Node& wt = *self.parents[1];
        Node& bs = *self.parents[2];
        RowMat dcols(c4, hw);
        for (int b = 0; b < n; ++b) {
          const float* gb = self.grad.data() + static_cast<std::size_t>(b) * c_out * ohw;
          for (int co = 0; co < c_out; ++co) {
            for (int a = 0; a < 2; ++a) {
              for (int bb = 0; bb < 2; ++bb) {
                float* dst = dcols.data() + (co * 4 + a * 2 + bb) * hw;
                for (int y = 0; y < h; ++y) {
                  const float* src = gb + co * ohw + static_cast<std::size_t>(2 * y + a) * ow + bb;
                  for (int xx = 0; xx < w; ++xx) dst[y * w + xx] = src[2 * xx];
                }
              }
            }
          }
          if (wt.requires_grad) {
            MatMap(wt.ensure_grad().data(), c_in, c4).noalias() +=
                ConstMatMap(x.data.data() + b * c_in * hw, c_in, hw) * dcols.transpose();
          }
          if (bs.requires_grad) {
            auto& bg = bs.ensure_grad();
            for (int co = 0; co < c_out; ++co) bg[co] += dcols.middleRows(co * 4, 4).sum();
          }
          if (x.requires_grad) {
            MatMap(x.ensure_grad().data() + b * c_in * hw, c_in, hw).noalias() +=
                ConstMatMap(wt.data.data(), c_in, c4) * dcols;
          }
        }
      });
}

Tensor relu(const Tensor& input) {
  std::vector<float> out(input.data().begin(), input.data().end());
  for (float& v : out) v = v > 0.0f ? v : 0.0f;
  return make_output(input.shape(), std::move(out), {&input}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (self.data[i] > 0.0f) g[i] += self.grad[i];
  });
}

Tensor sigmoid(const Tensor& input) {
  constexpr float lo = std::numeric_limits<float>::min();
  constexpr float hi = 1.0f - std::numeric_limits<float>::epsilon() / 2;
  std::vector<float> out(input.numel());
  const float* x = input.ptr();
  for (std::size_t i = 0; i < out.size(); ++i) {
    float y;
    if (x[i] >= 0.0f) {
      y = 1.0f / (1.0f + std::exp(-x[i]));
    } else {
      const float e = std::exp(x[i]);
      y = e / (1.0f + e);
    }
    out[i] = std::clamp(y, lo, hi);
  }
  return make_output(input.shape(), std::move(out), {&input}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const float y = self.data[i];
      g[i] += self.grad[i] * y * (1.0f - y);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.ptr()[i] + b.ptr()[i];
  return make_output(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor scale(const Tensor& input, float factor) {
  std::vector<float> out(input.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = input.ptr()[i] * factor;
  return make_output(input.shape(), std::move(out), {&input}, [factor](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor sum(const Tensor& input) {
  double acc = 0.0;
  for (float v : input.data()) acc += v;
  return make_output({1}, {static_cast<float>(acc)}, {&input}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (float& v : g) v += self.grad[0];
  });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
  }
  const std::size_t count = pred.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = static_cast<double>(pred.ptr()[i]) - target.ptr()[i];
    acc += d * d;
  }
  const float value = static_cast<float>(acc / static_cast<double>(count));
  return make_output({1}, {value}, {&pred, &target}, [count](Node& self) {
    Node& p = *self.parents[0];
    Node& t = *self.parents[1];
    const float k = 2.0f * self.grad[0] / static_cast<float>(count);
    if (p.requires_grad) {
      auto& g = p.ensure_grad();
      for (std::size_t i = 0; i < count; ++i) g[i] += k * (p.data[i] - t.data[i]);
    }
    if (t.requires_grad) {
      auto& g = t.ensure_grad();
      for (std::size_t i = 0; i < count; ++i) g[i] -= k * (p.data[i] - t.data[i]);
    }
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels, int ignore_label) {
  require_4d(logits, "softmax_cross_entropy");
  const int n = logits.dim(0), classes = logits.dim(1);
  const std::size_t hw = static_cast<std::size_t>(logits.dim(2)) * logits.dim(3);
  if (labels.size() != static_cast<std::size_t>(n) * hw) {
    throw DimensionError("softmax_cross_entropy: expected " + std::to_string(n * hw) + " labels, got " +
                         std::to_string(labels.size()));
  }
  std::vector<float> probs(logits.numel());
  std::vector<std::uint8_t> lab(labels.begin(), labels.end());
  double total = 0.0;
  std::size_t counted = 0;
  const float* x = logits.ptr();
  for (int b = 0; b < n; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * classes * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      float mx = -std::numeric_limits<float>::infinity();
      for (int c = 0; c < classes; ++c) mx = std::max(mx, x[base + c * hw + p]);
      double denom = 0.0;
      for (int c = 0; c < classes; ++c) {
        const float e = std::exp(x[base + c * hw + p] - mx);
        probs[base + c * hw + p] = e;
        denom += e;
      }
      for (int c = 0; c < classes; ++c) probs[base + c * hw + p] = static_cast<float>(probs[base + c * hw + p] / denom);
      const int label = lab[b * hw + p];
      if (label == ignore_label) continue;
      if (label >= classes) {
        throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                    " outside [0," + std::to_string(classes) + ")");
      }
      total += -(static_cast<double>(x[base + label * hw + p]) - mx - std::log(denom));
      ++counted;
    }
  }
  if (counted == 0) throw std::invalid_argument("softmax_cross_entropy: every pixel is ignored");
  const float value = static_cast<float>(total / static_cast<double>(counted));
  return make_output(
      {1}, {value}, {&logits},
      [probs = std::move(probs), lab = std::move(lab), n, classes, hw, counted, ignore_label](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        const float k = self.grad[0] / static_cast<float>(counted);
        for (int b = 0; b < n; ++b) {
          const std::size_t base = static_cast<std::size_t>(b) * classes * hw;
          for (std::size_t p = 0; p < hw; ++p) {
            const int label = lab[b * hw + p];
            if (label == ignore_label) continue;
            for (int c = 0; c < classes; ++c) {
              const std::size_t i = base + c * hw + p;
              g[i] += k * (probs[i] - (c == label ? 1.0f : 0.0f));
            }
          }
        }
      });
}

std::vector<std::uint8_t> argmax_channels(const Tensor& logits) {
  require_4d(logits, "argmax_channels");
  const int n = logits.dim(0), classes = logits.dim(1);
  const std::size_t hw = static_cast<std::size_t>(logits.dim(2)) * logits.dim(3);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n) * hw);
  const float* x = logits.ptr();
  for (int b = 0; b < n; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * classes * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      int best = 0;
      float best_v = x[base + p];
      for (int c = 1; c < classes; ++c) {
        const float v = x[base + c * hw + p];
        if (v > best_v) {
          best_v = v;
          best = c;
        }
      }
      out[b * hw + p] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

}  // namespace pss
