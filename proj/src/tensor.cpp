#include "stlm/tensor.hpp"

#include <algorithm>
#include <cstring>

namespace stlm {

namespace k = stlm::kernels;

#define KCALL(fn, ...)                                \
  (k::backend() == k::Backend::Serial                 \
       ? k::serial::fn(__VA_ARGS__)                   \
       : k::par::fn(__VA_ARGS__))

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Matmul: return "matmul";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::Softmax: return "softmax";
    case OpKind::Gelu: return "gelu";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::BilinearResize: return "bilinear_resize";
    case OpKind::Concat: return "concat";
    case OpKind::Mean: return "mean";
    case OpKind::Sum: return "sum";
    case OpKind::L2Normalize: return "l2_normalize";
    case OpKind::Transpose: return "transpose";
    case OpKind::Reshape: return "reshape";
    case OpKind::ScaledDotAttention: return "scaled_dot_attention";
    case OpKind::BiasAdd: return "bias_add";
    case OpKind::Log: return "log";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Abs: return "abs";
    case OpKind::PowScalar: return "pow_scalar";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_fail(OpKind kind, const std::string& detail) {
  throw ShapeError(std::string(op_name(kind)) + ": shape mismatch " + detail);
}

kernels::Conv2dDims conv_dims(OpKind kind, const Shape& xs, const Shape& ws, const Attrs& at) {
  if (xs.size() != 4 || ws.size() != 4)
    shape_fail(kind, shape_str(xs) + " conv " + shape_str(ws));
  kernels::Conv2dDims d;
  d.n = xs[0];
  d.cin = xs[1];
  d.h = xs[2];
  d.w = xs[3];
  d.cout = ws[0];
  d.kh = ws[2];
  d.kw = ws[3];
  d.stride = at.stride;
  d.pad = at.pad;
  d.dil = at.dilation;
  if (ws[1] != d.cin) shape_fail(kind, shape_str(xs) + " conv " + shape_str(ws));
  int eff_kh = (d.kh - 1) * d.dil + 1, eff_kw = (d.kw - 1) * d.dil + 1;
  d.oh = (d.h + 2 * d.pad - eff_kh) / d.stride + 1;
  d.ow = (d.w + 2 * d.pad - eff_kw) / d.stride + 1;
  if (d.oh < 1 || d.ow < 1)
    shape_fail(kind, shape_str(xs) + " conv " + shape_str(ws) + " (empty output)");
  return d;
}

// reduction geometry for an axis op over row-major data
struct RedGeom {
  int64_t outer = 1, red = 1, inner = 1;
};
RedGeom red_geom(const Shape& s, int axis) {
  RedGeom g;
  for (int i = 0; i < axis; ++i) g.outer *= s[i];
  g.red = s[axis];
  for (size_t i = axis + 1; i < s.size(); ++i) g.inner *= s[i];
  return g;
}

}  // namespace

template <class T>
Tensor<T> Graph<T>::apply(OpKind kind, const std::vector<int>& inputs, Attrs attrs) {
  for (int id : inputs) check_id(id);
  Record r;
  r.kind = kind;
  r.in = inputs;
  r.attrs = std::move(attrs);
  for (int id : inputs) r.grad_needed = r.grad_needed || nodes_[id].requires_grad;

  Node out;
  out.requires_grad = r.grad_needed;

  const auto shp = [&](int i) -> const Shape& { return nodes_[r.in[i]].shape; };

  switch (kind) {
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div: {
      if (r.in.size() != 2) shape_fail(kind, "wants 2 inputs");
      bool a_scalar = shape_numel(shp(0)) == 1, b_scalar = shape_numel(shp(1)) == 1;
      if (!a_scalar && !b_scalar && shp(0) != shp(1))
        shape_fail(kind, shape_str(shp(0)) + " vs " + shape_str(shp(1)));
      out.shape = a_scalar && !b_scalar ? shp(1) : shp(0);
      break;
    }
    case OpKind::Matmul: {
      if (shp(0).size() != 2 || shp(1).size() != 2 || shp(0)[1] != shp(1)[0])
        shape_fail(kind, shape_str(shp(0)) + " x " + shape_str(shp(1)));
      out.shape = {shp(0)[0], shp(1)[1]};
      break;
    }
    case OpKind::Conv2d: {
      auto d = conv_dims(kind, shp(0), shp(1), r.attrs);
      if (r.in.size() == 3 && (shp(2).size() != 1 || shp(2)[0] != d.cout))
        shape_fail(kind, "bias " + shape_str(shp(2)) + " for cout=" + std::to_string(d.cout));
      out.shape = {d.n, d.cout, d.oh, d.ow};
      break;
    }
    case OpKind::LayerNorm: {
      int cols = shp(0).back();
      if (shp(1) != Shape{cols} || shp(2) != Shape{cols})
        shape_fail(kind, shape_str(shp(0)) + " with gamma " + shape_str(shp(1)));
      out.shape = shp(0);
      break;
    }
    case OpKind::Softmax:
    case OpKind::Gelu:
    case OpKind::Relu:
    case OpKind::Sigmoid:
    case OpKind::Log:
    case OpKind::Sqrt:
    case OpKind::Abs:
    case OpKind::PowScalar:
      out.shape = shp(0);
      break;
    case OpKind::BilinearResize: {
      if (shp(0).size() != 3 || r.attrs.out_h < 1 || r.attrs.out_w < 1)
        shape_fail(kind, shape_str(shp(0)));
      out.shape = {shp(0)[0], r.attrs.out_h, r.attrs.out_w};
      break;
    }
    case OpKind::Concat: {
      if (r.in.empty()) shape_fail(kind, "wants >=1 input");
      Shape s0 = shp(0);
      int ax = r.attrs.axis;
      if (ax < 0 || size_t(ax) >= s0.size()) shape_fail(kind, "bad axis");
      int total = 0;
      for (size_t i = 0; i < r.in.size(); ++i) {
        Shape si = shp(int(i));
        if (si.size() != s0.size()) shape_fail(kind, shape_str(s0) + " vs " + shape_str(si));
        for (size_t a = 0; a < s0.size(); ++a)
          if (int(a) != ax && si[a] != s0[a])
            shape_fail(kind, shape_str(s0) + " vs " + shape_str(si));
        total += si[ax];
      }
      out.shape = s0;
      out.shape[ax] = total;
      break;
    }
    case OpKind::Mean:
    case OpKind::Sum: {
      int ax = r.attrs.axis;
      if (ax == -1) {
        out.shape = {1};
      } else {
        if (ax < 0 || size_t(ax) >= shp(0).size()) shape_fail(kind, "bad axis");
        out.shape = shp(0);
        out.shape.erase(out.shape.begin() + ax);
        if (out.shape.empty()) out.shape = {1};
      }
      break;
    }
    case OpKind::L2Normalize: {
      int ax = r.attrs.axis;
      if (ax < 0 || size_t(ax) >= shp(0).size()) shape_fail(kind, "bad axis");
      out.shape = shp(0);
      break;
    }
    case OpKind::Transpose: {
      const auto& p = r.attrs.dims;
      if (p.size() != shp(0).size()) shape_fail(kind, "perm rank");
      std::vector<bool> seen(p.size(), false);
      for (int a : p) {
        if (a < 0 || size_t(a) >= p.size() || seen[a]) shape_fail(kind, "bad permutation");
        seen[a] = true;
      }
      out.shape.resize(p.size());
      for (size_t i = 0; i < p.size(); ++i) out.shape[i] = shp(0)[p[i]];
      break;
    }
    case OpKind::Reshape: {
      if (shape_numel(r.attrs.dims) != shape_numel(shp(0)))
        shape_fail(kind, shape_str(shp(0)) + " -> " + shape_str(r.attrs.dims));
      out.shape = r.attrs.dims;
      break;
    }
    case OpKind::ScaledDotAttention: {
      if (shp(0).size() != 2 || shp(1).size() != 2 || shp(2).size() != 2 ||
          shp(0)[1] != shp(1)[1] || shp(1) != shp(2) || shp(0)[1] % r.attrs.heads != 0)
        shape_fail(kind, shape_str(shp(0)) + ", " + shape_str(shp(1)) + ", " +
                             shape_str(shp(2)) + " heads=" + std::to_string(r.attrs.heads));
      out.shape = shp(0);
      break;
    }
    case OpKind::BiasAdd: {
      int cols = shp(0).back();
      if (shp(1) != Shape{cols})
        shape_fail(kind, shape_str(shp(0)) + " + " + shape_str(shp(1)));
      out.shape = shp(0);
      break;
    }
  }

  out.v.resize(shape_numel(out.shape));
  nodes_.push_back(std::move(out));
  r.out = int(nodes_.size() - 1);
  forward_record(r);

  if (!KCALL(all_finite, nodes_[r.out].v.data(), int64_t(nodes_[r.out].v.size())))
    throw NumericError(std::string("non-finite output from ") + op_name(kind));

  tape_.push_back(std::move(r));
  return Tensor<T>{this, int(nodes_.size() - 1)};
}

template <class T>
void Graph<T>::forward_record(Record& r) {
  Node& out = nodes_[r.out];
  const auto in = [&](int i) -> const Node& { return nodes_[r.in[i]]; };
  const int64_t n = int64_t(out.v.size());

  switch (r.kind) {
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div: {
      const Node &a = in(0), &b = in(1);
      bool a_scalar = a.v.size() == 1 && n > 1, b_scalar = b.v.size() == 1 && n > 1;
      if (!a_scalar && !b_scalar) {
        switch (r.kind) {
          case OpKind::Add: KCALL(ew_add, a.v.data(), b.v.data(), out.v.data(), n); break;
          case OpKind::Sub: KCALL(ew_sub, a.v.data(), b.v.data(), out.v.data(), n); break;
          case OpKind::Mul: KCALL(ew_mul, a.v.data(), b.v.data(), out.v.data(), n); break;
          default: KCALL(ew_div, a.v.data(), b.v.data(), out.v.data(), n); break;
        }
      } else if (b_scalar) {
        T s = b.v[0];
        switch (r.kind) {
          case OpKind::Add: KCALL(ew_add_scalar, a.v.data(), s, out.v.data(), n); break;
          case OpKind::Sub: KCALL(ew_add_scalar, a.v.data(), T(-s), out.v.data(), n); break;
          case OpKind::Mul: KCALL(ew_mul_scalar, a.v.data(), s, out.v.data(), n); break;
          default: KCALL(ew_mul_scalar, a.v.data(), T(1) / s, out.v.data(), n); break;
        }
      } else {
        T s = a.v[0];
        switch (r.kind) {
          case OpKind::Add: KCALL(ew_add_scalar, b.v.data(), s, out.v.data(), n); break;
          case OpKind::Sub: KCALL(ew_rsub_scalar, s, b.v.data(), out.v.data(), n); break;
          case OpKind::Mul: KCALL(ew_mul_scalar, b.v.data(), s, out.v.data(), n); break;
          default: KCALL(ew_rdiv_scalar, s, b.v.data(), out.v.data(), n); break;
        }
      }
      break;
    }
    case OpKind::Matmul: {
      const Shape &as = in(0).shape, &bs = in(1).shape;
      KCALL(matmul_fwd, in(0).v.data(), in(1).v.data(), out.v.data(), as[0], as[1], bs[1]);
      break;
    }
    case OpKind::Conv2d: {
      auto d = conv_dims(r.kind, in(0).shape, in(1).shape, r.attrs);
      const T* bias = r.in.size() == 3 ? in(2).v.data() : nullptr;
      KCALL(conv2d_fwd, in(0).v.data(), in(1).v.data(), bias, out.v.data(), d);
      break;
    }
    case OpKind::LayerNorm: {
      int cols = in(0).shape.back();
      int rows = int(in(0).v.size() / cols);
      r.saved.resize(2 * rows);
      KCALL(layernorm_fwd, in(0).v.data(), in(1).v.data(), in(2).v.data(), out.v.data(),
            r.saved.data(), r.saved.data() + rows, rows, cols);
      break;
    }
    case OpKind::Softmax: {
      int cols = in(0).shape.back();
      int rows = int(in(0).v.size() / cols);
      KCALL(softmax_fwd, in(0).v.data(), out.v.data(), rows, cols);
      break;
    }
    case OpKind::Gelu: KCALL(gelu_fwd, in(0).v.data(), out.v.data(), n); break;
    case OpKind::Relu: KCALL(relu_fwd, in(0).v.data(), out.v.data(), n); break;
    case OpKind::Sigmoid: KCALL(sigmoid_fwd, in(0).v.data(), out.v.data(), n); break;
    case OpKind::Log: KCALL(log_fwd, in(0).v.data(), out.v.data(), n); break;
    case OpKind::Sqrt: KCALL(sqrt_fwd, in(0).v.data(), out.v.data(), n); break;
    case OpKind::Abs: KCALL(abs_fwd, in(0).v.data(), out.v.data(), n); break;
    case OpKind::PowScalar:
      KCALL(pow_scalar_fwd, in(0).v.data(), T(r.attrs.scalar), out.v.data(), n);
      break;
    case OpKind::BilinearResize: {
      const Shape& s = in(0).shape;
      KCALL(bilinear_fwd, in(0).v.data(), out.v.data(), s[0], s[1], s[2], r.attrs.out_h,
            r.attrs.out_w);
      break;
    }
    case OpKind::Concat: {
      auto g = red_geom(out.shape, r.attrs.axis);
      int64_t out_chunk = g.red * g.inner;
      int64_t off = 0;
      for (size_t i = 0; i < r.in.size(); ++i) {
        const Node& a = in(int(i));
        int64_t chunk = a.shape[r.attrs.axis] * g.inner;
        for (int64_t o = 0; o < g.outer; ++o)
          std::memcpy(out.v.data() + o * out_chunk + off, a.v.data() + o * chunk,
                      size_t(chunk) * sizeof(T));
        off += chunk;
      }
      break;
    }
    case OpKind::Mean:
    case OpKind::Sum: {
      const Node& a = in(0);
      if (r.attrs.axis == -1) {
        T s = KCALL(reduce_sum, a.v.data(), int64_t(a.v.size()));
        out.v[0] = r.kind == OpKind::Mean ? s / T(a.v.size()) : s;
      } else {
        auto g = red_geom(a.shape, r.attrs.axis);
        KCALL(axis_sum_fwd, a.v.data(), out.v.data(), g.outer, g.red, g.inner);
        if (r.kind == OpKind::Mean)
          KCALL(ew_mul_scalar, out.v.data(), T(1) / T(g.red), out.v.data(), n);
      }
      break;
    }
    case OpKind::L2Normalize: {
      auto g = red_geom(in(0).shape, r.attrs.axis);
      r.saved.resize(g.outer * g.inner);
      KCALL(l2_normalize_fwd, in(0).v.data(), out.v.data(), r.saved.data(), g.outer, g.red,
            g.inner, T(1e-8));
      break;
    }
    case OpKind::Transpose: {
      const Shape& s = in(0).shape;
      int rank = int(s.size());
      std::vector<int64_t> in_strides(rank, 1), out_dims(rank), strides_for_out(rank);
      for (int a = rank - 2; a >= 0; --a) in_strides[a] = in_strides[a + 1] * s[a + 1];
      for (int a = 0; a < rank; ++a) {
        out_dims[a] = out.shape[a];
        strides_for_out[a] = in_strides[r.attrs.dims[a]];
      }
      KCALL(permute_copy, in(0).v.data(), out.v.data(), out_dims.data(),
            strides_for_out.data(), rank, n);
      break;
    }
    case OpKind::Reshape:
      std::memcpy(out.v.data(), in(0).v.data(), size_t(n) * sizeof(T));
      break;
    case OpKind::ScaledDotAttention: {
      int nq = in(0).shape[0], nk = in(1).shape[0], dim = in(0).shape[1];
      r.saved.resize(int64_t(r.attrs.heads) * nq * nk);
      KCALL(attention_fwd, in(0).v.data(), in(1).v.data(), in(2).v.data(), out.v.data(),
            r.saved.data(), r.attrs.heads, nq, nk, dim);
      break;
    }
    case OpKind::BiasAdd: {
      int cols = in(0).shape.back();
      int rows = int(in(0).v.size() / cols);
      KCALL(bias_add_fwd, in(0).v.data(), in(1).v.data(), out.v.data(), rows, cols);
      break;
    }
  }
}

template <class T>
void Graph<T>::backward(int loss_id) {
  check_id(loss_id);
  if (nodes_[loss_id].v.size() != 1)
    throw ShapeError("backward: loss node " + shape_str(nodes_[loss_id].shape) +
                     " is not scalar");
  grad_buf(loss_id)[0] = T(1);
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    if (!it->grad_needed) continue;
    if (it->out > loss_id) continue;  // ops after the loss cannot contribute
    if (nodes_[it->out].g.empty()) continue;
    backward_record(*it);
  }
}

template <class T>
void Graph<T>::backward_record(const Record& r) {
  const auto in = [&](int i) -> Node& { return nodes_[r.in[i]]; };
  const Node& out = nodes_[r.out];
  const int64_t n = int64_t(out.v.size());

  std::vector<T> fault_copy;
  const T* gy = out.g.data();
  if (fault_armed_ && r.kind == fault_kind_) {
    fault_copy.assign(out.g.begin(), out.g.end());
    for (auto& v : fault_copy) v *= T(1.0 + fault_eps_);
    gy = fault_copy.data();
  }

  const auto wants = [&](int i) { return in(i).requires_grad; };
  const auto gbuf = [&](int i) -> T* { return grad_buf(r.in[i]).data(); };

  switch (r.kind) {
    case OpKind::Add:
    case OpKind::Sub: {
      T sign = r.kind == OpKind::Add ? T(1) : T(-1);
      for (int side = 0; side < 2; ++side) {
        if (!wants(side)) continue;
        T s = side == 0 ? T(1) : sign;
        if (in(side).v.size() == out.v.size()) {
          if (s > 0)
            KCALL(acc, gbuf(side), gy, n);
          else
            KCALL(acc_neg, gbuf(side), gy, n);
        } else {
          T acc_v = KCALL(reduce_sum, gy, n);
          gbuf(side)[0] += s * acc_v;
        }
      }
      break;
    }
    case OpKind::Mul: {
      const Node &a = in(0), &b = in(1);
      bool a_scalar = a.v.size() == 1 && n > 1, b_scalar = b.v.size() == 1 && n > 1;
      if (wants(0)) {
        if (a_scalar) {
          T s = T(0);
          for (int64_t i = 0; i < n; ++i) s += gy[i] * b.v[i];
          gbuf(0)[0] += s;
        } else if (b_scalar) {
          KCALL(acc_scaled, gbuf(0), gy, b.v[0], n);
        } else {
          KCALL(acc_mul, gbuf(0), gy, b.v.data(), n);
        }
      }
      if (wants(1)) {
        if (b_scalar) {
          T s = T(0);
          for (int64_t i = 0; i < n; ++i) s += gy[i] * a.v[i];
          gbuf(1)[0] += s;
        } else if (a_scalar) {
          KCALL(acc_scaled, gbuf(1), gy, a.v[0], n);
        } else {
          KCALL(acc_mul, gbuf(1), gy, a.v.data(), n);
        }
      }
      break;
    }
    case OpKind::Div: {
      const Node &a = in(0), &b = in(1);
      bool a_scalar = a.v.size() == 1 && n > 1, b_scalar = b.v.size() == 1 && n > 1;
      if (wants(0)) {
        if (a_scalar) {
          T s = T(0);
          for (int64_t i = 0; i < n; ++i) s += gy[i] / b.v[i];
          gbuf(0)[0] += s;
        } else if (b_scalar) {
          KCALL(acc_scaled, gbuf(0), gy, T(1) / b.v[0], n);
        } else {
          KCALL(acc_div, gbuf(0), gy, b.v.data(), n);
        }
      }
      if (wants(1)) {
        if (b_scalar) {
          T s = T(0), bv = b.v[0];
          for (int64_t i = 0; i < n; ++i) s += gy[i] * (a_scalar ? a.v[0] : a.v[i]);
          gbuf(1)[0] -= s / (bv * bv);
        } else if (a_scalar) {
          T av = a.v[0];
          T* gb = gbuf(1);
          for (int64_t i = 0; i < n; ++i) gb[i] -= gy[i] * av / (b.v[i] * b.v[i]);
        } else {
          KCALL(acc_div_neg_sq, gbuf(1), gy, a.v.data(), b.v.data(), n);
        }
      }
      break;
    }
    case OpKind::Matmul: {
      const Shape &as = in(0).shape, &bs = in(1).shape;
      if (wants(0)) KCALL(matmul_bwd_a, gbuf(0), gy, in(1).v.data(), as[0], as[1], bs[1]);
      if (wants(1)) KCALL(matmul_bwd_b, gbuf(1), in(0).v.data(), gy, as[0], as[1], bs[1]);
      break;
    }
    case OpKind::Conv2d: {
      auto d = conv_dims(r.kind, in(0).shape, in(1).shape, r.attrs);
      if (wants(0)) KCALL(conv2d_bwd_x, gbuf(0), gy, in(1).v.data(), d);
      if (wants(1)) KCALL(conv2d_bwd_w, gbuf(1), in(0).v.data(), gy, d);
      if (r.in.size() == 3 && wants(2)) KCALL(conv2d_bwd_bias, gbuf(2), gy, d);
      break;
    }
    case OpKind::LayerNorm: {
      int cols = in(0).shape.back();
      int rows = int(in(0).v.size() / cols);
      // gamma/beta grads always flow with x grads; guard each buffer
      T* gx = wants(0) ? gbuf(0) : nullptr;
      std::vector<T> scratch_x, scratch_g, scratch_b;
      if (!gx) {
        scratch_x.assign(in(0).v.size(), T(0));
        gx = scratch_x.data();
      }
      T* gg = wants(1) ? gbuf(1) : (scratch_g.assign(cols, T(0)), scratch_g.data());
      T* gb = wants(2) ? gbuf(2) : (scratch_b.assign(cols, T(0)), scratch_b.data());
      KCALL(layernorm_bwd, gx, gg, gb, gy, in(0).v.data(), in(1).v.data(), r.saved.data(),
            r.saved.data() + rows, rows, cols);
      break;
    }
    case OpKind::Softmax: {
      int cols = in(0).shape.back();
      int rows = int(in(0).v.size() / cols);
      if (wants(0)) KCALL(softmax_bwd, gbuf(0), gy, out.v.data(), rows, cols);
      break;
    }
    case OpKind::Gelu:
      if (wants(0)) KCALL(acc_gelu_bwd, gbuf(0), gy, in(0).v.data(), n);
      break;
    case OpKind::Relu:
      if (wants(0)) KCALL(acc_relu_bwd, gbuf(0), gy, in(0).v.data(), n);
      break;
    case OpKind::Sigmoid:
      if (wants(0)) KCALL(acc_sigmoid_bwd, gbuf(0), gy, out.v.data(), n);
      break;
    case OpKind::Log:
      if (wants(0)) KCALL(acc_log_bwd, gbuf(0), gy, in(0).v.data(), n);
      break;
    case OpKind::Sqrt:
      if (wants(0)) KCALL(acc_sqrt_bwd, gbuf(0), gy, out.v.data(), n);
      break;
    case OpKind::Abs:
      if (wants(0)) KCALL(acc_abs_bwd, gbuf(0), gy, in(0).v.data(), n);
      break;
    case OpKind::PowScalar:
      if (wants(0)) KCALL(acc_pow_scalar_bwd, gbuf(0), gy, in(0).v.data(), T(r.attrs.scalar), n);
      break;
    case OpKind::BilinearResize: {
      const Shape& s = in(0).shape;
      if (wants(0))
        KCALL(bilinear_bwd, gbuf(0), gy, s[0], s[1], s[2], r.attrs.out_h, r.attrs.out_w);
      break;
    }
    case OpKind::Concat: {
      auto g = red_geom(out.shape, r.attrs.axis);
      int64_t out_chunk = g.red * g.inner;
      int64_t off = 0;
      for (size_t i = 0; i < r.in.size(); ++i) {
        int64_t chunk = in(int(i)).shape[r.attrs.axis] * g.inner;
        if (wants(int(i))) {
          T* gx = gbuf(int(i));
          for (int64_t o = 0; o < g.outer; ++o)
            KCALL(acc, gx + o * chunk, gy + o * out_chunk + off, chunk);
        }
        off += chunk;
      }
      break;
    }
    case OpKind::Mean:
    case OpKind::Sum: {
      if (!wants(0)) break;
      const Node& a = in(0);
      if (r.attrs.axis == -1) {
        T scale = r.kind == OpKind::Mean ? T(1) / T(a.v.size()) : T(1);
        T g0 = gy[0] * scale;
        T* gx = gbuf(0);
        for (int64_t i = 0; i < int64_t(a.v.size()); ++i) gx[i] += g0;
      } else {
        auto g = red_geom(a.shape, r.attrs.axis);
        T scale = r.kind == OpKind::Mean ? T(1) / T(g.red) : T(1);
        KCALL(axis_sum_bwd, gbuf(0), gy, g.outer, g.red, g.inner, scale);
      }
      break;
    }
    case OpKind::L2Normalize: {
      if (!wants(0)) break;
      auto g = red_geom(in(0).shape, r.attrs.axis);
      KCALL(l2_normalize_bwd, gbuf(0), gy, in(0).v.data(), r.saved.data(), g.outer, g.red,
            g.inner, T(1e-8));
      break;
    }
    case OpKind::Transpose: {
      if (!wants(0)) break;
      const Shape& s_in = in(0).shape;
      int rank = int(s_in.size());
      // inverse permutation: out grad permuted back onto the input layout
      std::vector<int> inv(rank);
      for (int a = 0; a < rank; ++a) inv[r.attrs.dims[a]] = a;
      std::vector<int64_t> gy_strides(rank, 1), in_dims(rank), strides_for_in(rank);
      for (int a = rank - 2; a >= 0; --a) gy_strides[a] = gy_strides[a + 1] * out.shape[a + 1];
      for (int a = 0; a < rank; ++a) {
        in_dims[a] = s_in[a];
        strides_for_in[a] = gy_strides[inv[a]];
      }
      std::vector<T> tmp(in(0).v.size());
      KCALL(permute_copy, gy, tmp.data(), in_dims.data(), strides_for_in.data(), rank, n);
      KCALL(acc, gbuf(0), tmp.data(), n);
      break;
    }
    case OpKind::Reshape:
      if (wants(0)) KCALL(acc, gbuf(0), gy, n);
      break;
    case OpKind::ScaledDotAttention: {
      int nq = in(0).shape[0], nk = in(1).shape[0], dim = in(0).shape[1];
      std::vector<T> sq, sk, sv;
      T* gq = wants(0) ? gbuf(0) : (sq.assign(in(0).v.size(), T(0)), sq.data());
      T* gk = wants(1) ? gbuf(1) : (sk.assign(in(1).v.size(), T(0)), sk.data());
      T* gv = wants(2) ? gbuf(2) : (sv.assign(in(2).v.size(), T(0)), sv.data());
      KCALL(attention_bwd, gq, gk, gv, gy, in(0).v.data(), in(1).v.data(), in(2).v.data(),
            r.saved.data(), r.attrs.heads, nq, nk, dim);
      break;
    }
    case OpKind::BiasAdd: {
      int cols = in(0).shape.back();
      int rows = int(in(0).v.size() / cols);
      if (wants(0)) KCALL(acc, gbuf(0), gy, n);
      if (wants(1)) KCALL(bias_add_bwd_b, gbuf(1), gy, rows, cols);
      break;
    }
  }
}

template <class T>
int64_t Graph<T>::replay_check() {
  int64_t mismatches = 0;
  for (auto& r : tape_) {
    Node& out = nodes_[r.out];
    std::vector<T> before = out.v;
    std::vector<T> saved_before = r.saved;
    forward_record(r);
    for (size_t i = 0; i < before.size(); ++i)
      if (std::memcmp(&before[i], &out.v[i], sizeof(T)) != 0) ++mismatches;
    r.saved = std::move(saved_before);
  }
  return mismatches;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace stlm
