#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stlm/kernels.hpp"

namespace stlm {

enum class OpKind {
  Add, Sub, Mul, Div,
  Matmul, Conv2d, LayerNorm, Softmax,
  Gelu, Relu, Sigmoid,
  BilinearResize, Concat, Mean, Sum,
  L2Normalize, Transpose, Reshape, ScaledDotAttention,
  BiasAdd, Log, Sqrt, Abs, PowScalar,
};

const char* op_name(OpKind k);

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

// Per-op attributes saved on the tape.
struct Attrs {
  int axis = -1;  // reduction / concat / normalize axis; -1 = all elements
  int stride = 1, pad = 0, dilation = 1;
  int heads = 1;
  int out_h = 0, out_w = 0;
  double scalar = 0.0;  // pow exponent
  std::vector<int> dims;  // transpose permutation / reshape target
};

template <class T>
class Graph;

// Lightweight handle into a Graph node.
template <class T>
struct Tensor {
  Graph<T>* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Shape& shape() const;
  int64_t numel() const;
  std::span<const T> values() const;
  std::span<T> mutable_values();
  std::span<const T> grad() const;
  bool requires_grad() const;
  T item() const;
};

// Reverse-mode autodiff over a flat tape. Nodes are immutable after their
// forward computation except for gradient accumulation; one Graph belongs to
// one logical thread.
template <class T>
class Graph {
 public:
  struct Node {
    Shape shape;
    std::vector<T> v;
    std::vector<T> g;  // allocated lazily during backward
    bool requires_grad = false;
  };
  struct Record {
    OpKind kind;
    std::vector<int> in;
    int out = -1;
    Attrs attrs;
    std::vector<T> saved;  // op workspace (softmax probs, LN stats, ...)
    bool grad_needed = false;
  };

  Tensor<T> constant(Shape shape, std::vector<T> values) {
    return make_leaf(std::move(shape), std::move(values), false);
  }
  Tensor<T> variable(Shape shape, std::vector<T> values) {
    return make_leaf(std::move(shape), std::move(values), true);
  }
  Tensor<T> leaf(Shape shape, std::vector<T> values, bool requires_grad) {
    return make_leaf(std::move(shape), std::move(values), requires_grad);
  }
  Tensor<T> full(Shape shape, T value, bool requires_grad = false) {
    std::vector<T> v(shape_numel(shape), value);
    return make_leaf(std::move(shape), std::move(v), requires_grad);
  }
  Tensor<T> scalar(T value, bool requires_grad = false) {
    return make_leaf({1}, {value}, requires_grad);
  }

  Tensor<T> apply(OpKind kind, const std::vector<int>& inputs, Attrs attrs = {});

  void backward(int loss_id);
  void backward(const Tensor<T>& loss) { backward(loss.id); }

  // Recomputes every recorded forward in tape order; returns the number of
  // elements that changed bitwise (0 in deterministic mode).
  int64_t replay_check();

  const Node& node(int id) const {
    check_id(id);
    return nodes_[id];
  }
  Node& node(int id) {
    check_id(id);
    return nodes_[id];
  }
  std::span<const T> grad(int id) {
    check_id(id);
    auto& n = nodes_[id];
    if (n.g.empty()) n.g.assign(n.v.size(), T(0));
    return n.g;
  }

  size_t num_nodes() const { return nodes_.size(); }
  const std::vector<Record>& tape() const { return tape_; }

  // Mutation hook for gradient-checker self-tests: scales the upstream
  // gradient of every op of `kind` by (1 + eps) during backward.
  void inject_backward_fault(OpKind kind, double eps) {
    fault_armed_ = true;
    fault_kind_ = kind;
    fault_eps_ = eps;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<Record> tape_;
  bool fault_armed_ = false;
  OpKind fault_kind_ = OpKind::Add;
  double fault_eps_ = 0.0;

  void check_id(int id) const {
    if (id < 0 || size_t(id) >= nodes_.size())
      throw ShapeError("node " + std::to_string(id) + " outside tape");
  }

  Tensor<T> make_leaf(Shape shape, std::vector<T> values, bool requires_grad) {
    if (int64_t(values.size()) != shape_numel(shape))
      throw ShapeError("leaf: " + std::to_string(values.size()) + " values for shape " +
                       shape_str(shape));
    nodes_.push_back(Node{std::move(shape), std::move(values), {}, requires_grad});
    return Tensor<T>{this, int(nodes_.size() - 1)};
  }

  void forward_record(Record& r);
  void backward_record(const Record& r);
  std::vector<T>& grad_buf(int id) {
    auto& n = nodes_[id];
    if (n.g.empty()) n.g.assign(n.v.size(), T(0));
    return n.g;
  }
};

// ---- convenience wrappers ----------------------------------------------

template <class T>
const Shape& Tensor<T>::shape() const { return graph->node(id).shape; }
template <class T>
int64_t Tensor<T>::numel() const { return int64_t(graph->node(id).v.size()); }
template <class T>
std::span<const T> Tensor<T>::values() const { return graph->node(id).v; }
template <class T>
std::span<T> Tensor<T>::mutable_values() { return graph->node(id).v; }
template <class T>
std::span<const T> Tensor<T>::grad() const { return graph->grad(id); }
template <class T>
bool Tensor<T>::requires_grad() const { return graph->node(id).requires_grad; }
template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item: tensor " + shape_str(shape()) + " is not scalar");
  return graph->node(id).v[0];
}

template <class T>
Tensor<T> add(Tensor<T> a, Tensor<T> b) { return a.graph->apply(OpKind::Add, {a.id, b.id}); }
template <class T>
Tensor<T> sub(Tensor<T> a, Tensor<T> b) { return a.graph->apply(OpKind::Sub, {a.id, b.id}); }
template <class T>
Tensor<T> mul(Tensor<T> a, Tensor<T> b) { return a.graph->apply(OpKind::Mul, {a.id, b.id}); }
template <class T>
Tensor<T> div(Tensor<T> a, Tensor<T> b) { return a.graph->apply(OpKind::Div, {a.id, b.id}); }
template <class T>
Tensor<T> matmul(Tensor<T> a, Tensor<T> b) {
  return a.graph->apply(OpKind::Matmul, {a.id, b.id});
}
template <class T>
Tensor<T> conv2d(Tensor<T> x, Tensor<T> w, Tensor<T> bias, int stride = 1, int pad = 0,
                 int dilation = 1) {
  Attrs at;
  at.stride = stride;
  at.pad = pad;
  at.dilation = dilation;
  return x.graph->apply(OpKind::Conv2d, {x.id, w.id, bias.id}, at);
}
template <class T>
Tensor<T> layer_norm(Tensor<T> x, Tensor<T> gamma, Tensor<T> beta) {
  return x.graph->apply(OpKind::LayerNorm, {x.id, gamma.id, beta.id});
}
template <class T>
Tensor<T> softmax(Tensor<T> x) { return x.graph->apply(OpKind::Softmax, {x.id}); }
template <class T>
Tensor<T> gelu(Tensor<T> x) { return x.graph->apply(OpKind::Gelu, {x.id}); }
template <class T>
Tensor<T> relu(Tensor<T> x) { return x.graph->apply(OpKind::Relu, {x.id}); }
template <class T>
Tensor<T> sigmoid(Tensor<T> x) { return x.graph->apply(OpKind::Sigmoid, {x.id}); }
template <class T>
Tensor<T> bilinear_resize(Tensor<T> x, int out_h, int out_w) {
  Attrs at;
  at.out_h = out_h;
  at.out_w = out_w;
  return x.graph->apply(OpKind::BilinearResize, {x.id}, at);
}
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
  std::vector<int> ids;
  for (auto& x : xs) ids.push_back(x.id);
  Attrs at;
  at.axis = axis;
  return xs.at(0).graph->apply(OpKind::Concat, ids, at);
}
template <class T>
Tensor<T> mean_all(Tensor<T> x) { return x.graph->apply(OpKind::Mean, {x.id}); }
template <class T>
Tensor<T> sum_all(Tensor<T> x) { return x.graph->apply(OpKind::Sum, {x.id}); }
template <class T>
Tensor<T> mean_axis(Tensor<T> x, int axis) {
  Attrs at;
  at.axis = axis;
  return x.graph->apply(OpKind::Mean, {x.id}, at);
}
template <class T>
Tensor<T> sum_axis(Tensor<T> x, int axis) {
  Attrs at;
  at.axis = axis;
  return x.graph->apply(OpKind::Sum, {x.id}, at);
}
template <class T>
Tensor<T> l2_normalize(Tensor<T> x, int axis) {
  Attrs at;
  at.axis = axis;
  return x.graph->apply(OpKind::L2Normalize, {x.id}, at);
}
template <class T>
Tensor<T> transpose(Tensor<T> x, std::vector<int> perm) {
  Attrs at;
  at.dims = std::move(perm);
  return x.graph->apply(OpKind::Transpose, {x.id}, at);
}
template <class T>
Tensor<T> reshape(Tensor<T> x, std::vector<int> dims) {
  Attrs at;
  at.dims = std::move(dims);
  return x.graph->apply(OpKind::Reshape, {x.id}, at);
}
template <class T>
Tensor<T> scaled_dot_attention(Tensor<T> q, Tensor<T> k, Tensor<T> v, int heads) {
  Attrs at;
  at.heads = heads;
  return q.graph->apply(OpKind::ScaledDotAttention, {q.id, k.id, v.id}, at);
}
template <class T>
Tensor<T> bias_add(Tensor<T> x, Tensor<T> b) {
  return x.graph->apply(OpKind::BiasAdd, {x.id, b.id});
}
template <class T>
Tensor<T> log(Tensor<T> x) { return x.graph->apply(OpKind::Log, {x.id}); }
template <class T>
Tensor<T> sqrt(Tensor<T> x) { return x.graph->apply(OpKind::Sqrt, {x.id}); }
template <class T>
Tensor<T> abs(Tensor<T> x) { return x.graph->apply(OpKind::Abs, {x.id}); }
template <class T>
Tensor<T> pow_scalar(Tensor<T> x, double c) {
  Attrs at;
  at.scalar = c;
  return x.graph->apply(OpKind::PowScalar, {x.id}, at);
}
template <class T>
Tensor<T> add_scalar(Tensor<T> x, T s) { return add(x, x.graph->scalar(s)); }
template <class T>
Tensor<T> mul_scalar(Tensor<T> x, T s) { return mul(x, x.graph->scalar(s)); }
template <class T>
Tensor<T> rsub_scalar(T s, Tensor<T> x) { return sub(x.graph->scalar(s), x); }

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace stlm
