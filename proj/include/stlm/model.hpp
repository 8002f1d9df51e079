#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stlm/checkpoint.hpp"
#include "stlm/rng.hpp"
#include "stlm/tensor.hpp"

namespace stlm {

enum class Stream { Teacher, Plain, Denoising };
enum class FaInputMode { Product, Cosine, ResidualConcat, Concat };
enum class DistillMode { Feature, Logit };

const char* fa_input_mode_name(FaInputMode m);
FaInputMode fa_input_mode_from_name(const std::string& s);
const char* distill_mode_name(DistillMode m);
DistillMode distill_mode_from_name(const std::string& s);

struct ModelConfig {
  int image_size = 64;
  int image_channels = 3;
  int patch_size = 8;
  int student_dim = 64;
  int teacher_dim = 128;
  int encoder_depth = 4;
  int teacher_depth = 6;
  int heads = 4;
  int decoder_layers = 2;  // fixed per architecture
  int mlp_ratio = 2;
  int fa_channels = 128;
  std::array<int, 3> fa_dilations{1, 1, 3};
  bool shared_decoder = true;
  bool use_plain_stream = true;
  bool use_teacher = true;
  FaInputMode fa_input_mode = FaInputMode::Product;
  DistillMode distill_mode = DistillMode::Feature;
  std::vector<int> layers_used{1, 2};
  int query_tokens = 4;
  bool alt_teacher_assignment = false;  // debug wiring: swap which teacher pass targets which stream

  int grid() const { return image_size / patch_size; }
  int tokens() const { return grid() * grid(); }
  void validate() const;
};

template <class T>
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool trainable = true;

  int64_t numel() const { return int64_t(value.size()); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <class T>
class ParamRegistry {
 public:
  Parameter<T>& create(const std::string& name, Shape shape, bool trainable) {
    auto p = std::make_unique<Parameter<T>>();
    p->name = name;
    p->shape = std::move(shape);
    p->value.assign(size_t(shape_numel(p->shape)), T(0));
    p->grad.assign(p->value.size(), T(0));
    p->trainable = trainable;
    auto* raw = p.get();
    if (!by_name_.emplace(name, raw).second)
      throw std::runtime_error("duplicate parameter name: " + name);
    params_.push_back(std::move(p));
    return *raw;
  }
  Parameter<T>* find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }
  const std::vector<std::unique_ptr<Parameter<T>>>& all() const { return params_; }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, Parameter<T>*> by_name_;
};

// Binds persistent parameters into a per-step graph as leaf nodes, memoized
// so shared weights accumulate gradients through a single node.
template <class T>
class Binder {
 public:
  explicit Binder(Graph<T>& g) : g_(g) {}

  Tensor<T> operator()(Parameter<T>& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return Tensor<T>{&g_, it->second};
    bool rg = p.trainable && !freeze_all_;
    auto over = overrides_.find(p.name);
    Tensor<T> t = over != overrides_.end()
                      ? over->second
                      : g_.leaf(p.shape, p.value, rg);
    bound_.emplace(&p, t.id);
    return t;
  }

  // Replaces a parameter's leaf with an external tensor (gradient checking).
  void set_override(const std::string& name, Tensor<T> t) { overrides_[name] = t; }
  // Treat every parameter as frozen for this graph (two-stage training).
  void freeze_all(bool f) { freeze_all_ = f; }

  void pull_grads() {
    for (auto& [p, id] : bound_) {
      if (!p->trainable) continue;
      auto g = g_.grad(id);
      for (size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
    }
  }

 private:
  Graph<T>& g_;
  std::map<Parameter<T>*, int> bound_;
  std::map<std::string, Tensor<T>> overrides_;
  bool freeze_all_ = false;
};

template <class T>
struct TokenGrid {
  Tensor<T> tokens;  // (gh*gw, dim)
  int gh = 0, gw = 0;
};

template <class T>
struct Pyramid {
  std::array<Tensor<T>, 2> layer;  // token features after decoder block 1 and 2
  int gh = 0, gw = 0;
};

// cosine similarity per token between two (N, D) feature grids -> (N)
template <class T>
Tensor<T> cosine_map(Tensor<T> a, Tensor<T> b) {
  auto num = sum_axis(mul(a, b), 1);
  auto na = stlm::sqrt(sum_axis(mul(a, a), 1));
  auto nb = stlm::sqrt(sum_axis(mul(b, b), 1));
  return div(num, add_scalar(mul(na, nb), T(1e-8)));
}

template <class T>
class Model {
 public:
  Model(ModelConfig cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry<T>& registry() { return reg_; }
  const ParamRegistry<T>& registry() const { return reg_; }

  TokenGrid<T> encode(Graph<T>& g, Binder<T>& b, Stream s, Tensor<T> image) const;
  Pyramid<T> decode(Graph<T>& g, Binder<T>& b, Stream s, const TokenGrid<T>& tokens) const;
  Pyramid<T> forward_stream(Graph<T>& g, Binder<T>& b, Stream s, Tensor<T> image) const;

  // stacked FA input maps (C, gh, gw) per the configured mode
  Tensor<T> fa_input(Graph<T>& g, const Pyramid<T>& plain, const Pyramid<T>& den) const;
  // (H, W) anomaly map in [0,1]
  Tensor<T> fa_forward(Graph<T>& g, Binder<T>& b, Tensor<T> xhat) const;
  // segmentation-style map from one stream, used for logit distillation
  Tensor<T> mask_head(Graph<T>& g, Binder<T>& b, Stream s, const Pyramid<T>& pyr) const;

  // full inference path: students -> decoder -> FA. Never touches teacher
  // parameters unless the plain stream is ablated away.
  Tensor<T> infer_map(Graph<T>& g, Binder<T>& b, Tensor<T> image) const;

  int64_t param_count(bool trainable_only) const;
  uint64_t checksum(std::string_view prefix) const;

  std::vector<NamedTensor> export_params() const;
  // Missing teacher-side tensors are tolerated when `inference_only`; any
  // other missing tensor is an error naming it.
  void import_params(const std::vector<NamedTensor>& tensors, bool inference_only);
  bool needs_teacher_at_inference() const { return !cfg_.use_plain_stream; }

  std::vector<Parameter<T>*> tlm_params() const;  // encoders + decoder + projection (+ mask heads)
  std::vector<Parameter<T>*> fa_params() const;

 private:
  struct Block {
    Parameter<T>*ln1_g, *ln1_b, *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
    Parameter<T>*ln2_g, *ln2_b, *w1, *b1, *w2, *b2;
  };
  struct Encoder {
    int dim = 0, depth = 0;
    Parameter<T>*patch_w, *patch_b, *pos;
    std::vector<Block> blocks;
    Parameter<T>*lnf_g, *lnf_b;
  };
  struct CrossAttn {
    Parameter<T>*lnq_g, *lnq_b, *lnx_g, *lnx_b;
    Parameter<T>*wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
  };
  struct TwoWayBlock {
    CrossAttn q_to_img;  // queries attend to image tokens
    CrossAttn img_to_q;  // image tokens attend back to queries
  };
  struct Decoder {
    Parameter<T>* queries;
    std::array<TwoWayBlock, 2> blocks;
  };
  struct ConvP {
    Parameter<T>*w, *b;
  };
  struct FaHead {
    ConvP res1_c1, res1_c2, res1_skip, res2_c1, res2_c2;
    Parameter<T>*res1_n1_g, *res1_n1_b, *res1_n2_g, *res1_n2_b;
    Parameter<T>*res2_n1_g, *res2_n1_b, *res2_n2_g, *res2_n2_b;
    std::array<ConvP, 3> aspp;
    ConvP fuse, head;
  };

  ModelConfig cfg_;
  ParamRegistry<T> reg_;
  Encoder teacher_, plain_, denoise_;
  Parameter<T>*tproj_w_ = nullptr, *tproj_b_ = nullptr;
  Decoder teacher_dec_, dec_, dec_plain_, dec_den_;
  FaHead fa_;
  Parameter<T>*mh_teacher_w_ = nullptr, *mh_teacher_b_ = nullptr;
  Parameter<T>*mh_plain_w_ = nullptr, *mh_plain_b_ = nullptr;
  Parameter<T>*mh_den_w_ = nullptr, *mh_den_b_ = nullptr;

  Encoder make_encoder(const std::string& prefix, int in_ch, int dim, int depth,
                       bool trainable);
  Decoder make_decoder(const std::string& prefix, bool trainable);
  void init_weights(uint64_t seed);

  Tensor<T> encoder_forward(Graph<T>& g, Binder<T>& b, const Encoder& e,
                            Tensor<T> image) const;
  Tensor<T> cross_attn(Graph<T>& g, Binder<T>& b, const CrossAttn& ca, Tensor<T> q,
                       Tensor<T> kv) const;
  Pyramid<T> decoder_forward(Graph<T>& g, Binder<T>& b, const Decoder& d,
                             Tensor<T> tokens) const;
  Tensor<T> chan_norm(Graph<T>& g, Binder<T>& b, Tensor<T> x, Parameter<T>* gamma,
                      Parameter<T>* beta) const;
  Tensor<T> maps_from_tokens(Graph<T>& g, Tensor<T> tokens, int gh, int gw) const;
  int fa_in_channels() const;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace stlm
