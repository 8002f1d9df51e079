#include "stlm/model.hpp"

#include <cmath>
#include <cstring>
#include <set>

namespace stlm {

const char* fa_input_mode_name(FaInputMode m) {
  switch (m) {
    case FaInputMode::Product: return "product";
    case FaInputMode::Cosine: return "cosine";
    case FaInputMode::ResidualConcat: return "residual_concat";
    default: return "concat";
  }
}

FaInputMode fa_input_mode_from_name(const std::string& s) {
  if (s == "product") return FaInputMode::Product;
  if (s == "cosine") return FaInputMode::Cosine;
  if (s == "residual_concat") return FaInputMode::ResidualConcat;
  if (s == "concat") return FaInputMode::Concat;
  throw std::invalid_argument("unknown fa_input_mode: " + s);
}

const char* distill_mode_name(DistillMode m) {
  return m == DistillMode::Feature ? "feature" : "logit";
}

DistillMode distill_mode_from_name(const std::string& s) {
  if (s == "feature") return DistillMode::Feature;
  if (s == "logit") return DistillMode::Logit;
  throw std::invalid_argument("unknown distill_mode: " + s);
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (decoder_layers != 2) fail("decoder_layers must be 2");
  if (image_size < 8 || patch_size < 1 || image_size % patch_size != 0)
    fail("patch_size must divide image_size");
  if (image_channels != 1 && image_channels != 3) fail("image_channels must be 1 or 3");
  if (teacher_dim < student_dim) fail("teacher_dim must be >= student_dim");
  if (student_dim % heads != 0 || teacher_dim % heads != 0)
    fail("heads must divide student_dim and teacher_dim");
  for (int d : fa_dilations)
    if (d < 1) fail("fa_dilations entries must be >= 1");
  if (layers_used.empty()) fail("layers_used must be nonempty");
  for (int l : layers_used)
    if (l != 1 && l != 2) fail("layers_used entries must be 1 or 2");
  if (std::set<int>(layers_used.begin(), layers_used.end()).size() != layers_used.size())
    fail("layers_used entries must be distinct");
  if (query_tokens < 1) fail("query_tokens must be >= 1");
  if (encoder_depth < 1 || teacher_depth < 1) fail("encoder depths must be >= 1");
  if (fa_channels < 1) fail("fa_channels must be >= 1");
  if (!use_teacher && distill_mode == DistillMode::Logit)
    fail("logit distillation requires the teacher");
  if (!use_plain_stream && !use_teacher)
    fail("disabling the plain stream requires the teacher to stand in for it");
}

template <class T>
typename Model<T>::Encoder Model<T>::make_encoder(const std::string& prefix, int in_ch,
                                                  int dim, int depth, bool trainable) {
  Encoder e;
  e.dim = dim;
  e.depth = depth;
  const int ps = cfg_.patch_size;
  e.patch_w = &reg_.create(prefix + ".patch.w", {dim, in_ch, ps, ps}, trainable);
  e.patch_b = &reg_.create(prefix + ".patch.b", {dim}, trainable);
  e.pos = &reg_.create(prefix + ".pos", {cfg_.tokens(), dim}, trainable);
  const int hidden = dim * cfg_.mlp_ratio;
  for (int i = 0; i < depth; ++i) {
    std::string bp = prefix + ".b" + std::to_string(i);
    Block b;
    b.ln1_g = &reg_.create(bp + ".ln1.g", {dim}, trainable);
    b.ln1_b = &reg_.create(bp + ".ln1.b", {dim}, trainable);
    b.wq = &reg_.create(bp + ".attn.wq", {dim, dim}, trainable);
    b.bq = &reg_.create(bp + ".attn.bq", {dim}, trainable);
    b.wk = &reg_.create(bp + ".attn.wk", {dim, dim}, trainable);
    b.bk = &reg_.create(bp + ".attn.bk", {dim}, trainable);
    b.wv = &reg_.create(bp + ".attn.wv", {dim, dim}, trainable);
    b.bv = &reg_.create(bp + ".attn.bv", {dim}, trainable);
    b.wo = &reg_.create(bp + ".attn.wo", {dim, dim}, trainable);
    b.bo = &reg_.create(bp + ".attn.bo", {dim}, trainable);
    b.ln2_g = &reg_.create(bp + ".ln2.g", {dim}, trainable);
    b.ln2_b = &reg_.create(bp + ".ln2.b", {dim}, trainable);
    b.w1 = &reg_.create(bp + ".mlp.w1", {dim, hidden}, trainable);
    b.b1 = &reg_.create(bp + ".mlp.b1", {hidden}, trainable);
    b.w2 = &reg_.create(bp + ".mlp.w2", {hidden, dim}, trainable);
    b.b2 = &reg_.create(bp + ".mlp.b2", {dim}, trainable);
    e.blocks.push_back(b);
  }
  e.lnf_g = &reg_.create(prefix + ".lnf.g", {dim}, trainable);
  e.lnf_b = &reg_.create(prefix + ".lnf.b", {dim}, trainable);
  return e;
}

template <class T>
typename Model<T>::Decoder Model<T>::make_decoder(const std::string& prefix, bool trainable) {
  Decoder d;
  const int dim = cfg_.student_dim;
  d.queries = &reg_.create(prefix + ".queries", {cfg_.query_tokens, dim}, trainable);
  for (int i = 0; i < 2; ++i) {
    std::string bp = prefix + ".b" + std::to_string(i);
    auto mk_cross = [&](const std::string& cp) {
      CrossAttn ca;
      ca.lnq_g = &reg_.create(cp + ".lnq.g", {dim}, trainable);
      ca.lnq_b = &reg_.create(cp + ".lnq.b", {dim}, trainable);
      ca.lnx_g = &reg_.create(cp + ".lnx.g", {dim}, trainable);
      ca.lnx_b = &reg_.create(cp + ".lnx.b", {dim}, trainable);
      ca.wq = &reg_.create(cp + ".wq", {dim, dim}, trainable);
      ca.bq = &reg_.create(cp + ".bq", {dim}, trainable);
      ca.wk = &reg_.create(cp + ".wk", {dim, dim}, trainable);
      ca.bk = &reg_.create(cp + ".bk", {dim}, trainable);
      ca.wv = &reg_.create(cp + ".wv", {dim, dim}, trainable);
      ca.bv = &reg_.create(cp + ".bv", {dim}, trainable);
      ca.wo = &reg_.create(cp + ".wo", {dim, dim}, trainable);
      ca.bo = &reg_.create(cp + ".bo", {dim}, trainable);
      return ca;
    };
    d.blocks[i].q_to_img = mk_cross(bp + ".q2i");
    d.blocks[i].img_to_q = mk_cross(bp + ".i2q");
  }
  return d;
}

template <class T>
Model<T>::Model(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int cs = cfg_.image_channels;

  if (cfg_.use_teacher) {
    teacher_ = make_encoder("teacher.enc", cs, cfg_.teacher_dim, cfg_.teacher_depth, false);
    // frozen: a trainable projection would let the distillation targets
    // drift toward the students and collapse the cosine losses
    tproj_w_ = &reg_.create("tproj.w", {cfg_.teacher_dim, cfg_.student_dim}, false);
    tproj_b_ = &reg_.create("tproj.b", {cfg_.student_dim}, false);
    teacher_dec_ = make_decoder("teacher.dec", false);
  }
  if (cfg_.use_plain_stream)
    plain_ = make_encoder("plain.enc", cs, cfg_.student_dim, cfg_.encoder_depth, true);
  denoise_ = make_encoder("denoise.enc", cs, cfg_.student_dim, cfg_.encoder_depth, true);

  if (cfg_.shared_decoder) {
    dec_ = make_decoder("decoder", true);
  } else {
    if (cfg_.use_plain_stream) dec_plain_ = make_decoder("decoder_p", true);
    dec_den_ = make_decoder("decoder_d", true);
  }

  const int fin = fa_in_channels(), F = cfg_.fa_channels;
  fa_.res1_c1 = {&reg_.create("fa.res1.c1.w", {F, fin, 3, 3}, true),
                 &reg_.create("fa.res1.c1.b", {F}, true)};
  fa_.res1_n1_g = &reg_.create("fa.res1.n1.g", {F}, true);
  fa_.res1_n1_b = &reg_.create("fa.res1.n1.b", {F}, true);
  fa_.res1_c2 = {&reg_.create("fa.res1.c2.w", {F, F, 3, 3}, true),
                 &reg_.create("fa.res1.c2.b", {F}, true)};
  fa_.res1_n2_g = &reg_.create("fa.res1.n2.g", {F}, true);
  fa_.res1_n2_b = &reg_.create("fa.res1.n2.b", {F}, true);
  fa_.res1_skip = {&reg_.create("fa.res1.skip.w", {F, fin, 1, 1}, true),
                   &reg_.create("fa.res1.skip.b", {F}, true)};
  fa_.res2_c1 = {&reg_.create("fa.res2.c1.w", {F, F, 3, 3}, true),
                 &reg_.create("fa.res2.c1.b", {F}, true)};
  fa_.res2_n1_g = &reg_.create("fa.res2.n1.g", {F}, true);
  fa_.res2_n1_b = &reg_.create("fa.res2.n1.b", {F}, true);
  fa_.res2_c2 = {&reg_.create("fa.res2.c2.w", {F, F, 3, 3}, true),
                 &reg_.create("fa.res2.c2.b", {F}, true)};
  fa_.res2_n2_g = &reg_.create("fa.res2.n2.g", {F}, true);
  fa_.res2_n2_b = &reg_.create("fa.res2.n2.b", {F}, true);
  for (int i = 0; i < 3; ++i)
    fa_.aspp[i] = {&reg_.create("fa.aspp" + std::to_string(i) + ".w", {F, F, 3, 3}, true),
                   &reg_.create("fa.aspp" + std::to_string(i) + ".b", {F}, true)};
  fa_.fuse = {&reg_.create("fa.fuse.w", {F, 3 * F, 1, 1}, true),
              &reg_.create("fa.fuse.b", {F}, true)};
  fa_.head = {&reg_.create("fa.head.w", {1, F, 1, 1}, true),
              &reg_.create("fa.head.b", {1}, true)};

  if (cfg_.distill_mode == DistillMode::Logit) {
    const int D = cfg_.student_dim;
    mh_teacher_w_ = &reg_.create("maskhead.teacher.w", {D, 1}, false);
    mh_teacher_b_ = &reg_.create("maskhead.teacher.b", {1}, false);
    if (cfg_.use_plain_stream) {
      mh_plain_w_ = &reg_.create("maskhead.plain.w", {D, 1}, true);
      mh_plain_b_ = &reg_.create("maskhead.plain.b", {1}, true);
    }
    mh_den_w_ = &reg_.create("maskhead.denoise.w", {D, 1}, true);
    mh_den_b_ = &reg_.create("maskhead.denoise.b", {1}, true);
  }

  init_weights(seed);
}

template <class T>
void Model<T>::init_weights(uint64_t seed) {
  for (const auto& p : reg_.all()) {
    Rng rng = Rng::for_name(seed, p->name);
    const std::string& n = p->name;
    auto ends_with = [&](const char* suf) {
      size_t l = std::strlen(suf);
      return n.size() >= l && n.compare(n.size() - l, l, suf) == 0;
    };
    if (ends_with(".g")) {
      std::fill(p->value.begin(), p->value.end(), T(1));
    } else if (ends_with(".b") || ends_with(".bq") || ends_with(".bk") || ends_with(".bv") ||
               ends_with(".bo") || ends_with(".b1") || ends_with(".b2")) {
      std::fill(p->value.begin(), p->value.end(), T(0));
    } else if (ends_with(".patch.w")) {
      // zero-mean filters: the patch DC component would otherwise dominate
      // every token and flatten the cosine maps
      for (auto& v : p->value) v = T(rng.normal(0.0, 0.02));
      int64_t fan_in = 1;
      for (size_t i = 1; i < p->shape.size(); ++i) fan_in *= p->shape[i];
      for (int64_t f = 0; f < p->shape[0]; ++f) {
        T mean = T(0);
        for (int64_t i = 0; i < fan_in; ++i) mean += p->value[size_t(f * fan_in + i)];
        mean /= T(fan_in);
        for (int64_t i = 0; i < fan_in; ++i) p->value[size_t(f * fan_in + i)] -= mean;
      }
    } else if (n.rfind("fa.", 0) == 0) {
      // conv weights: kaiming normal over fan-in
      int64_t fan_in = 1;
      for (size_t i = 1; i < p->shape.size(); ++i) fan_in *= p->shape[i];
      double std = std::sqrt(2.0 / double(fan_in));
      for (auto& v : p->value) v = T(rng.normal(0.0, std));
    } else if (n.rfind("teacher.", 0) == 0 && (ends_with(".wq") || ends_with(".wk"))) {
      // sharper frozen-teacher attention: near-zero logits would mix a
      // uniform token average into every target and smear the contrast
      // between clean and corrupted passes
      for (auto& v : p->value) v = T(rng.normal(0.0, 0.2));
    } else {
      for (auto& v : p->value) v = T(rng.normal(0.0, 0.02));
    }
  }
}

template <class T>
Tensor<T> Model<T>::encoder_forward(Graph<T>& g, Binder<T>& b, const Encoder& e,
                                    Tensor<T> image) const {
  const int H = cfg_.image_size, C = cfg_.image_channels, ps = cfg_.patch_size;
  auto x4 = reshape(image, {1, C, H, H});
  auto emb = conv2d(x4, b(*e.patch_w), b(*e.patch_b), ps, 0, 1);  // (1, dim, gh, gw)
  auto tok = transpose(reshape(emb, {e.dim, cfg_.tokens()}), {1, 0});  // (N, dim)
  tok = add(tok, b(*e.pos));
  for (const auto& blk : e.blocks) {
    auto h = layer_norm(tok, b(*blk.ln1_g), b(*blk.ln1_b));
    auto q = bias_add(matmul(h, b(*blk.wq)), b(*blk.bq));
    auto k = bias_add(matmul(h, b(*blk.wk)), b(*blk.bk));
    auto v = bias_add(matmul(h, b(*blk.wv)), b(*blk.bv));
    auto att = scaled_dot_attention(q, k, v, cfg_.heads);
    tok = add(tok, bias_add(matmul(att, b(*blk.wo)), b(*blk.bo)));
    auto h2 = layer_norm(tok, b(*blk.ln2_g), b(*blk.ln2_b));
    auto m = bias_add(matmul(gelu(bias_add(matmul(h2, b(*blk.w1)), b(*blk.b1))), b(*blk.w2)),
                      b(*blk.b2));
    tok = add(tok, m);
  }
  return layer_norm(tok, b(*e.lnf_g), b(*e.lnf_b));
}

template <class T>
TokenGrid<T> Model<T>::encode(Graph<T>& g, Binder<T>& b, Stream s, Tensor<T> image) const {
  TokenGrid<T> out;
  out.gh = out.gw = cfg_.grid();
  switch (s) {
    case Stream::Teacher: {
      auto t = encoder_forward(g, b, teacher_, image);
      out.tokens = bias_add(matmul(t, b(*tproj_w_)), b(*tproj_b_));
      break;
    }
    case Stream::Plain:
      out.tokens = encoder_forward(g, b, plain_, image);
      break;
    case Stream::Denoising:
      out.tokens = encoder_forward(g, b, denoise_, image);
      break;
  }
  return out;
}

template <class T>
Tensor<T> Model<T>::cross_attn(Graph<T>& g, Binder<T>& b, const CrossAttn& ca, Tensor<T> q,
                               Tensor<T> kv) const {
  auto qn = layer_norm(q, b(*ca.lnq_g), b(*ca.lnq_b));
  auto kn = layer_norm(kv, b(*ca.lnx_g), b(*ca.lnx_b));
  auto qq = bias_add(matmul(qn, b(*ca.wq)), b(*ca.bq));
  auto kk = bias_add(matmul(kn, b(*ca.wk)), b(*ca.bk));
  auto vv = bias_add(matmul(kn, b(*ca.wv)), b(*ca.bv));
  auto att = scaled_dot_attention(qq, kk, vv, cfg_.heads);
  return bias_add(matmul(att, b(*ca.wo)), b(*ca.bo));
}

template <class T>
Pyramid<T> Model<T>::decoder_forward(Graph<T>& g, Binder<T>& b, const Decoder& d,
                                     Tensor<T> tokens) const {
  Pyramid<T> pyr;
  pyr.gh = pyr.gw = cfg_.grid();
  auto q = b(*d.queries);
  auto x = tokens;
  for (int i = 0; i < 2; ++i) {
    q = add(q, cross_attn(g, b, d.blocks[i].q_to_img, q, x));
    x = add(x, cross_attn(g, b, d.blocks[i].img_to_q, x, q));
    pyr.layer[i] = x;
  }
  return pyr;
}

template <class T>
Pyramid<T> Model<T>::decode(Graph<T>& g, Binder<T>& b, Stream s,
                            const TokenGrid<T>& tokens) const {
  const Decoder* d = nullptr;
  if (s == Stream::Teacher)
    d = &teacher_dec_;
  else if (cfg_.shared_decoder)
    d = &dec_;
  else
    d = s == Stream::Plain ? &dec_plain_ : &dec_den_;
  return decoder_forward(g, b, *d, tokens.tokens);
}

template <class T>
Pyramid<T> Model<T>::forward_stream(Graph<T>& g, Binder<T>& b, Stream s,
                                    Tensor<T> image) const {
  return decode(g, b, s, encode(g, b, s, image));
}

template <class T>
Tensor<T> Model<T>::maps_from_tokens(Graph<T>& g, Tensor<T> tokens, int gh, int gw) const {
  int dim = tokens.shape()[1];
  return reshape(transpose(tokens, {1, 0}), {dim, gh, gw});
}

template <class T>
int Model<T>::fa_in_channels() const {
  int L = int(cfg_.layers_used.size());
  switch (cfg_.fa_input_mode) {
    case FaInputMode::Product:
    case FaInputMode::Cosine: return L;
    case FaInputMode::ResidualConcat: return L * (cfg_.student_dim + 1);
    default: return L * 2 * cfg_.student_dim;
  }
}

template <class T>
Tensor<T> Model<T>::fa_input(Graph<T>& g, const Pyramid<T>& plain,
                             const Pyramid<T>& den) const {
  std::vector<Tensor<T>> maps;
  const int gh = plain.gh, gw = plain.gw;
  for (int l : cfg_.layers_used) {
    auto sp = plain.layer[l - 1];
    auto sd = den.layer[l - 1];
    Tensor<T> m;
    switch (cfg_.fa_input_mode) {
      case FaInputMode::Product:
        m = reshape(cosine_map(sp, sd), {1, gh, gw});
        break;
      case FaInputMode::Cosine:
        m = reshape(rsub_scalar(T(1), cosine_map(sp, sd)), {1, gh, gw});
        break;
      case FaInputMode::ResidualConcat: {
        auto d = sub(sp, sd);
        auto dist = reshape(stlm::sqrt(add_scalar(sum_axis(mul(d, d), 1), T(1e-12))),
                            {1, gh, gw});
        m = concat<T>({dist, maps_from_tokens(g, sp, gh, gw)}, 0);
        break;
      }
      default:
        m = concat<T>({maps_from_tokens(g, sp, gh, gw), maps_from_tokens(g, sd, gh, gw)}, 0);
        break;
    }
    // cross-layer alignment to the first selected layer's resolution
    if (m.shape()[1] != gh || m.shape()[2] != gw) m = bilinear_resize(m, gh, gw);
    maps.push_back(m);
  }
  return maps.size() == 1 ? maps[0] : concat(maps, 0);
}

template <class T>
Tensor<T> Model<T>::chan_norm(Graph<T>& g, Binder<T>& b, Tensor<T> x, Parameter<T>* gamma,
                              Parameter<T>* beta) const {
  const Shape s = x.shape();  // copy: adding nodes may reallocate node storage
  int C = s[1], hw = s[2] * s[3];
  auto t = transpose(reshape(x, {C, hw}), {1, 0});
  t = layer_norm(t, b(*gamma), b(*beta));
  return reshape(transpose(t, {1, 0}), {1, C, s[2], s[3]});
}

template <class T>
Tensor<T> Model<T>::fa_forward(Graph<T>& g, Binder<T>& b, Tensor<T> xhat) const {
  const Shape s = xhat.shape();  // (C, gh, gw)
  const int gh = s[1], gw = s[2];
  auto x = reshape(xhat, {1, s[0], gh, gw});

  auto y = conv2d(x, b(*fa_.res1_c1.w), b(*fa_.res1_c1.b), 1, 1, 1);
  y = relu(chan_norm(g, b, y, fa_.res1_n1_g, fa_.res1_n1_b));
  y = conv2d(y, b(*fa_.res1_c2.w), b(*fa_.res1_c2.b), 1, 1, 1);
  y = chan_norm(g, b, y, fa_.res1_n2_g, fa_.res1_n2_b);
  auto skip = conv2d(x, b(*fa_.res1_skip.w), b(*fa_.res1_skip.b), 1, 0, 1);
  auto r1 = relu(add(y, skip));

  auto y2 = conv2d(r1, b(*fa_.res2_c1.w), b(*fa_.res2_c1.b), 1, 1, 1);
  y2 = relu(chan_norm(g, b, y2, fa_.res2_n1_g, fa_.res2_n1_b));
  y2 = conv2d(y2, b(*fa_.res2_c2.w), b(*fa_.res2_c2.b), 1, 1, 1);
  y2 = chan_norm(g, b, y2, fa_.res2_n2_g, fa_.res2_n2_b);
  auto r2 = relu(add(y2, r1));

  std::vector<Tensor<T>> branches;
  for (int i = 0; i < 3; ++i) {
    int dil = cfg_.fa_dilations[i];
    branches.push_back(
        relu(conv2d(r2, b(*fa_.aspp[i].w), b(*fa_.aspp[i].b), 1, dil, dil)));
  }
  auto pyr = concat(branches, 1);
  auto fused = relu(conv2d(pyr, b(*fa_.fuse.w), b(*fa_.fuse.b), 1, 0, 1));
  auto logits = conv2d(fused, b(*fa_.head.w), b(*fa_.head.b), 1, 0, 1);  // (1,1,gh,gw)
  auto prob = sigmoid(reshape(logits, {1, gh, gw}));
  auto up = bilinear_resize(prob, cfg_.image_size, cfg_.image_size);
  return reshape(up, {cfg_.image_size, cfg_.image_size});
}

template <class T>
Tensor<T> Model<T>::mask_head(Graph<T>& g, Binder<T>& b, Stream s,
                              const Pyramid<T>& pyr) const {
  Parameter<T>*w = nullptr, *bb = nullptr;
  if (s == Stream::Teacher) {
    w = mh_teacher_w_;
    bb = mh_teacher_b_;
  } else if (s == Stream::Plain) {
    w = mh_plain_w_;
    bb = mh_plain_b_;
  } else {
    w = mh_den_w_;
    bb = mh_den_b_;
  }
  if (!w) throw std::runtime_error("mask head requested outside logit mode");
  auto logits = sigmoid(bias_add(matmul(pyr.layer[1], b(*w)), b(*bb)));  // (N, 1)
  auto m = reshape(logits, {1, pyr.gh, pyr.gw});
  return reshape(bilinear_resize(m, cfg_.image_size, cfg_.image_size),
                 {cfg_.image_size, cfg_.image_size});
}

template <class T>
Tensor<T> Model<T>::infer_map(Graph<T>& g, Binder<T>& b, Tensor<T> image) const {
  Pyramid<T> sp = cfg_.use_plain_stream ? forward_stream(g, b, Stream::Plain, image)
                                        : forward_stream(g, b, Stream::Teacher, image);
  Pyramid<T> sd = forward_stream(g, b, Stream::Denoising, image);
  return fa_forward(g, b, fa_input(g, sp, sd));
}

template <class T>
int64_t Model<T>::param_count(bool trainable_only) const {
  int64_t n = 0;
  for (const auto& p : reg_.all())
    if (!trainable_only || p->trainable) n += p->numel();
  return n;
}

template <class T>
uint64_t Model<T>::checksum(std::string_view prefix) const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : reg_.all()) {
    if (p->name.rfind(prefix, 0) != 0) continue;
    h = fnv1a(p->name.data(), p->name.size(), h);
    h = fnv1a(p->value.data(), p->value.size() * sizeof(T), h);
  }
  return h;
}

template <class T>
std::vector<NamedTensor> Model<T>::export_params() const {
  std::vector<NamedTensor> out;
  for (const auto& p : reg_.all()) {
    NamedTensor t;
    t.name = p->name;
    t.shape = p->shape;
    t.data.resize(p->value.size());
    for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = float(p->value[i]);
    out.push_back(std::move(t));
  }
  return out;
}

template <class T>
void Model<T>::import_params(const std::vector<NamedTensor>& tensors, bool inference_only) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  for (const auto& p : reg_.all()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      bool teacher_side = p->name.rfind("teacher.", 0) == 0 ||
                          p->name.rfind("tproj.", 0) == 0 ||
                          p->name.rfind("maskhead.", 0) == 0;
      if (inference_only && teacher_side) continue;
      throw std::runtime_error("checkpoint is missing tensor: " + p->name);
    }
    if (it->second->shape != p->shape)
      throw std::runtime_error("checkpoint tensor " + p->name + " has shape " +
                               shape_str(it->second->shape) + ", expected " +
                               shape_str(p->shape));
    for (size_t i = 0; i < p->value.size(); ++i) p->value[i] = T(it->second->data[i]);
  }
}

template <class T>
std::vector<Parameter<T>*> Model<T>::tlm_params() const {
  std::vector<Parameter<T>*> out;
  for (const auto& p : reg_.all())
    if (p->trainable && p->name.rfind("fa.", 0) != 0) out.push_back(p.get());
  return out;
}

template <class T>
std::vector<Parameter<T>*> Model<T>::fa_params() const {
  std::vector<Parameter<T>*> out;
  for (const auto& p : reg_.all())
    if (p->trainable && p->name.rfind("fa.", 0) == 0) out.push_back(p.get());
  return out;
}

template class Model<float>;
template class Model<double>;

}  // namespace stlm
