#include "stlm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "stlm/losses.hpp"
#include "stlm/model.hpp"
#include "stlm/perlin.hpp"
#include "stlm/synth.hpp"
#include "stlm/train.hpp"

namespace stlm {

namespace {

double eval_builder(const std::vector<InputSpec>& specs,
                    const std::vector<std::vector<double>>& values,
                    const ScalarBuilder& builder) {
  Graph<double> g;
  std::vector<Tensor<double>> inputs;
  for (size_t i = 0; i < specs.size(); ++i)
    inputs.push_back(g.constant(specs[i].shape, values[i]));
  auto loss = builder(g, inputs);
  double v = loss.item();
  if (!std::isfinite(v)) throw NumericError("grad_check: builder yielded non-finite value");
  return v;
}

}  // namespace

CheckResult grad_check(const std::string& name, const std::vector<InputSpec>& specs,
                       const ScalarBuilder& builder, uint64_t seed,
                       const GradCheckOptions& opt) {
  std::vector<std::vector<double>> base;
  for (size_t i = 0; i < specs.size(); ++i) {
    Rng rng = Rng::for_index(seed, 31 + i);
    base.push_back(specs[i].make(rng));
    if (int64_t(base.back().size()) != shape_numel(specs[i].shape))
      throw std::invalid_argument("grad_check: input " + specs[i].name + " size mismatch");
  }

  // analytic gradients
  std::vector<std::vector<double>> analytic;
  {
    Graph<double> g;
    if (opt.inject_fault) g.inject_backward_fault(*opt.inject_fault, 1e-2);
    std::vector<Tensor<double>> inputs;
    for (size_t i = 0; i < specs.size(); ++i)
      inputs.push_back(g.variable(specs[i].shape, base[i]));
    auto loss = builder(g, inputs);
    if (!std::isfinite(loss.item()))
      throw NumericError("grad_check: builder yielded non-finite value");
    g.backward(loss);
    for (auto& in : inputs) {
      auto gr = in.grad();
      analytic.emplace_back(gr.begin(), gr.end());
    }
  }

  CheckResult res;
  res.name = name;
  const double h = opt.fd_step;
  for (size_t i = 0; i < specs.size(); ++i) {
    std::vector<int64_t> coords;
    int64_t n = int64_t(base[i].size());
    if (opt.max_coords > 0 && n > opt.max_coords) {
      Rng pick = Rng::for_index(seed, 777 + i);
      std::vector<int64_t> all(static_cast<size_t>(n));
      for (int64_t c = 0; c < n; ++c) all[size_t(c)] = c;
      for (int c = 0; c < opt.max_coords; ++c) {
        int64_t j = pick.uniform_int(c, n - 1);
        std::swap(all[size_t(c)], all[size_t(j)]);
        coords.push_back(all[size_t(c)]);
      }
    } else {
      for (int64_t c = 0; c < n; ++c) coords.push_back(c);
    }

    double worst = 0;
    auto values = base;
    auto central_fd = [&](int64_t c, double step) {
      double orig = values[i][size_t(c)];
      values[i][size_t(c)] = orig + step;
      double fplus = eval_builder(specs, values, builder);
      values[i][size_t(c)] = orig - step;
      double fminus = eval_builder(specs, values, builder);
      values[i][size_t(c)] = orig;
      return (fplus - fminus) / (2 * step);
    };
    auto rel_err = [&](double a, double fd) {
      double d = std::abs(a - fd);
      return d <= opt.abs_floor ? 0.0 : d / std::max(std::abs(a), std::abs(fd));
    };
    for (int64_t c : coords) {
      double a = analytic[i][size_t(c)];
      double rel = rel_err(a, central_fd(c, h));
      // a mismatch may be the difference straddling a relu/abs kink rather
      // than a wrong gradient; shrinking steps disambiguate, since a genuine
      // gradient error does not vanish as the step goes to zero
      for (double step : {h / 100, h / 10000}) {
        if (rel <= opt.rel_tol) break;
        rel = std::min(rel, rel_err(a, central_fd(c, step)));
      }
      worst = std::max(worst, rel);
    }
    res.per_input.emplace_back(specs[i].name, worst);
    res.max_rel_err = std::max(res.max_rel_err, worst);
  }
  res.pass = res.max_rel_err <= opt.rel_tol;
  return res;
}

namespace {

std::function<std::vector<double>(Rng&)> normal_fill(int64_t n, double lo_clip = 0.0) {
  return [n, lo_clip](Rng& rng) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) {
      x = rng.normal();
      if (lo_clip > 0)  // keep away from kinks
        while (std::abs(x) < lo_clip) x = rng.normal();
    }
    return v;
  };
}

std::function<std::vector<double>(Rng&)> uniform_fill(int64_t n, double lo, double hi) {
  return [n, lo, hi](Rng& rng) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
  };
}

// random projection to a scalar so every output coordinate matters
Tensor<double> project(Graph<double>& g, Tensor<double> y, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(size_t(y.numel()));
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  auto wt = g.constant(y.shape(), std::move(w));
  return sum_all(mul(y, wt));
}

struct SuiteBuilder {
  int iters;
  uint64_t seed;
  const GradCheckOptions& opt;
  std::vector<CheckResult>& out;

  void run(const std::string& name,
           const std::function<CheckResult(uint64_t it_seed)>& one) {
    CheckResult agg;
    agg.name = name;
    agg.pass = true;
    for (int it = 0; it < iters; ++it) {
      auto r = one(hash_combine(seed, hash_str(name) + uint64_t(it)));
      agg.max_rel_err = std::max(agg.max_rel_err, r.max_rel_err);
      agg.pass = agg.pass && r.pass;
    }
    out.push_back(agg);
  }
};

}  // namespace

std::vector<CheckResult> primitive_gradcheck_suite(int iters, uint64_t seed,
                                                   const GradCheckOptions& opt) {
  std::vector<CheckResult> results;
  SuiteBuilder sb{iters, seed, opt, results};

  auto dims = [](Rng& r, int lo, int hi) { return int(r.uniform_int(lo, hi)); };

  auto binary_op = [&](const std::string& name, OpKind kind, bool positive_b) {
    sb.run(name, [&, kind, positive_b](uint64_t s) {
      Rng r(s);
      int n = dims(r, 1, 4), m = dims(r, 1, 5);
      bool scalar_b = r.bernoulli(0.25), scalar_a = !scalar_b && r.bernoulli(0.2);
      Shape sa = scalar_a ? Shape{1} : Shape{n, m};
      Shape sbs = scalar_b ? Shape{1} : Shape{n, m};
      std::vector<InputSpec> in{
          {"a", sa, positive_b ? uniform_fill(shape_numel(sa), 0.5, 2.0)
                               : normal_fill(shape_numel(sa))},
          {"b", sbs, positive_b ? uniform_fill(shape_numel(sbs), 0.5, 2.0)
                                : normal_fill(shape_numel(sbs))}};
      return grad_check(
          name, in,
          [kind, s](Graph<double>& g, const std::vector<Tensor<double>>& v) {
            return project(g, g.apply(kind, {v[0].id, v[1].id}), s);
          },
          s, opt);
    });
  };
  binary_op("add", OpKind::Add, false);
  binary_op("sub", OpKind::Sub, false);
  binary_op("mul", OpKind::Mul, false);
  binary_op("div", OpKind::Div, true);

  auto unary_op = [&](const std::string& name, OpKind kind,
                      std::function<std::function<std::vector<double>(Rng&)>(int64_t)> fill,
                      double pow_c = 0) {
    sb.run(name, [&, kind, fill, pow_c](uint64_t s) {
      Rng r(s);
      Shape sh{dims(r, 1, 4), dims(r, 1, 6)};
      std::vector<InputSpec> in{{"x", sh, fill(shape_numel(sh))}};
      Attrs at;
      at.scalar = pow_c;
      return grad_check(
          name, in,
          [kind, at, s](Graph<double>& g, const std::vector<Tensor<double>>& v) {
            return project(g, g.apply(kind, {v[0].id}, at), s);
          },
          s, opt);
    });
  };
  auto plain = [&](int64_t n) { return normal_fill(n); };
  auto avoid0 = [&](int64_t n) { return normal_fill(n, 0.05); };
  auto positive = [&](int64_t n) { return uniform_fill(n, 0.2, 3.0); };
  unary_op("gelu", OpKind::Gelu, plain);
  unary_op("relu", OpKind::Relu, avoid0);
  unary_op("sigmoid", OpKind::Sigmoid, plain);
  unary_op("softmax", OpKind::Softmax, plain);
  unary_op("log", OpKind::Log, positive);
  unary_op("sqrt", OpKind::Sqrt, positive);
  unary_op("abs", OpKind::Abs, avoid0);
  unary_op("pow_scalar", OpKind::PowScalar, positive, 3.5);

  sb.run("matmul", [&](uint64_t s) {
    Rng r(s);
    int n = dims(r, 1, 4), k = dims(r, 1, 4), m = dims(r, 1, 4);
    std::vector<InputSpec> in{{"a", {n, k}, normal_fill(int64_t(n) * k)},
                              {"b", {k, m}, normal_fill(int64_t(k) * m)}};
    return grad_check(
        "matmul", in,
        [s](Graph<double>& g, const std::vector<Tensor<double>>& v) {
          return project(g, matmul(v[0], v[1]), s);
        },
        s, opt);
  });

  sb.run("conv2d", [&](uint64_t s) {
    Rng r(s);
    int N = dims(r, 1, 2), ci = dims(r, 1, 3), co = dims(r, 1, 3);
    int kh = dims(r, 1, 3), kw = dims(r, 1, 3);
    int stride = dims(r, 1, 2), pad = dims(r, 0, 2), dil = dims(r, 1, 2);
    int eff_h = (kh - 1) * dil + 1, eff_w = (kw - 1) * dil + 1;
    int H = eff_h + dims(r, 0, 4), W = eff_w + dims(r, 0, 4);
    std::vector<InputSpec> in{
        {"x", {N, ci, H, W}, normal_fill(int64_t(N) * ci * H * W)},
        {"w", {co, ci, kh, kw}, normal_fill(int64_t(co) * ci * kh * kw)},
        {"b", {co}, normal_fill(co)}};
    return grad_check(
        "conv2d", in,
        [stride, pad, dil, s](Graph<double>& g, const std::vector<Tensor<double>>& v) {
          return project(g, conv2d(v[0], v[1], v[2], stride, pad, dil), s);
        },
        s, opt);
  });

  sb.run("layer_norm", [&](uint64_t s) {
    Rng r(s);
    int rows = dims(r, 1, 5), cols = dims(r, 2, 6);
    std::vector<InputSpec> in{{"x", {rows, cols}, normal_fill(int64_t(rows) * cols)},
                              {"gamma", {cols}, uniform_fill(cols, 0.5, 1.5)},
                              {"beta", {cols}, normal_fill(cols)}};
    return grad_check(
        "layer_norm", in,
        [s](Graph<double>& g, const std::vector<Tensor<double>>& v) {
          return project(g, layer_norm(v[0], v[1], v[2]), s);
        },
        s, opt);
  });

  sb.run("scaled_dot_attention", [&](uint64_t s) {
    Rng r(s);
    int heads = dims(r, 1, 2), dh = dims(r, 1, 3), dim = heads * dh;
    int nq = dims(r, 1, 4), nk = dims(r, 1, 4);
    std::vector<InputSpec> in{{"q", {nq, dim}, normal_fill(int64_t(nq) * dim)},
                              {"k", {nk, dim}, normal_fill(int64_t(nk) * dim)},
                              {"v", {nk, dim}, normal_fill(int64_t(nk) * dim)}};
    return grad_check(
        "scaled_dot_attention", in,
        [heads, s](Graph<double>& g, const std::vector<Tensor<double>>& v) {
          return project(g, scaled_dot_attention(v[0], v[1], v[2], heads), s);
        },
        s, opt);
  });

  sb.run("bilinear_resize", [&](uint64_t s) {
    Rng r(s);
    int c = dims(r, 1, 2), ih = dims(r, 3, 7), iw = dims(r, 3, 7);
    int oh = dims(r, 2, 9), ow = dims(r, 2, 9);
    std::vector<InputSpec> in{{"x", {c, ih, iw}, normal_fill(int64_t(c) * ih * iw)}};
    return grad_check(
        "bilinear_resize", in,
        [oh, ow, s](Graph<double>& g, const std::vector<Tensor<double>>& v) {
          return project(g, bilinear_resize(v[0], oh, ow), s);
        },
        s, opt);
  });

  sb.run("concat", [&](uint64_t s) {
    Rng r(s);
    int axis = dims(r, 0, 1);
    int common = dims(r, 1, 4);
    int d0 = dims(r, 1, 3), d1 = dims(r, 1, 3);
    Shape sa = axis == 0 ? Shape{d0, common} : Shape{common, d0};
    Shape sbs = axis == 0 ? Shape{d1, common} : Shape{common, d1};
    std::vector<InputSpec> in{{"a", sa, normal_fill(shape_numel(sa))},
                              {"b", sbs, normal_fill(shape_numel(sbs))}};
    return grad_check(
        "concat", in,
        [axis, s](Graph<double>& g, const std::vector<Tensor<double>>& v) {
          return project(g, concat<double>({v[0], v[1]}, axis), s);
        },
        s, opt);
  });

  auto reduce_op = [&](const std::string& name, OpKind kind) {
    sb.run(name, [&, kind](uint64_t s) {
      Rng r(s);
      Shape sh{dims(r, 1, 4), dims(r, 1, 4), dims(r, 1, 3)};
      int axis = r.bernoulli(0.3) ? -1 : dims(r, 0, 2);
      std::vector<InputSpec> in{{"x", sh, normal_fill(shape_numel(sh))}};
      Attrs at;
      at.axis = axis;
      return grad_check(
          name, in,
          [kind, at, s](Graph<double>& g, const std::vector<Tensor<double>>& v) {
            return project(g, g.apply(kind, {v[0].id}, at), s);
          },
          s, opt);
    });
  };
  reduce_op("mean", OpKind::Mean);
  reduce_op("sum", OpKind::Sum);

  sb.run("l2_normalize", [&](uint64_t s) {
    Rng r(s);
    Shape sh{dims(r, 1, 4), dims(r, 2, 5)};
    int axis = dims(r, 0, 1);
    std::vector<InputSpec> in{{"x", sh, normal_fill(shape_numel(sh), 0.05)}};
    return grad_check(
        "l2_normalize", in,
        [axis, s](Graph<double>& g, const std::vector<Tensor<double>>& v) {
          return project(g, l2_normalize(v[0], axis), s);
        },
        s, opt);
  });

  sb.run("transpose", [&](uint64_t s) {
    Rng r(s);
    Shape sh{dims(r, 1, 3), dims(r, 1, 3), dims(r, 1, 3)};
    std::vector<int> perm{0, 1, 2};
    for (size_t i = 3; i > 1; --i)
      std::swap(perm[i - 1], perm[size_t(r.uniform_int(0, int64_t(i) - 1))]);
    std::vector<InputSpec> in{{"x", sh, normal_fill(shape_numel(sh))}};
    return grad_check(
        "transpose", in,
        [perm, s](Graph<double>& g, const std::vector<Tensor<double>>& v) {
          return project(g, transpose(v[0], perm), s);
        },
        s, opt);
  });

  sb.run("reshape", [&](uint64_t s) {
    Rng r(s);
    int a = dims(r, 1, 4), b = dims(r, 1, 4);
    std::vector<InputSpec> in{{"x", {a, b}, normal_fill(int64_t(a) * b)}};
    return grad_check(
        "reshape", in,
        [a, b, s](Graph<double>& g, const std::vector<Tensor<double>>& v) {
          return project(g, reshape(v[0], {b, a}), s);
        },
        s, opt);
  });

  sb.run("bias_add", [&](uint64_t s) {
    Rng r(s);
    int rows = dims(r, 1, 5), cols = dims(r, 1, 5);
    std::vector<InputSpec> in{{"x", {rows, cols}, normal_fill(int64_t(rows) * cols)},
                              {"b", {cols}, normal_fill(cols)}};
    return grad_check(
        "bias_add", in,
        [s](Graph<double>& g, const std::vector<Tensor<double>>& v) {
          return project(g, bias_add(v[0], v[1]), s);
        },
        s, opt);
  });

  return results;
}

std::vector<CheckResult> loss_gradcheck_suite(int iters, uint64_t seed,
                                              const GradCheckOptions& opt) {
  std::vector<CheckResult> results;
  SuiteBuilder sb{iters, seed, opt, results};
  auto dims = [](Rng& r, int lo, int hi) { return int(r.uniform_int(lo, hi)); };

  auto binary_mask = [](int64_t n, uint64_t s) {
    std::vector<double> m(static_cast<size_t>(n));
    Rng r(s);
    for (auto& v : m) v = r.bernoulli(0.4) ? 1.0 : 0.0;
    return m;
  };

  auto focal_check = [&](const std::string& name, double gamma) {
    sb.run(name, [&, gamma](uint64_t s) {
      Rng r(s);
      int h = dims(r, 2, 6), w = dims(r, 2, 6);
      auto mask = binary_mask(int64_t(h) * w, s);
      std::vector<InputSpec> in{{"map", {h, w}, uniform_fill(int64_t(h) * w, 0.05, 0.95)}};
      return grad_check(
          name, in,
          [mask, h, w, gamma](Graph<double>& g, const std::vector<Tensor<double>>& v) {
            auto m = g.constant({h, w}, mask);
            return focal_loss(m, v[0], gamma);
          },
          s, opt);
    });
  };
  focal_check("focal_loss", 4.0);
  focal_check("focal_loss_gamma0", 0.0);

  sb.run("l1_loss", [&](uint64_t s) {
    Rng r(s);
    int h = dims(r, 2, 6), w = dims(r, 2, 6);
    auto mask = binary_mask(int64_t(h) * w, s);
    std::vector<InputSpec> in{{"map", {h, w}, uniform_fill(int64_t(h) * w, 0.05, 0.95)}};
    return grad_check(
        "l1_loss", in,
        [mask, h, w](Graph<double>& g, const std::vector<Tensor<double>>& v) {
          auto m = g.constant({h, w}, mask);
          return l1_loss(m, v[0]);
        },
        s, opt);
  });

  sb.run("cosine_distill_loss", [&](uint64_t s) {
    Rng r(s);
    int n = dims(r, 2, 6), d = dims(r, 2, 6);
    int64_t sz = int64_t(n) * d;
    std::vector<InputSpec> in{{"t1", {n, d}, normal_fill(sz, 0.05)},
                              {"s1", {n, d}, normal_fill(sz, 0.05)},
                              {"t2", {n, d}, normal_fill(sz, 0.05)},
                              {"s2", {n, d}, normal_fill(sz, 0.05)}};
    return grad_check(
        "cosine_distill_loss", in,
        [n](Graph<double>& g, const std::vector<Tensor<double>>& v) {
          Pyramid<double> t{{v[0], v[2]}, n, 1};
          Pyramid<double> st{{v[1], v[3]}, n, 1};
          return cosine_distill_loss(t, st, {1, 2});
        },
        s, opt);
  });

  sb.run("total_loss", [&](uint64_t s) {
    Rng r(s);
    int h = dims(r, 2, 5), w = dims(r, 2, 5);
    int n = dims(r, 2, 5), d = dims(r, 2, 4);
    auto mask = binary_mask(int64_t(h) * w, s);
    std::vector<InputSpec> in{{"t", {n, d}, normal_fill(int64_t(n) * d, 0.05)},
                              {"sp", {n, d}, normal_fill(int64_t(n) * d, 0.05)},
                              {"sd", {n, d}, normal_fill(int64_t(n) * d, 0.05)},
                              {"map", {h, w}, uniform_fill(int64_t(h) * w, 0.05, 0.95)}};
    return grad_check(
        "total_loss", in,
        [mask, h, w, n](Graph<double>& g, const std::vector<Tensor<double>>& v) {
          Pyramid<double> t{{v[0], v[0]}, n, 1};
          Pyramid<double> sp{{v[1], v[1]}, n, 1};
          Pyramid<double> sd{{v[2], v[2]}, n, 1};
          auto m = g.constant({h, w}, mask);
          auto l_p = cosine_distill_loss(t, sp, {1, 2});
          auto l_de = cosine_distill_loss(t, sd, {1, 2});
          auto l_f = focal_loss(m, v[3]);
          auto l_1 = l1_loss(m, v[3]);
          return total_loss(g, l_p, l_de, l_f, l_1);
        },
        s, opt);
  });

  sb.run("logit_distill_loss", [&](uint64_t s) {
    Rng r(s);
    int h = dims(r, 2, 6), w = dims(r, 2, 6);
    int64_t n = int64_t(h) * w;
    // teacher scores stay away from the 0.5 binarization edge
    auto teacher_fill = [n](Rng& rng) {
      std::vector<double> v(static_cast<size_t>(n));
      for (auto& x : v)
        x = rng.bernoulli(0.5) ? rng.uniform(0.05, 0.45) : rng.uniform(0.55, 0.95);
      return v;
    };
    std::vector<InputSpec> in{{"teacher", {h, w}, teacher_fill},
                              {"student", {h, w}, uniform_fill(n, 0.05, 0.95)}};
    return grad_check(
        "logit_distill_loss", in,
        [](Graph<double>& g, const std::vector<Tensor<double>>& v) {
          return logit_distill_loss(g, v[0], v[1]);
        },
        s, opt);
  });

  return results;
}

CheckResult model_gradcheck(int iters, uint64_t seed) {
  GradCheckOptions opt;
  opt.rel_tol = 1e-3;
  opt.max_coords = 10;

  ModelConfig cfg;
  cfg.image_size = 16;
  cfg.image_channels = 1;
  cfg.patch_size = 8;
  cfg.student_dim = 8;
  cfg.teacher_dim = 12;
  cfg.encoder_depth = 1;
  cfg.teacher_depth = 2;
  cfg.heads = 2;
  cfg.fa_channels = 8;
  cfg.query_tokens = 2;

  CheckResult agg;
  agg.name = "total_loss_end_to_end";
  agg.pass = true;

  for (int it = 0; it < iters; ++it) {
    uint64_t s = hash_combine(seed, 0xe2e0 + uint64_t(it));
    Model<double> model(cfg, s);

    // one synthetic training pair at miniature scale
    ImageSample normal;
    normal.image = texture_bank_sample(1, 16, 16, hash_combine(s, 1));
    normal.mask.assign(256, 0);
    PerlinParams pp;
    pp.period_min = 8;
    pp.period_max = 8;
    AnomalySpec aspec;
    aspec.activation_prob = 1.0;
    auto pair = sample_training_pair(normal, aspec, pp, hash_combine(s, 2));

    const char* names[] = {"plain.enc.patch.w",       "denoise.enc.b0.attn.wq",
                           "decoder.b0.i2q.wv",       "decoder.queries",
                           "tproj.w",                 "fa.res1.c1.w",
                           "fa.head.w"};
    std::vector<InputSpec> specs;
    for (const char* nm : names) {
      auto* p = model.registry().find(nm);
      std::vector<double> vals = p->value;
      specs.push_back({nm, p->shape, [vals](Rng&) { return vals; }});
    }

    auto r = grad_check(
        agg.name, specs,
        [&](Graph<double>& g, const std::vector<Tensor<double>>& v) {
          Binder<double> b(g);
          for (size_t i = 0; i < specs.size(); ++i) b.set_override(specs[i].name, v[i]);
          auto losses = build_step_losses(model, g, b, {pair}, 0);
          return losses.l_total;
        },
        s, opt);
    agg.max_rel_err = std::max(agg.max_rel_err, r.max_rel_err);
    agg.pass = agg.pass && r.pass;
  }
  return agg;
}

}  // namespace stlm
