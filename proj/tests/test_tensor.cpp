#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stlm/rng.hpp"
#include "stlm/tensor.hpp"

using namespace stlm;

TEST_CASE("matmul identity") {
  Graph<float> g;
  auto eye = g.constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto x = g.constant({3, 2}, {1, 2, 3, 4, 5, 6});
  auto y = matmul(eye, x);
  for (int i = 0; i < 6; ++i) CHECK(y.values()[size_t(i)] == x.values()[size_t(i)]);
}

TEST_CASE("softmax uniform logits") {
  Graph<float> g;
  auto y = softmax(g.constant({1, 4}, {0, 0, 0, 0}));
  for (int i = 0; i < 4; ++i) CHECK(y.values()[size_t(i)] == doctest::Approx(0.25));
}

TEST_CASE("relu and sigmoid definitions") {
  Graph<float> g;
  auto y = relu(g.constant({3}, {-1.5f, 0.f, 2.f}));
  CHECK(y.values()[0] == 0.f);
  CHECK(y.values()[1] == 0.f);
  CHECK(y.values()[2] == 2.f);
  auto s = sigmoid(g.constant({1}, {0.f}));
  CHECK(s.values()[0] == doctest::Approx(0.5));
}

TEST_CASE("backward: sum of squares") {
  Graph<double> g;
  auto x = g.variable({3}, {1, 2, 3});
  auto loss = sum_all(mul(x, x));
  g.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2));
  CHECK(x.grad()[1] == doctest::Approx(4));
  CHECK(x.grad()[2] == doctest::Approx(6));
}

TEST_CASE("backward: mean gives 1/n") {
  Graph<double> g;
  auto x = g.variable({5}, {3, 1, 4, 1, 5});
  g.backward(mean_all(x));
  for (int i = 0; i < 5; ++i) CHECK(x.grad()[size_t(i)] == doctest::Approx(0.2));
}

TEST_CASE("backward: relu subgradient") {
  Graph<double> g;
  auto x = g.variable({2}, {-1, 2});
  g.backward(sum_all(relu(x)));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("backward: repeated use of a node sums contributions") {
  Graph<double> g;
  auto x = g.variable({2}, {1, 2});
  auto loss = add(sum_all(mul(x, x)), sum_all(x));
  g.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(3));  // 2x + 1
  CHECK(x.grad()[1] == doctest::Approx(5));
}

TEST_CASE("backward requires scalar loss and in-graph node") {
  Graph<double> g;
  auto x = g.variable({2}, {1, 2});
  CHECK_THROWS_AS(g.backward(x), ShapeError);
  CHECK_THROWS_AS(g.backward(999), ShapeError);
}

TEST_CASE("shape errors report kind and shapes") {
  Graph<float> g;
  auto a = g.constant({2, 3}, std::vector<float>(6, 1.f));
  auto b = g.constant({4, 5}, std::vector<float>(20, 1.f));
  try {
    (void)matmul(a, b);
    CHECK(false);
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("(2,3)") != std::string::npos);
    CHECK(msg.find("(4,5)") != std::string::npos);
  }
}

TEST_CASE("non-finite outputs are reported with the kind") {
  Graph<float> g;
  auto x = g.constant({1}, {-1.f});
  try {
    (void)stlm::log(x);
    CHECK(false);
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
}

TEST_CASE("tape is topologically ordered") {
  Graph<float> g;
  auto x = g.variable({2, 2}, {1, 2, 3, 4});
  auto y = relu(matmul(x, x));
  (void)sum_all(mul(y, y));
  for (const auto& r : g.tape())
    for (int in : r.in) CHECK(in < r.out);
}

TEST_CASE("replay reproduces forward values bitwise") {
  Rng rng(3);
  for (auto backend : {kernels::Backend::Serial, kernels::Backend::Parallel}) {
    kernels::set_backend(backend);
    Graph<float> g;
    std::vector<float> vals(24);
    for (auto& v : vals) v = float(rng.normal());
    auto x = g.variable({4, 6}, vals);
    auto w = g.variable({6, 3}, std::vector<float>(18, 0.3f));
    auto h = gelu(matmul(x, w));
    auto s = softmax(h);
    auto l = mean_all(mul(s, s));
    g.backward(l);
    CHECK(g.replay_check() == 0);
  }
  kernels::set_backend(kernels::Backend::Parallel);
}

TEST_CASE("serial and parallel backends agree bitwise on a full graph") {
  auto run = [](kernels::Backend b) {
    kernels::set_backend(b);
    Graph<float> g;
    Rng rng(17);
    std::vector<float> vals(64);
    for (auto& v : vals) v = float(rng.normal());
    auto x = g.variable({8, 8}, vals);
    auto y = layer_norm(x, g.constant({8}, std::vector<float>(8, 1.f)),
                        g.constant({8}, std::vector<float>(8, 0.f)));
    auto z = scaled_dot_attention(y, y, y, 2);
    auto l = mean_all(mul(z, z));
    g.backward(l);
    auto gr = x.grad();
    std::vector<float> out(l.values().begin(), l.values().end());
    out.insert(out.end(), gr.begin(), gr.end());
    return out;
  };
  auto a = run(kernels::Backend::Serial);
  auto b = run(kernels::Backend::Parallel);
  kernels::set_backend(kernels::Backend::Parallel);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(std::memcmp(&a[i], &b[i], 4) == 0);
}

TEST_CASE("l2_normalize output norm property") {
  Rng rng(23);
  for (int it = 0; it < 30; ++it) {
    Graph<float> g;
    int n = 1 + int(rng.uniform_int(0, 4)), d = 2 + int(rng.uniform_int(0, 6));
    std::vector<float> vals(size_t(n) * d);
    for (auto& v : vals) v = float(rng.normal());
    auto x = g.constant({n, d}, vals);
    auto y = l2_normalize(x, 1);
    for (int r = 0; r < n; ++r) {
      double in_norm = 0, out_norm = 0;
      for (int c = 0; c < d; ++c) {
        in_norm += double(vals[size_t(r * d + c)]) * vals[size_t(r * d + c)];
        double v = y.values()[size_t(r * d + c)];
        out_norm += v * v;
      }
      if (std::sqrt(in_norm) < 1e-6) continue;
      CHECK(std::sqrt(out_norm) <= 1.0 + 1e-6);
      CHECK(std::sqrt(out_norm) >= 1.0 - 1e-5);
    }
  }
}

TEST_CASE("scalar broadcast arithmetic") {
  Graph<double> g;
  auto x = g.variable({3}, {1, 2, 3});
  auto y = mul_scalar(add_scalar(x, 1.0), 2.0);  // 2(x+1)
  CHECK(y.values()[2] == doctest::Approx(8));
  g.backward(sum_all(y));
  for (int i = 0; i < 3; ++i) CHECK(x.grad()[size_t(i)] == doctest::Approx(2));
}

TEST_CASE("conv2d identity kernel") {
  Graph<float> g;
  auto x = g.constant({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto w = g.constant({1, 1, 1, 1}, {1.f});
  auto b = g.constant({1}, {0.f});
  auto y = conv2d(x, w, b, 1, 0, 1);
  for (int i = 0; i < 9; ++i) CHECK(y.values()[size_t(i)] == x.values()[size_t(i)]);
}

TEST_CASE("bilinear resize identity at same resolution") {
  Graph<float> g;
  std::vector<float> vals(2 * 5 * 4);
  Rng rng(31);
  for (auto& v : vals) v = float(rng.uniform());
  auto x = g.constant({2, 5, 4}, vals);
  auto y = bilinear_resize(x, 5, 4);
  for (size_t i = 0; i < vals.size(); ++i) CHECK(y.values()[i] == vals[i]);
}
