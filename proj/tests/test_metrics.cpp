#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stlm/metrics.hpp"
#include "stlm/rng.hpp"

using namespace stlm;

TEST_CASE("image_score top-k") {
  ScoreMap m{2, 2, {0.9f, 0.5f, 0.1f, 0.1f}};
  CHECK(image_score(m, 2) == doctest::Approx(0.7));
  ScoreMap c{2, 2, {0.3f, 0.3f, 0.3f, 0.3f}};
  CHECK(image_score(c, 1) == doctest::Approx(0.3));
  CHECK(image_score(c, 3) == doctest::Approx(0.3));
  ScoreMap ones{2, 2, {1.f, 1.f, 0.f, 0.f}};
  CHECK(image_score(ones, 2) == doctest::Approx(1.0));
  // fewer pixels than k falls back to the full mean
  CHECK(image_score(m, 100) == doctest::Approx((0.9 + 0.5 + 0.1 + 0.1) / 4));
  CHECK_THROWS(image_score(ScoreMap{}, 1));
  CHECK_THROWS(image_score(m, 0));
}

TEST_CASE("auroc examples") {
  CHECK(auroc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == doctest::Approx(1.0));
  CHECK(auroc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == doctest::Approx(0.5));
  CHECK(auroc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75));
  CHECK_THROWS(auroc({0.1, 0.2}, {1, 1}));
}

TEST_CASE("auroc matches pairwise oracle on random instances") {
  Rng rng(42);
  for (int it = 0; it < 60; ++it) {
    int n = 2 + int(rng.uniform_int(0, 198));
    std::vector<double> scores(static_cast<size_t>(n));
    std::vector<int> labels(static_cast<size_t>(n));
    bool has0 = false, has1 = false;
    for (int i = 0; i < n; ++i) {
      // coarse grid of score values provokes plenty of ties
      scores[size_t(i)] = std::floor(rng.uniform(0, 8)) / 8.0;
      labels[size_t(i)] = rng.bernoulli(0.4) ? 1 : 0;
      (labels[size_t(i)] ? has1 : has0) = true;
    }
    if (!has0 || !has1) continue;
    CHECK(std::abs(auroc(scores, labels) - oracle::auroc_pairwise(scores, labels)) <= 1e-9);
  }
}

TEST_CASE("auroc complement property for tie-free scores") {
  Rng rng(7);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 50; ++i) {
    scores.push_back(rng.uniform());  // distinct w.p. 1
    labels.push_back(i % 3 == 0);
  }
  std::vector<double> neg;
  for (double s : scores) neg.push_back(-s);
  CHECK(auroc(scores, labels) + auroc(neg, labels) == doctest::Approx(1.0));
}

TEST_CASE("average_precision examples") {
  CHECK(average_precision({0.9, 0.8, 0.1}, {1, 1, 0}) == doctest::Approx(1.0));
  CHECK(average_precision({0.9, 0.8, 0.7}, {1, 0, 1}) == doctest::Approx(0.5 + 1.0 / 3));
  CHECK(average_precision({0.2, 0.9, 0.5}, {1, 1, 1}) == doctest::Approx(1.0));
  CHECK_THROWS(average_precision({0.2, 0.9}, {0, 0}));
}

TEST_CASE("average_precision matches enumerated oracle") {
  Rng rng(43);
  for (int it = 0; it < 60; ++it) {
    int n = 2 + int(rng.uniform_int(0, 198));
    std::vector<double> scores(static_cast<size_t>(n));
    std::vector<int> labels(static_cast<size_t>(n));
    bool has1 = false;
    for (int i = 0; i < n; ++i) {
      scores[size_t(i)] = std::floor(rng.uniform(0, 6)) / 6.0;
      labels[size_t(i)] = rng.bernoulli(0.3) ? 1 : 0;
      has1 = has1 || labels[size_t(i)];
    }
    if (!has1) continue;
    CHECK(std::abs(average_precision(scores, labels) -
                   oracle::ap_enumerated(scores, labels)) <= 1e-9);
  }
}

TEST_CASE("monotone transform invariance") {
  Rng rng(11);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 80; ++i) {
    scores.push_back(rng.uniform());
    labels.push_back(rng.bernoulli(0.35) ? 1 : 0);
  }
  labels[0] = 1;
  labels[1] = 0;
  std::vector<double> cubed;
  for (double s : scores) cubed.push_back(s * s * s);
  CHECK(auroc(scores, labels) == doctest::Approx(auroc(cubed, labels)).epsilon(1e-12));
  CHECK(average_precision(scores, labels) ==
        doctest::Approx(average_precision(cubed, labels)).epsilon(1e-12));
}

TEST_CASE("fnr examples") {
  CHECK(fnr({8, 2, 0, 0}) == doctest::Approx(0.2));
  CHECK(fnr({5, 0, 3, 2}) == doctest::Approx(0.0));
  CHECK(fnr({0, 5, 1, 1}) == doctest::Approx(1.0));
  CHECK_THROWS(fnr({0, 0, 3, 4}));
}

TEST_CASE("connected components 8 vs 4") {
  // two diagonal pixels: one region under 8-connectivity, two under 4
  std::vector<uint8_t> m{1, 0, 0, 1};
  std::vector<int> labels;
  CHECK(connected_components(m, 2, 2, 8, labels) == 1);
  CHECK(connected_components(m, 2, 2, 4, labels) == 2);
}

TEST_CASE("pro perfect prediction = 1") {
  Rng rng(5);
  std::vector<ScoreMap> maps;
  std::vector<std::vector<uint8_t>> masks;
  for (int i = 0; i < 3; ++i) {
    ScoreMap m{8, 8, std::vector<float>(64, 0.f)};
    std::vector<uint8_t> mask(64, 0);
    for (int p = 0; p < 64; ++p)
      if (rng.bernoulli(0.3)) {
        mask[size_t(p)] = 1;
        m.v[size_t(p)] = 1.f;
      }
    maps.push_back(m);
    masks.push_back(mask);
  }
  masks[0][0] = 1;
  maps[0].v[0] = 1.f;
  CHECK(pro_score(maps, masks, {0.3, 8}) == doctest::Approx(1.0));
  CHECK(pro_score(maps, masks, {1.0, 8}) == doctest::Approx(1.0));
}

TEST_CASE("pro equal-weight regions: one covered, one missed") {
  // two equal-size regions; prediction covers region A fully at every
  // threshold and never touches region B
  ScoreMap m{6, 6, std::vector<float>(36, 0.f)};
  std::vector<uint8_t> mask(36, 0);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      mask[size_t(y * 6 + x)] = 1;          // region A
      mask[size_t((y + 4) * 6 + x + 4)] = 1;  // region B
      m.v[size_t(y * 6 + x)] = 1.f;
    }
  CHECK(mean_region_overlap({m}, {mask}, 0.5) == doctest::Approx(0.5));
}

TEST_CASE("pro matches naive oracle on random 8x8 instances") {
  Rng rng(44);
  for (int it = 0; it < 40; ++it) {
    int n_imgs = 1 + int(rng.uniform_int(0, 2));
    std::vector<ScoreMap> maps;
    std::vector<std::vector<uint8_t>> masks;
    bool any_region = false;
    for (int i = 0; i < n_imgs; ++i) {
      int h = 4 + int(rng.uniform_int(0, 4)), w = 4 + int(rng.uniform_int(0, 4));
      ScoreMap m{h, w, std::vector<float>(size_t(h) * w)};
      std::vector<uint8_t> mask(size_t(h) * w, 0);
      for (size_t p = 0; p < m.v.size(); ++p) {
        m.v[p] = float(std::floor(rng.uniform(0, 5)) / 5.0);
        mask[p] = rng.bernoulli(0.35) ? 1 : 0;
        any_region = any_region || mask[p];
      }
      maps.push_back(std::move(m));
      masks.push_back(std::move(mask));
    }
    if (!any_region) continue;
    double fast = pro_score(maps, masks, {0.3, 8});
    double slow = oracle::pro_naive(maps, masks, 0.3, 8);
    CHECK(std::abs(fast - slow) <= 1e-6);
  }
}

TEST_CASE("pro invariant under duplicating an image") {
  Rng rng(45);
  ScoreMap m{8, 8, std::vector<float>(64)};
  std::vector<uint8_t> mask(64, 0);
  for (size_t p = 0; p < 64; ++p) {
    m.v[p] = float(rng.uniform());
    mask[p] = rng.bernoulli(0.3) ? 1 : 0;
  }
  mask[5] = 1;
  double one = pro_score({m}, {mask}, {0.3, 8});
  double two = pro_score({m, m}, {mask, mask}, {0.3, 8});
  CHECK(one == doctest::Approx(two).epsilon(1e-12));
}

TEST_CASE("pro errors") {
  ScoreMap m{2, 2, {0.f, 0.f, 0.f, 0.f}};
  std::vector<uint8_t> empty_mask(4, 0);
  CHECK_THROWS(pro_score({m}, {empty_mask}, {0.3, 8}));
  std::vector<uint8_t> mask{1, 0, 0, 0};
  CHECK_THROWS(pro_score({m}, {mask}, {0.0, 8}));
  CHECK_THROWS(pro_score({m}, {mask}, {1.5, 8}));
}

TEST_CASE("compute_metrics with an oracle predictor") {
  // maps that equal the ground truth: every metric should saturate
  std::vector<std::string> ids{"a", "b", "c", "d"};
  std::vector<std::string> defects{"good", "good", "blend", "blend"};
  std::vector<ScoreMap> maps;
  std::vector<std::vector<uint8_t>> masks;
  std::vector<int> labels{0, 0, 1, 1};
  Rng rng(9);
  for (int i = 0; i < 4; ++i) {
    ScoreMap m{8, 8, std::vector<float>(64, 0.f)};
    std::vector<uint8_t> mask(64, 0);
    if (labels[size_t(i)]) {
      for (int p = 0; p < 64; ++p)
        if (rng.bernoulli(0.25)) {
          mask[size_t(p)] = 1;
          m.v[size_t(p)] = 1.f;
        }
      if (!mask[0] && std::count(mask.begin(), mask.end(), 1) == 0) {
        mask[0] = 1;
        m.v[0] = 1.f;
      }
    }
    maps.push_back(m);
    masks.push_back(mask);
  }
  EvalOptions opt;
  auto rep = compute_metrics(ids, defects, maps, masks, labels, opt);
  CHECK(rep.image_auroc == doctest::Approx(1.0));
  CHECK(rep.pixel_auroc == doctest::Approx(1.0));
  CHECK(rep.ap == doctest::Approx(1.0));
  CHECK(rep.pro == doctest::Approx(1.0));
  CHECK(rep.fnr == doctest::Approx(0.0));
  CHECK(rep.per_class.count("blend") == 1);

  // constant maps: tie convention puts both AUROCs at 1/2
  for (auto& m : maps) std::fill(m.v.begin(), m.v.end(), 0.5f);
  auto rep2 = compute_metrics(ids, defects, maps, masks, labels, opt);
  CHECK(rep2.image_auroc == doctest::Approx(0.5));
  CHECK(rep2.pixel_auroc == doctest::Approx(0.5));
}

TEST_CASE("auto top-k scales with resolution") {
  CHECK(auto_top_k(1024, 1024) == 100);
  CHECK(auto_top_k(64, 64) == 5);   // floor applies
  CHECK(auto_top_k(512, 512) == 25);
}
