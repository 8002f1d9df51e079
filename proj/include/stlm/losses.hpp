#pragma once

#include "stlm/model.hpp"
#include "stlm/tensor.hpp"

namespace stlm {

// Scalar snapshot of one step's objectives; l_total is their plain sum.
struct LossBundle {
  double l_p = 0, l_de = 0, l_focal = 0, l_l1 = 0, l_total = 0;
};

// sum over selected layers of mean(1 - cos) between paired token features
template <class T>
Tensor<T> cosine_distill_loss(const Pyramid<T>& target, const Pyramid<T>& student,
                              const std::vector<int>& layers_used) {
  Tensor<T> total;
  for (int l : layers_used) {
    auto a = target.layer[l - 1];
    auto s = student.layer[l - 1];
    if (a.shape() != s.shape())
      throw ShapeError("cosine_distill_loss: shape mismatch " + shape_str(a.shape()) +
                       " vs " + shape_str(s.shape()));
    auto term = rsub_scalar(T(1), mean_all(cosine_map(a, s)));
    total = total.valid() ? add(total, term) : term;
  }
  return total;
}

// p = M*Mo + (1-M)*(1-Mo); loss = mean((1-p)^gamma * -log(p + 1e-7))
template <class T>
Tensor<T> focal_loss(Tensor<T> mask, Tensor<T> map, double gamma = 4.0) {
  if (mask.shape() != map.shape())
    throw ShapeError("focal_loss: shape mismatch " + shape_str(mask.shape()) + " vs " +
                     shape_str(map.shape()));
  auto p = add(mul(mask, map), mul(rsub_scalar(T(1), mask), rsub_scalar(T(1), map)));
  auto neg_log = mul_scalar(stlm::log(add_scalar(p, T(1e-7))), T(-1));
  auto weight = pow_scalar(rsub_scalar(T(1), p), gamma);
  return mean_all(mul(weight, neg_log));
}

// mean absolute error
template <class T>
Tensor<T> l1_loss(Tensor<T> mask, Tensor<T> map) {
  if (mask.shape() != map.shape())
    throw ShapeError("l1_loss: shape mismatch " + shape_str(mask.shape()) + " vs " +
                     shape_str(map.shape()));
  return mean_all(stlm::abs(sub(mask, map)));
}

// focal(binarize(teacher, 0.5), student) + l1(teacher, student); replaces the
// feature losses when distilling logits
template <class T>
Tensor<T> logit_distill_loss(Graph<T>& g, Tensor<T> teacher_map, Tensor<T> student_map,
                             double gamma = 4.0) {
  if (teacher_map.shape() != student_map.shape())
    throw ShapeError("logit_distill_loss: shape mismatch " + shape_str(teacher_map.shape()) +
                     " vs " + shape_str(student_map.shape()));
  std::vector<T> bin(teacher_map.values().begin(), teacher_map.values().end());
  for (auto& v : bin) v = v > T(0.5) ? T(1) : T(0);
  auto hard = g.constant(teacher_map.shape(), std::move(bin));
  return add(focal_loss(hard, student_map, gamma), l1_loss(teacher_map, student_map));
}

// l_total = l_p + l_de + l_focal + l_l1, equal weights
template <class T>
Tensor<T> total_loss(Graph<T>& g, Tensor<T> l_p, Tensor<T> l_de, Tensor<T> l_focal,
                     Tensor<T> l_l1) {
  auto zero = [&] { return g.scalar(T(0)); };
  auto a = l_p.valid() ? l_p : zero();
  auto b = l_de.valid() ? l_de : zero();
  auto c = l_focal.valid() ? l_focal : zero();
  auto d = l_l1.valid() ? l_l1 : zero();
  return add(add(a, b), add(c, d));
}

}  // namespace stlm
