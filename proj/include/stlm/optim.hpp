#pragma once

#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "stlm/model.hpp"

namespace stlm {

template <class T>
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const std::vector<Parameter<T>*>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, double(t_));
    const double bc2 = 1.0 - std::pow(b2_, double(t_));
    for (auto* p : params) {
      check_finite(*p);
      auto& st = state_[p->name];
      if (st.m.empty()) {
        st.m.assign(p->value.size(), T(0));
        st.v.assign(p->value.size(), T(0));
      }
      for (size_t i = 0; i < p->value.size(); ++i) {
        T g = p->grad[i];
        st.m[i] = T(b1_) * st.m[i] + T(1 - b1_) * g;
        st.v[i] = T(b2_) * st.v[i] + T(1 - b2_) * g * g;
        double mhat = double(st.m[i]) / bc1;
        double vhat = double(st.v[i]) / bc2;
        p->value[i] -= T(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  int64_t steps() const { return t_; }
  void set_steps(int64_t t) { t_ = t; }
  std::map<std::string, std::pair<std::vector<T>, std::vector<T>>> snapshot() const {
    std::map<std::string, std::pair<std::vector<T>, std::vector<T>>> out;
    for (const auto& [k, v] : state_) out[k] = {v.m, v.v};
    return out;
  }
  void restore(const std::string& name, std::vector<T> m, std::vector<T> v) {
    state_[name] = {std::move(m), std::move(v)};
  }

 private:
  struct State {
    std::vector<T> m, v;
  };
  double lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, State> state_;

  static void check_finite(const Parameter<T>& p) {
    for (T g : p.grad)
      if (!std::isfinite(double(g)))
        throw NumericError("non-finite gradient for parameter " + p.name);
  }
};

template <class T>
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

  // velocity = momentum * velocity + grad; param -= lr * velocity
  void step(const std::vector<Parameter<T>*>& params) {
    for (auto* p : params) {
      for (T g : p->grad)
        if (!std::isfinite(double(g)))
          throw NumericError("non-finite gradient for parameter " + p->name);
      auto& vel = vel_[p->name];
      if (vel.empty()) vel.assign(p->value.size(), T(0));
      for (size_t i = 0; i < p->value.size(); ++i) {
        vel[i] = T(momentum_) * vel[i] + p->grad[i];
        p->value[i] -= T(lr_) * vel[i];
      }
    }
  }

  std::map<std::string, std::vector<T>> snapshot() const {
    return {vel_.begin(), vel_.end()};
  }
  void restore(const std::string& name, std::vector<T> v) { vel_[name] = std::move(v); }

 private:
  double lr_, momentum_;
  std::map<std::string, std::vector<T>> vel_;
};

// Scales all gradients so their global L2 norm is at most max_norm.
template <class T>
double clip_global_norm(const std::vector<Parameter<T>*>& params, double max_norm) {
  double ss = 0;
  for (auto* p : params)
    for (T g : p->grad) ss += double(g) * double(g);
  double norm = std::sqrt(ss);
  if (norm > max_norm && norm > 0) {
    T scale = T(max_norm / norm);
    for (auto* p : params)
      for (auto& g : p->grad) g *= scale;
  }
  return norm;
}

}  // namespace stlm
