#pragma once

#include <cmath>

#include "fcs/textstyle_net.hpp"

namespace fcs {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over the network parameters; masked-out arrays are never touched.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(AdamOptions opts, ParamMask mask = all_parameters())
      : opts_(opts), mask_(mask), m_(NetParams<Scalar>::zeros()), v_(NetParams<Scalar>::zeros()) {}

  void step(NetParams<Scalar>& params, const NetParams<Scalar>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, double(t_));
    const Scalar b1(opts_.beta1), b2(opts_.beta2);
    const Scalar step_size = Scalar(opts_.lr / c1), eps(opts_.eps), inv_sqrt_c2 = Scalar(1.0 / std::sqrt(c2));
    for (int i = 0; i < NetParams<Scalar>::kArrays; ++i) {
      if (!mask_.trainable[i]) continue;
      auto p = params.flat(i);
      auto m = m_.flat(i);
      auto v = v_.flat(i);
      const auto g = grads.flat(i);
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
      p.array() -= step_size * m.array() / (v.array().sqrt() * inv_sqrt_c2 + eps);
    }
  }

  const ParamMask& mask() const { return mask_; }

 private:
  AdamOptions opts_;
  ParamMask mask_;
  NetParams<Scalar> m_, v_;
  long t_ = 0;
};

/// Adam on a single vector.
template <typename Scalar>
class VectorAdam {
 public:
  VectorAdam(AdamOptions opts, Eigen::Index n) : opts_(opts), m_(Vec<Scalar>::Zero(n)), v_(Vec<Scalar>::Zero(n)) {}

  void step(Vec<Scalar>& x, const Vec<Scalar>& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, double(t_));
    m_ = Scalar(opts_.beta1) * m_ + Scalar(1 - opts_.beta1) * g;
    v_ = Scalar(opts_.beta2) * v_ + Scalar(1 - opts_.beta2) * g.cwiseAbs2();
    x.array() -= Scalar(opts_.lr / c1) * m_.array() / (v_.array().sqrt() * Scalar(1.0 / std::sqrt(c2)) + Scalar(opts_.eps));
  }

 private:
  AdamOptions opts_;
  Vec<Scalar> m_, v_;
  long t_ = 0;
};

}  // namespace fcs
