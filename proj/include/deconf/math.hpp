#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace deconf {

/// Elementwise exp with exp(-inf) == 0 exactly (Eigen's packet exp clamps its input).
template <typename Derived>
auto exp_exact(const Eigen::DenseBase<Derived>& x) {
  return x.derived().unaryExpr([](typename Derived::Scalar v) { return std::exp(v); });
}

/// log(sum(exp(x))), stable for entries equal to -inf. Returns -inf when every entry is -inf.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log(exp_exact((x.derived().array() - m).matrix()).sum());
}

/// Log-softmax of a row or column of logits, returned as a column vector.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> log_softmax(
    const Eigen::DenseBase<Derived>& logits) {
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> out(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) out(i) = logits.derived().coeff(i);
  out.array() -= log_sum_exp(out);
  return out;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::DenseBase<Derived>& logits) {
  return exp_exact(log_softmax(logits));
}

/// Shannon entropy in nats; 0 log 0 = 0.
template <typename Derived>
typename Derived::Scalar entropy(const Eigen::DenseBase<Derived>& probs) {
  using Scalar = typename Derived::Scalar;
  Scalar h = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const Scalar p = probs.derived().coeff(i);
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

/// KL(p || q) in nats. Infinite when q lacks support that p has.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar kl_divergence(const Eigen::DenseBase<DerivedP>& p,
                                        const Eigen::DenseBase<DerivedQ>& q) {
  using Scalar = typename DerivedP::Scalar;
  Scalar kl = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const Scalar pi = p.derived().coeff(i);
    if (pi <= 0) continue;
    const Scalar qi = q.derived().coeff(i);
    if (qi <= 0) return std::numeric_limits<Scalar>::infinity();
    kl += pi * (std::log(pi) - std::log(qi));
  }
  return kl;
}

template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar total_variation(const Eigen::DenseBase<DerivedP>& p,
                                          const Eigen::DenseBase<DerivedQ>& q) {
  typename DerivedP::Scalar sum = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    sum += std::abs(p.derived().coeff(i) - q.derived().coeff(i));
  return sum / 2;
}

}  // namespace deconf
