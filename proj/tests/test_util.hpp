#pragma once

#include <cmath>
#include <functional>

#include "otta/autodiff.hpp"
#include "otta/rng.hpp"
#include "otta/tensor.hpp"

namespace otta::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(shape);
  for (Index i = 0; i < t.size(); ++i) t.flat()[i] = scale * rng.normal();
  return t;
}

/// Scale-guarded relative error between a gradient and its oracle:
/// max |a-b| / max(1, max |b|).
inline double rel_error(const Tensor& a, const Tensor& b) {
  const double diff = (a.flat() - b.flat()).cwiseAbs().maxCoeff();
  const double ref = std::max(1.0, b.flat().cwiseAbs().maxCoeff());
  return diff / ref;
}

/// Central-difference step tied to the probe magnitude, as the gradient
/// oracle tolerance prescribes.
inline double fd_step(const Tensor& x) {
  return 1e-5 * std::max(1.0, x.flat().cwiseAbs().maxCoeff());
}

/// Compares reverse-mode gradients of `build` (a scalar graph over one leaf)
/// against central differences at x.
inline double gradcheck(const std::function<Var(Tape&, Var)>& build, const Tensor& x) {
  Tape tape;
  Var leaf = tape.leaf(x);
  Var out = build(tape, leaf);
  Gradients grads = backward(out);
  const Tensor& ad = grads.at(leaf);

  auto f = [&](const Tensor& probe) {
    Tape t2;
    return build(t2, t2.leaf(probe)).value().value();
  };
  const Tensor fd = finite_diff_grad(f, x, fd_step(x));
  return rel_error(ad, fd);
}

}  // namespace otta::testing
