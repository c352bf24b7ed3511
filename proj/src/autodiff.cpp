#include "otta/autodiff.hpp"

#include <cmath>

namespace otta {

const Tensor& Var::value() const {
  if (!valid()) throw std::invalid_argument("value() on an unbound Var");
  return tape_->value(id_);
}

const Tensor& Gradients::at(const Var& leaf) const& {
  auto it = by_leaf_.find(leaf.id());
  if (it == by_leaf_.end()) {
    throw std::invalid_argument("gradient requested for a Var that is not a leaf of this backward pass");
  }
  return it->second;
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::leaf(Tensor v) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(v);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Tensor v) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(v);
  return push(std::move(n));
}

namespace {

Tape* common_tape(const Var& a, const Var& b, const char* op) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument(std::string(op) + ": unbound Var");
  if (a.tape() != b.tape()) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
  return a.tape();
}

Tape* own_tape(const Var& a, const char* op) {
  if (!a.valid()) throw std::invalid_argument(std::string(op) + ": unbound Var");
  return a.tape();
}

}  // namespace

#define OTTA_UNARY(fn, opkind, eval)                      \
  Var fn(const Var& a) {                                  \
    Tape* t = own_tape(a, #fn);                           \
    Tape::Node n;                                         \
    n.op = Tape::Op::opkind;                              \
    n.a = a.id();                                         \
    n.value = eval(a.value());                            \
    n.requires_grad = t->node(a.id()).requires_grad;      \
    return t->push(std::move(n));                         \
  }

Var matmul(const Var& a, const Var& b, bool trans_a, bool trans_b) {
  Tape* t = common_tape(a, b, "matmul");
  Tape::Node n;
  n.op = Tape::Op::MatMul;
  n.a = a.id();
  n.b = b.id();
  n.ta = trans_a;
  n.tb = trans_b;
  n.value = matmul(a.value(), b.value(), trans_a, trans_b);
  n.requires_grad = t->node(a.id()).requires_grad || t->node(b.id()).requires_grad;
  return t->push(std::move(n));
}

#define OTTA_BINARY(fn, opkind)                                                        \
  Var fn(const Var& a, const Var& b) {                                                 \
    Tape* t = common_tape(a, b, #fn);                                                  \
    Tape::Node n;                                                                      \
    n.op = Tape::Op::opkind;                                                           \
    n.a = a.id();                                                                      \
    n.b = b.id();                                                                      \
    n.value = fn(a.value(), b.value());                                                \
    n.requires_grad = t->node(a.id()).requires_grad || t->node(b.id()).requires_grad;  \
    return t->push(std::move(n));                                                      \
  }

OTTA_BINARY(add, Add)
OTTA_BINARY(sub, Sub)
OTTA_BINARY(mul, Mul)

Var scale(const Var& a, double s) {
  Tape* t = own_tape(a, "scale");
  Tape::Node n;
  n.op = Tape::Op::Scale;
  n.a = a.id();
  n.scalar = s;
  n.value = scale(a.value(), s);
  n.requires_grad = t->node(a.id()).requires_grad;
  return t->push(std::move(n));
}

OTTA_UNARY(exp, Exp, exp)
OTTA_UNARY(log, Log, log)
OTTA_UNARY(relu, Relu, relu)
OTTA_UNARY(arccos, Arccos, arccos)
OTTA_UNARY(sum_all, SumAll, sum_all)
OTTA_UNARY(mean_all, MeanAll, mean_all)

Var clamp_min(const Var& a, double lo) {
  Tape* t = own_tape(a, "clamp_min");
  Tape::Node n;
  n.op = Tape::Op::ClampMin;
  n.a = a.id();
  n.scalar = lo;
  n.value = clamp_min(a.value(), lo);
  n.requires_grad = t->node(a.id()).requires_grad;
  return t->push(std::move(n));
}

#define OTTA_AXIS(fn, opkind)                             \
  Var fn(const Var& a, int axis) {                        \
    Tape* t = own_tape(a, #fn);                           \
    Tape::Node n;                                         \
    n.op = Tape::Op::opkind;                              \
    n.a = a.id();                                         \
    n.axis = axis;                                        \
    n.value = fn(a.value(), axis);                        \
    n.requires_grad = t->node(a.id()).requires_grad;      \
    return t->push(std::move(n));                         \
  }

OTTA_AXIS(sum_along, SumAxis)
OTTA_AXIS(mean_along, MeanAxis)
OTTA_AXIS(l2_norm_along, L2NormAxis)
OTTA_AXIS(softmax_along, SoftmaxAxis)

MaxAlongVar max_along(const Var& a, int axis) {
  Tape* t = own_tape(a, "max_along");
  MaxAlongResult r = max_along(a.value(), axis);
  Tape::Node n;
  n.op = Tape::Op::MaxAxis;
  n.a = a.id();
  n.axis = axis;
  n.value = std::move(r.values);
  n.indices = r.indices;
  n.requires_grad = t->node(a.id()).requires_grad;
  Var v = t->push(std::move(n));
  return {v, std::move(r.indices)};
}

#undef OTTA_UNARY
#undef OTTA_BINARY
#undef OTTA_AXIS

// ---------------------------------------------------------------------------
// Reverse pass
// ---------------------------------------------------------------------------

namespace {

// Sums an upstream gradient back down to the shape of a (possibly broadcast)
// binary-op input.
Tensor reduce_to_shape(const Tensor& grad, const Shape& target) {
  if (grad.shape() == target) return grad;
  if (target.size() == 2 && grad.rank() == 2) {
    if (target[0] == 1 && target[1] == grad.cols()) {
      RowMatrix m = grad.mat().colwise().sum();
      return Tensor::from_matrix(m);
    }
    if (target[1] == 1 && target[0] == grad.rows()) {
      RowMatrix m = grad.mat().rowwise().sum();
      return Tensor::from_matrix(m);
    }
  }
  throw std::invalid_argument("backward: cannot reduce gradient to input shape");
}

// Expands a broadcast input's value to the full output shape for product
// rules; mirrors binary_pattern in tensor.cpp.
RowMatrix expand_to(const Tensor& t, Index rows, Index cols) {
  if (t.rank() == 2 && t.rows() == rows && t.cols() == cols) return t.mat();
  if (t.rank() != 2 && t.size() == rows * cols) {
    return Eigen::Map<const RowMatrix>(t.flat().data(), rows, cols);
  }
  if (t.rows() == 1) return t.mat().replicate(rows, 1);
  return t.mat().replicate(1, cols);
}

}  // namespace

Gradients backward(const Var& output) {
  if (!output.valid()) throw std::invalid_argument("backward: unbound Var");
  Tape* tape = output.tape();
  if (tape->size() == 0) throw std::invalid_argument("backward: empty graph");
  if (output.value().size() != 1) {
    throw std::invalid_argument("backward: output must be scalar, got " + output.value().shape_str());
  }

  std::vector<Tensor> grads(tape->size());
  std::vector<bool> seen(tape->size(), false);

  auto accumulate = [&](int id, Tensor g) {
    if (id < 0) return;
    const Tape::Node& node = tape->node(id);
    if (!node.requires_grad) return;
    if (!seen[static_cast<size_t>(id)]) {
      grads[static_cast<size_t>(id)] = std::move(g);
      seen[static_cast<size_t>(id)] = true;
    } else {
      Tensor& acc = grads[static_cast<size_t>(id)];
      acc = Tensor::raw(acc.shape(), acc.flat() + g.flat());
    }
  };

  accumulate(output.id(), Tensor::full(output.value().shape(), 1.0));

  for (int id = output.id(); id >= 0; --id) {
    if (!seen[static_cast<size_t>(id)]) continue;
    const Tape::Node& node = tape->node(id);
    if (!node.requires_grad) continue;
    const Tensor& g = grads[static_cast<size_t>(id)];

    switch (node.op) {
      case Tape::Op::Leaf:
      case Tape::Op::Constant:
        break;
      case Tape::Op::MatMul: {
        const Tensor& av = tape->value(node.a);
        const Tensor& bv = tape->value(node.b);
        // C = M N with M = A^ta, N = B^tb: gM = G N^T, gN = M^T G.
        RowMatrix gm, gn;
        if (node.tb) gm.noalias() = g.mat() * bv.mat();
        else gm.noalias() = g.mat() * bv.mat().transpose();
        if (node.ta) gn.noalias() = av.mat() * g.mat();
        else gn.noalias() = av.mat().transpose() * g.mat();
        accumulate(node.a, Tensor::from_matrix(node.ta ? RowMatrix(gm.transpose()) : gm));
        accumulate(node.b, Tensor::from_matrix(node.tb ? RowMatrix(gn.transpose()) : gn));
        break;
      }
      case Tape::Op::Add: {
        accumulate(node.a, reduce_to_shape(g, tape->value(node.a).shape()));
        accumulate(node.b, reduce_to_shape(g, tape->value(node.b).shape()));
        break;
      }
      case Tape::Op::Sub: {
        accumulate(node.a, reduce_to_shape(g, tape->value(node.a).shape()));
        Tensor neg = Tensor::raw(g.shape(), -g.flat());
        accumulate(node.b, reduce_to_shape(neg, tape->value(node.b).shape()));
        break;
      }
      case Tape::Op::Mul: {
        const Tensor& av = tape->value(node.a);
        const Tensor& bv = tape->value(node.b);
        if (av.same_shape(bv)) {
          accumulate(node.a, Tensor::raw(av.shape(), g.flat().cwiseProduct(bv.flat())));
          accumulate(node.b, Tensor::raw(bv.shape(), g.flat().cwiseProduct(av.flat())));
        } else {
          const Index r = node.value.rows(), c = node.value.cols();
          RowMatrix ga = g.mat().cwiseProduct(expand_to(bv, r, c));
          RowMatrix gb = g.mat().cwiseProduct(expand_to(av, r, c));
          accumulate(node.a, reduce_to_shape(Tensor::from_matrix(ga), av.shape()));
          accumulate(node.b, reduce_to_shape(Tensor::from_matrix(gb), bv.shape()));
        }
        break;
      }
      case Tape::Op::Scale:
        accumulate(node.a, Tensor::raw(g.shape(), g.flat() * node.scalar));
        break;
      case Tape::Op::Exp:
        accumulate(node.a, Tensor::raw(g.shape(), g.flat().cwiseProduct(node.value.flat())));
        break;
      case Tape::Op::Log: {
        const Tensor& av = tape->value(node.a);
        accumulate(node.a, Tensor::raw(g.shape(), g.flat().cwiseQuotient(av.flat())));
        break;
      }
      case Tape::Op::ClampMin: {
        const Tensor& av = tape->value(node.a);
        Eigen::ArrayXd mask = (av.flat().array() > node.scalar).cast<double>();
        accumulate(node.a, Tensor::raw(g.shape(), g.flat().array() * mask));
        break;
      }
      case Tape::Op::Arccos: {
        // d/du arccos(clamp(u)) = -1/sqrt(1-u^2) inside the clamp, 0 outside.
        const Tensor& av = tape->value(node.a);
        const double hi = 1.0 - kArccosDomainPad;
        Eigen::ArrayXd u = av.flat().array();
        Eigen::ArrayXd deriv =
            (u.abs() < hi).select(-1.0 / (1.0 - u.square()).sqrt(), Eigen::ArrayXd::Zero(u.size()));
        accumulate(node.a, Tensor::raw(g.shape(), g.flat().array() * deriv));
        break;
      }
      case Tape::Op::Relu: {
        const Tensor& av = tape->value(node.a);
        Eigen::ArrayXd mask = (av.flat().array() > 0.0).cast<double>();
        accumulate(node.a, Tensor::raw(g.shape(), g.flat().array() * mask));
        break;
      }
      case Tape::Op::SumAll: {
        const Tensor& av = tape->value(node.a);
        accumulate(node.a, Tensor::full(av.shape(), g.value()));
        break;
      }
      case Tape::Op::MeanAll: {
        const Tensor& av = tape->value(node.a);
        accumulate(node.a, Tensor::full(av.shape(), g.value() / static_cast<double>(av.size())));
        break;
      }
      case Tape::Op::SumAxis:
      case Tape::Op::MeanAxis: {
        const Tensor& av = tape->value(node.a);
        const Index r = av.rows(), c = av.cols();
        RowMatrix gm = node.axis == 0 ? RowMatrix(g.mat().replicate(r, 1))
                                      : RowMatrix(g.mat().replicate(1, c));
        if (node.op == Tape::Op::MeanAxis) {
          gm /= static_cast<double>(node.axis == 0 ? r : c);
        }
        accumulate(node.a, Tensor::from_matrix(gm));
        break;
      }
      case Tape::Op::MaxAxis: {
        const Tensor& av = tape->value(node.a);
        RowMatrix gm = RowMatrix::Zero(av.rows(), av.cols());
        if (node.axis == 1) {
          for (Index i = 0; i < av.rows(); ++i) gm(i, node.indices[static_cast<size_t>(i)]) = g.mat()(i, 0);
        } else {
          for (Index j = 0; j < av.cols(); ++j) gm(node.indices[static_cast<size_t>(j)], j) = g.mat()(0, j);
        }
        accumulate(node.a, Tensor::from_matrix(gm));
        break;
      }
      case Tape::Op::L2NormAxis: {
        // d n/d x = x / n with the 1e-12 guard already inside n.
        const Tensor& av = tape->value(node.a);
        RowMatrix gm(av.rows(), av.cols());
        if (node.axis == 1) {
          gm = av.mat().array().colwise() *
               (g.mat().col(0).array() / node.value.mat().col(0).array());
        } else {
          gm = av.mat().array().rowwise() *
               (g.mat().row(0).array() / node.value.mat().row(0).array());
        }
        accumulate(node.a, Tensor::from_matrix(gm));
        break;
      }
      case Tape::Op::SoftmaxAxis: {
        // vjp: p * (g - <g, p> along the axis)
        RowMatrix p = node.value.mat();
        RowMatrix gm = g.mat();
        if (node.axis == 0) {
          p.transposeInPlace();
          gm.transposeInPlace();
        }
        RowMatrix out(p.rows(), p.cols());
        for (Index i = 0; i < p.rows(); ++i) {
          const double dot = gm.row(i).dot(p.row(i));
          out.row(i) = p.row(i).array() * (gm.row(i).array() - dot);
        }
        if (node.axis == 0) out.transposeInPlace();
        accumulate(node.a, Tensor::from_matrix(out));
        break;
      }
    }
  }

  Gradients result;
  for (size_t id = 0; id < tape->size(); ++id) {
    const Tape::Node& node = tape->node(static_cast<int>(id));
    if (node.op != Tape::Op::Leaf) continue;
    if (seen[id]) {
      result.by_leaf_.emplace(static_cast<int>(id), std::move(grads[id]));
    } else {
      result.by_leaf_.emplace(static_cast<int>(id), Tensor::zeros(node.value.shape()));
    }
  }
  return result;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  Eigen::VectorXd grad(x.size());
  Tensor probe = x;
  for (Index k = 0; k < x.size(); ++k) {
    const double saved = probe.flat()[k];
    probe.flat()[k] = saved + step;
    const double fp = f(probe);
    probe.flat()[k] = saved - step;
    const double fm = f(probe);
    probe.flat()[k] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: objective returned a non-finite value");
    }
    grad[k] = (fp - fm) / (2.0 * step);
  }
  return Tensor::raw(x.shape(), std::move(grad));
}

}  // namespace otta
