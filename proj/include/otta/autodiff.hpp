#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "otta/tensor.hpp"

namespace otta {

class Tape;

/// Cheap handle to a node on a Tape. Copyable; valid as long as its tape is.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Gradients per leaf produced by backward(); leaves not reachable from the
/// output hold zeros shaped like the leaf.
class Gradients {
 public:
  const Tensor& at(const Var& leaf) const&;
  // The returned reference points into this object; bind it to a name first.
  const Tensor& at(const Var& leaf) const&& = delete;

 private:
  friend Gradients backward(const Var&);
  std::unordered_map<int, Tensor> by_leaf_;
};

struct MaxAlongVar;

/// Records primitive operations eagerly: every op evaluates its output
/// immediately and appends a node, so nodes are topologically ordered by
/// construction. One tape belongs to one execution context at a time.
class Tape {
 public:
  enum class Op : std::uint8_t {
    Leaf,
    Constant,
    MatMul,
    Add,
    Sub,
    Mul,
    Scale,
    Exp,
    Log,
    ClampMin,
    Arccos,
    Relu,
    SumAll,
    MeanAll,
    SumAxis,
    MeanAxis,
    MaxAxis,
    L2NormAxis,
    SoftmaxAxis,
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    Tensor value;
    double scalar = 0.0;           // Scale factor / clamp threshold
    int axis = -1;                 // axis reductions
    bool ta = false, tb = false;   // MatMul transpose flags
    std::vector<Index> indices;    // MaxAxis argmax positions
    bool requires_grad = false;
  };

  /// Trainable input: backward() reports a gradient for it.
  Var leaf(Tensor v);
  /// Non-differentiable input (data, labels, fixed statistics).
  Var constant(Tensor v);

  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  friend Gradients backward(const Var&);
  friend Var matmul(const Var&, const Var&, bool, bool);
  friend Var add(const Var&, const Var&);
  friend Var sub(const Var&, const Var&);
  friend Var mul(const Var&, const Var&);
  friend Var scale(const Var&, double);
  friend Var exp(const Var&);
  friend Var log(const Var&);
  friend Var clamp_min(const Var&, double);
  friend Var arccos(const Var&);
  friend Var relu(const Var&);
  friend Var sum_all(const Var&);
  friend Var mean_all(const Var&);
  friend Var sum_along(const Var&, int);
  friend Var mean_along(const Var&, int);
  friend struct MaxAlongVar;
  friend MaxAlongVar max_along(const Var&, int);
  friend Var l2_norm_along(const Var&, int);
  friend Var softmax_along(const Var&, int);

  Var push(Node node);

  std::vector<Node> nodes_;
};

// Recorded counterparts of the tensor kernels. Both inputs of a binary op
// must live on the same tape.
Var matmul(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var exp(const Var& a);
Var log(const Var& a);
Var clamp_min(const Var& a, double lo);
Var arccos(const Var& a);
Var relu(const Var& a);
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var sum_along(const Var& a, int axis);
Var mean_along(const Var& a, int axis);

struct MaxAlongVar {
  Var values;
  std::vector<Index> indices;  // constant w.r.t. differentiation
};
MaxAlongVar max_along(const Var& a, int axis);

Var l2_norm_along(const Var& a, int axis);
Var softmax_along(const Var& a, int axis);

/// Reverse-mode accumulation from a scalar output back to every leaf.
/// Deterministic: identical graphs yield bit-identical gradients.
Gradients backward(const Var& output);

/// Central-difference gradient oracle:
///   g_k = (f(x + step e_k) - f(x - step e_k)) / (2 step).
/// Raises NumericError if f evaluates non-finite at any probe point.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double step);

}  // namespace otta
