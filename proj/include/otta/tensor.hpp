#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace otta {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Thrown when an operation would produce a non-finite value (overflow,
/// log of a non-positive input, divergent training, ...). Distinct from
/// std::invalid_argument, which covers shape and precondition violations.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense array of 64-bit reals with an explicit shape, stored flat in
/// row-major order. Ranks 0 (scalar), 1 (vector) and 2 (matrix) are used;
/// all entries are finite by construction.
class Tensor {
 public:
  Tensor() : shape_{}, data_(1) { data_[0] = 0.0; }

  /// Validates product(shape) == data.size() and that every entry is finite.
  Tensor(Shape shape, Eigen::VectorXd data);

  static Tensor scalar(double v);
  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double v);
  static Tensor from_vector(const std::vector<double>& v);
  static Tensor from_matrix(const RowMatrix& m);
  /// Wraps already-validated storage; callers guarantee finiteness.
  static Tensor raw(Shape shape, Eigen::VectorXd data);

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return data_.size(); }

  // Rank-2 accessors.
  Index rows() const;
  Index cols() const;

  double operator()(Index i, Index j) const { return mat()(i, j); }
  double operator[](Index i) const { return data_[i]; }

  /// Scalar extraction; requires size() == 1.
  double value() const;

  const Eigen::VectorXd& flat() const { return data_; }
  Eigen::VectorXd& flat() { return data_; }

  Eigen::Map<const RowMatrix> mat() const;
  Eigen::Map<RowMatrix> mat();

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool bit_equal(const Tensor& other) const;

  std::string shape_str() const;

 private:
  Shape shape_;
  Eigen::VectorXd data_;
};

// ---------------------------------------------------------------------------
// Primitive kernels. These are the forward evaluations of the differentiable
// op set; the tape in autodiff.hpp records them. Every kernel raises
// NumericError instead of returning NaN/Inf.
// ---------------------------------------------------------------------------

/// c = a^Ta * b^Tb for rank-2 inputs with conforming inner dimensions.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false,
              bool trans_b = false);

// Elementwise binary ops. Shapes must match exactly, or one operand may be a
// broadcastable rank-2 row [1,C] or column [N,1] against an [N,C] matrix.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor exp(const Tensor& a);
/// Natural log; raises NumericError on any non-positive entry.
Tensor log(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);
/// arccos with inputs clamped to [-1 + 1e-12, 1 - 1e-12]; the derivative of
/// arccos is singular at the endpoints and cosines can round outside [-1, 1].
Tensor arccos(const Tensor& a);
Tensor relu(const Tensor& a);

inline constexpr double kArccosDomainPad = 1e-12;
inline constexpr double kNormGuard = 1e-12;

/// Full reductions to a rank-0 scalar.
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

/// Axis reductions on rank-2 inputs, keeping the reduced axis with extent 1:
/// axis 0 maps [N,C] -> [1,C], axis 1 maps [N,C] -> [N,1].
Tensor sum_along(const Tensor& a, int axis);
Tensor mean_along(const Tensor& a, int axis);

struct MaxAlongResult {
  Tensor values;               // keepdims, as above
  std::vector<Index> indices;  // argmax per slice; ties broken by lowest index
};
MaxAlongResult max_along(const Tensor& a, int axis);

/// Per-slice Euclidean norm sqrt(sum x^2 + 1e-12); the guard keeps the
/// derivative bounded for near-zero slices.
Tensor l2_norm_along(const Tensor& a, int axis);

/// Numerically stable softmax (max-subtraction) along the given axis.
Tensor softmax_along(const Tensor& a, int axis);

/// Raises NumericError mentioning `what` if any entry of t is NaN/Inf.
void ensure_finite(const Tensor& t, const char* what);

}  // namespace otta
