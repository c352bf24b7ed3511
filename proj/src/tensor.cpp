#include "otta/tensor.hpp"

#include <cmath>
#include <sstream>

namespace otta {

namespace {

Index shape_product(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor shape entries must be positive");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(Shape shape, Eigen::VectorXd data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw std::invalid_argument("tensor data length does not match shape " + shape_str());
  }
  if (!data_.allFinite()) {
    throw std::invalid_argument("tensor constructed with non-finite entries");
  }
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, Eigen::VectorXd::Constant(1, v)); }

Tensor Tensor::zeros(const Shape& shape) {
  return raw(shape, Eigen::VectorXd::Zero(shape_product(shape)));
}

Tensor Tensor::full(const Shape& shape, double v) {
  return Tensor(shape, Eigen::VectorXd::Constant(shape_product(shape), v));
}

Tensor Tensor::from_vector(const std::vector<double>& v) {
  Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
  return Tensor(Shape{static_cast<Index>(v.size())}, std::move(d));
}

Tensor Tensor::from_matrix(const RowMatrix& m) {
  Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
  return Tensor(Shape{m.rows(), m.cols()}, std::move(d));
}

Tensor Tensor::raw(Shape shape, Eigen::VectorXd data) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

Index Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("rows() on tensor of rank " + std::to_string(rank()));
  return shape_[0];
}

Index Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("cols() on tensor of rank " + std::to_string(rank()));
  return shape_[1];
}

double Tensor::value() const {
  if (size() != 1) throw std::invalid_argument("value() on non-scalar tensor " + shape_str());
  return data_[0];
}

Eigen::Map<const RowMatrix> Tensor::mat() const {
  if (rank() == 2) return {data_.data(), shape_[0], shape_[1]};
  if (rank() == 1) return {data_.data(), 1, shape_[0]};
  return {data_.data(), 1, 1};
}

Eigen::Map<RowMatrix> Tensor::mat() {
  if (rank() == 2) return {data_.data(), shape_[0], shape_[1]};
  if (rank() == 1) return {data_.data(), 1, shape_[0]};
  return {data_.data(), 1, 1};
}

bool Tensor::bit_equal(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  for (Index i = 0; i < data_.size(); ++i) {
    if (std::memcmp(&data_[i], &other.data_[i], sizeof(double)) != 0) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ']';
  return os.str();
}

void ensure_finite(const Tensor& t, const char* what) {
  if (!t.flat().allFinite()) {
    throw NumericError(std::string(what) + " produced a non-finite value");
  }
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(op) + " requires a rank-2 tensor, got " + t.shape_str());
  }
}

void require_axis(int axis, const char* op) {
  if (axis != 0 && axis != 1) {
    throw std::invalid_argument(std::string(op) + ": axis must be 0 or 1");
  }
}

enum class Broadcast { None, RowOfA, ColOfA, RowOfB, ColOfB };

// Resolves the broadcast pattern for a binary elementwise op. Exact shape
// matches pass for any rank; otherwise one side must be a [1,C] row or [N,1]
// column against the other's [N,C].
Broadcast binary_pattern(const Tensor& a, const Tensor& b, const char* op) {
  if (a.same_shape(b)) return Broadcast::None;
  if (a.rank() == 2 && b.rank() == 2) {
    if (b.rows() == 1 && b.cols() == a.cols() && a.rows() > 1) return Broadcast::RowOfB;
    if (b.cols() == 1 && b.rows() == a.rows() && a.cols() > 1) return Broadcast::ColOfB;
    if (a.rows() == 1 && a.cols() == b.cols() && b.rows() > 1) return Broadcast::RowOfA;
    if (a.cols() == 1 && a.rows() == b.rows() && b.cols() > 1) return Broadcast::ColOfA;
  }
  throw std::invalid_argument(std::string(op) + ": shapes " + a.shape_str() + " and " +
                              b.shape_str() + " do not conform");
}

template <typename F>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* op, F&& f) {
  const Broadcast pat = binary_pattern(a, b, op);
  Tensor out;
  switch (pat) {
    case Broadcast::None: {
      Eigen::VectorXd d = f(a.flat().array(), b.flat().array());
      out = Tensor::raw(a.shape(), std::move(d));
      break;
    }
    case Broadcast::RowOfB: {
      RowMatrix m = f(a.mat().array(), b.mat().row(0).replicate(a.rows(), 1).array());
      out = Tensor::from_matrix(m);
      break;
    }
    case Broadcast::ColOfB: {
      RowMatrix m = f(a.mat().array(), b.mat().col(0).replicate(1, a.cols()).array());
      out = Tensor::from_matrix(m);
      break;
    }
    case Broadcast::RowOfA: {
      RowMatrix m = f(a.mat().row(0).replicate(b.rows(), 1).array(), b.mat().array());
      out = Tensor::from_matrix(m);
      break;
    }
    case Broadcast::ColOfA: {
      RowMatrix m = f(a.mat().col(0).replicate(1, b.cols()).array(), b.mat().array());
      out = Tensor::from_matrix(m);
      break;
    }
  }
  ensure_finite(out, op);
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const Index ar = trans_a ? a.cols() : a.rows();
  const Index ac = trans_a ? a.rows() : a.cols();
  const Index br = trans_b ? b.cols() : b.rows();
  const Index bc = trans_b ? b.rows() : b.cols();
  if (ac != br) {
    throw std::invalid_argument("matmul: inner dimensions do not conform, " + a.shape_str() +
                                (trans_a ? "^T" : "") + " * " + b.shape_str() +
                                (trans_b ? "^T" : ""));
  }
  RowMatrix m(ar, bc);
  if (!trans_a && !trans_b) m.noalias() = a.mat() * b.mat();
  else if (!trans_a && trans_b) m.noalias() = a.mat() * b.mat().transpose();
  else if (trans_a && !trans_b) m.noalias() = a.mat().transpose() * b.mat();
  else m.noalias() = a.mat().transpose() * b.mat().transpose();
  Tensor out = Tensor::from_matrix(m);
  ensure_finite(out, "matmul");
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, "add", [](const auto& x, const auto& y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, "sub", [](const auto& x, const auto& y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, "mul", [](const auto& x, const auto& y) { return x * y; });
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = Tensor::raw(a.shape(), a.flat() * s);
  ensure_finite(out, "scale");
  return out;
}

Tensor exp(const Tensor& a) {
  Tensor out = Tensor::raw(a.shape(), a.flat().array().exp());
  ensure_finite(out, "exp");
  return out;
}

Tensor log(const Tensor& a) {
  if ((a.flat().array() <= 0.0).any()) {
    throw NumericError("log of a non-positive input");
  }
  return Tensor::raw(a.shape(), a.flat().array().log());
}

Tensor clamp_min(const Tensor& a, double lo) {
  return Tensor::raw(a.shape(), a.flat().array().max(lo));
}

Tensor arccos(const Tensor& a) {
  const double hi = 1.0 - kArccosDomainPad;
  Eigen::ArrayXd clamped = a.flat().array().min(hi).max(-hi);
  return Tensor::raw(a.shape(), clamped.acos());
}

Tensor relu(const Tensor& a) {
  return Tensor::raw(a.shape(), a.flat().array().max(0.0));
}

Tensor sum_all(const Tensor& a) {
  Tensor out = Tensor::raw(Shape{}, Eigen::VectorXd::Constant(1, a.flat().sum()));
  ensure_finite(out, "sum");
  return out;
}

Tensor mean_all(const Tensor& a) {
  Tensor out = Tensor::raw(Shape{}, Eigen::VectorXd::Constant(1, a.flat().mean()));
  ensure_finite(out, "mean");
  return out;
}

Tensor sum_along(const Tensor& a, int axis) {
  require_rank2(a, "sum_along");
  require_axis(axis, "sum_along");
  RowMatrix m;
  if (axis == 0) m = a.mat().colwise().sum();
  else m = a.mat().rowwise().sum();
  Tensor out = Tensor::from_matrix(m);
  ensure_finite(out, "sum_along");
  return out;
}

Tensor mean_along(const Tensor& a, int axis) {
  require_rank2(a, "mean_along");
  require_axis(axis, "mean_along");
  RowMatrix m;
  if (axis == 0) m = a.mat().colwise().mean();
  else m = a.mat().rowwise().mean();
  Tensor out = Tensor::from_matrix(m);
  ensure_finite(out, "mean_along");
  return out;
}

MaxAlongResult max_along(const Tensor& a, int axis) {
  require_rank2(a, "max_along");
  require_axis(axis, "max_along");
  const auto m = a.mat();
  MaxAlongResult res;
  if (axis == 1) {
    RowMatrix vals(m.rows(), 1);
    res.indices.resize(static_cast<size_t>(m.rows()));
    for (Index i = 0; i < m.rows(); ++i) {
      Index best = 0;
      for (Index j = 1; j < m.cols(); ++j) {
        if (m(i, j) > m(i, best)) best = j;  // strict: ties keep the lowest index
      }
      res.indices[static_cast<size_t>(i)] = best;
      vals(i, 0) = m(i, best);
    }
    res.values = Tensor::from_matrix(vals);
  } else {
    RowMatrix vals(1, m.cols());
    res.indices.resize(static_cast<size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) {
      Index best = 0;
      for (Index i = 1; i < m.rows(); ++i) {
        if (m(i, j) > m(best, j)) best = i;
      }
      res.indices[static_cast<size_t>(j)] = best;
      vals(0, j) = m(best, j);
    }
    res.values = Tensor::from_matrix(vals);
  }
  return res;
}

Tensor l2_norm_along(const Tensor& a, int axis) {
  require_rank2(a, "l2_norm_along");
  require_axis(axis, "l2_norm_along");
  RowMatrix m;
  if (axis == 0) m = (a.mat().colwise().squaredNorm().array() + kNormGuard).sqrt();
  else m = (a.mat().rowwise().squaredNorm().array() + kNormGuard).sqrt();
  Tensor out = Tensor::from_matrix(m);
  ensure_finite(out, "l2_norm_along");
  return out;
}

Tensor softmax_along(const Tensor& a, int axis) {
  require_rank2(a, "softmax_along");
  require_axis(axis, "softmax_along");
  RowMatrix x = a.mat();
  if (axis == 0) x.transposeInPlace();
  for (Index i = 0; i < x.rows(); ++i) {
    auto row = x.row(i).array();
    row -= row.maxCoeff();
    row = row.exp();
    row /= row.sum();
  }
  if (axis == 0) x.transposeInPlace();
  Tensor out = Tensor::from_matrix(x);
  ensure_finite(out, "softmax_along");
  return out;
}

}  // namespace otta
