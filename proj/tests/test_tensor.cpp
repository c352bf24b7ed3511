#include <doctest.h>

#include "otta/rng.hpp"
#include "otta/tensor.hpp"

using namespace otta;

TEST_CASE("tensor construction enforces shape and finiteness") {
  CHECK_THROWS_AS(Tensor(Shape{2, 3}, Eigen::VectorXd::Zero(5)), std::invalid_argument);
  CHECK_THROWS_AS(Tensor(Shape{0}, Eigen::VectorXd::Zero(0)), std::invalid_argument);
  Eigen::VectorXd bad(2);
  bad << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(Tensor(Shape{2}, bad), std::invalid_argument);

  Tensor t = Tensor::full(Shape{2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t(1, 2) == 1.5);
}

TEST_CASE("matmul with identity returns the input") {
  RowMatrix eye = RowMatrix::Identity(3, 3);
  Rng rng(7);
  RowMatrix m(3, 4);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  Tensor out = matmul(Tensor::from_matrix(eye), Tensor::from_matrix(m));
  CHECK(out.bit_equal(Tensor::from_matrix(m)));
}

TEST_CASE("matmul transpose flags") {
  Rng rng(3);
  RowMatrix a(2, 3), b(4, 3);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  for (Index i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
  Tensor ab = matmul(Tensor::from_matrix(a), Tensor::from_matrix(b), false, true);
  RowMatrix want = a * b.transpose();
  CHECK((ab.mat() - want).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(matmul(Tensor::from_matrix(a), Tensor::from_matrix(b)), std::invalid_argument);
}

TEST_CASE("softmax of zero logits is uniform and rows always sum to 1") {
  Tensor s = softmax_along(Tensor::zeros(Shape{1, 3}), 1);
  for (int c = 0; c < 3; ++c) CHECK(s(0, c) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  // stability: extreme logits do not overflow
  Tensor big = Tensor::raw(Shape{1, 3}, (Eigen::VectorXd(3) << 1000.0, 0.0, 0.0).finished());
  Tensor sb = softmax_along(big, 1);
  CHECK(sb(0, 0) == doctest::Approx(1.0));
  CHECK(sb(0, 1) <= 1e-300);

  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor x = Tensor::zeros(Shape{4, 6});
    for (Index i = 0; i < x.size(); ++i) x.flat()[i] = 20.0 * rng.normal();
    Tensor p = softmax_along(x, 1);
    for (Index r = 0; r < 4; ++r) {
      CHECK(p.mat().row(r).minCoeff() >= 0.0);
      CHECK(std::abs(p.mat().row(r).sum() - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("l2 norm along rows matches hand arithmetic") {
  Tensor v = Tensor::raw(Shape{1, 2}, (Eigen::VectorXd(2) << 3.0, 4.0).finished());
  Tensor n = l2_norm_along(v, 1);
  CHECK(n(0, 0) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("broadcast rules for binary elementwise ops") {
  Tensor m = Tensor::full(Shape{3, 2}, 2.0);
  Tensor row = Tensor::raw(Shape{1, 2}, (Eigen::VectorXd(2) << 1.0, -1.0).finished());
  Tensor col = Tensor::raw(Shape{3, 1}, (Eigen::VectorXd(3) << 1.0, 2.0, 3.0).finished());

  Tensor a = add(m, row);
  CHECK(a(0, 0) == 3.0);
  CHECK(a(2, 1) == 1.0);
  Tensor b = mul(m, col);
  CHECK(b(2, 0) == 6.0);
  Tensor c = sub(row, m);  // broadcast on the first operand
  CHECK(c(1, 0) == -1.0);

  CHECK_THROWS_AS(add(m, Tensor::zeros(Shape{2, 3})), std::invalid_argument);
}

TEST_CASE("max along rows breaks ties by lowest index") {
  Tensor x = Tensor::raw(Shape{2, 3},
                         (Eigen::VectorXd(6) << 0.5, 0.5, 0.1, -0.2, -0.1, -0.9).finished());
  MaxAlongResult r = max_along(x, 1);
  CHECK(r.indices[0] == 0);
  CHECK(r.indices[1] == 1);
  CHECK(r.values(0, 0) == 0.5);
  CHECK(r.values(1, 0) == -0.1);
}

TEST_CASE("kernels raise instead of producing non-finite values") {
  Tensor x = Tensor::full(Shape{2}, 1000.0);
  CHECK_THROWS_AS(exp(x), NumericError);
  CHECK_THROWS_AS(log(Tensor::zeros(Shape{2})), NumericError);
  CHECK_THROWS_AS(log(Tensor::full(Shape{2}, -1.0)), NumericError);

  // arccos is clamped rather than erroring just outside [-1, 1]
  Tensor edge = Tensor::raw(Shape{2}, (Eigen::VectorXd(2) << 1.0 + 1e-15, -1.0 - 1e-15).finished());
  Tensor a = arccos(edge);
  CHECK(a[0] == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(a[1] == doctest::Approx(M_PI).epsilon(1e-5));
}

TEST_CASE("reductions") {
  Tensor x = Tensor::raw(Shape{2, 2}, (Eigen::VectorXd(4) << 1.0, 2.0, 3.0, 4.0).finished());
  CHECK(sum_all(x).value() == 10.0);
  CHECK(mean_all(x).value() == 2.5);
  Tensor s0 = sum_along(x, 0);
  CHECK(s0.shape() == Shape{1, 2});
  CHECK(s0(0, 1) == 6.0);
  Tensor m1 = mean_along(x, 1);
  CHECK(m1.shape() == Shape{2, 1});
  CHECK(m1(1, 0) == 3.5);
}
