#include <doctest.h>

#include "otta/losses.hpp"
#include "test_util.hpp"

using namespace otta;
using namespace otta::testing;

TEST_CASE("backward of sum is all ones; unreachable leaves get zeros") {
  Tape tape;
  Var x = tape.leaf(Tensor::full(Shape{2, 3}, 2.0));
  Var unused = tape.leaf(Tensor::zeros(Shape{4}));
  Gradients g = backward(sum_all(x));
  CHECK(g.at(x).bit_equal(Tensor::full(Shape{2, 3}, 1.0)));
  CHECK(g.at(unused).bit_equal(Tensor::zeros(Shape{4})));
}

TEST_CASE("backward validates its input") {
  Tape tape;
  Var x = tape.leaf(Tensor::full(Shape{2, 2}, 1.0));
  CHECK_THROWS_AS(backward(x), std::invalid_argument);  // not scalar
  CHECK_THROWS_AS(backward(Var{}), std::invalid_argument);
}

TEST_CASE("mean of softmax entropy at uniform logits has (machine) zero gradient") {
  Tape tape;
  Var logits = tape.leaf(Tensor::zeros(Shape{4, 3}));
  LossTerms em = loss_em_graph(logits);
  CHECK(em.total.value().value() == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  Gradients grads = backward(em.total);
  const Tensor& g = grads.at(logits);
  CHECK(g.flat().cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("finite differences: analytic cases") {
  auto sum_sq = [](const Tensor& t) { return t.flat().squaredNorm(); };
  Tensor x = Tensor::raw(Shape{2}, (Eigen::VectorXd(2) << 1.0, 2.0).finished());
  Tensor g = finite_diff_grad(sum_sq, x, 1e-5);
  CHECK(std::abs(g[0] - 2.0) <= 1e-8);
  CHECK(std::abs(g[1] - 4.0) <= 1e-8);

  Tensor gz = finite_diff_grad([](const Tensor&) { return 3.5; }, x, 1e-5);
  CHECK(gz.bit_equal(Tensor::zeros(Shape{2})));

  CHECK_THROWS_AS(finite_diff_grad(sum_sq, x, 0.0), std::invalid_argument);
  auto bad = [](const Tensor& t) { return std::log(t[0] - 10.0); };
  CHECK_THROWS_AS(finite_diff_grad(bad, x, 1e-5), NumericError);
}

TEST_CASE("entropy gradient at the witness logits matches finite differences") {
  Tensor logits =
      Tensor::raw(Shape{1, 3}, (Eigen::VectorXd(3) << 1.52, 1.49, 0.0).finished());
  const double err = gradcheck(
      [](Tape&, Var lg) { return loss_em_graph(lg).total; }, logits);
  CHECK(err <= 1e-4);
}

namespace {

// One scalar-valued composite per primitive so the chain rule through each
// vjp is exercised in isolation.
struct PrimitiveCase {
  const char* name;
  Shape shape;
  std::function<Var(Tape&, Var)> build;
};

const std::vector<PrimitiveCase>& primitive_cases() {
  static const std::vector<PrimitiveCase> cases = {
      {"matmul", Shape{3, 4},
       [](Tape& t, Var x) {
         Rng r(99);
         Var w = t.constant(random_tensor(Shape{5, 4}, r));
         return sum_all(matmul(x, w, false, true));
       }},
      {"matmul_ta", Shape{3, 4},
       [](Tape& t, Var x) {
         Rng r(98);
         Var w = t.constant(random_tensor(Shape{3, 2}, r));
         return sum_all(mul(matmul(x, w, true, false), t.constant(random_tensor(Shape{4, 2}, r))));
       }},
      {"add_broadcast_row", Shape{1, 4},
       [](Tape& t, Var x) {
         Rng r(97);
         Var m = t.constant(random_tensor(Shape{3, 4}, r));
         return sum_all(exp(scale(add(m, x), 0.3)));
       }},
      {"sub_broadcast_col", Shape{3, 1},
       [](Tape& t, Var x) {
         Rng r(96);
         Var m = t.constant(random_tensor(Shape{3, 4}, r));
         return sum_all(mul(sub(m, x), sub(m, x)));
       }},
      {"mul", Shape{2, 3},
       [](Tape& t, Var x) {
         Rng r(95);
         Var m = t.constant(random_tensor(Shape{2, 3}, r));
         return mean_all(mul(x, m));
       }},
      {"mul_self", Shape{2, 3}, [](Tape&, Var x) { return sum_all(mul(x, x)); }},
      {"scale", Shape{5}, [](Tape&, Var x) { return sum_all(scale(x, -2.5)); }},
      {"exp", Shape{2, 2}, [](Tape&, Var x) { return sum_all(exp(x)); }},
      {"log_of_exp", Shape{2, 2}, [](Tape&, Var x) { return sum_all(log(exp(x))); }},
      {"clamp_min", Shape{6}, [](Tape&, Var x) { return sum_all(mul(clamp_min(x, 0.2), clamp_min(x, 0.2))); }},
      {"arccos_scaled", Shape{4},
       [](Tape&, Var x) { return sum_all(arccos(scale(x, 0.2))); }},
      {"relu", Shape{3, 3}, [](Tape&, Var x) { return sum_all(mul(relu(x), relu(x))); }},
      {"mean_all", Shape{3, 3}, [](Tape&, Var x) { return mean_all(exp(scale(x, 0.5))); }},
      {"sum_axis0", Shape{3, 4}, [](Tape&, Var x) { return sum_all(mul(sum_along(x, 0), sum_along(x, 0))); }},
      {"mean_axis1", Shape{3, 4}, [](Tape&, Var x) { return sum_all(exp(mean_along(x, 1))); }},
      {"max_axis1", Shape{4, 5}, [](Tape&, Var x) { return sum_all(max_along(x, 1).values); }},
      {"l2_norm_rows", Shape{3, 4}, [](Tape&, Var x) { return sum_all(l2_norm_along(x, 1)); }},
      {"l2_norm_cols", Shape{3, 4}, [](Tape&, Var x) { return sum_all(log(l2_norm_along(x, 0))); }},
      {"softmax_rows", Shape{3, 4},
       [](Tape& t, Var x) {
         Rng r(94);
         Var m = t.constant(random_tensor(Shape{3, 4}, r));
         return sum_all(mul(softmax_along(x, 1), m));
       }},
      {"softmax_cols", Shape{3, 4},
       [](Tape& t, Var x) {
         Rng r(93);
         Var m = t.constant(random_tensor(Shape{3, 4}, r));
         return sum_all(mul(softmax_along(x, 0), m));
       }},
  };
  return cases;
}

}  // namespace

TEST_CASE("every primitive matches the finite-difference oracle over 100 seeds") {
  for (const PrimitiveCase& pc : primitive_cases()) {
    CAPTURE(pc.name);
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = Rng::derive(seed, 7u);
      Tensor x = random_tensor(pc.shape, rng);
      worst = std::max(worst, gradcheck(pc.build, x));
    }
    CHECK_MESSAGE(worst <= 1e-4, pc.name, " worst rel err ", worst);
  }
}

TEST_CASE("softmax-composed scalar losses have class-axis gradient sums near zero") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor logits = random_tensor(Shape{6, 5}, rng, 2.0);
    Tape tape;
    Var lg = tape.leaf(logits);
    LossTerms em = loss_em_graph(lg);
    Gradients grads = backward(em.total);
    const Tensor& g = grads.at(lg);
    for (Index r = 0; r < 6; ++r) CHECK(std::abs(g.mat().row(r).sum()) <= 1e-10);
  }
}

TEST_CASE("identical graphs produce bit-identical gradients") {
  Rng rng(17);
  Tensor x = random_tensor(Shape{4, 3}, rng);
  auto run = [&]() {
    Tape tape;
    Var v = tape.leaf(x);
    Var out = mean_all(mul(softmax_along(v, 1), exp(scale(v, 0.1))));
    Gradients grads = backward(out);
    return grads.at(v);
  };
  Tensor g1 = run();
  Tensor g2 = run();
  CHECK(g1.bit_equal(g2));
}
