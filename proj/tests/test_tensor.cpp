#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "srpn/gradcheck.hpp"
#include "srpn/ops.hpp"
#include "srpn/rng.hpp"
#include "srpn/tensor.hpp"

using namespace srpn;

TEST_CASE("tensor construction and invariants") {
  Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.shape() == std::vector<int>{2, 3});
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3, 4}).value(),
                  std::invalid_argument);
}

TEST_CASE("conv2d identity 1x1 kernel") {
  Tape tape;
  Tensor x = Tensor::from_data({1, 2, 2}, {1.0, -2.0, 3.5, 0.25});
  Tensor w = Tensor::from_data({1, 1, 1, 1}, {1.0});
  Tensor b = Tensor::zeros({1});
  Tensor y = conv2d(tape, x, w, b, 0);
  REQUIRE(y.shape() == x.shape());
  for (int i = 0; i < 4; ++i) CHECK(y.at(i) == x.at(i));
}

TEST_CASE("conv2d 3x3 all-ones kernel on all-ones input") {
  Tape tape;
  Tensor x = Tensor::full({1, 3, 3}, 1.0);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor b = Tensor::zeros({1});
  Tensor y = conv2d(tape, x, w, b, 1);
  REQUIRE(y.shape() == std::vector<int>{1, 3, 3});
  CHECK(y.at(0, 1, 1) == doctest::Approx(9.0));  // center: full 3x3 support
  CHECK(y.at(0, 0, 0) == doctest::Approx(4.0));  // corner: 2x2 support
  CHECK(y.at(0, 2, 2) == doctest::Approx(4.0));
  CHECK(y.at(0, 0, 1) == doctest::Approx(6.0));  // edge: 2x3 support
}

TEST_CASE("conv2d shape and precondition errors") {
  Tape tape;
  Tensor x = Tensor::zeros({2, 4, 4});
  Tensor b3 = Tensor::zeros({3});
  CHECK_THROWS_WITH_AS(
      conv2d(tape, x, Tensor::zeros({3, 5, 3, 3}), b3, 1),
      doctest::Contains("input channels"), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(tape, x, Tensor::zeros({3, 2, 5, 5}), b3, 2),
                  std::invalid_argument);  // k=5 unsupported
  CHECK_THROWS_AS(conv2d(tape, x, Tensor::zeros({3, 2, 3, 3}),
                         Tensor::zeros({4}), 1),
                  std::invalid_argument);  // bias size
}

TEST_CASE("conv2d gradient matches finite differences") {
  // the spec example: sum(conv(input)) wrt every weight on a random 2x5x5
  Rng rng(42);
  Tensor x = Tensor::zeros({2, 5, 5});
  for (int i = 0; i < x.numel(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
  Tensor w = Tensor::zeros({3, 2, 3, 3}, true);
  for (int i = 0; i < w.numel(); ++i) w.data()[i] = rng.uniform(-1.0, 1.0);
  Tensor b = Tensor::zeros({3}, true);

  auto result = check_gradients(
      "conv2d",
      [&](Tape& tape) { return sum(tape, conv2d(tape, x, w, b, 1)); },
      {w, b}, 1e-6);
  CHECK(result.pass);
  CHECK(result.max_rel_err < 1e-6);
}

TEST_CASE("relu basics") {
  Tape tape;
  Tensor x = Tensor::from_data({4}, {-1.0, -0.5, -2.0, -1e-9});
  Tensor y = relu(tape, x);
  for (int i = 0; i < 4; ++i) CHECK(y.at(i) == 0.0);

  // exactly zero input: output 0, gradient contribution 0
  Tensor z = Tensor::from_data({1}, {0.0}, true);
  Tape tape2;
  Tensor out = sum(tape2, relu(tape2, z));
  CHECK(out.value() == 0.0);
  tape2.backward(out);
  CHECK(z.grad()[0] == 0.0);
}

TEST_CASE("logistic values and saturation") {
  Tape tape;
  Tensor x = Tensor::from_data({3}, {0.0, 40.0, -40.0});
  Tensor y = logistic(tape, x);
  CHECK(y.at(0) == 0.5);
  CHECK(y.at(1) < 1.0);
  CHECK(y.at(1) > 1.0 - 1e-15);
  CHECK(y.at(2) > 0.0);
  CHECK(y.at(2) < 1e-15);
  CHECK(std::isfinite(y.at(1)));
}

TEST_CASE("squared_l2 values and analytic gradient") {
  Tape tape;
  Tensor a = Tensor::from_data({2}, {1.0, 0.0}, true);
  Tensor b = Tensor::from_data({2}, {0.0, 1.0});
  Tensor d = squared_l2(tape, a, b);
  CHECK(d.value() == doctest::Approx(2.0));

  tape.backward(d);
  // gradient wrt a is 2(a-b)
  CHECK(a.grad()[0] == doctest::Approx(2.0 * (1.0 - 0.0)));
  CHECK(a.grad()[1] == doctest::Approx(2.0 * (0.0 - 1.0)));

  Tensor same = Tensor::from_data({2}, {0.7, -0.3});
  Tape tape2;
  CHECK(squared_l2(tape2, same, same).value() == 0.0);
  CHECK_THROWS_AS(squared_l2(tape2, a, Tensor::zeros({3})),
                  std::invalid_argument);
}

TEST_CASE("backward: sum of a leaf gives all-ones gradient") {
  Tape tape;
  Tensor x = Tensor::zeros({3, 2, 2}, true);
  Tensor s = sum(tape, x);
  tape.backward(s);
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward contract violations") {
  Tape tape;
  Tensor x = Tensor::zeros({2}, true);
  Tensor s = sum(tape, x);
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);  // non-scalar
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), std::logic_error);  // second backward
  CHECK_THROWS_AS(sum(tape, x), std::logic_error);      // record after reverse
  tape.reset();
  Tensor s2 = sum(tape, x);
  CHECK_NOTHROW(tape.backward(s2));
}

TEST_CASE("chain conv2d -> relu -> sum matches finite differences") {
  Rng rng(7);
  Tensor x = Tensor::zeros({2, 6, 6});
  for (int i = 0; i < x.numel(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
  Tensor w = Tensor::zeros({4, 2, 3, 3}, true);
  for (int i = 0; i < w.numel(); ++i) w.data()[i] = rng.uniform(-0.7, 0.7);
  Tensor b = Tensor::zeros({4}, true);
  for (int i = 0; i < b.numel(); ++i) b.data()[i] = rng.uniform(-0.2, 0.2);

  auto result = check_gradients(
      "conv_relu_sum",
      [&](Tape& tape) {
        return sum(tape, relu(tape, conv2d(tape, x, w, b, 1)));
      },
      {w, b}, 1e-5);
  CHECK(result.pass);
}

TEST_CASE("per-op gradient battery over 20 seeds") {
  for (const auto& r : run_gradcheck("ops", 20240901, 20)) {
    INFO(r.name, " max_rel_err=", r.max_rel_err);
    CHECK(r.pass);
    CHECK(r.max_rel_err < 1e-4);
  }
}

TEST_CASE("forward determinism and input immutability") {
  Rng rng(3);
  Tensor x = Tensor::zeros({2, 4, 4});
  for (int i = 0; i < x.numel(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
  Tensor w = Tensor::zeros({2, 2, 3, 3}, true);
  for (int i = 0; i < w.numel(); ++i) w.data()[i] = rng.uniform(-1.0, 1.0);
  Tensor b = Tensor::from_data({2}, {0.1, -0.2}, true);

  const std::vector<double> x_before = x.data_vec();
  Tape t1, t2;
  Tensor y1 = logistic(t1, conv2d(t1, x, w, b, 1));
  Tensor y2 = logistic(t2, conv2d(t2, x, w, b, 1));
  for (int i = 0; i < y1.numel(); ++i) CHECK(y1.at(i) == y2.at(i));
  CHECK(x.data_vec() == x_before);

  Tape t3;
  Tensor z = relu(t3, x);
  Tensor s = squared_l2(t3, z, x);
  CHECK(x.data_vec() == x_before);
}

TEST_CASE("gradients of leaves are finite after backward") {
  Rng rng(11);
  Tensor x = Tensor::zeros({3, 8, 8});
  for (int i = 0; i < x.numel(); ++i) x.data()[i] = rng.uniform(0.0, 1.0);
  Tensor w = Tensor::zeros({4, 3, 3, 3}, true);
  for (int i = 0; i < w.numel(); ++i) w.data()[i] = rng.normal(0.0, 0.01);
  Tensor b = Tensor::zeros({4}, true);

  Tape tape;
  Tensor loss = sum(tape, logistic(tape, conv2d(tape, x, w, b, 1)));
  tape.backward(loss);
  for (double g : w.grad()) CHECK(std::isfinite(g));
  for (double g : b.grad()) CHECK(std::isfinite(g));
}

TEST_CASE("avg_pool2 contract") {
  Tape tape;
  Tensor x = Tensor::from_data({1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor y = avg_pool2(tape, x);
  REQUIRE(y.shape() == std::vector<int>{1, 1, 2});
  CHECK(y.at(0) == doctest::Approx((1 + 2 + 5 + 6) / 4.0));
  CHECK(y.at(1) == doctest::Approx((3 + 4 + 7 + 8) / 4.0));
  CHECK_THROWS_AS(avg_pool2(tape, Tensor::zeros({1, 3, 4})),
                  std::invalid_argument);
}

TEST_CASE("channel_slice_at bounds") {
  Tape tape;
  Tensor map = Tensor::from_data({2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
  Tensor s = channel_slice_at(tape, map, 0, 2, 1, 0);
  REQUIRE(s.shape() == std::vector<int>{2});
  CHECK(s.at(0) == 2.0);
  CHECK(s.at(1) == 6.0);
  CHECK_THROWS_AS(channel_slice_at(tape, map, 0, 3, 0, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(channel_slice_at(tape, map, 0, 1, 2, 0),
                  std::invalid_argument);
}
