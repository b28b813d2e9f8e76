#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "histlayer/gradcheck.hpp"
#include "histlayer/ops.hpp"
#include "histlayer/rng.hpp"
#include "oracles.hpp"

using histlayer::ConvParams;
using histlayer::LinearParams;
using histlayer::SplitMix64;
using histlayer::Tensor;

namespace {

ConvParams make_conv(int out, int in, int k, double weight, double bias) {
  ConvParams p;
  p.out_channels = out;
  p.in_channels = in;
  p.kh = p.kw = k;
  p.weights.assign(static_cast<std::size_t>(out) * in * k * k, weight);
  p.bias.assign(out, bias);
  return p;
}

}  // namespace

TEST_CASE("conv2d basics") {
  SECTION("zero input isolates the bias") {
    Tensor x(1, 1, 3, 3);
    ConvParams p = make_conv(2, 1, 3, 0.7, 1.5);
    Tensor y = conv2d(x, p);
    REQUIRE(y.n() == 1);
    REQUIRE(y.c() == 2);
    REQUIRE(y.h() == 1);
    REQUIRE(y.w() == 1);
    CHECK(y.at(0, 0, 0, 0) == 1.5);
    CHECK(y.at(0, 1, 0, 0) == 1.5);
  }

  SECTION("identity 1x1 kernel reproduces the input") {
    SplitMix64 rng(7);
    Tensor x = oracle::random_tensor(2, 1, 4, 5, rng, -1.0, 1.0);
    ConvParams p = make_conv(1, 1, 1, 1.0, 0.0);
    Tensor y = conv2d(x, p);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
  }

  SECTION("all-ones 3x3 kernel sums 0..8 to 36") {
    Tensor x(1, 1, 3, 3);
    for (int i = 0; i < 9; ++i) x[i] = i;
    Tensor y = conv2d(x, make_conv(1, 1, 3, 1.0, 0.0));
    REQUIRE(y.size() == 1);
    CHECK(y[0] == 36.0);
  }

  SECTION("linearity in the input for zero bias") {
    SplitMix64 rng(11);
    ConvParams p = make_conv(3, 2, 3, 0.0, 0.0);
    for (auto& w : p.weights) w = rng.uniform(-1.0, 1.0);
    Tensor x = oracle::random_tensor(2, 2, 5, 5, rng, -1.0, 1.0);
    Tensor y = oracle::random_tensor(2, 2, 5, 5, rng, -1.0, 1.0);
    const double alpha = 0.37, beta = -1.62;
    Tensor mix(2, 2, 5, 5);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = alpha * x[i] + beta * y[i];
    Tensor lhs = conv2d(mix, p);
    Tensor cx = conv2d(x, p), cy = conv2d(y, p);
    for (std::size_t i = 0; i < lhs.size(); ++i) {
      const double rhs = alpha * cx[i] + beta * cy[i];
      CHECK(std::fabs(lhs[i] - rhs) <= 1e-12 * std::max(1.0, std::fabs(rhs)));
    }
  }

  SECTION("shape errors are rejected") {
    Tensor x(1, 2, 3, 3);
    CHECK_THROWS_AS(conv2d(x, make_conv(1, 1, 3, 1.0, 0.0)), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(x, make_conv(1, 2, 4, 1.0, 0.0)), std::invalid_argument);
  }
}

TEST_CASE("avg_pool2d basics") {
  SECTION("constant input pools to that constant exactly") {
    const double c = 0.123456789123456789;
    Tensor x(1, 2, 5, 5, c);
    Tensor y = avg_pool2d(x, 3, 3, 1, 1);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == c);
  }

  SECTION("2x2 window stride 2 on [[0,2],[4,6]] gives 3") {
    Tensor x(1, 1, 2, 2);
    x[0] = 0;
    x[1] = 2;
    x[2] = 4;
    x[3] = 6;
    Tensor y = avg_pool2d(x, 2, 2, 2, 2);
    REQUIRE(y.size() == 1);
    CHECK(y[0] == 3.0);
  }

  SECTION("full-extent window equals global average pooling") {
    SplitMix64 rng(3);
    Tensor x = oracle::random_tensor(2, 3, 4, 6, rng);
    Tensor a = avg_pool2d(x, 4, 6, 1, 1);
    Tensor b = global_avg_pool(x);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }

  SECTION("window larger than input is rejected") {
    Tensor x(1, 1, 3, 3);
    CHECK_THROWS_AS(avg_pool2d(x, 4, 3, 1, 1), std::invalid_argument);
  }
}

TEST_CASE("relu basics") {
  Tensor x(1, 1, 1, 3);
  x[0] = -1.0;
  x[1] = 0.0;
  x[2] = 2.5;
  Tensor y = relu(x);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.5);
}

TEST_CASE("global_avg_pool basics") {
  SECTION("constant channel") {
    Tensor x(1, 1, 3, 3, 4.25);
    CHECK(global_avg_pool(x)[0] == 4.25);
  }
  SECTION("[[1,3],[5,7]] averages to 4") {
    Tensor x(1, 1, 2, 2);
    x[0] = 1;
    x[1] = 3;
    x[2] = 5;
    x[3] = 7;
    CHECK(global_avg_pool(x)[0] == 4.0);
  }
  SECTION("1x1 spatial input is the identity") {
    SplitMix64 rng(5);
    Tensor x = oracle::random_tensor(2, 4, 1, 1, rng, -2.0, 2.0);
    Tensor y = global_avg_pool(x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
  }
}

TEST_CASE("concat_features basics") {
  SplitMix64 rng(13);
  Tensor a = oracle::random_tensor(4, 3, 1, 1, rng);
  Tensor b = oracle::random_tensor(4, 3, 1, 1, rng);
  SECTION("shapes add") {
    Tensor y = concat_features(a, b);
    REQUIRE(y.n() == 4);
    REQUIRE(y.c() == 6);
  }
  SECTION("empty left operand yields the right operand") {
    Tensor empty(4, 0, 1, 1);
    Tensor y = concat_features(empty, b);
    REQUIRE(y.c() == b.c());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == b[i]);
  }
  SECTION("left features come first") {
    Tensor y = concat_features(a, b);
    for (int n = 0; n < 4; ++n) {
      for (int f = 0; f < 3; ++f) {
        CHECK(y.at(n, f, 0, 0) == a.at(n, f, 0, 0));
        CHECK(y.at(n, 3 + f, 0, 0) == b.at(n, f, 0, 0));
      }
    }
  }
  SECTION("batch mismatch is rejected") {
    Tensor c(3, 3, 1, 1);
    CHECK_THROWS_AS(concat_features(a, c), std::invalid_argument);
  }
}

TEST_CASE("linear basics") {
  SECTION("zero input returns the bias") {
    LinearParams p{2, 3, {1, 2, 3, 4, 5, 6}, {0.5, -0.5}};
    Tensor x(2, 3, 1, 1);
    Tensor y = linear(x, p);
    CHECK(y.at(0, 0, 0, 0) == 0.5);
    CHECK(y.at(1, 1, 0, 0) == -0.5);
  }
  SECTION("identity weights and zero bias reproduce the input") {
    LinearParams p{3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}, {0, 0, 0}};
    SplitMix64 rng(17);
    Tensor x = oracle::random_tensor(2, 3, 1, 1, rng, -1.0, 1.0);
    Tensor y = linear(x, p);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
  }
  SECTION("W=[[1,2]], b=[1], x=[3,4] gives 12") {
    LinearParams p{1, 2, {1, 2}, {1}};
    Tensor x(1, 2, 1, 1);
    x[0] = 3;
    x[1] = 4;
    CHECK(linear(x, p)[0] == 12.0);
  }
  SECTION("feature mismatch is rejected") {
    LinearParams p{1, 2, {1, 2}, {1}};
    Tensor x(1, 3, 1, 1);
    CHECK_THROWS_AS(linear(x, p), std::invalid_argument);
  }
}

TEST_CASE("softmax_cross_entropy basics") {
  SECTION("uniform logits give ln K") {
    Tensor logits(1, 5, 1, 1, 0.3);
    auto r = softmax_cross_entropy(logits, {2});
    CHECK(std::fabs(r.loss - std::log(5.0)) <= 1e-15);
  }
  SECTION("dominant true logit drives loss to zero") {
    Tensor logits(1, 3, 1, 1, 0.0);
    logits.at(0, 1, 0, 0) = 1000.0;
    auto r = softmax_cross_entropy(logits, {1});
    CHECK(r.loss >= 0.0);
    CHECK(r.loss <= 1e-12);
  }
  SECTION("logits [1,2,3] with label 2") {
    Tensor logits(1, 3, 1, 1);
    logits[0] = 1;
    logits[1] = 2;
    logits[2] = 3;
    auto r = softmax_cross_entropy(logits, {2});
    CHECK(std::fabs(r.loss - 0.40760596444438104) <= 1e-12);
  }
  SECTION("gradient rows sum to zero") {
    SplitMix64 rng(23);
    Tensor logits = oracle::random_tensor(6, 9, 1, 1, rng, -3.0, 3.0);
    std::vector<int> labels(6);
    for (auto& l : labels) l = static_cast<int>(rng.below(9));
    auto r = softmax_cross_entropy(logits, labels);
    for (int n = 0; n < 6; ++n) {
      double row = 0.0;
      for (int k = 0; k < 9; ++k) row += r.grad_logits.at(n, k, 0, 0);
      CHECK(std::fabs(row) <= 1e-12);
    }
  }
  SECTION("out-of-range label is rejected") {
    Tensor logits(1, 3, 1, 1);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {3}), std::invalid_argument);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {-1}), std::invalid_argument);
  }
}

// Module invariant: every analytic gradient matches central finite
// differences at step 1e-5 with relative error <= 1e-6.
TEST_CASE("primitive gradients match finite differences") {
  const double h = 1e-5;
  const double tol = 1e-6;
  SplitMix64 rng(31);

  SECTION("conv2d") {
    ConvParams p = make_conv(2, 2, 3, 0.0, 0.0);
    for (auto& w : p.weights) w = rng.uniform(-1.0, 1.0);
    for (auto& b : p.bias) b = rng.uniform(-1.0, 1.0);
    Tensor x = oracle::random_tensor(2, 2, 5, 4, rng, -1.0, 1.0);
    Tensor u = oracle::random_tensor(2, 2, 3, 2, rng, -1.0, 1.0);
    auto eval = [&]() { return oracle::weighted_sum(conv2d(x, p), u); };
    auto g = conv2d_backward(x, p, u);

    std::vector<double> fd;
    for (auto& w : p.weights) fd.push_back(oracle::fd_scalar(eval, &w, h));
    CHECK(histlayer::rel_err_norm(g.weights, fd) <= tol);
    fd.clear();
    for (auto& b : p.bias) fd.push_back(oracle::fd_scalar(eval, &b, h));
    CHECK(histlayer::rel_err_norm(g.bias, fd) <= tol);
    fd.clear();
    for (auto& v : x.values()) fd.push_back(oracle::fd_scalar(eval, &v, h));
    CHECK(histlayer::rel_err_norm(g.input.values(), fd) <= tol);
  }

  SECTION("avg_pool2d with overlapping windows") {
    Tensor x = oracle::random_tensor(1, 2, 5, 5, rng, -1.0, 1.0);
    Tensor u = oracle::random_tensor(1, 2, 2, 2, rng, -1.0, 1.0);
    auto eval = [&]() { return oracle::weighted_sum(avg_pool2d(x, 3, 3, 2, 2), u); };
    Tensor g = avg_pool2d_backward(x, 3, 3, 2, 2, u);
    std::vector<double> fd;
    for (auto& v : x.values()) fd.push_back(oracle::fd_scalar(eval, &v, h));
    CHECK(histlayer::rel_err_norm(g.values(), fd) <= tol);
  }

  SECTION("global_avg_pool") {
    Tensor x = oracle::random_tensor(2, 3, 4, 4, rng, -1.0, 1.0);
    Tensor u = oracle::random_tensor(2, 3, 1, 1, rng, -1.0, 1.0);
    auto eval = [&]() { return oracle::weighted_sum(global_avg_pool(x), u); };
    Tensor g = global_avg_pool_backward(x, u);
    std::vector<double> fd;
    for (auto& v : x.values()) fd.push_back(oracle::fd_scalar(eval, &v, h));
    CHECK(histlayer::rel_err_norm(g.values(), fd) <= tol);
  }

  SECTION("relu away from the kink") {
    Tensor x = oracle::random_tensor(2, 2, 3, 3, rng, -1.0, 1.0);
    for (auto& v : x.values()) {
      if (std::fabs(v) < 1e-2) v = 0.5;
    }
    Tensor u = oracle::random_tensor(2, 2, 3, 3, rng, -1.0, 1.0);
    auto eval = [&]() { return oracle::weighted_sum(relu(x), u); };
    Tensor g = relu_backward(x, u);
    std::vector<double> fd;
    for (auto& v : x.values()) fd.push_back(oracle::fd_scalar(eval, &v, h));
    CHECK(histlayer::rel_err_norm(g.values(), fd) <= tol);
  }

  SECTION("linear") {
    LinearParams p;
    p.out_features = 3;
    p.in_features = 4;
    p.weights.resize(12);
    p.bias.resize(3);
    for (auto& w : p.weights) w = rng.uniform(-1.0, 1.0);
    for (auto& b : p.bias) b = rng.uniform(-1.0, 1.0);
    Tensor x = oracle::random_tensor(3, 4, 1, 1, rng, -1.0, 1.0);
    Tensor u = oracle::random_tensor(3, 3, 1, 1, rng, -1.0, 1.0);
    auto eval = [&]() { return oracle::weighted_sum(linear(x, p), u); };
    auto g = linear_backward(x, p, u);
    std::vector<double> fd;
    for (auto& w : p.weights) fd.push_back(oracle::fd_scalar(eval, &w, h));
    CHECK(histlayer::rel_err_norm(g.weights, fd) <= tol);
    fd.clear();
    for (auto& b : p.bias) fd.push_back(oracle::fd_scalar(eval, &b, h));
    CHECK(histlayer::rel_err_norm(g.bias, fd) <= tol);
    fd.clear();
    for (auto& v : x.values()) fd.push_back(oracle::fd_scalar(eval, &v, h));
    CHECK(histlayer::rel_err_norm(g.input.values(), fd) <= tol);
  }

  SECTION("softmax_cross_entropy gradient") {
    Tensor logits = oracle::random_tensor(4, 5, 1, 1, rng, -2.0, 2.0);
    std::vector<int> labels(4);
    for (auto& l : labels) l = static_cast<int>(rng.below(5));
    auto eval = [&]() { return softmax_cross_entropy(logits, labels).loss; };
    Tensor g = softmax_cross_entropy(logits, labels).grad_logits;
    std::vector<double> fd;
    for (auto& v : logits.values()) fd.push_back(oracle::fd_scalar(eval, &v, h));
    CHECK(histlayer::rel_err_norm(g.values(), fd) <= tol);
  }
}

TEST_CASE("ops leave outputs finite") {
  SplitMix64 rng(41);
  Tensor x = oracle::random_tensor(2, 2, 5, 5, rng, -5.0, 5.0);
  ConvParams p = make_conv(3, 2, 3, 0.0, 0.0);
  for (auto& w : p.weights) w = rng.uniform(-2.0, 2.0);
  CHECK(histlayer::all_finite(conv2d(x, p)));
  CHECK(histlayer::all_finite(avg_pool2d(x, 3, 3)));
  CHECK(histlayer::all_finite(relu(x)));
  CHECK(histlayer::all_finite(global_avg_pool(x)));
}
