#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "histlayer/metrics.hpp"
#include "histlayer/model.hpp"
#include "histlayer/rng.hpp"
#include "oracles.hpp"

using histlayer::ConfusionMatrix;
using histlayer::Model;
using histlayer::ModelVariant;
using histlayer::SplitMix64;
using histlayer::Tensor;

TEST_CASE("accuracy") {
  CHECK(histlayer::accuracy({1, 2, 3}, {1, 2, 3}) == 100.0);
  CHECK(histlayer::accuracy({0, 0, 0}, {1, 2, 3}) == 0.0);
  CHECK(histlayer::accuracy({1, 2, 3, 4}, {1, 2, 3, 0}) == 75.0);
  CHECK_THROWS_AS(histlayer::accuracy({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(histlayer::accuracy({1}, {1, 2}), std::invalid_argument);
}

TEST_CASE("confusion matrix") {
  SECTION("perfect predictor is diagonal") {
    ConfusionMatrix m = histlayer::confusion({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
    CHECK(m.total() == 4);
    for (int t = 0; t < 3; ++t) {
      for (int p = 0; p < 3; ++p) {
        if (t != p) CHECK(m.at(t, p) == 0);
      }
    }
    CHECK(m.at(1, 1) == 2);
  }
  SECTION("constant predictor fills one column") {
    ConfusionMatrix m = histlayer::confusion({2, 2, 2}, {0, 1, 2}, 3);
    for (int t = 0; t < 3; ++t) CHECK(m.at(t, 2) == 1);
    CHECK(m.at(0, 0) == 0);
  }
  SECTION("row-normalized rows sum to one") {
    ConfusionMatrix m = histlayer::confusion({0, 1, 0, 2, 1}, {0, 0, 0, 1, 1}, 3);
    auto rn = m.row_normalized();
    for (int t = 0; t < 3; ++t) {
      double row = 0.0;
      for (int p = 0; p < 3; ++p) row += rn[t * 3 + p];
      if (m.row_total(t) > 0) {
        CHECK(std::fabs(row - 1.0) <= 1e-12);
      } else {
        CHECK(row == 0.0);
      }
    }
  }
  SECTION("out-of-range labels are rejected") {
    CHECK_THROWS_AS(histlayer::confusion({3}, {0}, 3), std::invalid_argument);
    CHECK_THROWS_AS(histlayer::confusion({0}, {3}, 3), std::invalid_argument);
  }
}

TEST_CASE("fdr per class") {
  SECTION("tight, well-separated clusters give a large positive log-FDR") {
    // two point clouds of five samples in 2-D, separation 10, spread 0.01:
    // the one-vs-rest ratio evaluates near ln(100 / (2 * 2 * 1e-4))
    const double eps = 0.01;
    Tensor f(10, 2, 1, 1);
    std::vector<int> labels(10);
    const double offs[5][2] = {{0, 0}, {eps, 0}, {0, eps}, {-eps, 0}, {0, -eps}};
    for (int i = 0; i < 5; ++i) {
      f.at(i, 0, 0, 0) = offs[i][0];
      f.at(i, 1, 0, 0) = offs[i][1];
      labels[i] = 0;
      f.at(5 + i, 0, 0, 0) = 10.0 + offs[i][0];
      f.at(5 + i, 1, 0, 0) = offs[i][1];
      labels[5 + i] = 1;
    }
    auto log_fdr = histlayer::fdr_per_class(f, labels, 2);

    // independent evaluation of the same definition
    const double sep = 10.0 * 10.0;
    const double var_per_dim = (4.0 * eps * eps / 2.0) / 4.0;  // unbiased, mean at origin
    const double expected = std::log(sep / (2.0 * 2.0 * var_per_dim + 1e-12));
    CHECK(std::fabs(log_fdr[0] - expected) <= 0.05 * std::fabs(expected));
    CHECK(log_fdr[0] > 5.0);
    CHECK(log_fdr[1] > 5.0);
  }

  SECTION("overlapping identical distributions give a strongly negative log-FDR") {
    SplitMix64 rng(3);
    Tensor f(200, 3, 1, 1);
    std::vector<int> labels(200);
    for (int i = 0; i < 200; ++i) {
      for (int j = 0; j < 3; ++j) f.at(i, j, 0, 0) = rng.uniform(0.0, 1.0);
      labels[i] = i % 2;
    }
    auto log_fdr = histlayer::fdr_per_class(f, labels, 2);
    CHECK(log_fdr[0] < -2.0);
    CHECK(log_fdr[1] < -2.0);
  }

  SECTION("translation of the feature space changes nothing") {
    SplitMix64 rng(5);
    Tensor f = oracle::random_tensor(30, 4, 1, 1, rng);
    std::vector<int> labels(30);
    for (int i = 0; i < 30; ++i) labels[i] = i % 3;
    auto base = histlayer::fdr_per_class(f, labels, 3);
    Tensor shifted = f;
    for (int i = 0; i < 30; ++i) {
      for (int j = 0; j < 4; ++j) shifted.at(i, j, 0, 0) += 7.25;
    }
    auto moved = histlayer::fdr_per_class(shifted, labels, 3);
    for (int c = 0; c < 3; ++c) CHECK(std::fabs(moved[c] - base[c]) <= 1e-9);
  }

  SECTION("singleton classes are rejected by name") {
    Tensor f(3, 2, 1, 1);
    CHECK_THROWS_WITH(histlayer::fdr_per_class(f, {0, 0, 1}, 2),
                      Catch::Matchers::ContainsSubstring("class 1"));
  }
}

TEST_CASE("extract_features") {
  SplitMix64 rng(7);
  Tensor images = oracle::random_tensor(10, 1, 7, 7, rng);
  SECTION("dimension follows the architecture") {
    Model combo = build_model(synthetic_model_spec(ModelVariant::kCombination), 0);
    Tensor f = histlayer::extract_features(combo, images, 4);
    CHECK(f.n() == 10);
    CHECK(f.c() == 6);
    Model conv = build_model(synthetic_model_spec(ModelVariant::kConvOnly), 0);
    CHECK(histlayer::extract_features(conv, images, 4).c() == 3);
  }
  SECTION("deterministic and independent of batch size") {
    Model m = build_model(synthetic_model_spec(ModelVariant::kCombination), 0);
    Tensor a = histlayer::extract_features(m, images, 3);
    Tensor b = histlayer::extract_features(m, images, 10);
    CHECK(oracle::max_abs_diff(a, b) == 0.0);
  }
}
