#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "selset/losses.hpp"
#include "selset/rng.hpp"
#include "selset/stats.hpp"

using namespace selset;

TEST_CASE("absolute discrepancy hand values") {
  CHECK(abs_discrepancy(0.2, {1.0, 1.0}, 1.5) == doctest::Approx(0.2));   // inside
  CHECK(abs_discrepancy(0.2, {1.0, 1.0}, 3.0) == doctest::Approx(1.2));   // above
  CHECK(abs_discrepancy(0.2, {1.0, 1.0}, -0.5) == doctest::Approx(0.7));  // below
  CHECK(abs_discrepancy(0.2, {2.0, 0.0}, 2.0) == doctest::Approx(0.0));   // degenerate hit
}

TEST_CASE("step loss hand values") {
  CHECK(step_loss(2.0, true, 0.5) == doctest::Approx(2.0));
  CHECK(step_loss(2.0, false, 0.5) == doctest::Approx(4.0));
  CHECK(step_loss(0.0, false, 0.5) == doctest::Approx(2.0));
  CHECK_THROWS_AS(step_loss(1.0, true, 0.0), std::invalid_argument);
}

TEST_CASE("gaussian negative log likelihood") {
  CHECK(gaussian_nll(0.0, 1.0, 0.0) == doctest::Approx(0.9189385332046727).epsilon(1e-12));
  CHECK(gaussian_nll(0.0, 1.0, 1.0) == doctest::Approx(1.4189385332046727).epsilon(1e-12));
  // minimized over mu at mu == y
  const double at_y = gaussian_nll(2.0, 0.7, 2.0);
  CHECK(at_y < gaussian_nll(2.1, 0.7, 2.0));
  CHECK(at_y < gaussian_nll(1.9, 0.7, 2.0));
  CHECK_THROWS_AS(gaussian_nll(0.0, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("categorical negative log likelihood") {
  Eigen::Vector3d certain(1.0, 0.0, 0.0);
  CHECK(categorical_nll(certain, 0) == doctest::Approx(0.0));
  CHECK(categorical_nll(certain, 1) == doctest::Approx(kNllCap));  // zero-probability cap
  Eigen::Vector2d uniform(0.5, 0.5);
  CHECK(categorical_nll(uniform, 0) == doctest::Approx(std::log(2.0)));
  CHECK(categorical_nll(uniform, 1) == doctest::Approx(std::log(2.0)));
  Eigen::Vector3d p(0.7, 0.2, 0.1);
  CHECK(categorical_nll(p, 1) == doctest::Approx(-std::log(0.2)).epsilon(1e-12));
  CHECK_THROWS_AS(categorical_nll(p, 3), std::invalid_argument);
  CHECK_THROWS_AS(categorical_nll(Eigen::Vector2d(0.5, 0.6), 0), std::invalid_argument);
}

TEST_CASE("softmax is stable and consistent with categorical_nll") {
  Eigen::Vector3d logits(1000.0, 999.0, 998.0);
  const Eigen::VectorXd p = softmax(logits);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p[0] > p[1]);
  CHECK(std::isfinite(log_softmax(logits)[2]));
}

TEST_CASE("entropies") {
  CHECK(entropy_gaussian(1.0) == doctest::Approx(1.4189385332046727).epsilon(1e-12));
  CHECK(entropy_gaussian(0.1) < 0.0);  // differential entropy can be negative
  // 0.95-peaked 9-class distribution sits at the 0.3 gate
  Eigen::VectorXd peaked(9);
  peaked[0] = 0.95;
  for (int i = 1; i < 9; ++i) peaked[i] = 0.05 / 8.0;
  CHECK(entropy_categorical(peaked) == doctest::Approx(0.3025).epsilon(2e-3));
  // binary 0.8 sits at the 0.5 gate
  CHECK(entropy_categorical(Eigen::Vector2d(0.8, 0.2)) == doctest::Approx(0.5004).epsilon(1e-3));
  CHECK(entropy_categorical(Eigen::Vector4d(0.25, 0.25, 0.25, 0.25)) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(entropy_categorical(Eigen::Vector2d(1.0, 0.0)) == doctest::Approx(0.0));
}

TEST_CASE("monte-carlo acceptance penalty") {
  Box unit{Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(1.0, 1.0)};
  const auto one = [](const Eigen::VectorXd&) { return 1.0; };
  const auto zero = [](const Eigen::VectorXd&) { return 0.0; };
  CHECK(acceptance_penalty_mc(one, unit, 37, 5) == doctest::Approx(1.0));
  CHECK(acceptance_penalty_mc(zero, unit, 37, 5) == doctest::Approx(0.0));

  // indicator of the right half-plane on [-1,1]^2: integral is 2, Monte
  // Carlo with m = 1e5 should land within three standard errors (~0.02)
  Box square{Eigen::Vector2d(-1.0, -1.0), Eigen::Vector2d(1.0, 1.0)};
  const auto half = [](const Eigen::VectorXd& x) { return x[0] > 0.0 ? 1.0 : 0.0; };
  CHECK(acceptance_penalty_mc(half, square, 100000, 99) == doctest::Approx(2.0).epsilon(0.01));

  CHECK_THROWS_AS(
      acceptance_penalty_mc(one, Box{Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 1)}, 10, 1),
      std::invalid_argument);
  CHECK(acceptance_penalty_mc(one, unit, 10, 1) ==
        acceptance_penalty_mc(one, unit, 10, 1));  // deterministic given seed
}

TEST_CASE("interval minimizing mean absolute discrepancy sits at the quantiles") {
  // Brute-force grid search over (lower, upper) on a handful of random
  // empirical distributions; the optimum must straddle the alpha/2 and
  // 1 - alpha/2 order statistics within one grid cell.
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 12 + static_cast<int>(rng.below(39));  // up to 50
    const double alpha = 0.1 + 0.3 * rng.uniform01();
    std::vector<double> ys(n);
    for (auto& v : ys) v = 3.0 * rng.normal();
    std::vector<double> sorted = ys;
    std::sort(sorted.begin(), sorted.end());

    const double lo_edge = sorted.front() - 0.5;
    const double hi_edge = sorted.back() + 0.5;
    const int grid = 140;
    const double cell = (hi_edge - lo_edge) / (grid - 1);
    double best = 1e300, best_lo = 0.0, best_hi = 0.0;
    for (int a = 0; a < grid; ++a) {
      for (int b = a; b < grid; ++b) {
        const double lo = lo_edge + a * cell;
        const double hi = lo_edge + b * cell;
        const IntervalParams iv{(lo + hi) / 2.0, (hi - lo) / 2.0};
        double mean = 0.0;
        for (double v : ys) mean += abs_discrepancy(alpha, iv, v);
        mean /= n;
        if (mean < best) {
          best = mean;
          best_lo = lo;
          best_hi = hi;
        }
      }
    }
    // Set-valued empirical quantiles: any point between adjacent order
    // statistics around the target rank minimizes the pinball objective.
    const auto quantile_range = [&](double q) {
      const double target = q * n;
      const int k = static_cast<int>(std::ceil(target - 1e-9));
      double lo = sorted[std::max(0, k - 1)];
      double hi = std::abs(target - std::round(target)) < 1e-9 && k < n ? sorted[k] : lo;
      return std::pair<double, double>(lo, hi);
    };
    const auto [qlo_min, qlo_max] = quantile_range(alpha / 2.0);
    const auto [qhi_min, qhi_max] = quantile_range(1.0 - alpha / 2.0);
    CHECK(best_lo >= qlo_min - cell - 1e-12);
    CHECK(best_lo <= qlo_max + cell + 1e-12);
    CHECK(best_hi >= qhi_min - cell - 1e-12);
    CHECK(best_hi <= qhi_max + cell + 1e-12);
  }
}

TEST_CASE("expected step loss is minimized by the density-threshold set") {
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(4));  // up to 5 classes
    Eigen::VectorXd p(k);
    for (int i = 0; i < k; ++i) p[i] = -std::log(1.0 - rng.uniform01() + 1e-12);
    p /= p.sum();
    double t_alpha = 0.1 + 0.8 * rng.uniform01();
    // keep the instance away from ties
    bool tied = false;
    for (int i = 0; i < k; ++i) {
      if (std::abs(p[i] - t_alpha) < 1e-6) tied = true;
    }
    if (tied) continue;

    double best = 1e300;
    unsigned best_mask = 0;
    for (unsigned mask = 0; mask < (1u << k); ++mask) {
      double size = 0.0, miss = 0.0;
      for (int i = 0; i < k; ++i) {
        if (mask & (1u << i)) {
          size += 1.0;
        } else {
          miss += p[i];
        }
      }
      // E[step loss] = |h| + (1/t) * Pr(y not in h)
      const double value = size + miss / t_alpha;
      if (value < best) {
        best = value;
        best_mask = mask;
      }
    }
    unsigned expect_mask = 0;
    for (int i = 0; i < k; ++i) {
      if (p[i] > t_alpha) expect_mask |= (1u << i);
    }
    CHECK(best_mask == expect_mask);
  }
}

TEST_CASE("normal quantile matches reference values") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_quantile(0.95) == doctest::Approx(1.6448536269514722).epsilon(1e-12));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
  CHECK(normal_quantile(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-12));
  CHECK(normal_cdf(normal_quantile(0.123)) == doctest::Approx(0.123).epsilon(1e-12));
  CHECK_THROWS_AS(normal_quantile(0.0), std::invalid_argument);
}
