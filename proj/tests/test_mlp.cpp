#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "selset/errors.hpp"
#include "selset/mlp.hpp"
#include "selset/rng.hpp"

using namespace selset;

namespace {

// Straightforward re-implementation with plain nested loops; shares nothing
// with the library's forward pass.
std::vector<double> naive_forward(const MlpParams& params, const std::vector<double>& x) {
  std::vector<double> a = x;
  for (int l = 0; l < params.layer_count(); ++l) {
    const auto& w = params.weights[l];
    const auto& b = params.biases[l];
    std::vector<double> z(w.rows());
    for (int r = 0; r < w.rows(); ++r) {
      double acc = b[r];
      for (int c = 0; c < w.cols(); ++c) acc += w(r, c) * a[c];
      z[r] = acc;
    }
    if (l + 1 < params.layer_count()) {
      for (auto& v : z) v = v > 0.0 ? v : 0.0;
    }
    a = std::move(z);
  }
  return a;
}

}  // namespace

TEST_CASE("param count matches the spec arithmetic") {
  const MlpSpec spec{2, {10}, 2};
  CHECK(param_count(spec) == (2 + 1) * 10 + (10 + 1) * 2);  // 52
  CHECK(param_count(MlpSpec{3, {}, 4}) == (3 + 1) * 4);
}

TEST_CASE("spec validation rejects bad dimensions") {
  CHECK_THROWS_AS(validate(MlpSpec{0, {5}, 1}), std::invalid_argument);
  CHECK_THROWS_AS(validate(MlpSpec{2, {0}, 1}), std::invalid_argument);
  CHECK_THROWS_AS(validate(MlpSpec{2, {5}, 0}), std::invalid_argument);
}

TEST_CASE("init is deterministic and seed-sensitive") {
  const MlpSpec spec{3, {8, 6}, 2};
  const MlpParams a = init_params(spec, 42);
  const MlpParams b = init_params(spec, 42);
  const MlpParams c = init_params(spec, 43);
  CHECK(flatten(a) == flatten(b));
  CHECK((flatten(a) - flatten(c)).cwiseAbs().maxCoeff() > 0.0);
  for (const auto& bias : a.biases) CHECK(bias.cwiseAbs().maxCoeff() == 0.0);
  // fan-in scaled bound on every weight
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    const double bound = std::sqrt(6.0 / a.weights[l].cols());
    CHECK(a.weights[l].cwiseAbs().maxCoeff() <= bound);
  }
}

TEST_CASE("flatten round trip is exact") {
  const MlpSpec spec{4, {7, 5}, 3};
  const MlpParams params = init_params(spec, 9);
  const MlpParams back = unflatten(spec, flatten(params));
  CHECK(flatten(params) == flatten(back));
  CHECK(flatten(params).size() == param_count(spec));
}

TEST_CASE("zero network maps everything to zero") {
  const MlpSpec spec{3, {5}, 2};
  const MlpParams params = zeros_like(spec);
  const Eigen::VectorXd out = forward(params, Eigen::Vector3d(1.0, -2.0, 0.5));
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single affine layer reproduces Wx+b") {
  MlpParams params = zeros_like(MlpSpec{2, {}, 2});
  params.weights[0] << 1.0, 2.0, -3.0, 0.5;
  params.biases[0] << 0.25, -1.0;
  const Eigen::VectorXd out = forward(params, Eigen::Vector2d(2.0, -1.0));
  CHECK(out[0] == doctest::Approx(1.0 * 2.0 + 2.0 * -1.0 + 0.25));
  CHECK(out[1] == doctest::Approx(-3.0 * 2.0 + 0.5 * -1.0 - 1.0));
}

TEST_CASE("forward matches an independent re-implementation") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const MlpSpec spec{3, {9, 6}, 4};
    const MlpParams params = init_params(spec, 100 + trial);
    std::vector<double> x{rng.normal(), rng.normal(), rng.normal()};
    const Eigen::VectorXd got = forward(params, Eigen::Map<const Eigen::VectorXd>(x.data(), 3));
    const std::vector<double> expect = naive_forward(params, x);
    for (int i = 0; i < 4; ++i) {
      CHECK(std::abs(got[i] - expect[i]) < 1e-12);
    }
  }
}

TEST_CASE("first-layer scaling scales first-layer pre-activations") {
  const MlpSpec spec{2, {6}, 1};
  MlpParams params = init_params(spec, 3);
  const Eigen::Vector2d x(0.7, -1.3);
  const Eigen::VectorXd z1 = params.weights[0] * x + params.biases[0];
  MlpParams scaled = params;
  scaled.weights[0] *= 2.5;
  scaled.biases[0] *= 2.5;
  const Eigen::VectorXd z2 = scaled.weights[0] * x + scaled.biases[0];
  CHECK((z2 - 2.5 * z1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradient: zero upstream and additivity") {
  const MlpSpec spec{3, {5}, 2};
  const MlpParams params = init_params(spec, 5);
  const Eigen::Vector3d x(0.3, -0.8, 1.1);
  const MlpParams zero_grad = gradient(params, x, Eigen::Vector2d::Zero());
  CHECK(flatten(zero_grad).cwiseAbs().maxCoeff() == 0.0);

  const Eigen::Vector2d u1(1.0, -0.5);
  const Eigen::Vector2d u2(0.25, 2.0);
  const Eigen::VectorXd g1 = flatten(gradient(params, x, u1));
  const Eigen::VectorXd g2 = flatten(gradient(params, x, u2));
  const Eigen::VectorXd g12 = flatten(gradient(params, x, u1 + u2));
  CHECK((g12 - g1 - g2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradient agrees with central finite differences") {
  for (const MlpSpec spec : {MlpSpec{2, {10}, 2}, MlpSpec{3, {12, 8}, 3}, MlpSpec{2, {}, 2}}) {
    const MlpParams params = init_params(spec, 77);
    Rng rng(11);
    const Eigen::VectorXd x = rng.normal_vector(spec.input_dim);
    const Eigen::VectorXd upstream = rng.normal_vector(spec.output_dim);
    const Eigen::VectorXd grad = flatten(gradient(params, x, upstream));

    const Eigen::VectorXd flat = flatten(params);
    const double h = 1e-5;
    for (int j = 0; j < flat.size(); ++j) {
      Eigen::VectorXd plus = flat, minus = flat;
      plus[j] += h;
      minus[j] -= h;
      const double f_plus = upstream.dot(forward(unflatten(spec, plus), x));
      const double f_minus = upstream.dot(forward(unflatten(spec, minus), x));
      const double fd = (f_plus - f_minus) / (2.0 * h);
      if (std::abs(grad[j]) > 1e-8) {
        CHECK(std::abs(fd - grad[j]) / std::abs(grad[j]) < 1e-5);
      } else {
        CHECK(std::abs(fd) < 1e-6);
      }
    }
  }
}

TEST_CASE("dimension mismatches are rejected") {
  const MlpSpec spec{3, {4}, 2};
  const MlpParams params = init_params(spec, 1);
  CHECK_THROWS_AS(forward(params, Eigen::Vector2d(1.0, 2.0)), std::invalid_argument);
  CHECK_THROWS_AS(gradient(params, Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(1.0, 0.0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      gradient(params, Eigen::Vector3d(1.0, 2.0, 3.0), Eigen::Vector3d(1.0, 0.0, 0.0)),
      std::invalid_argument);
}

TEST_CASE("sgd_step") {
  // f(w) = w^2 at w = 1: gradient 2, one step with lr 0.1 lands on 0.8.
  MlpParams w = zeros_like(MlpSpec{1, {}, 1});
  w.weights[0](0, 0) = 1.0;
  MlpParams g = zeros_like(MlpSpec{1, {}, 1});
  g.weights[0](0, 0) = 2.0;
  const MlpParams stepped = sgd_step(w, g, 0.1);
  CHECK(stepped.weights[0](0, 0) == doctest::Approx(0.8));

  CHECK(flatten(sgd_step(w, g, 0.0)) == flatten(w));                          // lr = 0
  CHECK(flatten(sgd_step(w, zeros_like(MlpSpec{1, {}, 1}), 0.5)) == flatten(w));  // grad = 0

  MlpParams bad = g;
  bad.weights[0](0, 0) = std::nan("");
  CHECK_THROWS_AS(sgd_step(w, bad, 0.1), NumericalError);
}

TEST_CASE("json round trip preserves every bit") {
  const MlpSpec spec{3, {6, 4}, 2};
  const MlpParams params = init_params(spec, 1234);
  const auto doc = mlp_to_json(spec, params);
  MlpSpec spec2;
  MlpParams params2;
  mlp_from_json(nlohmann::json::parse(doc.dump()), spec2, params2);
  CHECK(spec2 == spec);
  CHECK(flatten(params2) == flatten(params));
}
