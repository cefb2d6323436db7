#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace selset {

// Dense feed-forward network: rectified-linear hidden layers, identity
// output. An empty hidden list degenerates to a single affine map, which is
// how linear prediction heads are expressed.
struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden;
  int output_dim = 1;

  bool operator==(const MlpSpec&) const = default;
};

void validate(const MlpSpec& spec);
int param_count(const MlpSpec& spec);

// Per-layer weights (fan_out x fan_in) and biases.
struct MlpParams {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  int layer_count() const { return static_cast<int>(weights.size()); }
};

// Scaled-uniform weight init (uniform on +-sqrt(6/fan_in)), zero biases.
MlpParams init_params(const MlpSpec& spec, std::uint64_t seed);
MlpParams zeros_like(const MlpSpec& spec);

bool shapes_match(const MlpSpec& spec, const MlpParams& params);
bool all_finite(const MlpParams& params);

// Row-major weights then bias, layer by layer. Round-trips exactly.
Eigen::VectorXd flatten(const MlpParams& params);
MlpParams unflatten(const MlpSpec& spec, const Eigen::VectorXd& flat);

// p += scale * g (shapes must match).
void add_scaled(MlpParams& p, const MlpParams& g, double scale);

Eigen::VectorXd forward(const MlpParams& params, const Eigen::VectorXd& x);

// Batched forward; columns are observations.
Eigen::MatrixXd forward_batch(const MlpParams& params,
                              const Eigen::Ref<const Eigen::MatrixXd>& inputs);

struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // activations[0] = inputs
  std::vector<Eigen::MatrixXd> preacts;      // one per layer
};

Eigen::MatrixXd forward_batch(const MlpParams& params,
                              const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                              ForwardCache& cache);

// Gradient of sum_b <upstream_b, f(x_b)> with respect to every parameter,
// given the cache of the corresponding forward pass.
MlpParams backward_batch(const MlpParams& params, const ForwardCache& cache,
                         const Eigen::Ref<const Eigen::MatrixXd>& upstream);

// Single-observation convenience: gradient of <upstream, forward(x)>.
MlpParams gradient(const MlpParams& params, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& upstream);

// One plain gradient step: params - lr * grad. Throws NumericalError on
// non-finite gradient entries.
MlpParams sgd_step(const MlpParams& params, const MlpParams& grad, double lr);

// Momentum accumulator used by the trainer; velocity is kept flat.
class SgdUpdater {
 public:
  SgdUpdater(int dim, double lr, double momentum)
      : velocity_(Eigen::VectorXd::Zero(dim)), lr_(lr), momentum_(momentum) {}

  // v <- momentum*v + grad; returns params - lr*v.
  Eigen::VectorXd step(const Eigen::VectorXd& params, const Eigen::VectorXd& grad);

 private:
  Eigen::VectorXd velocity_;
  double lr_;
  double momentum_;
};

// Versioned JSON document: spec plus flat parameter array.
nlohmann::json mlp_to_json(const MlpSpec& spec, const MlpParams& params);
void mlp_from_json(const nlohmann::json& doc, MlpSpec& spec, MlpParams& params);

}  // namespace selset
