#include "selset/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "selset/errors.hpp"
#include "selset/rng.hpp"

namespace selset {

namespace {

std::vector<int> layer_dims(const MlpSpec& spec) {
  std::vector<int> dims;
  dims.push_back(spec.input_dim);
  dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
  dims.push_back(spec.output_dim);
  return dims;
}

}  // namespace

void validate(const MlpSpec& spec) {
  if (spec.input_dim < 1 || spec.output_dim < 1) {
    throw std::invalid_argument("MlpSpec: dimensions must be >= 1");
  }
  for (int h : spec.hidden) {
    if (h < 1) throw std::invalid_argument("MlpSpec: hidden layer sizes must be >= 1");
  }
}

int param_count(const MlpSpec& spec) {
  validate(spec);
  const auto dims = layer_dims(spec);
  int count = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    count += (dims[l] + 1) * dims[l + 1];
  }
  return count;
}

MlpParams init_params(const MlpSpec& spec, std::uint64_t seed) {
  validate(spec);
  const auto dims = layer_dims(spec);
  Rng rng(seed);
  MlpParams params;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) {
        w(r, c) = rng.uniform(-bound, bound);
      }
    }
    params.weights.push_back(std::move(w));
    params.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return params;
}

MlpParams zeros_like(const MlpSpec& spec) {
  validate(spec);
  const auto dims = layer_dims(spec);
  MlpParams params;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    params.weights.push_back(Eigen::MatrixXd::Zero(dims[l + 1], dims[l]));
    params.biases.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
  }
  return params;
}

bool shapes_match(const MlpSpec& spec, const MlpParams& params) {
  const auto dims = layer_dims(spec);
  if (params.weights.size() + 1 != dims.size()) return false;
  if (params.biases.size() != params.weights.size()) return false;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    if (params.weights[l].rows() != dims[l + 1] || params.weights[l].cols() != dims[l]) {
      return false;
    }
    if (params.biases[l].size() != dims[l + 1]) return false;
  }
  return true;
}

bool all_finite(const MlpParams& params) {
  for (const auto& w : params.weights) {
    if (!w.allFinite()) return false;
  }
  for (const auto& b : params.biases) {
    if (!b.allFinite()) return false;
  }
  return true;
}

Eigen::VectorXd flatten(const MlpParams& params) {
  int total = 0;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    total += static_cast<int>(params.weights[l].size() + params.biases[l].size());
  }
  Eigen::VectorXd flat(total);
  int pos = 0;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const auto& w = params.weights[l];
    for (int r = 0; r < w.rows(); ++r) {
      for (int c = 0; c < w.cols(); ++c) flat[pos++] = w(r, c);
    }
    const auto& b = params.biases[l];
    for (int i = 0; i < b.size(); ++i) flat[pos++] = b[i];
  }
  return flat;
}

MlpParams unflatten(const MlpSpec& spec, const Eigen::VectorXd& flat) {
  if (flat.size() != param_count(spec)) {
    throw std::invalid_argument("unflatten: length does not match spec");
  }
  MlpParams params = zeros_like(spec);
  int pos = 0;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    auto& w = params.weights[l];
    for (int r = 0; r < w.rows(); ++r) {
      for (int c = 0; c < w.cols(); ++c) w(r, c) = flat[pos++];
    }
    auto& b = params.biases[l];
    for (int i = 0; i < b.size(); ++i) b[i] = flat[pos++];
  }
  return params;
}

void add_scaled(MlpParams& p, const MlpParams& g, double scale) {
  if (p.weights.size() != g.weights.size()) {
    throw std::invalid_argument("add_scaled: layer count mismatch");
  }
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    p.weights[l] += scale * g.weights[l];
    p.biases[l] += scale * g.biases[l];
  }
}

Eigen::MatrixXd forward_batch(const MlpParams& params,
                              const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                              ForwardCache& cache) {
  const int layers = params.layer_count();
  cache.activations.assign(1, inputs);
  cache.preacts.assign(layers, Eigen::MatrixXd());
  Eigen::MatrixXd a = inputs;
  for (int l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = (params.weights[l] * a).colwise() + params.biases[l];
    cache.preacts[l] = z;
    if (l + 1 < layers) {
      a = z.cwiseMax(0.0);
      cache.activations.push_back(a);
    } else {
      a = std::move(z);
    }
  }
  return a;
}

Eigen::MatrixXd forward_batch(const MlpParams& params,
                              const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  const int layers = params.layer_count();
  Eigen::MatrixXd a = inputs;
  for (int l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = (params.weights[l] * a).colwise() + params.biases[l];
    a = (l + 1 < layers) ? z.cwiseMax(0.0) : std::move(z);
  }
  return a;
}

Eigen::VectorXd forward(const MlpParams& params, const Eigen::VectorXd& x) {
  if (params.weights.empty() || params.weights.front().cols() != x.size()) {
    throw std::invalid_argument("forward: input length does not match network");
  }
  return forward_batch(params, x);
}

MlpParams backward_batch(const MlpParams& params, const ForwardCache& cache,
                         const Eigen::Ref<const Eigen::MatrixXd>& upstream) {
  const int layers = params.layer_count();
  MlpParams grad;
  grad.weights.resize(layers);
  grad.biases.resize(layers);
  Eigen::MatrixXd delta = upstream;
  for (int l = layers - 1; l >= 0; --l) {
    grad.weights[l] = delta * cache.activations[l].transpose();
    grad.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      // ReLU mask on the preceding hidden layer's pre-activation.
      delta = (params.weights[l].transpose() * delta).array() *
              (cache.preacts[l - 1].array() > 0.0).cast<double>();
    }
  }
  return grad;
}

MlpParams gradient(const MlpParams& params, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& upstream) {
  if (params.weights.empty() || params.weights.front().cols() != x.size()) {
    throw std::invalid_argument("gradient: input length does not match network");
  }
  if (params.weights.back().rows() != upstream.size()) {
    throw std::invalid_argument("gradient: upstream length does not match output");
  }
  ForwardCache cache;
  forward_batch(params, x, cache);
  return backward_batch(params, cache, upstream);
}

MlpParams sgd_step(const MlpParams& params, const MlpParams& grad, double lr) {
  if (lr < 0.0) throw std::invalid_argument("sgd_step: negative learning rate");
  if (!all_finite(grad)) throw NumericalError("sgd_step: non-finite gradient");
  MlpParams out = params;
  add_scaled(out, grad, -lr);
  return out;
}

Eigen::VectorXd SgdUpdater::step(const Eigen::VectorXd& params,
                                 const Eigen::VectorXd& grad) {
  if (!grad.allFinite()) throw NumericalError("sgd: non-finite gradient");
  velocity_ = momentum_ * velocity_ + grad;
  return params - lr_ * velocity_;
}

nlohmann::json mlp_to_json(const MlpSpec& spec, const MlpParams& params) {
  if (!shapes_match(spec, params)) {
    throw std::invalid_argument("mlp_to_json: params do not match spec");
  }
  const Eigen::VectorXd flat = flatten(params);
  return nlohmann::json{
      {"version", 1},
      {"spec",
       {{"input_dim", spec.input_dim}, {"hidden", spec.hidden}, {"output_dim", spec.output_dim}}},
      {"params", std::vector<double>(flat.data(), flat.data() + flat.size())},
  };
}

void mlp_from_json(const nlohmann::json& doc, MlpSpec& spec, MlpParams& params) {
  if (doc.at("version").get<int>() != 1) {
    throw ConfigError("mlp document: unsupported version");
  }
  const auto& s = doc.at("spec");
  spec.input_dim = s.at("input_dim").get<int>();
  spec.hidden = s.at("hidden").get<std::vector<int>>();
  spec.output_dim = s.at("output_dim").get<int>();
  validate(spec);
  const auto values = doc.at("params").get<std::vector<double>>();
  Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(values.data(), values.size());
  params = unflatten(spec, flat);
}

}  // namespace selset
