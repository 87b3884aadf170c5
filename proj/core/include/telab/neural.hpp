#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "telab/te.hpp"
#include "telab/topology.hpp"
#include "telab/traffic.hpp"

namespace telab {

// MLP policy mapping a flattened window of H demand matrices to split
// ratios: input -> 5 x (128, ReLU) -> output, sigmoid, then per-SD-group
// sum normalization. Inputs are scaled by 1/input_scale.
struct Mlp {
  int h = 0;
  int num_nodes = 0;
  double input_scale = 1.0;
  double gamma = 0.0;
  std::vector<Eigen::MatrixXd> weights;  // [in x out] per layer
  std::vector<Eigen::VectorXd> biases;

  int input_dim() const {
    return h * num_nodes * (num_nodes - 1);
  }
  int output_dim() const {
    return weights.empty() ? 0 : static_cast<int>(weights.back().cols());
  }
};

// Glorot-uniform weights (biases zero) drawn from the seeded stream,
// layer by layer in row-major order.
Mlp init_mlp(int h, int num_nodes, const PathSets& ps, double gamma,
             std::uint64_t seed);

// Throws DataError when the model dimensions do not match the path sets.
void validate_model(const Mlp& model, const PathSets& ps);

TEConfig forward(const Mlp& model, const PathSets& ps,
                 std::span<const DemandMatrix> window);

// Burst-aware objective: realized MLU plus gamma * sum_sd w_sd * Smax_sd,
// where w is the per-SD variance vector normalized to sum to 1.
double loss(const TEConfig& config, const DemandMatrix& dm,
            const TrafficStats& stats, double gamma, const Incidence& inc,
            const PathSets& ps);

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

// Exact subgradient of the loss w.r.t. all parameters. Both max terms
// differentiate through their argmax only (lowest index on ties).
Gradients backward(const Mlp& model, const PathSets& ps, const Incidence& inc,
                   std::span<const DemandMatrix> window, const DemandMatrix& dm,
                   const std::vector<double>& variance_weights, double gamma);

struct AdamState {
  std::vector<Eigen::MatrixXd> m_w, v_w;
  std::vector<Eigen::VectorXd> m_b, v_b;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState init_adam(const Mlp& model, double lr);
void adam_step(Mlp& model, AdamState& state, const Gradients& grads);

struct TrainOptions {
  double split = 0.75;  // chronological training fraction
  int h = 12;
  double gamma = 0.0;
  int epochs = 100;
  int batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct TrainResult {
  Mlp model;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
  std::size_t train_end = 0;       // first test snapshot index
};

// Trains on windows ending at t-1 with target D_t, for t in [H, train_end).
// Stats (and the input scale) come from the training range only. Runs are
// bit-reproducible for a fixed seed.
TrainResult train(const TrafficTrace& trace, const PathSets& ps,
                  const Incidence& inc, const TrainOptions& opts);

// Model file:
//   {"version": 1, "h": int, "num_nodes": int, "num_paths": int,
//    "input_scale": f, "gamma": f, "layers": [{"w": [[...]], "b": [...]}]}
void save_model(const Mlp& model, const std::string& path);
Mlp load_model(const std::string& path);

}  // namespace telab
