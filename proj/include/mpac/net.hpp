#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "mpac/rng.hpp"

namespace mpac {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Hidden-layer activation. Output layers are always linear.
enum class Activation { Relu };

struct Layer {
  Mat weight;  // out x in
  Vec bias;    // out
};

// Flat collection of named weight/bias arrays for one multilayer
// perceptron. Consecutive layer shapes chain: layer i's output size
// equals layer i+1's input size.
struct ParamSet {
  std::vector<Layer> layers;
  Activation hidden_activation = Activation::Relu;
  std::uint64_t seed = 0;

  int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
  int output_dim() const { return static_cast<int>(layers.back().weight.rows()); }
  std::vector<int> layer_sizes() const;
  std::size_t param_count() const;
  bool all_finite() const;
  bool same_shape(const ParamSet& other) const;
};

// Accumulated partial derivatives, shape-congruent with its ParamSet.
struct GradSet {
  std::vector<Layer> layers;

  static GradSet zeros_like(const ParamSet& params);
  void add_scaled(const GradSet& other, double scale);
  void scale(double s);
  bool all_finite() const;
  bool same_shape(const ParamSet& params) const;
};

enum class OptKind { Adam, Sgd };

struct OptimizerState {
  OptKind kind = OptKind::Sgd;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Layer> m;  // adam first moments
  std::vector<Layer> v;  // adam second moments
  std::uint64_t step = 0;

  static OptimizerState adam(const ParamSet& params, double lr);
  static OptimizerState sgd(double lr);
};

// Per-forward inverted-scaling dropout on hidden activations; only
// applied when `rate > 0` and an rng is supplied (training mode).
struct DropoutSpec {
  double rate = 0.0;
};

// Activation cache from one forward pass, consumed by backward.
// Rows are samples throughout.
struct ForwardTape {
  Mat input;                  // n x in
  std::vector<Mat> pre;       // pre-activations, one per layer
  std::vector<Mat> post;      // post-activation (after dropout) per hidden layer
  std::vector<Mat> mask;      // dropout masks; empty when dropout inactive
  std::vector<int> sizes;     // layer size chain, for staleness checks
};

// Weights ~ Normal(0, 1/sqrt(fan_in)), biases zero. Identical
// (layer_sizes, seed) inputs yield bit-identical ParamSets.
ParamSet init_mlp(std::span<const int> layer_sizes, std::uint64_t seed);

// Batched forward: rows of `input` are samples. Pass a tape to enable
// backward; pass dropout + rng to enable training-time dropout.
Mat forward(const ParamSet& params, const Mat& input, ForwardTape* tape = nullptr,
            const DropoutSpec& dropout = {}, Rng* rng = nullptr);

// Single-sample convenience wrapper.
Vec forward(const ParamSet& params, const Vec& input, ForwardTape* tape = nullptr);

// Reverse-mode gradients given d(loss)/d(output), summed over rows.
// Optionally also yields d(loss)/d(input).
GradSet backward(const ParamSet& params, const ForwardTape& tape,
                 const Mat& output_grad, Mat* input_grad = nullptr);

// Backward pass that starts from a gradient w.r.t. the last hidden
// post-activation instead of the output (shared-trunk value heads).
GradSet backward_from_last_hidden(const ParamSet& params, const ForwardTape& tape,
                                  const Mat& hidden_grad);

// One optimizer step. Rejects non-finite gradients outright; verifies
// parameters stay finite afterwards.
void apply_step(ParamSet& params, const GradSet& grads, OptimizerState& opt);

}  // namespace mpac
