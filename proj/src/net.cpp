#include "mpac/net.hpp"

#include <cmath>
#include <string>

#include "mpac/errors.hpp"

namespace mpac {

namespace {

bool layers_congruent(const std::vector<Layer>& a, const std::vector<Layer>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].weight.rows() != b[i].weight.rows() ||
        a[i].weight.cols() != b[i].weight.cols() ||
        a[i].bias.size() != b[i].bias.size())
      return false;
  }
  return true;
}

std::vector<Layer> zero_layers_like(const std::vector<Layer>& src) {
  std::vector<Layer> out;
  out.reserve(src.size());
  for (const auto& l : src)
    out.push_back({Mat::Zero(l.weight.rows(), l.weight.cols()),
                   Vec::Zero(l.bias.size())});
  return out;
}

bool layers_finite(const std::vector<Layer>& ls) {
  for (const auto& l : ls)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

}  // namespace

std::vector<int> ParamSet::layer_sizes() const {
  std::vector<int> sizes;
  sizes.push_back(input_dim());
  for (const auto& l : layers) sizes.push_back(static_cast<int>(l.weight.rows()));
  return sizes;
}

std::size_t ParamSet::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool ParamSet::all_finite() const { return layers_finite(layers); }

bool ParamSet::same_shape(const ParamSet& other) const {
  return layers_congruent(layers, other.layers);
}

GradSet GradSet::zeros_like(const ParamSet& params) {
  return GradSet{zero_layers_like(params.layers)};
}

void GradSet::add_scaled(const GradSet& other, double scale) {
  if (!layers_congruent(layers, other.layers))
    throw InvalidArgument("GradSet::add_scaled: shape mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += scale * other.layers[i].weight;
    layers[i].bias += scale * other.layers[i].bias;
  }
}

void GradSet::scale(double s) {
  for (auto& l : layers) {
    l.weight *= s;
    l.bias *= s;
  }
}

bool GradSet::all_finite() const { return layers_finite(layers); }

bool GradSet::same_shape(const ParamSet& params) const {
  return layers_congruent(layers, params.layers);
}

OptimizerState OptimizerState::adam(const ParamSet& params, double lr) {
  OptimizerState s;
  s.kind = OptKind::Adam;
  s.lr = lr;
  s.m = zero_layers_like(params.layers);
  s.v = zero_layers_like(params.layers);
  return s;
}

OptimizerState OptimizerState::sgd(double lr) {
  OptimizerState s;
  s.kind = OptKind::Sgd;
  s.lr = lr;
  return s;
}

ParamSet init_mlp(std::span<const int> layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2)
    throw InvalidArgument("init_mlp: need at least input and output sizes");
  for (int s : layer_sizes)
    if (s < 1) throw InvalidArgument("init_mlp: layer sizes must be >= 1");

  ParamSet params;
  params.seed = seed;
  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    const int fan_in = layer_sizes[i];
    const int fan_out = layer_sizes[i + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Layer layer{Mat(fan_out, fan_in), Vec::Zero(fan_out)};
    // Row-major draw order pins the bit pattern for a given seed.
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = scale * rng.normal();
    params.layers.push_back(std::move(layer));
  }
  return params;
}

Mat forward(const ParamSet& params, const Mat& input, ForwardTape* tape,
            const DropoutSpec& dropout, Rng* rng) {
  if (params.layers.empty()) throw InvalidArgument("forward: empty ParamSet");
  if (input.cols() != params.input_dim())
    throw InvalidArgument("forward: input width " + std::to_string(input.cols()) +
                          " does not match net input size " +
                          std::to_string(params.input_dim()));
  const bool drop = dropout.rate > 0.0 && rng != nullptr;
  if (dropout.rate < 0.0 || dropout.rate >= 1.0)
    throw InvalidArgument("forward: dropout rate must lie in [0, 1)");

  if (tape) {
    tape->input = input;
    tape->pre.clear();
    tape->post.clear();
    tape->mask.clear();
    tape->sizes = params.layer_sizes();
  }

  Mat x = input;
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const Layer& l = params.layers[i];
    Mat z = x * l.weight.transpose();
    z.rowwise() += l.bias.transpose();
    if (tape) tape->pre.push_back(z);
    if (i == last) {
      x = std::move(z);  // linear output layer
      break;
    }
    Mat a = z.cwiseMax(0.0);  // rectifier
    if (drop) {
      const double keep = 1.0 - dropout.rate;
      Mat mask(a.rows(), a.cols());
      for (Eigen::Index r = 0; r < mask.rows(); ++r)
        for (Eigen::Index c = 0; c < mask.cols(); ++c)
          mask(r, c) = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
      a = a.cwiseProduct(mask);
      if (tape) tape->mask.push_back(std::move(mask));
    }
    if (tape) tape->post.push_back(a);
    x = std::move(a);
  }
  return x;
}

Vec forward(const ParamSet& params, const Vec& input, ForwardTape* tape) {
  Mat out = forward(params, Mat(input.transpose()), tape);
  return out.row(0).transpose();
}

namespace {

void check_tape(const ParamSet& params, const ForwardTape& tape) {
  if (tape.sizes != params.layer_sizes() || tape.pre.size() != params.layers.size())
    throw InvalidState("backward: tape does not match this ParamSet");
}

// Shared reverse sweep. `delta` enters as the gradient w.r.t. pre-activation
// of layer `start` and is propagated down to layer 0.
GradSet sweep_down(const ParamSet& params, const ForwardTape& tape, Mat delta,
                   std::size_t start, Mat* input_grad) {
  GradSet grads = GradSet::zeros_like(params);
  for (std::size_t j = start + 1; j-- > 0;) {
    const Mat& below = (j == 0) ? tape.input : tape.post[j - 1];
    grads.layers[j].weight = delta.transpose() * below;
    grads.layers[j].bias = delta.colwise().sum().transpose();
    if (j == 0) {
      if (input_grad) *input_grad = delta * params.layers[0].weight;
      break;
    }
    Mat dpost = delta * params.layers[j].weight;
    if (!tape.mask.empty()) dpost = dpost.cwiseProduct(tape.mask[j - 1]);
    delta = dpost.cwiseProduct(
        (tape.pre[j - 1].array() > 0.0).cast<double>().matrix());
  }
  return grads;
}

}  // namespace

GradSet backward(const ParamSet& params, const ForwardTape& tape,
                 const Mat& output_grad, Mat* input_grad) {
  check_tape(params, tape);
  if (output_grad.rows() != tape.input.rows() ||
      output_grad.cols() != params.output_dim())
    throw InvalidState("backward: output_grad shape does not match tape");
  return sweep_down(params, tape, output_grad, params.layers.size() - 1,
                    input_grad);
}

GradSet backward_from_last_hidden(const ParamSet& params, const ForwardTape& tape,
                                  const Mat& hidden_grad) {
  check_tape(params, tape);
  if (params.layers.size() < 2)
    throw InvalidState("backward_from_last_hidden: net has no hidden layer");
  const std::size_t h = params.layers.size() - 2;  // last hidden layer index
  if (hidden_grad.rows() != tape.input.rows() ||
      hidden_grad.cols() != params.layers[h].weight.rows())
    throw InvalidState("backward_from_last_hidden: gradient shape mismatch");
  Mat dpost = hidden_grad;
  if (!tape.mask.empty()) dpost = dpost.cwiseProduct(tape.mask[h]);
  Mat delta =
      dpost.cwiseProduct((tape.pre[h].array() > 0.0).cast<double>().matrix());
  return sweep_down(params, tape, std::move(delta), h, nullptr);
}

void apply_step(ParamSet& params, const GradSet& grads, OptimizerState& opt) {
  if (!grads.same_shape(params))
    throw InvalidArgument("apply_step: gradient shapes do not match parameters");
  for (std::size_t i = 0; i < grads.layers.size(); ++i)
    if (!grads.layers[i].weight.allFinite() || !grads.layers[i].bias.allFinite())
      throw NumericError("apply_step: non-finite gradient in layer " +
                         std::to_string(i));

  opt.step += 1;
  if (opt.kind == OptKind::Sgd) {
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
      params.layers[i].weight -= opt.lr * grads.layers[i].weight;
      params.layers[i].bias -= opt.lr * grads.layers[i].bias;
    }
  } else {
    if (opt.m.size() != params.layers.size())
      throw InvalidArgument("apply_step: adam moments not sized for these params");
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
      m = opt.beta1 * m + (1.0 - opt.beta1) * g;
      v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseProduct(g);
      const auto mhat = (m / bc1).eval();
      const auto vhat = (v / bc2).eval();
      p -= opt.lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + opt.eps).matrix());
    };
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
      update(params.layers[i].weight, grads.layers[i].weight, opt.m[i].weight,
             opt.v[i].weight);
      update(params.layers[i].bias, grads.layers[i].bias, opt.m[i].bias,
             opt.v[i].bias);
    }
  }
  if (!params.all_finite())
    throw InvalidState("apply_step: parameters became non-finite");
}

}  // namespace mpac
