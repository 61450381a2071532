#pragma once

// Minimal dense-network core: row-batched forward passes, exact reverse-mode
// gradients, Adam, Xavier initialisation and Polyak (soft) target updates.

#include "tricrlad/common.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tricrlad {

enum class Activation { Relu, Tanh, Linear, Sigmoid, SoftmaxRow };

std::string to_string(Activation activation);
Activation parse_activation(const std::string& name);

struct DenseLayer {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
  Activation activation = Activation::Linear;
};

// Values recorded by a forward pass. inputs[i] feeds layer i, outputs[i] is
// its post-activation value; outputs.back() is the network output.
struct GradTape {
  std::vector<Matrix> inputs;
  std::vector<Matrix> outputs;
};

struct ForwardPass {
  Matrix output;
  GradTape tape;
};

// Gradients in the same order as DenseNet::parameters(): W0, b0, W1, b1, ...
struct NetGradients {
  std::vector<Matrix> params;
  Matrix input;
};

class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(std::vector<DenseLayer> layers);

  std::size_t in_dim() const;
  std::size_t out_dim() const;
  std::size_t num_layers() const { return layers_.size(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;

  // Rows of `x` are independent samples.
  Matrix predict(const Matrix& x) const;
  ForwardPass forward(const Matrix& x) const;
  NetGradients backward(const GradTape& tape, const Matrix& d_output) const;

  bool same_architecture(const DenseNet& other) const;

 private:
  std::vector<DenseLayer> layers_;
};

// sizes = {in, hidden..., out}; weights ~ U(+-sqrt(6/(fan_in+fan_out))), zero
// biases. `hidden` applies to every layer but the last.
DenseNet xavier_init(std::span<const std::size_t> sizes, std::uint64_t seed,
                     Activation hidden = Activation::Relu, Activation output = Activation::Linear);

void apply_activation(Activation activation, Matrix& values);

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig config, const std::vector<const Matrix*>& shapes);

  void step(const std::vector<Matrix*>& params, std::span<const Matrix> grads);

  const AdamConfig& config() const { return config_; }
  std::uint64_t step_count() const { return step_; }
  const std::vector<Matrix>& first_moment() const { return m_; }
  const std::vector<Matrix>& second_moment() const { return v_; }
  void restore(std::uint64_t step, std::vector<Matrix> m, std::vector<Matrix> v);

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

double global_norm(std::span<const Matrix> grads);
// Rescales in place when the global L2 norm exceeds max_norm; returns the
// norm before clipping.
double clip_global_norm(std::span<Matrix> grads, double max_norm);

// target <- (1 - tau) * target + tau * source
void soft_update(DenseNet& target, const DenseNet& source, double tau);

bool all_finite(const Matrix& m);

}  // namespace tricrlad
