#include "tricrlad/diffnet.hpp"

#include <cmath>
#include <sstream>

namespace tricrlad {

std::string to_string(Activation activation) {
  switch (activation) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Linear: return "linear";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::SoftmaxRow: return "softmax_row";
  }
  return "linear";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "linear") return Activation::Linear;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "softmax_row") return Activation::SoftmaxRow;
  throw UsageError("unknown activation '" + name + "'");
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

void apply_activation(Activation activation, Matrix& values) {
  switch (activation) {
    case Activation::Relu:
      values = values.cwiseMax(0.0);
      break;
    case Activation::Tanh:
      values = values.array().tanh().matrix();
      break;
    case Activation::Linear:
      break;
    case Activation::Sigmoid:
      values = (1.0 / (1.0 + (-values.array()).exp())).matrix();
      break;
    case Activation::SoftmaxRow:
      for (Eigen::Index r = 0; r < values.rows(); ++r) {
        const double peak = values.row(r).maxCoeff();
        values.row(r) = (values.row(r).array() - peak).exp().matrix();
        values.row(r) /= values.row(r).sum();
      }
      break;
  }
}

namespace {

// d(pre-activation) from d(output) and the recorded output.
Matrix activation_backward(Activation activation, const Matrix& output, const Matrix& d_output) {
  switch (activation) {
    case Activation::Relu:
      return (output.array() > 0.0).select(d_output, 0.0);
    case Activation::Tanh:
      return (d_output.array() * (1.0 - output.array().square())).matrix();
    case Activation::Linear:
      return d_output;
    case Activation::Sigmoid:
      return (d_output.array() * output.array() * (1.0 - output.array())).matrix();
    case Activation::SoftmaxRow: {
      const Eigen::VectorXd dots = (d_output.array() * output.array()).rowwise().sum();
      return (output.array() * (d_output.colwise() - dots).array()).matrix();
    }
  }
  return d_output;
}

}  // namespace

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& layer = layers_[i];
    if (layer.bias.rows() != 1 || layer.bias.cols() != layer.weight.cols()) {
      throw UsageError("dense layer " + std::to_string(i) + ": bias shape does not match weight");
    }
    if (i > 0 && layers_[i - 1].weight.cols() != layer.weight.rows()) {
      throw UsageError("dense layer " + std::to_string(i) + ": input width " +
                       std::to_string(layer.weight.rows()) + " does not chain with previous output " +
                       std::to_string(layers_[i - 1].weight.cols()));
    }
  }
}

std::size_t DenseNet::in_dim() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.rows());
}

std::size_t DenseNet::out_dim() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.cols());
}

std::vector<Matrix*> DenseNet::parameters() {
  std::vector<Matrix*> out;
  for (auto& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

std::vector<const Matrix*> DenseNet::parameters() const {
  std::vector<const Matrix*> out;
  for (const auto& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

Matrix DenseNet::predict(const Matrix& x) const { return forward(x).output; }

ForwardPass DenseNet::forward(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != in_dim()) {
    throw UsageError("forward: input width " + std::to_string(x.cols()) + " != network in_dim " +
                     std::to_string(in_dim()));
  }
  ForwardPass pass;
  pass.tape.inputs.reserve(layers_.size());
  pass.tape.outputs.reserve(layers_.size());
  Matrix current = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& layer = layers_[i];
    pass.tape.inputs.push_back(current);
    Matrix next = current * layer.weight;
    next.rowwise() += layer.bias.row(0);
    apply_activation(layer.activation, next);
    if (!next.allFinite()) {
      throw NumericalError("forward: non-finite value at layer " + std::to_string(i));
    }
    pass.tape.outputs.push_back(next);
    current = std::move(next);
  }
  pass.output = std::move(current);
  return pass;
}

NetGradients DenseNet::backward(const GradTape& tape, const Matrix& d_output) const {
  if (tape.outputs.size() != layers_.size()) {
    throw UsageError("backward: tape does not match network depth");
  }
  const Matrix& out = tape.outputs.back();
  if (d_output.rows() != out.rows() || d_output.cols() != out.cols()) {
    std::ostringstream msg;
    msg << "backward: dLoss/dy shape " << d_output.rows() << "x" << d_output.cols()
        << " != output shape " << out.rows() << "x" << out.cols();
    throw UsageError(msg.str());
  }
  NetGradients grads;
  grads.params.resize(2 * layers_.size());
  Matrix upstream = d_output;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& layer = layers_[k];
    const Matrix d_pre = activation_backward(layer.activation, tape.outputs[k], upstream);
    grads.params[2 * k] = tape.inputs[k].transpose() * d_pre;
    grads.params[2 * k + 1] = d_pre.colwise().sum();
    upstream = d_pre * layer.weight.transpose();
  }
  grads.input = std::move(upstream);
  return grads;
}

bool DenseNet::same_architecture(const DenseNet& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.activation != b.activation) {
      return false;
    }
  }
  return true;
}

DenseNet xavier_init(std::span<const std::size_t> sizes, std::uint64_t seed, Activation hidden,
                     Activation output) {
  if (sizes.size() < 2) throw UsageError("xavier_init: need at least input and output sizes");
  for (std::size_t s : sizes) {
    if (s < 1) throw UsageError("xavier_init: layer sizes must be >= 1");
  }
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const auto fan_in = static_cast<Eigen::Index>(sizes[i]);
    const auto fan_out = static_cast<Eigen::Index>(sizes[i + 1]);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer;
    layer.weight.resize(fan_in, fan_out);
    for (Eigen::Index c = 0; c < fan_out; ++c) {
      for (Eigen::Index r = 0; r < fan_in; ++r) layer.weight(r, c) = bound * (2.0 * uniform01(rng) - 1.0);
    }
    layer.bias = Matrix::Zero(1, fan_out);
    layer.activation = (i + 2 == sizes.size()) ? output : hidden;
    layers.push_back(std::move(layer));
  }
  return DenseNet(std::move(layers));
}

Adam::Adam(AdamConfig config, const std::vector<const Matrix*>& shapes) : config_(config) {
  for (const Matrix* p : shapes) {
    m_.push_back(Matrix::Zero(p->rows(), p->cols()));
    v_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

void Adam::step(const std::vector<Matrix*>& params, std::span<const Matrix> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw UsageError("adam: parameter/gradient count does not match optimizer state");
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    if (g.rows() != m_[i].rows() || g.cols() != m_[i].cols()) {
      throw UsageError("adam: gradient " + std::to_string(i) + " shape mismatch");
    }
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    const auto m_hat = m_[i].array() / correction1;
    const auto v_hat = v_[i].array() / correction2;
    params[i]->array() -= config_.lr * m_hat / (v_hat.sqrt() + config_.eps);
  }
}

void Adam::restore(std::uint64_t step, std::vector<Matrix> m, std::vector<Matrix> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw DataError("adam: restored state has the wrong number of tensors");
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].rows() != m_[i].rows() || m[i].cols() != m_[i].cols() || v[i].rows() != v_[i].rows() ||
        v[i].cols() != v_[i].cols()) {
      throw DataError("adam: restored moment " + std::to_string(i) + " has the wrong shape");
    }
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

double global_norm(std::span<const Matrix> grads) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  return std::sqrt(sq);
}

double clip_global_norm(std::span<Matrix> grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads) g *= scale;
  }
  return norm;
}

void soft_update(DenseNet& target, const DenseNet& source, double tau) {
  if (!target.same_architecture(source)) {
    throw UsageError("soft_update: architecture mismatch");
  }
  if (tau < 0.0 || tau > 1.0) throw UsageError("soft_update: tau must lie in [0, 1]");
  auto dst = target.parameters();
  auto src = source.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    *dst[i] = (1.0 - tau) * (*dst[i]) + tau * (*src[i]);
  }
}

}  // namespace tricrlad
