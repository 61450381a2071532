#pragma once

// Causal feature extractor.
//
// Each input dimension j becomes a token E_j = x_j * u_j + b_j (width k).
// Queries are built the same way from either the point itself or its
// counterfactual (every component replaced by the mean over dimensions);
// keys and values always come from the observed point:
//
//   A       = softmax_rows((Q W1)(X W2)^T / sqrt(k))      d x d
//   context = A (X W3)                                    d x k
//   F       = (flatten(context) H + h) * scaler           1 x f
//   a       = sigmoid(F s + s0)                           self-generated score
//
// Training minimises  MMD(F_original, F_counterfactual)
//                   + asymmetric_l2(a_sac - a_counterfactual, tau).

#include "tricrlad/checkpoint.hpp"
#include "tricrlad/common.hpp"
#include "tricrlad/diffnet.hpp"

#include <atomic>
#include <memory>
#include <string>
#include <vector>

namespace tricrlad {

struct CfeConfig {
  std::size_t token_width = 16;
  std::size_t feature_width = 32;
  double asym_tau = 0.7;
  double min_bandwidth = 1e-3;
  double lr = 5e-4;
  double grad_clip = 5.0;
};

enum class QuerySource { Original, Counterfactual };

struct CfeParams {
  Matrix token_scale;   // d x k (u)
  Matrix token_bias;    // d x k (b)
  Matrix w_query;       // k x k (W1)
  Matrix w_key;         // k x k (W2)
  Matrix w_value;       // k x k (W3)
  Matrix head_weight;   // (d*k) x f
  Matrix head_bias;     // 1 x f
  Matrix scaler;        // 1 x 1
  Matrix score_weight;  // f x 1
  Matrix score_bias;    // 1 x 1

  static CfeParams init(std::size_t dim, std::size_t token_width, std::size_t feature_width,
                        std::uint64_t seed);

  std::size_t dim() const { return static_cast<std::size_t>(token_scale.rows()); }
  std::size_t token_width() const { return static_cast<std::size_t>(token_scale.cols()); }
  std::size_t feature_width() const { return static_cast<std::size_t>(head_weight.cols()); }

  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  static const std::vector<std::string>& parameter_names();
};

struct CausalFeature {
  RowVector f_vec;
  double a_causal = 0.5;
};

// Intermediates of one forward pass, enough for the exact backward pass.
struct CfeTrace {
  Vector x;
  QuerySource source = QuerySource::Original;
  double mean = 0.0;
  Matrix tokens;     // X_tok, d x k
  Matrix queries;    // Q, d x k
  Matrix q_proj;     // Q W1
  Matrix k_proj;     // X W2
  Matrix v_proj;     // X W3
  Matrix attention;  // A, d x d
  RowVector flat;    // flatten(context), 1 x dk
  RowVector head;    // pre-scaler head output, 1 x f
  CausalFeature out;
};

// Number of counterfactual() calls so far (instrumentation for wiring checks).
std::uint64_t counterfactual_invocations();

Vector counterfactual(const Vector& x);

CausalFeature cfe_forward(const CfeParams& params, const Vector& x, QuerySource source);
CfeTrace cfe_forward_traced(const CfeParams& params, const Vector& x, QuerySource source);

// Gradients (ordered like CfeParams::parameters()) of a loss whose partials
// w.r.t. F and a_causal are d_feature and d_score. Optionally returns dL/dx.
std::vector<Matrix> cfe_backward(const CfeParams& params, const CfeTrace& trace,
                                 const RowVector& d_feature, double d_score,
                                 Vector* d_input = nullptr);

// Biased Gaussian-kernel MMD^2 with k(p, q) = exp(-|p - q|^2 / (2 h^2)),
// clamped at 0. Rows are samples.
double mmd(const Matrix& xs, const Matrix& ys, double bandwidth);

struct MmdGradient {
  double value = 0.0;
  Matrix d_xs;
  Matrix d_ys;
};
// Same estimator plus gradients w.r.t. every sample (zero when clamped).
MmdGradient mmd_with_grad(const Matrix& xs, const Matrix& ys, double bandwidth);

// Median pairwise Euclidean distance over the union of both batches, floored.
double median_bandwidth(const Matrix& xs, const Matrix& ys, double floor);

double asymmetric_l2(const Vector& u, double tau);
// d/du_i of asymmetric_l2.
Vector asymmetric_l2_grad(const Vector& u, double tau);

struct CfeLoss {
  double total = 0.0;
  double mmd = 0.0;
  double asym = 0.0;
  double bandwidth = 0.0;
  std::vector<Matrix> grads;
};

// Rows of `batch` are observations; a_sac is treated as a constant target.
CfeLoss cfe_loss(const CfeParams& params, const Matrix& batch, const Vector& a_sac,
                 const CfeConfig& config);

// Maps raw observations to the state features consumed by the agent and
// trains itself from the agent's scores.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t feature_dim() const = 0;

  // N x f state features for N observations.
  virtual Matrix encode(const Matrix& observations) const = 0;
  // One optimisation step against detached agent scores; returns the loss.
  virtual double update(const Matrix& observations, const Vector& a_sac) = 0;

  virtual void save(Checkpoint& ckpt) const = 0;
  virtual void load(const Checkpoint& ckpt) = 0;
  virtual std::unique_ptr<FeatureExtractor> clone() const = 0;
};

class CausalFeatureExtractor final : public FeatureExtractor {
 public:
  CausalFeatureExtractor(std::size_t dim, const CfeConfig& config, std::uint64_t seed);

  std::string kind() const override { return "cfe"; }
  std::size_t input_dim() const override { return params_.dim(); }
  std::size_t feature_dim() const override { return params_.feature_width(); }
  Matrix encode(const Matrix& observations) const override;
  double update(const Matrix& observations, const Vector& a_sac) override;
  void save(Checkpoint& ckpt) const override;
  void load(const Checkpoint& ckpt) override;
  std::unique_ptr<FeatureExtractor> clone() const override;

  const CfeParams& params() const { return params_; }
  CfeParams& params() { return params_; }
  const CfeLoss& last_loss() const { return last_; }

 private:
  CfeConfig config_;
  CfeParams params_;
  Adam adam_;
  CfeLoss last_;
};

// Ablation stand-in: two-layer dense encoder (relu hidden, linear out) of the
// same output width plus a sigmoid score head, trained by the asymmetric-L2
// term only. Never builds counterfactuals.
class PlainEncoder final : public FeatureExtractor {
 public:
  PlainEncoder(std::size_t dim, std::size_t hidden, const CfeConfig& config, std::uint64_t seed);

  std::string kind() const override { return "plain"; }
  std::size_t input_dim() const override { return body_.in_dim(); }
  std::size_t feature_dim() const override { return body_.out_dim(); }
  Matrix encode(const Matrix& observations) const override;
  double update(const Matrix& observations, const Vector& a_sac) override;
  void save(Checkpoint& ckpt) const override;
  void load(const Checkpoint& ckpt) override;
  std::unique_ptr<FeatureExtractor> clone() const override;

 private:
  CfeConfig config_;
  DenseNet body_;
  DenseNet score_head_;
  Adam adam_;
};

}  // namespace tricrlad
