#include "tricrlad/cfe.hpp"

#include <algorithm>
#include <cmath>

namespace tricrlad {

namespace {

std::atomic<std::uint64_t> g_counterfactual_calls{0};

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = bound * (2.0 * uniform01(rng) - 1.0);
  }
  return m;
}

double xavier_bound(Eigen::Index fan_in, Eigen::Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void softmax_rows(Matrix& m) { apply_activation(Activation::SoftmaxRow, m); }

// Squared Euclidean distance for every row pair, clamped at 0.
Matrix squared_distances(const Matrix& a, const Matrix& b) {
  Matrix d2 = (-2.0 * a) * b.transpose();
  d2.colwise() += a.rowwise().squaredNorm();
  d2.rowwise() += b.rowwise().squaredNorm().transpose();
  return d2.cwiseMax(0.0);
}

// exp(-|p - q|^2 / (2 h^2)) for every row pair.
Matrix gaussian_kernel(const Matrix& a, const Matrix& b, double bandwidth) {
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  return (-inv * squared_distances(a, b)).array().exp().matrix();
}

// Adds the token, query, key and value gradients of one sample to g, given
// dL/d flatten(context).
void attention_backward(const CfeParams& params, const CfeTrace& tr, const RowVector& d_flat,
                        std::vector<Matrix>& g, Vector* d_input) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Index d = tr.tokens.rows();
  const Eigen::Index k = tr.tokens.cols();
  const Eigen::Map<const RowMajor> d_context(d_flat.data(), d, k);

  const Matrix d_attn = d_context * tr.v_proj.transpose();
  const Matrix d_v = tr.attention.transpose() * d_context;
  const Vector dots = (d_attn.array() * tr.attention.array()).rowwise().sum();
  const Matrix d_scores =
      (tr.attention.array() * (d_attn.colwise() - dots).array()).matrix() / std::sqrt(static_cast<double>(k));
  const Matrix d_q = d_scores * tr.k_proj;
  const Matrix d_k = d_scores.transpose() * tr.q_proj;

  g[2].noalias() += tr.queries.transpose() * d_q;
  g[3].noalias() += tr.tokens.transpose() * d_k;
  g[4].noalias() += tr.tokens.transpose() * d_v;
  const Matrix d_queries = d_q * params.w_query.transpose();
  Matrix d_tokens = d_k * params.w_key.transpose();
  d_tokens.noalias() += d_v * params.w_value.transpose();

  if (tr.source == QuerySource::Original) {
    d_tokens += d_queries;
    g[0] += (d_tokens.array().colwise() * tr.x.array()).matrix();
    g[1] += d_tokens;
  } else {
    g[0] += (d_tokens.array().colwise() * tr.x.array()).matrix() + tr.mean * d_queries;
    g[1] += d_tokens + d_queries;
  }

  if (d_input != nullptr) {
    *d_input = (d_tokens.array() * params.token_scale.array()).rowwise().sum().matrix();
    if (tr.source == QuerySource::Counterfactual) {
      const double d_mean = (d_queries.array() * params.token_scale.array()).sum();
      d_input->array() += d_mean / static_cast<double>(d);
    }
  }
}

std::vector<Matrix> zero_grads(const CfeParams& params) {
  std::vector<Matrix> g;
  for (const Matrix* p : params.parameters()) g.push_back(Matrix::Zero(p->rows(), p->cols()));
  return g;
}

void check_same_width(const Matrix& xs, const Matrix& ys) {
  if (xs.rows() == 0 || ys.rows() == 0) throw UsageError("mmd: batches must be nonempty");
  if (xs.cols() != ys.cols()) {
    throw UsageError("mmd: dimension mismatch (" + std::to_string(xs.cols()) + " vs " +
                     std::to_string(ys.cols()) + ")");
  }
}

}  // namespace

CfeParams CfeParams::init(std::size_t dim, std::size_t token_width, std::size_t feature_width,
                          std::uint64_t seed) {
  if (dim < 1 || token_width < 1 || feature_width < 1) {
    throw UsageError("cfe: dim, token width and feature width must be >= 1");
  }
  const auto d = static_cast<Eigen::Index>(dim);
  const auto k = static_cast<Eigen::Index>(token_width);
  const auto f = static_cast<Eigen::Index>(feature_width);
  Rng rng(seed);
  CfeParams p;
  p.token_scale = uniform_matrix(d, k, xavier_bound(1, k), rng);
  p.token_bias = uniform_matrix(d, k, xavier_bound(1, k), rng);
  p.w_query = uniform_matrix(k, k, xavier_bound(k, k), rng);
  p.w_key = uniform_matrix(k, k, xavier_bound(k, k), rng);
  p.w_value = uniform_matrix(k, k, xavier_bound(k, k), rng);
  p.head_weight = uniform_matrix(d * k, f, xavier_bound(d * k, f), rng);
  p.head_bias = Matrix::Zero(1, f);
  p.scaler = Matrix::Constant(1, 1, 1.0);
  p.score_weight = uniform_matrix(f, 1, xavier_bound(f, 1), rng);
  p.score_bias = Matrix::Zero(1, 1);
  return p;
}

std::vector<Matrix*> CfeParams::parameters() {
  return {&token_scale, &token_bias, &w_query, &w_key,        &w_value,
          &head_weight, &head_bias,  &scaler,  &score_weight, &score_bias};
}

std::vector<const Matrix*> CfeParams::parameters() const {
  return {&token_scale, &token_bias, &w_query, &w_key,        &w_value,
          &head_weight, &head_bias,  &scaler,  &score_weight, &score_bias};
}

const std::vector<std::string>& CfeParams::parameter_names() {
  static const std::vector<std::string> names = {
      "token_scale", "token_bias", "w_query", "w_key",        "w_value",
      "head_weight", "head_bias",  "scaler",  "score_weight", "score_bias"};
  return names;
}

std::uint64_t counterfactual_invocations() { return g_counterfactual_calls.load(); }

Vector counterfactual(const Vector& x) {
  g_counterfactual_calls.fetch_add(1, std::memory_order_relaxed);
  return Vector::Constant(x.size(), x.mean());
}

CfeTrace cfe_forward_traced(const CfeParams& params, const Vector& x, QuerySource source) {
  if (static_cast<std::size_t>(x.size()) != params.dim()) {
    throw UsageError("cfe_forward: input dim " + std::to_string(x.size()) + " != " +
                     std::to_string(params.dim()));
  }
  const double k = static_cast<double>(params.token_width());
  CfeTrace tr;
  tr.x = x;
  tr.source = source;
  tr.mean = x.mean();
  tr.tokens = (params.token_scale.array().colwise() * x.array()).matrix() + params.token_bias;
  if (source == QuerySource::Counterfactual) {
    const Vector xc = counterfactual(x);
    tr.queries = (params.token_scale.array().colwise() * xc.array()).matrix() + params.token_bias;
  } else {
    tr.queries = tr.tokens;
  }
  tr.q_proj = tr.queries * params.w_query;
  tr.k_proj = tr.tokens * params.w_key;
  tr.v_proj = tr.tokens * params.w_value;
  tr.attention = tr.q_proj * tr.k_proj.transpose() / std::sqrt(k);
  softmax_rows(tr.attention);
  const Matrix context = tr.attention * tr.v_proj;

  const Eigen::Index d = context.rows();
  const Eigen::Index kw = context.cols();
  tr.flat.resize(d * kw);
  for (Eigen::Index j = 0; j < d; ++j) tr.flat.segment(j * kw, kw) = context.row(j);

  tr.head = tr.flat * params.head_weight + params.head_bias;
  tr.out.f_vec = tr.head * params.scaler(0, 0);
  const double logit = tr.out.f_vec.dot(params.score_weight.col(0)) + params.score_bias(0, 0);
  tr.out.a_causal = sigmoid(logit);
  if (!tr.out.f_vec.allFinite() || !std::isfinite(tr.out.a_causal)) {
    throw NumericalError("cfe_forward: non-finite causal feature");
  }
  return tr;
}

CausalFeature cfe_forward(const CfeParams& params, const Vector& x, QuerySource source) {
  return cfe_forward_traced(params, x, source).out;
}

std::vector<Matrix> cfe_backward(const CfeParams& params, const CfeTrace& tr,
                                 const RowVector& d_feature, double d_score, Vector* d_input) {
  const double a = tr.out.a_causal;
  const double scale = params.scaler(0, 0);

  std::vector<Matrix> g = zero_grads(params);
  const double d_logit = d_score * a * (1.0 - a);
  g[8] = tr.out.f_vec.transpose() * d_logit;
  g[9] = Matrix::Constant(1, 1, d_logit);

  const RowVector d_f = d_feature + d_logit * params.score_weight.col(0).transpose();
  g[7] = Matrix::Constant(1, 1, d_f.dot(tr.head));
  const RowVector d_head = d_f * scale;
  g[5] = tr.flat.transpose() * d_head;
  g[6] = d_head;
  const RowVector d_flat = d_head * params.head_weight.transpose();
  attention_backward(params, tr, d_flat, g, d_input);
  return g;
}

double mmd(const Matrix& xs, const Matrix& ys, double bandwidth) {
  check_same_width(xs, ys);
  if (!(bandwidth > 0.0)) throw UsageError("mmd: bandwidth must be > 0");
  const double n = static_cast<double>(xs.rows());
  const double m = static_cast<double>(ys.rows());
  const double raw = gaussian_kernel(xs, xs, bandwidth).sum() / (n * n) +
                     gaussian_kernel(ys, ys, bandwidth).sum() / (m * m) -
                     2.0 * gaussian_kernel(xs, ys, bandwidth).sum() / (n * m);
  return std::max(raw, 0.0);
}

MmdGradient mmd_with_grad(const Matrix& xs, const Matrix& ys, double bandwidth) {
  check_same_width(xs, ys);
  if (!(bandwidth > 0.0)) throw UsageError("mmd: bandwidth must be > 0");
  const double n = static_cast<double>(xs.rows());
  const double m = static_cast<double>(ys.rows());
  const double h2 = bandwidth * bandwidth;
  const Matrix kxx = gaussian_kernel(xs, xs, bandwidth);
  const Matrix kyy = gaussian_kernel(ys, ys, bandwidth);
  const Matrix kxy = gaussian_kernel(xs, ys, bandwidth);
  const double raw = kxx.sum() / (n * n) + kyy.sum() / (m * m) - 2.0 * kxy.sum() / (n * m);

  MmdGradient out;
  out.d_xs = Matrix::Zero(xs.rows(), xs.cols());
  out.d_ys = Matrix::Zero(ys.rows(), ys.cols());
  out.value = std::max(raw, 0.0);
  if (raw <= 0.0) return out;

  // d k(p, q) / dp = -k(p, q) (p - q) / h^2, summed in matrix form.
  const double cxx = 2.0 / (n * n * h2);
  const double cyy = 2.0 / (m * m * h2);
  const double cxy = 2.0 / (n * m * h2);
  out.d_xs = -cxx * (kxx.rowwise().sum().asDiagonal() * xs - kxx * xs) +
             cxy * (kxy.rowwise().sum().asDiagonal() * xs - kxy * ys);
  out.d_ys = -cyy * (kyy.rowwise().sum().asDiagonal() * ys - kyy * ys) +
             cxy * (kxy.colwise().sum().transpose().asDiagonal() * ys - kxy.transpose() * xs);
  return out;
}

double median_bandwidth(const Matrix& xs, const Matrix& ys, double floor) {
  check_same_width(xs, ys);
  Matrix all(xs.rows() + ys.rows(), xs.cols());
  all << xs, ys;
  const Matrix d2 = squared_distances(all, all);
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(all.rows() * (all.rows() - 1) / 2));
  for (Eigen::Index j = 1; j < all.rows(); ++j) {
    for (Eigen::Index i = 0; i < j; ++i) dists.push_back(d2(i, j));
  }
  if (dists.empty()) return floor;
  const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  return std::max(std::sqrt(*mid), floor);
}

double asymmetric_l2(const Vector& u, double tau) {
  if (u.size() == 0) throw UsageError("asymmetric_l2: empty error vector");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double pos = std::max(0.0, u[i]);
    const double neg = std::max(0.0, -u[i]);
    sum += tau * pos * pos + (1.0 - tau) * neg * neg;
  }
  return sum / static_cast<double>(u.size());
}

Vector asymmetric_l2_grad(const Vector& u, double tau) {
  const double n = static_cast<double>(u.size());
  Vector g(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    g[i] = (2.0 * tau * std::max(0.0, u[i]) - 2.0 * (1.0 - tau) * std::max(0.0, -u[i])) / n;
  }
  return g;
}

CfeLoss cfe_loss(const CfeParams& params, const Matrix& batch, const Vector& a_sac,
                 const CfeConfig& config) {
  if (batch.rows() == 0) throw UsageError("cfe_loss: empty batch");
  if (a_sac.size() != batch.rows()) {
    throw UsageError("cfe_loss: " + std::to_string(a_sac.size()) + " scores for " +
                     std::to_string(batch.rows()) + " observations");
  }
  const Eigen::Index n = batch.rows();
  const auto f = static_cast<Eigen::Index>(params.feature_width());

  std::vector<CfeTrace> original;
  std::vector<CfeTrace> causal;
  original.reserve(static_cast<std::size_t>(n));
  causal.reserve(static_cast<std::size_t>(n));
  Matrix f_original(n, f);
  Matrix f_causal(n, f);
  Vector a_causal(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector x = batch.row(i).transpose();
    original.push_back(cfe_forward_traced(params, x, QuerySource::Original));
    causal.push_back(cfe_forward_traced(params, x, QuerySource::Counterfactual));
    f_original.row(i) = original.back().out.f_vec;
    f_causal.row(i) = causal.back().out.f_vec;
    a_causal[i] = causal.back().out.a_causal;
  }

  CfeLoss loss;
  loss.bandwidth = median_bandwidth(f_original, f_causal, config.min_bandwidth);
  const MmdGradient m = mmd_with_grad(f_original, f_causal, loss.bandwidth);
  const Vector u = a_sac - a_causal;
  loss.mmd = m.value;
  loss.asym = asymmetric_l2(u, config.asym_tau);
  loss.total = loss.mmd + loss.asym;
  if (!std::isfinite(loss.total)) throw NumericalError("cfe_loss: non-finite loss");

  // u = a_sac - a_causal, so dL/da_causal = -dL/du.
  const Vector d_score = -asymmetric_l2_grad(u, config.asym_tau);

  // Head and score layers are batched over both paths; rows [0, n) hold the
  // original path and rows [n, 2n) the counterfactual path.
  const auto dk = static_cast<Eigen::Index>(params.dim() * params.token_width());
  Matrix flat(2 * n, dk);
  Matrix head(2 * n, f);
  Matrix feats(2 * n, f);
  Vector d_logit(2 * n);
  Matrix d_feat(2 * n, f);
  d_feat << m.d_xs, m.d_ys;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = original[static_cast<std::size_t>(i)];
    const auto& c = causal[static_cast<std::size_t>(i)];
    flat.row(i) = o.flat;
    flat.row(n + i) = c.flat;
    head.row(i) = o.head;
    head.row(n + i) = c.head;
    feats.row(i) = o.out.f_vec;
    feats.row(n + i) = c.out.f_vec;
    d_logit[i] = 0.0;
    d_logit[n + i] = d_score[i] * c.out.a_causal * (1.0 - c.out.a_causal);
  }
  loss.grads = zero_grads(params);
  loss.grads[8] = feats.transpose() * d_logit;
  loss.grads[9](0, 0) = d_logit.sum();
  d_feat.noalias() += d_logit * params.score_weight.col(0).transpose();
  loss.grads[7](0, 0) = (d_feat.array() * head.array()).sum();
  const Matrix d_head = d_feat * params.scaler(0, 0);
  loss.grads[5].noalias() = flat.transpose() * d_head;
  loss.grads[6] = d_head.colwise().sum();
  const Matrix d_flat = d_head * params.head_weight.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    attention_backward(params, original[static_cast<std::size_t>(i)], d_flat.row(i), loss.grads, nullptr);
    attention_backward(params, causal[static_cast<std::size_t>(i)], d_flat.row(n + i), loss.grads, nullptr);
  }
  return loss;
}

CausalFeatureExtractor::CausalFeatureExtractor(std::size_t dim, const CfeConfig& config,
                                               std::uint64_t seed)
    : config_(config),
      params_(CfeParams::init(dim, config.token_width, config.feature_width, seed)),
      adam_(AdamConfig{.lr = config.lr}, std::as_const(params_).parameters()) {}

Matrix CausalFeatureExtractor::encode(const Matrix& observations) const {
  Matrix out(observations.rows(), static_cast<Eigen::Index>(feature_dim()));
  for (Eigen::Index i = 0; i < observations.rows(); ++i) {
    out.row(i) = cfe_forward(params_, observations.row(i).transpose(), QuerySource::Counterfactual).f_vec;
  }
  return out;
}

double CausalFeatureExtractor::update(const Matrix& observations, const Vector& a_sac) {
  last_ = cfe_loss(params_, observations, a_sac, config_);
  clip_global_norm(last_.grads, config_.grad_clip);
  adam_.step(params_.parameters(), last_.grads);
  return last_.total;
}

void CausalFeatureExtractor::save(Checkpoint& ckpt) const {
  ckpt.set_meta("extractor.kind", kind());
  const auto& names = CfeParams::parameter_names();
  const auto params = params_.parameters();
  for (std::size_t i = 0; i < names.size(); ++i) ckpt.put("cfe." + names[i], *params[i]);
  put_adam(ckpt, "cfe.adam", adam_);
}

void CausalFeatureExtractor::load(const Checkpoint& ckpt) {
  if (ckpt.meta("extractor.kind") != kind()) throw DataError("checkpoint: extractor is not a CFE");
  const auto& names = CfeParams::parameter_names();
  auto params = params_.parameters();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Matrix& m = ckpt.get("cfe." + names[i]);
    if (m.rows() != params[i]->rows() || m.cols() != params[i]->cols()) {
      throw DataError("checkpoint: CFE tensor '" + names[i] + "' has the wrong shape");
    }
    *params[i] = m;
  }
  get_adam(ckpt, "cfe.adam", adam_);
}

std::unique_ptr<FeatureExtractor> CausalFeatureExtractor::clone() const {
  return std::make_unique<CausalFeatureExtractor>(*this);
}

PlainEncoder::PlainEncoder(std::size_t dim, std::size_t hidden, const CfeConfig& config,
                           std::uint64_t seed)
    : config_(config) {
  const std::size_t body_sizes[] = {dim, hidden, config.feature_width};
  const std::size_t head_sizes[] = {config.feature_width, 1};
  body_ = xavier_init(body_sizes, derive_seed(seed, 1), Activation::Relu, Activation::Linear);
  score_head_ = xavier_init(head_sizes, derive_seed(seed, 2), Activation::Linear, Activation::Sigmoid);
  std::vector<const Matrix*> shapes;
  for (const Matrix* p : std::as_const(body_).parameters()) shapes.push_back(p);
  for (const Matrix* p : std::as_const(score_head_).parameters()) shapes.push_back(p);
  adam_ = Adam(AdamConfig{.lr = config.lr}, shapes);
}

Matrix PlainEncoder::encode(const Matrix& observations) const { return body_.predict(observations); }

double PlainEncoder::update(const Matrix& observations, const Vector& a_sac) {
  if (a_sac.size() != observations.rows()) throw UsageError("plain encoder: misaligned batch");
  const ForwardPass body = body_.forward(observations);
  const ForwardPass head = score_head_.forward(body.output);
  const Vector u = a_sac - head.output.col(0);
  const double loss = asymmetric_l2(u, config_.asym_tau);
  const Matrix d_score = -asymmetric_l2_grad(u, config_.asym_tau);
  NetGradients gh = score_head_.backward(head.tape, d_score);
  NetGradients gb = body_.backward(body.tape, gh.input);
  std::vector<Matrix> grads = std::move(gb.params);
  for (auto& g : gh.params) grads.push_back(std::move(g));
  clip_global_norm(grads, config_.grad_clip);
  std::vector<Matrix*> params = body_.parameters();
  for (Matrix* p : score_head_.parameters()) params.push_back(p);
  adam_.step(params, grads);
  return loss;
}

void PlainEncoder::save(Checkpoint& ckpt) const {
  ckpt.set_meta("extractor.kind", kind());
  put_net(ckpt, "encoder.body", body_);
  put_net(ckpt, "encoder.score", score_head_);
  put_adam(ckpt, "encoder.adam", adam_);
}

void PlainEncoder::load(const Checkpoint& ckpt) {
  if (ckpt.meta("extractor.kind") != kind()) throw DataError("checkpoint: extractor is not a plain encoder");
  DenseNet body = get_net(ckpt, "encoder.body");
  DenseNet head = get_net(ckpt, "encoder.score");
  if (!body.same_architecture(body_) || !head.same_architecture(score_head_)) {
    throw DataError("checkpoint: plain encoder architecture mismatch");
  }
  body_ = std::move(body);
  score_head_ = std::move(head);
  get_adam(ckpt, "encoder.adam", adam_);
}

std::unique_ptr<FeatureExtractor> PlainEncoder::clone() const {
  return std::make_unique<PlainEncoder>(*this);
}

}  // namespace tricrlad
