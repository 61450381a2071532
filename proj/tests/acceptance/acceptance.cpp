// Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//
// Criteria 1-5 need the benchmark CSVs (cardio.csv, satimage2.csv,
// annthyroid.csv with a `label` column) in $TRICRLAD_DATA_DIR or
// --data-dir; without them they are reported as SKIP. Criteria 6-13 are
// self-contained.

#include "CLI11.hpp"
#include "support.hpp"
#include "tricrlad/adie.hpp"
#include "tricrlad/cfe.hpp"
#include "tricrlad/diffnet.hpp"
#include "tricrlad/harness.hpp"
#include "tricrlad/sac.hpp"
#include "tricrlad/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace tricrlad;
namespace fs = std::filesystem;
using tricrlad::testing::numeric_gradient;
using tricrlad::testing::random_matrix;
using tricrlad::testing::relative_error;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status = Status::Fail;
  std::string detail;
};

Outcome pass(std::string d) { return {Status::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::Fail, std::move(d)}; }
Outcome skip(std::string d) { return {Status::Skip, std::move(d)}; }
Outcome check(bool ok, std::string d) { return {ok ? Status::Pass : Status::Fail, std::move(d)}; }

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// ---------------------------------------------------------------- quantitative

struct DataContext {
  fs::path dir;
  fs::path out;

  std::optional<fs::path> find(const std::string& name) const {
    if (dir.empty()) return std::nullopt;
    const fs::path p = dir / (name + ".csv");
    if (!fs::exists(p)) return std::nullopt;
    return p;
  }

  RunConfig config(const fs::path& data, const std::string& name) const {
    RunConfig c;
    c.data_path = data.string();
    c.dataset_name = name;
    c.output_dir = (out / name).string();
    return c;
  }
};

double rl_mean_auc(const RunConfig& c, std::string& note) {
  const RunMetrics m = run_experiment(c);
  note = fmt("%s mean AUC %.4f +/- %.4f over %zu seeds%s", m.experiment.c_str(), m.mean_auc, m.std_auc,
             m.seeds.size(), m.partial ? " (partial: a seed failed)" : "");
  if (m.partial) return std::nan("");
  return m.mean_auc;
}

Outcome criterion_rl(const DataContext& ctx, const std::string& name, double bound,
                     std::optional<double>* cache = nullptr) {
  const auto path = ctx.find(name);
  if (!path) return skip(name + ".csv not found in the data directory");
  std::string note;
  const double auc = rl_mean_auc(ctx.config(*path, name), note);
  if (cache) *cache = auc;
  return check(auc >= bound, note + fmt(" (need >= %.2f)", bound));
}

Outcome criterion_iforest(const DataContext& ctx) {
  const auto path = ctx.find("cardio");
  if (!path) return skip("cardio.csv not found in the data directory");
  const RunConfig c = ctx.config(*path, "cardio");
  const Dataset data = load_config_dataset(c);
  std::vector<double> aucs;
  for (std::uint64_t seed : c.seeds) {
    aucs.push_back(iforest_reference_auc(prepare_data(data, c, seed), c.iforest, seed));
  }
  const auto [mean, sd] = mean_std(aucs);
  return check(std::abs(mean - 0.920) <= 0.03,
               fmt("isolation forest test AUC %.4f +/- %.4f over %zu splits (need 0.920 +/- 0.03)", mean, sd,
                   aucs.size()));
}

Outcome criterion_ablation(const DataContext& ctx, std::optional<double> full_auc) {
  const auto path = ctx.find("cardio");
  if (!path) return skip("cardio.csv not found in the data directory");
  std::string note;
  if (!full_auc) full_auc = rl_mean_auc(ctx.config(*path, "cardio"), note);
  std::ostringstream detail;
  detail << fmt("full %.4f", *full_auc);
  bool ok = std::isfinite(*full_auc);
  for (const std::string flag : {"fixed_threshold", "simple_reward", "no_causal"}) {
    RunConfig c = ctx.config(*path, "cardio");
    apply_ablation(c, flag);
    const double auc = rl_mean_auc(c, note);
    detail << fmt(", %s %.4f", flag.c_str(), auc);
    ok = ok && std::isfinite(auc) && *full_auc >= auc;
  }
  return check(ok, detail.str());
}

// ---------------------------------------------------------------- properties

// Largest per-tensor relative error of analytic vs central-difference
// gradients across all instances.
struct GradientTally {
  double worst = 0.0;
  int instances = 0;
  std::string where;
  void compare(const Matrix& analytic, Matrix& param, const std::function<double()>& loss) {
    const Matrix numeric = numeric_gradient(param, loss);
    const double e = relative_error(analytic, numeric);
    if (e <= worst) return;
    worst = e;
    where = fmt("instance %d, |analytic| %.2e, |numeric| %.2e", instances, analytic.norm(), numeric.norm());
  }
};

// Zero-initialised biases put rows whose previous ReLU layer is entirely off
// exactly on a kink, where central differences are one-sided. Random biases
// move every instance to a differentiable point.
void randomize_biases(DenseNet& net, Rng& rng) {
  for (auto& layer : net.layers()) layer.bias = random_matrix(1, layer.bias.cols(), rng, 0.1);
}

Outcome criterion_gradients() {
  constexpr int kInstances = 20;
  constexpr double kTolerance = 1e-4;
  Rng rng(6006);
  GradientTally dense, q1, q2, value, policy, cfe_param, cfe_input, cfe_total, mmd_grad, asym;

  const Activation hidden_acts[] = {Activation::Relu, Activation::Tanh, Activation::Sigmoid};
  const Activation out_acts[] = {Activation::Linear, Activation::Sigmoid, Activation::SoftmaxRow};
  for (int t = 0; t < kInstances; ++t) {
    dense.instances = t;
    const std::size_t in = 2 + uniform_index(rng, 4);
    const std::size_t h1 = 2 + uniform_index(rng, 6);
    const std::size_t h2 = 2 + uniform_index(rng, 6);
    const std::size_t out = 1 + uniform_index(rng, 3);
    const std::size_t sizes[] = {in, h1, h2, out};
    DenseNet net = xavier_init(sizes, rng(), hidden_acts[t % 3], out_acts[(t / 3) % 3]);
    randomize_biases(net, rng);
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(uniform_index(rng, 5));
    const Matrix x = random_matrix(n, static_cast<Eigen::Index>(in), rng);
    const Matrix dir = random_matrix(n, static_cast<Eigen::Index>(out), rng);
    const NetGradients g = net.backward(net.forward(x).tape, dir);
    auto params = net.parameters();
    auto loss = [&] { return (net.predict(x).array() * dir.array()).sum(); };
    for (std::size_t i = 0; i < params.size(); ++i) dense.compare(g.params[i], *params[i], loss);
  }

  for (int t = 0; t < kInstances; ++t) {
    for (auto* tally : {&q1, &q2, &value, &policy}) tally->instances = t;
    SacConfig cfg;
    cfg.hidden = {4 + uniform_index(rng, 6), 4 + uniform_index(rng, 6)};
    cfg.alpha_ent = 0.05 + 0.5 * uniform01(rng);
    const std::size_t fdim = 2 + uniform_index(rng, 5);
    Agent agent(fdim, cfg, rng());
    for (DenseNet* net : {&agent.policy(), &agent.q1(), &agent.q2(), &agent.value()}) randomize_biases(*net, rng);
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(uniform_index(rng, 6));
    const Matrix f = random_matrix(n, static_cast<Eigen::Index>(fdim), rng);
    Vector a(n);
    Vector y(n);
    Vector noise(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      a[i] = 0.02 + 0.96 * uniform01(rng);
      y[i] = 2.0 * uniform01(rng) - 1.0;
      noise[i] = standard_normal(rng);
    }
    for (int which : {1, 2}) {
      const LossAndGrads l = agent.critic_loss(which, f, a, y);
      auto params = (which == 1 ? agent.q1() : agent.q2()).parameters();
      auto loss = [&] { return agent.critic_loss(which, f, a, y).loss; };
      for (std::size_t i = 0; i < params.size(); ++i) {
        (which == 1 ? q1 : q2).compare(l.grads[i], *params[i], loss);
      }
    }
    const LossAndGrads v = agent.value_loss(f, noise);
    auto vparams = agent.value().parameters();
    auto vloss = [&] { return agent.value_loss(f, noise).loss; };
    for (std::size_t i = 0; i < vparams.size(); ++i) value.compare(v.grads[i], *vparams[i], vloss);
    const LossAndGrads p = agent.policy_loss(f, noise);
    auto pparams = agent.policy().parameters();
    auto ploss = [&] { return agent.policy_loss(f, noise).loss; };
    for (std::size_t i = 0; i < pparams.size(); ++i) policy.compare(p.grads[i], *pparams[i], ploss);
  }

  for (int t = 0; t < kInstances; ++t) {
    for (auto* tally : {&cfe_param, &cfe_input, &cfe_total, &mmd_grad, &asym}) tally->instances = t;
    const std::size_t d = 2 + uniform_index(rng, 4);
    const std::size_t k = 2 + uniform_index(rng, 3);
    const std::size_t fw = 2 + uniform_index(rng, 4);
    CfeParams params = CfeParams::init(d, k, fw, rng());
    const Vector x = random_matrix(static_cast<Eigen::Index>(d), 1, rng).col(0).cwiseAbs();
    const RowVector d_feature = random_matrix(1, static_cast<Eigen::Index>(fw), rng).row(0);
    const double d_score = 2.0 * uniform01(rng) - 1.0;
    const QuerySource source = t % 2 == 0 ? QuerySource::Original : QuerySource::Counterfactual;
    auto head_loss = [&](const Vector& input) {
      const CausalFeature out = cfe_forward(params, input, source);
      return out.f_vec.dot(d_feature) + d_score * out.a_causal;
    };
    Vector d_input;
    const auto grads = cfe_backward(params, cfe_forward_traced(params, x, source), d_feature, d_score, &d_input);
    auto ps = params.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      cfe_param.compare(grads[i], *ps[i], [&] { return head_loss(x); });
    }
    Matrix xm = x;
    cfe_input.compare(d_input, xm, [&] { return head_loss(xm.col(0)); });

    // Full training objective at the step's (fixed) median bandwidth.
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(uniform_index(rng, 4));
    const Matrix batch = random_matrix(n, static_cast<Eigen::Index>(d), rng).cwiseAbs();
    Vector a_sac(n);
    for (Eigen::Index i = 0; i < n; ++i) a_sac[i] = uniform01(rng);
    const CfeConfig cfg;
    const CfeLoss l = cfe_loss(params, batch, a_sac, cfg);
    auto objective = [&] {
      Matrix fo(n, static_cast<Eigen::Index>(fw));
      Matrix fc(n, static_cast<Eigen::Index>(fw));
      Vector ac(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Vector row = batch.row(i).transpose();
        fo.row(i) = cfe_forward(params, row, QuerySource::Original).f_vec;
        const CausalFeature c = cfe_forward(params, row, QuerySource::Counterfactual);
        fc.row(i) = c.f_vec;
        ac[i] = c.a_causal;
      }
      return mmd(fo, fc, l.bandwidth) + asymmetric_l2(a_sac - ac, cfg.asym_tau);
    };
    for (std::size_t i = 0; i < ps.size(); ++i) cfe_total.compare(l.grads[i], *ps[i], objective);

    Matrix xs = random_matrix(n, 3, rng);
    Matrix ys = random_matrix(n + 1, 3, rng) + Matrix::Constant(n + 1, 3, 0.3);
    const double h = 0.3 + uniform01(rng);
    const MmdGradient mg = mmd_with_grad(xs, ys, h);
    mmd_grad.compare(mg.d_xs, xs, [&] { return mmd(xs, ys, h); });
    mmd_grad.compare(mg.d_ys, ys, [&] { return mmd(xs, ys, h); });
    Matrix u = random_matrix(n, 1, rng);
    asym.compare(asymmetric_l2_grad(u.col(0), 0.7), u, [&] { return asymmetric_l2(u.col(0), 0.7); });
  }

  const std::pair<const char*, const GradientTally*> rows[] = {
      {"dense", &dense},         {"q1", &q1},           {"q2", &q2},
      {"value", &value},         {"policy", &policy},   {"cfe-head", &cfe_param},
      {"cfe-input", &cfe_input}, {"cfe-loss", &cfe_total}, {"mmd", &mmd_grad},
      {"asym-l2", &asym}};
  std::ostringstream detail;
  bool ok = true;
  for (const auto& [name, tally] : rows) {
    detail << name << ' ' << fmt("%.1e", tally->worst);
    if (tally->worst >= kTolerance) detail << " (" << tally->where << ")";
    detail << "; ";
    ok = ok && tally->worst < kTolerance;
  }
  detail << kInstances << " instances each, max relative error, need < 1e-4";
  return check(ok, detail.str());
}

Outcome criterion_fuzz() {
  constexpr std::uint64_t kSteps = 100000;
  Rng rng(7007);
  std::vector<EnvPoint> points;
  for (std::int64_t i = 0; i < 100; ++i) {
    points.push_back({i, random_matrix(3, 1, rng).col(0).cwiseAbs(), i < 10 ? Pool::A : Pool::U});
  }
  std::vector<double> scores;
  for (std::size_t i = 0; i < points.size(); ++i) scores.push_back(uniform01(rng));
  EnvConfig cfg;
  cfg.steps_per_episode = 5000;
  Environment env(points, scores, cfg, 77);
  std::uint64_t violations = 0;
  std::string first;
  double lo = 1e9;
  double hi = -1e9;
  for (std::uint64_t t = 0; t < kSteps; ++t) {
    double action = uniform01(rng);
    switch (uniform_index(rng, 8)) {
      case 0: action = 0.0; break;
      case 1: action = 1.0; break;
      case 2: action = env.state().th; break;
      default: break;
    }
    const StepResult r = env.step(action);
    lo = std::min(lo, r.reward);
    hi = std::max(hi, r.reward);
    const std::string v = check_invariants(env.state(), env.config());
    const std::size_t total =
        env.state().pools.size(Pool::A) + env.state().pools.size(Pool::T) + env.state().pools.size(Pool::U);
    if (!v.empty() || total != points.size()) {
      if (first.empty()) first = v.empty() ? "partition size changed" : v;
      ++violations;
    }
    if (r.done) env.reset_episode(uniform01(rng) < 0.5);
  }
  return check(violations == 0,
               fmt("%llu steps, %llu violations, reward range [%.3f, %.3f]%s%s",
                   static_cast<unsigned long long>(kSteps), static_cast<unsigned long long>(violations), lo, hi,
                   first.empty() ? "" : ", first: ", first.c_str()));
}

EnvState branch_state(double th, int c_t) {
  EnvState s;
  s.pools = PoolPartition(3);
  s.confidence = {0, c_t, 0};
  s.labeled_origin = {true, false, false};
  s.pools.assign(0, Pool::A);
  s.pools.assign(1, Pool::T);
  s.th = th;
  return s;
}

Outcome criterion_rewards() {
  const EnvConfig cfg;
  const EnvState s = branch_state(0.8, 2);
  struct Row {
    const char* name;
    double got;
    double want;
  };
  const Row table[] = {
      {"A a=1.0", reward(s, cfg, 0, 1.0, 0.5), 1.4},
      {"T C=2 a=0.9", reward(s, cfg, 1, 0.9, 0.5), 2.0 / 3.0},
      {"T a=0.5", reward(s, cfg, 1, 0.5, 0.5), -1.0},
      {"U a=0.6 if=0.7", reward(s, cfg, 2, 0.6, 0.7), -0.14},
      {"fallback (no forest)", reward(s, cfg, 2, 0.6, std::nan("")), -0.01},
  };
  std::ostringstream detail;
  bool ok = true;
  for (const auto& row : table) {
    const bool hit = std::abs(row.got - row.want) <= 1e-12;
    ok = ok && hit;
    if (!hit) detail << row.name << fmt(" gave %.6f want %.6f; ", row.got, row.want);
  }

  Rng rng(8008);
  double lo = 1e9;
  double hi = -1e9;
  for (int i = 0; i < 200000; ++i) {
    const double th = cfg.th_min + (cfg.th_max - cfg.th_min) * uniform01(rng);
    const int c = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(cfg.tc_max - 1)));
    const EnvState st = branch_state(th, c);
    double a = uniform01(rng);
    if (i % 5 == 0) a = static_cast<double>(i % 2);
    const double r = reward(st, cfg, uniform_index(rng, 3), a, uniform01(rng));
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  ok = ok && lo >= -1.0 && hi <= 2.0;
  detail << fmt("5 branches checked; 2e5 random draws span [%.4f, %.4f] (need within [-1, 2])", lo, hi);
  return check(ok, detail.str());
}

Outcome criterion_threshold() {
  EnvConfig cfg;
  Rng rng(9009);
  EnvState s;
  s.th = cfg.th_init;
  double lo = 1e9;
  double hi = -1e9;
  std::uint64_t out_of_range = 0;
  for (int u = 0; u < 10000; ++u) {
    // Adversarial streams: long runs of all-flagged or none-flagged windows,
    // alternating extremes and random ratios, against extreme targets.
    const int mode = (u / 250) % 4;
    cfg.ratio_target = (u / 1000) % 2 == 0 ? 0.0 : 1.0;
    if (mode == 3) cfg.ratio_target = uniform01(rng);
    s.decisions.clear();
    for (std::size_t i = 0; i < cfg.decision_window; ++i) {
      bool flag = false;
      switch (mode) {
        case 0: flag = true; break;
        case 1: flag = false; break;
        case 2: flag = u % 2 == 0; break;
        default: flag = uniform01(rng) < uniform01(rng); break;
      }
      s.decisions.push_back(flag);
    }
    const double th = update_threshold(s, cfg);
    lo = std::min(lo, th);
    hi = std::max(hi, th);
    if (th < cfg.th_min || th > cfg.th_max) ++out_of_range;
  }

  // Fixed point: ratio_current == ratio_target leaves TH unchanged.
  double drift = 0.0;
  for (int k = 0; k <= 100; k += 5) {
    EnvConfig fp;
    fp.ratio_target = k / 100.0;
    EnvState st;
    st.th = 0.55 + 0.004 * k;
    for (int i = 0; i < 100; ++i) st.decisions.push_back(i < k);
    const double before = st.th;
    drift = std::max(drift, std::abs(update_threshold(st, fp) - before));
  }
  return check(out_of_range == 0 && drift <= 1e-12,
               fmt("1e4 adversarial updates: TH range [%.4f, %.4f] within [%.2f, %.2f], %llu out of range; "
                   "fixed-point drift %.1e",
                   lo, hi, cfg.th_min, cfg.th_max, static_cast<unsigned long long>(out_of_range), drift));
}

double brute_mmd(const Matrix& xs, const Matrix& ys, double h) {
  auto k = [&](const RowVector& p, const RowVector& q) { return std::exp(-(p - q).squaredNorm() / (2.0 * h * h)); };
  const double m = static_cast<double>(xs.rows());
  const double n = static_cast<double>(ys.rows());
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    for (Eigen::Index j = 0; j < xs.rows(); ++j) sxx += k(xs.row(i), xs.row(j));
  }
  for (Eigen::Index i = 0; i < ys.rows(); ++i) {
    for (Eigen::Index j = 0; j < ys.rows(); ++j) syy += k(ys.row(i), ys.row(j));
  }
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    for (Eigen::Index j = 0; j < ys.rows(); ++j) sxy += k(xs.row(i), ys.row(j));
  }
  return sxx / (m * m) + syy / (n * n) - 2.0 * sxy / (m * n);
}

Outcome criterion_mmd() {
  Rng rng(1010);
  double self = 0.0;
  double closed = 0.0;
  double summed = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Eigen::Index m = 2 + static_cast<Eigen::Index>(uniform_index(rng, 20));
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(uniform_index(rng, 20));
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(uniform_index(rng, 6));
    const double h = 0.2 + 2.0 * uniform01(rng);
    const Matrix xs = random_matrix(m, d, rng);
    self = std::max(self, mmd(xs, xs, h));

    // Two point masses at distance D: 2 - 2 exp(-D^2 / (2 h^2)).
    const double dist = 0.5 + 10.0 * uniform01(rng);
    Matrix p = Matrix::Zero(m, d);
    Matrix q = Matrix::Zero(n, d);
    q.col(0).setConstant(dist);
    const double expected = 2.0 - 2.0 * std::exp(-dist * dist / (2.0 * h * h));
    closed = std::max(closed, std::abs(mmd(p, q, h) - expected));

    // Separated random clouds against the explicit kernel sums.
    const Matrix ys = random_matrix(n, d, rng) + Matrix::Constant(n, d, 3.0);
    summed = std::max(summed, std::abs(mmd(xs, ys, h) - brute_mmd(xs, ys, h)));
  }
  const Matrix zeros = Matrix::Zero(4, 2);
  Matrix far = Matrix::Zero(5, 2);
  far.col(0).setConstant(10.0);
  const double example = std::abs(mmd(zeros, far, 1.0) - 2.0 * (1.0 - std::exp(-50.0)));
  const double worst = std::max({closed, summed, example});
  return check(self <= 1e-9 && worst <= 1e-9,
               fmt("max mmd(X,X) %.1e; point-mass closed form err %.1e; kernel-sum err %.1e; origin/10 example err "
                   "%.1e (50 instances)",
                   self, closed, summed, example));
}

Outcome criterion_auc() {
  Rng rng(1111);
  int exact = 0;
  constexpr int kInstances = 100;
  for (int t = 0; t < kInstances; ++t) {
    const std::size_t n = 2 + uniform_index(rng, 300);
    const double grid = t % 3 == 0 ? 5.0 : 1e6;  // coarse grids force ties
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::floor(uniform01(rng) * grid) / grid;
      y[i] = i < 2 ? static_cast<int>(i) : (uniform01(rng) < 0.2 ? 1 : 0);
    }
    std::uint64_t doubled = 0;
    std::uint64_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] != 1) continue;
      ++pos;
      for (std::size_t j = 0; j < n; ++j) {
        if (y[j] != 0) continue;
        doubled += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
      }
    }
    const double pairwise =
        static_cast<double>(doubled) / (2.0 * static_cast<double>(pos) * static_cast<double>(n - pos));
    if (auc_roc(s, y) == pairwise) ++exact;
  }
  return check(exact == kInstances, fmt("%d/%d instances bit-identical to the pairwise count", exact, kInstances));
}

std::size_t distinct_u_visits(double alpha, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EnvPoint> points;
  for (std::int64_t i = 0; i < 1010; ++i) {
    points.push_back({i, random_matrix(8, 1, rng).col(0).cwiseAbs(), i < 10 ? Pool::A : Pool::U});
  }
  std::vector<double> scores(points.size());
  for (double& v : scores) v = uniform01(rng);
  EnvConfig cfg;
  cfg.alpha_bias = alpha;
  Environment env(points, scores, cfg, seed);
  Rng actions(seed + 1);
  std::set<std::int64_t> visited;
  for (int t = 0; t < 5000; ++t) {
    const StepResult r = env.step(uniform01(actions));
    if (r.pool == Pool::U) visited.insert(r.id);
  }
  return visited.size();
}

Outcome criterion_diversity() {
  std::ostringstream detail;
  bool ok = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    const std::size_t full = distinct_u_visits(0.3, seed);
    const std::size_t similarity_only = distinct_u_visits(0.0, seed);
    ok = ok && full > similarity_only;
    detail << "seed " << seed << ": alpha=0.3 " << full << " vs alpha=0 " << similarity_only << "; ";
  }
  detail << "distinct U points over 5000 steps on a 1000-point U pool";
  return check(ok, detail.str());
}

Outcome criterion_determinism(const fs::path& out) {
  const Dataset data = testing::synthetic_dataset(1655, 176, 21, 1313, "cardio_like");
  auto run = [&](const std::string& sub) {
    RunConfig c;
    c.dataset_name = "cardio_like";
    c.seeds = {0};
    c.episodes = 2;
    c.steps_per_episode = 1500;
    c.warmup_steps = 500;
    c.warmup_size = 1000;
    c.output_dir = (out / sub).string();
    fs::remove_all(c.output_dir);
    run_experiment(c, data);
    return c;
  };
  const RunConfig a = run("a");
  const RunConfig b = run("b");
  bool ok = true;
  std::ostringstream detail;
  const auto compare = [&](const fs::path& pa, const fs::path& pb) {
    const std::string ta = read_file(pa);
    const bool same = !ta.empty() && ta == read_file(pb);
    ok = ok && same;
    detail << pa.filename().string() << (same ? " identical" : " DIFFERS") << fmt(" (%zu bytes); ", ta.size());
  };
  compare(checkpoint_path(a, 0), checkpoint_path(b, 0));
  compare(step_log_path(a, 0), step_log_path(b, 0));
  compare(fs::path(a.output_dir) / (a.experiment_name() + ".metrics.json"),
          fs::path(b.output_dir) / (b.experiment_name() + ".metrics.json"));
  compare(fs::path(a.output_dir) / (a.experiment_name() + ".metrics.csv"),
          fs::path(b.output_dir) / (b.experiment_name() + ".metrics.csv"));
  detail << "1831x21 synthetic, 2x1500 steps";
  return check(ok, detail.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria: one PASS/FAIL/SKIP line each"};
  std::string data_dir;
  std::string out_dir = (fs::temp_directory_path() / "tricrlad_acceptance").string();
  std::vector<int> only;
  app.add_option("--data-dir", data_dir, "directory with cardio.csv, satimage2.csv, annthyroid.csv")
      ->envname("TRICRLAD_DATA_DIR");
  app.add_option("--out-dir", out_dir, "scratch directory for run artefacts");
  app.add_option("--only", only, "criterion numbers to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  DataContext ctx{data_dir, out_dir};
  fs::create_directories(ctx.out);
  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = fail(std::string("error: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    if (o.status == Status::Fail) ++failures;
    std::printf("%s  %2d  %-22s %s [%.1fs]\n", tag, id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  // Criterion 4 gates every RL run on the benchmark data.
  bool reference_ok = false;
  report(4, "iforest-reference", [&] {
    Outcome o = criterion_iforest(ctx);
    reference_ok = o.status == Status::Pass;
    return o;
  });
  const bool reference_checked = wanted(4);
  auto gated = [&](std::function<Outcome()> fn) {
    return [&, fn] {
      if (reference_checked && !reference_ok && ctx.find("cardio")) {
        return skip("not attempted: isolation forest reference (criterion 4) did not pass");
      }
      return fn();
    };
  };
  std::optional<double> cardio_full;
  report(1, "cardio-auc", gated([&] { return criterion_rl(ctx, "cardio", 0.90, &cardio_full); }));
  report(2, "satimage2-auc", gated([&] { return criterion_rl(ctx, "satimage2", 0.93); }));
  report(3, "annthyroid-auc", gated([&] { return criterion_rl(ctx, "annthyroid", 0.85); }));
  report(5, "ablation-ordering", gated([&] { return criterion_ablation(ctx, cardio_full); }));
  report(6, "gradient-suite", criterion_gradients);
  report(7, "pool-fuzz", criterion_fuzz);
  report(8, "reward-table", criterion_rewards);
  report(9, "threshold-trace", criterion_threshold);
  report(10, "mmd-oracle", criterion_mmd);
  report(11, "auc-oracle", criterion_auc);
  report(12, "sampling-diversity", criterion_diversity);
  report(13, "determinism", [&] { return criterion_determinism(ctx.out / "determinism"); });

  std::printf("%s: %d failing criteria\n", failures == 0 ? "OK" : "NOT OK", failures);
  return failures == 0 ? 0 : 1;
}
