#include "gatlab/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace gatlab {

SignReport sign_condition(const ModelParams& p, const VariantConfig& cfg,
                          const Graph& graph, const Eigen::MatrixXd& features) {
  const int n = graph.node_count();
  const int dp = cfg.d_prime;
  SignReport report;
  report.all_pairs_same_sign.setConstant(n, dp, true);
  report.predicted_zero.setConstant(n, dp, false);

  const bool leaky = cfg.activation() == Activation::kLeakyRelu;
  for (int i = 0; i < n; ++i) {
    const std::vector<int> domain = attention_domain(graph, i, cfg);
    const Eigen::VectorXd query = p.theta_r * augment<double>(features, i);
    Eigen::Array<bool, Eigen::Dynamic, 1> positive(dp);
    for (std::size_t k = 0; k < domain.size(); ++k) {
      const Eigen::VectorXd x = query + p.theta_l * augment<double>(features, domain[k]);
      for (int t = 0; t < dp; ++t) {
        const bool pos = x(t) >= 0.0;
        if (k == 0) {
          positive(t) = pos;
        } else if (pos != positive(t)) {
          report.all_pairs_same_sign(i, t) = false;
        }
      }
    }
  }
  if (leaky) report.predicted_zero = report.all_pairs_same_sign;
  report.fraction_dead =
      static_cast<double>(report.predicted_zero.count()) / static_cast<double>(n * dp);
  return report;
}

SignSummary analyze_signs(const ModelParams& p, const VariantConfig& cfg,
                          const Graph& graph, std::span<const Sample> samples) {
  SignSummary out;
  out.samples = static_cast<int>(samples.size());
  out.dead_rate = Eigen::ArrayXXd::Zero(graph.node_count(), cfg.d_prime);
  if (samples.empty()) return out;

  Eigen::Array<bool, Eigen::Dynamic, 1> central_always =
      Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(cfg.d_prime, true);
  Eigen::MatrixXd features;
  double fraction_sum = 0.0;
  for (const Sample& s : samples) {
    features = s.x;
    const SignReport r = sign_condition(p, cfg, graph, features);
    out.dead_rate += r.predicted_zero.cast<double>();
    fraction_sum += r.fraction_dead;
    central_always = central_always && r.predicted_zero.row(0).transpose();
  }
  const auto m = static_cast<double>(samples.size());
  out.dead_rate /= m;
  out.fraction_dead = fraction_sum / m;
  out.central_components_dead_everywhere = static_cast<int>(central_always.count());
  return out;
}

double max_relative_error(const Eigen::Ref<const Eigen::MatrixXd>& a,
                          const Eigen::Ref<const Eigen::MatrixXd>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("max_relative_error: shape mismatch");
  }
  double worst = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      const double denom =
          std::max({std::abs(a(r, c)), std::abs(b(r, c)), kRelativeErrorFloor});
      worst = std::max(worst, std::abs(a(r, c) - b(r, c)) / denom);
    }
  }
  return worst;
}

namespace {

template <typename Scalar>
Scalar trial_loss(const ModelParamsT<Scalar>& p, const GradCheckTrial& trial,
                  const Graph& graph) {
  const MatrixX<Scalar> features = trial.features.cast<Scalar>();
  Scalar total(0);
  for (int i = 0; i < graph.node_count(); ++i) {
    const VectorX<Scalar> h = update(p, i, graph, features, trial.cfg);
    const VectorX<Scalar> diff =
        h - trial.targets.row(i).transpose().cast<Scalar>();
    total += Scalar(0.5) * diff.squaredNorm();
  }
  return total;
}

bool near_kink(const GradCheckTrial& t, const Graph& graph, double margin) {
  for (int i = 0; i < graph.node_count(); ++i) {
    const Eigen::VectorXd query = t.params.theta_r * augment<double>(t.features, i);
    for (int j : attention_domain(graph, i, t.cfg)) {
      const Eigen::VectorXd x =
          query + t.params.theta_l * augment<double>(t.features, j);
      if ((x.array().abs() < margin).any()) return true;
    }
  }
  return false;
}

}  // namespace

GradCheckTrial random_trial(std::uint64_t seed, int d_prime, int nodes,
                            double kink_margin) {
  const Graph graph = star_graph(nodes);
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), 0x6c0du,
                    static_cast<std::uint32_t>(d_prime)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const auto fill = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = unit(rng);
  };

  GradCheckTrial t;
  t.cfg = VariantConfig::make(Variant::kGatV2, d_prime);
  t.params = zero_params(t.cfg);
  t.features.resize(nodes, 1);
  t.targets.resize(nodes, d_prime);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    t.params.for_each([&](std::string_view, Eigen::MatrixXd& m) { fill(m); });
    // Features spread over both signs so that pairs can disagree.
    fill(t.features);
    t.features *= 2.0;
    fill(t.targets);
    if (!near_kink(t, graph, kink_margin)) return t;
  }
  throw std::runtime_error("random_trial: could not avoid LeakyReLU kinks");
}

ModelParams trial_autodiff_gradient(const GradCheckTrial& trial,
                                    bool detach_update_path) {
  const Graph graph = star_graph(static_cast<int>(trial.features.rows()));
  ad::Tape tape;
  const ParamVars vars = bind_params(tape, trial.params, trial.cfg, detach_update_path);
  ad::Var total;
  for (int i = 0; i < graph.node_count(); ++i) {
    const TapeNodeOutput out =
        build_node(tape, vars, trial.cfg, graph, trial.features, i);
    const ad::Var diff =
        out.updated - tape.constant(Eigen::MatrixXd(trial.targets.row(i).transpose()));
    const ad::Var term = ad::scale(0.5, ad::sum(ad::square(diff)));
    total = total.valid() ? total + term : term;
  }
  tape.backward(total);
  return collect_gradients(tape, vars, trial.params);
}

std::vector<GradCheck> check_trial(const GradCheckTrial& trial, double fd_step) {
  const Graph graph = star_graph(static_cast<int>(trial.features.rows()));
  const ModelParams autodiff = trial_autodiff_gradient(trial);

  using Wide = long double;
  const std::function<Wide(const ModelParamsT<Wide>&)> loss_fn =
      [&](const ModelParamsT<Wide>& p) { return trial_loss<Wide>(p, trial, graph); };
  const ModelParams fd =
      finite_diff<Wide>(loss_fn, trial.params.cast<Wide>(), static_cast<Wide>(fd_step))
          .cast<double>();

  // dL/dh'_i for the squared loss.
  Eigen::MatrixXd upstream(graph.node_count(), trial.cfg.d_prime);
  for (int i = 0; i < graph.node_count(); ++i) {
    upstream.row(i) =
        (update<double>(trial.params, i, graph, trial.features, trial.cfg) -
         trial.targets.row(i).transpose())
            .transpose();
  }
  const Eigen::MatrixXd analytic =
      analytic_grad_theta_r_total<double>(trial.params, graph, trial.features,
                                          upstream, trial.cfg)
          .as_matrix();

  std::vector<Eigen::MatrixXd> ad_t;
  std::vector<Eigen::MatrixXd> fd_t;
  autodiff.for_each([&](std::string_view, const Eigen::MatrixXd& m) { ad_t.push_back(m); });
  fd.for_each([&](std::string_view, const Eigen::MatrixXd& m) { fd_t.push_back(m); });

  std::vector<GradCheck> out;
  std::size_t k = 0;
  trial.params.for_each([&](std::string_view name, const Eigen::MatrixXd&) {
    GradCheck c;
    c.parameter = std::string(name);
    c.autodiff = ad_t[k];
    c.finite_difference = fd_t[k];
    c.max_rel_error = max_relative_error(c.autodiff, c.finite_difference);
    if (name == "theta_r") {
      c.analytic = analytic;
      c.max_rel_error = std::max({c.max_rel_error,
                                  max_relative_error(c.analytic, c.autodiff),
                                  max_relative_error(c.analytic, c.finite_difference)});
    }
    out.push_back(std::move(c));
    ++k;
  });
  return out;
}

GradientAudit::GradientAudit(VariantConfig cfg, Graph graph,
                             std::vector<Sample> probe, LossKind loss)
    : cfg_(cfg), graph_(std::move(graph)), probe_(std::move(probe)), loss_(loss) {
  if (probe_.empty()) throw ContractViolation("gradient audit needs probe samples");
}

AuditRecord GradientAudit::operator()(int epoch, const ModelParams& params) const {
  AuditRecord rec;
  rec.epoch = epoch;
  const SignSummary signs = analyze_signs(params, cfg_, graph_, probe_);
  rec.fraction_dead = signs.fraction_dead;
  rec.central_fraction_dead = signs.dead_rate.row(0).mean();

  ad::Tape tape;
  const ParamVars vars = bind_params(tape, params, cfg_);
  std::vector<const Sample*> batch;
  batch.reserve(probe_.size());
  for (const Sample& s : probe_) batch.push_back(&s);
  const ad::Var root = build_batch_loss(tape, vars, cfg_, graph_, batch, loss_);
  tape.backward(root);
  rec.grad_theta_r_norm = Eigen::MatrixXd(tape.grad(vars.theta_r)).norm();
  return rec;
}

}  // namespace gatlab
