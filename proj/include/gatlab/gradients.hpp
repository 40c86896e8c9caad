#pragma once

// Closed-form Theta_R gradient of the attention score path for d = 1, the
// LeakyReLU sign-condition analyzer, and a central finite-difference oracle.
//
// For query node i with attention domain S and messages M_q (the transformed
// neighbor features Theta_L h~_q), the score path contributes to row t of
// Theta_R
//
//   dL/dTheta_R[t, 0] = a_t * sum_{j<k in S} alpha_j alpha_k
//                         (g . (M_j - M_k)) (s_j^t - s_k^t)
//   dL/dTheta_R[t, 1] = h_i * dL/dTheta_R[t, 0]
//
// where g = dL/dh'_i and s_q^t is the LeakyReLU derivative at
// x_q^t = (Theta_R h~_i + Theta_L h~_q)_t. With d' = 1, or when g has equal
// components, g . (M_j - M_k) reduces to g_1 * (A_j - A_k) with
// A_q = sum_t M_q^t. If every pair shares the sign of x^t, each s_j^t - s_k^t
// vanishes and so does row t.

#include "gatlab/dataset.hpp"
#include "gatlab/graph.hpp"
#include "gatlab/loss.hpp"
#include "gatlab/model.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gatlab {

template <typename Scalar>
struct ThetaRGradientT {
  VectorX<Scalar> bias;    // d', column 0 of Theta_R
  VectorX<Scalar> weight;  // d', column 1 of Theta_R

  MatrixX<Scalar> as_matrix() const {
    MatrixX<Scalar> m(bias.size(), 2);
    m.col(0) = bias;
    m.col(1) = weight;
    return m;
  }
};

using ThetaRGradient = ThetaRGradientT<double>;

namespace detail {
inline void require_closed_form(const VariantConfig& cfg) {
  if (cfg.d != 1) {
    throw ContractViolation("closed-form Theta_R gradient needs d = 1");
  }
  if (cfg.activation() != Activation::kLeakyRelu) {
    throw ContractViolation("closed-form Theta_R gradient needs LeakyReLU");
  }
}
}  // namespace detail

// Score-path gradient of Theta_R contributed by node i. For GATv2 and
// GAT-Theta_n this is the whole Theta_R gradient of that node; GAT-Theta_R
// adds its update-path term on top. Domains with fewer than two nodes have no
// pairs and yield zero.
template <typename Scalar>
ThetaRGradientT<Scalar> analytic_grad_theta_r(
    const ModelParamsT<Scalar>& p, int i, const Graph& graph,
    const MatrixX<Scalar>& features, const VectorX<Scalar>& upstream,
    const VariantConfig& cfg) {
  detail::require_closed_form(cfg);
  const Eigen::Index dp = cfg.d_prime;
  if (upstream.size() != dp) throw ShapeError("upstream must have length d'");

  const std::vector<int> domain = attention_domain(graph, i, cfg);
  const auto row = attention(p, i, graph, features, cfg);
  const VectorX<Scalar> h_i = augment<Scalar>(features, i);
  const VectorX<Scalar> query = p.theta_r * h_i;
  const MatrixX<Scalar>& message_transform =
      cfg.separate_neighbor_transform ? p.theta_j : p.theta_l;
  const auto slope = static_cast<Scalar>(cfg.leaky_slope);

  const auto count = static_cast<Eigen::Index>(domain.size());
  MatrixX<Scalar> slopes(dp, count);   // s_q^t
  VectorX<Scalar> projected(count);    // g . M_q
  for (Eigen::Index k = 0; k < count; ++k) {
    const VectorX<Scalar> h_q = augment<Scalar>(features, domain[static_cast<std::size_t>(k)]);
    const VectorX<Scalar> x = query + p.theta_l * h_q;
    for (Eigen::Index t = 0; t < dp; ++t) {
      slopes(t, k) = leaky_relu_derivative(x(t), slope);
    }
    projected(k) = upstream.dot(message_transform * h_q);
  }

  ThetaRGradientT<Scalar> out;
  out.bias = VectorX<Scalar>::Zero(dp);
  for (Eigen::Index j = 0; j < count; ++j) {
    for (Eigen::Index k = j + 1; k < count; ++k) {
      const Scalar w = row.alpha(j) * row.alpha(k) * (projected(j) - projected(k));
      for (Eigen::Index t = 0; t < dp; ++t) {
        out.bias(t) += w * (slopes(t, j) - slopes(t, k));
      }
    }
  }
  out.bias = out.bias.cwiseProduct(p.a.col(0));
  out.weight = features(i, 0) * out.bias;
  return out;
}

// Shared-weight sum over all nodes; `upstream` holds dL/dh'_i in row i.
template <typename Scalar>
ThetaRGradientT<Scalar> analytic_grad_theta_r_total(
    const ModelParamsT<Scalar>& p, const Graph& graph,
    const MatrixX<Scalar>& features, const MatrixX<Scalar>& upstream,
    const VariantConfig& cfg) {
  ThetaRGradientT<Scalar> total{VectorX<Scalar>::Zero(cfg.d_prime),
                                VectorX<Scalar>::Zero(cfg.d_prime)};
  for (int i = 0; i < graph.node_count(); ++i) {
    const auto g = analytic_grad_theta_r<Scalar>(
        p, i, graph, features, upstream.row(i).transpose(), cfg);
    total.bias += g.bias;
    total.weight += g.weight;
  }
  return total;
}

// ---------------------------------------------------------------------------

struct SignReport {
  // node x component. For a node with fewer than two attention-domain members
  // the pair set is empty and the flag is vacuously true.
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> all_pairs_same_sign;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> predicted_zero;
  double fraction_dead = 0.0;
};

// sign(0) counts as positive. Softplus variants have no derivative case
// split, so nothing is predicted dead for them.
SignReport sign_condition(const ModelParams& p, const VariantConfig& cfg,
                          const Graph& graph, const Eigen::MatrixXd& features);

struct SignSummary {
  int samples = 0;
  // Fraction of samples on which (node, component) is predicted dead.
  Eigen::ArrayXXd dead_rate;
  // Mean of per-sample fraction_dead.
  double fraction_dead = 0.0;
  // Components of node 0 that are dead on every sample: their score-path
  // gradient is zero for the whole dataset.
  int central_components_dead_everywhere = 0;
};

SignSummary analyze_signs(const ModelParams& p, const VariantConfig& cfg,
                          const Graph& graph, std::span<const Sample> samples);

// ---------------------------------------------------------------------------

// Central differences, one parameter entry at a time.
template <typename Scalar>
ModelParamsT<Scalar> finite_diff(
    const std::function<Scalar(const ModelParamsT<Scalar>&)>& loss_fn,
    const ModelParamsT<Scalar>& params, Scalar step) {
  if (!(step > Scalar(0))) throw std::invalid_argument("step must be positive");
  ModelParamsT<Scalar> probe = params;
  ModelParamsT<Scalar> grad = params;
  // for_each on two structs in lockstep: collect pointers first.
  std::vector<MatrixX<Scalar>*> probe_t;
  std::vector<MatrixX<Scalar>*> grad_t;
  probe.for_each([&](std::string_view, MatrixX<Scalar>& m) { probe_t.push_back(&m); });
  grad.for_each([&](std::string_view, MatrixX<Scalar>& m) { grad_t.push_back(&m); });
  for (std::size_t k = 0; k < probe_t.size(); ++k) {
    MatrixX<Scalar>& m = *probe_t[k];
    for (Eigen::Index e = 0; e < m.size(); ++e) {
      const Scalar saved = m(e);
      m(e) = saved + step;
      const Scalar up = loss_fn(probe);
      m(e) = saved - step;
      const Scalar down = loss_fn(probe);
      m(e) = saved;
      (*grad_t[k])(e) = (up - down) / (Scalar(2) * step);
    }
  }
  return grad;
}

// |a - b| / max(|a|, |b|, 1e-8), maximised over entries.
double max_relative_error(const Eigen::Ref<const Eigen::MatrixXd>& a,
                          const Eigen::Ref<const Eigen::MatrixXd>& b);

inline constexpr double kRelativeErrorFloor = 1e-8;

// ---------------------------------------------------------------------------
// Three-way check of the Theta_R gradient on random instances.

struct GradCheck {
  std::string parameter;
  Eigen::MatrixXd analytic;  // empty when no closed form exists
  Eigen::MatrixXd autodiff;
  Eigen::MatrixXd finite_difference;
  double max_rel_error = 0.0;  // worst pairwise
};

struct GradCheckTrial {
  VariantConfig cfg;
  ModelParams params;
  Eigen::MatrixXd features;  // n x 1
  Eigen::MatrixXd targets;   // n x d', loss = sum_i 0.5 |h'_i - target_i|^2
};

// Random GATv2 instance on a star with `nodes` nodes. Draws are rejected
// while any score pre-activation lies within `kink_margin` of zero, where
// the LeakyReLU derivative jumps and central differences are meaningless.
GradCheckTrial random_trial(std::uint64_t seed, int d_prime, int nodes = 3,
                            double kink_margin = 1e-3);

// Gradient of the trial loss through the tape, for every parameter.
ModelParams trial_autodiff_gradient(const GradCheckTrial& trial,
                                    bool detach_update_path = false);

std::vector<GradCheck> check_trial(const GradCheckTrial& trial,
                                   double fd_step = 1e-5);

// ---------------------------------------------------------------------------
// Per-epoch gradient audit attached to training.

struct AuditRecord {
  int epoch = 0;
  double fraction_dead = 0.0;          // over probe samples, all nodes
  double central_fraction_dead = 0.0;  // node 0 only
  double grad_theta_r_norm = 0.0;      // Frobenius norm, mean training loss
};

class GradientAudit {
 public:
  GradientAudit(VariantConfig cfg, Graph graph, std::vector<Sample> probe,
                LossKind loss = LossKind::kAbsolute);

  AuditRecord operator()(int epoch, const ModelParams& params) const;

 private:
  VariantConfig cfg_;
  Graph graph_;
  std::vector<Sample> probe_;
  LossKind loss_;
};

}  // namespace gatlab
