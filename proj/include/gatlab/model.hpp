#pragma once

// One-layer, single-head graph attention variants.
//
// Every node representation is bias-augmented, h~ = [1, h^T]^T, so each
// transform is a d' x (d+1) matrix whose first column acts as its bias.
//
//   score     e(i, j)  = a^T act(Theta_R h~_i + Theta_L h~_j)
//   attention alpha_i  = softmax_j e(i, j) over the attention domain of i
//   GATv2     h'_i     = b + sum_{j in N_i} alpha_ij Theta_L h~_j
//   Theta_n   h'_i     = b + Theta_n h~_i + sum_{j in N_i, j != i} alpha_ij Theta_L h~_j
//   Theta_R   h'_i     = b + Theta_R h~_i + sum_{j in N_i, j != i} alpha_ij Theta_L h~_j
//
// GATv2 attends over N_i including a self-loop; the other variants attend
// over N_i \ {i} and add the query term with a fixed weight of 1. The "plus"
// variants swap LeakyReLU for softplus inside the score. When d' != d the
// prediction goes through a head  y = W_phi leaky_relu(h') + b_phi,
// otherwise y = h'.

#include "gatlab/activations.hpp"
#include "gatlab/autodiff.hpp"
#include "gatlab/graph.hpp"
#include "gatlab/types.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace gatlab {

enum class Variant { kGatV2, kThetaN, kThetaR, kThetaNPlus, kThetaRPlus };
enum class Activation { kLeakyRelu, kSoftplus };

inline constexpr Variant kAllVariants[] = {
    Variant::kGatV2, Variant::kThetaN, Variant::kThetaR, Variant::kThetaNPlus,
    Variant::kThetaRPlus};

// CLI spelling: gatv2, gat-theta-n, gat-theta-r, gat-theta-n-plus,
// gat-theta-r-plus.
std::string to_string(Variant v);
Variant parse_variant(std::string_view name);

// "leaky_relu" / "softplus".
std::string to_string(Activation a);
Activation parse_activation(std::string_view name);

struct VariantConfig {
  Variant variant = Variant::kGatV2;
  int d = 1;
  int d_prime = 1;
  double leaky_slope = kDefaultLeakySlope;
  // Use a distinct neighbor transform in the Theta_R update instead of
  // sharing Theta_L with the score.
  bool separate_neighbor_transform = false;
  // Swaps the score activation without touching the rest of the variant,
  // e.g. to rerun a LeakyReLU instance with softplus.
  std::optional<Activation> activation_override;

  static VariantConfig make(Variant v, int d_prime, int d = 1) {
    VariantConfig c;
    c.variant = v;
    c.d = d;
    c.d_prime = d_prime;
    return c;
  }

  Activation activation() const {
    if (activation_override) return *activation_override;
    return variant == Variant::kThetaNPlus || variant == Variant::kThetaRPlus
               ? Activation::kSoftplus
               : Activation::kLeakyRelu;
  }
  bool excludes_query() const { return variant != Variant::kGatV2; }
  bool uses_theta_n() const {
    return variant == Variant::kThetaN || variant == Variant::kThetaNPlus;
  }
  bool uses_theta_r_update() const {
    return variant == Variant::kThetaR || variant == Variant::kThetaRPlus;
  }
  bool has_head() const { return d_prime != d; }

  void validate() const;
};

template <typename Scalar>
struct ModelParamsT {
  MatrixX<Scalar> a;        // d' x 1
  MatrixX<Scalar> theta_l;  // d' x (d+1)
  MatrixX<Scalar> theta_r;  // d' x (d+1)
  MatrixX<Scalar> theta_n;  // d' x (d+1), Theta_n variants only
  MatrixX<Scalar> theta_j;  // d' x (d+1), separate neighbor transform only
  MatrixX<Scalar> b;        // d' x 1
  MatrixX<Scalar> phi_w;    // d x d', head only
  MatrixX<Scalar> phi_b;    // d x 1, head only

  // Visits allocated tensors in a fixed order with their checkpoint names.
  template <typename F>
  void for_each(F&& f) {
    visit(*this, std::forward<F>(f));
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, std::forward<F>(f));
  }

  template <typename Other>
  ModelParamsT<Other> cast() const {
    ModelParamsT<Other> out;
    out.a = a.template cast<Other>();
    out.theta_l = theta_l.template cast<Other>();
    out.theta_r = theta_r.template cast<Other>();
    out.theta_n = theta_n.template cast<Other>();
    out.theta_j = theta_j.template cast<Other>();
    out.b = b.template cast<Other>();
    out.phi_w = phi_w.template cast<Other>();
    out.phi_b = phi_b.template cast<Other>();
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&n](std::string_view, const auto& m) {
      n += static_cast<std::size_t>(m.size());
    });
    return n;
  }

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    const auto emit = [&f](std::string_view name, auto& m) {
      if (m.size() > 0) f(name, m);
    };
    emit("a", self.a);
    emit("theta_l", self.theta_l);
    emit("theta_r", self.theta_r);
    emit("theta_n", self.theta_n);
    emit("theta_j", self.theta_j);
    emit("b", self.b);
    emit("phi_w", self.phi_w);
    emit("phi_b", self.phi_b);
  }
};

using ModelParams = ModelParamsT<double>;

// Allocates exactly the tensors the variant uses, all zero.
ModelParams zero_params(const VariantConfig& cfg);

// Glorot-uniform draws, bound sqrt(6 / (fan_in + fan_out)). For the Theta
// transforms only the weight block is drawn and the bias column starts at
// zero, like a linear layer with a separate zero-initialised bias. b and
// b_phi start at zero.
ModelParams init_params(const VariantConfig& cfg, std::uint64_t seed);

// Parameters of a GAT-Theta_n model (d = d' = 1, no head) that computes
// x_r - x_i exactly in the limit of a one-hot attention on the neighbor with
// the largest feature. `sharpness` scales the score so that the softmax is
// near one-hot for feature gaps well above 1 / sharpness.
ModelParams subtraction_solution(double sharpness);

// Nodes a query node attends over. Throws ContractViolation when a variant
// that excludes the query node leaves no neighbor.
std::vector<int> attention_domain(const Graph& graph, int i,
                                  const VariantConfig& cfg);

template <typename Scalar>
struct AttentionRowT {
  std::vector<int> nodes;  // attention domain, ascending
  VectorX<Scalar> alpha;   // softmax weights aligned with `nodes`

  // Node holding the largest weight; ties go to the lowest node index.
  int argmax() const {
    int best = 0;
    for (Eigen::Index k = 1; k < alpha.size(); ++k) {
      if (alpha(k) > alpha(best)) best = static_cast<int>(k);
    }
    return nodes[static_cast<std::size_t>(best)];
  }
  // Weight of `node`, 0 if it is outside the domain.
  Scalar weight_of(int node) const {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (nodes[k] == node) return alpha(static_cast<Eigen::Index>(k));
    }
    return Scalar(0);
  }
};

using AttentionRow = AttentionRowT<double>;

// ---------------------------------------------------------------------------
// Dense evaluation. `features` holds one row per node (n x d).

template <typename Scalar>
VectorX<Scalar> augment(const Eigen::Ref<const MatrixX<Scalar>>& features,
                        int node) {
  VectorX<Scalar> h(features.cols() + 1);
  h(0) = Scalar(1);
  h.tail(features.cols()) = features.row(node).transpose();
  return h;
}

template <typename Scalar>
Scalar activate(Scalar x, const VariantConfig& cfg) {
  return cfg.activation() == Activation::kSoftplus
             ? softplus(x)
             : leaky_relu(x, static_cast<Scalar>(cfg.leaky_slope));
}

// Score on bias-augmented representations.
template <typename Scalar>
Scalar score_augmented(const ModelParamsT<Scalar>& p,
                       const VectorX<Scalar>& h_i_aug,
                       const VectorX<Scalar>& h_j_aug,
                       const VariantConfig& cfg) {
  const VectorX<Scalar> pre = p.theta_r * h_i_aug + p.theta_l * h_j_aug;
  Scalar e(0);
  for (Eigen::Index t = 0; t < pre.size(); ++t) {
    e += p.a(t, 0) * activate(pre(t), cfg);
  }
  return e;
}

// Score on raw node features of length d.
template <typename Scalar>
Scalar score(const ModelParamsT<Scalar>& p, const VectorX<Scalar>& h_i,
             const VectorX<Scalar>& h_j, const VariantConfig& cfg) {
  VectorX<Scalar> hi(h_i.size() + 1), hj(h_j.size() + 1);
  hi << Scalar(1), h_i;
  hj << Scalar(1), h_j;
  return score_augmented(p, hi, hj, cfg);
}

template <typename Scalar>
VectorX<Scalar> softmax(const VectorX<Scalar>& scores) {
  if (scores.size() == 0) throw ContractViolation("softmax over an empty set");
  VectorX<Scalar> y = (scores.array() - scores.maxCoeff()).exp().matrix();
  return y / y.sum();
}

template <typename Scalar>
AttentionRowT<Scalar> attention(const ModelParamsT<Scalar>& p, int i,
                                const Graph& graph,
                                const MatrixX<Scalar>& features,
                                const VariantConfig& cfg) {
  AttentionRowT<Scalar> row;
  row.nodes = attention_domain(graph, i, cfg);
  const VectorX<Scalar> hi = augment<Scalar>(features, i);
  VectorX<Scalar> e(static_cast<Eigen::Index>(row.nodes.size()));
  for (std::size_t k = 0; k < row.nodes.size(); ++k) {
    e(static_cast<Eigen::Index>(k)) =
        score_augmented(p, hi, augment<Scalar>(features, row.nodes[k]), cfg);
  }
  row.alpha = softmax(e);
  return row;
}

namespace detail {

template <typename Scalar>
VectorX<Scalar> weighted_neighbors(const ModelParamsT<Scalar>& p,
                                   const MatrixX<Scalar>& transform,
                                   const AttentionRowT<Scalar>& row,
                                   const MatrixX<Scalar>& features) {
  VectorX<Scalar> acc = p.b.col(0);
  for (std::size_t k = 0; k < row.nodes.size(); ++k) {
    acc += row.alpha(static_cast<Eigen::Index>(k)) * transform *
           augment<Scalar>(features, row.nodes[k]);
  }
  return acc;
}

}  // namespace detail

template <typename Scalar>
VectorX<Scalar> update_gatv2(const ModelParamsT<Scalar>& p, int i,
                             const Graph& graph,
                             const MatrixX<Scalar>& features,
                             const VariantConfig& cfg,
                             AttentionRowT<Scalar>* row_out = nullptr) {
  AttentionRowT<Scalar> row = attention(p, i, graph, features, cfg);
  VectorX<Scalar> h = detail::weighted_neighbors(p, p.theta_l, row, features);
  if (row_out) *row_out = std::move(row);
  return h;
}

template <typename Scalar>
VectorX<Scalar> update_theta_n(const ModelParamsT<Scalar>& p, int i,
                               const Graph& graph,
                               const MatrixX<Scalar>& features,
                               const VariantConfig& cfg,
                               AttentionRowT<Scalar>* row_out = nullptr) {
  AttentionRowT<Scalar> row = attention(p, i, graph, features, cfg);
  VectorX<Scalar> h = detail::weighted_neighbors(p, p.theta_l, row, features);
  h += p.theta_n * augment<Scalar>(features, i);
  if (row_out) *row_out = std::move(row);
  return h;
}

template <typename Scalar>
VectorX<Scalar> update_theta_r(const ModelParamsT<Scalar>& p, int i,
                               const Graph& graph,
                               const MatrixX<Scalar>& features,
                               const VariantConfig& cfg,
                               AttentionRowT<Scalar>* row_out = nullptr) {
  AttentionRowT<Scalar> row = attention(p, i, graph, features, cfg);
  const MatrixX<Scalar>& neighbor =
      cfg.separate_neighbor_transform ? p.theta_j : p.theta_l;
  VectorX<Scalar> h = detail::weighted_neighbors(p, neighbor, row, features);
  h += p.theta_r * augment<Scalar>(features, i);
  if (row_out) *row_out = std::move(row);
  return h;
}

template <typename Scalar>
VectorX<Scalar> update(const ModelParamsT<Scalar>& p, int i,
                       const Graph& graph, const MatrixX<Scalar>& features,
                       const VariantConfig& cfg,
                       AttentionRowT<Scalar>* row_out = nullptr) {
  if (cfg.uses_theta_n()) return update_theta_n(p, i, graph, features, cfg, row_out);
  if (cfg.uses_theta_r_update()) return update_theta_r(p, i, graph, features, cfg, row_out);
  return update_gatv2(p, i, graph, features, cfg, row_out);
}

template <typename Scalar>
VectorX<Scalar> head(const ModelParamsT<Scalar>& p,
                     const VectorX<Scalar>& updated,
                     const VariantConfig& cfg) {
  if (!cfg.has_head()) return updated;
  const auto slope = static_cast<Scalar>(cfg.leaky_slope);
  const VectorX<Scalar> act =
      updated.unaryExpr([slope](Scalar t) { return leaky_relu(t, slope); });
  return p.phi_w * act + p.phi_b.col(0);
}

template <typename Scalar>
struct NodePredictionT {
  VectorX<Scalar> updated;     // h'_i
  VectorX<Scalar> prediction;  // y_i
  AttentionRowT<Scalar> attention;
};

template <typename Scalar>
NodePredictionT<Scalar> predict_node(const ModelParamsT<Scalar>& p,
                                     const VariantConfig& cfg,
                                     const Graph& graph,
                                     const MatrixX<Scalar>& features, int i) {
  NodePredictionT<Scalar> out;
  out.updated = update(p, i, graph, features, cfg, &out.attention);
  out.prediction = head(p, out.updated, cfg);
  return out;
}

template <typename Scalar>
struct ForwardResultT {
  MatrixX<Scalar> updated;      // n x d'
  MatrixX<Scalar> predictions;  // n x d
  std::vector<AttentionRowT<Scalar>> attention;
};

// Applies the layer to every node. Nodes with an empty attention domain
// propagate ContractViolation.
template <typename Scalar>
ForwardResultT<Scalar> forward(const ModelParamsT<Scalar>& p,
                               const VariantConfig& cfg, const Graph& graph,
                               const MatrixX<Scalar>& features) {
  const int n = graph.node_count();
  ForwardResultT<Scalar> out;
  out.updated.resize(n, cfg.d_prime);
  out.predictions.resize(n, cfg.has_head() ? cfg.d : cfg.d_prime);
  out.attention.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto node = predict_node(p, cfg, graph, features, i);
    out.updated.row(i) = node.updated.transpose();
    out.predictions.row(i) = node.prediction.transpose();
    out.attention[static_cast<std::size_t>(i)] = std::move(node.attention);
  }
  return out;
}

using ForwardResult = ForwardResultT<double>;
using NodePrediction = NodePredictionT<double>;

// ---------------------------------------------------------------------------
// Differentiable evaluation on an autodiff tape.

struct ParamVars {
  ad::Var a, theta_l, theta_r, theta_n, theta_j, b, phi_w, phi_b;
  // Theta_R as seen by the Theta_R update term. Normally the same node as
  // theta_r; a separate leaf when the update path is detached.
  ad::Var theta_r_update;

  // Variables in ModelParams::for_each order.
  std::vector<ad::Var> leaves() const;
};

// Registers every allocated tensor as a tape variable. With
// `detach_update_path`, the Theta_R update term reads a constant copy so that
// gradients reach Theta_R through the score only.
ParamVars bind_params(ad::Tape& tape, const ModelParams& p,
                      const VariantConfig& cfg, bool detach_update_path = false);

struct TapeNodeOutput {
  ad::Var updated;
  ad::Var prediction;
  ad::Var attention;  // column vector aligned with `nodes`
  std::vector<int> nodes;
};

TapeNodeOutput build_node(ad::Tape& tape, const ParamVars& vars,
                          const VariantConfig& cfg, const Graph& graph,
                          const Eigen::MatrixXd& features, int i);

// Writes gradients from the last backward() into a params-shaped struct.
ModelParams collect_gradients(const ad::Tape& tape, const ParamVars& vars,
                              const ModelParams& shape);

// ---------------------------------------------------------------------------
// Checkpoint text format: a header line
//   # gatlab-checkpoint variant=<name> d=<d> dprime=<d'> slope=<s> seed=<e> separate_neighbor_transform=<0|1>
// followed by one `name=v0,v1,...` line per tensor, values row-major.

struct Checkpoint {
  VariantConfig cfg;
  ModelParams params;
  std::uint64_t seed = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gatlab
