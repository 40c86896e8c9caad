#include "gatlab/loss.hpp"

#include <stdexcept>

namespace gatlab {

std::string to_string(LossKind k) {
  return k == LossKind::kAbsolute ? "absolute" : "signed";
}

LossKind parse_loss(const std::string& name) {
  if (name == "absolute" || name == "mae") return LossKind::kAbsolute;
  if (name == "signed") return LossKind::kSigned;
  throw std::invalid_argument("unknown loss '" + name +
                              "' (expected absolute or signed)");
}

ad::Var build_batch_loss(ad::Tape& tape, const ParamVars& vars,
                         const VariantConfig& cfg, const Graph& graph,
                         std::span<const Sample* const> batch, LossKind kind) {
  if (batch.empty()) throw ContractViolation("loss over an empty batch");
  Eigen::MatrixXd features;
  ad::Var total;
  for (const Sample* s : batch) {
    features = s->x;
    const TapeNodeOutput out = build_node(tape, vars, cfg, graph, features, 0);
    ad::Var diff = out.prediction - tape.constant(s->y(0));
    ad::Var term = kind == LossKind::kAbsolute ? ad::abs(diff) : diff;
    total = total.valid() ? total + term : term;
  }
  return ad::scale(1.0 / static_cast<double>(batch.size()), total);
}

double batch_loss(const ModelParams& params, const VariantConfig& cfg,
                  const Graph& graph, std::span<const Sample> samples,
                  LossKind kind) {
  if (samples.empty()) throw ContractViolation("loss over an empty batch");
  Eigen::MatrixXd features;
  double total = 0.0;
  for (const Sample& s : samples) {
    features = s.x;
    const auto node = predict_node<double>(params, cfg, graph, features, 0);
    total += loss(node.prediction(0), s.y(0), kind);
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace gatlab
