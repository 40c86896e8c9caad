#pragma once

#include "gatlab/autodiff.hpp"
#include "gatlab/dataset.hpp"
#include "gatlab/graph.hpp"
#include "gatlab/model.hpp"

#include <span>
#include <string>

namespace gatlab {

// kAbsolute is the training objective. kSigned is the raw difference
// y_hat - y; it is unbounded below and only meant for inspection.
enum class LossKind { kAbsolute, kSigned };

std::string to_string(LossKind k);
LossKind parse_loss(const std::string& name);

inline double loss(double y_hat, double y, LossKind kind = LossKind::kAbsolute) {
  const double diff = y_hat - y;
  return kind == LossKind::kAbsolute ? (diff < 0 ? -diff : diff) : diff;
}

// Mean loss of the central node (node 0) over `batch`, recorded on `tape`.
ad::Var build_batch_loss(ad::Tape& tape, const ParamVars& vars,
                         const VariantConfig& cfg, const Graph& graph,
                         std::span<const Sample* const> batch, LossKind kind);

// Same objective evaluated without a tape.
double batch_loss(const ModelParams& params, const VariantConfig& cfg,
                  const Graph& graph, std::span<const Sample> samples,
                  LossKind kind);

}  // namespace gatlab
