#include "gatlab/autodiff.hpp"

#include "gatlab/activations.hpp"

#include <cmath>
#include <string>

namespace gatlab::ad {
namespace {

std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  check_same_tape(v);
  return nodes_[static_cast<std::size_t>(v.id)];
}

void Tape::check_same_tape(Var v) const {
  if (v.tape != this || v.id < 0 ||
      static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw ContractViolation("Var does not belong to this tape");
  }
}

Var Tape::push(Op op, Eigen::Index rows, Eigen::Index cols, std::int32_t a,
               std::int32_t b, double param) {
  Node n{op, static_cast<std::int32_t>(rows), static_cast<std::int32_t>(cols)};
  n.a = a;
  n.b = b;
  n.param = param;
  n.offset = values_.size();
  values_.resize(values_.size() + static_cast<std::size_t>(rows * cols));
  nodes_.push_back(n);
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Eigen::Map<Tensor> Tape::mutable_value(std::int32_t id) {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return {values_.data() + n.offset, n.rows, n.cols};
}

Eigen::Map<Tensor> Tape::mutable_adjoint(std::int32_t id) {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return {adjoints_.data() + n.offset, n.rows, n.cols};
}

ConstMap Tape::value_of(std::int32_t id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return {values_.data() + n.offset, n.rows, n.cols};
}

Var Tape::variable(const Eigen::Ref<const Tensor>& value) {
  Var v = push(Op::kVariable, value.rows(), value.cols(), -1, -1);
  mutable_value(v.id) = value;
  return v;
}

Var Tape::constant(const Eigen::Ref<const Tensor>& value) {
  Var v = push(Op::kConstant, value.rows(), value.cols(), -1, -1);
  mutable_value(v.id) = value;
  return v;
}

Var Tape::constant(double value) {
  Var v = push(Op::kConstant, 1, 1, -1, -1);
  values_[nodes_.back().offset] = value;
  return v;
}

Var Tape::add(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.rows != nb.rows || na.cols != nb.cols) {
    throw ShapeError("add: " + shape_str(na.rows, na.cols) + " vs " +
                     shape_str(nb.rows, nb.cols));
  }
  Var out = push(Op::kAdd, na.rows, na.cols, a.id, b.id);
  mutable_value(out.id) = value_of(a.id) + value_of(b.id);
  return out;
}

Var Tape::sub(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.rows != nb.rows || na.cols != nb.cols) {
    throw ShapeError("sub: " + shape_str(na.rows, na.cols) + " vs " +
                     shape_str(nb.rows, nb.cols));
  }
  Var out = push(Op::kSub, na.rows, na.cols, a.id, b.id);
  mutable_value(out.id) = value_of(a.id) - value_of(b.id);
  return out;
}

Var Tape::matvec(Var m, Var v) {
  const Node& nm = node(m);
  const Node& nv = node(v);
  if (nv.cols != 1 || nm.cols != nv.rows) {
    throw ShapeError("matvec: " + shape_str(nm.rows, nm.cols) + " * " +
                     shape_str(nv.rows, nv.cols));
  }
  Var out = push(Op::kMatVec, nm.rows, 1, m.id, v.id);
  mutable_value(out.id).noalias() = value_of(m.id) * value_of(v.id);
  return out;
}

Var Tape::scale(Var s, Var x) {
  const Node& ns = node(s);
  const Node& nx = node(x);
  if (ns.rows != 1 || ns.cols != 1) {
    throw ShapeError("scale: factor must be 1x1, got " +
                     shape_str(ns.rows, ns.cols));
  }
  const double factor = values_[ns.offset];
  Var out = push(Op::kScale, nx.rows, nx.cols, s.id, x.id);
  mutable_value(out.id) = factor * value_of(x.id);
  return out;
}

Var Tape::scale(double c, Var x) {
  const Node& nx = node(x);
  Var out = push(Op::kScaleConst, nx.rows, nx.cols, x.id, -1, c);
  mutable_value(out.id) = c * value_of(x.id);
  return out;
}

Var Tape::dot(Var u, Var v) {
  const Node& nu = node(u);
  const Node& nv = node(v);
  if (nu.cols != 1 || nv.cols != 1 || nu.rows != nv.rows) {
    throw ShapeError("dot: " + shape_str(nu.rows, nu.cols) + " . " +
                     shape_str(nv.rows, nv.cols));
  }
  Var out = push(Op::kDot, 1, 1, u.id, v.id);
  values_[nodes_.back().offset] =
      value_of(u.id).col(0).dot(value_of(v.id).col(0));
  return out;
}

Var Tape::leaky_relu(Var x, double slope) {
  const Node& nx = node(x);
  Var out = push(Op::kLeakyRelu, nx.rows, nx.cols, x.id, -1, slope);
  mutable_value(out.id) = value_of(x.id).unaryExpr(
      [slope](double t) { return gatlab::leaky_relu(t, slope); });
  return out;
}

Var Tape::softplus(Var x) {
  const Node& nx = node(x);
  Var out = push(Op::kSoftplus, nx.rows, nx.cols, x.id, -1);
  mutable_value(out.id) =
      value_of(x.id).unaryExpr([](double t) { return gatlab::softplus(t); });
  return out;
}

Var Tape::abs(Var x) {
  const Node& nx = node(x);
  Var out = push(Op::kAbs, nx.rows, nx.cols, x.id, -1);
  mutable_value(out.id) = value_of(x.id).cwiseAbs();
  return out;
}

Var Tape::square(Var x) {
  const Node& nx = node(x);
  Var out = push(Op::kSquare, nx.rows, nx.cols, x.id, -1);
  mutable_value(out.id) = value_of(x.id).cwiseAbs2();
  return out;
}

Var Tape::sum(Var x) {
  node(x);
  Var out = push(Op::kSum, 1, 1, x.id, -1);
  values_[nodes_.back().offset] = value_of(x.id).sum();
  return out;
}

Var Tape::stack(std::span<const Var> scalars) {
  const std::size_t first = operands_.size();
  for (Var s : scalars) {
    const Node& ns = node(s);
    if (ns.rows != 1 || ns.cols != 1) {
      throw ShapeError("stack: operands must be 1x1, got " +
                       shape_str(ns.rows, ns.cols));
    }
    operands_.push_back(s.id);
  }
  const auto count = static_cast<Eigen::Index>(scalars.size());
  Var out = push(Op::kStack, count, 1, -1, -1);
  Node& n = nodes_.back();
  n.operand_offset = first;
  n.operand_count = static_cast<std::int32_t>(count);
  for (Eigen::Index k = 0; k < count; ++k) {
    values_[n.offset + static_cast<std::size_t>(k)] =
        values_[nodes_[static_cast<std::size_t>(operands_[first + k])].offset];
  }
  return out;
}

Var Tape::index(Var v, int k) {
  const Node& nv = node(v);
  if (nv.cols != 1 || k < 0 || k >= nv.rows) {
    throw ShapeError("index " + std::to_string(k) + " out of range for " +
                     shape_str(nv.rows, nv.cols));
  }
  Var out = push(Op::kIndex, 1, 1, v.id, -1, static_cast<double>(k));
  values_[nodes_.back().offset] = value_of(v.id)(k, 0);
  return out;
}

Var Tape::softmax(Var scores) {
  const Node& ns = node(scores);
  if (ns.cols != 1) {
    throw ShapeError("softmax: expected a column vector, got " +
                     shape_str(ns.rows, ns.cols));
  }
  if (ns.rows == 0) throw ContractViolation("softmax over an empty set");
  Var out = push(Op::kSoftmax, ns.rows, 1, scores.id, -1);
  auto in = value_of(scores.id);
  auto y = mutable_value(out.id);
  y = (in.array() - in.maxCoeff()).exp().matrix();
  y /= y.sum();
  return out;
}

ConstMap Tape::value(Var v) const {
  node(v);
  return value_of(v.id);
}

double Tape::scalar(Var v) const {
  const Node& n = node(v);
  if (n.rows != 1 || n.cols != 1) {
    throw ShapeError("scalar: node is " + shape_str(n.rows, n.cols));
  }
  return values_[n.offset];
}

void Tape::backward(Var root) {
  const Node& nr = node(root);
  if (nr.rows != 1 || nr.cols != 1) {
    throw ContractViolation("backward: root must be scalar, got " +
                            shape_str(nr.rows, nr.cols));
  }
  adjoints_.assign(values_.size(), 0.0);
  adjoints_[nr.offset] = 1.0;
  backward_root_ = root.id;

  for (std::int32_t id = root.id; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    auto g = Eigen::Map<const Tensor>(adjoints_.data() + n.offset, n.rows,
                                      n.cols);
    switch (n.op) {
      case Op::kConstant:
      case Op::kVariable:
        break;
      case Op::kAdd:
        mutable_adjoint(n.a) += g;
        mutable_adjoint(n.b) += g;
        break;
      case Op::kSub:
        mutable_adjoint(n.a) += g;
        mutable_adjoint(n.b) -= g;
        break;
      case Op::kMatVec:
        mutable_adjoint(n.a).noalias() += g * value_of(n.b).transpose();
        mutable_adjoint(n.b).noalias() += value_of(n.a).transpose() * g;
        break;
      case Op::kScale: {
        const double s = values_[nodes_[static_cast<std::size_t>(n.a)].offset];
        adjoints_[nodes_[static_cast<std::size_t>(n.a)].offset] +=
            g.cwiseProduct(value_of(n.b)).sum();
        mutable_adjoint(n.b) += s * g;
        break;
      }
      case Op::kScaleConst:
        mutable_adjoint(n.a) += n.param * g;
        break;
      case Op::kDot: {
        const double gs = g(0, 0);
        mutable_adjoint(n.a) += gs * value_of(n.b);
        mutable_adjoint(n.b) += gs * value_of(n.a);
        break;
      }
      case Op::kLeakyRelu: {
        const double slope = n.param;
        mutable_adjoint(n.a).array() +=
            g.array() * value_of(n.a).array().unaryExpr([slope](double t) {
              return leaky_relu_derivative(t, slope);
            });
        break;
      }
      case Op::kSoftplus:
        mutable_adjoint(n.a).array() +=
            g.array() * value_of(n.a).array().unaryExpr(
                            [](double t) { return sigmoid(t); });
        break;
      case Op::kAbs:
        // sign(0) = 0
        mutable_adjoint(n.a).array() +=
            g.array() * value_of(n.a).array().sign();
        break;
      case Op::kSquare:
        mutable_adjoint(n.a).array() += 2.0 * g.array() * value_of(n.a).array();
        break;
      case Op::kSum:
        mutable_adjoint(n.a).array() += g(0, 0);
        break;
      case Op::kStack:
        for (std::int32_t k = 0; k < n.operand_count; ++k) {
          const auto src = operands_[n.operand_offset + static_cast<std::size_t>(k)];
          adjoints_[nodes_[static_cast<std::size_t>(src)].offset] += g(k, 0);
        }
        break;
      case Op::kIndex:
        mutable_adjoint(n.a)(static_cast<Eigen::Index>(n.param), 0) += g(0, 0);
        break;
      case Op::kSoftmax: {
        auto y = value_of(id);
        const double gy = g.col(0).dot(y.col(0));
        mutable_adjoint(n.a).array() += y.array() * (g.array() - gy);
        break;
      }
    }
  }
}

ConstMap Tape::grad(Var v) const {
  const Node& n = node(v);
  if (backward_root_ < 0 || adjoints_.size() < n.offset + n.rows * n.cols) {
    return {nullptr, 0, 0};
  }
  return {adjoints_.data() + n.offset, n.rows, n.cols};
}

void Tape::clear() {
  nodes_.clear();
  values_.clear();
  adjoints_.clear();
  operands_.clear();
  backward_root_ = -1;
}

Var operator+(Var a, Var b) { return a.tape->add(a, b); }
Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
Var matvec(Var m, Var v) { return m.tape->matvec(m, v); }
Var scale(Var s, Var x) { return s.tape->scale(s, x); }
Var scale(double c, Var x) { return x.tape->scale(c, x); }
Var dot(Var u, Var v) { return u.tape->dot(u, v); }
Var leaky_relu(Var x, double slope) { return x.tape->leaky_relu(x, slope); }
Var softplus(Var x) { return x.tape->softplus(x); }
Var abs(Var x) { return x.tape->abs(x); }
Var square(Var x) { return x.tape->square(x); }
Var sum(Var x) { return x.tape->sum(x); }
Var softmax(Var scores) { return scores.tape->softmax(scores); }
Var index(Var v, int k) { return v.tape->index(v, k); }

std::vector<Tensor> gradients(const Tape& tape, std::span<const Var> leaves) {
  std::vector<Tensor> out;
  out.reserve(leaves.size());
  for (Var v : leaves) out.emplace_back(tape.grad(v));
  return out;
}

}  // namespace gatlab::ad
