#pragma once

// Reverse-mode differentiation over small dense tensors.
//
// The tape is define-by-run: every operation evaluates eagerly when it is
// recorded, so `value()` of any handle is its forward result. `backward()`
// then sweeps the recorded nodes in reverse creation order, which is a valid
// topological order because operands always precede their results.
//
// Values and adjoints live in two flat arenas owned by the tape. `clear()`
// keeps the capacity, so a tape reused across mini-batches stops allocating
// after the first one.

#include "gatlab/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace gatlab::ad {

class Tape;

// Lightweight handle to a node on a tape. Copyable; does not own anything.
struct Var {
  Tape* tape = nullptr;
  std::int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
};

enum class Op : std::uint8_t {
  kConstant,
  kVariable,
  kAdd,
  kSub,
  kMatVec,
  kScale,       // 1x1 Var times tensor
  kScaleConst,  // double times tensor
  kDot,
  kLeakyRelu,
  kSoftplus,
  kAbs,
  kSquare,
  kSum,
  kStack,
  kIndex,
  kSoftmax,
};

using ConstMap = Eigen::Map<const Tensor>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Leaves. Gradients are reported for variables; constants receive adjoints
  // too but callers normally ignore them.
  Var variable(const Eigen::Ref<const Tensor>& value);
  Var constant(const Eigen::Ref<const Tensor>& value);
  Var constant(double value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var matvec(Var m, Var v);
  Var scale(Var s, Var x);
  Var scale(double c, Var x);
  Var dot(Var u, Var v);
  Var leaky_relu(Var x, double slope);
  Var softplus(Var x);
  Var abs(Var x);
  Var square(Var x);
  Var sum(Var x);
  // Concatenates 1x1 operands into a column vector.
  Var stack(std::span<const Var> scalars);
  Var index(Var v, int k);
  // Softmax over a column vector of scores. Throws ContractViolation when
  // the vector is empty.
  Var softmax(Var scores);

  ConstMap value(Var v) const;
  double scalar(Var v) const;

  // Seeds d(root)/d(root) = 1 and accumulates adjoints of every node recorded
  // up to `root`. `root` must be 1x1.
  void backward(Var root);
  // Adjoint of `v` from the last backward(); zero-shaped before any.
  ConstMap grad(Var v) const;

  void clear();
  std::size_t size() const { return nodes_.size(); }
  Op op(Var v) const { return node(v).op; }

 private:
  struct Node {
    Op op;
    std::int32_t rows;
    std::int32_t cols;
    std::int32_t a = -1;
    std::int32_t b = -1;
    std::size_t offset = 0;  // into values_/adjoints_
    std::size_t operand_offset = 0;
    std::int32_t operand_count = 0;
    double param = 0.0;
  };

  const Node& node(Var v) const;
  Var push(Op op, Eigen::Index rows, Eigen::Index cols, std::int32_t a,
           std::int32_t b, double param = 0.0);
  Eigen::Map<Tensor> mutable_value(std::int32_t id);
  Eigen::Map<Tensor> mutable_adjoint(std::int32_t id);
  ConstMap value_of(std::int32_t id) const;
  void check_same_tape(Var v) const;

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> adjoints_;
  std::vector<std::int32_t> operands_;
  std::int32_t backward_root_ = -1;
};

// Free-function spelling of the op set; each forwards to the operand's tape.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var matvec(Var m, Var v);
Var scale(Var s, Var x);
Var scale(double c, Var x);
Var dot(Var u, Var v);
Var leaky_relu(Var x, double slope);
Var softplus(Var x);
Var abs(Var x);
Var square(Var x);
Var sum(Var x);
Var softmax(Var scores);
Var index(Var v, int k);

// Gradient of the last backward() root with respect to each listed leaf.
std::vector<Tensor> gradients(const Tape& tape, std::span<const Var> leaves);

}  // namespace gatlab::ad
