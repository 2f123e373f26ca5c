#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "ignn/tensor.hpp"

namespace ignn::ad {

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const noexcept { return id != kInvalid; }
};

/// Reverse-mode gradient tape over Matrix values.
///
/// Nodes are appended in evaluation order, so walking the node list backwards
/// is a reverse topological order: every consumer of a value has pushed its
/// contribution before the value's own backward rule runs. A tape belongs to
/// one thread.
class Tape {
 public:
  /// Receives the node itself and its accumulated gradient, and pushes
  /// contributions to its parents through `Tape::accumulate`.
  using Backward = std::function<void(Tape&, Var self, const Matrix& upstream)>;

  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  /// Records the result of a primitive. `requires_grad` is inherited from the
  /// parents; the backward rule is dropped when no parent needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var record(Matrix value, const std::vector<Var>& parents, Backward backward);

  const Matrix& value(Var v) const;
  /// Gradient after `backward`; a zero matrix of the value's shape when the
  /// node received no contribution.
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const;

  void accumulate(Var v, const Matrix& g);
  void accumulate(Var v, Matrix&& g);

  /// Seeds d(output)/d(output) = 1 for a 1x1 output and replays every rule in
  /// reverse. Gradients from an earlier call are discarded first, so repeated
  /// calls give identical results.
  void backward(Var output);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
};

Var matmul(Tape& t, Var a, Var b);
/// x W + 1 b
Var affine(Tape& t, Var x, Var w, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
/// a * s where s is a 1x1 value.
Var scale_by(Tape& t, Var a, Var s);
Var tanh(Tape& t, Var a);
/// Subgradient at 0 is 0.
Var relu(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
/// Softmax over the first `count` entries of a 1 x k row vector; the result is
/// 1 x count. Remaining entries are masked out.
Var softmax(Tape& t, Var logits, std::size_t count);
Var softmax(Tape& t, Var logits);
/// Sum of all entries, 1x1.
Var sum(Tape& t, Var a);
/// Frobenius norm, 1x1. The gradient at the origin is taken as 0.
Var frobenius_norm(Tape& t, Var a);
/// Column means, 1 x cols.
Var mean_rows(Tape& t, Var a);
Var concat_cols(Tape& t, const std::vector<Var>& parts);
/// sum_i weights[0, i] * mats[i]; weights is 1 x mats.size().
Var weighted_sum(Tape& t, Var weights, const std::vector<Var>& mats);
/// 1x1 slice of a(r, c).
Var element(Tape& t, Var a, std::size_t r, std::size_t c);

/// Max over entries of |analytic - central difference| / max(1, |analytic|)
/// for the scalar function `f` at `x`. `f` must build its graph on the tape
/// it is handed and return a 1x1 value.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Matrix& x, double eps);

}  // namespace ignn::ad
