#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rng/matrix.hpp"
#include "rng/params.hpp"

namespace rng::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }

  const Matrix& value() const;
  /// Gradient of the last backward() root with respect to this node.
  /// Empty if no gradient reached it.
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Receives the gradient flowing into a node and pushes it to its parents.
using BackFn = std::function<void(Tape&, const Matrix& out_grad)>;

/// Minimal reverse-mode tape. Nodes are appended in evaluation order, so a
/// reverse sweep visits every node after all of its consumers.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix m);
  /// Free leaf that receives a gradient but is not tied to a ParamStore.
  Var variable(Matrix m);
  /// Leaf bound to a stored parameter; backward() adds into `p.grad`.
  /// Repeated calls with the same parameter return the same node.
  Var param(Param& p);
  Var param(ParamStore& store, const std::string& name) { return param(store.at(name)); }

  /// Reverse sweep from a 1x1 root, then flushes bound leaves into their
  /// ParamStore gradient slots.
  void backward(Var root);

  // Op-author interface.
  Var push(Matrix value, std::initializer_list<Var> parents, BackFn back);
  Var push(Matrix value, const std::vector<Var>& parents, BackFn back);
  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  /// Gradient slot of a node, allocated (zeroed) on first use.
  Matrix& grad_slot(int id);
  /// Accumulates `g` into a node's gradient when it requires one.
  void accumulate(int id, const Matrix& g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackFn back;
    bool requires_grad = false;
    Param* bound = nullptr;
  };

  std::deque<Node> nodes_;
  std::unordered_map<Param*, int> bound_ids_;
};

/// Resolves parameter names to tape nodes. Bound to a mutable store the
/// nodes are gradient-tracked leaves; bound to a const store they are
/// constants. Each name is materialized at most once per binder.
class Binder {
 public:
  Binder(Tape& tape, ParamStore& store) : tape_(&tape), mutable_(&store), store_(&store) {}
  Binder(Tape& tape, const ParamStore& store) : tape_(&tape), store_(&store) {}

  Var operator()(const std::string& name);
  Tape& tape() const { return *tape_; }
  const ParamStore& store() const { return *store_; }

 private:
  Tape* tape_;
  ParamStore* mutable_ = nullptr;
  const ParamStore* store_;
  std::unordered_map<std::string, Var> cache_;
};

Var matmul(Var a, Var b);
/// a·bᵀ
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Element-wise product.
Var mul(Var a, Var b);
/// Adds a 1×cols row to every row of a.
Var add_row(Var a, Var row);
/// Multiplies every row of a element-wise by a 1×cols row.
Var mul_row(Var a, Var row);
Var scale(Var a, double s);
/// Multiplies a by a 1x1 node.
Var scale_by(Var a, Var s);
Var add_scalar(Var a, double s);
Var silu(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var transpose(Var a);
/// Sum of all entries, 1x1.
Var sum(Var a);
/// Σ a⊙b, 1x1.
Var dot(Var a, Var b);
/// log Σ exp over all entries, 1x1.
Var logsumexp(Var a);

/// Row-wise softmax honoring `mask`. Unlike rng::softmax_rows, a row with
/// no live entry yields an all-zero row; that is how padded queries
/// attend to nothing.
Var masked_softmax(Var a, const Mask* mask = nullptr);

Var slice(Var a, std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc);
Var rows(Var a, std::size_t r0, std::size_t n);
/// Gathers rows of a by index (any repetition allowed).
Var select_rows(Var a, const std::vector<std::size_t>& idx);
Var concat_rows(const std::vector<Var>& parts);
/// Packs 1x1 nodes into a rows×cols matrix (row-major order).
Var stack_scalars(const std::vector<Var>& scalars, std::size_t rows, std::size_t cols);

/// Divides each row by its L2 norm. A zero row is rejected.
Var l2_normalize_rows(Var a);

/// Mean over rows of the per-row maximum, 1x1. The gradient flows to the
/// first maximal entry of each row.
Var row_max_mean(Var a);

/// out[j] = log Σ_i exp(prev[i] + trans[i][j]) for a 1×T prev.
Var lse_matvec(Var prev, Var trans);

/// b[i][j] = table[clip(i - j, -K, K) + K] for a 1×(2K+1) table.
Var relative_bias(Var table, std::size_t rows, std::size_t cols, std::size_t max_offset);

/// Mean over rows of -log softmax(S/τ)[i][target_i].
Var softmax_cross_entropy(Var scores, const std::vector<std::size_t>& targets, double tau);

}  // namespace rng::ad
