#pragma once

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// Every value on the tape is a rows x cols matrix of doubles (vectors are
// 1 x n, scalars 1 x 1). Long-lived trainable state lives in ParamTensor and
// enters a tape through Tape::param(); everything else is recorded per step.
// All reductions run in index order so forward values and gradients are
// bit-reproducible within one build.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sceneprior/error.hpp"

namespace sceneprior::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

struct ParamTensor {
  ParamTensor(std::string name, Shape shape, bool requires_grad = true);

  std::size_t size() const { return values.size(); }
  // Rank-1 tensors enter the tape as a single row.
  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  void zero_grad();

  std::string name;
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = true;
};

class Tape;

// Lightweight handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return rows() * cols(); }
  std::span<const double> value() const;
  double item() const;
  double at(std::size_t r, std::size_t c) const { return value()[r * cols() + c]; }
  std::vector<double> to_vector() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(std::size_t rows, std::size_t cols, std::vector<double> values);
  Var scalar(double v) { return constant(1, 1, {v}); }
  Var param(ParamTensor& p);

  // Records a new node. `backward` receives the node index and must add the
  // node's gradient contribution into its inputs via grad_accum().
  Var push(std::size_t rows, std::size_t cols, std::vector<double> value,
           std::initializer_list<Var> inputs, BackwardFn backward);
  Var push(std::size_t rows, std::size_t cols, std::vector<double> value,
           const std::vector<Var>& inputs, BackwardFn backward);

  // Reverse sweep from a scalar loss. With flush=true the leaf gradients are
  // added into the bound ParamTensors (in leaf creation order).
  void backward(Var loss, bool flush = true);
  void flush_param_grads();

  std::size_t size() const { return nodes_.size(); }
  std::size_t rows(std::size_t id) const { return nodes_[id].rows; }
  std::size_t cols(std::size_t id) const { return nodes_[id].cols; }
  std::span<const double> value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  // Gradient of a node (empty span when it never received any).
  std::span<const double> grad(std::size_t id) const { return nodes_[id].grad; }
  // Mutable gradient slot of an input; allocated on first touch. Returns an
  // empty span when the input does not require gradients.
  std::span<double> grad_accum(std::size_t id);

 private:
  struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    bool needs_grad = false;
    BackwardFn backward;
    ParamTensor* param = nullptr;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const ParamTensor*, std::size_t> param_nodes_;
  std::vector<std::size_t> leaf_order_;
};

// ---- primitives -----------------------------------------------------------

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var transpose(Var a);

// Binary elementwise ops broadcast `b` when it is 1x1, 1xC (row) or Rx1
// (column) against an RxC `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);

Var relu(Var a);
Var gelu(Var a);  // exact x * Phi(x)
Var softplus(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
Var abs(Var a);

Var softmax_rows(Var a);
Var log_softmax_rows(Var a);

Var sum(Var a);
Var mean(Var a);
Var sum_rows(Var a);  // column sums, 1 x C

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var tile_rows(Var row, std::size_t count);

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);

// Mean absolute difference over all elements.
Var l1_distance(Var a, Var b);
// Softmax cross-entropy on a 1xC row of logits (log-sum-exp form).
Var cross_entropy_logits(Var logits, std::size_t target);
// Mean binary cross-entropy of probabilities against fixed targets.
Var bce(Var prob, std::span<const double> target, double clamp = 1e-12);
Var bce_with_logits(Var logits, std::span<const double> target);

// Whole-tensor L2 normalization and cosine similarity of two tensors.
Var normalize(Var a);
Var cosine_similarity(Var a, Var b);

// Scalar-valued helpers over doubles, also used by tests as oracles.
double gelu_value(double x);
double sigmoid_value(double x);
double softplus_value(double x);

// ---- gradient checking ----------------------------------------------------

using ScalarFn = std::function<Var(Tape&)>;

// Max relative error between tape gradients and central differences over
// every coordinate of x. Relative error uses max(|a|, |b|, 1e-8).
double gradient_check(const ScalarFn& f, ParamTensor& x, double eps);

// Central: (f(x+h) - f(x-h)) / 2h. FivePoint: the fourth-order stencil
// (f(x-2h) - 8 f(x-h) + 8 f(x+h) - f(x+2h)) / 12h.
enum class Stencil { Central, FivePoint };

// Same, over several tensors; when max_coords_per_tensor > 0 only that many
// coordinates per tensor (drawn with `seed`) are perturbed. `floor` replaces
// the 1e-8 in the relative-error denominator; composite losses whose finite
// differences carry round-off near that size use a larger one.
double gradient_check(const ScalarFn& f, const std::vector<ParamTensor*>& xs,
                      double eps, std::size_t max_coords_per_tensor = 0,
                      std::uint64_t seed = 0, double floor = 1e-8,
                      Stencil stencil = Stencil::Central);

double relative_error(double a, double b, double floor = 1e-8);

}  // namespace sceneprior::ad
