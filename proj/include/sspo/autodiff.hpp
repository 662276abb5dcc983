#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "sspo/numerics.hpp"

namespace sspo {

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

// Reverse-mode tape over a fixed primitive set:
//   affine maps, registered elementwise functions (tanh, relu, square,
//   log_sigmoid, neg), add/sub/mul, scalar scaling, mean, sum.
// Nodes hold vector values; scalars are length-1 vectors. Only nodes that
// depend on parameters participate in the backward pass.
class Tape {
 public:
  explicit Tape(const ParamVector& params);

  const ParamVector& params() const noexcept { return *params_; }

  /// Leaf over the whole parameter vector.
  Var parameters();
  /// Leaf over a named parameter segment.
  Var parameters(std::string_view segment);
  Var parameters(std::size_t offset, std::size_t length);
  Var constant(std::span<const double> values);
  Var constant(double value);

  /// weight (rows x cols, row-major) * input + bias.
  Var affine(Var weight, Var bias, Var input);
  /// Applies a registered elementwise primitive by name; throws
  /// UnsupportedPrimitive for anything outside the registry.
  Var elementwise(std::string_view op, Var x);
  Var tanh(Var x) { return elementwise("tanh", x); }
  Var relu(Var x) { return elementwise("relu", x); }
  Var square(Var x) { return elementwise("square", x); }
  Var log_sigmoid(Var x) { return elementwise("log_sigmoid", x); }
  Var neg(Var x) { return elementwise("neg", x); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var x, double factor);
  Var mean(Var x);
  Var sum(Var x);

  std::span<const double> value(Var v) const;
  double scalar(Var v) const;
  std::size_t node_count() const noexcept { return nodes_.size(); }

  /// d(loss)/d(params), laid out like params(). `loss` must be a scalar.
  ParamVector backward(Var loss) const;

  static bool is_registered(std::string_view op);

 private:
  enum class Kind { kParam, kConstant, kAffine, kUnary, kAdd, kSub, kMul, kScale, kMean, kSum };

  struct Node {
    Kind kind;
    std::size_t a = 0, b = 0, c = 0;
    int unary = -1;
    double factor = 0.0;
    std::size_t param_offset = 0;
    bool needs_grad = false;
    std::vector<double> value;
  };

  Var push(Node node);
  const Node& node(Var v) const;

  const ParamVector* params_;
  std::vector<Node> nodes_;
};

using LossFn = std::function<Var(Tape&)>;

struct ValueAndGrad {
  double value;
  ParamVector gradient;
};

ValueAndGrad value_and_grad(const LossFn& loss_fn, const ParamVector& theta);
ParamVector grad(const LossFn& loss_fn, const ParamVector& theta);
/// Forward-only evaluation of the same loss function.
double evaluate(const LossFn& loss_fn, const ParamVector& theta);

/// Central finite differences of loss_fn around theta, one coordinate at a
/// time. Kept independent of the tape's backward pass.
ParamVector finite_difference_grad(const LossFn& loss_fn, const ParamVector& theta,
                                   double step);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor).
double max_relative_error(std::span<const double> a, std::span<const double> b,
                          double floor = 1e-8);

}  // namespace sspo
