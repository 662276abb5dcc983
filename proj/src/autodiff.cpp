#include "sspo/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "sspo/error.hpp"

namespace sspo {
namespace {

struct UnaryPrimitive {
  std::string_view name;
  double (*forward)(double);
  // Derivative given the input x and output y.
  double (*derivative)(double x, double y);
};

constexpr std::array<UnaryPrimitive, 5> kUnary = {{
    {"tanh", [](double x) { return std::tanh(x); },
     [](double, double y) { return 1.0 - y * y; }},
    {"relu", [](double x) { return x > 0.0 ? x : 0.0; },
     [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }},
    {"square", [](double x) { return x * x; },
     [](double x, double) { return 2.0 * x; }},
    {"log_sigmoid", [](double x) { return sspo::log_sigmoid(x); },
     [](double x, double) { return sspo::sigmoid(-x); }},
    {"neg", [](double x) { return -x; },
     [](double, double) { return -1.0; }},
}};

int find_unary(std::string_view op) {
  for (std::size_t i = 0; i < kUnary.size(); ++i) {
    if (kUnary[i].name == op) return static_cast<int>(i);
  }
  return -1;
}

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + ": operand sizes " +
                                               std::to_string(a) + " and " +
                                               std::to_string(b));
  }
}

}  // namespace

Tape::Tape(const ParamVector& params) : params_(&params) { nodes_.reserve(32); }

bool Tape::is_registered(std::string_view op) { return find_unary(op) >= 0; }

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "variable does not belong to this tape");
  }
  return nodes_[v.id];
}

Var Tape::parameters() {
  Node n{Kind::kParam};
  n.param_offset = 0;
  n.needs_grad = true;
  n.value.assign(params_->values().begin(), params_->values().end());
  return push(std::move(n));
}

Var Tape::parameters(std::string_view segment) {
  const Segment& seg = params_->segment(segment);
  return parameters(seg.offset, seg.length);
}

Var Tape::parameters(std::size_t offset, std::size_t length) {
  if (offset + length > params_->size()) {
    throw Error(ErrorCode::kShapeMismatch, "parameter slice runs past the end");
  }
  Node n{Kind::kParam};
  n.param_offset = offset;
  n.needs_grad = true;
  auto vals = params_->values().subspan(offset, length);
  n.value.assign(vals.begin(), vals.end());
  return push(std::move(n));
}

Var Tape::constant(std::span<const double> values) {
  Node n{Kind::kConstant};
  n.value.assign(values.begin(), values.end());
  return push(std::move(n));
}

Var Tape::constant(double value) {
  Node n{Kind::kConstant};
  n.value = {value};
  return push(std::move(n));
}

Var Tape::affine(Var weight, Var bias, Var input) {
  const Node& w = node(weight);
  const Node& b = node(bias);
  const Node& x = node(input);
  const std::size_t rows = b.value.size();
  const std::size_t cols = x.value.size();
  require_same_size(w.value.size(), rows * cols, "affine weight");
  Node n{Kind::kAffine, weight.id, bias.id, input.id};
  n.needs_grad = w.needs_grad || b.needs_grad || x.needs_grad;
  n.value.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = b.value[i];
    const double* row = w.value.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x.value[j];
    n.value[i] = acc;
  }
  return push(std::move(n));
}

Var Tape::elementwise(std::string_view op, Var x) {
  const int index = find_unary(op);
  if (index < 0) {
    throw Error(ErrorCode::kUnsupportedPrimitive,
                "no registered primitive named '" + std::string(op) + "'");
  }
  const Node& in = node(x);
  Node n{Kind::kUnary, x.id};
  n.unary = index;
  n.needs_grad = in.needs_grad;
  n.value.resize(in.value.size());
  for (std::size_t i = 0; i < in.value.size(); ++i) {
    n.value[i] = kUnary[index].forward(in.value[i]);
  }
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  const Node& x = node(a);
  const Node& y = node(b);
  require_same_size(x.value.size(), y.value.size(), "add");
  Node n{Kind::kAdd, a.id, b.id};
  n.needs_grad = x.needs_grad || y.needs_grad;
  n.value.resize(x.value.size());
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = x.value[i] + y.value[i];
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  const Node& x = node(a);
  const Node& y = node(b);
  require_same_size(x.value.size(), y.value.size(), "sub");
  Node n{Kind::kSub, a.id, b.id};
  n.needs_grad = x.needs_grad || y.needs_grad;
  n.value.resize(x.value.size());
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = x.value[i] - y.value[i];
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  const Node& x = node(a);
  const Node& y = node(b);
  require_same_size(x.value.size(), y.value.size(), "mul");
  Node n{Kind::kMul, a.id, b.id};
  n.needs_grad = x.needs_grad || y.needs_grad;
  n.value.resize(x.value.size());
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = x.value[i] * y.value[i];
  return push(std::move(n));
}

Var Tape::scale(Var x, double factor) {
  const Node& in = node(x);
  Node n{Kind::kScale, x.id};
  n.factor = factor;
  n.needs_grad = in.needs_grad;
  n.value.resize(in.value.size());
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = factor * in.value[i];
  return push(std::move(n));
}

Var Tape::sum(Var x) {
  const Node& in = node(x);
  Node n{Kind::kSum, x.id};
  n.needs_grad = in.needs_grad;
  double acc = 0.0;
  for (double v : in.value) acc += v;
  n.value = {acc};
  return push(std::move(n));
}

Var Tape::mean(Var x) {
  const Node& in = node(x);
  if (in.value.empty()) throw Error(ErrorCode::kShapeMismatch, "mean of an empty node");
  Node n{Kind::kMean, x.id};
  n.needs_grad = in.needs_grad;
  double acc = 0.0;
  for (double v : in.value) acc += v;
  n.value = {acc / static_cast<double>(in.value.size())};
  return push(std::move(n));
}

std::span<const double> Tape::value(Var v) const { return node(v).value; }

double Tape::scalar(Var v) const {
  const Node& n = node(v);
  if (n.value.size() != 1) {
    throw Error(ErrorCode::kShapeMismatch, "node is not a scalar");
  }
  return n.value[0];
}

ParamVector Tape::backward(Var loss) const {
  (void)scalar(loss);
  ParamVector out = ParamVector::zeros_like(*params_);
  std::span<double> param_grad = out.mutable_values();

  std::vector<std::vector<double>> adj(loss.id + 1);
  adj[loss.id] = {1.0};
  auto grad_of = [&](std::size_t id) -> std::vector<double>& {
    auto& g = adj[id];
    if (g.empty()) g.assign(nodes_[id].value.size(), 0.0);
    return g;
  };

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.needs_grad || adj[id].empty()) continue;
    const std::vector<double>& g = adj[id];
    switch (n.kind) {
      case Kind::kParam:
        for (std::size_t i = 0; i < g.size(); ++i) param_grad[n.param_offset + i] += g[i];
        break;
      case Kind::kConstant:
        break;
      case Kind::kAffine: {
        const Node& w = nodes_[n.a];
        const Node& x = nodes_[n.c];
        const std::size_t rows = g.size();
        const std::size_t cols = x.value.size();
        if (w.needs_grad) {
          auto& gw = grad_of(n.a);
          for (std::size_t i = 0; i < rows; ++i) {
            double* row = gw.data() + i * cols;
            for (std::size_t j = 0; j < cols; ++j) row[j] += g[i] * x.value[j];
          }
        }
        if (nodes_[n.b].needs_grad) {
          auto& gb = grad_of(n.b);
          for (std::size_t i = 0; i < rows; ++i) gb[i] += g[i];
        }
        if (x.needs_grad) {
          auto& gx = grad_of(n.c);
          for (std::size_t i = 0; i < rows; ++i) {
            const double* row = w.value.data() + i * cols;
            for (std::size_t j = 0; j < cols; ++j) gx[j] += row[j] * g[i];
          }
        }
        break;
      }
      case Kind::kUnary: {
        const Node& in = nodes_[n.a];
        if (!in.needs_grad) break;
        auto& gi = grad_of(n.a);
        const auto& prim = kUnary[n.unary];
        for (std::size_t i = 0; i < g.size(); ++i) {
          gi[i] += g[i] * prim.derivative(in.value[i], n.value[i]);
        }
        break;
      }
      case Kind::kAdd:
      case Kind::kSub: {
        const double sign_b = n.kind == Kind::kAdd ? 1.0 : -1.0;
        if (nodes_[n.a].needs_grad) {
          auto& ga = grad_of(n.a);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (nodes_[n.b].needs_grad) {
          auto& gb = grad_of(n.b);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign_b * g[i];
        }
        break;
      }
      case Kind::kMul: {
        const Node& x = nodes_[n.a];
        const Node& y = nodes_[n.b];
        if (x.needs_grad) {
          auto& ga = grad_of(n.a);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y.value[i];
        }
        if (y.needs_grad) {
          auto& gb = grad_of(n.b);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x.value[i];
        }
        break;
      }
      case Kind::kScale: {
        if (!nodes_[n.a].needs_grad) break;
        auto& gi = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += n.factor * g[i];
        break;
      }
      case Kind::kSum:
      case Kind::kMean: {
        if (!nodes_[n.a].needs_grad) break;
        auto& gi = grad_of(n.a);
        const double d = n.kind == Kind::kSum
                             ? g[0]
                             : g[0] / static_cast<double>(gi.size());
        for (double& v : gi) v += d;
        break;
      }
    }
  }
  return out;
}

ValueAndGrad value_and_grad(const LossFn& loss_fn, const ParamVector& theta) {
  Tape tape(theta);
  const Var loss = loss_fn(tape);
  return {tape.scalar(loss), tape.backward(loss)};
}

ParamVector grad(const LossFn& loss_fn, const ParamVector& theta) {
  return value_and_grad(loss_fn, theta).gradient;
}

double evaluate(const LossFn& loss_fn, const ParamVector& theta) {
  Tape tape(theta);
  return tape.scalar(loss_fn(tape));
}

ParamVector finite_difference_grad(const LossFn& loss_fn, const ParamVector& theta,
                                   double step) {
  ParamVector probe = theta;
  ParamVector out = ParamVector::zeros_like(theta);
  auto values = probe.mutable_values();
  auto result = out.mutable_values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + step;
    const double up = evaluate(loss_fn, probe);
    values[i] = saved - step;
    const double down = evaluate(loss_fn, probe);
    values[i] = saved;
    result[i] = (up - down) / (2.0 * step);
  }
  return out;
}

double max_relative_error(std::span<const double> a, std::span<const double> b,
                          double floor) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kShapeMismatch, "relative error over different sizes");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace sspo
