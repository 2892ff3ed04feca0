#include "gyro/graph.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "gyro/error.hpp"

namespace gyro {

namespace {

using EigenMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenMatrix>;
using MutMap = Eigen::Map<EigenMatrix>;

enum class BroadcastKind { SameShape, ScalarLeft, ScalarRight, RowVectorRight, RowVectorLeft };

// Allowed broadcasts: identical shapes, a scalar on either side, or a row
// vector [n] against a matrix [m, n]. Anything else is a construction error;
// there is no silent broadcasting beyond the leading batch dimension.
BroadcastKind classify_broadcast(const char* name, const Array& a, const Array& b) {
  if (a.same_shape(b)) return BroadcastKind::SameShape;
  if (b.size() == 1) return BroadcastKind::ScalarRight;
  if (a.size() == 1) return BroadcastKind::ScalarLeft;
  if (a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0)) return BroadcastKind::RowVectorRight;
  if (b.rank() == 2 && a.rank() == 1 && b.dim(1) == a.dim(0)) return BroadcastKind::RowVectorLeft;
  fail("shape mismatch in {}: {} vs {}", name, shape_str(a.shape()), shape_str(b.shape()));
}

template <typename F>
Array broadcast_apply(const char* name, const Array& a, const Array& b, F&& f) {
  switch (classify_broadcast(name, a, b)) {
    case BroadcastKind::SameShape: {
      Array out(a.shape());
      for (std::int64_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
      return out;
    }
    case BroadcastKind::ScalarRight: {
      Array out(a.shape());
      double s = b[0];
      for (std::int64_t i = 0; i < out.size(); ++i) out[i] = f(a[i], s);
      return out;
    }
    case BroadcastKind::ScalarLeft: {
      Array out(b.shape());
      double s = a[0];
      for (std::int64_t i = 0; i < out.size(); ++i) out[i] = f(s, b[i]);
      return out;
    }
    case BroadcastKind::RowVectorRight: {
      Array out(a.shape());
      int m = a.dim(0), n = a.dim(1);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          out[static_cast<std::int64_t>(i) * n + j] = f(a[static_cast<std::int64_t>(i) * n + j], b[j]);
      return out;
    }
    case BroadcastKind::RowVectorLeft: {
      Array out(b.shape());
      int m = b.dim(0), n = b.dim(1);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          out[static_cast<std::int64_t>(i) * n + j] = f(a[j], b[static_cast<std::int64_t>(i) * n + j]);
      return out;
    }
  }
  fail("unreachable broadcast kind in {}", name);
}

Array unary_apply(const Array& a, double (*f)(double)) {
  Array out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

const Array& Value::array() const {
  GYRO_CHECK(graph != nullptr, "use of an empty Value handle");
  return graph->array(*this);
}

const Shape& Value::shape() const { return array().shape(); }

double Value::scalar() const { return array().scalar_value(); }

const char* Graph::op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Param: return "param";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::MatMul: return "matmul";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Square: return "square";
    case Op::Softmax: return "softmax";
    case Op::LogSoftmax: return "log_softmax";
    case Op::SumAll: return "sum_all";
    case Op::SumRows: return "sum_rows";
    case Op::SumCols: return "sum_cols";
    case Op::BroadcastRows: return "broadcast_rows";
    case Op::BroadcastCols: return "broadcast_cols";
    case Op::BroadcastScalar: return "broadcast_scalar";
    case Op::Minimum: return "minimum";
    case Op::Maximum: return "maximum";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceCols: return "slice_cols";
    case Op::PadCols: return "pad_cols";
    case Op::GatherRows: return "gather_rows";
    case Op::ScatterRows: return "scatter_rows";
    case Op::Clip: return "clip";
    case Op::StopGradient: return "stop_gradient";
    case Op::Reshape: return "reshape";
  }
  return "?";
}

int Graph::push(Node node) {
  if (node.op == Op::Param) {
    node.requires_grad = true;
  } else if (node.op == Op::Constant || node.op == Op::StopGradient) {
    node.requires_grad = false;
  } else {
    bool rg = false;
    if (node.a >= 0) rg = rg || nodes_[static_cast<std::size_t>(node.a)].requires_grad;
    if (node.b >= 0) rg = rg || nodes_[static_cast<std::size_t>(node.b)].requires_grad;
    node.requires_grad = rg;
  }
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Value Graph::make(Op op, Array value, int a, int b) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.value = std::move(value);
  return handle(push(std::move(n)));
}

const Array& Graph::array(Value v) const {
  GYRO_CHECK(v.graph == this && v.id >= 0 && v.id < static_cast<int>(nodes_.size()),
             "Value does not belong to this graph");
  return nodes_[static_cast<std::size_t>(v.id)].value;
}

Value Graph::constant(Array value) { return make(Op::Constant, std::move(value)); }

Value Graph::constant(double value) { return make(Op::Constant, Array::scalar(value)); }

Value Graph::param(Parameter& parameter) {
  auto it = param_nodes_.find(&parameter);
  if (it != param_nodes_.end()) return handle(it->second);
  Node n;
  n.op = Op::Param;
  n.value = parameter.value;
  n.parameter = &parameter;
  int id = push(std::move(n));
  param_nodes_.emplace(&parameter, id);
  return handle(id);
}

Value Graph::param_value(const Parameter& parameter) const {
  auto it = param_nodes_.find(&parameter);
  GYRO_CHECK(it != param_nodes_.end(), "parameter '{}' is not on this tape", parameter.name);
  return Value{const_cast<Graph*>(this), it->second};
}

void Graph::check_binary_shapes(const char* name, const Array& a, const Array& b) const {
  classify_broadcast(name, a, b);
}

Value Graph::add(Value a, Value b) {
  return make(Op::Add,
              broadcast_apply("add", array(a), array(b), [](double x, double y) { return x + y; }),
              a.id, b.id);
}

Value Graph::sub(Value a, Value b) {
  return make(Op::Sub,
              broadcast_apply("sub", array(a), array(b), [](double x, double y) { return x - y; }),
              a.id, b.id);
}

Value Graph::mul(Value a, Value b) {
  return make(Op::Mul,
              broadcast_apply("mul", array(a), array(b), [](double x, double y) { return x * y; }),
              a.id, b.id);
}

Value Graph::div(Value a, Value b) {
  return make(Op::Div,
              broadcast_apply("div", array(a), array(b), [](double x, double y) { return x / y; }),
              a.id, b.id);
}

Value Graph::neg(Value a) {
  Array out = array(a);
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = -out[i];
  return make(Op::Neg, std::move(out), a.id);
}

Value Graph::matmul(Value a, Value b, bool transpose_a, bool transpose_b) {
  const Array& av = array(a);
  const Array& bv = array(b);
  GYRO_CHECK(av.rank() == 2 && bv.rank() == 2, "matmul requires rank-2 operands, got {} and {}",
             shape_str(av.shape()), shape_str(bv.shape()));
  int m = transpose_a ? av.dim(1) : av.dim(0);
  int k = transpose_a ? av.dim(0) : av.dim(1);
  int kb = transpose_b ? bv.dim(1) : bv.dim(0);
  int n = transpose_b ? bv.dim(0) : bv.dim(1);
  GYRO_CHECK(k == kb, "matmul inner dimensions differ: {}{} vs {}{}", shape_str(av.shape()),
             transpose_a ? "^T" : "", shape_str(bv.shape()), transpose_b ? "^T" : "");
  Array out({m, n});
  ConstMap ma(av.data(), av.dim(0), av.dim(1));
  ConstMap mb(bv.data(), bv.dim(0), bv.dim(1));
  MutMap mo(out.data(), m, n);
  if (!transpose_a && !transpose_b) mo.noalias() = ma * mb;
  else if (transpose_a && !transpose_b) mo.noalias() = ma.transpose() * mb;
  else if (!transpose_a && transpose_b) mo.noalias() = ma * mb.transpose();
  else mo.noalias() = ma.transpose() * mb.transpose();

  Node node;
  node.op = Op::MatMul;
  node.a = a.id;
  node.b = b.id;
  node.value = std::move(out);
  node.lo = transpose_a ? 1.0 : 0.0;
  node.hi = transpose_b ? 1.0 : 0.0;
  return handle(push(std::move(node)));
}

Value Graph::tanh(Value a) { return make(Op::Tanh, unary_apply(array(a), std::tanh), a.id); }

Value Graph::relu(Value a) {
  return make(Op::Relu, unary_apply(array(a), [](double x) { return x > 0.0 ? x : 0.0; }), a.id);
}

Value Graph::exp(Value a) { return make(Op::Exp, unary_apply(array(a), std::exp), a.id); }

Value Graph::log(Value a) { return make(Op::Log, unary_apply(array(a), std::log), a.id); }

Value Graph::square(Value a) {
  return make(Op::Square, unary_apply(array(a), [](double x) { return x * x; }), a.id);
}

namespace {

void softmax_row(const double* x, double* out, int n, bool log_space) {
  double mx = x[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double total = 0.0;
  for (int j = 0; j < n; ++j) total += std::exp(x[j] - mx);
  if (log_space) {
    double log_total = std::log(total);
    for (int j = 0; j < n; ++j) out[j] = x[j] - mx - log_total;
  } else {
    for (int j = 0; j < n; ++j) out[j] = std::exp(x[j] - mx) / total;
  }
}

Array softmax_forward(const Array& a, bool log_space) {
  GYRO_CHECK(a.rank() >= 1 && a.rank() <= 2, "softmax requires rank 1 or 2, got {}",
             shape_str(a.shape()));
  Array out(a.shape());
  int n = a.dim(a.rank() - 1);
  int rows = a.rank() == 2 ? a.dim(0) : 1;
  GYRO_CHECK(n > 0, "softmax over empty axis, shape {}", shape_str(a.shape()));
  for (int i = 0; i < rows; ++i)
    softmax_row(a.data() + static_cast<std::int64_t>(i) * n,
                out.data() + static_cast<std::int64_t>(i) * n, n, log_space);
  return out;
}

}  // namespace

Value Graph::softmax(Value a) { return make(Op::Softmax, softmax_forward(array(a), false), a.id); }

Value Graph::log_softmax(Value a) {
  return make(Op::LogSoftmax, softmax_forward(array(a), true), a.id);
}

Value Graph::sum_all(Value a) {
  const Array& av = array(a);
  double total = 0.0;
  for (std::int64_t i = 0; i < av.size(); ++i) total += av[i];
  return make(Op::SumAll, Array::scalar(total), a.id);
}

Value Graph::sum_rows(Value a) {
  const Array& av = array(a);
  GYRO_CHECK(av.rank() == 2, "sum_rows requires rank 2, got {}", shape_str(av.shape()));
  int m = av.dim(0), n = av.dim(1);
  Array out({m});
  for (int i = 0; i < m; ++i) {
    double total = 0.0;
    for (int j = 0; j < n; ++j) total += av[static_cast<std::int64_t>(i) * n + j];
    out[i] = total;
  }
  return make(Op::SumRows, std::move(out), a.id);
}

Value Graph::sum_cols(Value a) {
  const Array& av = array(a);
  GYRO_CHECK(av.rank() == 2, "sum_cols requires rank 2, got {}", shape_str(av.shape()));
  int m = av.dim(0), n = av.dim(1);
  Array out({n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[j] += av[static_cast<std::int64_t>(i) * n + j];
  return make(Op::SumCols, std::move(out), a.id);
}

Value Graph::broadcast_rows(Value a, int cols) {
  const Array& av = array(a);
  GYRO_CHECK(av.rank() == 1, "broadcast_rows requires rank 1, got {}", shape_str(av.shape()));
  int m = av.dim(0);
  Array out({m, cols});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < cols; ++j) out[static_cast<std::int64_t>(i) * cols + j] = av[i];
  return make(Op::BroadcastRows, std::move(out), a.id);
}

Value Graph::broadcast_cols(Value a, int rows) {
  const Array& av = array(a);
  GYRO_CHECK(av.rank() == 1, "broadcast_cols requires rank 1, got {}", shape_str(av.shape()));
  int n = av.dim(0);
  Array out({rows, n});
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::int64_t>(i) * n + j] = av[j];
  return make(Op::BroadcastCols, std::move(out), a.id);
}

Value Graph::broadcast_scalar(Value a, Shape shape) {
  const Array& av = array(a);
  GYRO_CHECK(av.size() == 1, "broadcast_scalar requires a scalar, got {}", shape_str(av.shape()));
  return make(Op::BroadcastScalar, Array::full(std::move(shape), av[0]), a.id);
}

Value Graph::minimum(Value a, Value b) {
  return make(
      Op::Minimum,
      broadcast_apply("minimum", array(a), array(b), [](double x, double y) { return x < y ? x : y; }),
      a.id, b.id);
}

Value Graph::maximum(Value a, Value b) {
  return make(
      Op::Maximum,
      broadcast_apply("maximum", array(a), array(b), [](double x, double y) { return x > y ? x : y; }),
      a.id, b.id);
}

Value Graph::concat_cols(Value a, Value b) {
  const Array& av = array(a);
  const Array& bv = array(b);
  GYRO_CHECK(av.rank() == 2 && bv.rank() == 2 && av.dim(0) == bv.dim(0),
             "concat_cols requires matching row counts: {} vs {}", shape_str(av.shape()),
             shape_str(bv.shape()));
  int m = av.dim(0), p = av.dim(1), q = bv.dim(1);
  Array out({m, p + q});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < p; ++j)
      out[static_cast<std::int64_t>(i) * (p + q) + j] = av[static_cast<std::int64_t>(i) * p + j];
    for (int j = 0; j < q; ++j)
      out[static_cast<std::int64_t>(i) * (p + q) + p + j] = bv[static_cast<std::int64_t>(i) * q + j];
  }
  return make(Op::ConcatCols, std::move(out), a.id, b.id);
}

Value Graph::slice_cols(Value a, int from, int to) {
  const Array& av = array(a);
  GYRO_CHECK(av.rank() == 2 && from >= 0 && to <= av.dim(1) && from < to,
             "slice_cols [{}:{}] out of range for {}", from, to, shape_str(av.shape()));
  int m = av.dim(0), n = av.dim(1), w = to - from;
  Array out({m, w});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j)
      out[static_cast<std::int64_t>(i) * w + j] = av[static_cast<std::int64_t>(i) * n + from + j];
  Node node;
  node.op = Op::SliceCols;
  node.a = a.id;
  node.value = std::move(out);
  node.extent = from;
  return handle(push(std::move(node)));
}

Value Graph::pad_cols(Value a, int from, int total_cols) {
  const Array& av = array(a);
  GYRO_CHECK(av.rank() == 2 && from >= 0 && from + av.dim(1) <= total_cols,
             "pad_cols from {} width {} exceeds total {}", from, av.dim(1), total_cols);
  int m = av.dim(0), w = av.dim(1);
  Array out({m, total_cols});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j)
      out[static_cast<std::int64_t>(i) * total_cols + from + j] =
          av[static_cast<std::int64_t>(i) * w + j];
  Node node;
  node.op = Op::PadCols;
  node.a = a.id;
  node.value = std::move(out);
  node.extent = from;
  return handle(push(std::move(node)));
}

Value Graph::gather_rows(Value a, std::vector<int> indices) {
  const Array& av = array(a);
  GYRO_CHECK(av.rank() >= 1 && av.rank() <= 2, "gather_rows requires rank 1 or 2");
  int m = av.dim(0);
  int n = av.rank() == 2 ? av.dim(1) : 1;
  for (int idx : indices)
    GYRO_CHECK(idx >= 0 && idx < m, "gather_rows index {} out of range [0, {})", idx, m);
  int k = static_cast<int>(indices.size());
  Array out(av.rank() == 2 ? Shape{k, n} : Shape{k});
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::int64_t>(i) * n + j] =
          av[static_cast<std::int64_t>(indices[static_cast<std::size_t>(i)]) * n + j];
  Node node;
  node.op = Op::GatherRows;
  node.a = a.id;
  node.value = std::move(out);
  node.indices = std::move(indices);
  return handle(push(std::move(node)));
}

Value Graph::scatter_rows(Value a, std::vector<int> indices, int rows) {
  const Array& av = array(a);
  GYRO_CHECK(av.rank() >= 1 && av.rank() <= 2, "scatter_rows requires rank 1 or 2");
  GYRO_CHECK(static_cast<int>(indices.size()) == av.dim(0),
             "scatter_rows needs one index per row, got {} for {}", indices.size(),
             shape_str(av.shape()));
  int n = av.rank() == 2 ? av.dim(1) : 1;
  for (int idx : indices)
    GYRO_CHECK(idx >= 0 && idx < rows, "scatter_rows index {} out of range [0, {})", idx, rows);
  Array out(av.rank() == 2 ? Shape{rows, n} : Shape{rows});
  for (int i = 0; i < av.dim(0); ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::int64_t>(indices[static_cast<std::size_t>(i)]) * n + j] +=
          av[static_cast<std::int64_t>(i) * n + j];
  Node node;
  node.op = Op::ScatterRows;
  node.a = a.id;
  node.value = std::move(out);
  node.indices = std::move(indices);
  node.extent = rows;
  return handle(push(std::move(node)));
}

Value Graph::clip(Value a, double lo, double hi) {
  GYRO_CHECK(lo <= hi, "clip bounds inverted: [{}, {}]", lo, hi);
  const Array& av = array(a);
  Array out(av.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::clamp(av[i], lo, hi);
  Node node;
  node.op = Op::Clip;
  node.a = a.id;
  node.value = std::move(out);
  node.lo = lo;
  node.hi = hi;
  return handle(push(std::move(node)));
}

Value Graph::stop_gradient(Value a) { return make(Op::StopGradient, array(a), a.id); }

Value Graph::reshape(Value a, Shape shape) {
  return make(Op::Reshape, array(a).reshaped(std::move(shape)), a.id);
}

Value Graph::mean_all(Value a) {
  return mul(sum_all(a), constant(1.0 / static_cast<double>(array(a).size())));
}

Value Graph::mean_rows(Value a) {
  return mul(sum_rows(a), constant(1.0 / static_cast<double>(array(a).dim(1))));
}

Value Graph::sum_to(Value g, const Shape& target) {
  const Array& gv = array(g);
  if (gv.shape() == target) return g;
  if (shape_size(target) == 1) return sum_all(g);
  if (gv.rank() == 2 && target.size() == 1 && gv.dim(1) == target[0]) return sum_cols(g);
  fail("internal: cannot reduce gradient {} to {}", shape_str(gv.shape()), shape_str(target));
}

std::vector<Value> Graph::gradients(Value loss, std::span<const Value> wrt) {
  GYRO_CHECK(loss.graph == this, "loss Value does not belong to this graph");
  GYRO_CHECK(array(loss).size() == 1, "gradients require a scalar loss, got {}",
             shape_str(array(loss).shape()));

  std::unordered_map<int, Value> grad;
  grad.emplace(loss.id, constant(Array::full(array(loss).shape(), 1.0)));

  auto accumulate = [&](int id, Value v) {
    if (id < 0 || !nodes_[static_cast<std::size_t>(id)].requires_grad) return;
    auto it = grad.find(id);
    if (it == grad.end()) {
      grad.emplace(id, v);
    } else {
      it->second = add(it->second, v);
    }
  };

  auto mask_constant = [&](const Array& values) { return constant(values); };

  for (int id = loss.id; id >= 0; --id) {
    auto it = grad.find(id);
    if (it == grad.end()) continue;
    if (!nodes_[static_cast<std::size_t>(id)].requires_grad) continue;
    Value g = it->second;

    // Copy the small node fields; pushing backward nodes may reallocate.
    const Op op = nodes_[static_cast<std::size_t>(id)].op;
    const int a = nodes_[static_cast<std::size_t>(id)].a;
    const int b = nodes_[static_cast<std::size_t>(id)].b;
    const double lo = nodes_[static_cast<std::size_t>(id)].lo;
    const double hi = nodes_[static_cast<std::size_t>(id)].hi;
    const int extent = nodes_[static_cast<std::size_t>(id)].extent;
    const Shape shape_a = a >= 0 ? nodes_[static_cast<std::size_t>(a)].value.shape() : Shape{};
    const Shape shape_b = b >= 0 ? nodes_[static_cast<std::size_t>(b)].value.shape() : Shape{};
    Value self = handle(id);
    Value ia = a >= 0 ? handle(a) : Value{};
    Value ib = b >= 0 ? handle(b) : Value{};

    switch (op) {
      case Op::Constant:
      case Op::Param:
      case Op::StopGradient:
        break;
      case Op::Add:
        accumulate(a, sum_to(g, shape_a));
        accumulate(b, sum_to(g, shape_b));
        break;
      case Op::Sub:
        accumulate(a, sum_to(g, shape_a));
        accumulate(b, sum_to(neg(g), shape_b));
        break;
      case Op::Mul:
        accumulate(a, sum_to(mul(g, ib), shape_a));
        accumulate(b, sum_to(mul(g, ia), shape_b));
        break;
      case Op::Div:
        accumulate(a, sum_to(div(g, ib), shape_a));
        accumulate(b, sum_to(neg(mul(g, div(ia, square(ib)))), shape_b));
        break;
      case Op::Neg:
        accumulate(a, neg(g));
        break;
      case Op::MatMul: {
        const bool ta = lo != 0.0;
        const bool tb = hi != 0.0;
        Value da = ta ? matmul(ib, g, tb, true) : matmul(g, ib, false, !tb);
        Value db = tb ? matmul(g, ia, true, ta) : matmul(ia, g, !ta, false);
        accumulate(a, da);
        accumulate(b, db);
        break;
      }
      case Op::Tanh:
        accumulate(a, mul(g, sub(constant(1.0), square(self))));
        break;
      case Op::Relu: {
        const Array& xv = nodes_[static_cast<std::size_t>(a)].value;
        Array mask(xv.shape());
        for (std::int64_t i = 0; i < mask.size(); ++i) mask[i] = xv[i] > 0.0 ? 1.0 : 0.0;
        accumulate(a, mul(g, mask_constant(mask)));
        break;
      }
      case Op::Exp:
        accumulate(a, mul(g, self));
        break;
      case Op::Log:
        accumulate(a, div(g, ia));
        break;
      case Op::Square:
        accumulate(a, mul(mul(g, ia), constant(2.0)));
        break;
      case Op::Softmax: {
        Value weighted = mul(g, self);
        if (shape_a.size() == 2) {
          Value t = broadcast_rows(sum_rows(weighted), shape_a[1]);
          accumulate(a, mul(self, sub(g, t)));
        } else {
          accumulate(a, mul(self, sub(g, sum_all(weighted))));
        }
        break;
      }
      case Op::LogSoftmax: {
        Value smax = exp(self);
        if (shape_a.size() == 2) {
          Value t = broadcast_rows(sum_rows(g), shape_a[1]);
          accumulate(a, sub(g, mul(smax, t)));
        } else {
          accumulate(a, sub(g, mul(smax, sum_all(g))));
        }
        break;
      }
      case Op::SumAll:
        accumulate(a, broadcast_scalar(g, shape_a));
        break;
      case Op::SumRows:
        accumulate(a, broadcast_rows(g, shape_a[1]));
        break;
      case Op::SumCols:
        accumulate(a, broadcast_cols(g, shape_a[0]));
        break;
      case Op::BroadcastRows:
        accumulate(a, sum_rows(g));
        break;
      case Op::BroadcastCols:
        accumulate(a, sum_cols(g));
        break;
      case Op::BroadcastScalar:
        accumulate(a, sum_all(g));
        break;
      case Op::Minimum:
      case Op::Maximum: {
        const Array& av = nodes_[static_cast<std::size_t>(a)].value;
        const Array& bv = nodes_[static_cast<std::size_t>(b)].value;
        // Ties route the gradient to the first operand.
        Array mask = op == Op::Minimum
                         ? broadcast_apply("minimum", av, bv,
                                           [](double x, double y) { return x <= y ? 1.0 : 0.0; })
                         : broadcast_apply("maximum", av, bv,
                                           [](double x, double y) { return x >= y ? 1.0 : 0.0; });
        Array inverse(mask.shape());
        for (std::int64_t i = 0; i < mask.size(); ++i) inverse[i] = 1.0 - mask[i];
        accumulate(a, sum_to(mul(g, mask_constant(mask)), shape_a));
        accumulate(b, sum_to(mul(g, mask_constant(inverse)), shape_b));
        break;
      }
      case Op::ConcatCols:
        accumulate(a, slice_cols(g, 0, shape_a[1]));
        accumulate(b, slice_cols(g, shape_a[1], shape_a[1] + shape_b[1]));
        break;
      case Op::SliceCols:
        accumulate(a, pad_cols(g, extent, shape_a[1]));
        break;
      case Op::PadCols:
        accumulate(a, slice_cols(g, extent, extent + shape_a[1]));
        break;
      case Op::GatherRows: {
        std::vector<int> indices = nodes_[static_cast<std::size_t>(id)].indices;
        accumulate(a, scatter_rows(g, std::move(indices), shape_a[0]));
        break;
      }
      case Op::ScatterRows: {
        std::vector<int> indices = nodes_[static_cast<std::size_t>(id)].indices;
        accumulate(a, gather_rows(g, std::move(indices)));
        break;
      }
      case Op::Clip: {
        const Array& xv = nodes_[static_cast<std::size_t>(a)].value;
        Array mask(xv.shape());
        for (std::int64_t i = 0; i < mask.size(); ++i)
          mask[i] = (xv[i] >= lo && xv[i] <= hi) ? 1.0 : 0.0;
        accumulate(a, mul(g, mask_constant(mask)));
        break;
      }
      case Op::Reshape:
        accumulate(a, reshape(g, shape_a));
        break;
    }
  }

  std::vector<Value> out;
  out.reserve(wrt.size());
  for (Value leaf : wrt) {
    GYRO_CHECK(leaf.graph == this, "gradient target does not belong to this graph");
    auto it = grad.find(leaf.id);
    if (it == grad.end()) {
      out.push_back(constant(Array(array(leaf).shape())));
    } else {
      out.push_back(it->second);
    }
  }
  return out;
}

double Graph::backward(Value loss) {
  double loss_value = array(loss).scalar_value();
  if (!std::isfinite(loss_value)) fail_non_finite(loss.id);

  std::vector<Value> leaves;
  std::vector<Parameter*> params;
  for (int id = 0; id <= loss.id; ++id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.op == Op::Param) {
      leaves.push_back(Value{this, id});
      params.push_back(n.parameter);
    }
  }
  std::vector<Value> grads = gradients(loss, leaves);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const Array& g = array(grads[i]);
    if (!g.all_finite()) fail_non_finite(grads[i].id);
    params[i]->grad = g;
  }
  return loss_value;
}

void Graph::fail_non_finite(int at) const {
  for (int id = 0; id <= at && id < static_cast<int>(nodes_.size()); ++id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.value.all_finite()) {
      if (n.op == Op::Param && n.parameter != nullptr) {
        fail("non-finite values in parameter '{}'", n.parameter->name);
      }
      fail("non-finite values produced by op '{}' (node {})", op_name(n.op), id);
    }
  }
  fail("non-finite values detected (origin not on tape)");
}

}  // namespace gyro
