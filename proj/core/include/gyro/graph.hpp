#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gyro/array.hpp"

namespace gyro {

// A named tensor with its gradient accumulator. Owned by a ParameterStore;
// updaters and optimizers hold raw pointers.
struct Parameter {
  std::string name;
  Array value;
  Array grad;
};

class Graph;

// Lightweight handle to a node in a Graph.
struct Value {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr; }
  const Array& array() const;
  const Shape& shape() const;
  double scalar() const;
};

// Reverse-mode automatic differentiation over an eagerly evaluated tape.
//
// Ops are restricted to rank-1/rank-2 arrays; broadcasting is limited to a
// scalar operand or a row vector [n] against a matrix [m, n]. Backward rules
// emit graph nodes themselves, so gradients are Values and can be
// differentiated again (used for Fisher-vector products).
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Value constant(Array value);
  Value constant(double value);
  Value param(Parameter& parameter);

  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value div(Value a, Value b);
  Value neg(Value a);
  Value matmul(Value a, Value b, bool transpose_a = false, bool transpose_b = false);
  Value tanh(Value a);
  Value relu(Value a);
  Value exp(Value a);
  Value log(Value a);
  Value square(Value a);
  Value softmax(Value a);       // along the last axis
  Value log_softmax(Value a);   // along the last axis
  Value sum_all(Value a);       // -> [1]
  Value sum_rows(Value a);      // [m, n] -> [m]
  Value sum_cols(Value a);      // [m, n] -> [n]
  Value broadcast_rows(Value a, int cols);   // [m] -> [m, n]
  Value broadcast_cols(Value a, int rows);   // [n] -> [m, n]
  Value broadcast_scalar(Value a, Shape shape);
  Value minimum(Value a, Value b);
  Value maximum(Value a, Value b);
  Value concat_cols(Value a, Value b);       // [m, p], [m, q] -> [m, p + q]
  Value slice_cols(Value a, int from, int to);
  Value pad_cols(Value a, int from, int total_cols);
  Value gather_rows(Value a, std::vector<int> indices);
  Value scatter_rows(Value a, std::vector<int> indices, int rows);  // scatter-add
  Value clip(Value a, double lo, double hi);
  Value stop_gradient(Value a);
  Value reshape(Value a, Shape shape);

  // Composites.
  Value mean_all(Value a);
  Value mean_rows(Value a);  // [m, n] -> [m]
  Value dot(Value a, Value b) { return sum_all(mul(a, b)); }

  // Gradients of a scalar with respect to arbitrary tape values, themselves
  // tape values. Leaves not reached by the loss get zero gradients.
  std::vector<Value> gradients(Value loss, std::span<const Value> wrt);

  // Convenience: gradients for every Parameter registered on this tape,
  // written into Parameter::grad. Returns the loss value. Throws on a
  // non-finite loss or gradient, naming the op that produced it.
  double backward(Value loss);

  Value param_value(const Parameter& parameter) const;  // node registered via param()
  const Array& array(Value v) const;
  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    Constant, Param, Add, Sub, Mul, Div, Neg, MatMul, Tanh, Relu, Exp, Log, Square,
    Softmax, LogSoftmax, SumAll, SumRows, SumCols, BroadcastRows, BroadcastCols,
    BroadcastScalar, Minimum, Maximum, ConcatCols, SliceCols, PadCols, GatherRows,
    ScatterRows, Clip, StopGradient, Reshape,
  };

  struct Node {
    Op op;
    bool requires_grad = false;
    int a = -1;
    int b = -1;
    double lo = 0.0;
    double hi = 0.0;
    int extent = 0;  // slice/pad offsets, scatter rows
    Array value;
    std::vector<int> indices;    // gather/scatter
    Parameter* parameter = nullptr;
  };

  static const char* op_name(Op op);
  int push(Node node);
  Value make(Op op, Array value, int a = -1, int b = -1);
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Value handle(int id) { return Value{this, id}; }
  void check_binary_shapes(const char* name, const Array& a, const Array& b) const;
  Value sum_to(Value g, const Shape& target);
  [[noreturn]] void fail_non_finite(int at) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

// Operator sugar for graph expressions.
inline Value operator+(Value a, Value b) { return a.graph->add(a, b); }
inline Value operator-(Value a, Value b) { return a.graph->sub(a, b); }
inline Value operator*(Value a, Value b) { return a.graph->mul(a, b); }
inline Value operator/(Value a, Value b) { return a.graph->div(a, b); }
inline Value operator-(Value a) { return a.graph->neg(a); }

}  // namespace gyro
