#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dsiforge/tensor.hpp"

namespace dsi::ad {

enum class OpKind {
  kConstant,
  kParameter,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMatMul,
  kConcat,
  kEmbedding,
  kTanh,
  kSigmoid,
  kExp,
  kLog,
  kMaxScalar,
  kMinScalar,
  kSoftmax,
  kLogSoftmax,
  kReduceSum,
  kReduceMean,
  kElemMax,
  kElemMin,
  kGather,
  kSliceRows,
};

std::string_view op_name(OpKind op);

using NodeId = std::size_t;
using Position = std::pair<std::size_t, std::size_t>;

struct Node {
  NodeId id = 0;
  OpKind op = OpKind::kConstant;
  std::vector<NodeId> inputs;
  Shape shape;
  Tensor value;
  Tensor grad;
  bool requires_grad = false;

  std::string name;                   // parameter
  double scalar = 0.0;                // max/min with scalar
  std::size_t axis = 0;               // concat
  std::size_t begin = 0;              // slice rows
  std::vector<std::size_t> indices;   // embedding lookup
  std::vector<Position> positions;    // gather (row, col)
};

/// Non-owning name -> tensor map used to feed parameter leaves.
class Bindings {
 public:
  void bind(const std::string& name, const Tensor& t) { map_[name] = &t; }
  const Tensor* find(const std::string& name) const;
  const std::map<std::string, const Tensor*>& entries() const { return map_; }

 private:
  std::map<std::string, const Tensor*> map_;
};

using Gradients = std::map<std::string, Tensor>;

/// Define-then-run expression DAG. Builders append nodes and infer shapes;
/// forward() evaluates every node in insertion order (which is topological by
/// construction) and backward() accumulates reverse-mode gradients.
///
/// Binary arithmetic broadcasts only scalar-vs-tensor. Softmax variants act on
/// the last axis. At max/min kinks the subgradient is zero.
class Graph {
 public:
  NodeId constant(Tensor value);
  NodeId scalar(double v) { return constant(Tensor::scalar(v)); }
  NodeId parameter(const std::string& name, Shape shape);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  /// axis 1 joins columns of equal-row matrices, axis 0 stacks rows. Inputs of
  /// rank <= 1 are flattened into a vector.
  NodeId concat(const std::vector<NodeId>& xs, std::size_t axis);
  NodeId embedding(NodeId table, std::vector<std::size_t> indices);
  NodeId tanh(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId exp(NodeId x);
  NodeId log(NodeId x);
  NodeId max_scalar(NodeId x, double c);
  NodeId min_scalar(NodeId x, double c);
  NodeId softmax(NodeId x);
  NodeId log_softmax(NodeId x);
  NodeId reduce_sum(NodeId x);
  NodeId reduce_mean(NodeId x);
  NodeId elem_max(NodeId a, NodeId b);
  NodeId elem_min(NodeId a, NodeId b);
  /// Picks x[row, col] for each position into a vector.
  NodeId gather(NodeId x, std::vector<Position> positions);
  NodeId slice_rows(NodeId x, std::size_t begin, std::size_t count);

  void forward(const Bindings& bindings);
  /// Requires a prior forward() and a root with exactly one element.
  Gradients backward(NodeId root);

  const Node& node(NodeId id) const { return nodes_.at(id); }
  const Tensor& value(NodeId id) const;
  const Tensor& grad(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }
  bool evaluated() const { return evaluated_; }
  std::vector<std::string> parameter_names() const;

 private:
  NodeId push(Node n);
  NodeId binary(OpKind op, NodeId a, NodeId b);
  NodeId unary(OpKind op, NodeId x);
  void eval(Node& n);
  void propagate(Node& n);

  std::vector<Node> nodes_;
  bool evaluated_ = false;
};

/// Max over every bound parameter element of
/// |analytic - central difference| / max(1e-8, |central difference|).
double finite_diff_check(Graph& graph, const Bindings& bindings, NodeId root, double h);

}  // namespace dsi::ad
