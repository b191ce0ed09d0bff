#include "dsiforge/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "dsiforge/error.hpp"

namespace dsi::ad {
namespace {

[[noreturn]] void shape_error(NodeId id, OpKind op, const std::string& detail) {
  throw ShapeError("node " + std::to_string(id) + " (" + std::string(op_name(op)) +
                   "): " + detail);
}

std::size_t rows_of(const Shape& s) {
  if (s.size() <= 1) return 1;
  return s[0];
}

std::size_t cols_of(const Shape& s) {
  if (s.empty()) return 1;
  return s.back();
}

}  // namespace

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kConcat: return "concat";
    case OpKind::kEmbedding: return "embedding-lookup";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kMaxScalar: return "max-with-scalar";
    case OpKind::kMinScalar: return "min-with-scalar";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLogSoftmax: return "log-softmax";
    case OpKind::kReduceSum: return "reduce-sum";
    case OpKind::kReduceMean: return "reduce-mean";
    case OpKind::kElemMax: return "elementwise-max";
    case OpKind::kElemMin: return "elementwise-min";
    case OpKind::kGather: return "gather";
    case OpKind::kSliceRows: return "slice-rows";
  }
  return "unknown";
}

const Tensor* Bindings::find(const std::string& name) const {
  auto it = map_.find(name);
  return it == map_.end() ? nullptr : it->second;
}

NodeId Graph::push(Node n) {
  n.id = nodes_.size();
  for (NodeId in : n.inputs) {
    if (in >= n.id) throw std::logic_error("graph input refers to a later node");
    n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  }
  nodes_.push_back(std::move(n));
  evaluated_ = false;
  return nodes_.back().id;
}

NodeId Graph::constant(Tensor value) {
  Node n;
  n.op = OpKind::kConstant;
  n.shape = value.shape;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::parameter(const std::string& name, Shape shape) {
  Node n;
  n.op = OpKind::kParameter;
  n.shape = std::move(shape);
  n.name = name;
  n.requires_grad = true;
  return push(std::move(n));
}

NodeId Graph::binary(OpKind op, NodeId a, NodeId b) {
  const Shape& sa = nodes_.at(a).shape;
  const Shape& sb = nodes_.at(b).shape;
  Node n;
  n.op = op;
  n.inputs = {a, b};
  if (sa == sb) {
    n.shape = sa;
  } else if (numel(sb) == 1 && (numel(sa) != 1 || sa.size() >= sb.size())) {
    n.shape = sa;
  } else if (numel(sa) == 1) {
    n.shape = sb;
  } else {
    shape_error(nodes_.size(), op, "operand shapes " + to_string(sa) + " and " + to_string(sb) +
                                       " are not broadcast-compatible");
  }
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) { return binary(OpKind::kAdd, a, b); }
NodeId Graph::sub(NodeId a, NodeId b) { return binary(OpKind::kSub, a, b); }
NodeId Graph::mul(NodeId a, NodeId b) { return binary(OpKind::kMul, a, b); }
NodeId Graph::div(NodeId a, NodeId b) { return binary(OpKind::kDiv, a, b); }

NodeId Graph::elem_max(NodeId a, NodeId b) { return binary(OpKind::kElemMax, a, b); }
NodeId Graph::elem_min(NodeId a, NodeId b) { return binary(OpKind::kElemMin, a, b); }

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Shape& sa = nodes_.at(a).shape;
  const Shape& sb = nodes_.at(b).shape;
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    shape_error(nodes_.size(), OpKind::kMatMul,
                "expected [m,k] x [k,n], got " + to_string(sa) + " x " + to_string(sb));
  }
  Node n;
  n.op = OpKind::kMatMul;
  n.inputs = {a, b};
  n.shape = {sa[0], sb[1]};
  return push(std::move(n));
}

NodeId Graph::concat(const std::vector<NodeId>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat of zero tensors");
  Node n;
  n.op = OpKind::kConcat;
  n.inputs = xs;
  n.axis = axis;
  bool flat = std::all_of(xs.begin(), xs.end(),
                          [&](NodeId x) { return nodes_.at(x).shape.size() <= 1; });
  if (flat) {
    std::size_t total = 0;
    for (NodeId x : xs) total += numel(nodes_[x].shape);
    n.shape = {total};
    n.axis = 0;
    return push(std::move(n));
  }
  if (axis > 1) shape_error(nodes_.size(), OpKind::kConcat, "axis must be 0 or 1");
  const Shape& first = nodes_.at(xs[0]).shape;
  std::size_t joined = 0;
  for (NodeId x : xs) {
    const Shape& s = nodes_.at(x).shape;
    if (s.size() != 2 || s[1 - axis] != first[1 - axis]) {
      shape_error(nodes_.size(), OpKind::kConcat,
                  "expected " + to_string(first) + "-compatible input, got " + to_string(s));
    }
    joined += s[axis];
  }
  n.shape = first;
  n.shape[axis] = joined;
  return push(std::move(n));
}

NodeId Graph::embedding(NodeId table, std::vector<std::size_t> indices) {
  const Shape& st = nodes_.at(table).shape;
  if (st.size() != 2) shape_error(nodes_.size(), OpKind::kEmbedding, "table must be rank 2");
  for (std::size_t i : indices) {
    if (i >= st[0]) {
      shape_error(nodes_.size(), OpKind::kEmbedding,
                  "index " + std::to_string(i) + " out of range for table " + to_string(st));
    }
  }
  Node n;
  n.op = OpKind::kEmbedding;
  n.inputs = {table};
  n.shape = {indices.size(), st[1]};
  n.indices = std::move(indices);
  return push(std::move(n));
}

NodeId Graph::unary(OpKind op, NodeId x) {
  Node n;
  n.op = op;
  n.inputs = {x};
  n.shape = nodes_.at(x).shape;
  return push(std::move(n));
}

NodeId Graph::tanh(NodeId x) { return unary(OpKind::kTanh, x); }
NodeId Graph::sigmoid(NodeId x) { return unary(OpKind::kSigmoid, x); }
NodeId Graph::exp(NodeId x) { return unary(OpKind::kExp, x); }
NodeId Graph::log(NodeId x) { return unary(OpKind::kLog, x); }
NodeId Graph::softmax(NodeId x) { return unary(OpKind::kSoftmax, x); }
NodeId Graph::log_softmax(NodeId x) { return unary(OpKind::kLogSoftmax, x); }

NodeId Graph::max_scalar(NodeId x, double c) {
  NodeId id = unary(OpKind::kMaxScalar, x);
  nodes_[id].scalar = c;
  return id;
}

NodeId Graph::min_scalar(NodeId x, double c) {
  NodeId id = unary(OpKind::kMinScalar, x);
  nodes_[id].scalar = c;
  return id;
}

NodeId Graph::reduce_sum(NodeId x) {
  Node n;
  n.op = OpKind::kReduceSum;
  n.inputs = {x};
  return push(std::move(n));
}

NodeId Graph::reduce_mean(NodeId x) {
  if (numel(nodes_.at(x).shape) == 0) {
    shape_error(nodes_.size(), OpKind::kReduceMean, "mean of an empty tensor");
  }
  Node n;
  n.op = OpKind::kReduceMean;
  n.inputs = {x};
  return push(std::move(n));
}

NodeId Graph::gather(NodeId x, std::vector<Position> positions) {
  const Shape& s = nodes_.at(x).shape;
  if (s.size() > 2) shape_error(nodes_.size(), OpKind::kGather, "input rank must be <= 2");
  for (const auto& [r, c] : positions) {
    if (r >= rows_of(s) || c >= cols_of(s)) {
      shape_error(nodes_.size(), OpKind::kGather,
                  "position (" + std::to_string(r) + ", " + std::to_string(c) +
                      ") outside " + to_string(s));
    }
  }
  Node n;
  n.op = OpKind::kGather;
  n.inputs = {x};
  n.shape = {positions.size()};
  n.positions = std::move(positions);
  return push(std::move(n));
}

NodeId Graph::slice_rows(NodeId x, std::size_t begin, std::size_t count) {
  const Shape& s = nodes_.at(x).shape;
  if (s.size() != 2 || begin + count > s[0]) {
    shape_error(nodes_.size(), OpKind::kSliceRows,
                "rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                    ") outside " + to_string(s));
  }
  Node n;
  n.op = OpKind::kSliceRows;
  n.inputs = {x};
  n.shape = {count, s[1]};
  n.begin = begin;
  return push(std::move(n));
}

const Tensor& Graph::value(NodeId id) const {
  if (!evaluated_ && nodes_.at(id).op != OpKind::kConstant) {
    throw std::logic_error("value() requested before forward()");
  }
  return nodes_.at(id).value;
}

const Tensor& Graph::grad(NodeId id) const { return nodes_.at(id).grad; }

std::vector<std::string> Graph::parameter_names() const {
  std::set<std::string> names;
  for (const Node& n : nodes_) {
    if (n.op == OpKind::kParameter) names.insert(n.name);
  }
  return {names.begin(), names.end()};
}

void Graph::forward(const Bindings& bindings) {
  for (Node& n : nodes_) {
    if (n.op == OpKind::kParameter) {
      const Tensor* t = bindings.find(n.name);
      if (t == nullptr) {
        throw std::invalid_argument("parameter '" + n.name + "' (node " + std::to_string(n.id) +
                                    ") is not bound");
      }
      if (t->shape != n.shape) {
        shape_error(n.id, n.op,
                    "parameter '" + n.name + "' expected shape " + to_string(n.shape) +
                        ", bound shape " + to_string(t->shape));
      }
      n.value = *t;
    } else if (n.op != OpKind::kConstant) {
      eval(n);
    }
  }
  evaluated_ = true;
}

void Graph::eval(Node& n) {
  n.value.shape = n.shape;
  n.value.data.assign(numel(n.shape), 0.0);
  std::vector<double>& out = n.value.data;

  auto binary_eval = [&](auto&& f) {
    const Tensor& a = nodes_[n.inputs[0]].value;
    const Tensor& b = nodes_[n.inputs[1]].value;
    const bool sa = a.size() == 1;
    const bool sb = b.size() == 1;
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = f(sa ? a[0] : a[i], sb ? b[0] : b[i]);
    }
  };

  switch (n.op) {
    case OpKind::kConstant:
    case OpKind::kParameter:
      break;
    case OpKind::kAdd: binary_eval([](double x, double y) { return x + y; }); break;
    case OpKind::kSub: binary_eval([](double x, double y) { return x - y; }); break;
    case OpKind::kMul: binary_eval([](double x, double y) { return x * y; }); break;
    case OpKind::kDiv: binary_eval([](double x, double y) { return x / y; }); break;
    case OpKind::kElemMax: binary_eval([](double x, double y) { return std::max(x, y); }); break;
    case OpKind::kElemMin: binary_eval([](double x, double y) { return std::min(x, y); }); break;
    case OpKind::kMatMul: {
      const Tensor& a = nodes_[n.inputs[0]].value;
      const Tensor& b = nodes_[n.inputs[1]].value;
      const std::size_t m = a.shape[0], k = a.shape[1], cols = b.shape[1];
      for (std::size_t i = 0; i < m; ++i) {
        double* crow = out.data() + i * cols;
        const double* arow = a.data.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = arow[p];
          if (av == 0.0) continue;
          const double* brow = b.data.data() + p * cols;
          for (std::size_t j = 0; j < cols; ++j) crow[j] += av * brow[j];
        }
      }
      break;
    }
    case OpKind::kConcat: {
      if (n.shape.size() == 1) {
        std::size_t off = 0;
        for (NodeId in : n.inputs) {
          const Tensor& t = nodes_[in].value;
          std::copy(t.data.begin(), t.data.end(), out.begin() + off);
          off += t.size();
        }
      } else if (n.axis == 0) {
        std::size_t off = 0;
        for (NodeId in : n.inputs) {
          const Tensor& t = nodes_[in].value;
          std::copy(t.data.begin(), t.data.end(), out.begin() + off);
          off += t.size();
        }
      } else {
        const std::size_t rows = n.shape[0], cols = n.shape[1];
        std::size_t col_off = 0;
        for (NodeId in : n.inputs) {
          const Tensor& t = nodes_[in].value;
          const std::size_t c = t.shape[1];
          for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(t.data.begin() + r * c, c, out.begin() + r * cols + col_off);
          }
          col_off += c;
        }
      }
      break;
    }
    case OpKind::kEmbedding: {
      const Tensor& table = nodes_[n.inputs[0]].value;
      const std::size_t d = table.shape[1];
      for (std::size_t r = 0; r < n.indices.size(); ++r) {
        std::copy_n(table.data.begin() + n.indices[r] * d, d, out.begin() + r * d);
      }
      break;
    }
    case OpKind::kTanh: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
      break;
    }
    case OpKind::kSigmoid: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x[i];
        out[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      }
      break;
    }
    case OpKind::kExp: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x[i]);
      break;
    }
    case OpKind::kLog: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(x[i] > 0.0)) {
          throw NumericError("internal error: log of non-positive value " +
                             std::to_string(x[i]) + " at node " + std::to_string(n.id));
        }
        out[i] = std::log(x[i]);
      }
      break;
    }
    case OpKind::kMaxScalar: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(x[i], n.scalar);
      break;
    }
    case OpKind::kMinScalar: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(x[i], n.scalar);
      break;
    }
    case OpKind::kSoftmax:
    case OpKind::kLogSoftmax: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      const std::size_t cols = cols_of(n.shape);
      const std::size_t rows = cols == 0 ? 0 : out.size() / cols;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data.data() + r * cols;
        double* yr = out.data() + r * cols;
        const double mx = *std::max_element(xr, xr + cols);
        double z = 0.0;
        for (std::size_t j = 0; j < cols; ++j) z += std::exp(xr[j] - mx);
        if (n.op == OpKind::kSoftmax) {
          for (std::size_t j = 0; j < cols; ++j) yr[j] = std::exp(xr[j] - mx) / z;
        } else {
          const double lz = mx + std::log(z);
          for (std::size_t j = 0; j < cols; ++j) yr[j] = xr[j] - lz;
        }
      }
      break;
    }
    case OpKind::kReduceSum:
    case OpKind::kReduceMean: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      double s = 0.0;
      for (double v : x.data) s += v;
      out[0] = n.op == OpKind::kReduceSum ? s : s / static_cast<double>(x.size());
      break;
    }
    case OpKind::kGather: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      const std::size_t cols = x.cols();
      for (std::size_t i = 0; i < n.positions.size(); ++i) {
        out[i] = x.data[n.positions[i].first * cols + n.positions[i].second];
      }
      break;
    }
    case OpKind::kSliceRows: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      const std::size_t cols = x.shape[1];
      std::copy_n(x.data.begin() + n.begin * cols, out.size(), out.begin());
      break;
    }
  }
}

Gradients Graph::backward(NodeId root) {
  if (!evaluated_) throw std::logic_error("backward() called before forward()");
  if (numel(nodes_.at(root).shape) != 1) {
    throw ShapeError("backward root node " + std::to_string(root) + " has shape " +
                     to_string(nodes_[root].shape) + "; a scalar is required");
  }
  for (Node& n : nodes_) {
    if (n.requires_grad) {
      n.grad.shape = n.shape;
      n.grad.data.assign(numel(n.shape), 0.0);
    } else {
      n.grad = Tensor();
    }
  }
  Gradients grads;
  if (!nodes_[root].requires_grad) return grads;
  nodes_[root].grad.data[0] = 1.0;
  for (std::size_t i = root + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.op != OpKind::kParameter) propagate(n);
  }
  for (const Node& n : nodes_) {
    if (n.op != OpKind::kParameter || n.id > root) continue;
    auto [it, inserted] = grads.try_emplace(n.name, n.grad);
    if (!inserted) {
      for (std::size_t j = 0; j < it->second.size(); ++j) it->second[j] += n.grad[j];
    }
  }
  return grads;
}

void Graph::propagate(Node& n) {
  const std::vector<double>& g = n.grad.data;
  auto input = [&](std::size_t k) -> Node& { return nodes_[n.inputs[k]]; };

  // Accumulates d(out)/d(input k) * g into input k, summing when that input
  // was broadcast from a scalar.
  auto accumulate = [&](std::size_t k, auto&& local) {
    Node& in = input(k);
    if (!in.requires_grad) return;
    if (in.value.size() == 1 && g.size() != 1) {
      double s = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) s += local(i) * g[i];
      in.grad.data[0] += s;
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) in.grad.data[i] += local(i) * g[i];
    }
  };
  auto elem = [](const Tensor& t, std::size_t i) { return t.size() == 1 ? t[0] : t[i]; };

  switch (n.op) {
    case OpKind::kConstant:
    case OpKind::kParameter:
      break;
    case OpKind::kAdd:
      accumulate(0, [](std::size_t) { return 1.0; });
      accumulate(1, [](std::size_t) { return 1.0; });
      break;
    case OpKind::kSub:
      accumulate(0, [](std::size_t) { return 1.0; });
      accumulate(1, [](std::size_t) { return -1.0; });
      break;
    case OpKind::kMul: {
      const Tensor& a = input(0).value;
      const Tensor& b = input(1).value;
      accumulate(0, [&](std::size_t i) { return elem(b, i); });
      accumulate(1, [&](std::size_t i) { return elem(a, i); });
      break;
    }
    case OpKind::kDiv: {
      const Tensor& a = input(0).value;
      const Tensor& b = input(1).value;
      accumulate(0, [&](std::size_t i) { return 1.0 / elem(b, i); });
      accumulate(1, [&](std::size_t i) {
        const double bv = elem(b, i);
        return -elem(a, i) / (bv * bv);
      });
      break;
    }
    case OpKind::kElemMax:
    case OpKind::kElemMin: {
      const Tensor& a = input(0).value;
      const Tensor& b = input(1).value;
      const bool is_max = n.op == OpKind::kElemMax;
      accumulate(0, [&](std::size_t i) {
        const double av = elem(a, i), bv = elem(b, i);
        return (is_max ? av > bv : av < bv) ? 1.0 : 0.0;
      });
      accumulate(1, [&](std::size_t i) {
        const double av = elem(a, i), bv = elem(b, i);
        return (is_max ? bv > av : bv < av) ? 1.0 : 0.0;
      });
      break;
    }
    case OpKind::kMatMul: {
      Node& na = input(0);
      Node& nb = input(1);
      const Tensor& a = na.value;
      const Tensor& b = nb.value;
      const std::size_t m = a.shape[0], k = a.shape[1], cols = b.shape[1];
      if (na.requires_grad) {
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g.data() + i * cols;
          double* darow = na.grad.data.data() + i * k;
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b.data.data() + p * cols;
            double s = 0.0;
            for (std::size_t j = 0; j < cols; ++j) s += grow[j] * brow[j];
            darow[p] += s;
          }
        }
      }
      if (nb.requires_grad) {
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g.data() + i * cols;
          const double* arow = a.data.data() + i * k;
          for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* dbrow = nb.grad.data.data() + p * cols;
            for (std::size_t j = 0; j < cols; ++j) dbrow[j] += av * grow[j];
          }
        }
      }
      break;
    }
    case OpKind::kConcat: {
      if (n.shape.size() == 1 || n.axis == 0) {
        std::size_t off = 0;
        for (NodeId id : n.inputs) {
          Node& in = nodes_[id];
          const std::size_t sz = numel(in.shape);
          if (in.requires_grad) {
            for (std::size_t i = 0; i < sz; ++i) in.grad.data[i] += g[off + i];
          }
          off += sz;
        }
      } else {
        const std::size_t rows = n.shape[0], cols = n.shape[1];
        std::size_t col_off = 0;
        for (NodeId id : n.inputs) {
          Node& in = nodes_[id];
          const std::size_t c = in.shape[1];
          if (in.requires_grad) {
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t j = 0; j < c; ++j) {
                in.grad.data[r * c + j] += g[r * cols + col_off + j];
              }
            }
          }
          col_off += c;
        }
      }
      break;
    }
    case OpKind::kEmbedding: {
      Node& table = input(0);
      if (!table.requires_grad) break;
      const std::size_t d = table.shape[1];
      for (std::size_t r = 0; r < n.indices.size(); ++r) {
        double* dst = table.grad.data.data() + n.indices[r] * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += g[r * d + j];
      }
      break;
    }
    case OpKind::kTanh: {
      const Tensor& y = n.value;
      accumulate(0, [&](std::size_t i) { return 1.0 - y[i] * y[i]; });
      break;
    }
    case OpKind::kSigmoid: {
      const Tensor& y = n.value;
      accumulate(0, [&](std::size_t i) { return y[i] * (1.0 - y[i]); });
      break;
    }
    case OpKind::kExp: {
      const Tensor& y = n.value;
      accumulate(0, [&](std::size_t i) { return y[i]; });
      break;
    }
    case OpKind::kLog: {
      const Tensor& x = input(0).value;
      accumulate(0, [&](std::size_t i) { return 1.0 / x[i]; });
      break;
    }
    case OpKind::kMaxScalar: {
      const Tensor& x = input(0).value;
      accumulate(0, [&](std::size_t i) { return x[i] > n.scalar ? 1.0 : 0.0; });
      break;
    }
    case OpKind::kMinScalar: {
      const Tensor& x = input(0).value;
      accumulate(0, [&](std::size_t i) { return x[i] < n.scalar ? 1.0 : 0.0; });
      break;
    }
    case OpKind::kSoftmax:
    case OpKind::kLogSoftmax: {
      Node& in = input(0);
      if (!in.requires_grad) break;
      const Tensor& y = n.value;
      const std::size_t cols = cols_of(n.shape);
      const std::size_t rows = cols == 0 ? 0 : y.size() / cols;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yr = y.data.data() + r * cols;
        const double* gr = g.data() + r * cols;
        double* dr = in.grad.data.data() + r * cols;
        if (n.op == OpKind::kSoftmax) {
          double dot = 0.0;
          for (std::size_t j = 0; j < cols; ++j) dot += gr[j] * yr[j];
          for (std::size_t j = 0; j < cols; ++j) dr[j] += yr[j] * (gr[j] - dot);
        } else {
          double gs = 0.0;
          for (std::size_t j = 0; j < cols; ++j) gs += gr[j];
          for (std::size_t j = 0; j < cols; ++j) dr[j] += gr[j] - std::exp(yr[j]) * gs;
        }
      }
      break;
    }
    case OpKind::kReduceSum:
    case OpKind::kReduceMean: {
      Node& in = input(0);
      if (!in.requires_grad) break;
      const double scale =
          n.op == OpKind::kReduceSum ? g[0] : g[0] / static_cast<double>(in.value.size());
      for (double& v : in.grad.data) v += scale;
      break;
    }
    case OpKind::kGather: {
      Node& in = input(0);
      if (!in.requires_grad) break;
      const std::size_t cols = in.value.cols();
      for (std::size_t i = 0; i < n.positions.size(); ++i) {
        in.grad.data[n.positions[i].first * cols + n.positions[i].second] += g[i];
      }
      break;
    }
    case OpKind::kSliceRows: {
      Node& in = input(0);
      if (!in.requires_grad) break;
      const std::size_t off = n.begin * in.shape[1];
      for (std::size_t i = 0; i < g.size(); ++i) in.grad.data[off + i] += g[i];
      break;
    }
  }
}

double finite_diff_check(Graph& graph, const Bindings& bindings, NodeId root, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
  std::map<std::string, Tensor> owned;
  Bindings local;
  for (const std::string& name : graph.parameter_names()) {
    const Tensor* t = bindings.find(name);
    if (t == nullptr) throw std::invalid_argument("parameter '" + name + "' is not bound");
    owned[name] = *t;
  }
  for (auto& [name, t] : owned) local.bind(name, t);

  graph.forward(local);
  const Gradients analytic = graph.backward(root);

  double worst = 0.0;
  for (auto& [name, t] : owned) {
    const Tensor& ga = analytic.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      t[i] = saved + h;
      graph.forward(local);
      const double up = graph.value(root).item();
      t[i] = saved - h;
      graph.forward(local);
      const double down = graph.value(root).item();
      t[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(ga[i] - numeric) / std::max(1e-8, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  graph.forward(local);
  return worst;
}

}  // namespace dsi::ad
