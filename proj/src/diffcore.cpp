// SPDX-License-Identifier: Apache-2.0
#include "gdistill/diffcore.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "gdistill/error.hpp"

namespace gdistill::ad {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {
  require(shape_.size() <= 2, "tensors are limited to rank 2");
}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : Tensor(std::vector<std::size_t>{rows, cols}, fill) {}

Tensor Tensor::from_matrix(const Matrix& m) {
  Tensor t(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  t.matrix() = m;
  return t;
}

Tensor Tensor::vector(std::span<const double> values) {
  Tensor t(std::vector<std::size_t>{values.size()});
  std::copy(values.begin(), values.end(), t.data_.begin());
  return t;
}

std::size_t Tensor::rows() const {
  return shape_.size() == 2 ? shape_[0] : 1;
}

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 1;
  return shape_.back();
}

Eigen::Map<Matrix> Tensor::matrix() {
  return {data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
}

Eigen::Map<const Matrix> Tensor::matrix() const {
  return {data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

// ---------------------------------------------------------------- ParamStore

void ParamStore::add(const std::string& name, Tensor value) {
  require(!slots_.contains(name), "duplicate parameter name '" + name + "'");
  Tensor grad(value.shape());
  slots_.emplace(name, Slot{std::move(value), std::move(grad)});
  ++version_;
}

bool ParamStore::contains(std::string_view name) const {
  return slots_.find(name) != slots_.end();
}

ParamStore::Slot& ParamStore::slot(std::string_view name) {
  auto it = slots_.find(name);
  require(it != slots_.end(), "unknown parameter '" + std::string(name) + "'");
  return it->second;
}

const ParamStore::Slot& ParamStore::slot(std::string_view name) const {
  auto it = slots_.find(name);
  require(it != slots_.end(), "unknown parameter '" + std::string(name) + "'");
  return it->second;
}

const Tensor& ParamStore::value(std::string_view name) const { return slot(name).value; }

Tensor& ParamStore::mutable_value(std::string_view name) {
  ++version_;
  return slot(name).value;
}

const Tensor& ParamStore::grad(std::string_view name) const { return slot(name).grad; }
Tensor& ParamStore::grad(std::string_view name) { return slot(name).grad; }

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(slots_.size());
  for (const auto& [name, _] : slots_) out.push_back(name);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, s] : slots_) n += s.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, s] : slots_) std::fill(s.grad.data().begin(), s.grad.data().end(), 0.0);
}

// --------------------------------------------------------------------- Graph

NodeId Graph::push(Node node) {
  for (NodeId in : node.inputs) {
    require(in < nodes_.size(), "graph node references a later node");
  }
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Graph::input(const std::string& name) { return push({Op::Input, {}, name}); }
NodeId Graph::param(const std::string& name) { return push({Op::Param, {}, name}); }
NodeId Graph::matmul(NodeId a, NodeId b) { return push({Op::MatMul, {a, b}, {}}); }
NodeId Graph::add(NodeId a, NodeId b) { return push({Op::Add, {a, b}, {}}); }
NodeId Graph::sub(NodeId a, NodeId b) { return push({Op::Sub, {a, b}, {}}); }
NodeId Graph::add_bias(NodeId x, NodeId bias) { return push({Op::AddBias, {x, bias}, {}}); }
NodeId Graph::row_scale(NodeId x, NodeId s) { return push({Op::RowScale, {x, s}, {}}); }
NodeId Graph::scale(NodeId x, double c) { return push({Op::Scale, {x}, {}, c}); }
NodeId Graph::silu(NodeId x) { return push({Op::Silu, {x}, {}}); }
NodeId Graph::tanh(NodeId x) { return push({Op::Tanh, {x}, {}}); }

NodeId Graph::concat(const std::vector<NodeId>& parts) {
  require(!parts.empty(), "concat needs at least one input");
  return push({Op::Concat, parts, {}});
}

NodeId Graph::weighted_sse(NodeId pred, NodeId target, NodeId weight) {
  return push({Op::WeightedSquaredError, {pred, target, weight}, {}});
}

void Graph::set_output(const std::string& name, NodeId node) {
  require(node < nodes_.size(), "output references an unknown node");
  outputs_[name] = node;
}

NodeId Graph::output(std::string_view name) const {
  auto it = outputs_.find(name);
  require(it != outputs_.end(), "graph has no output '" + std::string(name) + "'");
  return it->second;
}

// ------------------------------------------------------------------- forward

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  fail(ErrorCode::InvalidArgument, std::string("shape mismatch in ") + op + ": " +
                                       shape_string(a.shape()) + " vs " +
                                       shape_string(b.shape()));
}

bool same_matrix_shape(const Tensor& a, const Tensor& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

Tensor evaluate(const Node& node, const std::vector<Tensor>& values) {
  auto in = [&](std::size_t i) -> const Tensor& { return values[node.inputs[i]]; };
  switch (node.op) {
    case Op::Input:
    case Op::Param:
      break;
    case Op::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.cols() != b.rows()) shape_error("matmul", a, b);
      Tensor out(a.rows(), b.cols());
      out.matrix().noalias() = a.matrix() * b.matrix();
      return out;
    }
    case Op::Add:
    case Op::Sub: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (!same_matrix_shape(a, b)) shape_error(node.op == Op::Add ? "add" : "sub", a, b);
      Tensor out(a.rows(), a.cols());
      if (node.op == Op::Add) {
        out.matrix() = a.matrix() + b.matrix();
      } else {
        out.matrix() = a.matrix() - b.matrix();
      }
      return out;
    }
    case Op::AddBias: {
      const Tensor& x = in(0);
      const Tensor& b = in(1);
      if (b.rows() != 1 || b.cols() != x.cols()) shape_error("add_bias", x, b);
      Tensor out(x.rows(), x.cols());
      out.matrix() = x.matrix().rowwise() + b.matrix().row(0);
      return out;
    }
    case Op::RowScale: {
      const Tensor& x = in(0);
      const Tensor& s = in(1);
      if (s.cols() != 1 || s.rows() != x.rows()) shape_error("row_scale", x, s);
      Tensor out(x.rows(), x.cols());
      out.matrix() = s.matrix().col(0).asDiagonal() * x.matrix();
      return out;
    }
    case Op::Scale: {
      Tensor out(in(0).rows(), in(0).cols());
      out.matrix() = node.constant * in(0).matrix();
      return out;
    }
    case Op::Silu: {
      Tensor out(in(0).rows(), in(0).cols());
      out.matrix() = in(0).matrix().unaryExpr([](double v) { return v * sigmoid(v); });
      return out;
    }
    case Op::Tanh: {
      Tensor out(in(0).rows(), in(0).cols());
      out.matrix() = in(0).matrix().array().tanh().matrix();
      return out;
    }
    case Op::Concat: {
      std::size_t rows = in(0).rows();
      std::size_t cols = 0;
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        if (in(i).rows() != rows) shape_error("concat", in(0), in(i));
        cols += in(i).cols();
      }
      Tensor out(rows, cols);
      Eigen::Index offset = 0;
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(in(i).cols());
        out.matrix().middleCols(offset, c) = in(i).matrix();
        offset += c;
      }
      return out;
    }
    case Op::WeightedSquaredError: {
      const Tensor& p = in(0);
      const Tensor& t = in(1);
      const Tensor& w = in(2);
      if (!same_matrix_shape(p, t)) shape_error("weighted_sse", p, t);
      if (w.cols() != 1 || w.rows() != p.rows()) shape_error("weighted_sse", p, w);
      Tensor out(1, 1);
      out.data()[0] = w.matrix().col(0).dot((p.matrix() - t.matrix()).rowwise().squaredNorm());
      return out;
    }
  }
  fail(ErrorCode::Internal, "unhandled graph op");
}

}  // namespace

ForwardResult forward(const Graph& graph, const Feed& inputs, const ParamStore& params) {
  const auto& nodes = graph.nodes();
  std::vector<Tensor> values(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& node = nodes[i];
    if (node.op == Op::Input) {
      auto it = inputs.find(node.name);
      require(it != inputs.end(), "missing graph input '" + node.name + "'");
      values[i] = it->second;
    } else if (node.op == Op::Param) {
      values[i] = params.value(node.name);
    } else {
      values[i] = evaluate(node, values);
    }
    if (!values[i].all_finite()) {
      fail(ErrorCode::Numeric, "non-finite value at graph node " + std::to_string(i));
    }
  }
  ForwardResult result;
  for (const auto& [name, id] : graph.outputs()) result.outputs.emplace(name, values[id]);
  result.tape = Tape(&graph, std::move(values), params.version());
  return result;
}

// ------------------------------------------------------------------ backward

void backward(const Tape& tape, std::string_view output, const Tensor& seed,
              ParamStore& params) {
  if (tape.param_version() != params.version()) {
    fail(ErrorCode::InvalidArgument, "tape was recorded before the last parameter mutation");
  }
  const Graph& graph = tape.graph();
  const auto& nodes = graph.nodes();
  const NodeId root = graph.output(output);
  const Tensor& root_value = tape.value(root);
  if (root_value.rows() != seed.rows() || root_value.cols() != seed.cols()) {
    shape_error("backward seed", root_value, seed);
  }

  std::vector<Matrix> grads(nodes.size());
  std::vector<bool> live(nodes.size(), false);
  grads[root] = seed.matrix();
  live[root] = true;

  auto accumulate = [&](NodeId id, const auto& g) {
    if (live[id]) {
      grads[id] += g;
    } else {
      grads[id] = g;
      live[id] = true;
    }
  };

  for (NodeId id = root + 1; id-- > 0;) {
    if (!live[id]) continue;
    const Node& node = nodes[id];
    const Matrix& g = grads[id];
    auto value = [&](std::size_t i) { return tape.value(node.inputs[i]).matrix(); };

    switch (node.op) {
      case Op::Input:
        break;
      case Op::Param: {
        params.grad(node.name).matrix() += g;
        break;
      }
      case Op::MatMul: {
        accumulate(node.inputs[0], (g * value(1).transpose()).eval());
        accumulate(node.inputs[1], (value(0).transpose() * g).eval());
        break;
      }
      case Op::Add:
        accumulate(node.inputs[0], g);
        accumulate(node.inputs[1], g);
        break;
      case Op::Sub:
        accumulate(node.inputs[0], g);
        accumulate(node.inputs[1], (-g).eval());
        break;
      case Op::AddBias:
        accumulate(node.inputs[0], g);
        accumulate(node.inputs[1], Matrix(g.colwise().sum()));
        break;
      case Op::RowScale: {
        const auto x = value(0);
        const auto s = value(1);
        accumulate(node.inputs[0], (s.col(0).asDiagonal() * g).eval());
        accumulate(node.inputs[1], Matrix(x.cwiseProduct(g).rowwise().sum()));
        break;
      }
      case Op::Scale:
        accumulate(node.inputs[0], (node.constant * g).eval());
        break;
      case Op::Silu: {
        const auto x = value(0);
        Matrix d = x.unaryExpr([](double v) {
          const double s = sigmoid(v);
          return s * (1.0 + v * (1.0 - s));
        });
        accumulate(node.inputs[0], d.cwiseProduct(g).eval());
        break;
      }
      case Op::Tanh: {
        const auto y = tape.value(id).matrix();
        Matrix d = (1.0 - y.array().square()).matrix();
        accumulate(node.inputs[0], d.cwiseProduct(g).eval());
        break;
      }
      case Op::Concat: {
        Eigen::Index offset = 0;
        for (NodeId in : node.inputs) {
          const auto c = static_cast<Eigen::Index>(tape.value(in).cols());
          accumulate(in, Matrix(g.middleCols(offset, c)));
          offset += c;
        }
        break;
      }
      case Op::WeightedSquaredError: {
        const double scale = g(0, 0);
        Matrix diff = value(0) - value(1);
        const auto w = value(2);
        Matrix dp = (2.0 * scale) * (w.col(0).asDiagonal() * diff);
        accumulate(node.inputs[1], (-dp).eval());
        accumulate(node.inputs[0], dp);
        accumulate(node.inputs[2], Matrix(scale * diff.rowwise().squaredNorm()));
        break;
      }
    }
  }
}

void backward(const Tape& tape, std::string_view output, ParamStore& params) {
  backward(tape, output, Tensor(1, 1, 1.0), params);
}

// ---------------------------------------------------------------------- Adam

bool Adam::step(ParamStore& params, double lr) {
  for (const auto& [_, slot] : params.slots()) {
    if (!slot.grad.all_finite()) return false;
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (auto& [name, slot] : params.mutable_slots()) {
    auto [mit, inserted_m] = m_.try_emplace(name, Tensor(slot.value.shape()));
    auto [vit, inserted_v] = v_.try_emplace(name, Tensor(slot.value.shape()));
    auto m = mit->second.matrix();
    auto v = vit->second.matrix();
    const auto g = slot.grad.matrix();
    m = options_.beta1 * m + (1.0 - options_.beta1) * g;
    v = options_.beta2 * v + (1.0 - options_.beta2) * g.cwiseAbs2();
    auto p = slot.value.matrix();
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + options_.epsilon);
  }
  return true;
}

const Tensor& Adam::first_moment(std::string_view name) const {
  auto it = m_.find(name);
  require(it != m_.end(), "no Adam state for '" + std::string(name) + "'");
  return it->second;
}

const Tensor& Adam::second_moment(std::string_view name) const {
  auto it = v_.find(name);
  require(it != v_.end(), "no Adam state for '" + std::string(name) + "'");
  return it->second;
}

}  // namespace gdistill::ad
