// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace gdistill {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

namespace ad {

/// Dense row-major array of doubles of rank 1 or 2. A rank-1 tensor of
/// length n is viewed as a 1 x n matrix.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);

  static Tensor from_matrix(const Matrix& m);
  static Tensor vector(std::span<const double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  Eigen::Map<Matrix> matrix();
  Eigen::Map<const Matrix> matrix() const;

  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  // aligned storage keeps Eigen on the same vector path for every buffer
  std::vector<double, Eigen::aligned_allocator<double>> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// Named parameters with a gradient slot of the same shape for each.
/// Iteration order is lexicographic by name.
class ParamStore {
 public:
  struct Slot {
    Tensor value;
    Tensor grad;
  };

  void add(const std::string& name, Tensor value);
  bool contains(std::string_view name) const;

  const Tensor& value(std::string_view name) const;
  /// Mutable access counts as a mutation and invalidates outstanding tapes.
  Tensor& mutable_value(std::string_view name);

  const Tensor& grad(std::string_view name) const;
  Tensor& grad(std::string_view name);

  std::vector<std::string> names() const;
  std::size_t size() const { return slots_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  std::uint64_t version() const { return version_; }
  void touch() { ++version_; }

  const std::map<std::string, Slot, std::less<>>& slots() const { return slots_; }
  std::map<std::string, Slot, std::less<>>& mutable_slots() {
    ++version_;
    return slots_;
  }

 private:
  Slot& slot(std::string_view name);
  const Slot& slot(std::string_view name) const;

  std::map<std::string, Slot, std::less<>> slots_;
  std::uint64_t version_ = 0;
};

using NodeId = std::size_t;

enum class Op {
  Input,
  Param,
  MatMul,
  Add,
  Sub,
  AddBias,
  RowScale,
  Scale,
  Silu,
  Tanh,
  Concat,
  WeightedSquaredError,
};

struct Node {
  Op op;
  std::vector<NodeId> inputs;
  std::string name;  // Input / Param only
  double constant = 0.0;  // Scale only
};

/// Static computation DAG. Nodes can only reference earlier nodes, so
/// insertion order is a topological order.
class Graph {
 public:
  NodeId input(const std::string& name);
  NodeId param(const std::string& name);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  /// x + bias broadcast over rows; bias is 1 x cols.
  NodeId add_bias(NodeId x, NodeId bias);
  /// out[i, :] = s[i] * x[i, :], s is rows x 1.
  NodeId row_scale(NodeId x, NodeId s);
  NodeId scale(NodeId x, double c);
  NodeId silu(NodeId x);
  NodeId tanh(NodeId x);
  /// Column-wise concatenation.
  NodeId concat(const std::vector<NodeId>& parts);
  /// sum_i weight[i] * ||pred[i, :] - target[i, :]||^2 as a 1 x 1 tensor.
  NodeId weighted_sse(NodeId pred, NodeId target, NodeId weight);

  void set_output(const std::string& name, NodeId node);
  NodeId output(std::string_view name) const;
  const std::map<std::string, NodeId, std::less<>>& outputs() const { return outputs_; }

  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  NodeId push(Node node);

  std::vector<Node> nodes_;
  std::map<std::string, NodeId, std::less<>> outputs_;
};

using Feed = std::map<std::string, Tensor, std::less<>>;

/// Values of every node from one forward pass, plus the parameter version
/// they were computed against.
class Tape {
 public:
  Tape() = default;
  Tape(const Graph* graph, std::vector<Tensor> values, std::uint64_t param_version)
      : graph_(graph), values_(std::move(values)), param_version_(param_version) {}

  const Graph& graph() const { return *graph_; }
  const Tensor& value(NodeId node) const { return values_.at(node); }
  std::uint64_t param_version() const { return param_version_; }

 private:
  const Graph* graph_ = nullptr;
  std::vector<Tensor> values_;
  std::uint64_t param_version_ = 0;
};

struct ForwardResult {
  std::map<std::string, Tensor, std::less<>> outputs;
  Tape tape;
};

/// Evaluates every node once. Throws on shape mismatch or any non-finite
/// intermediate.
ForwardResult forward(const Graph& graph, const Feed& inputs, const ParamStore& params);

/// Reverse-mode pass from `output`, accumulating into the parameter gradient
/// slots. The tape must have been produced against the current parameter
/// version.
void backward(const Tape& tape, std::string_view output, const Tensor& seed,
              ParamStore& params);

/// Convenience for a 1 x 1 output: seed 1.
void backward(const Tape& tape, std::string_view output, ParamStore& params);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  /// One bias-corrected Adam update. Returns false and leaves parameters and
  /// moments untouched if any gradient is non-finite.
  bool step(ParamStore& params, double lr);

  long steps() const { return steps_; }
  const Tensor& first_moment(std::string_view name) const;
  const Tensor& second_moment(std::string_view name) const;

 private:
  AdamOptions options_;
  long steps_ = 0;
  std::map<std::string, Tensor, std::less<>> m_;
  std::map<std::string, Tensor, std::less<>> v_;
};

}  // namespace ad
}  // namespace gdistill
