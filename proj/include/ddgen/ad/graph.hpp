#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ddgen/ad/matrix.hpp"

namespace ddgen::ad {

/// A learned tensor: value plus gradient accumulator of the same shape.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Ordered, name-addressable set of parameters. References returned by add()
/// stay valid for the lifetime of the store.
class ParameterStore {
 public:
  Parameter& add(std::string name, Matrix init);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }

 private:
  std::deque<Parameter> params_;
};

class Graph;

/// Handle to a node recorded in a Graph.
class Var {
 public:
  Var() = default;

  bool valid() const { return graph_ != nullptr; }
  Graph* graph() const { return graph_; }
  std::uint32_t id() const { return id_; }

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Graph;
  Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Receives the output gradient; writes into the gradient slots of parents
/// that need one (null entries are parents that do not).
using BackwardFn = std::function<void(const Matrix& out_value, const Matrix& out_grad,
                                      std::span<Matrix* const> parent_grads)>;

/// Define-by-run tape. Recording order is a topological order, so backward
/// walks it in reverse and visits every node once, after all its consumers.
///
/// Leaf gradients (variables and parameters) accumulate additively across
/// backward calls; intermediate gradients are recomputed on every call.
/// A graph is single-writer.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Input that never receives a gradient.
  Var constant(Matrix value);
  /// Leaf whose gradient is readable through grad().
  Var variable(Matrix value);
  /// Leaf bound to a parameter; backward adds into param.grad.
  Var parameter(Parameter& param);

  /// Records an op. Used by the op library; `backward` may be empty when no
  /// parent needs a gradient.
  Var record(std::string_view op, Matrix value, std::initializer_list<Var> parents,
             BackwardFn backward);
  Var record(std::string_view op, Matrix value, std::span<const Var> parents,
             BackwardFn backward);

  bool needs_grad(Var v) const;
  const Matrix& value(Var v) const;
  /// Accumulated gradient of a variable leaf, or the last-backward gradient of
  /// any other node. Zero-shaped when the node never received one.
  const Matrix& grad(Var v) const;

  /// Seeds d(out)/d(out) = 1; `out` must be 1x1.
  void backward(Var out);
  void backward(Var out, const Matrix& seed);

  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  enum class Kind : std::uint8_t { kConstant, kVariable, kParameter, kOp };

  struct Node {
    Matrix value;
    Matrix grad;
    Matrix accum;  // variable leaves only
    std::vector<std::uint32_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    std::string_view op;
    Kind kind = Kind::kOp;
    bool needs_grad = false;
  };

  void check_owned(Var v, std::string_view what) const;
  Var push(Node node);

  std::vector<Node> nodes_;
};

}  // namespace ddgen::ad
