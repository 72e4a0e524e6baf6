#include "ddgen/ad/graph.hpp"

#include <algorithm>
#include <stdexcept>

namespace ddgen::ad {

Parameter& ParameterStore::add(std::string name, Matrix init) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter: " + name);
  Matrix grad(init.rows(), init.cols());
  params_.push_back(Parameter{std::move(name), std::move(init), std::move(grad)});
  return params_.back();
}

Parameter* ParameterStore::find(std::string_view name) {
  auto it = std::find_if(params_.begin(), params_.end(),
                         [&](const Parameter& p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  auto it = std::find_if(params_.begin(), params_.end(),
                         [&](const Parameter& p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

Parameter& ParameterStore::get(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

const Parameter& ParameterStore::get(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

const Matrix& Var::value() const {
  if (graph_ == nullptr) throw std::logic_error("Var::value: unbound variable");
  return graph_->value(*this);
}

void Graph::check_owned(Var v, std::string_view what) const {
  if (v.graph_ != this || v.id_ >= nodes_.size()) {
    throw std::logic_error(std::string(what) + ": variable does not belong to this graph");
  }
}

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.kind = Kind::kConstant;
  n.op = "constant";
  return push(std::move(n));
}

Var Graph::variable(Matrix value) {
  Node n;
  n.accum = Matrix(value.rows(), value.cols());
  n.value = std::move(value);
  n.kind = Kind::kVariable;
  n.needs_grad = true;
  n.op = "variable";
  return push(std::move(n));
}

Var Graph::parameter(Parameter& param) {
  Node n;
  n.value = param.value;
  n.param = &param;
  n.kind = Kind::kParameter;
  n.needs_grad = true;
  n.op = "parameter";
  return push(std::move(n));
}

Var Graph::record(std::string_view op, Matrix value, std::initializer_list<Var> parents,
                  BackwardFn backward) {
  return record(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Graph::record(std::string_view op, Matrix value, std::span<const Var> parents,
                  BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.parents.reserve(parents.size());
  for (const Var& p : parents) {
    check_owned(p, op);
    n.parents.push_back(p.id_);
    n.needs_grad = n.needs_grad || nodes_[p.id_].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

bool Graph::needs_grad(Var v) const {
  check_owned(v, "needs_grad");
  return nodes_[v.id_].needs_grad;
}

const Matrix& Graph::value(Var v) const {
  check_owned(v, "value");
  return nodes_[v.id_].value;
}

const Matrix& Graph::grad(Var v) const {
  check_owned(v, "grad");
  const Node& n = nodes_[v.id_];
  return n.kind == Kind::kVariable ? n.accum : n.grad;
}

void Graph::backward(Var out) {
  check_owned(out, "backward");
  if (nodes_[out.id_].value.size() != 1) {
    throw ShapeError("backward: implicit seed requires a 1x1 output, got " +
                     nodes_[out.id_].value.shape_string());
  }
  backward(out, Matrix(1, 1, 1.0));
}

void Graph::backward(Var out, const Matrix& seed) {
  if (nodes_.empty() || out.graph_ != this) {
    throw std::logic_error("backward: no forward evaluation recorded for this output");
  }
  check_owned(out, "backward");
  Node& root = nodes_[out.id_];
  if (!seed.same_shape(root.value)) {
    throw ShapeError("backward: seed " + seed.shape_string() + " does not match output " +
                     root.value.shape_string());
  }
  for (std::uint32_t i = 0; i <= out.id_; ++i) {
    Node& n = nodes_[i];
    if (!n.needs_grad) continue;
    if (n.grad.same_shape(n.value)) {
      n.grad.fill(0.0);
    } else {
      n.grad = Matrix(n.value.rows(), n.value.cols());
    }
  }
  if (!root.needs_grad) return;
  for (std::size_t i = 0; i < seed.size(); ++i) root.grad[i] += seed[i];

  std::vector<Matrix*> parent_grads;
  for (std::uint32_t i = out.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad) continue;
    switch (n.kind) {
      case Kind::kVariable:
        for (std::size_t k = 0; k < n.grad.size(); ++k) n.accum[k] += n.grad[k];
        break;
      case Kind::kParameter:
        for (std::size_t k = 0; k < n.grad.size(); ++k) n.param->grad[k] += n.grad[k];
        break;
      case Kind::kOp: {
        if (!n.backward) break;
        parent_grads.clear();
        for (std::uint32_t p : n.parents) {
          Node& pn = nodes_[p];
          parent_grads.push_back(pn.needs_grad ? &pn.grad : nullptr);
        }
        n.backward(n.value, n.grad, parent_grads);
        break;
      }
      case Kind::kConstant:
        break;
    }
  }
}

void Graph::clear() { nodes_.clear(); }

}  // namespace ddgen::ad
