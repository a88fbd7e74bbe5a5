#include "dali/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "dali/errors.hpp"

namespace dali {

NodePtr make_op_node(Matrix value, std::vector<NodePtr> parents,
                     std::function<void(Node&)> rule) {
  bool req = false;
  for (const auto& p : parents) req = req || p->requires_grad;
  auto node = std::make_shared<Node>(std::move(value), req);
  if (req) {
    node->parents = std::move(parents);
    node->backward_rule = std::move(rule);
  }
  return node;
}

void accumulate_grad(Node& target, const Matrix& delta) {
  if (!target.requires_grad) return;
  if (target.grad.empty()) target.grad = Matrix(target.value.rows(), target.value.cols());
  for (std::size_t i = 0; i < delta.size(); ++i) target.grad.data()[i] += delta.data()[i];
}

namespace {

NodePtr make_op(Matrix value, std::vector<NodePtr> parents, std::function<void(Node&)> rule) {
  return make_op_node(std::move(value), std::move(parents), std::move(rule));
}

void accumulate(Node& target, const Matrix& delta) { accumulate_grad(target, delta); }

}  // namespace

NodePtr constant(Matrix v) {
  require_finite(v, "constant");
  return std::make_shared<Node>(std::move(v), false);
}

NodePtr leaf(Matrix v) {
  require_finite(v, "leaf");
  return std::make_shared<Node>(std::move(v), true);
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  Matrix value = matmul(a->value, b->value);
  return make_op(std::move(value), {a, b}, [](Node& n) {
    const Matrix& g = n.grad;
    accumulate(*n.parents[0], matmul(g, transpose(n.parents[1]->value)));
    accumulate(*n.parents[1], matmul(transpose(n.parents[0]->value), g));
  });
}

NodePtr transpose(const NodePtr& a) {
  return make_op(transpose(a->value), {a},
                 [](Node& n) { accumulate(*n.parents[0], transpose(n.grad)); });
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
  return make_op(add(a->value, b->value), {a, b}, [](Node& n) {
    accumulate(*n.parents[0], n.grad);
    accumulate(*n.parents[1], n.grad);
  });
}

NodePtr add_rowvec(const NodePtr& a, const NodePtr& row) {
  const Matrix& m = a->value;
  const Matrix& r = row->value;
  if (r.rows() != 1 || r.cols() != m.cols()) {
    throw DimensionError("add_rowvec: row must be 1x" + std::to_string(m.cols()));
  }
  Matrix value = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) value(i, j) += r(0, j);
  }
  require_finite(value, "add_rowvec");
  return make_op(std::move(value), {a, row}, [](Node& n) {
    accumulate(*n.parents[0], n.grad);
    Matrix rg(1, n.grad.cols());
    for (std::size_t i = 0; i < n.grad.rows(); ++i) {
      for (std::size_t j = 0; j < n.grad.cols(); ++j) rg(0, j) += n.grad(i, j);
    }
    accumulate(*n.parents[1], rg);
  });
}

NodePtr hadamard(const NodePtr& a, const NodePtr& b) {
  return make_op(hadamard(a->value, b->value), {a, b}, [](Node& n) {
    accumulate(*n.parents[0], hadamard(n.grad, n.parents[1]->value));
    accumulate(*n.parents[1], hadamard(n.grad, n.parents[0]->value));
  });
}

NodePtr scale(const NodePtr& a, double s) {
  return make_op(scale(a->value, s), {a},
                 [s](Node& n) { accumulate(*n.parents[0], scale(n.grad, s)); });
}

NodePtr relu(const NodePtr& a) {
  return make_op(relu(a->value), {a}, [](Node& n) {
    Matrix g = n.grad;
    const Matrix& x = n.parents[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x.data()[i] <= 0.0) g.data()[i] = 0.0;
    }
    accumulate(*n.parents[0], g);
  });
}

NodePtr reduce_sum(const NodePtr& a) {
  Matrix value(1, 1, sum(a->value));
  require_finite(value, "reduce_sum");
  return make_op(std::move(value), {a}, [](Node& n) {
    const double g = n.grad(0, 0);
    Matrix d(n.parents[0]->value.rows(), n.parents[0]->value.cols(), g);
    accumulate(*n.parents[0], d);
  });
}

NodePtr mean_axis(const NodePtr& a, Axis reduced) {
  if (a->value.empty()) throw DimensionError("mean_axis: empty matrix");
  if (reduced == Axis::cols) {
    return make_op(rowwise_mean(a->value), {a}, [](Node& n) {
      const Matrix& src = n.parents[0]->value;
      Matrix d(src.rows(), src.cols());
      const double inv = 1.0 / static_cast<double>(src.cols());
      for (std::size_t i = 0; i < src.rows(); ++i) {
        for (std::size_t j = 0; j < src.cols(); ++j) d(i, j) = n.grad(i, 0) * inv;
      }
      accumulate(*n.parents[0], d);
    });
  }
  return make_op(colwise_mean(a->value), {a}, [](Node& n) {
    const Matrix& src = n.parents[0]->value;
    Matrix d(src.rows(), src.cols());
    const double inv = 1.0 / static_cast<double>(src.rows());
    for (std::size_t i = 0; i < src.rows(); ++i) {
      for (std::size_t j = 0; j < src.cols(); ++j) d(i, j) = n.grad(0, j) * inv;
    }
    accumulate(*n.parents[0], d);
  });
}

namespace {

// Writes softmax(x_row / tau) into out_row; max-subtraction for stability.
void softmax_row(const Matrix& x, std::size_t row, double tau, Matrix& out) {
  double mx = x(row, 0) / tau;
  for (std::size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, x(row, j) / tau);
  double z = 0.0;
  for (std::size_t j = 0; j < x.cols(); ++j) {
    const double e = std::exp(x(row, j) / tau - mx);
    out(row, j) = e;
    z += e;
  }
  for (std::size_t j = 0; j < x.cols(); ++j) out(row, j) /= z;
}

// dL/dx_j = y_j * (g_j - sum_k g_k y_k) / tau for one row.
void softmax_row_backward(const Matrix& y, const Matrix& g, std::size_t row, double tau,
                          Matrix& dx) {
  double dot = 0.0;
  for (std::size_t j = 0; j < y.cols(); ++j) dot += g(row, j) * y(row, j);
  for (std::size_t j = 0; j < y.cols(); ++j) {
    dx(row, j) = y(row, j) * (g(row, j) - dot) / tau;
  }
}

}  // namespace

NodePtr softmax_temp(const NodePtr& x, double tau) {
  if (tau <= 0.0) throw ParameterError("softmax_temp: tau must be positive");
  const Matrix& v = x->value;
  if (v.rows() != 1 || v.cols() == 0) {
    throw DimensionError("softmax_temp: expected a nonempty 1xn row");
  }
  Matrix value(1, v.cols());
  softmax_row(v, 0, tau, value);
  return make_op(std::move(value), {x}, [tau](Node& n) {
    Matrix dx(1, n.value.cols());
    softmax_row_backward(n.value, n.grad, 0, tau, dx);
    accumulate(*n.parents[0], dx);
  });
}

NodePtr row_softmax(const NodePtr& a) {
  const Matrix& v = a->value;
  if (v.empty()) throw DimensionError("row_softmax: empty matrix");
  Matrix value(v.rows(), v.cols());
  for (std::size_t i = 0; i < v.rows(); ++i) softmax_row(v, i, 1.0, value);
  return make_op(std::move(value), {a}, [](Node& n) {
    Matrix dx(n.value.rows(), n.value.cols());
    for (std::size_t i = 0; i < n.value.rows(); ++i) {
      softmax_row_backward(n.value, n.grad, i, 1.0, dx);
    }
    accumulate(*n.parents[0], dx);
  });
}

NodePtr concat_rows(const std::vector<NodePtr>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no parts");
  const std::size_t cols = parts[0]->value.cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p->value.cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += p->value.rows();
  }
  Matrix value(rows, cols);
  std::size_t at = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p->value.rows(); ++i, ++at) {
      for (std::size_t j = 0; j < cols; ++j) value(at, j) = p->value(i, j);
    }
  }
  return make_op(std::move(value), parts, [](Node& n) {
    std::size_t at = 0;
    for (auto& parent : n.parents) {
      Matrix d(parent->value.rows(), parent->value.cols());
      for (std::size_t i = 0; i < d.rows(); ++i, ++at) {
        for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) = n.grad(at, j);
      }
      accumulate(*parent, d);
    }
  });
}

void backward(const NodePtr& root) {
  if (root->value.rows() != 1 || root->value.cols() != 1) {
    throw ContractError("backward: root must be scalar");
  }
  // Iterative post-order DFS; reversing it yields a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->grad = Matrix(n->value.rows(), n->value.cols());
  root->grad(0, 0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backward_rule) n->backward_rule(*n);
  }
}

double grad_check(const std::function<NodePtr(const NodePtr&)>& f, const Matrix& point,
                  double eps) {
  if (eps <= 0.0) throw ParameterError("grad_check: eps must be positive");
  auto x = leaf(point);
  auto y = f(x);
  if (y->value.rows() != 1 || y->value.cols() != 1) {
    throw ContractError("grad_check: function output must be scalar");
  }
  backward(y);
  const Matrix autograd = x->grad;

  auto eval = [&f](const Matrix& p) {
    auto out = f(constant(p));
    if (out->value.rows() != 1 || out->value.cols() != 1) {
      throw ContractError("grad_check: function output must be scalar");
    }
    return out->value(0, 0);
  };

  double worst = 0.0;
  Matrix probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double x0 = point.data()[i];
    const double h = eps * std::max(1.0, std::abs(x0));
    probe.data()[i] = x0 + h;
    const double fp = eval(probe);
    probe.data()[i] = x0 - h;
    const double fm = eval(probe);
    probe.data()[i] = x0;
    const double fd = (fp - fm) / (2.0 * h);
    const double rel = std::abs(autograd.data()[i] - fd) / std::max(1.0, std::abs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace dali
