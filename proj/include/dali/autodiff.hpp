#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dali/matrix.hpp"

namespace dali {

class Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of a reverse-mode differentiation DAG. Forward values are
// computed eagerly when an op builds its node; backward() later seeds a
// scalar root and walks the graph once in reverse topological order, so each
// node's contribution is accumulated into its parents exactly once.
class Node {
 public:
  Node(Matrix v, bool req) : value(std::move(v)), requires_grad(req) {}

  Matrix value;
  Matrix grad;  // allocated by backward(); same shape as value
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  // Reads this node's value/grad, accumulates into parents' grads.
  std::function<void(Node&)> backward_rule;
};

NodePtr constant(Matrix v);  // no gradient flows into it
NodePtr leaf(Matrix v);      // gradient target

enum class Axis { rows, cols };

NodePtr matmul(const NodePtr& a, const NodePtr& b);
NodePtr transpose(const NodePtr& a);
NodePtr add(const NodePtr& a, const NodePtr& b);
// a: n x m plus a broadcast 1 x m row.
NodePtr add_rowvec(const NodePtr& a, const NodePtr& row);
NodePtr hadamard(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& a, double s);
NodePtr relu(const NodePtr& a);
NodePtr reduce_sum(const NodePtr& a);  // 1 x 1
// Mean over the named axis: reducing cols maps n x m -> n x 1, reducing rows
// maps n x m -> 1 x m.
NodePtr mean_axis(const NodePtr& a, Axis reduced);
// Probability vector over a 1 x n row; max-subtraction keeps exp in range.
NodePtr softmax_temp(const NodePtr& x, double tau);
// Independent temperature-1 softmax per row of an n x m matrix.
NodePtr row_softmax(const NodePtr& a);
// Stacks parts (all with equal column counts) vertically.
NodePtr concat_rows(const std::vector<NodePtr>& parts);

// Extension point for fused ops with analytic backward rules: wires value,
// parents and rule into a node, dropping both when no parent needs grads.
NodePtr make_op_node(Matrix value, std::vector<NodePtr> parents,
                     std::function<void(Node&)> rule);
// Adds delta into target's grad (allocating it on first touch); no-op for
// nodes that do not require gradients.
void accumulate_grad(Node& target, const Matrix& delta);

// Seeds d(root)/d(root) = 1 and accumulates gradients of every reachable
// node. The root must be scalar (1 x 1).
void backward(const NodePtr& root);

// Compares the autodiff gradient of a scalar function against central finite
// differences with per-coordinate step eps * max(1, |x_i|). Returns the max
// over coordinates of |ad - fd| / max(1, |fd|).
double grad_check(const std::function<NodePtr(const NodePtr&)>& f, const Matrix& point,
                  double eps = 1e-5);

}  // namespace dali
