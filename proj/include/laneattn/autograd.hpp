#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "laneattn/tensor.hpp"

namespace laneattn::diff {

class Tape;

/// One recorded operation (or leaf) of a compute graph.
struct Node {
  Tensor value;
  Tensor grad;
  std::function<void(const Node&)> backprop;  // accumulates into parent grads
  std::string param_name;                     // non-empty for parameter leaves
};

/// Lightweight handle to a node owned by a Tape.
struct Var {
  Node* node = nullptr;
  Tape* tape = nullptr;

  const Tensor& value() const { return node->value; }
  const Tensor& grad() const { return node->grad; }
  const std::vector<int>& shape() const { return node->value.shape(); }
};

/// Dynamic compute graph: nodes are appended in execution order, so creation
/// order is a valid topological order. One tape per forward/backward pass.
class Tape {
 public:
  Var constant(Tensor v);
  Var param(const std::string& name, const Tensor& v);

  /// Reverse-mode sweep from a scalar output. Populates grad for every node.
  void backward(const Var& out);

  const Tensor& grad_of(const std::string& name) const;
  std::map<std::string, Tensor> gradients() const;
  size_t num_nodes() const { return nodes_.size(); }

  Var make(Tensor v);  // used by op implementations

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
  std::map<std::string, Node*> params_;
};

// Primitive operations. All gradients are accumulated (+=) so a node may feed
// several consumers.
Var matmul(Var a, Var b);              // [m,k] x [k,n] -> [m,n]
Var matvec(Var a, Var x);              // [m,k] x [k]   -> [m]
Var add(Var a, Var b);                 // same shape
Var sub(Var a, Var b);
Var mul(Var a, Var b);                 // elementwise
Var div(Var a, Var b);                 // elementwise
Var add_scalar(Var a, double c);
Var mul_scalar(Var a, double c);
Var smul(Var s, Var v);                // scalar [1] times tensor
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var clamp(Var a, double lo, double hi);
Var concat(const std::vector<Var>& parts);        // rank-1 inputs
Var slice(Var a, int offset, int len);            // rank-1 contiguous range
Var sum(Var a);                                   // -> [1]
Var dot(Var a, Var b);                            // rank-1 -> [1]
Var softmax(Var logits);                          // rank-1, max-subtracted
Var max_pool_rows(Var a);                         // [c,L] -> [c]; tie -> lowest index
Var mean_pool_rows(Var a);                        // [c,L] -> [c]
Var conv1d(Var input, Var kernels, Var bias);     // [ci,L], [co,ci,k], [co] -> [co,L-k+1]

/// Standard LSTM cell. Weight layout: wx [4h, d_in], wh [4h, h], b [4h],
/// gate order (input, forget, candidate, output). Returns (hidden', cell').
std::pair<Var, Var> lstm_step(Var x, Var hidden, Var cell, Var wx, Var wh, Var b);

}  // namespace laneattn::diff
