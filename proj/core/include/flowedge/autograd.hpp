#pragma once

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowedge/param_store.hpp"
#include "flowedge/tensor.hpp"

namespace flowedge {

class Graph;

// Handle to a node recorded on a Graph tape.
struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

struct GradResult {
    std::map<std::string, Tensor> grads;  // every trainable parameter of the store
    // Trainable parameters with no path to the loss. Their entry in `grads` is zero.
    std::vector<std::string> disconnected;
};

// Tape-based reverse-mode differentiation. Nodes are appended in creation order,
// so reverse iteration over the tape is a valid topological order.
class Graph {
public:
    // With track_grad=false every node is treated as a constant (inference mode).
    explicit Graph(const ParamStore* params = nullptr, bool track_grad = true)
        : params_(params), track_grad_(track_grad) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    // Leaf bound to a stored parameter; needs gradient iff the parameter is trainable.
    Var param(const std::string& name);

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
    // Gradient of the last backward() loss with respect to v (zero tensor if none reached it).
    Tensor grad_of(Var v) const;

    // Runs reverse accumulation from a scalar loss.
    GradResult backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

    // Op construction. `parents` must already be on this tape.
    using BackwardFn = std::function<void(Graph&, const Tensor& upstream)>;
    Var record(Tensor value, const std::vector<Var>& parents, BackwardFn backward);

    // Adds `delta` into the gradient buffer of v, if v needs one.
    void accumulate_grad(Var v, const Tensor& delta);
    Tensor& grad_buffer(Var v);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool has_grad = false;
        BackwardFn backward;
        std::string param_name;
    };

    const ParamStore* params_;
    bool track_grad_ = true;
    std::deque<Node> nodes_;
    std::unordered_map<std::string, std::size_t> param_nodes_;

    friend struct Var;
};

// ---- differentiable operations (2-D tensors are rows x cols) ----

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double c);
Var matmul(Var a, Var b);     // (m x k)(k x n)
Var matmul_nt(Var a, Var b);  // (m x k)(n x k)^T
Var add_row(Var a, Var bias);  // bias broadcast over rows
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var gelu(Var x);  // tanh approximation
Var softmax_rows(Var x);
// Multi-head scaled dot-product attention over rows; q, k, v are (n x d).
Var attention(Var q, Var k, Var v, std::size_t heads);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
// Copy of a with rows [offset, offset + delta.rows) incremented by delta.
Var add_rows_at(Var a, Var delta, std::size_t offset);
Var reshape(Var a, Shape shape);
Var sum(Var a);
Var mean(Var a);
// mean((a - target)^2) over all elements.
Var mse(Var a, const Tensor& target);
// Scalar node whose forward value is `forward_value` and whose backward pass sends
// upstream * g into x, ignoring how forward_value was computed.
Var inject_gradient(Var x, const Tensor& g, double forward_value);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

// ---- plain tensor helpers shared by the ops above ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T b

}  // namespace flowedge
