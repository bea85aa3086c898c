#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aupt/tensor.hpp"

namespace aupt {

/// Reverse-mode tape over the primitive set the pipeline needs.
///
/// Values are computed eagerly as nodes are recorded; backward() replays the
/// record in reverse. Nodes are identified by index, so the record is in
/// topological order by construction. One tape = one forward pass; tapes are
/// single-owner and never shared across threads.
class Tape {
 public:
    struct Var {
        std::size_t id = static_cast<std::size_t>(-1);
        bool valid() const { return id != static_cast<std::size_t>(-1); }
    };

    /// Leaf node: parameter or constant input.
    Var leaf(Tensor value);

    // --- elementwise / structural ---
    Var add(Var a, Var b);              // same shape
    Var scale(Var x, double alpha);
    Var relu(Var x);
    Var glu(Var x);                     // [2m] -> [m], or [T x 2m] -> [T x m]
    Var row(Var m, std::size_t r);      // [R x C] -> [C], gradient scatters into row r
    Var stack(std::span<const Var> scalars); // k scalars -> [k]
    Var mean(Var v);                    // [k] -> scalar

    // --- linear algebra ---
    Var matmul(Var a, Var b);           // [m x k] . [k x n]
    Var add_rows(Var m, Var bias);      // [T x n] + [n] broadcast over rows
    Var vecmat(Var x, Var m);           // [k] . [k x n] -> [n]
    Var matvec(Var m, Var x);           // [m x n] . [n] -> [m]

    // --- pipeline primitives ---
    Var conv1d_temporal(Var v, Var kernel, Var bias); // [T x cin], [k x cin x cout], [cout]
    Var mean_pool(Var m);               // [T x c] -> [c]
    Var cosine_sim(Var a, Var b);       // vectors -> scalar
    Var softmax(Var logits);
    // onehot travels by value: recording ops can reallocate node storage, so
    // references obtained from value() must not be passed back in
    Var cross_entropy(Var p, Tensor onehot); // -> scalar
    Var entropy(Var p);                 // -> scalar

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    std::size_t node_count() const { return nodes_.size(); }

    /// Gradients of a scalar loss w.r.t. each requested node. Nodes not on
    /// the path to the loss get zero tensors of their own shape.
    std::vector<Tensor> backward(Var loss, std::span<const Var> wrt);

 private:
    enum class Op {
        kLeaf, kAdd, kScale, kRelu, kGlu, kRow, kStack, kMean,
        kMatmul, kAddRows, kVecMat, kMatVec,
        kConv1d, kMeanPool, kCosine, kSoftmax, kCrossEntropy, kEntropy,
    };

    struct Node {
        Op op;
        Tensor value;
        std::vector<std::size_t> in;
        double darg = 0.0;      // scale factor / cached scalar
        std::size_t iarg = 0;   // row index / true-class index
    };

    Var push(Op op, Tensor value, std::vector<std::size_t> in,
             double darg = 0.0, std::size_t iarg = 0);
    const Tensor& val(std::size_t id) const { return nodes_[id].value; }
    void backprop_node(std::size_t id, const Tensor& g, std::vector<Tensor>& grads) const;

    std::vector<Node> nodes_;
};

} // namespace aupt
