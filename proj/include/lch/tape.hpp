#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "lch/tensor.hpp"

namespace lch {

enum class OpKind {
    Input,
    Constant,
    Matmul,
    Add,
    Mul,
    Relu,
    Gelu,
    Conv2d,
    Reshape,
    Slice,
    ReduceSum,
};

const char* op_name(OpKind op);

struct TapeNode {
    OpKind op;
    std::vector<int> inputs;  // node ids, in argument order
    Tensor value;             // recorded forward output
    // op attributes
    bool trans_a = false, trans_b = false;  // matmul
    int axis = -1;                          // slice / reduce_sum (-1: all)
    std::size_t start = 0, stop = 0;        // slice
    int stride = 1;                         // conv2d
    bool trainable = false;                 // constants that receive gradients
};

/// Record of one taped forward pass. Nodes are topologically ordered; node 0
/// onward may be read but not mutated, so backward passes over a const Tape
/// are safe to run concurrently.
struct Tape {
    std::vector<TapeNode> nodes;
    int input_id = -1;
    std::vector<int> outputs;  // graph outputs (all ops here produce one)

    int output_id() const {
        if (outputs.size() != 1) throw ShapeError("tape: expected exactly one output");
        return outputs[0];
    }
    const Tensor& output() const { return nodes[output_id()].value; }
    const Tensor& input() const {
        if (input_id < 0) throw ShapeError("tape: no input node");
        return nodes[input_id].value;
    }
};

/// Node handle used while composing a graph.
struct Var {
    int id = -1;
};

/// Eagerly evaluates primitives while recording them onto a tape.
class GraphBuilder {
public:
    explicit GraphBuilder(Tape& tape) : tape_(tape) {}

    Var input(const Tensor& x);
    Var constant(Tensor v);
    /// Constant marked as trainable; backward() reports its adjoint.
    Var param(Tensor v);

    Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
    /// Same-shape add, or bias-add: (m,n)+(n), (B,C,H,W)+(C), (C,H,W)+(C).
    Var add(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise, same shape
    Var relu(Var a);
    Var gelu(Var a);
    /// Valid (unpadded) cross-correlation; x: (B,Cin,H,W) or (Cin,H,W),
    /// w: (Cout,Cin,kh,kw).
    Var conv2d(Var x, Var w, int stride = 1);
    Var reshape(Var a, Shape new_shape);
    Var slice(Var a, int axis, std::size_t start, std::size_t stop);
    Var reduce_sum(Var a);            // all elements -> scalar (shape {})
    Var reduce_sum(Var a, int axis);  // along one axis

    const Tensor& value(Var v) const { return tape_.nodes[v.id].value; }

private:
    Var push(TapeNode node);
    Tape& tape_;
};

using GraphFn = std::function<Var(GraphBuilder&, Var)>;

/// Evaluate fn on input, recording every primitive. The returned output
/// equals eager evaluation; the tape suffices for any number of backward
/// passes.
std::pair<Tensor, Tape> forward_record(const GraphFn& fn, const Tensor& input);

/// Re-execute the tape on a (possibly different) input.
Tensor replay(const Tape& tape, const Tensor& input);

/// cotangent^T . J_x of the taped graph, shaped like the input. ReLU uses the
/// one-sided subgradient: derivative 0 at exactly 0.
Tensor vjp(const Tape& tape, const Tensor& cotangent);

/// Adjoints of the input and of every trainable param, keyed by node id.
struct Gradients {
    Tensor input;
    std::vector<std::pair<int, Tensor>> params;
};
Gradients backward(const Tape& tape, const Tensor& cotangent);

/// Dense Jacobian, row i = vjp with the i-th basis cotangent. Guarded to
/// <= 4096 output rows; use vjp for anything larger.
Tensor full_jacobian(const Tape& tape);

double gelu_scalar(double x);
double gelu_grad_scalar(double x);

/// Eager evaluators shared by the tape and by untaped forward passes, so the
/// two paths agree bit for bit.
namespace ops {
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor conv2d(const Tensor& x, const Tensor& w, int stride);
Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t stop);
Tensor reduce_sum(const Tensor& a, int axis = -1);
}  // namespace ops

}  // namespace lch
