#include "lch/tape.hpp"

#include <cmath>
#include <string>

namespace lch {

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

struct ConvDims {
    std::size_t batch, cin, h, w, cout, kh, kw, ho, wo;
    bool batched;
};

ConvDims conv_dims(const Shape& xs, const Shape& ws, int stride) {
    if (ws.size() != 4) throw ShapeError("conv2d: weight must be 4-D (Cout,Cin,kh,kw), got " + shape_str(ws));
    if (xs.size() != 3 && xs.size() != 4)
        throw ShapeError("conv2d: input must be (Cin,H,W) or (B,Cin,H,W), got " + shape_str(xs));
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    ConvDims d{};
    d.batched = xs.size() == 4;
    d.batch = d.batched ? xs[0] : 1;
    d.cin = xs[d.batched ? 1 : 0];
    d.h = xs[d.batched ? 2 : 1];
    d.w = xs[d.batched ? 3 : 2];
    d.cout = ws[0];
    d.kh = ws[2];
    d.kw = ws[3];
    if (ws[1] != d.cin)
        throw ShapeError("conv2d: shape mismatch " + shape_str(xs) + " x " + shape_str(ws));
    if (d.h < d.kh || d.w < d.kw)
        throw ShapeError("conv2d: kernel larger than input, " + shape_str(xs) + " x " + shape_str(ws));
    d.ho = (d.h - d.kh) / static_cast<std::size_t>(stride) + 1;
    d.wo = (d.w - d.kw) / static_cast<std::size_t>(stride) + 1;
    return d;
}

// Broadcast classification for add. Throws for anything beyond bias-add.
enum class AddMode { Same, RowBias, ChannelBias };

AddMode add_mode(const Shape& a, const Shape& b) {
    if (a == b) return AddMode::Same;
    if (a.size() == 2 && b.size() == 1 && a[1] == b[0]) return AddMode::RowBias;
    if ((a.size() == 4 && b.size() == 1 && a[1] == b[0]) || (a.size() == 3 && b.size() == 1 && a[0] == b[0]))
        return AddMode::ChannelBias;
    throw ShapeError("add: shape mismatch " + shape_str(a) + " vs " + shape_str(b) +
                     " (only same-shape or bias-add broadcasting is supported)");
}

}  // namespace

namespace ops {

Tensor add(const Tensor& a, const Tensor& b) {
    const AddMode mode = add_mode(a.shape(), b.shape());
    Tensor y = a;
    if (mode == AddMode::Same) {
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] += b[i];
    } else if (mode == AddMode::RowBias) {
        const std::size_t rows = a.dim(0), cols = a.dim(1);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) y[i * cols + j] += b[j];
    } else {
        const bool batched = a.ndim() == 4;
        const std::size_t bsz = batched ? a.dim(0) : 1;
        const std::size_t c = batched ? a.dim(1) : a.dim(0);
        const std::size_t hw = a.numel() / (bsz * c);
        for (std::size_t n = 0; n < bsz; ++n)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double* p = y.data() + (n * c + ch) * hw;
                for (std::size_t i = 0; i < hw; ++i) p[i] += b[ch];
            }
    }
    return y;
}

Tensor conv2d(const Tensor& x, const Tensor& w, int stride) {
    const ConvDims d = conv_dims(x.shape(), w.shape(), stride);
    Shape out_shape = d.batched ? Shape{d.batch, d.cout, d.ho, d.wo} : Shape{d.cout, d.ho, d.wo};
    Tensor y(out_shape);
    const std::size_t s = static_cast<std::size_t>(stride);
    for (std::size_t n = 0; n < d.batch; ++n)
        for (std::size_t co = 0; co < d.cout; ++co)
            for (std::size_t oy = 0; oy < d.ho; ++oy)
                for (std::size_t ox = 0; ox < d.wo; ++ox) {
                    double acc = 0.0;
                    for (std::size_t ci = 0; ci < d.cin; ++ci) {
                        const double* xp = x.data() + ((n * d.cin + ci) * d.h + oy * s) * d.w + ox * s;
                        const double* wp = w.data() + ((co * d.cin + ci) * d.kh) * d.kw;
                        for (std::size_t ky = 0; ky < d.kh; ++ky)
                            for (std::size_t kx = 0; kx < d.kw; ++kx) acc += xp[ky * d.w + kx] * wp[ky * d.kw + kx];
                    }
                    y[((n * d.cout + co) * d.ho + oy) * d.wo + ox] = acc;
                }
    return y;
}

Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t stop) {
    if (axis < 0 || static_cast<std::size_t>(axis) >= a.ndim())
        throw ShapeError("slice: axis " + std::to_string(axis) + " out of range for " + shape_str(a.shape()));
    const std::size_t ax = static_cast<std::size_t>(axis);
    if (start >= stop || stop > a.dim(ax))
        throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(stop) +
                         ") invalid for axis of size " + std::to_string(a.dim(ax)));
    Shape out = a.shape();
    out[ax] = stop - start;
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < ax; ++i) outer *= a.dim(i);
    for (std::size_t i = ax + 1; i < a.ndim(); ++i) inner *= a.dim(i);
    Tensor y(out);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < stop - start; ++k) {
            const double* src = a.data() + (o * a.dim(ax) + start + k) * inner;
            double* dst = y.data() + (o * (stop - start) + k) * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] = src[i];
        }
    return y;
}

Tensor reduce_sum(const Tensor& a, int axis) {
    if (axis < 0) {
        Tensor y{Shape{}};
        double s = 0.0;
        for (std::size_t i = 0; i < a.numel(); ++i) s += a[i];
        y[0] = s;
        return y;
    }
    const std::size_t ax = static_cast<std::size_t>(axis);
    if (ax >= a.ndim()) throw ShapeError("reduce_sum: axis out of range for " + shape_str(a.shape()));
    Shape out;
    for (std::size_t i = 0; i < a.ndim(); ++i)
        if (i != ax) out.push_back(a.dim(i));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < ax; ++i) outer *= a.dim(i);
    for (std::size_t i = ax + 1; i < a.ndim(); ++i) inner *= a.dim(i);
    Tensor y(out);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < a.dim(ax); ++k)
            for (std::size_t i = 0; i < inner; ++i) y[o * inner + i] += a[(o * a.dim(ax) + k) * inner + i];
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor y = a;
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= b[i];
    return y;
}

Tensor relu(const Tensor& a) {
    Tensor y = a;
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = y[i] > 0.0 ? y[i] : 0.0;
    return y;
}

Tensor gelu(const Tensor& a) {
    Tensor y = a;
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = gelu_scalar(y[i]);
    return y;
}

}  // namespace ops

namespace {

Tensor eval_node(const TapeNode& node, const std::vector<TapeNode>& nodes) {
    auto in = [&](std::size_t i) -> const Tensor& { return nodes[node.inputs[i]].value; };
    switch (node.op) {
        case OpKind::Input:
        case OpKind::Constant:
            return node.value;
        case OpKind::Matmul:
            return matmul(in(0), in(1), node.trans_a, node.trans_b);
        case OpKind::Add:
            return ops::add(in(0), in(1));
        case OpKind::Mul:
            return ops::mul(in(0), in(1));
        case OpKind::Relu:
            return ops::relu(in(0));
        case OpKind::Gelu:
            return ops::gelu(in(0));
        case OpKind::Conv2d:
            return ops::conv2d(in(0), in(1), node.stride);
        case OpKind::Reshape:
            return in(0).reshaped(node.value.shape());
        case OpKind::Slice:
            return ops::slice(in(0), node.axis, node.start, node.stop);
        case OpKind::ReduceSum:
            return ops::reduce_sum(in(0), node.axis);
    }
    throw ShapeError("tape: unknown op");
}

}  // namespace

const char* op_name(OpKind op) {
    switch (op) {
        case OpKind::Input: return "input";
        case OpKind::Constant: return "constant";
        case OpKind::Matmul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Mul: return "mul";
        case OpKind::Relu: return "relu";
        case OpKind::Gelu: return "gelu";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::Reshape: return "reshape";
        case OpKind::Slice: return "slice";
        case OpKind::ReduceSum: return "reduce_sum";
    }
    return "?";
}

double gelu_scalar(double x) {
    // tanh approximation of GELU
    const double u = kGeluC * (x + kGeluA * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad_scalar(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double t = std::tanh(u);
    const double sech2 = 1.0 - t * t;
    return 0.5 * (1.0 + t) + 0.5 * x * sech2 * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

Var GraphBuilder::push(TapeNode node) {
    node.value = eval_node(node, tape_.nodes);
    tape_.nodes.push_back(std::move(node));
    return Var{static_cast<int>(tape_.nodes.size()) - 1};
}

Var GraphBuilder::input(const Tensor& x) {
    if (tape_.input_id >= 0) throw ShapeError("tape: graph already has an input node");
    TapeNode n;
    n.op = OpKind::Input;
    n.value = x;
    tape_.nodes.push_back(std::move(n));
    tape_.input_id = static_cast<int>(tape_.nodes.size()) - 1;
    return Var{tape_.input_id};
}

Var GraphBuilder::constant(Tensor v) {
    TapeNode n;
    n.op = OpKind::Constant;
    n.value = std::move(v);
    tape_.nodes.push_back(std::move(n));
    return Var{static_cast<int>(tape_.nodes.size()) - 1};
}

Var GraphBuilder::param(Tensor v) {
    Var id = constant(std::move(v));
    tape_.nodes[id.id].trainable = true;
    return id;
}

Var GraphBuilder::matmul(Var a, Var b, bool trans_a, bool trans_b) {
    TapeNode n;
    n.op = OpKind::Matmul;
    n.inputs = {a.id, b.id};
    n.trans_a = trans_a;
    n.trans_b = trans_b;
    return push(std::move(n));
}

Var GraphBuilder::add(Var a, Var b) {
    TapeNode n;
    n.op = OpKind::Add;
    n.inputs = {a.id, b.id};
    return push(std::move(n));
}

Var GraphBuilder::mul(Var a, Var b) {
    TapeNode n;
    n.op = OpKind::Mul;
    n.inputs = {a.id, b.id};
    return push(std::move(n));
}

Var GraphBuilder::relu(Var a) {
    TapeNode n;
    n.op = OpKind::Relu;
    n.inputs = {a.id};
    return push(std::move(n));
}

Var GraphBuilder::gelu(Var a) {
    TapeNode n;
    n.op = OpKind::Gelu;
    n.inputs = {a.id};
    return push(std::move(n));
}

Var GraphBuilder::conv2d(Var x, Var w, int stride) {
    TapeNode n;
    n.op = OpKind::Conv2d;
    n.inputs = {x.id, w.id};
    n.stride = stride;
    return push(std::move(n));
}

Var GraphBuilder::reshape(Var a, Shape new_shape) {
    TapeNode n;
    n.op = OpKind::Reshape;
    n.inputs = {a.id};
    // eval_node reads the target shape back from the recorded value
    n.value = tape_.nodes[a.id].value.reshaped(std::move(new_shape));
    tape_.nodes.push_back(std::move(n));
    return Var{static_cast<int>(tape_.nodes.size()) - 1};
}

Var GraphBuilder::slice(Var a, int axis, std::size_t start, std::size_t stop) {
    TapeNode n;
    n.op = OpKind::Slice;
    n.inputs = {a.id};
    n.axis = axis;
    n.start = start;
    n.stop = stop;
    return push(std::move(n));
}

Var GraphBuilder::reduce_sum(Var a) {
    TapeNode n;
    n.op = OpKind::ReduceSum;
    n.inputs = {a.id};
    n.axis = -1;
    return push(std::move(n));
}

Var GraphBuilder::reduce_sum(Var a, int axis) {
    if (axis < 0) throw ShapeError("reduce_sum: axis must be >= 0");
    TapeNode n;
    n.op = OpKind::ReduceSum;
    n.inputs = {a.id};
    n.axis = axis;
    return push(std::move(n));
}

std::pair<Tensor, Tape> forward_record(const GraphFn& fn, const Tensor& input) {
    Tape tape;
    GraphBuilder b(tape);
    Var x = b.input(input);
    Var out = fn(b, x);
    if (out.id < 0 || out.id >= static_cast<int>(tape.nodes.size()))
        throw ShapeError("forward_record: graph_fn returned an invalid node");
    tape.outputs = {out.id};
    return {tape.nodes[out.id].value, std::move(tape)};
}

Tensor replay(const Tape& tape, const Tensor& input) {
    std::vector<TapeNode> nodes = tape.nodes;
    if (tape.input_id < 0) throw ShapeError("replay: tape has no input");
    if (!nodes[tape.input_id].value.same_shape(input))
        throw ShapeError("replay: input shape " + shape_str(input.shape()) + " does not match recorded " +
                         shape_str(nodes[tape.input_id].value.shape()));
    nodes[tape.input_id].value = input;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].op != OpKind::Input && nodes[i].op != OpKind::Constant) nodes[i].value = eval_node(nodes[i], nodes);
    return nodes[tape.output_id()].value;
}

namespace {

// Accumulate the adjoint of one node's inputs given its own adjoint g.
void accumulate_input_adjoints(const Tape& tape, std::size_t idx, const Tensor& g, std::vector<Tensor>& adj,
                               std::vector<bool>& has_adj) {
    const TapeNode& node = tape.nodes[idx];
    auto val = [&](std::size_t i) -> const Tensor& { return tape.nodes[node.inputs[i]].value; };
    auto bump = [&](std::size_t i, const Tensor& d) {
        const int id = node.inputs[i];
        if (!has_adj[id]) {
            adj[id] = d;
            has_adj[id] = true;
        } else {
            adj[id] += d;
        }
    };

    switch (node.op) {
        case OpKind::Input:
        case OpKind::Constant:
            return;
        case OpKind::Matmul: {
            const Tensor& a = val(0);
            const Tensor& b = val(1);
            // Handle the three operand arities via matmul itself.
            if (a.ndim() == 2 && b.ndim() == 1) {
                if (node.trans_a) {
                    // y = A^T b ; dA = b g^T  -> via outer product
                    Tensor dA(a.shape());
                    for (std::size_t i = 0; i < a.dim(0); ++i)
                        for (std::size_t j = 0; j < a.dim(1); ++j) dA.at2(i, j) = b[i] * g[j];
                    bump(0, dA);
                    bump(1, matmul(a, g, false, false));
                } else {
                    // y = A b ; dA = g b^T ; db = A^T g
                    Tensor dA(a.shape());
                    for (std::size_t i = 0; i < a.dim(0); ++i)
                        for (std::size_t j = 0; j < a.dim(1); ++j) dA.at2(i, j) = g[i] * b[j];
                    bump(0, dA);
                    bump(1, matmul(a, g, true, false));
                }
            } else if (a.ndim() == 1 && b.ndim() == 2) {
                if (node.trans_b) {
                    // y = B a (rowvec form: a^T B^T); da = B^T g... y_j = sum_k a_k B[j,k]
                    bump(0, matmul(b, g, true, false));
                    Tensor dB(b.shape());
                    for (std::size_t j = 0; j < b.dim(0); ++j)
                        for (std::size_t k = 0; k < b.dim(1); ++k) dB.at2(j, k) = g[j] * a[k];
                    bump(1, dB);
                } else {
                    // y_j = sum_k a_k B[k,j]; da = B g ; dB = a g^T
                    bump(0, matmul(b, g, false, false));
                    Tensor dB(b.shape());
                    for (std::size_t k = 0; k < b.dim(0); ++k)
                        for (std::size_t j = 0; j < b.dim(1); ++j) dB.at2(k, j) = a[k] * g[j];
                    bump(1, dB);
                }
            } else {
                // 2-D x 2-D. With A' = op(A), B' = op(B), Y = A'B':
                // dA' = G B'^T, dB' = A'^T G; transpose back as needed.
                if (!node.trans_a) {
                    bump(0, matmul(g, b, false, !node.trans_b));
                } else {
                    bump(0, matmul(b, g, node.trans_b, true));
                }
                if (!node.trans_b) {
                    bump(1, matmul(a, g, !node.trans_a, false));
                } else {
                    bump(1, matmul(g, a, true, node.trans_a));
                }
            }
            return;
        }
        case OpKind::Add: {
            const AddMode mode = add_mode(val(0).shape(), val(1).shape());
            bump(0, g);
            if (mode == AddMode::Same) {
                bump(1, g);
            } else if (mode == AddMode::RowBias) {
                const std::size_t rows = val(0).dim(0), cols = val(0).dim(1);
                Tensor db({cols});
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) db[j] += g[i * cols + j];
                bump(1, db);
            } else {
                const Tensor& a = val(0);
                const bool batched = a.ndim() == 4;
                const std::size_t bsz = batched ? a.dim(0) : 1;
                const std::size_t c = batched ? a.dim(1) : a.dim(0);
                const std::size_t hw = a.numel() / (bsz * c);
                Tensor db({c});
                for (std::size_t n = 0; n < bsz; ++n)
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const double* p = g.data() + (n * c + ch) * hw;
                        double s = 0.0;
                        for (std::size_t i = 0; i < hw; ++i) s += p[i];
                        db[ch] += s;
                    }
                bump(1, db);
            }
            return;
        }
        case OpKind::Mul: {
            Tensor da = g, db = g;
            for (std::size_t i = 0; i < g.numel(); ++i) {
                da[i] *= val(1)[i];
                db[i] *= val(0)[i];
            }
            bump(0, da);
            bump(1, db);
            return;
        }
        case OpKind::Relu: {
            Tensor d = g;
            const Tensor& x = val(0);
            for (std::size_t i = 0; i < d.numel(); ++i)
                if (x[i] <= 0.0) d[i] = 0.0;  // derivative 0 at exactly 0
            bump(0, d);
            return;
        }
        case OpKind::Gelu: {
            Tensor d = g;
            const Tensor& x = val(0);
            for (std::size_t i = 0; i < d.numel(); ++i) d[i] *= gelu_grad_scalar(x[i]);
            bump(0, d);
            return;
        }
        case OpKind::Conv2d: {
            const Tensor& x = val(0);
            const Tensor& w = val(1);
            const ConvDims d = conv_dims(x.shape(), w.shape(), node.stride);
            Tensor dx(x.shape());
            Tensor dw(w.shape());
            const std::size_t s = static_cast<std::size_t>(node.stride);
            for (std::size_t n = 0; n < d.batch; ++n)
                for (std::size_t co = 0; co < d.cout; ++co)
                    for (std::size_t oy = 0; oy < d.ho; ++oy)
                        for (std::size_t ox = 0; ox < d.wo; ++ox) {
                            const double go = g[((n * d.cout + co) * d.ho + oy) * d.wo + ox];
                            if (go == 0.0) continue;
                            for (std::size_t ci = 0; ci < d.cin; ++ci) {
                                double* dxp = dx.data() + ((n * d.cin + ci) * d.h + oy * s) * d.w + ox * s;
                                const double* xp = x.data() + ((n * d.cin + ci) * d.h + oy * s) * d.w + ox * s;
                                double* dwp = dw.data() + ((co * d.cin + ci) * d.kh) * d.kw;
                                const double* wp = w.data() + ((co * d.cin + ci) * d.kh) * d.kw;
                                for (std::size_t ky = 0; ky < d.kh; ++ky)
                                    for (std::size_t kx = 0; kx < d.kw; ++kx) {
                                        dxp[ky * d.w + kx] += go * wp[ky * d.kw + kx];
                                        dwp[ky * d.kw + kx] += go * xp[ky * d.w + kx];
                                    }
                            }
                        }
            bump(0, dx);
            bump(1, dw);
            return;
        }
        case OpKind::Reshape: {
            bump(0, g.reshaped(val(0).shape()));
            return;
        }
        case OpKind::Slice: {
            const Tensor& a = val(0);
            Tensor da(a.shape());
            const std::size_t ax = static_cast<std::size_t>(node.axis);
            std::size_t outer = 1, inner = 1;
            for (std::size_t i = 0; i < ax; ++i) outer *= a.dim(i);
            for (std::size_t i = ax + 1; i < a.ndim(); ++i) inner *= a.dim(i);
            const std::size_t len = node.stop - node.start;
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t k = 0; k < len; ++k) {
                    double* dst = da.data() + (o * a.dim(ax) + node.start + k) * inner;
                    const double* src = g.data() + (o * len + k) * inner;
                    for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                }
            bump(0, da);
            return;
        }
        case OpKind::ReduceSum: {
            const Tensor& a = val(0);
            Tensor da(a.shape());
            if (node.axis < 0) {
                for (std::size_t i = 0; i < da.numel(); ++i) da[i] = g[0];
            } else {
                const std::size_t ax = static_cast<std::size_t>(node.axis);
                std::size_t outer = 1, inner = 1;
                for (std::size_t i = 0; i < ax; ++i) outer *= a.dim(i);
                for (std::size_t i = ax + 1; i < a.ndim(); ++i) inner *= a.dim(i);
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t k = 0; k < a.dim(ax); ++k)
                        for (std::size_t i = 0; i < inner; ++i)
                            da[(o * a.dim(ax) + k) * inner + i] = g[o * inner + i];
            }
            bump(0, da);
            return;
        }
    }
}

std::vector<Tensor> run_backward(const Tape& tape, const Tensor& cotangent, std::vector<bool>& has_adj) {
    const int out = tape.output_id();
    if (!cotangent.same_shape(tape.nodes[out].value))
        throw ShapeError("vjp: cotangent shape " + shape_str(cotangent.shape()) + " does not match output shape " +
                         shape_str(tape.nodes[out].value.shape()));
    std::vector<Tensor> adj(tape.nodes.size());
    has_adj.assign(tape.nodes.size(), false);
    adj[out] = cotangent;
    has_adj[out] = true;
    for (std::size_t i = tape.nodes.size(); i-- > 0;) {
        if (!has_adj[i]) continue;
        accumulate_input_adjoints(tape, i, adj[i], adj, has_adj);
    }
    return adj;
}

}  // namespace

Tensor vjp(const Tape& tape, const Tensor& cotangent) {
    if (tape.input_id < 0) throw ShapeError("vjp: tape has no input node");
    std::vector<bool> has_adj;
    std::vector<Tensor> adj = run_backward(tape, cotangent, has_adj);
    if (!has_adj[tape.input_id]) return Tensor(tape.nodes[tape.input_id].value.shape());
    return adj[tape.input_id];
}

Gradients backward(const Tape& tape, const Tensor& cotangent) {
    std::vector<bool> has_adj;
    std::vector<Tensor> adj = run_backward(tape, cotangent, has_adj);
    Gradients g;
    if (tape.input_id >= 0)
        g.input = has_adj[tape.input_id] ? adj[tape.input_id] : Tensor(tape.nodes[tape.input_id].value.shape());
    for (std::size_t i = 0; i < tape.nodes.size(); ++i)
        if (tape.nodes[i].trainable)
            g.params.emplace_back(static_cast<int>(i),
                                  has_adj[i] ? std::move(adj[i]) : Tensor(tape.nodes[i].value.shape()));
    return g;
}

Tensor full_jacobian(const Tape& tape) {
    const Tensor& out = tape.output();
    const Tensor& in = tape.input();
    const std::size_t rows = out.numel();
    if (rows > 4096)
        throw ShapeError("full_jacobian: output has " + std::to_string(rows) +
                         " rows (> 4096); use vjp with chosen cotangents instead");
    Tensor jac({rows, in.numel()});
    Tensor e(out.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        e[r] = 1.0;
        Tensor row = vjp(tape, e);
        e[r] = 0.0;
        for (std::size_t c = 0; c < in.numel(); ++c) jac.at2(r, c) = row[c];
    }
    return jac;
}

}  // namespace lch
