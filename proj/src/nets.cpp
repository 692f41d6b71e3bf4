#include "lch/nets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lch/rng.hpp"

namespace lch {

using nlohmann::json;

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Affine: return "affine";
        case LayerKind::Relu: return "relu";
        case LayerKind::Gelu: return "gelu";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "affine") return LayerKind::Affine;
    if (name == "relu") return LayerKind::Relu;
    if (name == "gelu") return LayerKind::Gelu;
    if (name == "conv2d") return LayerKind::Conv2d;
    if (name == "flatten") return LayerKind::Flatten;
    throw ConfigError("unknown layer kind '" + name + "'");
}

namespace {

Shape layer_output_shape(const LayerSpec& layer, const Shape& in, int index) {
    const std::string where = "layer " + std::to_string(index) + " (" + layer_kind_name(layer.kind) + ")";
    switch (layer.kind) {
        case LayerKind::Affine: {
            if (layer.dims.size() != 2) throw ConfigError(where + ": dims must be {d_in, d_out}");
            if (in.size() != 1 || in[0] != static_cast<std::size_t>(layer.dims[0]))
                throw ConfigError(where + ": expects input dim (" + std::to_string(layer.dims[0]) + "), got " +
                                  shape_str(in));
            return {static_cast<std::size_t>(layer.dims[1])};
        }
        case LayerKind::Relu:
        case LayerKind::Gelu:
            return in;
        case LayerKind::Conv2d: {
            if (layer.dims.size() != 5) throw ConfigError(where + ": dims must be {c_in, c_out, kh, kw, stride}");
            const auto cin = static_cast<std::size_t>(layer.dims[0]);
            const auto cout = static_cast<std::size_t>(layer.dims[1]);
            const auto kh = static_cast<std::size_t>(layer.dims[2]);
            const auto kw = static_cast<std::size_t>(layer.dims[3]);
            const int stride = layer.dims[4];
            if (in.size() != 3 || in[0] != cin)
                throw ConfigError(where + ": expects (C,H,W) input with C=" + std::to_string(cin) + ", got " +
                                  shape_str(in));
            if (stride < 1 || in[1] < kh || in[2] < kw) throw ConfigError(where + ": kernel/stride do not fit input");
            return {cout, (in[1] - kh) / static_cast<std::size_t>(stride) + 1,
                    (in[2] - kw) / static_cast<std::size_t>(stride) + 1};
        }
        case LayerKind::Flatten:
            return {shape_numel(in)};
    }
    throw ConfigError(where + ": unknown kind");
}

}  // namespace

std::vector<Shape> Network::layer_shapes() const {
    std::vector<Shape> shapes;
    shapes.push_back(input_dim);
    bool seen_flatten = false;
    for (int l = 1; l <= num_layers(); ++l) {
        const LayerSpec& layer = layers[l - 1];
        if (layer.kind == LayerKind::Flatten) seen_flatten = true;
        if (layer.kind == LayerKind::Conv2d && seen_flatten)
            throw ConfigError("layer " + std::to_string(l) + ": conv2d must appear before the first flatten");
        shapes.push_back(layer_output_shape(layer, shapes.back(), l));
    }
    return shapes;
}

std::size_t Network::layer_width(int l) const {
    auto shapes = layer_shapes();
    if (l < 1 || l > num_layers()) throw ConfigError("layer index " + std::to_string(l) + " out of range");
    return shape_numel(shapes[static_cast<std::size_t>(l)]);
}

bool Network::is_cpa() const {
    return std::none_of(layers.begin(), layers.end(), [](const LayerSpec& s) { return s.kind == LayerKind::Gelu; });
}

void validate_network(const Network& net) {
    const auto shapes = net.layer_shapes();  // throws on chaining violations
    for (int l = 1; l <= net.num_layers(); ++l) {
        const LayerSpec& layer = net.layers[l - 1];
        const std::string where = "layer " + std::to_string(l);
        if (layer.kind == LayerKind::Affine) {
            const auto d_in = static_cast<std::size_t>(layer.dims[0]);
            const auto d_out = static_cast<std::size_t>(layer.dims[1]);
            if (!layer.weight || layer.weight->shape() != Shape{d_out, d_in})
                throw ConfigError(where + ": affine weight must have shape (d_out, d_in)");
            if (!layer.bias || layer.bias->shape() != Shape{d_out})
                throw ConfigError(where + ": affine bias must have shape (d_out)");
        } else if (layer.kind == LayerKind::Conv2d) {
            const auto cin = static_cast<std::size_t>(layer.dims[0]);
            const auto cout = static_cast<std::size_t>(layer.dims[1]);
            const auto kh = static_cast<std::size_t>(layer.dims[2]);
            const auto kw = static_cast<std::size_t>(layer.dims[3]);
            if (!layer.weight || layer.weight->shape() != Shape{cout, cin, kh, kw})
                throw ConfigError(where + ": conv2d weight must have shape (c_out, c_in, kh, kw)");
            if (!layer.bias || layer.bias->shape() != Shape{cout})
                throw ConfigError(where + ": conv2d bias must have shape (c_out)");
        } else if (layer.weight || layer.bias) {
            throw ConfigError(where + ": " + layer_kind_name(layer.kind) + " takes no parameters");
        }
    }
    for (const AblationMask& m : net.ablations) {
        if (m.layer_index < 1 || m.layer_index > net.num_layers())
            throw ConfigError("ablation: layer index " + std::to_string(m.layer_index) + " out of range");
        const std::size_t width = shape_numel(shapes[static_cast<std::size_t>(m.layer_index)]);
        if (m.neuron_index < 0 || static_cast<std::size_t>(m.neuron_index) >= width)
            throw ConfigError("ablation: neuron index " + std::to_string(m.neuron_index) +
                              " out of range for layer " + std::to_string(m.layer_index));
        if (m.mode != "zero-output") throw ConfigError("ablation: unknown mode '" + m.mode + "'");
    }
}

Network make_network(std::vector<LayerSpec> layers, Shape input_dim, std::uint64_t seed) {
    Network net{std::move(layers), std::move(input_dim), seed, {}};
    const bool any_gelu = std::any_of(net.layers.begin(), net.layers.end(),
                                      [](const LayerSpec& s) { return s.kind == LayerKind::Gelu; });
    Rng rng(seed);
    for (auto& layer : net.layers) {
        if (layer.kind == LayerKind::Affine) {
            const auto d_in = static_cast<std::size_t>(layer.dims.at(0));
            const auto d_out = static_cast<std::size_t>(layer.dims.at(1));
            if (!layer.weight) {
                const double fan_in = static_cast<double>(d_in);
                const double bound =
                    any_gelu ? std::sqrt(6.0 / (fan_in + static_cast<double>(d_out))) : std::sqrt(6.0 / fan_in);
                Tensor w({d_out, d_in});
                for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
                layer.weight = std::move(w);
            }
            if (!layer.bias) layer.bias = Tensor({d_out});
        } else if (layer.kind == LayerKind::Conv2d) {
            const auto cin = static_cast<std::size_t>(layer.dims.at(0));
            const auto cout = static_cast<std::size_t>(layer.dims.at(1));
            const auto kh = static_cast<std::size_t>(layer.dims.at(2));
            const auto kw = static_cast<std::size_t>(layer.dims.at(3));
            if (!layer.weight) {
                const double fan_in = static_cast<double>(cin * kh * kw);
                const double fan_out = static_cast<double>(cout * kh * kw);
                const double bound = any_gelu ? std::sqrt(6.0 / (fan_in + fan_out)) : std::sqrt(6.0 / fan_in);
                Tensor w({cout, cin, kh, kw});
                for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
                layer.weight = std::move(w);
            }
            if (!layer.bias) layer.bias = Tensor({cout});
        }
    }
    validate_network(net);
    return net;
}

namespace {

struct SpanInfo {
    bool batched;
    std::size_t batch;
};

SpanInfo classify_input(const Tensor& x, const Shape& expected, int l1) {
    if (x.shape() == expected) return {false, 1};
    if (x.ndim() == expected.size() + 1) {
        Shape tail(x.shape().begin() + 1, x.shape().end());
        if (tail == expected) return {true, x.dim(0)};
    }
    throw ShapeError("span: input shape " + shape_str(x.shape()) + " does not match layer " + std::to_string(l1) +
                     " input " + shape_str(expected) + " (optionally with a leading batch axis)");
}

void check_span(const Network& net, int l1, int l2) {
    if (l1 < 1 || l2 > net.num_layers() || l1 > l2)
        throw ConfigError("span (" + std::to_string(l1) + "," + std::to_string(l2) + ") out of range for " +
                          std::to_string(net.num_layers()) + " layers");
}

// Zeroed output coordinates of layer l, or empty.
std::vector<int> ablated_coords(const Network& net, int l) {
    std::vector<int> out;
    for (const auto& m : net.ablations)
        if (m.layer_index == l) out.push_back(m.neuron_index);
    return out;
}

void apply_ablation_inplace(Tensor& y, const std::vector<int>& coords, bool batched) {
    if (coords.empty()) return;
    if (!batched) {
        for (int c : coords) y[static_cast<std::size_t>(c)] = 0.0;
        return;
    }
    const std::size_t per = y.numel() / y.dim(0);
    for (std::size_t n = 0; n < y.dim(0); ++n)
        for (int c : coords) y[n * per + static_cast<std::size_t>(c)] = 0.0;
}

}  // namespace

Tensor forward_span(const Network& net, const Tensor& x, int l1, int l2) {
    check_span(net, l1, l2);
    const auto shapes = net.layer_shapes();
    const SpanInfo info = classify_input(x, shapes[static_cast<std::size_t>(l1 - 1)], l1);
    Tensor h = x;
    for (int l = l1; l <= l2; ++l) {
        const LayerSpec& layer = net.layers[static_cast<std::size_t>(l - 1)];
        switch (layer.kind) {
            case LayerKind::Affine:
                h = info.batched ? ops::add(matmul(h, *layer.weight, false, true), *layer.bias)
                                 : ops::add(matmul(*layer.weight, h), *layer.bias);
                break;
            case LayerKind::Relu:
                h = ops::relu(h);
                break;
            case LayerKind::Gelu:
                h = ops::gelu(h);
                break;
            case LayerKind::Conv2d:
                h = ops::add(ops::conv2d(h, *layer.weight, layer.dims[4]), *layer.bias);
                break;
            case LayerKind::Flatten: {
                Shape out = info.batched ? Shape{info.batch, shape_numel(shapes[static_cast<std::size_t>(l)])}
                                         : shapes[static_cast<std::size_t>(l)];
                h = h.reshaped(std::move(out));
                break;
            }
        }
        apply_ablation_inplace(h, ablated_coords(net, l), info.batched);
    }
    return h;
}

Tape tape_span(const Network& net, const Tensor& x, int l1, int l2,
               std::vector<std::pair<int, std::string>>* param_nodes) {
    check_span(net, l1, l2);
    const auto shapes = net.layer_shapes();
    const SpanInfo info = classify_input(x, shapes[static_cast<std::size_t>(l1 - 1)], l1);

    auto fn = [&](GraphBuilder& b, Var in) -> Var {
        Var h = in;
        for (int l = l1; l <= l2; ++l) {
            const LayerSpec& layer = net.layers[static_cast<std::size_t>(l - 1)];
            const std::string tag = "l" + std::to_string(l);
            switch (layer.kind) {
                case LayerKind::Affine: {
                    Var w = b.param(*layer.weight);
                    Var bias = b.param(*layer.bias);
                    if (param_nodes) {
                        param_nodes->emplace_back(w.id, tag + ".weight");
                        param_nodes->emplace_back(bias.id, tag + ".bias");
                    }
                    h = info.batched ? b.add(b.matmul(h, w, false, true), bias) : b.add(b.matmul(w, h), bias);
                    break;
                }
                case LayerKind::Relu:
                    h = b.relu(h);
                    break;
                case LayerKind::Gelu:
                    h = b.gelu(h);
                    break;
                case LayerKind::Conv2d: {
                    Var w = b.param(*layer.weight);
                    Var bias = b.param(*layer.bias);
                    if (param_nodes) {
                        param_nodes->emplace_back(w.id, tag + ".weight");
                        param_nodes->emplace_back(bias.id, tag + ".bias");
                    }
                    h = b.add(b.conv2d(h, w, layer.dims[4]), bias);
                    break;
                }
                case LayerKind::Flatten: {
                    Shape out = info.batched ? Shape{info.batch, shape_numel(shapes[static_cast<std::size_t>(l)])}
                                             : shapes[static_cast<std::size_t>(l)];
                    h = b.reshape(h, std::move(out));
                    break;
                }
            }
            const std::vector<int> coords = ablated_coords(net, l);
            if (!coords.empty()) {
                Tensor mask(b.value(h).shape(), 1.0);
                apply_ablation_inplace(mask, coords, info.batched);
                h = b.mul(h, b.constant(std::move(mask)));
            }
        }
        return h;
    };
    auto [out, tape] = forward_record(fn, x);
    (void)out;
    return std::move(tape);
}

Network ablate(const Network& net, const AblationMask& mask) {
    Network out = net;
    // idempotent: re-ablating the same neuron is a no-op
    for (const auto& m : out.ablations)
        if (m.layer_index == mask.layer_index && m.neuron_index == mask.neuron_index && m.mode == mask.mode)
            return out;
    out.ablations.push_back(mask);
    validate_network(out);
    return out;
}

namespace {

struct LossGrad {
    double loss;
    Tensor grad;  // d loss / d logits
};

LossGrad loss_and_grad(const Tensor& logits, const Dataset& data, const std::vector<std::size_t>& idx,
                       LossKind loss) {
    const std::size_t bsz = idx.size();
    Tensor g(logits.shape());
    double total = 0.0;
    if (loss == LossKind::CrossEntropy) {
        if (logits.ndim() != 2) throw ShapeError("cross-entropy expects (B, classes) logits");
        const std::size_t c = logits.dim(1);
        for (std::size_t n = 0; n < bsz; ++n) {
            const double* z = logits.data() + n * c;
            double zmax = z[0];
            for (std::size_t j = 1; j < c; ++j) zmax = std::max(zmax, z[j]);
            double denom = 0.0;
            for (std::size_t j = 0; j < c; ++j) denom += std::exp(z[j] - zmax);
            const auto target = static_cast<std::size_t>(data.targets[idx[n]]);
            if (target >= c) throw ConfigError("cross-entropy target out of range");
            total += -(z[target] - zmax - std::log(denom));
            for (std::size_t j = 0; j < c; ++j) {
                const double p = std::exp(z[j] - zmax) / denom;
                g[n * c + j] = (p - (j == target ? 1.0 : 0.0)) / static_cast<double>(bsz);
            }
        }
        return {total / static_cast<double>(bsz), std::move(g)};
    }
    if (loss == LossKind::Bce) {
        const std::size_t per = logits.numel() / bsz;
        if (per != 1) throw ShapeError("bce expects a single logit per sample");
        for (std::size_t n = 0; n < bsz; ++n) {
            const double z = logits[n];
            const double y = data.targets[idx[n]];
            // stable log(1+exp(-|z|)) form
            const double softplus = std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0);
            total += softplus - y * z;
            const double p = 1.0 / (1.0 + std::exp(-z));
            g[n] = (p - y) / static_cast<double>(bsz);
        }
        return {total / static_cast<double>(bsz), std::move(g)};
    }
    // MSE over all output elements
    const std::size_t per = logits.numel() / bsz;
    const std::size_t tper = data.targets.numel() / data.size();
    if (per != tper) throw ShapeError("mse target dimension mismatch");
    for (std::size_t n = 0; n < bsz; ++n)
        for (std::size_t j = 0; j < per; ++j) {
            const double d = logits[n * per + j] - data.targets[idx[n] * per + j];
            total += d * d;
            g[n * per + j] = 2.0 * d / static_cast<double>(bsz * per);
        }
    return {total / static_cast<double>(bsz * per), std::move(g)};
}

Tensor gather_batch(const Tensor& inputs, const std::vector<std::size_t>& idx) {
    Shape s = inputs.shape();
    const std::size_t per = inputs.numel() / s[0];
    s[0] = idx.size();
    Tensor out(s);
    for (std::size_t n = 0; n < idx.size(); ++n) {
        const double* src = inputs.data() + idx[n] * per;
        double* dst = out.data() + n * per;
        for (std::size_t i = 0; i < per; ++i) dst[i] = src[i];
    }
    return out;
}

struct AdamState {
    std::vector<Tensor> m, v;
    long t = 0;
};

}  // namespace

TrainResult train(const Network& net, const Dataset& data, const TrainConfig& cfg) {
    if (data.size() == 0) throw ConfigError("train: dataset is empty");
    if (cfg.batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    validate_network(net);

    Network model = net;
    std::vector<Tensor*> params;
    for (auto& layer : model.layers) {
        if (layer.weight) params.push_back(&*layer.weight);
        if (layer.bias) params.push_back(&*layer.bias);
    }

    AdamState adam;
    adam.m.reserve(params.size());
    adam.v.reserve(params.size());
    for (Tensor* p : params) {
        adam.m.emplace_back(p->shape());
        adam.v.emplace_back(p->shape());
    }

    std::vector<double> epoch_loss;
    if (cfg.on_epoch) cfg.on_epoch(0, model);

    Rng rng = Rng(cfg.seed).fork(model.seed);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const int L = model.num_layers();
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng epoch_rng = rng.fork(static_cast<std::uint64_t>(epoch));
        epoch_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), off + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::size_t> idx(order.begin() + static_cast<long>(off), order.begin() + static_cast<long>(end));
            Tensor batch = gather_batch(data.inputs, idx);
            Tape tape = tape_span(model, batch, 1, L);
            LossGrad lg = loss_and_grad(tape.output(), data, idx, cfg.loss);
            loss_sum += lg.loss * static_cast<double>(idx.size());
            seen += idx.size();
            Gradients grads = backward(tape, lg.grad);
            if (grads.params.size() != params.size()) throw NumericError("train: parameter/gradient count mismatch");
            adam.t += 1;
            for (std::size_t p = 0; p < params.size(); ++p) {
                Tensor& w = *params[p];
                const Tensor& g = grads.params[p].second;
                if (cfg.optimizer == OptimizerKind::Sgd) {
                    for (std::size_t i = 0; i < w.numel(); ++i) w[i] -= cfg.learning_rate * g[i];
                } else {
                    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
                    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
                    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
                    Tensor& m = adam.m[p];
                    Tensor& v = adam.v[p];
                    for (std::size_t i = 0; i < w.numel(); ++i) {
                        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                        w[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
                    }
                }
            }
        }
        const double mean_loss = loss_sum / static_cast<double>(seen);
        if (!std::isfinite(mean_loss))
            throw NumericError("train: loss diverged (non-finite) at epoch " + std::to_string(epoch));
        epoch_loss.push_back(mean_loss);
        if (cfg.on_epoch) cfg.on_epoch(epoch, model);
    }
    return {std::move(model), std::move(epoch_loss)};
}

double accuracy(const Network& net, const Dataset& data, LossKind loss) {
    if (data.size() == 0) throw ConfigError("accuracy: dataset is empty");
    const Tensor out = forward(net, data.inputs);
    const std::size_t n = data.size();
    const std::size_t per = out.numel() / n;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (loss == LossKind::Bce) {
            const bool pred = out[i * per] > 0.0;
            if (pred == (data.targets[i] > 0.5)) ++hits;
        } else {
            std::size_t arg = 0;
            for (std::size_t j = 1; j < per; ++j)
                if (out[i * per + j] > out[i * per + arg]) arg = j;
            std::size_t want;
            if (data.targets.numel() == n) {
                want = static_cast<std::size_t>(data.targets[i]);
            } else {
                want = 0;
                const std::size_t tper = data.targets.numel() / n;
                for (std::size_t j = 1; j < tper; ++j)
                    if (data.targets[i * tper + j] > data.targets[i * tper + want]) want = j;
            }
            if (arg == want) ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

namespace {

json tensor_to_nested(const Tensor& t, std::size_t axis, std::size_t offset) {
    if (axis == t.ndim()) return t[offset];
    if (axis + 1 == t.ndim()) {
        json arr = json::array();
        for (std::size_t i = 0; i < t.dim(axis); ++i) arr.push_back(t[offset + i]);
        return arr;
    }
    std::size_t stride = 1;
    for (std::size_t i = axis + 1; i < t.ndim(); ++i) stride *= t.dim(i);
    json arr = json::array();
    for (std::size_t i = 0; i < t.dim(axis); ++i) arr.push_back(tensor_to_nested(t, axis + 1, offset + i * stride));
    return arr;
}

void nested_to_flat(const json& j, std::vector<double>& out, Shape& shape, std::size_t depth) {
    if (j.is_array()) {
        if (depth == shape.size())
            shape.push_back(j.size());
        else if (shape[depth] != j.size())
            throw ConfigError("model file: ragged parameter array");
        for (const auto& e : j) nested_to_flat(e, out, shape, depth + 1);
    } else if (j.is_number()) {
        if (depth != shape.size()) throw ConfigError("model file: ragged parameter array");
        out.push_back(j.get<double>());
    } else {
        throw ConfigError("model file: parameter entries must be numbers");
    }
}

Tensor tensor_from_nested(const json& j) {
    std::vector<double> flat;
    Shape shape;
    nested_to_flat(j, flat, shape, 0);
    return Tensor(std::move(shape), std::move(flat));
}

constexpr int kFormatVersion = 1;

}  // namespace

std::string to_json(const Network& net) {
    json root;
    root["format_version"] = kFormatVersion;
    root["seed"] = net.seed;
    root["input_dim"] = net.input_dim;
    json layers = json::array();
    for (const auto& layer : net.layers) {
        json jl;
        jl["kind"] = layer_kind_name(layer.kind);
        jl["dims"] = layer.dims;
        if (layer.weight || layer.bias) {
            json params;
            if (layer.weight) params["weight"] = tensor_to_nested(*layer.weight, 0, 0);
            if (layer.bias) params["bias"] = tensor_to_nested(*layer.bias, 0, 0);
            jl["params"] = std::move(params);
        }
        layers.push_back(std::move(jl));
    }
    root["layers"] = std::move(layers);
    if (!net.ablations.empty()) {
        json abl = json::array();
        for (const auto& m : net.ablations)
            abl.push_back({{"layer_index", m.layer_index}, {"neuron_index", m.neuron_index}, {"mode", m.mode}});
        root["ablations"] = std::move(abl);
    }
    return root.dump(2) + "\n";
}

Network network_from_json(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed model file: ") + e.what());
    }
    if (!root.is_object() || !root.contains("format_version") || !root["format_version"].is_number_integer())
        throw ConfigError("malformed model file: missing format_version");
    if (root["format_version"].get<int>() != kFormatVersion)
        throw ConfigError("model format_version " + root["format_version"].dump() + " not supported (expected " +
                          std::to_string(kFormatVersion) + ")");
    Network net;
    try {
        net.seed = root.at("seed").get<std::uint64_t>();
        net.input_dim = root.at("input_dim").get<Shape>();
        for (const auto& jl : root.at("layers")) {
            LayerSpec layer;
            layer.kind = layer_kind_from_name(jl.at("kind").get<std::string>());
            layer.dims = jl.at("dims").get<std::vector<int>>();
            if (jl.contains("params")) {
                const auto& p = jl["params"];
                if (p.contains("weight")) layer.weight = tensor_from_nested(p["weight"]);
                if (p.contains("bias")) layer.bias = tensor_from_nested(p["bias"]);
            }
            net.layers.push_back(std::move(layer));
        }
        if (root.contains("ablations"))
            for (const auto& ja : root["ablations"])
                net.ablations.push_back({ja.at("layer_index").get<int>(), ja.at("neuron_index").get<int>(),
                                         ja.at("mode").get<std::string>()});
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed model file: ") + e.what());
    }
    validate_network(net);
    return net;
}

void save(const Network& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("save: cannot open '" + path + "' for writing");
    out << to_json(net);
    if (!out) throw ConfigError("save: write to '" + path + "' failed");
}

Network load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("load: cannot open '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return network_from_json(buffer.str());
}

std::string network_hash(const Network& net) {
    const std::string text = to_json(net);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace lch
