#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lch/tape.hpp"
#include "lch/tensor.hpp"

namespace lch {

enum class LayerKind { Affine, Relu, Gelu, Conv2d, Flatten };

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
    LayerKind kind;
    // affine: {d_in, d_out}; conv2d: {c_in, c_out, kh, kw, stride}; others: {}
    std::vector<int> dims;
    std::optional<Tensor> weight;
    std::optional<Tensor> bias;

    static LayerSpec affine(int d_in, int d_out) { return {LayerKind::Affine, {d_in, d_out}, {}, {}}; }
    static LayerSpec relu() { return {LayerKind::Relu, {}, {}, {}}; }
    static LayerSpec gelu() { return {LayerKind::Gelu, {}, {}, {}}; }
    static LayerSpec conv2d(int c_in, int c_out, int kh, int kw, int stride = 1) {
        return {LayerKind::Conv2d, {c_in, c_out, kh, kw, stride}, {}, {}};
    }
    static LayerSpec flatten() { return {LayerKind::Flatten, {}, {}, {}}; }
};

/// Zero the post-activation output of one neuron. neuron_index is the flat
/// index into the named layer's per-sample output.
struct AblationMask {
    int layer_index;   // 1-based layer id
    int neuron_index;  // flat output coordinate
    std::string mode = "zero-output";
};

/// Ordered layer stack with parameters. Layers are indexed 1..L. Immutable in
/// use: forward/span/ablate never mutate, train returns a new network.
struct Network {
    std::vector<LayerSpec> layers;
    Shape input_dim;
    std::uint64_t seed = 0;
    std::vector<AblationMask> ablations;  // in-memory patches from ablate()

    int num_layers() const { return static_cast<int>(layers.size()); }
    /// shapes[0] = input_dim, shapes[l] = output shape of layer l.
    std::vector<Shape> layer_shapes() const;
    /// Output width of layer l (1-based), flattened.
    std::size_t layer_width(int l) const;
    bool is_cpa() const;  // affine/relu/conv2d/flatten only
};

/// Validates dimension chaining and parameter shapes; initializes missing
/// parameters (Kaiming-uniform for relu stacks, Xavier-uniform when any gelu
/// is present; biases zero) from the seed.
Network make_network(std::vector<LayerSpec> layers, Shape input_dim, std::uint64_t seed);

/// Structural check without touching parameters; throws on violation.
void validate_network(const Network& net);

/// f^(l1<-l2)(x): apply layers l1..l2 (1-based, inclusive). x may be a single
/// sample shaped like d^(l1-1) or a batch with a leading batch axis.
Tensor forward_span(const Network& net, const Tensor& x, int l1, int l2);
inline Tensor forward(const Network& net, const Tensor& x) { return forward_span(net, x, 1, net.num_layers()); }

/// Record layers l1..l2 onto a tape (parameters as trainable leaves).
Tape tape_span(const Network& net, const Tensor& x, int l1, int l2,
               std::vector<std::pair<int, std::string>>* param_nodes = nullptr);

/// Copy of net with neuron (mask.layer_index, mask.neuron_index) zeroed.
Network ablate(const Network& net, const AblationMask& mask);

enum class LossKind { CrossEntropy, Mse, Bce };
enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    int epochs = 10;
    int batch_size = 32;
    LossKind loss = LossKind::CrossEntropy;
    std::uint64_t seed = 0;  // shuffle/batching stream
    // Called after initialization (epoch 0) and after each epoch.
    std::function<void(int epoch, const Network&)> on_epoch;
};

struct Dataset {
    Tensor inputs;   // (N, ...) leading batch axis
    Tensor targets;  // CE: (N) class ids; BCE: (N) in {0,1}; MSE: (N, d_out)
    std::size_t size() const { return inputs.ndim() ? inputs.dim(0) : 0; }
};

struct TrainResult {
    Network net;
    std::vector<double> epoch_loss;  // mean loss per epoch
};

/// Deterministic given (net.seed, cfg.seed, dataset). Throws NumericError
/// naming the epoch if the loss goes non-finite.
TrainResult train(const Network& net, const Dataset& data, const TrainConfig& cfg);

/// Mean accuracy of the network's predictions under the given loss
/// convention (argmax for CE/MSE-onehot, logit sign for BCE).
double accuracy(const Network& net, const Dataset& data, LossKind loss);

std::string to_json(const Network& net);
Network network_from_json(const std::string& text);
void save(const Network& net, const std::string& path);
Network load(const std::string& path);

/// FNV-1a digest of the canonical serialization, as fixed-width hex.
std::string network_hash(const Network& net);

}  // namespace lch
