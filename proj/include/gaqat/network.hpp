#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gaqat/quantizer.hpp"
#include "gaqat/tensor.hpp"

namespace gaqat {

enum class Activation : std::uint8_t { relu = 0, identity = 1 };

struct DenseLayer {
    Matrix weights;  // out_dim x in_dim
    std::vector<double> bias;
    Activation activation = Activation::relu;

    std::size_t in_dim() const { return weights.cols(); }
    std::size_t out_dim() const { return weights.rows(); }
};

/// Which tensors of a layer carry a fake quantizer.
struct LayerQuantPolicy {
    bool weights = false;
    bool activations = false;
    bool operator==(const LayerQuantPolicy&) const = default;
};

/// Bit-widths for the default exemption policy; 0 disables that quantizer kind.
struct QuantizationSpec {
    int weight_bits = 0;
    int activation_bits = 0;
};

/// Labeled mini-batch: one sample per row.
struct Batch {
    Matrix features;
    std::vector<int> labels;
    std::size_t size() const { return labels.size(); }
};

/// Gradients in the network's canonical flat layout. `params` holds every layer's
/// weights (row-major) followed by its bias, layer by layer; `scales` follows
/// quantizer_ids() order.
struct GradientSet {
    std::vector<double> params;
    std::vector<double> scales;
};

struct LossGradients {
    double loss = 0.0;
    GradientSet grads;
};

struct LayerTape {
    Matrix input;
    Matrix effective_weights;
    Matrix pre_activation;
    std::optional<QuantizeRecord> weight_record;
    std::optional<QuantizeRecord> activation_record;
};

/// Everything backward() needs from one forward() call. Single use.
class ForwardTape {
public:
    const std::vector<LayerTape>& layers() const { return layers_; }
    std::size_t batch_rows() const { return rows_; }
    bool spent() const { return spent_; }

private:
    friend class QuantizedNetwork;
    std::vector<LayerTape> layers_;
    std::uint64_t version_ = 0;
    std::size_t rows_ = 0;
    bool spent_ = false;
};

struct ForwardResult {
    Matrix logits;
    ForwardTape tape;
};

struct CrossEntropyResult {
    double loss = 0.0;
    Matrix dlogits;
};

/// Mean softmax cross-entropy and its gradient with respect to the logits.
CrossEntropyResult cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Feed-forward classifier with optional per-layer fake quantizers. Activation
/// quantizers act on a layer's output after its nonlinearity.
class QuantizedNetwork {
public:
    QuantizedNetwork() = default;
    explicit QuantizedNetwork(std::vector<DenseLayer> layers);

    /// MLP with He-uniform weights, zero biases, ReLU hidden layers and an
    /// identity output layer. dims = {input, hidden..., classes}.
    static QuantizedNetwork make_mlp(std::span<const std::size_t> dims, std::uint64_t seed);

    /// Installs quantizers following the exemption policy: the first layer has
    /// activation quantization only, the last layer none, all others both. Scales
    /// start at 1 and are expected to be calibrated afterwards.
    void enable_quantization(const QuantizationSpec& spec);

    /// Installs quantizers on an explicit per-layer policy.
    void set_quantization(std::span<const LayerQuantPolicy> policy, const QuantizationSpec& spec);

    void disable_quantization();

    ForwardResult forward(const Matrix& batch) const;

    /// Consumes the tape; a spent tape or one from an older parameter version is
    /// rejected with ContractError.
    GradientSet backward(ForwardTape& tape, const Matrix& dlogits) const;

    /// Forward, cross-entropy and backward on one batch.
    LossGradients evaluate(const Batch& batch) const;
    double loss(const Batch& batch) const;

    std::size_t num_layers() const { return layers_.size(); }
    std::size_t input_dim() const;
    std::size_t num_classes() const;
    const std::vector<DenseLayer>& layers() const { return layers_; }
    const std::vector<std::optional<QuantizerState>>& weight_quantizers() const { return weight_q_; }
    const std::vector<std::optional<QuantizerState>>& activation_quantizers() const { return act_q_; }
    std::vector<LayerQuantPolicy> quantization_policy() const;

    std::size_t num_parameters() const;
    std::vector<double> parameters() const;
    void assign_parameters(std::span<const double> flat);

    std::vector<std::string> quantizer_ids() const;
    std::vector<double> scales() const;
    void assign_scales(std::span<const double> scales);
    QuantizerState& quantizer(const std::string& id);
    const QuantizerState& quantizer(const std::string& id) const;
    void set_layer_quantizers(std::size_t layer, std::optional<QuantizerState> weight,
                              std::optional<QuantizerState> activation);

    std::uint64_t version() const { return version_; }

    bool operator==(const QuantizedNetwork& other) const;

private:
    void validate() const;
    void touch();

    std::vector<DenseLayer> layers_;
    std::vector<std::optional<QuantizerState>> weight_q_;
    std::vector<std::optional<QuantizerState>> act_q_;
    std::uint64_t version_ = 1;
};

/// Canonical quantizer ids, e.g. "layer1.w.s" and "layer1.a.s".
std::string weight_quantizer_id(std::size_t layer);
std::string activation_quantizer_id(std::size_t layer);

std::vector<int> predict(const Matrix& logits);

}  // namespace gaqat
