#include "gaqat/network.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <utility>

#include "gaqat/errors.hpp"

namespace gaqat {

namespace {

std::uint64_t next_version() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}

std::string dims_string(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

std::string weight_quantizer_id(std::size_t layer) { return "layer" + std::to_string(layer) + ".w.s"; }
std::string activation_quantizer_id(std::size_t layer) { return "layer" + std::to_string(layer) + ".a.s"; }

CrossEntropyResult cross_entropy(const Matrix& logits, std::span<const int> labels) {
    if (labels.size() != logits.rows())
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.rows()) + " rows");
    const std::size_t n = logits.rows();
    const std::size_t c = logits.cols();
    CrossEntropyResult out{0.0, Matrix(n, c)};
    if (n == 0) return out;
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= c)
            throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");

    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const auto z = logits.row(r);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - zmax);
        const double log_sum = std::log(sum);
        const auto y = static_cast<std::size_t>(labels[r]);
        total += -(z[y] - zmax - log_sum);
        auto g = out.dlogits.row(r);
        for (std::size_t j = 0; j < c; ++j) {
            const double p = std::exp(z[j] - zmax - log_sum);
            g[j] = (p - (j == y ? 1.0 : 0.0)) * inv_n;
        }
    }
    out.loss = total * inv_n;
    return out;
}

std::vector<int> predict(const Matrix& logits) {
    std::vector<int> out(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto z = logits.row(r);
        out[r] = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    }
    return out;
}

QuantizedNetwork::QuantizedNetwork(std::vector<DenseLayer> layers)
    : layers_(std::move(layers)), weight_q_(layers_.size()), act_q_(layers_.size()), version_(next_version()) {
    validate();
}

void QuantizedNetwork::touch() { version_ = next_version(); }

void QuantizedNetwork::validate() const {
    if (layers_.empty()) throw ConfigError("network needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.in_dim() == 0 || l.out_dim() == 0) throw ShapeError("layer " + std::to_string(i) + " has a zero dimension");
        if (l.bias.size() != l.out_dim()) throw ShapeError("layer " + std::to_string(i) + " bias size mismatch");
        if (i > 0 && layers_[i - 1].out_dim() != l.in_dim())
            throw ShapeError("layer " + std::to_string(i) + " expects " + std::to_string(l.in_dim()) +
                             " inputs, previous layer produces " + std::to_string(layers_[i - 1].out_dim()));
        if (!all_finite(l.weights.values()) || !all_finite(l.bias)) throw NumericError("layer " + std::to_string(i) + " has non-finite parameters");
    }
}

QuantizedNetwork QuantizedNetwork::make_mlp(std::span<const std::size_t> dims, std::uint64_t seed) {
    if (dims.size() < 2) throw ConfigError("make_mlp needs at least input and output dims");
    std::mt19937_64 rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const std::size_t in = dims[i];
        const std::size_t out = dims[i + 1];
        if (in == 0 || out == 0) throw ConfigError("make_mlp: zero layer width");
        const double bound = std::sqrt(6.0 / static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0),
                         i + 2 == dims.size() ? Activation::identity : Activation::relu};
        for (double& w : layer.weights.values()) w = dist(rng);
        layers.push_back(std::move(layer));
    }
    return QuantizedNetwork(std::move(layers));
}

void QuantizedNetwork::enable_quantization(const QuantizationSpec& spec) {
    std::vector<LayerQuantPolicy> policy(layers_.size());
    const std::size_t last = layers_.size() - 1;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (i == last) continue;
        policy[i].activations = spec.activation_bits > 0;
        policy[i].weights = i != 0 && spec.weight_bits > 0;
    }
    set_quantization(policy, spec);
}

void QuantizedNetwork::set_quantization(std::span<const LayerQuantPolicy> policy, const QuantizationSpec& spec) {
    if (policy.size() != layers_.size()) throw ShapeError("quantization policy must have one entry per layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        weight_q_[i].reset();
        act_q_[i].reset();
        if (policy[i].weights) weight_q_[i] = QuantizerState::make(weight_quantizer_id(i), spec.weight_bits, QuantMode::weight);
        if (policy[i].activations)
            act_q_[i] = QuantizerState::make(activation_quantizer_id(i), spec.activation_bits, QuantMode::activation);
    }
    touch();
}

void QuantizedNetwork::disable_quantization() {
    for (auto& q : weight_q_) q.reset();
    for (auto& q : act_q_) q.reset();
    touch();
}

void QuantizedNetwork::set_layer_quantizers(std::size_t layer, std::optional<QuantizerState> weight,
                                            std::optional<QuantizerState> activation) {
    if (layer >= layers_.size()) throw ContractError("layer index out of range");
    weight_q_[layer] = std::move(weight);
    act_q_[layer] = std::move(activation);
    touch();
}

std::size_t QuantizedNetwork::input_dim() const { return layers_.front().in_dim(); }
std::size_t QuantizedNetwork::num_classes() const { return layers_.back().out_dim(); }

std::vector<LayerQuantPolicy> QuantizedNetwork::quantization_policy() const {
    std::vector<LayerQuantPolicy> out(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) out[i] = {weight_q_[i].has_value(), act_q_[i].has_value()};
    return out;
}

ForwardResult QuantizedNetwork::forward(const Matrix& batch) const {
    if (batch.cols() != input_dim())
        throw ShapeError("forward: batch is " + dims_string(batch.rows(), batch.cols()) + ", network expects " +
                         std::to_string(input_dim()) + " features");
    if (!all_finite(batch.values())) throw NumericError("forward: non-finite input batch");

    ForwardResult result;
    auto& tape = result.tape;
    tape.version_ = version_;
    tape.rows_ = batch.rows();
    tape.layers_.resize(layers_.size());

    Matrix x = batch;
    const std::size_t n = batch.rows();
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const DenseLayer& layer = layers_[li];
        LayerTape& lt = tape.layers_[li];

        if (weight_q_[li]) {
            auto q = quantize(layer.weights.values(), *weight_q_[li]);
            lt.effective_weights = Matrix(layer.out_dim(), layer.in_dim());
            std::copy(q.values.begin(), q.values.end(), lt.effective_weights.values().begin());
            lt.weight_record = std::move(q.record);
        } else {
            lt.effective_weights = layer.weights;
        }
        const Matrix& w = lt.effective_weights;

        Matrix z(n, layer.out_dim());
        for (std::size_t r = 0; r < n; ++r) {
            const auto xr = x.row(r);
            auto zr = z.row(r);
            for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                const auto wo = w.row(o);
                double acc = layer.bias[o];
                for (std::size_t i = 0; i < layer.in_dim(); ++i) acc += xr[i] * wo[i];
                zr[o] = acc;
            }
        }

        Matrix a = z;
        if (layer.activation == Activation::relu)
            for (double& v : a.values()) v = v > 0.0 ? v : 0.0;

        if (act_q_[li]) {
            auto q = quantize(a.values(), *act_q_[li]);
            std::copy(q.values.begin(), q.values.end(), a.values().begin());
            lt.activation_record = std::move(q.record);
        }

        lt.input = std::move(x);
        lt.pre_activation = std::move(z);
        x = std::move(a);
    }
    result.logits = std::move(x);
    return result;
}

GradientSet QuantizedNetwork::backward(ForwardTape& tape, const Matrix& dlogits) const {
    if (tape.spent_) throw ContractError("backward: forward tape already consumed");
    if (tape.version_ != version_) throw ContractError("backward: tape is stale (parameters changed since forward)");
    if (tape.layers_.size() != layers_.size()) throw ContractError("backward: tape belongs to a different network");
    if (dlogits.rows() != tape.rows_ || dlogits.cols() != num_classes())
        throw ShapeError("backward: dlogits is " + dims_string(dlogits.rows(), dlogits.cols()) + ", expected " +
                         dims_string(tape.rows_, num_classes()));
    tape.spent_ = true;

    GradientSet grads;
    grads.params.assign(num_parameters(), 0.0);

    // Offsets of each layer's block in the flat parameter vector.
    std::vector<std::size_t> offset(layers_.size());
    std::size_t cursor = 0;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        offset[li] = cursor;
        cursor += layers_[li].weights.size() + layers_[li].bias.size();
    }
    std::vector<double> weight_scale_grad(layers_.size(), 0.0);
    std::vector<double> act_scale_grad(layers_.size(), 0.0);

    const std::size_t n = tape.rows_;
    Matrix upstream = dlogits;
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const DenseLayer& layer = layers_[li];
        const LayerTape& lt = tape.layers_[li];
        const std::size_t in = layer.in_dim();
        const std::size_t out = layer.out_dim();

        Matrix dz = std::move(upstream);
        if (act_q_[li]) {
            act_scale_grad[li] = scale_grad(dz.values(), *lt.activation_record, *act_q_[li]);
            const auto masked = ste_input_grad(dz.values(), *lt.activation_record);
            std::copy(masked.begin(), masked.end(), dz.values().begin());
        }
        if (layer.activation == Activation::relu) {
            const auto zv = lt.pre_activation.values();
            auto dv = dz.values();
            for (std::size_t k = 0; k < dv.size(); ++k)
                if (!(zv[k] > 0.0)) dv[k] = 0.0;
        }

        std::span<double> dweights(grads.params.data() + offset[li], out * in);
        std::span<double> dbias(grads.params.data() + offset[li] + out * in, out);
        for (std::size_t r = 0; r < n; ++r) {
            const auto xr = lt.input.row(r);
            const auto dzr = dz.row(r);
            for (std::size_t o = 0; o < out; ++o) {
                const double g = dzr[o];
                dbias[o] += g;
                double* dw = dweights.data() + o * in;
                for (std::size_t i = 0; i < in; ++i) dw[i] += g * xr[i];
            }
        }

        if (li > 0) {
            Matrix dx(n, in);
            const Matrix& w = lt.effective_weights;
            for (std::size_t r = 0; r < n; ++r) {
                const auto dzr = dz.row(r);
                auto dxr = dx.row(r);
                for (std::size_t o = 0; o < out; ++o) {
                    const double g = dzr[o];
                    const auto wo = w.row(o);
                    for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wo[i];
                }
            }
            upstream = std::move(dx);
        }

        if (weight_q_[li]) {
            weight_scale_grad[li] = scale_grad(dweights, *lt.weight_record, *weight_q_[li]);
            const auto masked = ste_input_grad(dweights, *lt.weight_record);
            std::copy(masked.begin(), masked.end(), dweights.begin());
        }
    }

    for (std::size_t li = 0; li < layers_.size(); ++li) {
        if (weight_q_[li]) grads.scales.push_back(weight_scale_grad[li]);
        if (act_q_[li]) grads.scales.push_back(act_scale_grad[li]);
    }
    return grads;
}

LossGradients QuantizedNetwork::evaluate(const Batch& batch) const {
    auto fwd = forward(batch.features);
    auto ce = cross_entropy(fwd.logits, batch.labels);
    if (!std::isfinite(ce.loss)) throw NumericError("non-finite loss");
    return {ce.loss, backward(fwd.tape, ce.dlogits)};
}

double QuantizedNetwork::loss(const Batch& batch) const {
    auto fwd = forward(batch.features);
    return cross_entropy(fwd.logits, batch.labels).loss;
}

std::size_t QuantizedNetwork::num_parameters() const {
    std::size_t total = 0;
    for (const auto& l : layers_) total += l.weights.size() + l.bias.size();
    return total;
}

std::vector<double> QuantizedNetwork::parameters() const {
    std::vector<double> flat;
    flat.reserve(num_parameters());
    for (const auto& l : layers_) {
        const auto w = l.weights.values();
        flat.insert(flat.end(), w.begin(), w.end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

void QuantizedNetwork::assign_parameters(std::span<const double> flat) {
    if (flat.size() != num_parameters())
        throw ShapeError("assign_parameters: got " + std::to_string(flat.size()) + " values, network has " +
                         std::to_string(num_parameters()));
    std::size_t k = 0;
    for (auto& l : layers_) {
        for (double& w : l.weights.values()) w = flat[k++];
        for (double& b : l.bias) b = flat[k++];
    }
    touch();
}

std::vector<std::string> QuantizedNetwork::quantizer_ids() const {
    std::vector<std::string> ids;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        if (weight_q_[li]) ids.push_back(weight_q_[li]->id);
        if (act_q_[li]) ids.push_back(act_q_[li]->id);
    }
    return ids;
}

std::vector<double> QuantizedNetwork::scales() const {
    std::vector<double> out;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        if (weight_q_[li]) out.push_back(weight_q_[li]->scale);
        if (act_q_[li]) out.push_back(act_q_[li]->scale);
    }
    return out;
}

void QuantizedNetwork::assign_scales(std::span<const double> scales) {
    std::size_t k = 0;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        for (auto* q : {&weight_q_[li], &act_q_[li]}) {
            if (!*q) continue;
            if (k >= scales.size()) throw ShapeError("assign_scales: too few scales");
            if (!(scales[k] > 0.0)) throw ConfigError("scale for '" + (*q)->id + "' must be positive");
            (*q)->scale = scales[k++];
        }
    }
    if (k != scales.size()) throw ShapeError("assign_scales: too many scales");
    touch();
}

QuantizerState& QuantizedNetwork::quantizer(const std::string& id) {
    // Handing out a mutable reference may change a scale.
    touch();
    return const_cast<QuantizerState&>(std::as_const(*this).quantizer(id));
}

const QuantizerState& QuantizedNetwork::quantizer(const std::string& id) const {
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        if (weight_q_[li] && weight_q_[li]->id == id) return *weight_q_[li];
        if (act_q_[li] && act_q_[li]->id == id) return *act_q_[li];
    }
    throw ContractError("unknown quantizer id '" + id + "'");
}

bool QuantizedNetwork::operator==(const QuantizedNetwork& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& a = layers_[i];
        const auto& b = other.layers_[i];
        if (a.weights != b.weights || a.bias != b.bias || a.activation != b.activation) return false;
    }
    return weight_q_ == other.weight_q_ && act_q_ == other.act_q_;
}

}  // namespace gaqat
