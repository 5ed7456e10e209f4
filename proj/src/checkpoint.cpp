#include "gaqat/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "gaqat/errors.hpp"

namespace gaqat {

namespace {

constexpr std::array<char, 8> kMagic{'G', 'A', 'Q', 'A', 'T', 'C', 'K', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::ostream& out, T value) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    out.write(bytes, sizeof(T));
}

template <class T>
T get(std::istream& in) {
    char bytes[sizeof(T)];
    if (!in.read(bytes, sizeof(T))) throw InputError("checkpoint truncated");
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

void put_quantizer(std::ostream& out, const std::optional<QuantizerState>& q) {
    put<std::uint8_t>(out, q ? 1 : 0);
    if (!q) return;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(q->bits));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(q->mode));
    put<double>(out, q->scale);
    put<std::uint8_t>(out, q->frozen_task_grad ? 1 : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(q->id.size()));
    out.write(q->id.data(), static_cast<std::streamsize>(q->id.size()));
}

std::optional<QuantizerState> get_quantizer(std::istream& in) {
    const auto present = get<std::uint8_t>(in);
    if (present == 0) return std::nullopt;
    if (present != 1) throw InputError("checkpoint: bad quantizer presence flag");
    const auto bits = static_cast<int>(get<std::uint32_t>(in));
    const auto mode = get<std::uint8_t>(in);
    if (mode > 1) throw InputError("checkpoint: bad quantizer mode");
    const double scale = get<double>(in);
    const bool frozen = get<std::uint8_t>(in) != 0;
    const auto len = get<std::uint32_t>(in);
    if (len > 4096) throw InputError("checkpoint: quantizer id too long");
    std::string id(len, '\0');
    if (!in.read(id.data(), len)) throw InputError("checkpoint truncated");
    auto q = QuantizerState::make(std::move(id), bits, static_cast<QuantMode>(mode), scale);
    q.frozen_task_grad = frozen;
    return q;
}

}  // namespace

void write_checkpoint(std::ostream& out, const QuantizedNetwork& net) {
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(net.num_layers()));
    for (std::size_t li = 0; li < net.num_layers(); ++li) {
        const auto& layer = net.layers()[li];
        put<std::uint32_t>(out, static_cast<std::uint32_t>(layer.in_dim()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(layer.out_dim()));
        put<std::uint8_t>(out, static_cast<std::uint8_t>(layer.activation));
        for (double w : layer.weights.values()) put<double>(out, w);
        for (double b : layer.bias) put<double>(out, b);
        put_quantizer(out, net.weight_quantizers()[li]);
        put_quantizer(out, net.activation_quantizers()[li]);
    }
    if (!out) throw InputError("checkpoint write failed");
}

QuantizedNetwork read_checkpoint(std::istream& in) {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw InputError("not a checkpoint (bad magic)");
    const auto version = get<std::uint32_t>(in);
    if (version != kCheckpointVersion) throw InputError("unsupported checkpoint version " + std::to_string(version));
    const auto num_layers = get<std::uint32_t>(in);
    if (num_layers == 0 || num_layers > 1024) throw InputError("checkpoint: implausible layer count");

    std::vector<DenseLayer> layers;
    std::vector<std::pair<std::optional<QuantizerState>, std::optional<QuantizerState>>> quantizers;
    for (std::uint32_t li = 0; li < num_layers; ++li) {
        const auto in_dim = get<std::uint32_t>(in);
        const auto out_dim = get<std::uint32_t>(in);
        if (in_dim == 0 || out_dim == 0 || static_cast<std::uint64_t>(in_dim) * out_dim > (1u << 26))
            throw InputError("checkpoint: implausible layer shape");
        const auto act = get<std::uint8_t>(in);
        if (act > 1) throw InputError("checkpoint: bad activation tag");
        DenseLayer layer{Matrix(out_dim, in_dim), std::vector<double>(out_dim), static_cast<Activation>(act)};
        for (double& w : layer.weights.values()) w = get<double>(in);
        for (double& b : layer.bias) b = get<double>(in);
        layers.push_back(std::move(layer));
        auto wq = get_quantizer(in);
        auto aq = get_quantizer(in);
        quantizers.emplace_back(std::move(wq), std::move(aq));
    }
    QuantizedNetwork net(std::move(layers));
    for (std::size_t li = 0; li < quantizers.size(); ++li)
        net.set_layer_quantizers(li, std::move(quantizers[li].first), std::move(quantizers[li].second));
    return net;
}

void save_checkpoint(const std::filesystem::path& path, const QuantizedNetwork& net) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write checkpoint '" + path.string() + "'");
    write_checkpoint(out, net);
}

QuantizedNetwork load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint '" + path.string() + "'");
    return read_checkpoint(in);
}

}  // namespace gaqat
