#include "gaqat/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gaqat/errors.hpp"
#include "gaqat/tensor.hpp"

namespace gaqat {

const char* to_string(QuantMode mode) {
    return mode == QuantMode::weight ? "weight" : "activation";
}

QuantBounds quant_bounds(int bits, QuantMode mode) {
    if (bits < 2 || bits > 16) throw ConfigError("bit-width must be in [2, 16], got " + std::to_string(bits));
    if (mode == QuantMode::weight) return {-(1 << (bits - 1)), (1 << (bits - 1)) - 1};
    return {0, (1 << bits) - 1};
}

QuantizerState QuantizerState::make(std::string id, int bits, QuantMode mode, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw ConfigError("quantizer '" + id + "' scale must be positive and finite");
    const QuantBounds b = quant_bounds(bits, mode);
    QuantizerState q;
    q.id = std::move(id);
    q.scale = scale;
    q.bits = bits;
    q.mode = mode;
    q.lower = b.lower;
    q.upper = b.upper;
    return q;
}

QuantizeResult quantize(std::span<const double> v, const QuantizerState& q) {
    if (!(q.scale > 0.0)) throw ConfigError("quantizer '" + q.id + "' has non-positive scale");
    if (!all_finite(v)) throw NumericError("non-finite input to quantizer '" + q.id + "'");
    const double s = q.scale;
    const double lo = q.lower;
    const double hi = q.upper;

    QuantizeResult out;
    out.values.resize(v.size());
    auto& rec = out.record;
    rec.scale = s;
    rec.raw.assign(v.begin(), v.end());
    rec.in_range.resize(v.size());
    rec.levels.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = v[i] / s;
        rec.in_range[i] = (x >= lo && x <= hi) ? 1 : 0;
        const double level = round_to_level(std::clamp(x, lo, hi));
        rec.levels[i] = level;
        out.values[i] = s * level;
    }
    return out;
}

std::vector<double> ste_input_grad(std::span<const double> upstream, const QuantizeRecord& rec) {
    if (upstream.size() != rec.in_range.size())
        throw ShapeError("ste_input_grad: upstream has " + std::to_string(upstream.size()) +
                         " entries, record has " + std::to_string(rec.in_range.size()));
    std::vector<double> out(upstream.size());
    for (std::size_t i = 0; i < upstream.size(); ++i) out[i] = rec.in_range[i] ? upstream[i] : 0.0;
    return out;
}

double scale_grad(std::span<const double> upstream, const QuantizeRecord& rec, const QuantizerState& q) {
    if (upstream.size() != rec.raw.size())
        throw ShapeError("scale_grad: upstream has " + std::to_string(upstream.size()) +
                         " entries, record has " + std::to_string(rec.raw.size()));
    if (rec.scale != q.scale) throw ContractError("scale_grad: record was produced with a different scale");
    const double s = q.scale;
    double total = 0.0;
    for (std::size_t i = 0; i < upstream.size(); ++i) {
        const double x = rec.raw[i] / s;
        double d;
        if (x < q.lower)
            d = q.lower;
        else if (x > q.upper)
            d = q.upper;
        else
            d = rec.levels[i] - x;
        total += upstream[i] * d;
    }
    return total;
}

namespace {

double quantization_sse(std::span<const double> v, double s, double lo, double hi) {
    double sse = 0.0;
    for (double x : v) {
        const double e = x - s * round_to_level(std::clamp(x / s, lo, hi));
        sse += e * e;
    }
    return sse;
}

}  // namespace

ScaleInit init_scale_mse(std::span<const double> v, int bits, QuantMode mode) {
    const QuantBounds b = quant_bounds(bits, mode);
    if (v.empty()) throw InputError("init_scale_mse: empty tensor");
    if (!all_finite(v)) throw NumericError("init_scale_mse: non-finite tensor");

    // Smallest scale at which nothing clips.
    double base = 0.0;
    for (double x : v) {
        if (x > 0.0) base = std::max(base, x / b.upper);
        if (x < 0.0 && b.lower < 0) base = std::max(base, x / b.lower);
    }
    if (base == 0.0) {
        // All zero, or only negative values under an unsigned quantizer.
        return {1.0, true};
    }

    const double lo = b.lower;
    const double hi = b.upper;
    double best_scale = base;
    double best_sse = quantization_sse(v, base, lo, hi);
    const double log_lo = std::log(0.1);
    const double log_hi = std::log(1.2);
    for (int i = 0; i < kMseInitCandidates; ++i) {
        const double tau = std::exp(log_lo + (log_hi - log_lo) * i / (kMseInitCandidates - 1));
        const double s = base * tau;
        const double sse = quantization_sse(v, s, lo, hi);
        if (sse < best_sse) {
            best_sse = sse;
            best_scale = s;
        }
    }
    return {best_scale, false};
}

}  // namespace gaqat
