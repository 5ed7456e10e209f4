#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gaqat {

enum class QuantMode : std::uint8_t { weight = 0, activation = 1 };

const char* to_string(QuantMode mode);

struct QuantBounds {
    int lower;
    int upper;
};

/// Integer clip range: signed for weights, unsigned for activations.
QuantBounds quant_bounds(int bits, QuantMode mode);

/// Learnable per-tensor uniform quantizer.
struct QuantizerState {
    std::string id;
    double scale = 1.0;
    int bits = 4;
    QuantMode mode = QuantMode::weight;
    int lower = -8;
    int upper = 7;
    bool frozen_task_grad = false;

    /// Builds a state with bounds derived from (bits, mode). Throws ConfigError on
    /// bits < 2 or a non-positive scale.
    static QuantizerState make(std::string id, int bits, QuantMode mode, double scale = 1.0);

    bool operator==(const QuantizerState&) const = default;
};

/// Backward cache of one quantize() call.
struct QuantizeRecord {
    double scale = 0.0;
    std::vector<double> raw;
    std::vector<std::uint8_t> in_range;  // 1 where lower <= v/s <= upper
    std::vector<double> levels;          // round(clip(v/s, lower, upper))
};

struct QuantizeResult {
    std::vector<double> values;
    QuantizeRecord record;
};

/// Round to nearest, ties away from zero.
inline double round_to_level(double x) { return std::round(x); }

/// Fake quantization: s * round(clip(v / s, l, u)).
QuantizeResult quantize(std::span<const double> v, const QuantizerState& q);

/// Straight-through input gradient: upstream masked by the clip indicator.
std::vector<double> ste_input_grad(std::span<const double> upstream, const QuantizeRecord& rec);

/// Learned-step-size gradient of the quantizer output with respect to its scale,
/// contracted with upstream:
///   d v_hat / d s = round(v/s) - v/s inside bounds, l below, u above.
double scale_grad(std::span<const double> upstream, const QuantizeRecord& rec, const QuantizerState& q);

struct ScaleInit {
    double scale = 1.0;
    bool fallback = false;  // true when v was all zero and scale defaulted to 1
};

inline constexpr int kMseInitCandidates = 100;

/// Picks the scale minimising ||v - quantize(v; s)||^2 over a grid relative to the
/// smallest non-clipping scale of v.
ScaleInit init_scale_mse(std::span<const double> v, int bits, QuantMode mode);

}  // namespace gaqat
