#pragma once

#include <random>
#include <string>
#include <vector>

#include "gaqat/experiments.hpp"
#include "gaqat/network.hpp"
#include "oracles.hpp"

namespace testing_support {

struct GradInstance {
    gaqat::QuantizedNetwork net;
    gaqat::Batch batch;
};

inline gaqat::Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    gaqat::Matrix m(r, c);
    for (double& v : m.values()) v = g(rng);
    return m;
}

/// Small random quantized network and batch whose quantizer inputs sit at least
/// `margin` away from rounding ties and clip bounds, and whose ReLU inputs sit at
/// least `margin` away from zero. Instances that violate this are redrawn.
inline GradInstance random_instance(std::mt19937_64& rng, double margin = 1e-3) {
    std::uniform_int_distribution<int> width(2, 6), depth(2, 4), classes(2, 4), rows(3, 8), bits(2, 5);
    std::uniform_real_distribution<double> shrink(0.5, 1.1);
    std::bernoulli_distribution coin(0.5);
    for (;;) {
        std::vector<std::size_t> dims{static_cast<std::size_t>(width(rng))};
        const int hidden = depth(rng) - 1;
        for (int i = 0; i < hidden; ++i) dims.push_back(static_cast<std::size_t>(width(rng)));
        dims.push_back(static_cast<std::size_t>(classes(rng)));
        auto net = gaqat::QuantizedNetwork::make_mlp(dims, rng());

        // Nonzero biases so that bias gradients and ReLU boundaries are exercised.
        auto params = net.parameters();
        std::normal_distribution<double> g(0.0, 0.3);
        std::size_t k = 0;
        for (const auto& l : net.layers()) {
            k += l.weights.size();
            for (std::size_t o = 0; o < l.out_dim(); ++o) params[k++] = g(rng);
        }
        net.assign_parameters(params);

        // Exemption policy half the time, otherwise a random policy.
        gaqat::QuantizationSpec spec{bits(rng), bits(rng)};
        if (coin(rng)) {
            net.enable_quantization(spec);
        } else {
            std::vector<gaqat::LayerQuantPolicy> policy(net.num_layers());
            for (auto& p : policy) p = {coin(rng), coin(rng)};
            net.set_quantization(policy, spec);
        }

        const std::size_t n = static_cast<std::size_t>(rows(rng));
        gaqat::Batch batch{random_matrix(n, dims.front(), rng), {}};
        std::uniform_int_distribution<int> label(0, static_cast<int>(dims.back()) - 1);
        for (std::size_t r = 0; r < n; ++r) batch.labels.push_back(label(rng));

        gaqat::calibrate_scales(net, batch.features);
        auto scales = net.scales();
        for (double& s : scales) s *= shrink(rng);  // some entries clip
        net.assign_scales(scales);

        oracle::SurrogateLoss surrogate(oracle::describe(net),
                                        {batch.features.values().begin(), batch.features.values().end()}, n,
                                        batch.labels);
        if (surrogate.margin() >= margin) return {std::move(net), std::move(batch)};
    }
}

struct GradCheck {
    std::size_t checked = 0;
    std::size_t failures = 0;
    double worst_error = 0.0;
    std::string worst_entry;
};

/// Compares every analytic weight, bias and scale gradient against central
/// differences of the frozen-residual surrogate loss.
inline GradCheck check_gradients(const GradInstance& inst, double rel = 1e-4, double abs_floor = 1e-7) {
    const auto& b = inst.batch;
    oracle::SurrogateLoss surrogate(oracle::describe(inst.net), {b.features.values().begin(), b.features.values().end()},
                                    b.size(), b.labels);
    const auto fd = oracle::finite_difference_gradient(surrogate);
    const auto analytic = inst.net.evaluate(b).grads;

    GradCheck out;
    auto compare = [&](double a, double f, const std::string& what) {
        ++out.checked;
        const double err = std::abs(a - f) / std::max(std::max(std::abs(a), std::abs(f)), abs_floor / rel);
        if (err > out.worst_error) {
            out.worst_error = err;
            out.worst_entry = what;
        }
        if (!oracle::close(a, f, rel, abs_floor)) ++out.failures;
    };
    if (fd.params.size() != analytic.params.size() || fd.scales.size() != analytic.scales.size()) {
        out.failures = 1;
        out.worst_entry = "layout mismatch";
        return out;
    }
    for (std::size_t i = 0; i < fd.params.size(); ++i) compare(analytic.params[i], fd.params[i], "param " + std::to_string(i));
    const auto ids = inst.net.quantizer_ids();
    for (std::size_t i = 0; i < fd.scales.size(); ++i) compare(analytic.scales[i], fd.scales[i], ids[i]);
    return out;
}

}  // namespace testing_support
