#include "gaqat/sagm.hpp"

#include <algorithm>

namespace gaqat {

void SagmConfig::validate() const {
    if (!(rho >= 0.0)) throw ConfigError("rho must be >= 0");
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
    if (!(lr_weights > 0.0)) throw ConfigError("lr_weights must be > 0");
    if (!(lr_scales > 0.0)) throw ConfigError("lr_scales must be > 0");
    if (!(grad_norm_floor > 0.0)) throw ConfigError("grad_norm_floor must be > 0");
}

void apply_update(QuantizedNetwork& net, const DualGradients& duals, const FreezeMap& freeze, const SagmConfig& cfg) {
    const auto ids = net.quantizer_ids();
    for (const auto& [id, _] : freeze)
        if (std::find(ids.begin(), ids.end(), id) == ids.end())
            throw ContractError("freeze map names unknown quantizer '" + id + "'");
    if (duals.task.params.size() != net.num_parameters() || duals.smooth.params.size() != net.num_parameters() ||
        duals.task.scales.size() != ids.size() || duals.smooth.scales.size() != ids.size())
        throw ShapeError("apply_update: gradient sets do not match the network");

    std::vector<double> params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
        params[i] -= cfg.lr_weights * (duals.task.params[i] + duals.smooth.params[i]);

    std::vector<double> scales = net.scales();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto it = freeze.find(ids[i]);
        if (it == freeze.end()) throw ContractError("freeze map is missing quantizer '" + ids[i] + "'");
        const double step = it->second ? duals.smooth.scales[i] : duals.task.scales[i] + duals.smooth.scales[i];
        scales[i] = std::max(scales[i] - cfg.lr_scales * step, kMinScale);
    }

    net.assign_parameters(params);
    net.assign_scales(scales);
    for (std::size_t i = 0; i < ids.size(); ++i) net.quantizer(ids[i]).frozen_task_grad = freeze.at(ids[i]);
}

}  // namespace gaqat
