#include "gaqat/freeze.hpp"

#include <cmath>

#include "gaqat/errors.hpp"

namespace gaqat {

const char* to_string(FreezePolicy policy) {
    switch (policy) {
        case FreezePolicy::standard: return "standard";
        case FreezePolicy::reverse_ratio: return "reverse_ratio";
        case FreezePolicy::no_unfreeze: return "no_unfreeze";
    }
    return "?";
}

FreezePolicy parse_freeze_policy(std::string_view name) {
    if (name == "standard") return FreezePolicy::standard;
    if (name == "reverse_ratio") return FreezePolicy::reverse_ratio;
    if (name == "no_unfreeze") return FreezePolicy::no_unfreeze;
    throw ConfigError("unknown freeze policy '" + std::string(name) + "'");
}

void FreezeConfig::validate() const {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("freeze threshold must lie in [0, 1]");
    if (interval == 0) throw ConfigError("freeze interval must be positive");
}

FreezeController::FreezeController(std::span<const std::string> ids, const FreezeConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    for (const auto& id : ids)
        if (!frozen_.emplace(id, false).second) throw ContractError("duplicate scale id '" + id + "'");
}

bool FreezeController::is_decision_step(std::int64_t step) const {
    return step % static_cast<std::int64_t>(cfg_.interval) == 0;
}

const FreezeMap& FreezeController::decide(std::int64_t step, const std::map<std::string, double>& disorders) {
    if (!is_decision_step(step))
        throw ContractError("decide() called at step " + std::to_string(step) + ", which is not a multiple of " +
                            std::to_string(cfg_.interval));
    for (const auto& [id, _] : disorders)
        if (!frozen_.contains(id)) throw ContractError("disorder reported for unknown scale '" + id + "'");

    FreezeMap next = frozen_;
    for (auto& [id, flag] : next) {
        const auto it = disorders.find(id);
        if (it == disorders.end()) throw ContractError("no disorder value for scale '" + id + "'");
        const double delta = it->second;
        if (std::isnan(delta)) throw NumericError("disorder for '" + id + "' is NaN");
        switch (cfg_.policy) {
            case FreezePolicy::standard: flag = delta < cfg_.threshold; break;
            case FreezePolicy::reverse_ratio: flag = delta >= cfg_.threshold; break;
            case FreezePolicy::no_unfreeze: flag = flag || delta < cfg_.threshold; break;
        }
    }
    frozen_ = std::move(next);
    return frozen_;
}

bool FreezeController::frozen(const std::string& id) const {
    const auto it = frozen_.find(id);
    if (it == frozen_.end()) throw ContractError("unknown scale '" + id + "'");
    return it->second;
}

SelectiveFreezing::SelectiveFreezing(std::span<const std::string> ids, const FreezeConfig& cfg, bool decisions_enabled)
    : ids_(ids.begin(), ids.end()),
      task_(cfg.window_length(), ids),
      smooth_(cfg.window_length(), ids),
      controller_(ids, cfg),
      decisions_enabled_(decisions_enabled) {}

bool SelectiveFreezing::observe(std::int64_t step, std::span<const ScaleGradientPair> pairs) {
    if (last_step_ && step != *last_step_ + 1)
        throw ContractError("observe: step " + std::to_string(step) + " does not follow " + std::to_string(*last_step_));
    if (pairs.size() != ids_.size())
        throw ContractError("observe: expected " + std::to_string(ids_.size()) + " scale gradients, got " +
                            std::to_string(pairs.size()));
    for (const auto& p : pairs) {
        task_.record(p.scale_id, p.task);
        smooth_.record(p.scale_id, p.smooth);
    }
    last_step_ = step;

    if (!decisions_enabled_ || !controller_.is_decision_step(step) || !task_.ready()) return false;
    std::map<std::string, double> disorders;
    for (const auto& id : ids_) disorders.emplace(id, *task_.disorder(id));
    controller_.decide(step, disorders);
    return true;
}

FreezeTimeline replay(std::span<const StepGradient> log, const FreezeConfig& cfg) {
    FreezeTimeline timeline;
    if (log.empty()) return timeline;

    // Scale set from the first step.
    const std::int64_t first = log.front().step;
    std::vector<std::string> ids;
    for (const auto& rec : log) {
        if (rec.step != first) break;
        ids.push_back(rec.scale_id);
    }
    for (std::size_t i = 1; i < ids.size(); ++i)
        if (!(ids[i - 1] < ids[i])) throw InputError("replay: log is not sorted by (step, scale_id)");

    SelectiveFreezing freezing(ids, cfg);
    std::vector<ScaleGradientPair> pairs;
    std::size_t pos = 0;
    std::int64_t expected = first;
    while (pos < log.size()) {
        const std::int64_t step = log[pos].step;
        if (step != expected)
            throw InputError("replay: expected step " + std::to_string(expected) + ", found " + std::to_string(step));
        pairs.clear();
        for (std::size_t k = 0; k < ids.size(); ++k, ++pos) {
            if (pos >= log.size() || log[pos].step != step || log[pos].scale_id != ids[k])
                throw InputError("replay: step " + std::to_string(step) + " does not list scales in the expected order");
            pairs.push_back({log[pos].scale_id, log[pos].task, log[pos].smooth});
        }
        freezing.observe(step, pairs);
        timeline.push_back({step, freezing.frozen()});
        ++expected;
    }
    return timeline;
}

}  // namespace gaqat
