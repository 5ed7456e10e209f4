#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gaqat/disorder.hpp"

namespace gaqat {

using FreezeMap = std::map<std::string, bool>;

/// Task and smoothness gradients of one scale at one step.
struct ScaleGradientPair {
    std::string scale_id;
    double task = 0.0;
    double smooth = 0.0;
};

enum class FreezePolicy : std::uint8_t {
    standard,       // freeze when disorder < r
    reverse_ratio,  // freeze when disorder >= r
    no_unfreeze,    // freeze when disorder < r, never unfreeze
};

const char* to_string(FreezePolicy policy);
FreezePolicy parse_freeze_policy(std::string_view name);

struct FreezeConfig {
    double threshold = 0.30;
    std::size_t interval = 350;  // decision interval K
    std::size_t window = 0;      // disorder window; 0 means "same as interval"
    FreezePolicy policy = FreezePolicy::standard;

    std::size_t window_length() const { return window == 0 ? interval : window; }
    void validate() const;
};

/// Selective-freezing decision rule. Flags change only in decide(), which may only
/// be called on steps that are multiples of the interval.
class FreezeController {
public:
    FreezeController(std::span<const std::string> ids, const FreezeConfig& cfg);

    bool is_decision_step(std::int64_t step) const;

    /// Applies the policy to every registered scale. Throws ContractError when
    /// called off-schedule or when `disorders` does not cover every scale.
    const FreezeMap& decide(std::int64_t step, const std::map<std::string, double>& disorders);

    const FreezeMap& frozen() const { return frozen_; }
    bool frozen(const std::string& id) const;
    const FreezeConfig& config() const { return cfg_; }

private:
    FreezeConfig cfg_;
    FreezeMap frozen_;
};

/// Tracks task and smoothness disorder for every scale and runs the controller on
/// schedule. Smoothness disorder is observational only.
class SelectiveFreezing {
public:
    /// With `decisions_enabled == false` disorders are still tracked but nothing freezes.
    SelectiveFreezing(std::span<const std::string> ids, const FreezeConfig& cfg, bool decisions_enabled = true);

    /// Records the step's gradients, then runs a decision round if `step` is on
    /// schedule and every window is full. Returns true when a round ran.
    bool observe(std::int64_t step, std::span<const ScaleGradientPair> pairs);

    const FreezeMap& frozen() const { return controller_.frozen(); }
    const DisorderTracker& task_tracker() const { return task_; }
    const DisorderTracker& smooth_tracker() const { return smooth_; }
    std::optional<std::int64_t> last_step() const { return last_step_; }

private:
    std::vector<std::string> ids_;
    DisorderTracker task_;
    DisorderTracker smooth_;
    FreezeController controller_;
    bool decisions_enabled_;
    std::optional<std::int64_t> last_step_;
};

/// One scale-gradient observation from a training log.
struct StepGradient {
    std::int64_t step = 0;
    std::string scale_id;
    double task = 0.0;
    double smooth = 0.0;
};

struct TimelineEntry {
    std::int64_t step = 0;
    FreezeMap frozen;  // flags in effect after this step's decision round
    bool operator==(const TimelineEntry&) const = default;
};

using FreezeTimeline = std::vector<TimelineEntry>;

/// Re-runs the controller over recorded gradients. Records must be sorted by
/// (step, scale_id), contiguous in step, and list the same scales every step.
FreezeTimeline replay(std::span<const StepGradient> log, const FreezeConfig& cfg);

}  // namespace gaqat
