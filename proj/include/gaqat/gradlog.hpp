#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gaqat/freeze.hpp"

namespace gaqat {

inline constexpr int kGradLogSchema = 1;

/// One line of the NDJSON scale-gradient log.
struct ScaleGradLogRecord {
    std::int64_t step = 0;
    std::string scale_id;
    double g_task = 0.0;
    double g_smooth = 0.0;
    bool frozen = false;  // flag in effect after this step's decision round
    std::optional<double> delta_task;
    std::optional<double> delta_smooth;
    double loss_er = 0.0;
    std::optional<double> loss_p;
    std::optional<double> gap;

    bool operator==(const ScaleGradLogRecord&) const = default;
};

std::string to_ndjson(const ScaleGradLogRecord& rec);
ScaleGradLogRecord parse_log_line(const std::string& line);

std::vector<ScaleGradLogRecord> read_grad_log(std::istream& in);
std::vector<ScaleGradLogRecord> read_grad_log(const std::filesystem::path& path);

std::vector<StepGradient> to_step_gradients(const std::vector<ScaleGradLogRecord>& log);

/// Recorded frozen flags as a timeline, one entry per step.
FreezeTimeline recorded_timeline(const std::vector<ScaleGradLogRecord>& log);

}  // namespace gaqat
