#include "gaqat/gradlog.hpp"

#include <fstream>
#include <istream>

#include "gaqat/errors.hpp"
#include "json.hpp"

namespace gaqat {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json optional_number(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::optional<double> read_optional(const nlohmann::json& j, const char* key) {
    const auto& v = j.at(key);
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
}

}  // namespace

std::string to_ndjson(const ScaleGradLogRecord& rec) {
    ordered_json j;
    j["schema"] = kGradLogSchema;
    j["step"] = rec.step;
    j["scale_id"] = rec.scale_id;
    j["g_task"] = rec.g_task;
    j["g_smooth"] = rec.g_smooth;
    j["frozen"] = rec.frozen;
    j["delta_task"] = optional_number(rec.delta_task);
    j["delta_smooth"] = optional_number(rec.delta_smooth);
    j["loss_er"] = rec.loss_er;
    j["loss_p"] = optional_number(rec.loss_p);
    j["gap"] = optional_number(rec.gap);
    return j.dump();
}

ScaleGradLogRecord parse_log_line(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("gradient log: unparsable line: ") + e.what());
    }
    try {
        if (j.at("schema").get<int>() != kGradLogSchema) throw InputError("gradient log: unsupported schema version");
        ScaleGradLogRecord rec;
        rec.step = j.at("step").get<std::int64_t>();
        rec.scale_id = j.at("scale_id").get<std::string>();
        rec.g_task = j.at("g_task").get<double>();
        rec.g_smooth = j.at("g_smooth").get<double>();
        rec.frozen = j.at("frozen").get<bool>();
        rec.delta_task = read_optional(j, "delta_task");
        rec.delta_smooth = read_optional(j, "delta_smooth");
        rec.loss_er = j.at("loss_er").get<double>();
        rec.loss_p = read_optional(j, "loss_p");
        rec.gap = read_optional(j, "gap");
        return rec;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("gradient log: malformed record: ") + e.what());
    }
}

std::vector<ScaleGradLogRecord> read_grad_log(std::istream& in) {
    std::vector<ScaleGradLogRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(parse_log_line(line));
    }
    return out;
}

std::vector<ScaleGradLogRecord> read_grad_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open gradient log '" + path.string() + "'");
    return read_grad_log(in);
}

std::vector<StepGradient> to_step_gradients(const std::vector<ScaleGradLogRecord>& log) {
    std::vector<StepGradient> out;
    out.reserve(log.size());
    for (const auto& r : log) out.push_back({r.step, r.scale_id, r.g_task, r.g_smooth});
    return out;
}

FreezeTimeline recorded_timeline(const std::vector<ScaleGradLogRecord>& log) {
    FreezeTimeline out;
    for (const auto& r : log) {
        if (out.empty() || out.back().step != r.step) out.push_back({r.step, {}});
        out.back().frozen[r.scale_id] = r.frozen;
    }
    return out;
}

}  // namespace gaqat
