#include "gaqat/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "gaqat/errors.hpp"
#include "json.hpp"

namespace gaqat {

using nlohmann::json;

const char* to_string(QatMethod method) {
    switch (method) {
        case QatMethod::lsq_erm: return "lsq_erm";
        case QatMethod::sagm_lsq: return "sagm_lsq";
        case QatMethod::gaqat: return "gaqat";
    }
    return "?";
}

QatMethod parse_qat_method(std::string_view name) {
    if (name == "lsq_erm") return QatMethod::lsq_erm;
    if (name == "sagm_lsq") return QatMethod::sagm_lsq;
    if (name == "gaqat") return QatMethod::gaqat;
    throw ConfigError("unknown QAT method '" + std::string(name) + "'");
}

std::vector<std::size_t> ExperimentConfig::layer_dims() const {
    std::vector<std::size_t> dims{2};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(2);
    return dims;
}

void ExperimentConfig::validate() const {
    if (angles.size() < 2) throw ConfigError("need at least two domains");
    if (n_per_domain == 0) throw ConfigError("n_per_domain must be positive");
    if (!(noise >= 0.0)) throw ConfigError("noise must be >= 0");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
    if (batch_per_domain == 0) throw ConfigError("batch_per_domain must be positive");
    for (std::size_t h : hidden)
        if (h == 0) throw ConfigError("hidden widths must be positive");
    for (int b : {weight_bits, activation_bits})
        if (b != 0 && (b < 2 || b > 16)) throw ConfigError("bit-widths must be 0 (off) or in [2, 16]");
    if (!(pretrain_lr > 0.0)) throw ConfigError("pretrain_lr must be positive");
    if (qat_steps == 0) throw ConfigError("qat_steps (T) must be positive");
    sagm.validate();
    freeze.validate();
}

namespace {

void from_json(const json& j, ExperimentConfig& c) {
    static const std::vector<std::string> known{
        "seed", "angles", "n_per_domain", "noise", "test_domain", "val_fraction", "validation", "batch_per_domain",
        "hidden", "weight_bits", "activation_bits", "calibration_samples", "pretrain_steps", "pretrain_lr",
        "qat_steps", "method", "rho", "alpha", "lr_weights", "lr_scales", "grad_norm_floor",
        "perturb_with_epsilon", "threshold", "interval", "window", "policy", "aggregation_stride", "eval_every",
        "output_dir", "pretrain_checkpoint"};
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key '" + key + "'");

    auto take = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    try {
        take("seed", c.seed);
        take("angles", c.angles);
        take("n_per_domain", c.n_per_domain);
        take("noise", c.noise);
        take("test_domain", c.test_domain);
        take("val_fraction", c.val_fraction);
        if (j.contains("validation")) {
            const auto v = j.at("validation").get<std::string>();
            if (v == "test_domain")
                c.validation = ValidationMode::test_domain;
            else if (v == "in_domain")
                c.validation = ValidationMode::in_domain;
            else
                throw ConfigError("validation must be 'test_domain' or 'in_domain'");
        }
        take("batch_per_domain", c.batch_per_domain);
        take("hidden", c.hidden);
        take("weight_bits", c.weight_bits);
        take("activation_bits", c.activation_bits);
        take("calibration_samples", c.calibration_samples);
        take("pretrain_steps", c.pretrain_steps);
        take("pretrain_lr", c.pretrain_lr);
        take("qat_steps", c.qat_steps);
        if (j.contains("method")) c.method = parse_qat_method(j.at("method").get<std::string>());
        take("rho", c.sagm.rho);
        take("alpha", c.sagm.alpha);
        take("lr_weights", c.sagm.lr_weights);
        take("lr_scales", c.sagm.lr_scales);
        take("grad_norm_floor", c.sagm.grad_norm_floor);
        take("perturb_with_epsilon", c.sagm.perturb_with_epsilon);
        take("threshold", c.freeze.threshold);
        take("interval", c.freeze.interval);
        take("window", c.freeze.window);
        if (j.contains("policy")) c.freeze.policy = parse_freeze_policy(j.at("policy").get<std::string>());
        take("aggregation_stride", c.aggregation_stride);
        take("eval_every", c.eval_every);
        if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
        if (j.contains("pretrain_checkpoint")) c.pretrain_checkpoint = j.at("pretrain_checkpoint").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
}

nlohmann::ordered_json to_json_object(const ExperimentConfig& c) {
    nlohmann::ordered_json j;
    j["seed"] = c.seed;
    j["angles"] = c.angles;
    j["n_per_domain"] = c.n_per_domain;
    j["noise"] = c.noise;
    j["test_domain"] = c.test_domain;
    j["val_fraction"] = c.val_fraction;
    j["validation"] = c.validation == ValidationMode::test_domain ? "test_domain" : "in_domain";
    j["batch_per_domain"] = c.batch_per_domain;
    j["hidden"] = c.hidden;
    j["weight_bits"] = c.weight_bits;
    j["activation_bits"] = c.activation_bits;
    j["calibration_samples"] = c.calibration_samples;
    j["pretrain_steps"] = c.pretrain_steps;
    j["pretrain_lr"] = c.pretrain_lr;
    j["qat_steps"] = c.qat_steps;
    j["method"] = to_string(c.method);
    j["rho"] = c.sagm.rho;
    j["alpha"] = c.sagm.alpha;
    j["lr_weights"] = c.sagm.lr_weights;
    j["lr_scales"] = c.sagm.lr_scales;
    j["grad_norm_floor"] = c.sagm.grad_norm_floor;
    j["perturb_with_epsilon"] = c.sagm.perturb_with_epsilon;
    j["threshold"] = c.freeze.threshold;
    j["interval"] = c.freeze.interval;
    j["window"] = c.freeze.window;
    j["policy"] = to_string(c.freeze.policy);
    j["aggregation_stride"] = c.aggregation_stride;
    j["eval_every"] = c.eval_every;
    j["output_dir"] = c.output_dir.string();
    j["pretrain_checkpoint"] = c.pretrain_checkpoint.string();
    return j;
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    from_json(j, cfg);
    return cfg;
}

std::string config_to_json_text(const ExperimentConfig& cfg) { return to_json_object(cfg).dump(2) + "\n"; }

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json_text(ss.str());
}

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) throw ConfigError("override must look like key=value");
    const std::string key(assignment.substr(0, eq));
    const std::string raw(assignment.substr(eq + 1));
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    json patch = json::object();
    patch[key] = value;
    from_json(patch, cfg);
}

}  // namespace gaqat
