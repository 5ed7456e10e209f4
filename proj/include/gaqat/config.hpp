#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gaqat/domains.hpp"
#include "gaqat/freeze.hpp"
#include "gaqat/sagm.hpp"

namespace gaqat {

enum class QatMethod : std::uint8_t { lsq_erm, sagm_lsq, gaqat };

const char* to_string(QatMethod method);
QatMethod parse_qat_method(std::string_view name);

/// Everything one experiment run needs. Keys of the JSON config file match the
/// field names below; see docs/config.md.
struct ExperimentConfig {
    std::uint64_t seed = 0;

    // Dataset.
    std::vector<double> angles{0.0, 30.0, 60.0, 90.0};
    std::size_t n_per_domain = 1000;
    double noise = 0.15;
    std::string test_domain = "d3";
    double val_fraction = 0.2;
    ValidationMode validation = ValidationMode::test_domain;
    std::size_t batch_per_domain = 32;

    // Architecture: input 2, these hidden widths, 2 classes.
    std::vector<std::size_t> hidden{64, 64};

    // Quantization; 0 turns a kind off.
    int weight_bits = 4;
    int activation_bits = 4;
    std::size_t calibration_samples = 512;

    // Training.
    std::size_t pretrain_steps = 2000;
    double pretrain_lr = 0.1;
    std::size_t qat_steps = 5000;
    QatMethod method = QatMethod::gaqat;
    SagmConfig sagm{0.05, 0.001, 0.01, 1e-5, 1e-12, true};
    FreezeConfig freeze{0.30, 350, 0, FreezePolicy::standard};

    // Analysis and output.
    std::size_t aggregation_stride = 0;  // 0 means "freeze interval"
    std::size_t eval_every = 0;          // 0 means "freeze interval"
    std::filesystem::path output_dir = "runs/default";
    std::filesystem::path pretrain_checkpoint;  // empty: pretrain in-process

    std::size_t stride() const { return aggregation_stride == 0 ? freeze.interval : aggregation_stride; }
    std::size_t eval_interval() const { return eval_every == 0 ? freeze.interval : eval_every; }
    std::vector<std::size_t> layer_dims() const;

    /// Throws ConfigError on any invalid field or combination.
    void validate() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& cfg);

/// Applies "key=value"; the value is read as JSON when it parses, otherwise as a string.
void apply_override(ExperimentConfig& cfg, std::string_view assignment);

}  // namespace gaqat
