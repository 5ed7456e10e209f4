#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gaqat/config.hpp"
#include "gaqat/domains.hpp"
#include "gaqat/freeze.hpp"
#include "gaqat/gradlog.hpp"
#include "gaqat/network.hpp"
#include "gaqat/sagm.hpp"

namespace gaqat {

/// Dataset and leave-one-domain-out split derived from a config.
struct ExperimentData {
    DomainDataset dataset;
    DomainSplit split;
};

ExperimentData make_experiment_data(const ExperimentConfig& cfg);

struct EvalResult {
    double accuracy = 0.0;
    double loss = 0.0;
    std::size_t count = 0;
};

/// Top-1 accuracy and mean cross-entropy. Throws InputError on an empty set or a
/// feature-dimension mismatch.
EvalResult evaluate(const QuantizedNetwork& net, const Batch& set);

struct CurvePoint {
    std::int64_t step = 0;
    double batch_loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
};

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve);

struct PretrainResult {
    QuantizedNetwork network;
    std::vector<CurvePoint> curve;
};

/// The seeded initialization run_pretrain starts from.
QuantizedNetwork initial_network(const ExperimentConfig& cfg);

/// Full-precision ERM training from initial_network(cfg).
PretrainResult run_pretrain(const ExperimentConfig& cfg, const ExperimentData& data);

/// Sets every scale by MSE range estimation: weight scales from the weights,
/// activation scales from calibration activations, layer by layer so each
/// activation scale sees already-calibrated upstream quantizers.
void calibrate_scales(QuantizedNetwork& net, const Matrix& calibration);

struct StepReport {
    std::int64_t step = 0;
    DualGradients duals;
    bool decision_round = false;
};

/// Step-by-step quantization-aware training driver for one method.
class QatTrainer {
public:
    /// Copies `full_precision`, installs quantizers per the exemption policy and
    /// calibrates them.
    QatTrainer(const ExperimentConfig& cfg, const ExperimentData& data, const QuantizedNetwork& full_precision,
               QatMethod method);

    /// One training step; appends one log record per scale when `log` is set.
    StepReport step(std::ostream* log = nullptr);

    const QuantizedNetwork& network() const { return net_; }
    const SelectiveFreezing& freezing() const { return freezing_; }
    std::int64_t steps_done() const { return step_; }
    QatMethod method() const { return method_; }

private:
    ExperimentConfig cfg_;
    const ExperimentData* data_;
    QuantizedNetwork net_;
    TrainStream stream_;
    SelectiveFreezing freezing_;
    QatMethod method_;
    std::int64_t step_ = 0;
};

struct QatSummary {
    QatMethod method = QatMethod::gaqat;
    std::uint64_t seed = 0;
    EvalResult train;
    EvalResult val;
    EvalResult test;
    // Test accuracy at the evaluation point with the best validation accuracy.
    double selected_test_accuracy = 0.0;
    std::int64_t selected_step = 0;
};

/// One row per summary: method, seed, accuracies, test accuracy at best validation.
void write_comparison_csv(std::ostream& out, std::span<const QatSummary> summaries);

struct QatResult {
    QuantizedNetwork network;
    std::vector<CurvePoint> curve;
    QatSummary summary;
};

/// Runs cfg.qat_steps steps of `method`, streaming the NDJSON gradient log to `log`
/// when given.
QatResult run_qat(const ExperimentConfig& cfg, const ExperimentData& data, const QuantizedNetwork& full_precision,
                  QatMethod method, std::ostream* log = nullptr);

struct WindowAggregate {
    std::int64_t window = 0;
    std::string scale_id;
    double sum_task = 0.0;
    double sum_smooth = 0.0;
    bool opposite = false;      // nonzero sums of opposite sign
    bool cancellation = false;  // opposite and |sum| < 0.1 * min(|task|, |smooth|)
};

/// Per-scale sums over consecutive windows of `stride` steps, counted from the
/// first logged step. A trailing partial window is dropped.
std::vector<WindowAggregate> accumulate_scale_gradients(std::span<const ScaleGradLogRecord> log, std::int64_t stride);

void write_windows_csv(std::ostream& out, std::span<const WindowAggregate> windows);

struct PerturbRow {
    std::string scale_id;
    std::string eval_set;
    double factor = 1.0;
    double origin_accuracy = 0.0;
    double perturbed_accuracy = 0.0;
};

struct NamedSet {
    std::string name;
    const Batch* batch = nullptr;
};

/// Evaluates each listed scale multiplied by each factor, one scale at a time.
/// The network is never modified.
std::vector<PerturbRow> perturb_scales(const QuantizedNetwork& net, std::span<const std::string> scale_ids,
                                       std::span<const double> factors, std::span<const NamedSet> eval_sets);

void write_perturb_csv(std::ostream& out, std::span<const PerturbRow> rows);

struct SlicePoint {
    double offset = 0.0;
    double loss = 0.0;
};

/// samples offsets in [-radius, radius]; for odd counts the middle one is exactly 0
/// and offsets are exact negatives of each other.
std::vector<double> slice_offsets(double radius, std::size_t samples);

/// Loss along theta + c * direction for every offset c; parameters are restored.
template <class Model, class LossFn>
std::vector<SlicePoint> slice_along(Model& model, std::span<const double> direction, double radius,
                                    std::size_t samples, LossFn&& loss) {
    if (samples < 3) throw ConfigError("loss slice needs at least 3 samples");
    if (!(radius > 0.0)) throw ConfigError("loss slice radius must be positive");
    const std::vector<double> theta = model.parameters();
    if (direction.size() != theta.size()) throw ShapeError("slice direction does not match the parameter count");
    std::vector<SlicePoint> out;
    std::vector<double> shifted(theta.size());
    for (double c : slice_offsets(radius, samples)) {
        for (std::size_t i = 0; i < theta.size(); ++i) shifted[i] = theta[i] + c * direction[i];
        model.assign_parameters(shifted);
        out.push_back({c, loss(model)});
    }
    model.assign_parameters(theta);
    return out;
}

/// Seeded Gaussian direction with every layer's weight block rescaled to the
/// Frobenius norm of that layer's weights; bias entries are zero.
std::vector<double> normalized_direction(const QuantizedNetwork& net, std::uint64_t seed);

/// 1-D slice of the quantized empirical risk around the network's parameters.
std::vector<SlicePoint> loss_slice(const QuantizedNetwork& net, const Batch& set, std::uint64_t direction_seed,
                                   double radius, std::size_t samples);

struct SurfacePoint {
    double a = 0.0;
    double b = 0.0;
    double loss = 0.0;
};

/// 2-D slice over two independently seeded normalized directions.
std::vector<SurfacePoint> loss_surface(const QuantizedNetwork& net, const Batch& set, std::uint64_t seed_a,
                                       std::uint64_t seed_b, double radius, std::size_t samples);

void write_slice_csv(std::ostream& out, std::span<const SlicePoint> points);
void write_surface_csv(std::ostream& out, std::span<const SurfacePoint> points);

}  // namespace gaqat
