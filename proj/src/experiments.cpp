#include "gaqat/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <random>

#include "gaqat/errors.hpp"

namespace gaqat {

namespace {

// splitmix64 finalizer; decorrelates the per-purpose seeds derived from one run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

enum SeedTag : std::uint64_t { kInit = 1, kPretrainStream = 2, kQatStream = 3, kSplit = 4 };

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Evenly strided rows, so a domain-ordered set contributes every domain.
Matrix spread_rows(const Matrix& m, std::size_t count) {
    const std::size_t n = std::min(count, m.rows());
    Matrix out(n, m.cols());
    for (std::size_t i = 0; i < n; ++i) {
        const auto src = m.row(i * m.rows() / n);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

CurvePoint curve_point(const QuantizedNetwork& net, const ExperimentData& data, std::int64_t step, double batch_loss) {
    CurvePoint p;
    p.step = step;
    p.batch_loss = batch_loss;
    p.train_accuracy = evaluate(net, data.split.train.batch).accuracy;
    p.val_accuracy = data.split.val.batch.size() ? evaluate(net, data.split.val.batch).accuracy : 0.0;
    p.test_accuracy = data.split.test.batch.size() ? evaluate(net, data.split.test.batch).accuracy : 0.0;
    return p;
}

}  // namespace

ExperimentData make_experiment_data(const ExperimentConfig& cfg) {
    ExperimentData out;
    out.dataset = make_rotated_moons(cfg.angles, cfg.n_per_domain, cfg.noise, cfg.seed);
    out.split = split(out.dataset, {cfg.test_domain, cfg.val_fraction, cfg.validation, derive_seed(cfg.seed, kSplit)});
    return out;
}

EvalResult evaluate(const QuantizedNetwork& net, const Batch& set) {
    if (set.size() == 0) throw InputError("evaluate: empty split");
    if (set.features.cols() != net.input_dim()) throw InputError("evaluate: split features do not match the network input");
    const auto fwd = net.forward(set.features);
    const auto ce = cross_entropy(fwd.logits, set.labels);
    const auto pred = predict(fwd.logits);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == set.labels[i] ? 1 : 0;
    return {static_cast<double>(correct) / static_cast<double>(pred.size()), ce.loss, pred.size()};
}

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve) {
    out << "step,batch_loss,train_accuracy,val_accuracy,test_accuracy\n";
    for (const auto& p : curve)
        out << p.step << ',' << num(p.batch_loss) << ',' << num(p.train_accuracy) << ',' << num(p.val_accuracy) << ','
            << num(p.test_accuracy) << '\n';
}

QuantizedNetwork initial_network(const ExperimentConfig& cfg) {
    const auto dims = cfg.layer_dims();
    return QuantizedNetwork::make_mlp(dims, derive_seed(cfg.seed, kInit));
}

PretrainResult run_pretrain(const ExperimentConfig& cfg, const ExperimentData& data) {
    cfg.validate();
    PretrainResult out{initial_network(cfg), {}};
    if (cfg.pretrain_steps == 0) return out;

    auto stream = train_stream(data.dataset, data.split, cfg.batch_per_domain, derive_seed(cfg.seed, kPretrainStream));
    QuantizedNetwork& net = out.network;
    std::vector<double> params = net.parameters();
    const auto every = static_cast<std::int64_t>(cfg.eval_interval());
    for (std::size_t t = 0; t < cfg.pretrain_steps; ++t) {
        const auto batch = stream.next();
        LossGradients lg;
        try {
            lg = net.evaluate(batch.batch);
        } catch (const NumericError& e) {
            throw NumericError("pretrain diverged at step " + std::to_string(t) + ": " + e.what());
        }
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.pretrain_lr * lg.grads.params[i];
        net.assign_parameters(params);
        const auto step = static_cast<std::int64_t>(t);
        if ((step + 1) % every == 0 || t + 1 == cfg.pretrain_steps)
            out.curve.push_back(curve_point(net, data, step, lg.loss));
    }
    return out;
}

void calibrate_scales(QuantizedNetwork& net, const Matrix& calibration) {
    if (calibration.rows() == 0) throw InputError("calibration set is empty");
    for (std::size_t li = 0; li < net.num_layers(); ++li) {
        if (const auto& wq = net.weight_quantizers()[li]) {
            const auto init = init_scale_mse(net.layers()[li].weights.values(), wq->bits, wq->mode);
            net.quantizer(wq->id).scale = init.scale;
        }
        if (const auto& aq = net.activation_quantizers()[li]) {
            const auto fwd = net.forward(calibration);
            const auto& raw = fwd.tape.layers()[li].activation_record->raw;
            const auto init = init_scale_mse(raw, aq->bits, aq->mode);
            net.quantizer(aq->id).scale = init.scale;
        }
    }
}

QatTrainer::QatTrainer(const ExperimentConfig& cfg, const ExperimentData& data, const QuantizedNetwork& full_precision,
                       QatMethod method)
    : cfg_(cfg),
      data_(&data),
      net_([&] {
          cfg.validate();
          if (full_precision.layers().size() + 1 != cfg.layer_dims().size() ||
              full_precision.input_dim() != cfg.layer_dims().front() ||
              full_precision.num_classes() != cfg.layer_dims().back())
              throw ConfigError("checkpoint architecture does not match the config");
          for (std::size_t li = 0; li < full_precision.num_layers(); ++li)
              if (full_precision.layers()[li].out_dim() != cfg.layer_dims()[li + 1])
                  throw ConfigError("checkpoint architecture does not match the config");
          QuantizedNetwork n = full_precision;
          n.disable_quantization();
          n.enable_quantization({cfg.weight_bits, cfg.activation_bits});
          calibrate_scales(n, spread_rows(data.split.train.batch.features, cfg.calibration_samples));
          return n;
      }()),
      stream_(train_stream(data.dataset, data.split, cfg.batch_per_domain, derive_seed(cfg.seed, kQatStream))),
      freezing_(net_.quantizer_ids(), cfg.freeze, method == QatMethod::gaqat),
      method_(method) {}

StepReport QatTrainer::step(std::ostream* log) {
    StepReport report;
    report.step = step_;
    const auto batch = stream_.next();
    try {
        report.duals = method_ == QatMethod::lsq_erm ? erm_gradients(net_, batch.batch)
                                                     : sagm_dual_backward(net_, batch.batch, cfg_.sagm);
    } catch (const NumericError& e) {
        throw NumericError("QAT diverged at step " + std::to_string(step_) + ": " + e.what());
    }
    apply_update(net_, report.duals, freezing_.frozen(), cfg_.sagm);

    auto pairs = report.duals.pairs;
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.scale_id < b.scale_id; });
    report.decision_round = freezing_.observe(step_, pairs);

    if (log) {
        const bool dual = method_ != QatMethod::lsq_erm;
        for (const auto& p : pairs) {
            ScaleGradLogRecord rec;
            rec.step = step_;
            rec.scale_id = p.scale_id;
            rec.g_task = p.task;
            rec.g_smooth = p.smooth;
            rec.frozen = freezing_.frozen().at(p.scale_id);
            rec.delta_task = freezing_.task_tracker().disorder(p.scale_id);
            rec.delta_smooth = freezing_.smooth_tracker().disorder(p.scale_id);
            rec.loss_er = report.duals.loss_er;
            if (dual) {
                rec.loss_p = report.duals.loss_p;
                rec.gap = report.duals.gap;
            }
            *log << to_ndjson(rec) << '\n';
        }
    }
    ++step_;
    return report;
}

QatResult run_qat(const ExperimentConfig& cfg, const ExperimentData& data, const QuantizedNetwork& full_precision,
                  QatMethod method, std::ostream* log) {
    QatTrainer trainer(cfg, data, full_precision, method);
    QatResult out;
    const auto every = static_cast<std::int64_t>(cfg.eval_interval());
    const auto total = static_cast<std::int64_t>(cfg.qat_steps);
    double best_val = -1.0;
    for (std::int64_t t = 0; t < total; ++t) {
        const auto report = trainer.step(log);
        if ((t + 1) % every == 0 || t + 1 == total) {
            const auto p = curve_point(trainer.network(), data, t, report.duals.loss_er);
            out.curve.push_back(p);
            if (p.val_accuracy > best_val) {
                best_val = p.val_accuracy;
                out.summary.selected_test_accuracy = p.test_accuracy;
                out.summary.selected_step = t;
            }
        }
    }
    out.network = trainer.network();
    out.summary.method = method;
    out.summary.seed = cfg.seed;
    out.summary.train = evaluate(out.network, data.split.train.batch);
    if (data.split.val.batch.size()) out.summary.val = evaluate(out.network, data.split.val.batch);
    if (data.split.test.batch.size()) out.summary.test = evaluate(out.network, data.split.test.batch);
    return out;
}

void write_comparison_csv(std::ostream& out, std::span<const QatSummary> summaries) {
    out << "method,seed,train_accuracy,val_accuracy,test_accuracy,selected_test_accuracy\n";
    for (const auto& s : summaries)
        out << to_string(s.method) << ',' << s.seed << ',' << num(s.train.accuracy) << ',' << num(s.val.accuracy)
            << ',' << num(s.test.accuracy) << ',' << num(s.selected_test_accuracy) << '\n';
}

std::vector<WindowAggregate> accumulate_scale_gradients(std::span<const ScaleGradLogRecord> log, std::int64_t stride) {
    if (stride <= 0) throw InputError("aggregation stride must be positive");
    std::vector<WindowAggregate> out;
    if (log.empty()) return out;
    const std::int64_t first = log.front().step;
    const std::int64_t last = log.back().step;
    const std::int64_t complete = (last - first + 1) / stride;

    std::map<std::pair<std::int64_t, std::string>, WindowAggregate> acc;
    std::int64_t previous = first;
    for (const auto& r : log) {
        if (r.step < previous) throw InputError("gradient log steps are not monotone");
        previous = r.step;
        const std::int64_t w = (r.step - first) / stride;
        if (w >= complete) continue;
        auto& a = acc[{w, r.scale_id}];
        a.window = w;
        a.scale_id = r.scale_id;
        a.sum_task += r.g_task;
        a.sum_smooth += r.g_smooth;
    }
    for (auto& [_, a] : acc) {
        const int st = a.sum_task > 0.0 ? 1 : (a.sum_task < 0.0 ? -1 : 0);
        const int ss = a.sum_smooth > 0.0 ? 1 : (a.sum_smooth < 0.0 ? -1 : 0);
        a.opposite = st != 0 && st == -ss;
        a.cancellation = a.opposite && std::abs(a.sum_task + a.sum_smooth) <
                                           0.1 * std::min(std::abs(a.sum_task), std::abs(a.sum_smooth));
        out.push_back(a);
    }
    return out;
}

void write_windows_csv(std::ostream& out, std::span<const WindowAggregate> windows) {
    out << "window,scale_id,sum_task,sum_smooth,opposite,cancellation\n";
    for (const auto& w : windows)
        out << w.window << ',' << w.scale_id << ',' << num(w.sum_task) << ',' << num(w.sum_smooth) << ','
            << (w.opposite ? 1 : 0) << ',' << (w.cancellation ? 1 : 0) << '\n';
}

std::vector<PerturbRow> perturb_scales(const QuantizedNetwork& net, std::span<const std::string> scale_ids,
                                       std::span<const double> factors, std::span<const NamedSet> eval_sets) {
    for (double f : factors)
        if (!(f > 0.0) || !std::isfinite(f)) throw InputError("perturbation factors must be positive");
    for (const auto& id : scale_ids) (void)net.quantizer(id);
    for (const auto& s : eval_sets)
        if (s.batch == nullptr) throw InputError("eval set '" + s.name + "' is missing");

    QuantizedNetwork work = net;
    std::vector<double> origin;
    for (const auto& s : eval_sets) origin.push_back(evaluate(work, *s.batch).accuracy);

    std::vector<PerturbRow> rows;
    for (const auto& id : scale_ids) {
        const double original = work.quantizer(id).scale;
        for (double f : factors) {
            work.quantizer(id).scale = original * f;
            for (std::size_t k = 0; k < eval_sets.size(); ++k)
                rows.push_back({id, eval_sets[k].name, f, origin[k], evaluate(work, *eval_sets[k].batch).accuracy});
            work.quantizer(id).scale = original;
        }
    }
    return rows;
}

void write_perturb_csv(std::ostream& out, std::span<const PerturbRow> rows) {
    out << "scale_id,eval_set,factor,origin_accuracy,perturbed_accuracy,delta\n";
    for (const auto& r : rows)
        out << r.scale_id << ',' << r.eval_set << ',' << num(r.factor) << ',' << num(r.origin_accuracy) << ','
            << num(r.perturbed_accuracy) << ',' << num(r.perturbed_accuracy - r.origin_accuracy) << '\n';
}

std::vector<double> slice_offsets(double radius, std::size_t samples) {
    if (samples < 3) throw ConfigError("loss slice needs at least 3 samples");
    if (!(radius > 0.0)) throw ConfigError("loss slice radius must be positive");
    std::vector<double> out(samples);
    const auto span = static_cast<std::int64_t>(samples - 1);
    for (std::size_t i = 0; i < samples; ++i) {
        const auto numer = 2 * static_cast<std::int64_t>(i) - span;
        out[i] = radius * static_cast<double>(numer) / static_cast<double>(span);
    }
    return out;
}

std::vector<double> normalized_direction(const QuantizedNetwork& net, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> dir;
    dir.reserve(net.num_parameters());
    for (const auto& layer : net.layers()) {
        const std::size_t start = dir.size();
        double dn = 0.0;
        double wn = 0.0;
        for (double w : layer.weights.values()) {
            const double d = gauss(rng);
            dir.push_back(d);
            dn += d * d;
            wn += w * w;
        }
        const double ratio = dn > 0.0 ? std::sqrt(wn) / std::sqrt(dn) : 0.0;
        for (std::size_t i = start; i < dir.size(); ++i) dir[i] *= ratio;
        dir.insert(dir.end(), layer.bias.size(), 0.0);
    }
    return dir;
}

std::vector<SlicePoint> loss_slice(const QuantizedNetwork& net, const Batch& set, std::uint64_t direction_seed,
                                   double radius, std::size_t samples) {
    if (set.size() == 0) throw InputError("loss slice needs a non-empty eval set");
    QuantizedNetwork work = net;
    const auto dir = normalized_direction(work, direction_seed);
    return slice_along(work, dir, radius, samples, [&](const QuantizedNetwork& m) { return m.loss(set); });
}

std::vector<SurfacePoint> loss_surface(const QuantizedNetwork& net, const Batch& set, std::uint64_t seed_a,
                                       std::uint64_t seed_b, double radius, std::size_t samples) {
    if (set.size() == 0) throw InputError("loss surface needs a non-empty eval set");
    const auto offsets = slice_offsets(radius, samples);
    QuantizedNetwork work = net;
    const auto da = normalized_direction(work, seed_a);
    const auto db = normalized_direction(work, seed_b);
    const auto theta = work.parameters();
    std::vector<double> shifted(theta.size());
    std::vector<SurfacePoint> out;
    for (double a : offsets) {
        for (double b : offsets) {
            for (std::size_t i = 0; i < theta.size(); ++i) shifted[i] = theta[i] + a * da[i] + b * db[i];
            work.assign_parameters(shifted);
            out.push_back({a, b, work.loss(set)});
        }
    }
    return out;
}

void write_slice_csv(std::ostream& out, std::span<const SlicePoint> points) {
    out << "offset,loss\n";
    for (const auto& p : points) out << num(p.offset) << ',' << num(p.loss) << '\n';
}

void write_surface_csv(std::ostream& out, std::span<const SurfacePoint> points) {
    out << "a,b,loss\n";
    for (const auto& p : points) out << num(p.a) << ',' << num(p.b) << ',' << num(p.loss) << '\n';
}

}  // namespace gaqat
