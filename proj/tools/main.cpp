// gaqat command-line tool: pretraining, quantization-aware training, evaluation and
// the scale-gradient diagnostics. Exit codes: 0 ok, 2 config, 3 numeric, 4 contract.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "gaqat/checkpoint.hpp"
#include "gaqat/config.hpp"
#include "gaqat/errors.hpp"
#include "gaqat/experiments.hpp"
#include "gaqat/gradlog.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace gaqat;

namespace {

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool seed_required) {
    cmd->add_option("-c,--config", opts.config_path, "JSON config file");
    cmd->add_option("--set", opts.overrides, "Override a config key (key=value)");
    auto* seed = cmd->add_option("--seed", opts.seed, "Run seed");
    if (seed_required) seed->required();
}

ExperimentConfig resolve_config(const CommonOptions& opts) {
    ExperimentConfig cfg = opts.config_path.empty() ? ExperimentConfig{} : load_config(opts.config_path);
    for (const auto& o : opts.overrides) apply_override(cfg, o);
    if (opts.seed) cfg.seed = *opts.seed;
    cfg.validate();
    return cfg;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    return out;
}

// Runs `body(seed, dir)` for `replicas` consecutive seeds, one worker thread each.
template <class Body>
void for_replicas(const ExperimentConfig& cfg, std::size_t replicas, Body body) {
    if (replicas <= 1) {
        body(cfg.seed, cfg.output_dir);
        return;
    }
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(replicas);
    for (std::size_t r = 0; r < replicas; ++r) {
        workers.emplace_back([&, r] {
            try {
                const std::uint64_t seed = cfg.seed + r;
                body(seed, cfg.output_dir / ("seed_" + std::to_string(seed)));
            } catch (...) {
                errors[r] = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

QuantizedNetwork pretrained_network(const ExperimentConfig& cfg, const ExperimentData& data) {
    if (!cfg.pretrain_checkpoint.empty()) return load_checkpoint(cfg.pretrain_checkpoint);
    if (cfg.pretrain_steps == 0)
        throw ConfigError("qat needs a pretrain checkpoint (--checkpoint) or pretrain_steps > 0");
    return run_pretrain(cfg, data).network;
}

void write_summary(const fs::path& path, const QatSummary& s) {
    nlohmann::ordered_json j;
    j["method"] = to_string(s.method);
    j["seed"] = s.seed;
    j["train_accuracy"] = s.train.accuracy;
    j["val_accuracy"] = s.val.accuracy;
    j["test_accuracy"] = s.test.accuracy;
    j["selected_test_accuracy"] = s.selected_test_accuracy;
    j["selected_step"] = s.selected_step;
    open_out(path) << j.dump(2) << '\n';
}

const Batch& pick_split(const ExperimentData& data, const std::string& name, std::optional<LabeledSet>& holder) {
    if (name == "train") return data.split.train.batch;
    if (name == "val") return data.split.val.batch;
    if (name == "test") return data.split.test.batch;
    if (name.starts_with("domain:")) {
        holder = domain_set(data.dataset, name.substr(7));
        return holder->batch;
    }
    throw InputError("unknown split '" + name + "' (train, val, test, domain:<name>)");
}

int run(int argc, char** argv) {
    CLI::App app{"Gradient-adaptive quantization-aware training laboratory"};
    app.require_subcommand(1);

    CommonOptions pre_opts, qat_opts, eval_opts, perturb_opts, slice_opts;
    std::size_t replicas = 1;

    auto* pretrain = app.add_subcommand("pretrain", "Full-precision ERM training");
    add_common(pretrain, pre_opts, true);
    pretrain->add_option("--replicas", replicas, "Seeded replicas run on worker threads")->check(CLI::PositiveNumber);

    auto* qat = app.add_subcommand("qat", "Quantization-aware training (lsq_erm, sagm_lsq, gaqat)");
    add_common(qat, qat_opts, true);
    std::vector<std::string> methods;
    std::string qat_checkpoint;
    qat->add_option("--method", methods, "Method(s); defaults to the config's method");
    qat->add_option("--checkpoint", qat_checkpoint, "Full-precision checkpoint to start from");
    qat->add_option("--replicas", replicas, "Seeded replicas run on worker threads")->check(CLI::PositiveNumber);

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    add_common(eval, eval_opts, false);
    std::string eval_checkpoint, eval_split = "test";
    eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint to evaluate")->required();
    eval->add_option("--split", eval_split, "train, val, test or domain:<name>");

    auto* analyze = app.add_subcommand("analyze", "Disorder, cumulative windows and freeze replay over a gradient log");
    std::string log_path, analyze_out = "analysis";
    std::int64_t stride = 0;
    FreezeConfig freeze_cfg;
    std::string policy_name = "standard";
    analyze->add_option("--log", log_path, "NDJSON gradient log")->required();
    analyze->add_option("--stride", stride, "Aggregation window in steps (0: same as interval)");
    analyze->add_option("--threshold", freeze_cfg.threshold, "Disorder threshold r");
    analyze->add_option("--interval", freeze_cfg.interval, "Decision interval K");
    analyze->add_option("--window", freeze_cfg.window, "Disorder window (0: same as interval)");
    analyze->add_option("--policy", policy_name, "standard, reverse_ratio or no_unfreeze");
    analyze->add_option("--out", analyze_out, "Output directory");

    auto* perturb = app.add_subcommand("perturb", "Scale perturbation sensitivity table");
    add_common(perturb, perturb_opts, false);
    std::string perturb_checkpoint, perturb_out = "perturb.csv";
    std::vector<std::string> perturb_scales_ids;
    std::vector<double> factors{0.8, 0.9, 1.1, 1.2};
    perturb->add_option("--checkpoint", perturb_checkpoint, "Quantized checkpoint")->required();
    perturb->add_option("--scale", perturb_scales_ids, "Scale id(s); default all");
    perturb->add_option("--factors", factors, "Comma-separated scale multipliers")->delimiter(',');
    perturb->add_option("--out", perturb_out, "Output CSV path");

    auto* slice = app.add_subcommand("loss-slice", "1-D or 2-D normalized loss slice");
    add_common(slice, slice_opts, false);
    std::string slice_checkpoint, slice_out = "loss_slice.csv", slice_split = "test";
    std::uint64_t dir_seed = 0;
    std::optional<std::uint64_t> dir_seed_b;
    double radius = 1.0;
    std::size_t samples = 41;
    slice->add_option("--checkpoint", slice_checkpoint, "Checkpoint to probe")->required();
    slice->add_option("--split", slice_split, "train, val, test or domain:<name>");
    slice->add_option("--direction-seed", dir_seed, "Seed of the first direction");
    slice->add_option("--direction-seed-b", dir_seed_b, "Second direction; produces a 2-D surface");
    slice->add_option("--radius", radius, "Largest offset along each direction");
    slice->add_option("--samples", samples, "Points per axis, at least 3");
    slice->add_option("--out", slice_out, "Output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::config);
    }

    if (*pretrain) {
        const auto cfg = resolve_config(pre_opts);
        for_replicas(cfg, replicas, [&](std::uint64_t seed, const fs::path& dir) {
            ExperimentConfig c = cfg;
            c.seed = seed;
            const auto data = make_experiment_data(c);
            const auto result = run_pretrain(c, data);
            fs::create_directories(dir);
            save_checkpoint(dir / "pretrain.ckpt", result.network);
            auto curve = open_out(dir / "pretrain_curve.csv");
            write_curve_csv(curve, result.curve);
            open_out(dir / "config.json") << config_to_json_text(c);
        });
        return 0;
    }

    if (*qat) {
        auto cfg = resolve_config(qat_opts);
        if (!qat_checkpoint.empty()) cfg.pretrain_checkpoint = qat_checkpoint;
        if (methods.empty()) methods.push_back(to_string(cfg.method));
        for (const auto& m : methods) parse_qat_method(m);
        for_replicas(cfg, replicas, [&](std::uint64_t seed, const fs::path& dir) {
            ExperimentConfig c = cfg;
            c.seed = seed;
            const auto data = make_experiment_data(c);
            const auto fp = pretrained_network(c, data);
            fs::create_directories(dir);
            open_out(dir / "config.json") << config_to_json_text(c);
            std::vector<QatSummary> summaries;
            for (const auto& name : methods) {
                const auto method = parse_qat_method(name);
                auto log = open_out(dir / ("grad_log_" + name + ".ndjson"));
                const auto result = run_qat(c, data, fp, method, &log);
                save_checkpoint(dir / ("qat_" + name + ".ckpt"), result.network);
                auto curve = open_out(dir / ("qat_curve_" + name + ".csv"));
                write_curve_csv(curve, result.curve);
                write_summary(dir / ("summary_" + name + ".json"), result.summary);
                summaries.push_back(result.summary);
            }
            auto comparison = open_out(dir / "comparison.csv");
            write_comparison_csv(comparison, summaries);
        });
        return 0;
    }

    if (*eval) {
        const auto cfg = resolve_config(eval_opts);
        const auto data = make_experiment_data(cfg);
        const auto net = load_checkpoint(eval_checkpoint);
        std::optional<LabeledSet> holder;
        const auto r = evaluate(net, pick_split(data, eval_split, holder));
        std::cout << "split=" << eval_split << " accuracy=" << num(r.accuracy) << " loss=" << num(r.loss)
                  << " n=" << r.count << '\n';
        return 0;
    }

    if (*analyze) {
        freeze_cfg.policy = parse_freeze_policy(policy_name);
        freeze_cfg.validate();
        const auto log = read_grad_log(log_path);
        const fs::path out_dir = analyze_out;
        fs::create_directories(out_dir);

        if (stride == 0) stride = static_cast<std::int64_t>(freeze_cfg.interval);
        const auto windows = accumulate_scale_gradients(log, stride);
        auto wout = open_out(out_dir / "windows.csv");
        write_windows_csv(wout, windows);

        auto dout = open_out(out_dir / "disorder.csv");
        dout << "step,scale_id,delta_task,delta_smooth,frozen\n";
        for (const auto& r : log)
            if (r.step % static_cast<std::int64_t>(freeze_cfg.interval) == 0 && r.delta_task)
                dout << r.step << ',' << r.scale_id << ',' << num(*r.delta_task) << ','
                     << (r.delta_smooth ? num(*r.delta_smooth) : "") << ',' << (r.frozen ? 1 : 0) << '\n';

        const auto timeline = replay(to_step_gradients(log), freeze_cfg);
        auto rout = open_out(out_dir / "replay.csv");
        rout << "step,scale_id,frozen\n";
        for (const auto& e : timeline)
            for (const auto& [id, f] : e.frozen) rout << e.step << ',' << id << ',' << (f ? 1 : 0) << '\n';

        const bool matches = timeline == recorded_timeline(log);
        std::cout << "records=" << log.size() << " windows=" << windows.size()
                  << " replay_matches_log=" << (matches ? "true" : "false") << '\n';
        return 0;
    }

    if (*perturb) {
        const auto cfg = resolve_config(perturb_opts);
        const auto data = make_experiment_data(cfg);
        const auto net = load_checkpoint(perturb_checkpoint);
        if (perturb_scales_ids.empty()) perturb_scales_ids = net.quantizer_ids();
        std::vector<LabeledSet> domains;
        for (const auto& d : data.dataset.domains) domains.push_back(domain_set(data.dataset, d.name));
        std::vector<NamedSet> sets;
        for (std::size_t i = 0; i < domains.size(); ++i) sets.push_back({data.dataset.domains[i].name, &domains[i].batch});
        sets.push_back({"val", &data.split.val.batch});
        sets.push_back({"test", &data.split.test.batch});
        const auto rows = perturb_scales(net, perturb_scales_ids, factors, sets);
        auto out = open_out(perturb_out);
        write_perturb_csv(out, rows);
        return 0;
    }

    if (*slice) {
        const auto cfg = resolve_config(slice_opts);
        const auto data = make_experiment_data(cfg);
        const auto net = load_checkpoint(slice_checkpoint);
        std::optional<LabeledSet> holder;
        const auto& set = pick_split(data, slice_split, holder);
        auto out = open_out(slice_out);
        if (dir_seed_b) {
            const auto points = loss_surface(net, set, dir_seed, *dir_seed_b, radius, samples);
            write_surface_csv(out, points);
        } else {
            const auto points = loss_slice(net, set, dir_seed, radius, samples);
            write_slice_csv(out, points);
        }
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const gaqat::Error& e) {
        std::cerr << e.what() << '\n';
        return static_cast<int>(e.exit_code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
