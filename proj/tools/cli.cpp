#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>

#include "sicnn/config.hpp"
#include "sicnn/data.hpp"
#include "sicnn/eval.hpp"
#include "sicnn/gradcheck.hpp"
#include "sicnn/log.hpp"
#include "sicnn/parallel.hpp"
#include "sicnn/training.hpp"

namespace fs = std::filesystem;

namespace sicnn {

namespace {

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> approach;
    std::optional<double> alpha;
    std::size_t threads = 1;
    std::string out;
    std::vector<std::string> sets;
};

struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

RunConfig resolve_config(const CommonOptions& o) {
    RunConfig cfg = o.config_path.empty() ? RunConfig::from_preset("desk") : load_run_config(o.config_path);
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& s : o.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            throw UsageError("--set expects key=value, got '" + s + "'");
        }
        overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    apply_overrides(cfg, overrides);
    if (o.seed) {
        cfg.train.seed = *o.seed;
        cfg.data.seed = *o.seed;
    }
    if (o.approach) {
        cfg.set("train.approach", *o.approach);
    }
    if (o.alpha) {
        cfg.train.alpha = *o.alpha;
    }
    cfg.validate();
    return cfg;
}

std::string timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%S", &tm);
    return buf;
}

fs::path run_directory(const CommonOptions& o, const RunConfig& cfg) {
    fs::path dir = o.out.empty() ? fs::path("runs") / (timestamp() + "_" + cfg.hash().substr(0, 8)) : fs::path(o.out);
    fs::create_directories(dir);
    return dir;
}

void record_config(const RunConfig& cfg, const fs::path& dir) {
    std::ofstream(dir / "config.txt") << "# hash " << cfg.hash() << "\n" << cfg.canonical_text();
    log_info("config hash " + cfg.hash());
    log_info("resolved config:\n" + cfg.canonical_text());
}

DatasetSplit load_data(const std::string& dir, const RunConfig& cfg) {
    DatasetSplit split = load_dataset(dir);
    const auto& pairs = split.train.empty() ? split.test : split.train;
    if (!pairs.empty() && (pairs[0].hr.width != cfg.train.rec.input_width ||
                           pairs[0].hr.height != cfg.train.rec.input_height ||
                           pairs[0].lr.width != cfg.train.hall.input_width)) {
        throw std::invalid_argument("dataset in '" + dir + "' does not match the model preset sizes");
    }
    return split;
}

std::vector<ImagePair> validation_fold(const DatasetSplit& split, const RunConfig& cfg) {
    const std::size_t n = std::min(split.test.size(), cfg.train.val_samples);
    return {split.test.begin(), split.test.begin() + static_cast<std::ptrdiff_t>(n)};
}

CheckpointMeta meta_for(const RunConfig& cfg) {
    return {cfg.hash(), cfg.model_hash(), approach_name(cfg.train.approach)};
}

void write_metrics(const TrainState& state, const fs::path& dir) {
    std::ofstream os(dir / "metrics.csv");
    write_metrics_csv(state.metrics, os);
}

TrainState checkpoint_state(const std::string& path, const RunConfig& cfg) {
    const CheckpointMeta meta = read_checkpoint_meta(path);
    if (meta.model_hash != cfg.model_hash()) {
        throw std::invalid_argument("checkpoint '" + path + "' was trained with model hash " + meta.model_hash +
                                    " but the current model preset hashes to " + cfg.model_hash());
    }
    return load_checkpoint(path, cfg.train);
}

int cmd_generate(const CommonOptions& o, std::optional<std::size_t> identities) {
    RunConfig cfg = resolve_config(o);
    if (identities) {
        cfg.data.identities = *identities;
    }
    const fs::path dir = o.out.empty() ? fs::path("data") : fs::path(o.out);
    DatasetOptions opts = cfg.data.options;
    opts.channels = cfg.train.rec.channels;
    const DatasetSplit split =
        generate_dataset(cfg.data.identities, cfg.data.samples, cfg.train.rec.input_width, cfg.train.rec.input_height,
                         cfg.train.hall.upscale_factor, cfg.data.seed, opts);
    save_dataset(split, dir);
    record_config(cfg, dir);
    std::cout << "wrote " << split.train.size() << " train and " << split.test.size() << " test pairs to "
              << dir.string() << "\n";
    return kExitOk;
}

struct TrainOptions {
    std::string data = "data";
    std::string resume;
    std::string init;
    std::optional<std::uint64_t> stop_at;
    std::uint64_t checkpoint_every = 500;
};

int cmd_train(const CommonOptions& o, const TrainOptions& t) {
    if (!t.resume.empty() && !t.init.empty()) {
        throw UsageError("--resume and --init are mutually exclusive");
    }
    const RunConfig cfg = resolve_config(o);
    const DatasetSplit split = load_data(t.data, cfg);
    const Trainer trainer(cfg.train, split.train, validation_fold(split, cfg));

    TrainState state = trainer.initial_state();
    if (!t.resume.empty()) {
        const CheckpointMeta meta = read_checkpoint_meta(t.resume);
        if (meta.config_hash != cfg.hash()) {
            throw std::invalid_argument("cannot resume: checkpoint config hash " + meta.config_hash +
                                        " differs from the current config hash " + cfg.hash());
        }
        state = load_checkpoint(t.resume, cfg.train);
    } else if (!t.init.empty()) {
        state = checkpoint_state(t.init, cfg);
    }
    trainer.check_compatible(state);

    const fs::path dir = run_directory(o, cfg);
    record_config(cfg, dir);
    const fs::path ckpt = dir / "checkpoint";
    const CheckpointMeta meta = meta_for(cfg);
    trainer.run(state, t.stop_at, [&](const TrainState& s) {
        if (t.checkpoint_every > 0 && s.global_iter % t.checkpoint_every == 0) {
            save_checkpoint(s, ckpt, meta);
            write_metrics(s, dir);
        }
    });
    save_checkpoint(state, ckpt, meta);
    write_metrics(state, dir);
    std::cout << (trainer.finished(state) ? "finished" : "stopped") << " at iteration " << state.global_iter
              << "; checkpoint " << ckpt.string() << "\n";
    return kExitOk;
}

struct EvalOptions {
    std::string data = "data";
    std::string checkpoint;
    bool hr_vs_hr = false;
};

int cmd_eval(const CommonOptions& o, const EvalOptions& e) {
    const RunConfig cfg = resolve_config(o);
    const TrainState state = checkpoint_state(e.checkpoint, cfg);
    const DatasetSplit split = load_data(e.data, cfg);
    if (split.test.empty()) {
        throw std::invalid_argument("evaluation split is empty");
    }
    const fs::path dir = run_directory(o, cfg);
    record_config(cfg, dir);

    EvalReport report;
    report.config_hash = cfg.hash();
    std::vector<Image> bicubic;
    for (const auto& p : split.test) {
        bicubic.push_back(clamp01(bicubic_resample(p.lr, p.hr.width, p.hr.height)));
    }
    const std::vector<Image> sr = super_resolve(state.hall, split.test, cfg.eval.batch);
    report.rows.push_back(evaluate_images("bicubic", bicubic, split.test, state.evaluator));
    report.rows.push_back(evaluate_images("model", sr, split.test, state.evaluator));
    {
        std::ofstream os(dir / "report.csv");
        write_report_csv(report, os);
    }
    {
        std::ofstream os(dir / "report.txt");
        write_report_text(report, os);
    }
    write_report_text(report, std::cout);

    const fs::path samples = dir / "samples";
    fs::create_directories(samples);
    const char* ext = split.test[0].hr.channels == 1 ? ".pgm" : ".ppm";
    for (std::size_t i = 0; i < std::min(cfg.eval.save_images, split.test.size()); ++i) {
        const std::string stem = "id" + std::to_string(split.test[i].identity) + "_s" +
                                 std::to_string(split.test[i].sample);
        save_image(sr[i], samples / (stem + "_sr" + ext));
        save_image(split.test[i].hr, samples / (stem + "_hr" + ext));
        save_image(bicubic[i], samples / (stem + "_bicubic" + ext));
    }
    return kExitOk;
}

int cmd_diagnose(const CommonOptions& o, const EvalOptions& e) {
    const RunConfig cfg = resolve_config(o);
    const TrainState state = checkpoint_state(e.checkpoint, cfg);
    const DatasetSplit split = load_data(e.data, cfg);
    if (split.test.size() < 2) {
        throw std::invalid_argument("diagnose needs at least 2 test pairs");
    }
    std::vector<Image> hr;
    std::vector<std::size_t> labels;
    for (const auto& p : split.test) {
        hr.push_back(p.hr);
        labels.push_back(p.identity);
    }
    const std::vector<Image> sr = e.hr_vs_hr ? hr : super_resolve(state.hall, split.test, cfg.eval.batch);
    const DivergenceStats stats = domain_divergence(state.rec, to_batch(sr), labels, to_batch(hr), labels);

    const fs::path dir = run_directory(o, cfg);
    record_config(cfg, dir);
    {
        std::ofstream os(dir / "projection.csv");
        write_projection_csv(stats.projection, os);
    }
    std::ostringstream text;
    text << std::setprecision(6) << "domains " << (e.hr_vs_hr ? "hr-vs-hr" : "sr-vs-hr") << "\nseparability "
         << stats.separability << "\nmean_geodesic " << stats.mean_geodesic << "\nsamples " << labels.size()
         << "\n";
    std::ofstream(dir / "divergence.txt") << text.str();
    std::cout << text.str();
    return kExitOk;
}

int cmd_gradcheck(std::size_t seeds, std::uint64_t first_seed, bool inject_fault) {
    bool ok = true;
    for (std::size_t i = 0; i < seeds; ++i) {
        const std::uint64_t seed = first_seed + i;
        const auto results = run_gradcheck_suite(seed, inject_fault);
        std::cout << "seed " << seed << "\n";
        write_gradcheck_table(results, std::cout);
        ok = ok && std::all_of(results.begin(), results.end(), [](const GradCheckResult& r) { return r.passed; });
    }
    std::cout << (ok ? "all gradient checks passed" : "gradient check FAILED") << "\n";
    return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"identity-aware face hallucination laboratory", "sicnn"};
    app.require_subcommand(1);
    CommonOptions common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "flat key = value config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "seed for data generation and training");
        sub->add_option("--set", common.sets, "override a config key (key=value), repeatable");
        sub->add_option("--threads", common.threads, "worker threads (results do not depend on it)")
            ->check(CLI::Range(1, 256));
        sub->add_option("--out", common.out, "output directory");
    };
    auto add_training_flags = [&](CLI::App* sub) {
        sub->add_option("--approach", common.approach, "baseline1, baseline2, baseline3 or di")
            ->check(CLI::IsMember({"baseline1", "baseline2", "baseline3", "di"}));
        sub->add_option("--alpha", common.alpha, "super-identity loss weight");
    };

    std::optional<std::size_t> identities;
    auto* gen = app.add_subcommand("generate", "write a synthetic identity dataset");
    add_common(gen);
    gen->add_option("--identities", identities, "number of identities");

    TrainOptions topt;
    auto* train = app.add_subcommand("train", "run a training approach and write checkpoints and metrics");
    add_common(train);
    add_training_flags(train);
    train->add_option("--data", topt.data, "dataset directory")->capture_default_str();
    train->add_option("--resume", topt.resume, "checkpoint to continue from (same config)");
    train->add_option("--init", topt.init,
                      "start from a checkpoint whose finished phases are a prefix of this approach's plan");
    train->add_option("--stop-at", topt.stop_at, "stop after this global iteration");
    train->add_option("--checkpoint-every", topt.checkpoint_every, "iterations between checkpoints (0: end only)")
        ->capture_default_str();

    EvalOptions eopt;
    auto* ev = app.add_subcommand("eval", "score a checkpoint on the test split");
    add_common(ev);
    add_training_flags(ev);
    ev->add_option("--data", eopt.data, "dataset directory")->capture_default_str();
    ev->add_option("--checkpoint", eopt.checkpoint, "checkpoint directory")->required();

    auto* diag = app.add_subcommand("diagnose", "SR-vs-HR divergence in the identity space");
    add_common(diag);
    add_training_flags(diag);
    diag->add_option("--data", eopt.data, "dataset directory")->capture_default_str();
    diag->add_option("--checkpoint", eopt.checkpoint, "checkpoint directory")->required();
    diag->add_flag("--hr-vs-hr", eopt.hr_vs_hr, "compare HR against HR (chance-level control)");

    std::size_t gc_seeds = 1;
    std::uint64_t gc_seed = 0;
    bool inject_fault = false;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
    add_common(gc);
    gc->add_option("--seeds", gc_seeds, "number of seeds")->capture_default_str();
    gc->add_option("--first-seed", gc_seed, "first seed")->capture_default_str();
    gc->add_flag("--inject-fault", inject_fault, "test hook: corrupt one backward pass");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        set_num_threads(common.threads);
        if (gen->parsed()) {
            return cmd_generate(common, identities);
        }
        if (train->parsed()) {
            return cmd_train(common, topt);
        }
        if (ev->parsed()) {
            return cmd_eval(common, eopt);
        }
        if (diag->parsed()) {
            return cmd_diagnose(common, eopt);
        }
        if (gc->parsed()) {
            return cmd_gradcheck(gc_seeds, gc_seed, inject_fault);
        }
    } catch (const std::invalid_argument& e) {
        log_error(e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        log_error(e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace sicnn
