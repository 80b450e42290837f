#include "upix/cli/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <random>

#include "upix/core/gradcheck.hpp"
#include "upix/distill/distill.hpp"
#include "upix/io/checkpoint.hpp"
#include "upix/io/config.hpp"
#include "upix/io/evaluate.hpp"
#include "upix/io/image.hpp"
#include "upix/io/synthetic.hpp"
#include "upix/objectives/probe.hpp"
#include "upix/objectives/schedule.hpp"

namespace upix {

namespace {

constexpr double grad_check_step = 1e-5;
constexpr double grad_check_tolerance = 1e-5;

class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> steps;
    std::string checkpoint;
    std::string prompt;
    std::vector<std::string> conditions;
    std::optional<std::size_t> resolution;
    std::optional<std::size_t> count;
};

RunConfig resolve_config(const Flags& flags) {
    RunConfig cfg = flags.config.empty() ? RunConfig{} : load_run_config(flags.config);
    if (flags.seed) cfg.seed = *flags.seed;
    return cfg;
}

void make_directory(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::string require(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string(flag) + " is required");
    return value;
}

class MetricsLog {
public:
    explicit MetricsLog(const std::string& path) : file_(path, std::ios::trunc) {
        if (!file_) throw IoError("cannot open '" + path + "' for writing");
    }
    void line(const std::string& s) {
        file_ << s << '\n';
        file_.flush();
    }

private:
    std::ofstream file_;
};

int cmd_dataset_gen(const Flags& flags, std::ostream& out) {
    auto cfg = resolve_config(flags);
    auto dir = require(flags.out, "--out");
    auto count = flags.count.value_or(cfg.data_count);
    auto res = flags.resolution.value_or(cfg.data_resolution);
    auto records = gen_synthetic_dataset(count, res, cfg.seed, cfg.model.patch);
    make_directory(dir);
    write_dataset(dir, records);
    out << "records=" << records.size() << " resolution=" << res << " dir=" << dir << "\n";
    return 0;
}

int cmd_train(const Flags& flags, std::ostream& out) {
    auto cfg = resolve_config(flags);
    if (flags.steps) {
        for (auto& s : cfg.plan.stages) s.steps = *flags.steps;
    }
    if (!flags.out.empty()) cfg.out_dir = flags.out;
    cfg.plan.validate();
    make_directory(cfg.out_dir);
    write_file(cfg.out_dir + "/config.txt", [&] {
        auto text = format_run_config(cfg);
        return std::vector<std::uint8_t>(text.begin(), text.end());
    }());

    StageDataset dataset;
    auto add_resolution = [&](std::size_t res) {
        if (res == 0 || dataset.count(res)) return;
        auto records = gen_synthetic_dataset(cfg.data_count, res, record_seed(cfg.seed, res), cfg.model.patch);
        dataset[res] = to_training_samples(records, true);
    };
    for (const auto& s : cfg.plan.stages) add_resolution(s.resolution);
    if (cfg.plan.refine.steps > 0) add_resolution(cfg.plan.refine.resolution);

    auto params = init_parameters(cfg.model, cfg.seed);
    TrainContext ctx{cfg.model, cfg.loss, cfg.adam, FeatureNet::random(cfg.model.channels, cfg.seed + 1)};
    MetricsLog log(cfg.out_dir + "/" + cfg.metrics_file);
    ScheduleHooks hooks;
    hooks.on_step = [&log](const StepMetrics& m) { log.line(m.record()); };
    hooks.on_stage_end = [&](const StageLog& stage, const ModelParameters& p) {
        auto path = cfg.out_dir + "/stage" + std::to_string(stage.index) + ".ckpt";
        save_checkpoint(path, cfg.model, p);
        out << "stage=" << stage.index << " name=" << stage.name << " resolution=" << stage.resolution
            << " steps=" << stage.steps << " flow_first=" << stage.first.flow << " flow_last=" << stage.last.flow
            << " checkpoint=" << path << "\n";
    };
    run_stage_schedule(cfg.plan, dataset, params, ctx, TimestepSampler::logit_normal(), cfg.seed, hooks);
    save_checkpoint(cfg.out_dir + "/model.ckpt", cfg.model, params);
    out << "checkpoint=" << cfg.out_dir << "/model.ckpt\n";
    return 0;
}

int cmd_sample(const Flags& flags, std::ostream& out) {
    auto cfg = resolve_config(flags);
    auto [model, params] = load_checkpoint(require(flags.checkpoint, "--checkpoint"));
    auto path = require(flags.out, "--out");
    Prompt prompt{flags.prompt, {}};
    for (const auto& c : flags.conditions) prompt.conditions.push_back(read_image(c));
    auto res = flags.resolution.value_or(cfg.data_resolution);
    if (res % model.patch != 0) {
        throw std::invalid_argument("--resolution " + std::to_string(res) + " is not divisible by the patch size " +
                                    std::to_string(model.patch));
    }
    auto image = sample(params, model, prompt, res, SamplerConfig::uniform(flags.steps.value_or(cfg.sample_steps)),
                        cfg.seed);
    write_image(path, image);
    out << "image=" << path << "\n";
    return 0;
}

int cmd_distill(const Flags& flags, std::ostream& out) {
    auto cfg = resolve_config(flags);
    auto [model, teacher] = load_checkpoint(require(flags.checkpoint, "--checkpoint"));
    auto dir = flags.out.empty() ? cfg.out_dir : flags.out;
    make_directory(dir);
    auto res = flags.resolution.value_or(cfg.data_resolution);
    auto records = gen_synthetic_dataset(cfg.data_count, res, cfg.seed, model.patch, TaskMix::text_to_image());
    auto samples = to_training_samples(records, false);

    auto teacher_frozen = frozen_copy(teacher);
    auto state = DistillState::from_teacher(teacher_frozen, model, cfg.distill, cfg.seed);
    std::mt19937_64 rng(cfg.seed);
    MetricsLog log(dir + "/" + cfg.metrics_file);
    auto steps = flags.steps.value_or(cfg.distill_steps);
    for (std::size_t s = 0; s < steps; ++s) {
        std::vector<TrainingSample> batch;
        for (std::size_t b = 0; b < cfg.distill_batch; ++b) batch.push_back(samples[rng() % samples.size()]);
        log.line(distill_step(state, teacher_frozen, batch, model, cfg.distill, rng).record());
    }
    save_checkpoint(dir + "/student.ckpt", model, state.student);
    out << "checkpoint=" << dir << "/student.ckpt steps=" << steps << "\n";
    return 0;
}

int cmd_grad_check(const Flags& flags, std::ostream& out, std::ostream& err) {
    auto cfg = resolve_config(flags);
    auto setup = gradient_probe_setup(cfg.seed);
    auto report = finite_difference_check(model_readout_probe(setup), setup.params, grad_check_step);
    out << "max_relative_error=" << report.max_relative_error << " coordinates=" << report.coordinates
        << " worst=" << report.worst_parameter << "[" << report.worst_index << "]\n";
    if (!(report.max_relative_error <= grad_check_tolerance)) {
        err << "upix: gradient check exceeded " << grad_check_tolerance << "\n";
        return 2;
    }
    return 0;
}

int cmd_eval(const Flags& flags, std::ostream& out) {
    auto cfg = resolve_config(flags);
    auto [model, params] = load_checkpoint(require(flags.checkpoint, "--checkpoint"));
    auto res = flags.resolution.value_or(cfg.data_resolution);
    auto count = flags.count.value_or(cfg.eval_count);
    auto records =
        gen_synthetic_dataset(count, res, held_out_seed(cfg.seed), model.patch, TaskMix::text_to_image());
    auto report = evaluate(params, model, records, flags.steps.value_or(cfg.sample_steps), cfg.seed);
    out << report.record() << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Pixel-space unified transformer toolkit", "upix"};
    app.require_subcommand(1, 1);
    Flags flags;

    auto add_common = [&flags](CLI::App* sub) {
        sub->add_option("--config", flags.config, "Run configuration file (key = value)");
        sub->add_option("--seed", flags.seed, "Seed overriding the configuration");
    };
    auto* gen = app.add_subcommand("dataset-gen", "Write a synthetic shapes dataset");
    add_common(gen);
    gen->add_option("--out", flags.out, "Output directory");
    gen->add_option("--resolution", flags.resolution, "Image side length");
    gen->add_option("--count", flags.count, "Number of records");

    auto* train = app.add_subcommand("train", "Run the staged training schedule");
    add_common(train);
    train->add_option("--out", flags.out, "Output directory for checkpoints and metrics");
    train->add_option("--steps", flags.steps, "Steps per stage");

    auto* smp = app.add_subcommand("sample", "Generate one image from a checkpoint");
    add_common(smp);
    smp->add_option("--checkpoint", flags.checkpoint, "Model checkpoint");
    smp->add_option("--prompt", flags.prompt, "Caption or instruction");
    smp->add_option("--condition", flags.conditions, "Reference image (PPM); repeatable");
    smp->add_option("--resolution", flags.resolution, "Image side length");
    smp->add_option("--steps", flags.steps, "Euler steps");
    smp->add_option("--out", flags.out, "Output PPM path");

    auto* dist = app.add_subcommand("distill", "Distil a few-step student from a teacher checkpoint");
    add_common(dist);
    dist->add_option("--checkpoint", flags.checkpoint, "Teacher checkpoint");
    dist->add_option("--steps", flags.steps, "Outer distillation steps");
    dist->add_option("--resolution", flags.resolution, "Image side length");
    dist->add_option("--out", flags.out, "Output directory");

    auto* gc = app.add_subcommand("grad-check", "Finite-difference check of a fresh model's loss");
    add_common(gc);

    auto* ev = app.add_subcommand("eval", "Losses and caption accuracy on a held-out split");
    add_common(ev);
    ev->add_option("--checkpoint", flags.checkpoint, "Model checkpoint");
    ev->add_option("--resolution", flags.resolution, "Image side length");
    ev->add_option("--steps", flags.steps, "Euler steps for sampling");
    ev->add_option("--count", flags.count, "Held-out prompts");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "upix: " << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_dataset_gen(flags, out);
        if (train->parsed()) return cmd_train(flags, out);
        if (smp->parsed()) return cmd_sample(flags, out);
        if (dist->parsed()) return cmd_distill(flags, out);
        if (gc->parsed()) return cmd_grad_check(flags, out, err);
        if (ev->parsed()) return cmd_eval(flags, out);
        err << app.help();
        return 1;
    } catch (const UsageError& e) {
        err << "upix: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        err << "upix: " << e.what() << "\n";
        return 1;
    } catch (const std::domain_error& e) {
        err << "upix: " << e.what() << "\n";
        return 1;
    } catch (const FormatError& e) {
        err << "upix: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        err << "upix: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "upix: internal error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace upix
