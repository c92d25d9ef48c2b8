// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

// visii: invert, apply and evaluate learned visual instructions.
//
// Exit codes: 0 success, 1 usage error, 2 backend error, 3 data error.
// Nonzero exits print exactly one line to stderr:
//   visii: error: <code>: <message>

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "visii/backend.hpp"
#include "visii/captioner.hpp"
#include "visii/demo_images.hpp"
#include "visii/editor.hpp"
#include "visii/errors.hpp"
#include "visii/image.hpp"
#include "visii/instruction_io.hpp"
#include "visii/inversion.hpp"
#include "visii/metrics.hpp"
#include "visii/mini_backend.hpp"

extern char** environ;

namespace fs = std::filesystem;
using namespace visii;

namespace {

enum Exit { kOk = 0, kUsage = 1, kBackend = 2, kData = 3 };

struct CliError {
    int exit_code;
    std::string code;
    std::string message;
};

int exit_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_argument:
    case ErrorCode::overflow:
    case ErrorCode::out_of_range:
        return kUsage;
    case ErrorCode::backend:
    case ErrorCode::numerical:
    case ErrorCode::captioner_unavailable:
        return kBackend;
    default:
        return kData;
    }
}

int report(int exit_code, std::string_view code, std::string message) {
    for (auto& c : message) {
        if (c == '\n' || c == '\r') {
            c = ' ';
        }
    }
    std::cerr << "visii: error: " << code << ": " << message << std::endl;
    return exit_code;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::unique_ptr<Backend> open_backend(const std::string& config_path) {
    try {
        if (!config_path.empty()) {
            return make_backend(BackendConfig::load(config_path));
        }
        return load_backend_from_env();
    } catch (const Error& e) {
        throw CliError{kBackend, "backend", e.what()};
    }
}

// --- invert ----------------------------------------------------------------

struct InvertArgs {
    std::vector<std::string> before;
    std::vector<std::string> after;
    std::string out;
    std::string init_text;
    int k = 0;
    InversionConfig config;
    bool no_clip_loss = false;
    std::string captioner_command;
    int log_every = 100;
};

void add_invert(CLI::App& app, InvertArgs& a) {
    auto* cmd = app.add_subcommand("invert", "learn an instruction from before/after pairs");
    cmd->add_option("--before", a.before, "before image (repeatable, pairs with --after by position)")->required();
    cmd->add_option("--after", a.after, "after image (repeatable)")->required();
    cmd->add_option("--out", a.out, "output .visii path; the loss CSV lands next to it")->required();
    cmd->add_option("--init-text", a.init_text, "initialize from this text instead of a caption");
    cmd->add_option("--k", a.k, "trainable tokens (0 = length of the initial text)")->check(CLI::NonNegativeNumber);
    cmd->add_option("--steps", a.config.n_steps, "optimization steps N");
    cmd->add_option("--timesteps", a.config.n_timesteps, "diffusion timesteps T");
    cmd->add_option("--lmse", a.config.lambda_mse, "reconstruction weight");
    cmd->add_option("--lclip", a.config.lambda_clip, "CLIP alignment weight");
    cmd->add_option("--lr", a.config.learning_rate, "AdamW learning rate");
    cmd->add_option("--weight-decay", a.config.weight_decay, "AdamW weight decay");
    cmd->add_option("--seed", a.config.seed, "base seed");
    cmd->add_flag("--no-clip-loss", a.no_clip_loss, "drop the CLIP alignment term (default: off)");
    cmd->add_flag("--fresh-noise", a.config.fresh_noise_per_step, "draw new noise every step (default: off)");
    cmd->add_option("--captioner-command", a.captioner_command, "external captioner: `<cmd> <png>` prints a caption");
    cmd->add_option("--log-every", a.log_every, "progress line to stderr every this many steps (0 = quiet)");
}

int run_invert(const InvertArgs& a, const std::string& backend_config) {
    if (a.before.size() != a.after.size()) {
        throw CliError{kUsage, "usage",
                       "got " + std::to_string(a.before.size()) + " --before and " + std::to_string(a.after.size()) +
                           " --after images; they must pair up"};
    }
    InversionConfig config = a.config;
    config.use_clip_loss = !a.no_clip_loss;
    if (!a.init_text.empty()) {
        config.init_source = InitSource::user_text;
        config.init_text = a.init_text;
    }
    if (a.k > 0) {
        config.k = a.k;
    }
    std::cout << "N=" << config.n_steps << " lmse=" << fmt(config.lambda_mse) << " lclip=" << fmt(config.lambda_clip)
              << " lr=" << fmt(config.learning_rate) << std::endl;

    std::vector<TrainingPair> pairs;
    for (std::size_t i = 0; i < a.before.size(); ++i) {
        pairs.push_back({load_png(a.before[i]), load_png(a.after[i])});
    }
    const auto backend = open_backend(backend_config);
    config.validate(backend.get());

    std::unique_ptr<Captioner> captioner;
    if (!a.captioner_command.empty()) {
        captioner = std::make_unique<CommandCaptioner>(a.captioner_command);
    }
    InversionHooks hooks;
    hooks.captioner = captioner.get();
    hooks.on_step = [&](const LossBreakdown& l) {
        if (a.log_every > 0 && ((l.step + 1) % a.log_every == 0)) {
            std::cerr << "step " << l.step + 1 << "/" << config.n_steps << " loss=" << fmt(l.total)
                      << " mse=" << fmt(l.mse) << " clip=" << fmt(l.clip) << "\n";
        }
    };
    const auto result = invert(*backend, pairs, config, hooks);
    checkpoint(result.instruction, result.history, a.out);

    std::cout << "wrote " << a.out << " and " << loss_csv_path(a.out).string() << "\n";
    if (result.history.empty()) {
        std::cout << "final loss: none (0 steps)\n";
    } else {
        const auto& last = result.history.back();
        std::cout << "final loss=" << fmt(last.total) << " mse=" << fmt(last.mse) << " clip=" << fmt(last.clip)
                  << " k=" << result.instruction.k() << "\n";
    }
    return kOk;
}

// --- apply -----------------------------------------------------------------

struct ApplyArgs {
    std::string instruction;
    std::string image;
    std::string out;
    std::string extra_text;
    std::string noise = "fixed";
    std::string sampler = "deterministic";
    GuidanceConfig guidance;
    bool resize = false;
};

void add_apply(CLI::App& app, ApplyArgs& a) {
    auto* cmd = app.add_subcommand("apply", "edit an image with a learned instruction");
    cmd->add_option("--instruction", a.instruction, ".visii file")->required();
    cmd->add_option("--image", a.image, "input PNG")->required();
    cmd->add_option("--out", a.out, "output PNG; the sidecar is <out>.json")->required();
    cmd->add_option("--extra-text", a.extra_text, "text appended after the learned tokens");
    cmd->add_option("--noise", a.noise, "fixed reuses the instruction's noise; random draws from --run-seed")
        ->check(CLI::IsMember({"fixed", "random"}));
    cmd->add_option("--sampler", a.sampler, "DDIM variant")->check(CLI::IsMember({"deterministic", "ancestral"}));
    cmd->add_option("--text-scale", a.guidance.text_scale, "text guidance scale");
    cmd->add_option("--image-scale", a.guidance.image_scale, "image guidance scale");
    cmd->add_option("--sampler-steps", a.guidance.sampler_steps, "sampling steps");
    cmd->add_option("--run-seed", a.guidance.run_seed, "seed for --noise random");
    cmd->add_flag("--resize", a.resize, "center-crop and resize the input to the backend's native resolution (default: off)");
}

int run_apply(const ApplyArgs& a, const std::string& backend_config) {
    GuidanceConfig guidance = a.guidance;
    guidance.noise_mode = parse_noise_mode(a.noise);
    guidance.sampler = parse_sampler(a.sampler);

    const auto instruction = load_instruction(a.instruction);
    auto image = load_png(a.image);
    const auto backend = open_backend(backend_config);
    if (a.resize) {
        const int side = backend->config().native_resolution;
        image = center_crop_resize(image, side, side);
    }
    guidance.validate(backend->timesteps());

    std::optional<std::string_view> extra;
    if (!a.extra_text.empty()) {
        extra = a.extra_text;
    }
    const auto result = apply(*backend, instruction, image, guidance, extra);
    save_png(result.image, a.out);
    const auto sidecar =
        edit_sidecar(fs::path(a.instruction).filename().string(), extra, guidance, instruction.metadata().base_seed);
    std::ofstream(sidecar_path(a.out)) << sidecar.dump(2) << "\n";
    std::cout << "wrote " << a.out << " and " << sidecar_path(a.out).string() << "\n";
    return kOk;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
    std::string manifest;
    std::string out_dir;
    int workers = 1;
    int shard_index = 0;
    int shard_count = 1;
    std::string shard_out;
};

void add_eval(CLI::App& app, EvalArgs& a) {
    auto* cmd = app.add_subcommand("eval", "score a manifest of editing directions");
    cmd->add_option("--manifest", a.manifest, "manifest JSON")->required();
    cmd->add_option("--out-dir", a.out_dir, "directory for results.csv and histogram.json");
    cmd->add_option("--workers", a.workers, "worker processes")->check(CLI::Range(1, 256));
    // Internal: one worker's share, written as JSON records.
    cmd->add_option("--shard-index", a.shard_index)->group("");
    cmd->add_option("--shard-count", a.shard_count)->group("");
    cmd->add_option("--shard-out", a.shard_out)->group("");
}

std::string self_exe() { return fs::read_symlink("/proc/self/exe").string(); }

std::vector<EvalRecord> run_shards(const EvalArgs& a, const std::string& backend_config) {
    const auto tmp = fs::temp_directory_path() / ("visii-eval-" + std::to_string(::getpid()));
    fs::create_directories(tmp);
    const auto exe = self_exe();
    std::vector<pid_t> pids;
    std::vector<fs::path> outputs;
    for (int i = 0; i < a.workers; ++i) {
        outputs.push_back(tmp / ("shard-" + std::to_string(i) + ".json"));
        std::vector<std::string> args = {exe,
                                         "eval",
                                         "--manifest",
                                         a.manifest,
                                         "--shard-index",
                                         std::to_string(i),
                                         "--shard-count",
                                         std::to_string(a.workers),
                                         "--shard-out",
                                         outputs.back().string()};
        if (!backend_config.empty()) {
            args.insert(args.begin() + 1, {"--backend-config", backend_config});
        }
        std::vector<char*> argv;
        for (auto& s : args) {
            argv.push_back(s.data());
        }
        argv.push_back(nullptr);
        pid_t pid = 0;
        if (::posix_spawn(&pid, exe.c_str(), nullptr, nullptr, argv.data(), environ) != 0) {
            throw CliError{kBackend, "backend", "cannot spawn eval worker"};
        }
        pids.push_back(pid);
    }
    int worst = kOk;
    for (const auto pid : pids) {
        int status = 0;
        ::waitpid(pid, &status, 0);
        const int code = WIFEXITED(status) ? WEXITSTATUS(status) : kBackend;
        worst = std::max(worst, code);
    }
    if (worst != kOk) {
        fs::remove_all(tmp);
        // The worker already printed its error line.
        throw worst;
    }
    std::vector<EvalRecord> records;
    for (const auto& path : outputs) {
        std::ifstream in(path);
        for (auto& r : records_from_json(nlohmann::json::parse(in))) {
            records.push_back(std::move(r));
        }
    }
    fs::remove_all(tmp);
    std::sort(records.begin(), records.end(), [](const EvalRecord& x, const EvalRecord& y) {
        return x.order != y.order ? x.order < y.order : x.test_id < y.test_id;
    });
    return records;
}

void print_summary(const std::vector<EvalRecord>& records) {
    auto mean = [&](auto member) {
        double sum = 0;
        int n = 0;
        for (const auto& r : records) {
            if (const auto& v = r.*member) {
                sum += *v;
                ++n;
            }
        }
        return n ? fmt(sum / n) : std::string("nan");
    };
    int ok = 0;
    for (const auto& r : records) {
        ok += r.status == "ok";
    }
    std::cout << "records=" << records.size() << " ok=" << ok << " image_sim=" << mean(&EvalRecord::image_sim)
              << " directional_sim=" << mean(&EvalRecord::directional_sim)
              << " visual_sim=" << mean(&EvalRecord::visual_sim) << "\n";
}

int run_eval(const EvalArgs& a, const std::string& backend_config) {
    const auto manifest = load_manifest(a.manifest);
    if (!a.shard_out.empty()) {
        const auto backend = open_backend(backend_config);
        const auto records = evaluate_records(*backend, manifest, a.shard_index, a.shard_count);
        std::ofstream(a.shard_out) << records_to_json(records).dump();
        return kOk;
    }
    if (a.out_dir.empty()) {
        throw CliError{kUsage, "usage", "--out-dir is required"};
    }
    std::vector<EvalRecord> records;
    if (a.workers > 1) {
        records = run_shards(a, backend_config);
    } else {
        const auto backend = open_backend(backend_config);
        records = evaluate_records(*backend, manifest);
    }
    write_eval_outputs(records, a.out_dir);
    print_summary(records);
    return kOk;
}

// --- demo / export-weights --------------------------------------------------

struct DemoArgs {
    std::string out_dir;
    int count = 3;
    int size = 64;
    std::string edit = "sepia";
};

void add_demo(CLI::App& app, DemoArgs& a) {
    auto* cmd = app.add_subcommand("demo", "write synthetic scenes and a pixel-space edit of each");
    cmd->add_option("--out-dir", a.out_dir, "output directory")->required();
    cmd->add_option("--count", a.count, "number of scenes")->check(CLI::Range(1, 1000));
    cmd->add_option("--size", a.size, "side length in pixels");
    cmd->add_option("--edit", a.edit, "pixel edit applied to make the after images")
        ->check(CLI::IsMember(pixel_edit_names()));
}

int run_demo(const DemoArgs& a) {
    fs::create_directories(a.out_dir);
    const auto edit = parse_pixel_edit(a.edit);
    for (int i = 0; i < a.count; ++i) {
        const auto scene = demo_scene(i, a.size);
        save_png(scene, fs::path(a.out_dir) / ("scene" + std::to_string(i) + ".png"));
        save_png(apply_pixel_edit(scene, edit), fs::path(a.out_dir) / ("scene" + std::to_string(i) + "_" + a.edit + ".png"));
    }
    std::cout << "wrote " << a.count << " scene pairs to " << a.out_dir << "\n";
    return kOk;
}

int run_export_weights(const std::string& out, const std::string& backend_config) {
    const auto backend = open_backend(backend_config);
    const auto* mini = dynamic_cast<const MiniBackend*>(backend.get());
    if (mini == nullptr) {
        throw CliError{kUsage, "usage", "export-weights needs the mini backend"};
    }
    std::ofstream file(out);
    VISII_CHECK(file.good(), ErrorCode::io, "cannot write ", out);
    file << mini->export_weights().dump();
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"visii: learn edit instructions from before/after image pairs"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    std::string backend_config;
    app.add_option("--backend-config", backend_config, "backend config JSON (default: $VISII_BACKEND_CONFIG)");

    InvertArgs invert_args;
    ApplyArgs apply_args;
    EvalArgs eval_args;
    DemoArgs demo_args;
    std::string weights_out;
    add_invert(app, invert_args);
    add_apply(app, apply_args);
    add_eval(app, eval_args);
    add_demo(app, demo_args);
    app.add_subcommand("export-weights", "dump the mini backend's weights as JSON")
        ->add_option("--out", weights_out, "output JSON")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report(kUsage, "usage", e.what());
    }

    try {
        const auto& name = app.get_subcommands().front()->get_name();
        if (name == "invert") {
            return run_invert(invert_args, backend_config);
        }
        if (name == "apply") {
            return run_apply(apply_args, backend_config);
        }
        if (name == "eval") {
            return run_eval(eval_args, backend_config);
        }
        if (name == "demo") {
            return run_demo(demo_args);
        }
        return run_export_weights(weights_out, backend_config);
    } catch (const CliError& e) {
        return report(e.exit_code, e.code, e.message);
    } catch (const Error& e) {
        return report(exit_for(e.code()), to_string(e.code()), e.what());
    } catch (int code) {
        return code;
    } catch (const std::exception& e) {
        return report(kData, "io", e.what());
    }
}
