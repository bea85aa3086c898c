// Command-line driver: corpus synthesis, pretraining, test-time adaptation,
// evaluation, window sweeps and gradient self-checks. Every run writes its
// resolved configuration next to its outputs so it can be replayed.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aupt/checkpoint.hpp"
#include "aupt/dataset.hpp"
#include "aupt/embedding_io.hpp"
#include "aupt/errors.hpp"
#include "aupt/gradcheck.hpp"
#include "aupt/metrics.hpp"
#include "aupt/pretrain.hpp"
#include "aupt/synth.hpp"
#include "aupt/tta.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace aupt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

fs::path resolve_out(const std::string& out, const std::string& subcommand) {
    if (!out.empty()) return out;
    const char* root = std::getenv("AUPT_OUT_ROOT");
    if (root != nullptr && *root != '\0') return fs::path(root) / subcommand;
    throw ConfigError("--out is required (or set AUPT_OUT_ROOT)");
}

void write_config(const fs::path& dir, const json& resolved) {
    atomic_write_file(dir / "config.json", resolved.dump(2) + "\n");
}

/// Fill flag values from a JSON config file for every option the user did
/// not pass explicitly; flags always win over the file.
void apply_config_file(CLI::App* cmd, const std::string& config_path) {
    if (config_path.empty()) return;
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file: " + config_path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("bad config file " + config_path + ": " + e.what());
    }
    for (auto& [key, value] : j.items()) {
        CLI::Option* opt = cmd->get_option_no_throw("--" + key);
        if (opt == nullptr || opt->count() > 0 || opt->get_expected_min() == 0) continue;
        std::string s = value.is_string() ? value.get<std::string>() : value.dump();
        opt->add_result(s);
    }
}

json manifest_summary(const Manifest& m) {
    return {{"dataset", m.dataset}, {"dim", m.dim}, {"classes", m.classes},
            {"videos", m.records.size()}};
}

json video_report_json(const VideoReport& r) {
    return {{"subject", r.subject},
            {"label", r.label},
            {"prediction", r.prediction},
            {"pre_adapt_prediction", r.pre_adapt_prediction},
            {"i_star", r.selection.i_star},
            {"M", r.selection.count},
            {"entropy_trace", r.trace.entropies}};
}

void write_adapt_outputs(const fs::path& out_dir, const AdaptRunResult& run) {
    std::ostringstream reports;
    for (const auto& r : run.reports) reports << video_report_json(r).dump() << "\n";
    atomic_write_file(out_dir / "reports.jsonl", reports.str());
    atomic_write_file(out_dir / "metrics.csv", metrics_csv(run.metrics));
    atomic_write_file(out_dir / "metrics.json", metrics_json(run.metrics));
}

struct SynthFlags {
    SynthSpec spec;
    std::string out;
    std::string config;

    void attach(CLI::App* cmd) {
        cmd->add_option("--out", out, "output corpus directory");
        cmd->add_option("--config", config, "JSON config file; flags override its values");
        cmd->add_option("--seed", spec.seed, "base seed");
        cmd->add_option("--dim", spec.dim, "embedding dimension d");
        cmd->add_option("--prompts", spec.prompts, "prompt count N");
        cmd->add_option("--classes", spec.classes, "class count C");
        cmd->add_option("--source-subjects", spec.source_subjects, "source subject count");
        cmd->add_option("--target-subjects", spec.target_subjects, "target subject count");
        cmd->add_option("--videos", spec.videos_per_subject, "videos per subject");
        cmd->add_option("--t-min", spec.t_min, "minimum frame count");
        cmd->add_option("--t-max", spec.t_max, "maximum frame count");
        cmd->add_option("--active", spec.active_per_class, "active template entries per class");
        cmd->add_option("--shared-active", spec.shared_active, "template entries shared by classes");
        cmd->add_option("--subject-perturb", spec.subject_perturb, "subject template jitter");
        cmd->add_option("--intensity-lo", spec.intensity_lo, "minimum peak intensity");
        cmd->add_option("--intensity-hi", spec.intensity_hi, "maximum peak intensity");
        cmd->add_option("--confound-strength", spec.confound_strength, "edge-segment amplitude");
        cmd->add_option("--confound-tilt", spec.confound_tilt, "edge-segment class lean");
        cmd->add_option("--target-shift", spec.target_shift, "target subject deviation scale");
        cmd->add_option("--noise", spec.noise, "frame noise scale");
        cmd->add_option("--prompt-noise", spec.prompt_noise, "prompt offset scale");
    }

    json resolved() const {
        return {{"seed", spec.seed}, {"dim", spec.dim}, {"prompts", spec.prompts},
                {"classes", spec.classes}, {"source_subjects", spec.source_subjects},
                {"target_subjects", spec.target_subjects}, {"videos", spec.videos_per_subject},
                {"t_min", spec.t_min}, {"t_max", spec.t_max},
                {"active", spec.active_per_class}, {"shared_active", spec.shared_active},
                {"subject_perturb", spec.subject_perturb},
                {"intensity_lo", spec.intensity_lo}, {"intensity_hi", spec.intensity_hi},
                {"confound_strength", spec.confound_strength},
                {"confound_tilt", spec.confound_tilt}, {"target_shift", spec.target_shift},
                {"noise", spec.noise}, {"prompt_noise", spec.prompt_noise}};
    }
};

struct TrainFlags {
    TrainConfig cfg;
    std::string manifest;
    std::string prompts;
    std::string out;
    std::string config;
    std::string classifier = "mlp";
    bool no_shuffle = false;
    std::size_t jobs = 1;

    void attach(CLI::App* cmd) {
        cmd->add_option("--manifest", manifest, "training manifest (source role is used)");
        cmd->add_option("--prompts", prompts, "prompt set (.aue1 with .json sidecar)");
        cmd->add_option("--out", out, "output run directory");
        cmd->add_option("--config", config, "JSON config file; flags override its values");
        cmd->add_option("--epochs", cfg.epochs, "training epochs");
        cmd->add_option("--batch", cfg.batch, "batch size");
        cmd->add_option("--lr", cfg.lr, "learning rate");
        cmd->add_option("--wd", cfg.weight_decay, "weight decay");
        cmd->add_option("--seed", cfg.seed, "base seed");
        cmd->add_flag("--no-shuffle", no_shuffle, "disable epoch shuffling");
        cmd->add_option("--classifier", classifier, "classifier kind: mlp | linear-head");
        cmd->add_option("--kernel", cfg.kernel_width, "temporal kernel width (odd; 1 = per-frame linear)");
        cmd->add_option("--hidden", cfg.hidden, "classifier hidden width");
        cmd->add_option("--jobs", jobs, "worker threads for evaluation");
    }

    json resolved() const {
        return {{"manifest", manifest}, {"prompts", prompts}, {"epochs", cfg.epochs},
                {"batch", cfg.batch}, {"lr", cfg.lr}, {"wd", cfg.weight_decay},
                {"seed", cfg.seed}, {"shuffle", !no_shuffle}, {"classifier", classifier},
                {"kernel", cfg.kernel_width}, {"hidden", cfg.hidden}, {"jobs", jobs}};
    }
};

struct AdaptFlags {
    TTAConfig cfg;
    std::string checkpoint;
    std::string manifest;
    std::string out;
    std::string config;
    std::string reset = "per-video";
    std::string score = "whole-video";
    std::string role = "target";
    long long iterations = 10;
    std::size_t jobs = 1;

    void attach(CLI::App* cmd) {
        cmd->add_option("--checkpoint", checkpoint, "pretrained checkpoint");
        cmd->add_option("--manifest", manifest, "manifest with target videos");
        cmd->add_option("--out", out, "output run directory");
        cmd->add_option("--config", config, "JSON config file; flags override its values");
        cmd->add_option("--window", cfg.window, "sliding-window length L");
        cmd->add_option("--iters", iterations, "prompt-tuning iterations");
        cmd->add_option("--lr", cfg.lr, "adaptation learning rate");
        cmd->add_option("--wd", cfg.weight_decay, "adaptation weight decay");
        cmd->add_option("--reset", reset, "reset policy: per-video | per-subject");
        cmd->add_option("--score", score, "final scoring: whole-video | selected-window");
        cmd->add_option("--role", role, "manifest role to adapt on: target | source | all");
        cmd->add_option("--jobs", jobs, "worker threads");
    }

    void finalize() {
        if (iterations < 0) throw ConfigError("--iters must be >= 0");
        cfg.iterations = static_cast<std::size_t>(iterations);
        cfg.reset = reset_policy_from_string(reset);
        cfg.score = score_mode_from_string(score);
    }

    json resolved() const {
        return {{"checkpoint", checkpoint}, {"manifest", manifest}, {"window", cfg.window},
                {"iters", iterations}, {"lr", cfg.lr}, {"wd", cfg.weight_decay},
                {"reset", reset}, {"score", score}, {"role", role}, {"jobs", jobs}};
    }
};

std::vector<EmbeddingSequence> load_role(const Manifest& m, const std::string& role) {
    if (role == "all") return load_all(m);
    return load_all(split_subjects(m, role_from_string(role)));
}

int cmd_synth(SynthFlags& f) {
    fs::path out = resolve_out(f.out, "synth");
    fs::create_directories(out);
    synth_generate(f.spec, out);
    write_config(out, f.resolved());
    std::cout << "corpus written to " << out.string() << "\n";
    return kExitOk;
}

int cmd_pretrain(TrainFlags& f) {
    if (f.manifest.empty() || f.prompts.empty()) {
        throw ConfigError("pretrain needs --manifest and --prompts");
    }
    fs::path out = resolve_out(f.out, "pretrain");
    fs::create_directories(out);
    f.cfg.shuffle = !f.no_shuffle;
    f.cfg.classifier = classifier_from_string(f.classifier);

    Manifest manifest = read_manifest(f.manifest);
    PromptSet prompts = read_prompt_set(f.prompts);
    auto videos = load_all(split_subjects(manifest, Role::kSource));
    if (videos.empty()) throw ProtocolError("pretrain: manifest has no source videos");

    // initial parameter dump, useful for the lr=0 no-op check
    {
        std::size_t classes = std::max<std::size_t>(manifest.classes, 2);
        ModelParams init = ModelParams::init(prompts.embeddings.dim(1), prompts.embeddings.dim(0),
                                             classes, f.cfg.kernel_width, f.cfg.hidden,
                                             f.cfg.classifier, f.cfg.seed);
        Checkpoint ic;
        ic.params = std::move(init);
        ic.raw_prompts = prompts.embeddings;
        Tape tape;
        BoundModel bound = BoundModel::bind(tape, ic.params);
        ic.adapted_prompts =
            tape.value(adapt_prompt_embeddings(tape, tape.leaf(ic.raw_prompts), bound));
        save_checkpoint(ic, out / "checkpoint_init.bin");
    }

    auto [ckpt, report] = pretrain(videos, prompts, f.cfg);
    save_checkpoint(ckpt, out / "checkpoint.bin");

    EvalResult eval = evaluate(videos, ckpt, f.jobs);
    json jreport;
    jreport["checkpoint"] = (out / "checkpoint.bin").string();
    jreport["epochs"] = json::array();
    for (const auto& e : report.epochs) {
        jreport["epochs"].push_back({{"mean_loss", e.mean_loss}, {"train_war", e.train_war},
                                     {"seconds", e.seconds}});
    }
    jreport["final_train_war"] = eval.metrics.war;
    jreport["manifest"] = manifest_summary(manifest);
    atomic_write_file(out / "report.json", jreport.dump(2) + "\n");
    write_config(out, f.resolved());
    std::cout << "final train WAR " << round1(eval.metrics.war) << " -> " << out.string() << "\n";
    return kExitOk;
}

int cmd_eval(AdaptFlags& f) {
    if (f.checkpoint.empty() || f.manifest.empty()) {
        throw ConfigError("eval needs --checkpoint and --manifest");
    }
    fs::path out = resolve_out(f.out, "eval");
    fs::create_directories(out);
    Checkpoint ckpt = load_checkpoint(f.checkpoint);
    Manifest manifest = read_manifest(f.manifest);
    auto videos = load_role(manifest, f.role);
    if (videos.empty()) throw ProtocolError("eval: no videos for role " + f.role);

    EvalResult res = evaluate(videos, ckpt, f.jobs);
    std::ostringstream preds;
    for (std::size_t i = 0; i < res.predictions.size(); ++i) {
        const auto& p = res.predictions[i];
        preds << json({{"subject", p.subject}, {"label", p.label}, {"prediction", p.predicted},
                       {"probabilities", res.probabilities[i]}})
                     .dump()
              << "\n";
    }
    atomic_write_file(out / "report.jsonl", preds.str());
    atomic_write_file(out / "metrics.csv", metrics_csv(res.metrics));
    atomic_write_file(out / "metrics.json", metrics_json(res.metrics));
    write_config(out, f.resolved());
    std::cout << metrics_csv(res.metrics);
    return kExitOk;
}

int cmd_adapt(AdaptFlags& f) {
    if (f.checkpoint.empty() || f.manifest.empty()) {
        throw ConfigError("adapt needs --checkpoint and --manifest");
    }
    f.finalize();
    fs::path out = resolve_out(f.out, "adapt");
    fs::create_directories(out);
    Checkpoint ckpt = load_checkpoint(f.checkpoint);
    Manifest manifest = read_manifest(f.manifest);
    auto videos = load_role(manifest, f.role);
    if (videos.empty()) throw ProtocolError("adapt: no videos for role " + f.role);

    AdaptRunResult run = adapt_run(videos, ckpt, f.cfg, f.jobs);
    write_adapt_outputs(out, run);
    write_config(out, f.resolved());
    std::cout << metrics_csv(run.metrics);
    return kExitOk;
}

int cmd_sweep(AdaptFlags& f, const std::string& windows_csv) {
    if (f.checkpoint.empty() || f.manifest.empty()) {
        throw ConfigError("sweep needs --checkpoint and --manifest");
    }
    f.finalize();
    fs::path out = resolve_out(f.out, "sweep");
    fs::create_directories(out);

    std::vector<std::size_t> windows;
    {
        std::stringstream ss(windows_csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (tok.empty()) continue;
            try {
                long long v = std::stoll(tok);
                if (v < 1) throw ConfigError("--windows entries must be >= 1");
                windows.push_back(static_cast<std::size_t>(v));
            } catch (const std::invalid_argument&) {
                throw ConfigError("--windows: bad entry '" + tok + "'");
            }
        }
    }
    if (windows.empty()) throw ConfigError("sweep needs --windows");

    Checkpoint ckpt = load_checkpoint(f.checkpoint);
    Manifest manifest = read_manifest(f.manifest);
    auto videos = load_role(manifest, f.role);
    if (videos.empty()) throw ProtocolError("sweep: no videos for role " + f.role);

    std::ostringstream csv;
    csv << "window,war,uar,macro_f1\n";
    for (std::size_t w : windows) {
        TTAConfig cfg = f.cfg;
        cfg.window = w;
        AdaptRunResult run = adapt_run(videos, ckpt, cfg, f.jobs);
        csv << w << "," << round1(run.metrics.war) << "," << round1(run.metrics.uar) << ","
            << round1(run.metrics.macro_f1) << "\n";
    }
    atomic_write_file(out / "sweep.csv", csv.str());
    json resolved = f.resolved();
    resolved["windows"] = windows;
    write_config(out, resolved);
    std::cout << csv.str();
    return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, double eps, std::size_t instances,
                  const std::string& break_op, const std::string& out_str) {
    GradCheckOptions opts;
    opts.seed = seed;
    opts.step = eps;
    opts.instances = instances;
    opts.break_op = break_op;
    auto results = run_gradient_checks(opts);

    bool ok = true;
    json jres = json::array();
    for (const auto& r : results) {
        std::cout << (r.passed() ? "[ok]   " : "[FAIL] ") << r.name << "  instances="
                  << r.instances << "  worst_rel_err=" << r.worst_rel_err << "\n";
        jres.push_back({{"name", r.name}, {"instances", r.instances},
                        {"failures", r.failures}, {"worst_rel_err", r.worst_rel_err}});
        if (!r.passed()) {
            ok = false;
            std::cerr << "gradient mismatch in op: " << r.name << "\n";
        }
    }
    if (!out_str.empty()) {
        fs::path out = out_str;
        fs::create_directories(out);
        atomic_write_file(out / "gradcheck.json", jres.dump(2) + "\n");
        write_config(out, {{"seed", seed}, {"eps", eps}, {"instances", instances},
                           {"break_op", break_op}});
    }
    return ok ? kExitOk : kExitRuntime;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"prompt-guided temporal emotion recognition over embedding sequences"};
    app.require_subcommand(1);

    SynthFlags synth_flags;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus");
    synth_flags.attach(synth_cmd);

    TrainFlags train_flags;
    auto* pretrain_cmd = app.add_subcommand("pretrain", "supervised source-domain training");
    train_flags.attach(pretrain_cmd);

    AdaptFlags eval_flags;
    auto* eval_cmd = app.add_subcommand("eval", "plain evaluation of a checkpoint");
    eval_flags.attach(eval_cmd);

    AdaptFlags adapt_flags;
    auto* adapt_cmd = app.add_subcommand("adapt", "test-time personalization on target videos");
    adapt_flags.attach(adapt_cmd);

    AdaptFlags sweep_flags;
    std::string windows_csv;
    auto* sweep_cmd = app.add_subcommand("sweep", "window-length ablation sweep");
    sweep_flags.attach(sweep_cmd);
    sweep_cmd->add_option("--windows", windows_csv, "comma-separated window lengths");

    std::uint64_t gc_seed = 7;
    double gc_eps = 1e-5;
    std::size_t gc_instances = 100;
    std::string gc_break, gc_out;
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient self-check");
    gc_cmd->add_option("--seed", gc_seed, "base seed");
    gc_cmd->add_option("--eps", gc_eps, "finite-difference step");
    gc_cmd->add_option("--instances", gc_instances, "instances per check");
    gc_cmd->add_option("--break-op", gc_break, "debug: sabotage the named op's gradients");
    gc_cmd->add_option("--out", gc_out, "optional output directory");

    try {
        app.parse(argc, argv);
        if (synth_cmd->parsed()) {
            apply_config_file(synth_cmd, synth_flags.config);
            return cmd_synth(synth_flags);
        }
        if (pretrain_cmd->parsed()) {
            apply_config_file(pretrain_cmd, train_flags.config);
            return cmd_pretrain(train_flags);
        }
        if (eval_cmd->parsed()) {
            apply_config_file(eval_cmd, eval_flags.config);
            return cmd_eval(eval_flags);
        }
        if (adapt_cmd->parsed()) {
            apply_config_file(adapt_cmd, adapt_flags.config);
            return cmd_adapt(adapt_flags);
        }
        if (sweep_cmd->parsed()) {
            apply_config_file(sweep_cmd, sweep_flags.config);
            return cmd_sweep(sweep_flags, windows_csv);
        }
        if (gc_cmd->parsed()) {
            return cmd_gradcheck(gc_seed, gc_eps, gc_instances, gc_break, gc_out);
        }
        return kExitConfig;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
