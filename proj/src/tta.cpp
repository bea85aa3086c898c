#include "aupt/tta.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "aupt/adamw.hpp"
#include "aupt/errors.hpp"
#include "aupt/pretrain.hpp"
#include "aupt/tape.hpp"

namespace aupt {

ResetPolicy reset_policy_from_string(const std::string& s) {
    if (s == "per-video") return ResetPolicy::kPerVideo;
    if (s == "per-subject") return ResetPolicy::kPerSubject;
    throw ConfigError("unknown reset policy: " + s);
}

std::string to_string(ResetPolicy p) {
    return p == ResetPolicy::kPerVideo ? "per-video" : "per-subject";
}

ScoreMode score_mode_from_string(const std::string& s) {
    if (s == "whole-video") return ScoreMode::kWholeVideo;
    if (s == "selected-window") return ScoreMode::kSelectedWindow;
    throw ConfigError("unknown score mode: " + s);
}

std::string to_string(ScoreMode m) {
    return m == ScoreMode::kWholeVideo ? "whole-video" : "selected-window";
}

void TTAConfig::validate() const {
    if (window < 1) throw ConfigError("tta: window length must be >= 1");
    if (lr < 0.0 || weight_decay < 0.0) throw ConfigError("tta: negative lr or weight decay");
}

std::vector<std::pair<std::size_t, std::size_t>> enumerate_windows(std::size_t frames,
                                                                   std::size_t window) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (frames < window) {
        out.emplace_back(0, frames); // degenerate: single whole-video window
        return out;
    }
    out.reserve(frames - window + 1);
    for (std::size_t s = 0; s + window <= frames; ++s) out.emplace_back(s, window);
    return out;
}

Tensor extract_window(const Tensor& video, std::size_t start, std::size_t length) {
    std::size_t d = video.dim(1);
    std::vector<double> data(video.data() + start * d, video.data() + (start + length) * d);
    return Tensor({length, d}, std::move(data));
}

namespace {

struct WindowScore {
    double entropy = 0.0;
    std::vector<double> probs;
};

WindowScore score_window(const Tensor& window, const Tensor& prompts,
                         const ModelParams& params) {
    Tape tape;
    BoundModel bound = BoundModel::bind(tape, params);
    Tape::Var z = encode_video(tape, tape.leaf(window), bound);
    Tape::Var sims = au_similarity(tape, z, tape.leaf(prompts));
    Tape::Var probs = classify(tape, sims, bound);
    Tape::Var h = tape.entropy(probs);
    return {tape.value(h)[0], tape.value(probs).values()};
}

} // namespace

WindowSelection window_entropy_profile(const Tensor& video, const Tensor& prompts,
                                       const ModelParams& params, std::size_t window) {
    auto windows = enumerate_windows(video.dim(0), window);
    WindowSelection sel;
    sel.count = windows.size();
    sel.entropies.reserve(windows.size());
    for (const auto& [start, len] : windows) {
        sel.entropies.push_back(score_window(extract_window(video, start, len), prompts, params).entropy);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < sel.entropies.size(); ++i) {
        if (sel.entropies[i] < sel.entropies[best]) best = i; // strict: ties keep smallest index
    }
    sel.i_star = best + 1;
    return sel;
}

AdaptationTrace tune_prompts(const Tensor& selected_window, TunablePrompts& prompts,
                             const ModelParams& params, const TTAConfig& cfg) {
    cfg.validate();

    // the window embedding is fixed during tuning; only prompts move
    Tensor z_sel;
    {
        Tape tape;
        BoundModel bound = BoundModel::bind(tape, params);
        z_sel = tape.value(encode_video(tape, tape.leaf(selected_window), bound));
    }

    AdamW opt(AdamWConfig{cfg.lr, cfg.weight_decay, 0.9, 0.999, 1e-8});
    AdaptationTrace trace;

    for (std::size_t it = 0; it <= cfg.iterations; ++it) {
        Tape tape;
        BoundModel bound = BoundModel::bind(tape, params);
        Tape::Var zv = tape.leaf(z_sel);
        Tape::Var zau = tape.leaf(prompts.current);
        Tape::Var sims = au_similarity(tape, zv, zau);
        Tape::Var probs = classify(tape, sims, bound);
        Tape::Var h = tape.entropy(probs);

        trace.entropies.push_back(tape.value(h)[0]);
        if (it == 0) trace.initial_probs = tape.value(probs).values();
        if (it == cfg.iterations) {
            trace.final_probs = tape.value(probs).values();
            break;
        }
        std::vector<Tape::Var> wrt = {zau};
        std::vector<Tensor> grads = tape.backward(h, wrt);
        std::vector<Tensor*> target = {&prompts.current};
        opt.step(target, grads);
    }
    trace.final_prediction = static_cast<std::size_t>(
        std::max_element(trace.final_probs.begin(), trace.final_probs.end()) -
        trace.final_probs.begin());
    return trace;
}

VideoReport personalize_video(const EmbeddingSequence& video, TunablePrompts& prompts,
                              const ModelParams& params, const TTAConfig& cfg) {
    VideoReport report;
    report.subject = video.subject;
    report.label = video.label;

    Tensor at_entry = prompts.current;

    report.selection = window_entropy_profile(video.frames, prompts.current, params, cfg.window);
    auto windows = enumerate_windows(video.frames.dim(0), cfg.window);
    const auto& [start, len] = windows[report.selection.i_star - 1];
    Tensor selected = extract_window(video.frames, start, len);

    report.trace = tune_prompts(selected, prompts, params, cfg);

    if (cfg.score == ScoreMode::kSelectedWindow) {
        report.prediction = report.trace.final_prediction;
        report.pre_adapt_prediction = static_cast<std::size_t>(
            std::max_element(report.trace.initial_probs.begin(),
                             report.trace.initial_probs.end()) -
            report.trace.initial_probs.begin());
    } else {
        report.prediction = forward_with_prompts(video.frames, prompts.current, params).predicted;
        report.pre_adapt_prediction =
            forward_with_prompts(video.frames, at_entry, params).predicted;
    }

    if (cfg.reset == ResetPolicy::kPerVideo) prompts.reset();
    return report;
}

std::vector<VideoReport> personalize_subject(const std::vector<EmbeddingSequence>& videos,
                                             TunablePrompts& prompts, const ModelParams& params,
                                             const TTAConfig& cfg) {
    if (videos.empty()) throw ProtocolError("personalize_subject: subject has no videos");
    std::vector<VideoReport> out;
    out.reserve(videos.size());
    for (const auto& v : videos) {
        out.push_back(personalize_video(v, prompts, params, cfg));
    }
    if (cfg.reset == ResetPolicy::kPerSubject) prompts.reset();
    return out;
}

AdaptRunResult adapt_run(const std::vector<EmbeddingSequence>& videos, const Checkpoint& ckpt,
                         const TTAConfig& cfg, std::size_t jobs) {
    cfg.validate();
    AdaptRunResult result;
    result.reports.resize(videos.size());

    if (cfg.reset == ResetPolicy::kPerVideo) {
        // videos are independent under per-video reset
        parallel_for(videos.size(), jobs, [&](std::size_t i) {
            TunablePrompts prompts = TunablePrompts::from(ckpt.adapted_prompts);
            result.reports[i] = personalize_video(videos[i], prompts, ckpt.params, cfg);
        });
    } else {
        // group by subject, keep manifest order inside each group
        std::vector<std::string> order;
        std::map<std::string, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < videos.size(); ++i) {
            if (!groups.count(videos[i].subject)) order.push_back(videos[i].subject);
            groups[videos[i].subject].push_back(i);
        }
        parallel_for(order.size(), jobs, [&](std::size_t g) {
            const auto& idx = groups.at(order[g]);
            TunablePrompts prompts = TunablePrompts::from(ckpt.adapted_prompts);
            std::vector<EmbeddingSequence> subject_videos;
            subject_videos.reserve(idx.size());
            for (std::size_t i : idx) subject_videos.push_back(videos[i]);
            auto reports = personalize_subject(subject_videos, prompts, ckpt.params, cfg);
            for (std::size_t k = 0; k < idx.size(); ++k) {
                result.reports[idx[k]] = std::move(reports[k]);
            }
        });
    }

    std::vector<PredictionRecord> preds;
    preds.reserve(result.reports.size());
    for (const auto& r : result.reports) {
        preds.push_back(PredictionRecord{r.subject, r.label, r.prediction});
    }
    result.metrics = subject_report(preds, ckpt.params.class_count);
    return result;
}

StructureCheckResult gradient_structure_check(const ModelParams& params, const Tensor& z_v,
                                              const Tensor& prompts, double step_size) {
    if (params.kind != ClassifierKind::kLinearHead) {
        throw ConfigError("gradient_structure_check requires the linear-head classifier");
    }
    StructureCheckResult res;

    Tape tape;
    BoundModel bound = BoundModel::bind(tape, params);
    Tape::Var zv = tape.leaf(z_v);
    Tape::Var zau = tape.leaf(prompts);
    Tape::Var sims = au_similarity(tape, zv, zau);
    Tape::Var probs = classify(tape, sims, bound);
    Tape::Var h = tape.entropy(probs);

    const Tensor& p = tape.value(probs);
    double pmax = *std::max_element(p.values().begin(), p.values().end());
    if (pmax >= 1.0 - 1e-12) return res; // one-hot: inconclusive, not failed

    std::size_t ystar = static_cast<std::size_t>(
        std::max_element(p.values().begin(), p.values().end()) - p.values().begin());

    // unique argmax of head weights toward the predicted class
    const Tensor& m = params.head.m;
    std::size_t iplus = 0;
    for (std::size_t i = 1; i < params.prompt_count; ++i) {
        if (m.at(ystar, i) > m.at(ystar, iplus)) iplus = i;
    }
    for (std::size_t i = 0; i < params.prompt_count; ++i) {
        if (i != iplus && m.at(ystar, i) == m.at(ystar, iplus)) return res; // tie
    }
    res.i_plus = iplus;

    std::vector<Tape::Var> wrt = {sims, zau};
    std::vector<Tensor> grads = tape.backward(h, wrt);
    res.grad_s_iplus = grads[0][iplus];
    if (res.grad_s_iplus >= 0.0) return res;
    res.applicable = true;

    // one plain gradient step on the prompt matrix
    Tensor tuned = prompts;
    for (std::size_t i = 0; i < tuned.size(); ++i) tuned[i] -= step_size * grads[1][i];

    auto cos_to = [&](const Tensor& mat) {
        double dot = 0.0, nz = 0.0, np = 0.0;
        std::size_t d = mat.dim(1);
        for (std::size_t k = 0; k < d; ++k) {
            double a = z_v[k], b = mat.at(iplus, k);
            dot += a * b;
            nz += a * a;
            np += b * b;
        }
        return dot / (std::sqrt(nz) * std::sqrt(np));
    };
    res.cos_before = cos_to(prompts);
    res.cos_after = cos_to(tuned);
    res.passed = res.cos_after > res.cos_before;
    return res;
}

} // namespace aupt
