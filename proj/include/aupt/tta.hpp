#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aupt/checkpoint.hpp"
#include "aupt/dataset.hpp"
#include "aupt/metrics.hpp"
#include "aupt/model.hpp"

namespace aupt {

enum class ResetPolicy : std::uint8_t { kPerVideo, kPerSubject };
enum class ScoreMode : std::uint8_t { kWholeVideo, kSelectedWindow };

ResetPolicy reset_policy_from_string(const std::string& s);
std::string to_string(ResetPolicy p);
ScoreMode score_mode_from_string(const std::string& s);
std::string to_string(ScoreMode m);

struct TTAConfig {
    std::size_t window = 16;     // sliding-window length L
    std::size_t iterations = 10; // prompt-tuning steps per video
    // The adaptation rate is deliberately larger than the training rate:
    // ten steps on a single window must move the prompt matrix far enough
    // to re-weight the whole-video scores.
    double lr = 1e-2;
    double weight_decay = 1e-4;
    ResetPolicy reset = ResetPolicy::kPerVideo;
    ScoreMode score = ScoreMode::kWholeVideo;

    void validate() const;
};

/// Per-window entropy profile; i_star is 1-based (windows are numbered
/// 1..count, matching the sliding-window convention in reports).
struct WindowSelection {
    std::vector<double> entropies;
    std::size_t i_star = 1;
    std::size_t count = 0;
};

/// The only state mutated during adaptation. `pristine` is the adapter
/// output from the checkpoint and is never written after construction.
struct TunablePrompts {
    Tensor current;
    Tensor pristine;

    static TunablePrompts from(const Tensor& adapted) { return {adapted, adapted}; }
    void reset() { current = pristine; }
};

struct AdaptationTrace {
    std::vector<double> entropies; // length iterations + 1, entry 0 pre-adaptation
    std::vector<double> initial_probs;
    std::vector<double> final_probs;
    std::size_t final_prediction = 0; // argmax of final window probabilities
};

struct VideoReport {
    std::string subject;
    std::size_t label = 0;
    std::size_t prediction = 0;
    std::size_t pre_adapt_prediction = 0;
    WindowSelection selection;
    AdaptationTrace trace;
};

/// M = T-L+1 overlapping (start, length) windows, or the single whole-video
/// window when T < L.
std::vector<std::pair<std::size_t, std::size_t>> enumerate_windows(std::size_t frames,
                                                                   std::size_t window);

Tensor extract_window(const Tensor& video, std::size_t start, std::size_t length);

/// h_i = entropy(classify(similarity(encode(W_i)))) for every window; the
/// selected index minimizes entropy, ties resolved to the smallest index.
WindowSelection window_entropy_profile(const Tensor& video, const Tensor& prompts,
                                       const ModelParams& params, std::size_t window);

/// Entropy-minimization steps on the prompt matrix against the fixed
/// embedding of the selected window. Everything else stays frozen.
AdaptationTrace tune_prompts(const Tensor& selected_window, TunablePrompts& prompts,
                             const ModelParams& params, const TTAConfig& cfg);

/// Window selection, prompt tuning, final scoring and (per-video policy)
/// prompt reset for one video.
VideoReport personalize_video(const EmbeddingSequence& video, TunablePrompts& prompts,
                              const ModelParams& params, const TTAConfig& cfg);

/// Videos of one subject in manifest order. The per-subject policy carries
/// tuned prompts across the subject's videos and resets afterwards.
std::vector<VideoReport> personalize_subject(const std::vector<EmbeddingSequence>& videos,
                                             TunablePrompts& prompts, const ModelParams& params,
                                             const TTAConfig& cfg);

struct AdaptRunResult {
    std::vector<VideoReport> reports; // manifest order
    MetricsBundle metrics;
};

/// Full adaptation run over a target manifest. Under the per-video policy
/// videos are independent and may be fanned out over `jobs` workers.
AdaptRunResult adapt_run(const std::vector<EmbeddingSequence>& videos, const Checkpoint& ckpt,
                         const TTAConfig& cfg, std::size_t jobs = 1);

struct StructureCheckResult {
    bool applicable = false; // p not one-hot, unique max head weight, negative s-gradient
    bool passed = false;
    std::size_t i_plus = 0;
    double grad_s_iplus = 0.0;
    double cos_before = 0.0;
    double cos_after = 0.0;
};

/// Entropy-gradient structure probe for the linear classifier head: one
/// plain gradient step must strictly increase the cosine similarity of the
/// prompt with the largest weight toward the predicted class whenever that
/// prompt's similarity gradient is negative.
StructureCheckResult gradient_structure_check(const ModelParams& params, const Tensor& z_v,
                                              const Tensor& prompts, double step_size = 1e-3);

} // namespace aupt
