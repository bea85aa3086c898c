#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "aupt/dataset.hpp"
#include "aupt/tensor.hpp"

namespace aupt {

/// Recipe for a synthetic corpus whose class structure lives in
/// prompt-similarity space. Each video is a narrow interior activation peak
/// of the subject's class pattern plus broad, low-amplitude onset/offset
/// segments carrying an ambiguous mixture, plus frame noise. Target subjects
/// deviate from the class templates (weaker peaks, stronger and more
/// misleading edge segments) by `target_shift`.
struct SynthSpec {
    std::uint64_t seed = 7;
    std::size_t dim = 64;           // d
    std::size_t prompts = 46;       // N
    std::size_t classes = 2;        // C
    std::size_t source_subjects = 8;
    std::size_t target_subjects = 2;
    std::size_t videos_per_subject = 20;
    std::size_t t_min = 24;
    std::size_t t_max = 48;

    // per-class activation templates (sparse weights over the N prompts);
    // derived from the seed unless given explicitly
    std::size_t active_per_class = 6;
    std::size_t shared_active = 3;
    double template_lo = 0.9;
    double template_hi = 1.3;
    std::vector<std::vector<double>> class_templates; // optional, C rows of N

    double subject_perturb = 0.15;  // jitter of active template weights per subject
    double intensity_lo = 0.5;      // per-video peak amplitude range
    double intensity_hi = 1.0;
    double confound_strength = 0.35; // edge-segment amplitude scale
    double confound_tilt = 0.6;      // edge-segment lean toward the other class
    double target_shift = 1.0;       // target-subject deviation scale
    double noise = 0.5;              // per-frame gaussian noise
    double prompt_noise = 0.05;      // prompt offset from the latent directions

    void validate() const;
};

/// Everything needed to reason about a corpus without the model: the latent
/// directions and all effective weights.
struct GroundTruth {
    Tensor directions;                            // N x d, orthonormal rows
    std::vector<std::vector<double>> class_templates; // C x N
    std::vector<std::string> subjects;
    std::vector<std::vector<std::vector<double>>> subject_weights; // per subject: C x N
};

struct SynthOutput {
    Manifest manifest;
    PromptSet au_prompts;
    PromptSet class_prompts; // ensemble variant for the prompt-set swap
    GroundTruth truth;
};

/// Generate a corpus under `out_dir`: embeddings/, manifest.jsonl,
/// prompts_au.aue1(.json), prompts_cp.aue1(.json), directions.aue1,
/// ground_truth.json. Fully determined by the spec.
SynthOutput synth_generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

void write_ground_truth(const GroundTruth& t, const std::filesystem::path& dir);
GroundTruth read_ground_truth(const std::filesystem::path& dir);

} // namespace aupt
