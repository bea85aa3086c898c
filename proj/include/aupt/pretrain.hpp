#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aupt/checkpoint.hpp"
#include "aupt/dataset.hpp"
#include "aupt/metrics.hpp"
#include "aupt/model.hpp"

namespace aupt {

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch = 8;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    std::uint64_t seed = 7;
    bool shuffle = true;
    ClassifierKind classifier = ClassifierKind::kMlp;
    std::size_t kernel_width = 3; // 1 reduces the temporal encoder to per-frame linear
    std::size_t hidden = 64;

    void validate() const;
};

struct EpochStats {
    double mean_loss = 0.0;
    double train_war = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
};

/// Supervised source-domain training of adapter, temporal encoder and
/// classifier with frozen raw prompts. Deterministic given (corpus bytes,
/// config); the raw prompt matrix is never touched.
std::pair<Checkpoint, TrainReport> pretrain(const std::vector<EmbeddingSequence>& videos,
                                            const PromptSet& prompts, const TrainConfig& cfg);

struct EvalResult {
    std::vector<PredictionRecord> predictions;
    std::vector<std::vector<double>> probabilities;
    MetricsBundle metrics;
};

/// Plain pipeline evaluation (adapter applied to raw prompts, whole video).
EvalResult evaluate(const std::vector<EmbeddingSequence>& videos, const Checkpoint& ckpt,
                    std::size_t jobs = 1);

/// Run fn(i) for i in [0, n) over `jobs` threads; results must be written to
/// independent slots so the outcome is order-free.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

} // namespace aupt
