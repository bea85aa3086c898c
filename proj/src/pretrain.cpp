#include "aupt/pretrain.hpp"

#include <chrono>
#include <functional>
#include <thread>

#include "aupt/adamw.hpp"
#include "aupt/errors.hpp"
#include "aupt/rng.hpp"
#include "aupt/tape.hpp"

namespace aupt {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch < 1) throw ConfigError("train: batch size must be >= 1");
    if (lr < 0.0 || weight_decay < 0.0) throw ConfigError("train: negative lr or weight decay");
    if (kernel_width % 2 == 0) throw ConfigError("train: kernel width must be odd");
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w]() {
            for (std::size_t i = w; i < n; i += jobs) fn(i);
        });
    }
    for (auto& t : workers) t.join();
}

namespace {

double train_war(const std::vector<EmbeddingSequence>& videos, const Tensor& raw_prompts,
                 const ModelParams& params) {
    std::size_t hits = 0;
    for (const auto& v : videos) {
        if (forward_full(v.frames, raw_prompts, params).predicted == v.label) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(videos.size());
}

} // namespace

std::pair<Checkpoint, TrainReport> pretrain(const std::vector<EmbeddingSequence>& videos,
                                            const PromptSet& prompts, const TrainConfig& cfg) {
    cfg.validate();
    prompts.validate();
    if (videos.empty()) throw ProtocolError("pretrain: empty training manifest");

    std::size_t d = prompts.embeddings.dim(1);
    std::size_t n = prompts.embeddings.dim(0);
    std::size_t classes = 0;
    for (const auto& v : videos) {
        if (v.frames.dim(1) != d) {
            throw ShapeError("pretrain: video dim " + std::to_string(v.frames.dim(1)) +
                             " does not match prompt dim " + std::to_string(d));
        }
        classes = std::max(classes, v.label + 1);
    }
    classes = std::max<std::size_t>(classes, 2);

    ModelParams params = ModelParams::init(d, n, classes, cfg.kernel_width, cfg.hidden,
                                           cfg.classifier, cfg.seed);
    AdamW opt(AdamWConfig{cfg.lr, cfg.weight_decay, 0.9, 0.999, 1e-8});
    Rng shuffle_rng(Rng::substream(cfg.seed, "shuffle"));

    TrainReport report;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> order(videos.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        if (cfg.shuffle) order = shuffle_rng.permutation(videos.size());

        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            std::size_t end = std::min(order.size(), start + cfg.batch);

            Tape tape;
            BoundModel bound = BoundModel::bind(tape, params);
            Tape::Var raw = tape.leaf(prompts.embeddings);
            Tape::Var adapted = adapt_prompt_embeddings(tape, raw, bound);
            std::vector<Tape::Var> losses;
            losses.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const auto& video = videos[order[i]];
                Tape::Var z = encode_video(tape, tape.leaf(video.frames), bound);
                Tape::Var sims = au_similarity(tape, z, adapted);
                Tape::Var probs = classify(tape, sims, bound);
                Tensor onehot = Tensor::zeros({classes});
                onehot[video.label] = 1.0;
                losses.push_back(tape.cross_entropy(probs, onehot));
            }
            Tape::Var loss = tape.mean(tape.stack(losses));

            auto vars = bound.trainable_vars();
            std::vector<Tensor> grads = tape.backward(loss, vars);
            auto tensors = params.trainable();
            opt.step(tensors, grads);

            loss_sum += tape.value(loss)[0];
            ++steps;
        }

        EpochStats stats;
        stats.mean_loss = loss_sum / static_cast<double>(steps);
        stats.train_war = train_war(videos, prompts.embeddings, params);
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.epochs.push_back(stats);
    }

    Checkpoint ckpt;
    ckpt.params = std::move(params);
    ckpt.raw_prompts = prompts.embeddings;
    {
        Tape tape;
        BoundModel bound = BoundModel::bind(tape, ckpt.params);
        Tape::Var adapted = adapt_prompt_embeddings(tape, tape.leaf(ckpt.raw_prompts), bound);
        ckpt.adapted_prompts = tape.value(adapted);
    }
    return {std::move(ckpt), std::move(report)};
}

EvalResult evaluate(const std::vector<EmbeddingSequence>& videos, const Checkpoint& ckpt,
                    std::size_t jobs) {
    if (videos.empty()) throw ProtocolError("evaluate: no videos");
    EvalResult res;
    res.predictions.resize(videos.size());
    res.probabilities.resize(videos.size());
    parallel_for(videos.size(), jobs, [&](std::size_t i) {
        ForwardResult f = forward_full(videos[i].frames, ckpt.raw_prompts, ckpt.params);
        res.predictions[i] = PredictionRecord{videos[i].subject, videos[i].label, f.predicted};
        res.probabilities[i] = std::move(f.probabilities);
    });
    res.metrics = subject_report(res.predictions, ckpt.params.class_count);
    return res;
}

} // namespace aupt
