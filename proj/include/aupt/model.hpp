#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aupt/tape.hpp"
#include "aupt/tensor.hpp"

namespace aupt {

enum class Activation : std::uint8_t { kRelu = 0, kIdentity = 1 };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

/// Two-layer refinement map applied row-wise to prompt embeddings.
/// Output width equals input width d: the adapter refines, it does not
/// project away.
struct AdapterParams {
    Tensor w1; // d x dh
    Tensor b1; // dh
    Tensor w2; // dh x d
    Tensor b2; // d
    Activation act = Activation::kRelu;
};

/// Temporal encoder: 1-D convolution whose output channel count is twice
/// the embedding width, so the GLU gates back down to d.
struct TemporalParams {
    Tensor kernel; // k x d x 2d
    Tensor bias;   // 2d
};

struct MlpClassifier {
    Tensor w1; // N x h
    Tensor b1; // h
    Tensor w2; // h x C
    Tensor b2; // C
    Activation act = Activation::kRelu;
};

/// Linear classifier head; row c holds the per-prompt contribution weights
/// toward class c. First-class option so the entropy-gradient structure is
/// directly inspectable.
struct LinearHead {
    Tensor m; // C x N
    Tensor b; // C
};

enum class ClassifierKind : std::uint8_t { kMlp = 0, kLinearHead = 1 };

ClassifierKind classifier_from_string(const std::string& s);
std::string to_string(ClassifierKind k);

/// All trainable state of the system. Dimensional consistency is checked at
/// construction; forward passes assume it.
struct ModelParams {
    std::size_t dim = 0;          // d
    std::size_t prompt_count = 0; // N
    std::size_t class_count = 0;  // C
    std::size_t kernel_width = 3; // k
    std::size_t hidden = 64;      // classifier hidden width (MLP)

    AdapterParams adapter;
    TemporalParams temporal;
    ClassifierKind kind = ClassifierKind::kMlp;
    MlpClassifier mlp;
    LinearHead head;

    /// Seeded fan-in-uniform initialization (+-1/sqrt(fan_in), zero biases).
    static ModelParams init(std::size_t d, std::size_t n, std::size_t c,
                            std::size_t kernel_width, std::size_t hidden,
                            ClassifierKind kind, std::uint64_t seed);

    void validate() const;

    /// Stable ordering of trainable tensors; the optimizer, checkpoint and
    /// byte-comparison tests all rely on it.
    std::vector<Tensor*> trainable();
    std::vector<const Tensor*> trainable() const;
    std::vector<std::string> trainable_names() const;
};

/// Model parameters bound to a tape as leaves, so gradients map back to
/// ModelParams::trainable() order.
struct BoundModel {
    const ModelParams* params = nullptr;
    Tape::Var aw1, ab1, aw2, ab2;
    Tape::Var kernel, kbias;
    Tape::Var cw1, cb1, cw2, cb2; // MLP
    Tape::Var hm, hb;             // LinearHead

    static BoundModel bind(Tape& tape, const ModelParams& p);
    std::vector<Tape::Var> trainable_vars() const;
};

/// z_v = mean_pool(glu(conv1d(V))); V is T x d.
Tape::Var encode_video(Tape& tape, Tape::Var v, const BoundModel& m);

/// Row-wise two-layer adapter over an N x d prompt matrix.
Tape::Var adapt_prompt_embeddings(Tape& tape, Tape::Var raw, const BoundModel& m);

/// Component i = cosine(z, prompts[i]); throws DomainError naming the
/// offending prompt on a zero-norm row.
Tape::Var au_similarity(Tape& tape, Tape::Var z, Tape::Var prompts);

/// Classifier logits (MLP or linear head) from a similarity vector.
Tape::Var classify_logits(Tape& tape, Tape::Var s, const BoundModel& m);

/// softmax(classify_logits(s)).
Tape::Var classify(Tape& tape, Tape::Var s, const BoundModel& m);

struct ForwardResult {
    std::vector<double> similarity;   // length N
    std::vector<double> probabilities; // length C
    std::size_t predicted = 0;
};

/// Full pipeline on one video with the adapter applied to raw prompts.
ForwardResult forward_full(const Tensor& video, const Tensor& raw_prompts,
                           const ModelParams& params);

/// Pipeline tail used at test time: prompts are already adapted (or tuned).
ForwardResult forward_with_prompts(const Tensor& video, const Tensor& adapted_prompts,
                                   const ModelParams& params);

} // namespace aupt
