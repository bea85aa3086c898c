#include "aupt/model.hpp"

#include <algorithm>
#include <cmath>

#include "aupt/errors.hpp"
#include "aupt/rng.hpp"

namespace aupt {
namespace {

Tensor fan_in_uniform(Rng& rng, std::vector<std::size_t> shape, std::size_t fan_in) {
    Tensor t = Tensor::zeros(std::move(shape));
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.values()) v = rng.uniform(-bound, bound);
    return t;
}

} // namespace

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::kRelu;
    if (s == "identity") return Activation::kIdentity;
    throw ConfigError("unknown activation: " + s);
}

std::string to_string(Activation a) {
    return a == Activation::kRelu ? "relu" : "identity";
}

ClassifierKind classifier_from_string(const std::string& s) {
    if (s == "mlp") return ClassifierKind::kMlp;
    if (s == "linear-head") return ClassifierKind::kLinearHead;
    throw ConfigError("unknown classifier kind: " + s);
}

std::string to_string(ClassifierKind k) {
    return k == ClassifierKind::kMlp ? "mlp" : "linear-head";
}

ModelParams ModelParams::init(std::size_t d, std::size_t n, std::size_t c,
                              std::size_t kernel_width, std::size_t hidden,
                              ClassifierKind kind, std::uint64_t seed) {
    Rng rng(Rng::substream(seed, "init"));
    ModelParams p;
    p.dim = d;
    p.prompt_count = n;
    p.class_count = c;
    p.kernel_width = kernel_width;
    p.hidden = hidden;
    p.kind = kind;
    p.adapter.w1 = fan_in_uniform(rng, {d, d}, d);
    p.adapter.b1 = fan_in_uniform(rng, {d}, d);
    p.adapter.w2 = fan_in_uniform(rng, {d, d}, d);
    p.adapter.b2 = fan_in_uniform(rng, {d}, d);
    p.temporal.kernel = fan_in_uniform(rng, {kernel_width, d, 2 * d}, kernel_width * d);
    p.temporal.bias = fan_in_uniform(rng, {2 * d}, kernel_width * d);
    if (kind == ClassifierKind::kMlp) {
        p.mlp.w1 = fan_in_uniform(rng, {n, hidden}, n);
        p.mlp.b1 = fan_in_uniform(rng, {hidden}, n);
        p.mlp.w2 = fan_in_uniform(rng, {hidden, c}, hidden);
        p.mlp.b2 = fan_in_uniform(rng, {c}, hidden);
    } else {
        p.head.m = fan_in_uniform(rng, {c, n}, n);
        p.head.b = fan_in_uniform(rng, {c}, n);
    }
    p.validate();
    return p;
}

void ModelParams::validate() const {
    if (dim == 0 || prompt_count == 0) throw ShapeError("model: d and N must be positive");
    if (class_count < 2) throw ShapeError("model: class count must be >= 2");
    if (kernel_width % 2 == 0) throw ConfigError("model: kernel width must be odd");
    auto expect = [](const Tensor& t, std::vector<std::size_t> shape, const char* what) {
        if (t.shape() != shape) {
            throw ShapeError(std::string("model: bad shape for ") + what + ": " + t.shape_str());
        }
    };
    std::size_t dh = adapter.w1.rank() == 2 ? adapter.w1.dim(1) : 0;
    expect(adapter.w1, {dim, dh}, "adapter.w1");
    expect(adapter.b1, {dh}, "adapter.b1");
    expect(adapter.w2, {dh, dim}, "adapter.w2");
    expect(adapter.b2, {dim}, "adapter.b2");
    expect(temporal.kernel, {kernel_width, dim, 2 * dim}, "temporal.kernel");
    expect(temporal.bias, {2 * dim}, "temporal.bias");
    if (kind == ClassifierKind::kMlp) {
        std::size_t h = mlp.w1.rank() == 2 ? mlp.w1.dim(1) : 0;
        expect(mlp.w1, {prompt_count, h}, "classifier.w1");
        expect(mlp.b1, {h}, "classifier.b1");
        expect(mlp.w2, {h, class_count}, "classifier.w2");
        expect(mlp.b2, {class_count}, "classifier.b2");
    } else {
        expect(head.m, {class_count, prompt_count}, "head.m");
        expect(head.b, {class_count}, "head.b");
    }
}

std::vector<Tensor*> ModelParams::trainable() {
    std::vector<Tensor*> out = {&adapter.w1, &adapter.b1, &adapter.w2, &adapter.b2,
                                &temporal.kernel, &temporal.bias};
    if (kind == ClassifierKind::kMlp) {
        out.insert(out.end(), {&mlp.w1, &mlp.b1, &mlp.w2, &mlp.b2});
    } else {
        out.insert(out.end(), {&head.m, &head.b});
    }
    return out;
}

std::vector<const Tensor*> ModelParams::trainable() const {
    auto mut = const_cast<ModelParams*>(this)->trainable();
    return {mut.begin(), mut.end()};
}

std::vector<std::string> ModelParams::trainable_names() const {
    std::vector<std::string> out = {"adapter.w1", "adapter.b1", "adapter.w2", "adapter.b2",
                                    "temporal.kernel", "temporal.bias"};
    if (kind == ClassifierKind::kMlp) {
        out.insert(out.end(), {"classifier.w1", "classifier.b1", "classifier.w2", "classifier.b2"});
    } else {
        out.insert(out.end(), {"head.m", "head.b"});
    }
    return out;
}

BoundModel BoundModel::bind(Tape& tape, const ModelParams& p) {
    BoundModel b;
    b.params = &p;
    b.aw1 = tape.leaf(p.adapter.w1);
    b.ab1 = tape.leaf(p.adapter.b1);
    b.aw2 = tape.leaf(p.adapter.w2);
    b.ab2 = tape.leaf(p.adapter.b2);
    b.kernel = tape.leaf(p.temporal.kernel);
    b.kbias = tape.leaf(p.temporal.bias);
    if (p.kind == ClassifierKind::kMlp) {
        b.cw1 = tape.leaf(p.mlp.w1);
        b.cb1 = tape.leaf(p.mlp.b1);
        b.cw2 = tape.leaf(p.mlp.w2);
        b.cb2 = tape.leaf(p.mlp.b2);
    } else {
        b.hm = tape.leaf(p.head.m);
        b.hb = tape.leaf(p.head.b);
    }
    return b;
}

std::vector<Tape::Var> BoundModel::trainable_vars() const {
    std::vector<Tape::Var> out = {aw1, ab1, aw2, ab2, kernel, kbias};
    if (params->kind == ClassifierKind::kMlp) {
        out.insert(out.end(), {cw1, cb1, cw2, cb2});
    } else {
        out.insert(out.end(), {hm, hb});
    }
    return out;
}

Tape::Var encode_video(Tape& tape, Tape::Var v, const BoundModel& m) {
    const Tensor& video = tape.value(v);
    if (video.rank() != 2 || video.dim(1) != m.params->dim) {
        throw ShapeError("encode_video: expected [T x " + std::to_string(m.params->dim) +
                         "], got " + video.shape_str());
    }
    Tape::Var conv = tape.conv1d_temporal(v, m.kernel, m.kbias);
    return tape.mean_pool(tape.glu(conv));
}

Tape::Var adapt_prompt_embeddings(Tape& tape, Tape::Var raw, const BoundModel& m) {
    const Tensor& e = tape.value(raw);
    if (e.rank() != 2 || e.dim(1) != m.params->dim) {
        throw ShapeError("adapt_prompt_embeddings: expected [N x " +
                         std::to_string(m.params->dim) + "], got " + e.shape_str());
    }
    Tape::Var h = tape.add_rows(tape.matmul(raw, m.aw1), m.ab1);
    if (m.params->adapter.act == Activation::kRelu) h = tape.relu(h);
    return tape.add_rows(tape.matmul(h, m.aw2), m.ab2);
}

Tape::Var au_similarity(Tape& tape, Tape::Var z, Tape::Var prompts) {
    const Tensor& p = tape.value(prompts);
    if (p.rank() != 2) throw ShapeError("au_similarity: prompts must be a matrix");
    std::size_t n = p.dim(0), d = p.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += p.at(i, j) * p.at(i, j);
        if (s == 0.0) {
            throw DomainError("au_similarity: zero-norm prompt at index " + std::to_string(i));
        }
    }
    std::vector<Tape::Var> sims;
    sims.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        sims.push_back(tape.cosine_sim(z, tape.row(prompts, i)));
    }
    return tape.stack(sims);
}

Tape::Var classify_logits(Tape& tape, Tape::Var s, const BoundModel& m) {
    const Tensor& sv = tape.value(s);
    if (sv.rank() != 1 || sv.dim(0) != m.params->prompt_count) {
        throw ShapeError("classify: similarity width " + sv.shape_str() + " does not match N=" +
                         std::to_string(m.params->prompt_count));
    }
    if (m.params->kind == ClassifierKind::kMlp) {
        Tape::Var h = tape.add(tape.vecmat(s, m.cw1), m.cb1);
        if (m.params->mlp.act == Activation::kRelu) h = tape.relu(h);
        return tape.add(tape.vecmat(h, m.cw2), m.cb2);
    }
    return tape.add(tape.matvec(m.hm, s), m.hb);
}

Tape::Var classify(Tape& tape, Tape::Var s, const BoundModel& m) {
    return tape.softmax(classify_logits(tape, s, m));
}

namespace {

ForwardResult finish_forward(Tape& tape, Tape::Var sims, Tape::Var probs) {
    ForwardResult r;
    r.similarity = tape.value(sims).values();
    r.probabilities = tape.value(probs).values();
    r.predicted = static_cast<std::size_t>(
        std::max_element(r.probabilities.begin(), r.probabilities.end()) -
        r.probabilities.begin());
    return r;
}

} // namespace

ForwardResult forward_full(const Tensor& video, const Tensor& raw_prompts,
                           const ModelParams& params) {
    Tape tape;
    BoundModel m = BoundModel::bind(tape, params);
    Tape::Var v = tape.leaf(video);
    Tape::Var z = encode_video(tape, v, m);
    Tape::Var adapted = adapt_prompt_embeddings(tape, tape.leaf(raw_prompts), m);
    Tape::Var sims = au_similarity(tape, z, adapted);
    Tape::Var probs = classify(tape, sims, m);
    return finish_forward(tape, sims, probs);
}

ForwardResult forward_with_prompts(const Tensor& video, const Tensor& adapted_prompts,
                                   const ModelParams& params) {
    Tape tape;
    BoundModel m = BoundModel::bind(tape, params);
    Tape::Var v = tape.leaf(video);
    Tape::Var z = encode_video(tape, v, m);
    Tape::Var sims = au_similarity(tape, z, tape.leaf(adapted_prompts));
    Tape::Var probs = classify(tape, sims, m);
    return finish_forward(tape, sims, probs);
}

} // namespace aupt
