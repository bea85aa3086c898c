#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"

#include "aupt/errors.hpp"
#include "aupt/gradcheck.hpp"
#include "aupt/rng.hpp"
#include "aupt/tape.hpp"
#include "aupt/tta.hpp"
#include "test_support.hpp"

using namespace aupt;
using namespace aupt::testing;

namespace {

Tensor randn(Rng& rng, std::vector<std::size_t> shape, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.values()) v = scale * rng.normal();
    return t;
}

} // namespace

TEST_CASE("enumerate_windows") {
    SUBCASE("T=5 L=3 gives starts 0,1,2") {
        auto w = enumerate_windows(5, 3);
        REQUIRE(w.size() == 3);
        CHECK(w[0] == std::pair<std::size_t, std::size_t>{0, 3});
        CHECK(w[2] == std::pair<std::size_t, std::size_t>{2, 3});
    }
    SUBCASE("T=L gives exactly one full window") {
        auto w = enumerate_windows(16, 16);
        REQUIRE(w.size() == 1);
        CHECK(w[0] == std::pair<std::size_t, std::size_t>{0, 16});
    }
    SUBCASE("T<L falls back to the whole video") {
        auto w = enumerate_windows(4, 16);
        REQUIRE(w.size() == 1);
        CHECK(w[0] == std::pair<std::size_t, std::size_t>{0, 4});
    }
}

TEST_CASE("window_entropy_profile") {
    SUBCASE("uniform classifier gives a flat profile and i*=1") {
        ModelParams p = ModelParams::init(8, 4, 2, 3, 6, ClassifierKind::kMlp, 3);
        p.mlp.w1 = Tensor::zeros(p.mlp.w1.shape());
        p.mlp.b1 = Tensor::zeros(p.mlp.b1.shape());
        p.mlp.w2 = Tensor::zeros(p.mlp.w2.shape());
        p.mlp.b2 = Tensor::zeros(p.mlp.b2.shape());
        Rng rng(4);
        Tensor video = randn(rng, {10, 8});
        Tensor prompts = randn(rng, {4, 8});
        WindowSelection sel = window_entropy_profile(video, prompts, p, 4);
        CHECK(sel.count == 7);
        CHECK(sel.i_star == 1); // tie-break to the smallest index
        for (double h : sel.entropies) CHECK(h == doctest::Approx(std::numbers::ln2).epsilon(1e-12));
    }
    SUBCASE("hand-built probabilities select the sharpest window") {
        // engineered profile [0.9,0.1], [0.5,0.5], [0.7,0.3]
        Tape tape;
        std::vector<double> hs;
        for (auto p : {std::vector<double>{0.9, 0.1}, {0.5, 0.5}, {0.7, 0.3}}) {
            hs.push_back(tape.value(tape.entropy(tape.leaf(Tensor::vector(p))))[0]);
        }
        CHECK(hs[0] == doctest::Approx(0.3251).epsilon(1e-3));
        CHECK(hs[1] == doctest::Approx(0.6931).epsilon(1e-3));
        CHECK(hs[2] == doctest::Approx(0.6109).epsilon(1e-3));
        std::size_t istar = static_cast<std::size_t>(
            std::min_element(hs.begin(), hs.end()) - hs.begin()) + 1;
        CHECK(istar == 1);
    }
    SUBCASE("i* matches exhaustive recomputation on random videos") {
        const TrainedFixture& t = default_trained();
        Rng rng(6);
        for (int it = 0; it < 10; ++it) {
            std::size_t frames = 8 + rng.below(40);
            Tensor video = randn(rng, {frames, 64});
            WindowSelection sel =
                window_entropy_profile(video, t.ckpt.adapted_prompts, t.ckpt.params, 16);
            auto windows = enumerate_windows(frames, 16);
            REQUIRE(sel.count == windows.size());
            std::size_t best = 0;
            for (std::size_t i = 0; i < windows.size(); ++i) {
                Tape tape;
                BoundModel m = BoundModel::bind(tape, t.ckpt.params);
                Tape::Var z = encode_video(
                    tape, tape.leaf(extract_window(video, windows[i].first, windows[i].second)), m);
                Tape::Var probs =
                    classify(tape, au_similarity(tape, z, tape.leaf(t.ckpt.adapted_prompts)), m);
                double h = tape.value(tape.entropy(probs))[0];
                CHECK(h == doctest::Approx(sel.entropies[i]).epsilon(1e-15));
                if (h < sel.entropies[best]) best = i;
            }
            CHECK(sel.i_star == best + 1);
        }
    }
    SUBCASE("the entropy-selected window sits inside the sequence on real videos") {
        const TrainedFixture& t = default_trained();
        std::size_t interior = 0, total = 0;
        for (const auto& v : t.corpus.target) {
            WindowSelection sel =
                window_entropy_profile(v.frames, t.ckpt.adapted_prompts, t.ckpt.params, 16);
            if (sel.i_star > 1) ++interior;
            ++total;
        }
        for (const auto& v : t.corpus.source) {
            if (total >= 100) break;
            WindowSelection sel =
                window_entropy_profile(v.frames, t.ckpt.adapted_prompts, t.ckpt.params, 16);
            if (sel.i_star > 1) ++interior;
            ++total;
        }
        CHECK(total >= 100);
        CHECK(interior * 2 >= total); // at least half away from the first window
    }
}

TEST_CASE("tune_prompts") {
    const TrainedFixture& t = default_trained();
    const EmbeddingSequence& video = t.corpus.target[0];
    Tensor window = extract_window(video.frames, 4, 16);

    SUBCASE("zero iterations is a no-op with a single trace entry") {
        TunablePrompts prompts = TunablePrompts::from(t.ckpt.adapted_prompts);
        TTAConfig cfg;
        cfg.iterations = 0;
        AdaptationTrace trace = tune_prompts(window, prompts, t.ckpt.params, cfg);
        CHECK(prompts.current.values() == prompts.pristine.values());
        CHECK(trace.entropies.size() == 1);
        CHECK(trace.initial_probs == trace.final_probs);
    }
    SUBCASE("lr 0 leaves prompts unchanged and the trace flat") {
        TunablePrompts prompts = TunablePrompts::from(t.ckpt.adapted_prompts);
        TTAConfig cfg;
        cfg.lr = 0.0;
        AdaptationTrace trace = tune_prompts(window, prompts, t.ckpt.params, cfg);
        CHECK(prompts.current.values() == prompts.pristine.values());
        CHECK(trace.entropies.size() == cfg.iterations + 1);
        for (double h : trace.entropies) CHECK(h == trace.entropies[0]);
    }
    SUBCASE("default config descends the window entropy") {
        TunablePrompts prompts = TunablePrompts::from(t.ckpt.adapted_prompts);
        TTAConfig cfg;
        AdaptationTrace trace = tune_prompts(window, prompts, t.ckpt.params, cfg);
        CHECK(trace.entropies.size() == cfg.iterations + 1);
        CHECK(trace.entropies.back() <= trace.entropies.front() + 1e-12);
        CHECK(prompts.current.values() != prompts.pristine.values());
    }
}

TEST_CASE("gradient_structure_check") {
    SUBCASE("engineered two-class instance pulls the top prompt toward the video") {
        // head M = [[1,0,0],[0,1,0]]; similarities give p ~ [0.73, 0.27]
        ModelParams p = ModelParams::init(4, 3, 2, 3, 4, ClassifierKind::kLinearHead, 8);
        p.head.m = Tensor({2, 3}, {1, 0, 0, 0, 1, 0});
        p.head.b = Tensor::zeros({2});
        Tensor z_v = Tensor::vector({1, 0, 0, 0});
        auto row_at_cos = [&](double c) {
            return std::vector<double>{c, std::sqrt(1.0 - c * c), 0, 0};
        };
        Tensor prompts = Tensor::zeros({3, 4});
        auto r0 = row_at_cos(0.8);
        auto r1 = row_at_cos(-0.1946);
        auto r2 = row_at_cos(0.1);
        for (std::size_t j = 0; j < 4; ++j) {
            prompts.at(0, j) = r0[j];
            prompts.at(1, j) = r1[j];
            prompts.at(2, j) = r2[j];
        }
        StructureCheckResult res = gradient_structure_check(p, z_v, prompts);
        CHECK(res.applicable);
        CHECK(res.i_plus == 0);
        CHECK(res.grad_s_iplus < 0.0);
        CHECK(res.passed);
        CHECK(res.cos_after > res.cos_before);
    }
    SUBCASE("uniform probabilities give a zero gradient and no prompt motion") {
        ModelParams p = ModelParams::init(4, 2, 2, 3, 4, ClassifierKind::kLinearHead, 9);
        p.head.m = Tensor({2, 2}, {1, 0, 0, 1});
        p.head.b = Tensor::zeros({2});
        Tensor z_v = Tensor::vector({1, 0, 0, 0});
        // both prompts at the same angle: s = (c, c) so logits tie and p is uniform
        Tensor prompts = Tensor::zeros({2, 4});
        prompts.at(0, 0) = 0.6;
        prompts.at(0, 1) = 0.8;
        prompts.at(1, 0) = 0.6;
        prompts.at(1, 2) = 0.8;

        Tape tape;
        BoundModel bound = BoundModel::bind(tape, p);
        Tape::Var zau = tape.leaf(prompts);
        Tape::Var sims = au_similarity(tape, tape.leaf(z_v), zau);
        Tape::Var h = tape.entropy(classify(tape, sims, bound));
        auto grads = tape.backward(h, std::vector<Tape::Var>{zau});
        for (double g : grads[0].values()) CHECK(g == doctest::Approx(0.0).epsilon(1e-15));
    }
    SUBCASE("analytic similarity gradient matches finite differences on 50 instances") {
        Rng rng(10);
        std::size_t applicable = 0;
        for (int it = 0; it < 50; ++it) {
            std::size_t n = 3 + rng.below(4);
            std::size_t c = 2 + rng.below(2);
            ModelParams p = ModelParams::init(6, n, c, 3, 4, ClassifierKind::kLinearHead,
                                              100 + static_cast<std::uint64_t>(it));
            for (auto& v : p.head.m.values()) v = rng.normal();
            Tensor z_v = randn(rng, {6});
            Tensor prompts = randn(rng, {n, 6});

            Tape tape;
            BoundModel bound = BoundModel::bind(tape, p);
            Tape::Var sims = au_similarity(tape, tape.leaf(z_v), tape.leaf(prompts));
            Tape::Var h = tape.entropy(classify(tape, sims, bound));
            auto analytic = tape.backward(h, std::vector<Tape::Var>{sims});

            Tensor s_val = tape.value(sims);
            auto f = [&](std::span<const Tensor> s) {
                Tape t2;
                BoundModel b2 = BoundModel::bind(t2, p);
                return t2.value(t2.entropy(classify(t2, t2.leaf(s[0]), b2)))[0];
            };
            std::vector<Tensor> sv = {s_val};
            auto fd = finite_difference(f, sv, 1e-6);
            CHECK(max_rel_err(analytic, fd) < 1e-4);

            StructureCheckResult res = gradient_structure_check(p, z_v, prompts);
            if (res.applicable) {
                ++applicable;
                CHECK(res.passed);
            }
        }
        CHECK(applicable > 10); // the generator must produce mostly applicable cases
    }
}

TEST_CASE("personalize_video") {
    const TrainedFixture& t = default_trained();

    SUBCASE("per-video reset isolates videos from each other") {
        TTAConfig cfg;
        TunablePrompts prompts = TunablePrompts::from(t.ckpt.adapted_prompts);
        VideoReport alone = personalize_video(t.corpus.target[1], prompts, t.ckpt.params, cfg);

        TunablePrompts prompts2 = TunablePrompts::from(t.ckpt.adapted_prompts);
        (void)personalize_video(t.corpus.target[0], prompts2, t.ckpt.params, cfg);
        VideoReport after = personalize_video(t.corpus.target[1], prompts2, t.ckpt.params, cfg);

        CHECK(alone.prediction == after.prediction);
        CHECK(alone.selection.i_star == after.selection.i_star);
        CHECK(alone.trace.entropies == after.trace.entropies);
        CHECK(alone.trace.final_probs == after.trace.final_probs);
    }
    SUBCASE("frozen components are byte-identical across adaptation") {
        TTAConfig cfg;
        Checkpoint before = t.ckpt;
        TunablePrompts prompts = TunablePrompts::from(t.ckpt.adapted_prompts);
        (void)personalize_video(t.corpus.target[0], prompts, t.ckpt.params, cfg);
        auto a = before.params.trainable();
        auto b = t.ckpt.params.trainable();
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->values() == b[i]->values());
        CHECK(before.raw_prompts.values() == t.ckpt.raw_prompts.values());
        CHECK(before.adapted_prompts.values() == t.ckpt.adapted_prompts.values());
        CHECK(prompts.pristine.values() == t.ckpt.adapted_prompts.values());
    }
    SUBCASE("zero iterations reduces to non-adapted prediction in both scoring modes") {
        TTAConfig whole;
        whole.iterations = 0;
        TunablePrompts prompts = TunablePrompts::from(t.ckpt.adapted_prompts);
        VideoReport r = personalize_video(t.corpus.target[2], prompts, t.ckpt.params, whole);
        ForwardResult plain =
            forward_with_prompts(t.corpus.target[2].frames, t.ckpt.adapted_prompts, t.ckpt.params);
        CHECK(r.prediction == plain.predicted);
        CHECK(r.pre_adapt_prediction == plain.predicted);

        TTAConfig win = whole;
        win.score = ScoreMode::kSelectedWindow;
        VideoReport rw = personalize_video(t.corpus.target[2], prompts, t.ckpt.params, win);
        // prediction equals the argmax on the selected window without tuning
        auto windows = enumerate_windows(t.corpus.target[2].frames.dim(0), win.window);
        const auto& [start, len] = windows[rw.selection.i_star - 1];
        ForwardResult wpred = forward_with_prompts(
            extract_window(t.corpus.target[2].frames, start, len), t.ckpt.adapted_prompts,
            t.ckpt.params);
        CHECK(rw.prediction == wpred.predicted);
    }
    SUBCASE("lr 0 reduces the selected-window pipeline to windowed inference") {
        TTAConfig cfg;
        cfg.lr = 0.0;
        cfg.score = ScoreMode::kSelectedWindow;
        TunablePrompts prompts = TunablePrompts::from(t.ckpt.adapted_prompts);
        VideoReport r = personalize_video(t.corpus.target[3], prompts, t.ckpt.params, cfg);
        auto windows = enumerate_windows(t.corpus.target[3].frames.dim(0), cfg.window);
        const auto& [start, len] = windows[r.selection.i_star - 1];
        ForwardResult wpred = forward_with_prompts(
            extract_window(t.corpus.target[3].frames, start, len), t.ckpt.adapted_prompts,
            t.ckpt.params);
        CHECK(r.prediction == wpred.predicted);
        CHECK(prompts.current.values() == prompts.pristine.values());
    }
}

TEST_CASE("personalize_subject") {
    const TrainedFixture& t = default_trained();

    SUBCASE("a single video behaves identically under both policies") {
        std::vector<EmbeddingSequence> one = {t.corpus.target[0]};
        TTAConfig pv;
        TunablePrompts p1 = TunablePrompts::from(t.ckpt.adapted_prompts);
        auto r1 = personalize_subject(one, p1, t.ckpt.params, pv);

        TTAConfig ps = pv;
        ps.reset = ResetPolicy::kPerSubject;
        TunablePrompts p2 = TunablePrompts::from(t.ckpt.adapted_prompts);
        auto r2 = personalize_subject(one, p2, t.ckpt.params, ps);

        CHECK(r1[0].prediction == r2[0].prediction);
        CHECK(r1[0].trace.entropies == r2[0].trace.entropies);
        CHECK(p1.current.values() == p2.current.values()); // both reset afterwards
    }
    SUBCASE("per-video predictions are order-invariant as a multiset") {
        std::vector<EmbeddingSequence> videos(t.corpus.target.begin(),
                                              t.corpus.target.begin() + 6);
        TTAConfig cfg;
        TunablePrompts p1 = TunablePrompts::from(t.ckpt.adapted_prompts);
        auto fwd = personalize_subject(videos, p1, t.ckpt.params, cfg);

        std::vector<EmbeddingSequence> reversed(videos.rbegin(), videos.rend());
        TunablePrompts p2 = TunablePrompts::from(t.ckpt.adapted_prompts);
        auto bwd = personalize_subject(reversed, p2, t.ckpt.params, cfg);

        std::multiset<std::size_t> a, b;
        for (const auto& r : fwd) a.insert(r.prediction);
        for (const auto& r : bwd) b.insert(r.prediction);
        CHECK(a == b);
    }
    SUBCASE("empty subject violates the protocol") {
        TunablePrompts p = TunablePrompts::from(t.ckpt.adapted_prompts);
        TTAConfig cfg;
        CHECK_THROWS_AS((void)personalize_subject({}, p, t.ckpt.params, cfg), ProtocolError);
    }
}

TEST_CASE("adapt_run") {
    const TrainedFixture& t = default_trained();

    SUBCASE("parallel per-video adaptation matches serial bit for bit") {
        TTAConfig cfg;
        AdaptRunResult serial = adapt_run(t.corpus.target, t.ckpt, cfg, 1);
        AdaptRunResult parallel = adapt_run(t.corpus.target, t.ckpt, cfg, 4);
        REQUIRE(serial.reports.size() == parallel.reports.size());
        for (std::size_t i = 0; i < serial.reports.size(); ++i) {
            CHECK(serial.reports[i].prediction == parallel.reports[i].prediction);
            CHECK(serial.reports[i].trace.entropies == parallel.reports[i].trace.entropies);
        }
    }
    SUBCASE("per-subject policy stays within a sane band of per-video") {
        TTAConfig pv;
        AdaptRunResult a = adapt_run(t.corpus.target, t.ckpt, pv, 1);
        TTAConfig ps = pv;
        ps.reset = ResetPolicy::kPerSubject;
        AdaptRunResult b = adapt_run(t.corpus.target, t.ckpt, ps, 1);
        CHECK(b.metrics.war >= a.metrics.war - 5.0);
    }
}
