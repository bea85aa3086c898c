#include "aupt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "aupt/rng.hpp"
#include "aupt/tape.hpp"

namespace aupt {

std::vector<Tensor> finite_difference(
    const std::function<double(std::span<const Tensor>)>& f,
    std::span<const Tensor> params, double step) {
    std::vector<Tensor> work(params.begin(), params.end());
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (const Tensor& p : params) grads.push_back(Tensor::zeros(p.shape()));
    for (std::size_t pi = 0; pi < work.size(); ++pi) {
        for (std::size_t i = 0; i < work[pi].size(); ++i) {
            double orig = work[pi][i];
            work[pi][i] = orig + step;
            double fp = f(work);
            work[pi][i] = orig - step;
            double fm = f(work);
            work[pi][i] = orig;
            grads[pi][i] = (fp - fm) / (2.0 * step);
        }
    }
    return grads;
}

double max_rel_err(std::span<const Tensor> analytic, std::span<const Tensor> fd) {
    double worst = 0.0;
    for (std::size_t pi = 0; pi < analytic.size(); ++pi) {
        for (std::size_t i = 0; i < analytic[pi].size(); ++i) {
            double denom = std::max(1.0, std::abs(fd[pi][i]));
            worst = std::max(worst, std::abs(analytic[pi][i] - fd[pi][i]) / denom);
        }
    }
    return worst;
}

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.values()) v = scale * rng.normal();
    return t;
}

// Records the check's graph on a tape over leaf vars and returns the scalar
// loss. Rebuilt from scratch for every finite-difference evaluation, so the
// graph must be a pure function of the leaf values.
using GraphBuilder = std::function<Tape::Var(Tape&, const std::vector<Tape::Var>&)>;

GradCheckResult check_graph(const std::string& name, const GradCheckOptions& opts,
                            const std::function<std::vector<Tensor>(Rng&)>& make_inputs,
                            const GraphBuilder& build) {
    GradCheckResult res;
    res.name = name;
    Rng rng(Rng::substream(opts.seed, "gradcheck:" + name));
    bool sabotage = opts.break_op == name;
    for (std::size_t inst = 0; inst < opts.instances; ++inst) {
        std::vector<Tensor> inputs = make_inputs(rng);

        Tape tape;
        std::vector<Tape::Var> vars;
        vars.reserve(inputs.size());
        for (const Tensor& t : inputs) vars.push_back(tape.leaf(t));
        Tape::Var loss = build(tape, vars);
        std::vector<Tensor> analytic = tape.backward(loss, vars);
        if (sabotage) {
            for (auto& g : analytic) {
                for (auto& v : g.values()) v = v * 1.5 + 1e-3;
            }
        }

        auto f = [&](std::span<const Tensor> p) {
            Tape t2;
            std::vector<Tape::Var> vs;
            vs.reserve(p.size());
            for (const Tensor& x : p) vs.push_back(t2.leaf(x));
            return t2.value(build(t2, vs))[0];
        };
        std::vector<Tensor> fd = finite_difference(f, inputs, opts.step);

        double err = max_rel_err(analytic, fd);
        res.worst_rel_err = std::max(res.worst_rel_err, err);
        if (err > opts.rel_tol) ++res.failures;
        ++res.instances;
    }
    return res;
}

} // namespace

std::vector<GradCheckResult> run_gradient_checks(const GradCheckOptions& opts) {
    std::vector<GradCheckResult> out;

    // Vector/matrix outputs are reduced to a scalar through random probe
    // weights that travel as extra leaves, so the full Jacobian is exercised
    // and the rebuilt graph sees identical probes.
    out.push_back(check_graph(
        "glu", opts,
        [](Rng& rng) {
            return std::vector<Tensor>{random_tensor(rng, {8}), random_tensor(rng, {4, 1})};
        },
        [](Tape& tape, const std::vector<Tape::Var>& v) {
            return tape.vecmat(tape.glu(v[0]), v[1]);
        }));

    out.push_back(check_graph(
        "conv1d_temporal", opts,
        [](Rng& rng) {
            return std::vector<Tensor>{random_tensor(rng, {5, 2}), random_tensor(rng, {3, 2, 3}),
                                       random_tensor(rng, {3}), random_tensor(rng, {1, 5}),
                                       random_tensor(rng, {3, 1})};
        },
        [](Tape& tape, const std::vector<Tape::Var>& v) {
            Tape::Var conv = tape.conv1d_temporal(v[0], v[1], v[2]);
            return tape.matmul(tape.matmul(v[3], conv), v[4]); // 1x1
        }));

    out.push_back(check_graph(
        "mean_pool", opts,
        [](Rng& rng) {
            return std::vector<Tensor>{random_tensor(rng, {7, 3}), random_tensor(rng, {3, 1})};
        },
        [](Tape& tape, const std::vector<Tape::Var>& v) {
            return tape.vecmat(tape.mean_pool(v[0]), v[1]);
        }));

    out.push_back(check_graph(
        "cosine_sim", opts,
        [](Rng& rng) {
            return std::vector<Tensor>{random_tensor(rng, {6}), random_tensor(rng, {6})};
        },
        [](Tape& tape, const std::vector<Tape::Var>& v) {
            return tape.cosine_sim(v[0], v[1]);
        }));

    out.push_back(check_graph(
        "softmax", opts,
        [](Rng& rng) {
            return std::vector<Tensor>{random_tensor(rng, {5}, 2.0), random_tensor(rng, {5, 1})};
        },
        [](Tape& tape, const std::vector<Tape::Var>& v) {
            return tape.vecmat(tape.softmax(v[0]), v[1]);
        }));

    // The two log-based losses are checked through softmax so their input
    // stays a valid probability vector under FD perturbation. The one-hot
    // label is a structural constant, not a differentiable input.
    out.push_back(check_graph(
        "cross_entropy", opts,
        [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, {4}, 2.0)}; },
        [](Tape& tape, const std::vector<Tape::Var>& v) {
            Tensor onehot = Tensor::zeros({4});
            onehot[1] = 1.0;
            return tape.cross_entropy(tape.softmax(v[0]), onehot);
        }));

    out.push_back(check_graph(
        "entropy", opts,
        [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, {5}, 2.0)}; },
        [](Tape& tape, const std::vector<Tape::Var>& v) {
            return tape.entropy(tape.softmax(v[0]));
        }));

    // Composed pipeline losses at reduced dims: d=6, N=5, T=7, k=3, h=4, C=3.
    auto pipeline_inputs = [](Rng& rng) {
        const std::size_t d = 6, n = 5, t = 7, k = 3, h = 4, c = 3;
        std::vector<Tensor> in;
        in.push_back(random_tensor(rng, {t, d}));             // 0 video
        in.push_back(random_tensor(rng, {n, d}));             // 1 raw prompts
        in.push_back(random_tensor(rng, {d, d}, 0.5));        // 2 adapter w1
        in.push_back(random_tensor(rng, {d}, 0.1));           // 3 adapter b1
        in.push_back(random_tensor(rng, {d, d}, 0.5));        // 4 adapter w2
        in.push_back(random_tensor(rng, {d}, 0.1));           // 5 adapter b2
        in.push_back(random_tensor(rng, {k, d, 2 * d}, 0.4)); // 6 kernel
        in.push_back(random_tensor(rng, {2 * d}, 0.1));       // 7 conv bias
        in.push_back(random_tensor(rng, {n, h}, 0.6));        // 8 cls w1
        in.push_back(random_tensor(rng, {h}, 0.1));           // 9 cls b1
        in.push_back(random_tensor(rng, {h, c}, 0.6));        // 10 cls w2
        in.push_back(random_tensor(rng, {c}, 0.1));           // 11 cls b2
        return in;
    };
    auto pipeline_graph = [](Tape& tape, const std::vector<Tape::Var>& v, bool entropy_loss) {
        Tape::Var h1 = tape.relu(tape.add_rows(tape.matmul(v[1], v[2]), v[3]));
        Tape::Var adapted = tape.add_rows(tape.matmul(h1, v[4]), v[5]);
        Tape::Var z = tape.mean_pool(tape.glu(tape.conv1d_temporal(v[0], v[6], v[7])));
        std::vector<Tape::Var> sims;
        for (std::size_t i = 0; i < tape.value(adapted).dim(0); ++i) {
            sims.push_back(tape.cosine_sim(z, tape.row(adapted, i)));
        }
        Tape::Var s = tape.stack(sims);
        Tape::Var hid = tape.relu(tape.add(tape.vecmat(s, v[8]), v[9]));
        Tape::Var probs = tape.softmax(tape.add(tape.vecmat(hid, v[10]), v[11]));
        if (entropy_loss) return tape.entropy(probs);
        Tensor onehot = Tensor::zeros({3});
        onehot[1] = 1.0;
        return tape.cross_entropy(probs, onehot);
    };
    out.push_back(check_graph(
        "supervised_loss", opts, pipeline_inputs,
        [&](Tape& tape, const std::vector<Tape::Var>& vars) {
            return pipeline_graph(tape, vars, false);
        }));
    out.push_back(check_graph(
        "window_entropy_loss", opts, pipeline_inputs,
        [&](Tape& tape, const std::vector<Tape::Var>& vars) {
            return pipeline_graph(tape, vars, true);
        }));

    return out;
}

} // namespace aupt
