#include "aupt/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aupt/errors.hpp"

namespace aupt {
namespace {

constexpr double kLogClamp = 1e-12;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double norm(const double* a, std::size_t n) { return std::sqrt(dot(a, a, n)); }

} // namespace

Tape::Var Tape::push(Op op, Tensor value, std::vector<std::size_t> in,
                     double darg, std::size_t iarg) {
    nodes_.push_back(Node{op, std::move(value), std::move(in), darg, iarg});
    return Var{nodes_.size() - 1};
}

Tape::Var Tape::leaf(Tensor value) { return push(Op::kLeaf, std::move(value), {}); }

Tape::Var Tape::add(Var a, Var b) {
    const Tensor& x = val(a.id);
    const Tensor& y = val(b.id);
    if (!x.same_shape(y)) {
        throw ShapeError("add: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
    }
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
    return push(Op::kAdd, std::move(out), {a.id, b.id});
}

Tape::Var Tape::scale(Var x, double alpha) {
    Tensor out = val(x.id);
    for (auto& v : out.values()) v *= alpha;
    return push(Op::kScale, std::move(out), {x.id}, alpha);
}

Tape::Var Tape::relu(Var x) {
    Tensor out = val(x.id);
    for (auto& v : out.values()) v = std::max(0.0, v);
    return push(Op::kRelu, std::move(out), {x.id});
}

Tape::Var Tape::glu(Var x) {
    const Tensor& in = val(x.id);
    if (in.rank() == 1) {
        std::size_t n = in.dim(0);
        if (n % 2 != 0) {
            throw ShapeError("glu: input length " + std::to_string(n) + " is odd");
        }
        std::size_t m = n / 2;
        Tensor out = Tensor::zeros({m});
        for (std::size_t j = 0; j < m; ++j) out[j] = in[j] * sigmoid(in[m + j]);
        return push(Op::kGlu, std::move(out), {x.id});
    }
    if (in.rank() == 2) {
        std::size_t t = in.dim(0), n = in.dim(1);
        if (n % 2 != 0) {
            throw ShapeError("glu: channel count " + std::to_string(n) + " is odd");
        }
        std::size_t m = n / 2;
        Tensor out = Tensor::zeros({t, m});
        for (std::size_t r = 0; r < t; ++r) {
            for (std::size_t j = 0; j < m; ++j) {
                out.at(r, j) = in.at(r, j) * sigmoid(in.at(r, m + j));
            }
        }
        return push(Op::kGlu, std::move(out), {x.id});
    }
    throw ShapeError("glu: expected rank-1 or rank-2 input, got " + in.shape_str());
}

Tape::Var Tape::row(Var m, std::size_t r) {
    const Tensor& in = val(m.id);
    if (in.rank() != 2) throw ShapeError("row: expected matrix, got " + in.shape_str());
    if (r >= in.dim(0)) throw ShapeError("row: index out of range");
    std::size_t c = in.dim(1);
    std::vector<double> data(in.data() + r * c, in.data() + (r + 1) * c);
    return push(Op::kRow, Tensor::vector(std::move(data)), {m.id}, 0.0, r);
}

Tape::Var Tape::stack(std::span<const Var> scalars) {
    std::vector<double> data;
    std::vector<std::size_t> in;
    data.reserve(scalars.size());
    in.reserve(scalars.size());
    for (Var v : scalars) {
        const Tensor& t = val(v.id);
        if (t.size() != 1) throw ShapeError("stack: inputs must be scalars");
        data.push_back(t[0]);
        in.push_back(v.id);
    }
    return push(Op::kStack, Tensor::vector(std::move(data)), std::move(in));
}

Tape::Var Tape::mean(Var v) {
    const Tensor& in = val(v.id);
    if (in.rank() != 1 || in.size() == 0) {
        throw ShapeError("mean: expected non-empty vector, got " + in.shape_str());
    }
    double s = 0.0;
    for (double x : in.values()) s += x;
    return push(Op::kMean, Tensor::scalar(s / static_cast<double>(in.size())), {v.id});
}

Tape::Var Tape::matmul(Var a, Var b) {
    const Tensor& x = val(a.id);
    const Tensor& y = val(b.id);
    if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + x.shape_str() + " and " + y.shape_str());
    }
    std::size_t m = x.dim(0), k = x.dim(1), n = y.dim(1);
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            double xi = x.at(i, l);
            if (xi == 0.0) continue;
            const double* yr = y.data() + l * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += xi * yr[j];
        }
    }
    return push(Op::kMatmul, std::move(out), {a.id, b.id});
}

Tape::Var Tape::add_rows(Var m, Var bias) {
    const Tensor& x = val(m.id);
    const Tensor& b = val(bias.id);
    if (x.rank() != 2 || b.rank() != 1 || x.dim(1) != b.dim(0)) {
        throw ShapeError("add_rows: incompatible shapes " + x.shape_str() + " and " + b.shape_str());
    }
    Tensor out = x;
    std::size_t t = x.dim(0), n = x.dim(1);
    for (std::size_t r = 0; r < t; ++r) {
        for (std::size_t j = 0; j < n; ++j) out.at(r, j) += b[j];
    }
    return push(Op::kAddRows, std::move(out), {m.id, bias.id});
}

Tape::Var Tape::vecmat(Var x, Var m) {
    const Tensor& v = val(x.id);
    const Tensor& w = val(m.id);
    if (v.rank() != 1 || w.rank() != 2 || v.dim(0) != w.dim(0)) {
        throw ShapeError("vecmat: incompatible shapes " + v.shape_str() + " and " + w.shape_str());
    }
    std::size_t k = w.dim(0), n = w.dim(1);
    Tensor out = Tensor::zeros({n});
    for (std::size_t i = 0; i < k; ++i) {
        double vi = v[i];
        const double* wr = w.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) out[j] += vi * wr[j];
    }
    return push(Op::kVecMat, std::move(out), {x.id, m.id});
}

Tape::Var Tape::matvec(Var m, Var x) {
    const Tensor& w = val(m.id);
    const Tensor& v = val(x.id);
    if (w.rank() != 2 || v.rank() != 1 || w.dim(1) != v.dim(0)) {
        throw ShapeError("matvec: incompatible shapes " + w.shape_str() + " and " + v.shape_str());
    }
    std::size_t r = w.dim(0), n = w.dim(1);
    Tensor out = Tensor::zeros({r});
    for (std::size_t i = 0; i < r; ++i) out[i] = dot(w.data() + i * n, v.data(), n);
    return push(Op::kMatVec, std::move(out), {m.id, x.id});
}

Tape::Var Tape::conv1d_temporal(Var v, Var kernel, Var bias) {
    const Tensor& x = val(v.id);
    const Tensor& k = val(kernel.id);
    const Tensor& b = val(bias.id);
    if (x.rank() != 2 || k.rank() != 3 || b.rank() != 1) {
        throw ShapeError("conv1d: expected [TxCin], [KxCinxCout], [Cout]");
    }
    std::size_t kw = k.dim(0), cin = k.dim(1), cout = k.dim(2);
    if (kw % 2 == 0) {
        throw ConfigError("conv1d: kernel width " + std::to_string(kw) + " must be odd");
    }
    if (x.dim(1) != cin || b.dim(0) != cout) {
        throw ShapeError("conv1d: incompatible shapes " + x.shape_str() + ", " +
                         k.shape_str() + ", " + b.shape_str());
    }
    std::size_t t = x.dim(0);
    if (t == 0) throw ShapeError("conv1d: empty sequence");
    long pad = static_cast<long>(kw - 1) / 2;
    Tensor out = Tensor::zeros({t, cout});
    for (std::size_t ti = 0; ti < t; ++ti) {
        double* orow = out.data() + ti * cout;
        for (std::size_t o = 0; o < cout; ++o) orow[o] = b[o];
        for (std::size_t j = 0; j < kw; ++j) {
            long src = static_cast<long>(ti) + static_cast<long>(j) - pad;
            if (src < 0 || src >= static_cast<long>(t)) continue; // zero padding
            const double* xrow = x.data() + static_cast<std::size_t>(src) * cin;
            const double* kslab = k.data() + j * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
                double xv = xrow[ci];
                if (xv == 0.0) continue;
                const double* krow = kslab + ci * cout;
                for (std::size_t o = 0; o < cout; ++o) orow[o] += xv * krow[o];
            }
        }
    }
    return push(Op::kConv1d, std::move(out), {v.id, kernel.id, bias.id});
}

Tape::Var Tape::mean_pool(Var m) {
    const Tensor& x = val(m.id);
    if (x.rank() != 2) throw ShapeError("mean_pool: expected matrix, got " + x.shape_str());
    std::size_t t = x.dim(0), c = x.dim(1);
    if (t == 0) throw ShapeError("mean_pool: empty sequence");
    Tensor out = Tensor::zeros({c});
    for (std::size_t r = 0; r < t; ++r) {
        for (std::size_t j = 0; j < c; ++j) out[j] += x.at(r, j);
    }
    for (auto& v : out.values()) v /= static_cast<double>(t);
    return push(Op::kMeanPool, std::move(out), {m.id});
}

Tape::Var Tape::cosine_sim(Var a, Var b) {
    const Tensor& x = val(a.id);
    const Tensor& y = val(b.id);
    if (x.rank() != 1 || y.rank() != 1 || x.dim(0) != y.dim(0)) {
        throw ShapeError("cosine_sim: expected equal-length vectors");
    }
    std::size_t n = x.dim(0);
    double na = norm(x.data(), n), nb = norm(y.data(), n);
    if (na == 0.0 || nb == 0.0) throw DomainError("cosine_sim: zero-norm input");
    double c = dot(x.data(), y.data(), n) / (na * nb);
    return push(Op::kCosine, Tensor::scalar(c), {a.id, b.id}, c);
}

Tape::Var Tape::softmax(Var logits) {
    const Tensor& x = val(logits.id);
    if (x.rank() != 1 || x.dim(0) < 2) {
        throw DomainError("softmax: expected vector of length >= 2");
    }
    if (!x.all_finite()) throw DomainError("softmax: non-finite logits");
    double mx = *std::max_element(x.values().begin(), x.values().end());
    Tensor out = x;
    double sum = 0.0;
    for (auto& v : out.values()) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : out.values()) v /= sum;
    return push(Op::kSoftmax, std::move(out), {logits.id});
}

Tape::Var Tape::cross_entropy(Var p, Tensor onehot) {
    const Tensor& prob = val(p.id);
    if (prob.rank() != 1) throw ShapeError("cross_entropy: expected probability vector");
    if (onehot.rank() != 1 || onehot.dim(0) != prob.dim(0)) {
        throw LabelError("cross_entropy: one-hot length mismatch");
    }
    std::size_t cls = onehot.size();
    std::size_t hot = cls;
    for (std::size_t i = 0; i < cls; ++i) {
        if (onehot[i] == 1.0) {
            if (hot != cls) throw LabelError("cross_entropy: multiple hot entries");
            hot = i;
        } else if (onehot[i] != 0.0) {
            throw LabelError("cross_entropy: one-hot entries must be 0 or 1");
        }
    }
    if (hot == cls) throw LabelError("cross_entropy: no hot entry");
    double pt = std::max(prob[hot], kLogClamp);
    return push(Op::kCrossEntropy, Tensor::scalar(-std::log(pt)), {p.id}, 0.0, hot);
}

Tape::Var Tape::entropy(Var p) {
    const Tensor& prob = val(p.id);
    if (prob.rank() != 1) throw ShapeError("entropy: expected probability vector");
    double sum = 0.0;
    for (double v : prob.values()) {
        if (v < 0.0) throw DomainError("entropy: negative probability entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw DomainError("entropy: probabilities sum to " + std::to_string(sum));
    }
    double h = 0.0;
    for (double v : prob.values()) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return push(Op::kEntropy, Tensor::scalar(h), {p.id});
}

void Tape::backprop_node(std::size_t id, const Tensor& g, std::vector<Tensor>& grads) const {
    const Node& n = nodes_[id];
    auto acc = [&grads](std::size_t target, std::size_t i, double v) {
        grads[target][i] += v;
    };
    switch (n.op) {
        case Op::kLeaf:
            break;
        case Op::kAdd:
            for (std::size_t i = 0; i < g.size(); ++i) {
                acc(n.in[0], i, g[i]);
                acc(n.in[1], i, g[i]);
            }
            break;
        case Op::kScale:
            for (std::size_t i = 0; i < g.size(); ++i) acc(n.in[0], i, g[i] * n.darg);
            break;
        case Op::kRelu: {
            const Tensor& x = val(n.in[0]);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (x[i] > 0.0) acc(n.in[0], i, g[i]);
            }
            break;
        }
        case Op::kGlu: {
            const Tensor& x = val(n.in[0]);
            std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
            std::size_t m = (x.rank() == 2 ? x.dim(1) : x.dim(0)) / 2;
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < m; ++j) {
                    std::size_t ia = r * 2 * m + j;
                    std::size_t ib = r * 2 * m + m + j;
                    double s = sigmoid(x[ib]);
                    double go = g[r * m + j];
                    acc(n.in[0], ia, go * s);
                    acc(n.in[0], ib, go * x[ia] * s * (1.0 - s));
                }
            }
            break;
        }
        case Op::kRow: {
            std::size_t c = g.size();
            for (std::size_t j = 0; j < c; ++j) acc(n.in[0], n.iarg * c + j, g[j]);
            break;
        }
        case Op::kStack:
            for (std::size_t i = 0; i < n.in.size(); ++i) acc(n.in[i], 0, g[i]);
            break;
        case Op::kMean: {
            double gv = g[0] / static_cast<double>(val(n.in[0]).size());
            for (std::size_t i = 0; i < val(n.in[0]).size(); ++i) acc(n.in[0], i, gv);
            break;
        }
        case Op::kMatmul: {
            const Tensor& a = val(n.in[0]);
            const Tensor& b = val(n.in[1]);
            std::size_t m = a.dim(0), k = a.dim(1), c = b.dim(1);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t l = 0; l < k; ++l) {
                    acc(n.in[0], i * k + l, dot(g.data() + i * c, b.data() + l * c, c));
                }
            }
            for (std::size_t l = 0; l < k; ++l) {
                for (std::size_t j = 0; j < c; ++j) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < m; ++i) s += a.at(i, l) * g[i * c + j];
                    acc(n.in[1], l * c + j, s);
                }
            }
            break;
        }
        case Op::kAddRows: {
            const Tensor& b = val(n.in[1]);
            std::size_t c = b.dim(0);
            std::size_t t = g.size() / c;
            for (std::size_t i = 0; i < g.size(); ++i) acc(n.in[0], i, g[i]);
            for (std::size_t r = 0; r < t; ++r) {
                for (std::size_t j = 0; j < c; ++j) acc(n.in[1], j, g[r * c + j]);
            }
            break;
        }
        case Op::kVecMat: {
            const Tensor& x = val(n.in[0]);
            const Tensor& w = val(n.in[1]);
            std::size_t k = w.dim(0), c = w.dim(1);
            for (std::size_t i = 0; i < k; ++i) {
                acc(n.in[0], i, dot(w.data() + i * c, g.data(), c));
                for (std::size_t j = 0; j < c; ++j) acc(n.in[1], i * c + j, x[i] * g[j]);
            }
            break;
        }
        case Op::kMatVec: {
            const Tensor& w = val(n.in[0]);
            const Tensor& x = val(n.in[1]);
            std::size_t r = w.dim(0), c = w.dim(1);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    acc(n.in[0], i * c + j, g[i] * x[j]);
                    acc(n.in[1], j, g[i] * w.at(i, j));
                }
            }
            break;
        }
        case Op::kConv1d: {
            const Tensor& x = val(n.in[0]);
            const Tensor& k = val(n.in[1]);
            std::size_t t = x.dim(0), cin = x.dim(1);
            std::size_t kw = k.dim(0), cout = k.dim(2);
            long pad = static_cast<long>(kw - 1) / 2;
            for (std::size_t ti = 0; ti < t; ++ti) {
                const double* grow = g.data() + ti * cout;
                for (std::size_t o = 0; o < cout; ++o) acc(n.in[2], o, grow[o]);
                for (std::size_t j = 0; j < kw; ++j) {
                    long src = static_cast<long>(ti) + static_cast<long>(j) - pad;
                    if (src < 0 || src >= static_cast<long>(t)) continue;
                    std::size_t s = static_cast<std::size_t>(src);
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        const double* krow = k.data() + (j * cin + ci) * cout;
                        double xv = x.at(s, ci);
                        double gx = 0.0;
                        for (std::size_t o = 0; o < cout; ++o) {
                            gx += krow[o] * grow[o];
                            acc(n.in[1], (j * cin + ci) * cout + o, xv * grow[o]);
                        }
                        acc(n.in[0], s * cin + ci, gx);
                    }
                }
            }
            break;
        }
        case Op::kMeanPool: {
            const Tensor& x = val(n.in[0]);
            std::size_t t = x.dim(0), c = x.dim(1);
            double inv = 1.0 / static_cast<double>(t);
            for (std::size_t r = 0; r < t; ++r) {
                for (std::size_t j = 0; j < c; ++j) acc(n.in[0], r * c + j, g[j] * inv);
            }
            break;
        }
        case Op::kCosine: {
            const Tensor& a = val(n.in[0]);
            const Tensor& b = val(n.in[1]);
            std::size_t len = a.dim(0);
            double na = norm(a.data(), len), nb = norm(b.data(), len);
            double c = n.darg;
            double gv = g[0];
            for (std::size_t i = 0; i < len; ++i) {
                acc(n.in[0], i, gv * (b[i] / (na * nb) - c * a[i] / (na * na)));
                acc(n.in[1], i, gv * (a[i] / (na * nb) - c * b[i] / (nb * nb)));
            }
            break;
        }
        case Op::kSoftmax: {
            const Tensor& p = n.value;
            double gp = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) gp += g[i] * p[i];
            for (std::size_t i = 0; i < p.size(); ++i) {
                acc(n.in[0], i, p[i] * (g[i] - gp));
            }
            break;
        }
        case Op::kCrossEntropy: {
            const Tensor& p = val(n.in[0]);
            if (p[n.iarg] > kLogClamp) {
                acc(n.in[0], n.iarg, -g[0] / p[n.iarg]);
            }
            break;
        }
        case Op::kEntropy: {
            const Tensor& p = val(n.in[0]);
            for (std::size_t i = 0; i < p.size(); ++i) {
                if (p[i] > 0.0) acc(n.in[0], i, g[0] * (-(std::log(p[i]) + 1.0)));
            }
            break;
        }
    }
}

std::vector<Tensor> Tape::backward(Var loss, std::span<const Var> wrt) {
    const Tensor& l = val(loss.id);
    if (l.size() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + l.shape_str());
    }
    std::vector<Tensor> grads(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) grads[i] = Tensor::zeros(nodes_[i].value.shape());
    grads[loss.id][0] = 1.0;

    std::vector<char> needed(nodes_.size(), 0);
    needed[loss.id] = 1;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        if (!needed[i]) continue;
        for (std::size_t dep : nodes_[i].in) needed[dep] = 1;
    }
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        if (needed[i]) backprop_node(i, grads[i], grads);
    }

    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (Var v : wrt) out.push_back(std::move(grads[v.id]));
    return out;
}

} // namespace aupt
