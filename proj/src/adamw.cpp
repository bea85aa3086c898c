#include "aupt/adamw.hpp"

#include <cmath>
#include <string>

#include "aupt/errors.hpp"

namespace aupt {

void AdamW::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size()) {
        throw ShapeError("adamw: parameter/gradient group size mismatch");
    }
    if (m_.empty()) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const Tensor* p : params) {
            m_.push_back(Tensor::zeros(p->shape()));
            v_.push_back(Tensor::zeros(p->shape()));
        }
    }
    if (m_.size() != params.size()) {
        throw ShapeError("adamw: parameter group changed size");
    }
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = *params[pi];
        const Tensor& g = grads[pi];
        if (!p.same_shape(g) || !p.same_shape(m_[pi])) {
            throw ShapeError("adamw: shape mismatch for parameter " + std::to_string(pi) +
                             " (" + p.shape_str() + " vs " + g.shape_str() + ")");
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] -= cfg_.lr * cfg_.weight_decay * p[i];
            double m = m_[pi][i] = cfg_.beta1 * m_[pi][i] + (1.0 - cfg_.beta1) * g[i];
            double v = v_[pi][i] = cfg_.beta2 * v_[pi][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            double mhat = m / bc1;
            double vhat = v / bc2;
            p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

} // namespace aupt
