#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aupt/tensor.hpp"

namespace aupt {

struct AdamWConfig {
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adaptive-moment optimizer with decoupled weight decay. The decay is
/// applied to the parameter directly (param -= lr*wd*param) before the
/// bias-corrected moment step, never through the gradient.
class AdamW {
 public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    const AdamWConfig& config() const { return cfg_; }
    std::size_t step_count() const { return step_; }

    /// One update over a fixed parameter group. Moment buffers are created
    /// on first use and must keep matching shapes afterwards.
    void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

 private:
    AdamWConfig cfg_;
    std::size_t step_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

} // namespace aupt
