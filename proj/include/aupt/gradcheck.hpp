#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aupt/tensor.hpp"

namespace aupt {

/// Central-difference gradient estimate of a scalar function of a parameter
/// group. The reference oracle for every analytic gradient in the project;
/// kept independent of the tape on purpose.
std::vector<Tensor> finite_difference(
    const std::function<double(std::span<const Tensor>)>& f,
    std::span<const Tensor> params, double step);

struct GradCheckResult {
    std::string name;
    std::size_t instances = 0;
    std::size_t failures = 0;
    double worst_rel_err = 0.0;
    bool passed() const { return failures == 0; }
};

struct GradCheckOptions {
    std::uint64_t seed = 7;
    std::size_t instances = 100;
    double step = 1e-5;
    double rel_tol = 1e-4;
    /// Debug hook: perturb the analytic gradients of the named check so the
    /// comparison fails; used as a negative control of the harness itself.
    std::string break_op;
};

/// Compare max |analytic - fd| / max(1, |fd|) over all parameter entries.
double max_rel_err(std::span<const Tensor> analytic, std::span<const Tensor> fd);

/// Per-primitive and composed-pipeline gradient checks (supervised loss and
/// window-entropy loss). Returns one result per check, in a fixed order.
std::vector<GradCheckResult> run_gradient_checks(const GradCheckOptions& opts);

} // namespace aupt
