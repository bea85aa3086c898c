#pragma once

#include <filesystem>

#include "aupt/model.hpp"
#include "aupt/tensor.hpp"

namespace aupt {

/// Trained model plus the prompt matrices it was trained against. The raw
/// prompts are stored so adaptation can verify the frozen text side; the
/// adapted prompts are the starting point for test-time tuning.
struct Checkpoint {
    ModelParams params;
    Tensor raw_prompts;     // N x d, exactly as ingested
    Tensor adapted_prompts; // N x d, adapter output at save time
};

/// Versioned binary container ("AUCK"). Doubles are stored verbatim, so a
/// save/load/save cycle is byte-identical.
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace aupt
