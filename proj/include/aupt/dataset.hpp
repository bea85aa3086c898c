#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aupt/tensor.hpp"

namespace aupt {

/// One video as precomputed frame embeddings (T x d) with its identity.
struct EmbeddingSequence {
    std::string subject;
    std::size_t label = 0;
    Tensor frames;
};

enum class Role { kSource, kTarget };

Role role_from_string(const std::string& s);
std::string to_string(Role r);

struct ManifestRecord {
    std::string subject;
    std::size_t label = 0;
    std::string path; // relative to the manifest's directory
    std::size_t frame_count = 0;
    Role role = Role::kSource;
};

/// JSON Lines manifest: one {"subject","label","path","frames","role"}
/// record per video.
struct Manifest {
    std::string dataset;
    std::size_t dim = 0;
    std::size_t classes = 0;
    std::filesystem::path root; // directory the record paths are relative to
    std::vector<ManifestRecord> records;

    std::vector<std::string> subjects_in_order() const;
};

void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

/// Check that every referenced file exists and matches its declared frame
/// count and the manifest dimension. Throws on the first violation.
void validate_manifest(const Manifest& m);

/// Keep only records with the given role. Throws ProtocolError if any
/// subject appears under both roles in the input.
Manifest split_subjects(const Manifest& m, Role keep);

EmbeddingSequence load_sequence(const Manifest& m, const ManifestRecord& r);
std::vector<EmbeddingSequence> load_all(const Manifest& m);

enum class PromptKind { kAu, kClassPromptEnsemble };

PromptKind prompt_kind_from_string(const std::string& s);
std::string to_string(PromptKind k);

/// N named prompt embeddings: one AUE1 matrix plus a JSON sidecar with the
/// names and the kind.
struct PromptSet {
    std::vector<std::string> names;
    Tensor embeddings; // N x d
    PromptKind kind = PromptKind::kAu;

    void validate() const; // unique names, no zero rows
};

void write_prompt_set(const PromptSet& p, const std::filesystem::path& aue_path);
PromptSet read_prompt_set(const std::filesystem::path& aue_path);

} // namespace aupt
