#include "aupt/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "aupt/embedding_io.hpp"
#include "aupt/errors.hpp"

namespace aupt {

using nlohmann::json;

Role role_from_string(const std::string& s) {
    if (s == "source") return Role::kSource;
    if (s == "target") return Role::kTarget;
    throw FormatError("unknown role: " + s);
}

std::string to_string(Role r) { return r == Role::kSource ? "source" : "target"; }

PromptKind prompt_kind_from_string(const std::string& s) {
    if (s == "au") return PromptKind::kAu;
    if (s == "class-prompt-ensemble") return PromptKind::kClassPromptEnsemble;
    throw FormatError("unknown prompt kind: " + s);
}

std::string to_string(PromptKind k) {
    return k == PromptKind::kAu ? "au" : "class-prompt-ensemble";
}

std::vector<std::string> Manifest::subjects_in_order() const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& r : records) {
        if (seen.insert(r.subject).second) out.push_back(r.subject);
    }
    return out;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
    std::ostringstream os;
    {
        json header = {{"dataset", m.dataset}, {"dim", m.dim}, {"classes", m.classes}};
        os << header.dump() << "\n";
    }
    for (const auto& r : m.records) {
        json rec = {{"subject", r.subject}, {"label", r.label}, {"path", r.path},
                    {"frames", r.frame_count}, {"role", to_string(r.role)}};
        os << rec.dump() << "\n";
    }
    atomic_write_file(path, os.str());
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path.string());
    Manifest m;
    m.root = path.parent_path();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) +
                              ": invalid JSON (" + e.what() + ")");
        }
        if (lineno == 1 && j.contains("dataset")) {
            m.dataset = j.at("dataset").get<std::string>();
            m.dim = j.at("dim").get<std::size_t>();
            m.classes = j.at("classes").get<std::size_t>();
            continue;
        }
        ManifestRecord r;
        try {
            r.subject = j.at("subject").get<std::string>();
            r.label = j.at("label").get<std::size_t>();
            r.path = j.at("path").get<std::string>();
            r.frame_count = j.at("frames").get<std::size_t>();
            r.role = role_from_string(j.at("role").get<std::string>());
        } catch (const json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) +
                              ": bad record (" + e.what() + ")");
        }
        m.records.push_back(std::move(r));
    }
    return m;
}

void validate_manifest(const Manifest& m) {
    for (const auto& r : m.records) {
        std::filesystem::path p = m.root / r.path;
        if (!std::filesystem::exists(p)) {
            throw ProtocolError("manifest references missing file: " + p.string());
        }
        Tensor t = read_embeddings(p);
        if (t.dim(0) != r.frame_count) {
            throw ProtocolError(p.string() + ": frame count " + std::to_string(t.dim(0)) +
                                " does not match manifest " + std::to_string(r.frame_count));
        }
        if (m.dim != 0 && t.dim(1) != m.dim) {
            throw ProtocolError(p.string() + ": dimension " + std::to_string(t.dim(1)) +
                                " does not match manifest " + std::to_string(m.dim));
        }
        if (m.classes != 0 && r.label >= m.classes) {
            throw ProtocolError(p.string() + ": label " + std::to_string(r.label) +
                                " out of range");
        }
    }
}

Manifest split_subjects(const Manifest& m, Role keep) {
    std::unordered_map<std::string, Role> roles;
    for (const auto& r : m.records) {
        auto [it, inserted] = roles.emplace(r.subject, r.role);
        if (!inserted && it->second != r.role) {
            throw ProtocolError("subject " + r.subject + " appears under both roles");
        }
    }
    Manifest out;
    out.dataset = m.dataset;
    out.dim = m.dim;
    out.classes = m.classes;
    out.root = m.root;
    for (const auto& r : m.records) {
        if (r.role == keep) out.records.push_back(r);
    }
    return out;
}

EmbeddingSequence load_sequence(const Manifest& m, const ManifestRecord& r) {
    EmbeddingSequence s;
    s.subject = r.subject;
    s.label = r.label;
    s.frames = read_embeddings(m.root / r.path);
    if (s.frames.dim(0) == 0) {
        throw ProtocolError(r.path + ": empty sequence");
    }
    return s;
}

std::vector<EmbeddingSequence> load_all(const Manifest& m) {
    std::vector<EmbeddingSequence> out;
    out.reserve(m.records.size());
    for (const auto& r : m.records) out.push_back(load_sequence(m, r));
    return out;
}

void PromptSet::validate() const {
    if (embeddings.rank() != 2 || embeddings.dim(0) != names.size()) {
        throw ShapeError("prompt set: name/embedding count mismatch");
    }
    std::set<std::string> unique(names.begin(), names.end());
    if (unique.size() != names.size()) {
        throw ProtocolError("prompt set: duplicate prompt names");
    }
    for (std::size_t i = 0; i < embeddings.dim(0); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < embeddings.dim(1); ++j) {
            s += embeddings.at(i, j) * embeddings.at(i, j);
        }
        if (s == 0.0) {
            throw DomainError("prompt set: zero row for prompt '" + names[i] + "'");
        }
    }
}

void write_prompt_set(const PromptSet& p, const std::filesystem::path& aue_path) {
    p.validate();
    write_embeddings(p.embeddings, aue_path);
    json side = {{"kind", to_string(p.kind)}, {"names", p.names}};
    std::filesystem::path sidecar = aue_path;
    sidecar.replace_extension(".json");
    atomic_write_file(sidecar, side.dump(2) + "\n");
}

PromptSet read_prompt_set(const std::filesystem::path& aue_path) {
    PromptSet p;
    p.embeddings = read_embeddings(aue_path);
    std::filesystem::path sidecar = aue_path;
    sidecar.replace_extension(".json");
    std::ifstream in(sidecar);
    if (!in) throw IoError("cannot open prompt sidecar: " + sidecar.string());
    json side;
    try {
        in >> side;
        p.kind = prompt_kind_from_string(side.at("kind").get<std::string>());
        p.names = side.at("names").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw FormatError(sidecar.string() + ": bad sidecar (" + std::string(e.what()) + ")");
    }
    p.validate();
    return p;
}

} // namespace aupt
