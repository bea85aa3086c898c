#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"

#include "aupt/dataset.hpp"
#include "aupt/embedding_io.hpp"
#include "aupt/errors.hpp"
#include "aupt/rng.hpp"
#include "aupt/synth.hpp"

using namespace aupt;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("aupt_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

TEST_CASE("embedding file layout") {
    fs::path dir = temp_dir("aue");

    SUBCASE("1x1 zero matrix is a 24-byte header plus 4 data bytes") {
        write_embeddings(Tensor::matrix(1, 1, {0.0}), dir / "one.aue1");
        CHECK(fs::file_size(dir / "one.aue1") == 28);
        Tensor back = read_embeddings(dir / "one.aue1");
        CHECK(back.shape() == std::vector<std::size_t>{1, 1});
        CHECK(back[0] == 0.0);
    }
    SUBCASE("round trip of float-valued data is bitwise") {
        Rng rng(1);
        Tensor m = Tensor::zeros({16, 512});
        for (auto& v : m.values()) v = rng.normal();
        quantize_to_f32(m);
        write_embeddings(m, dir / "rt.aue1");
        Tensor back = read_embeddings(dir / "rt.aue1");
        CHECK(back.values() == m.values());

        // second write of the read-back data is byte-identical
        write_embeddings(back, dir / "rt2.aue1");
        CHECK(slurp(dir / "rt.aue1") == slurp(dir / "rt2.aue1"));
    }
    SUBCASE("non-finite data is rejected before touching the disk") {
        Tensor m = Tensor::matrix(1, 2, {1.0, std::nan("")});
        CHECK_THROWS_AS(write_embeddings(m, dir / "nan.aue1"), DomainError);
        CHECK(!fs::exists(dir / "nan.aue1"));
    }
    SUBCASE("corrupted magic names the offset") {
        write_embeddings(Tensor::matrix(1, 1, {0.5}), dir / "c.aue1");
        std::string bytes = slurp(dir / "c.aue1");
        bytes[1] = 'X';
        spit(dir / "c.aue1", bytes);
        try {
            (void)read_embeddings(dir / "c.aue1");
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("byte offset 0") != std::string::npos);
        }
    }
    SUBCASE("truncated payload returns no partial matrix") {
        Rng rng(2);
        Tensor m = Tensor::zeros({4, 4});
        for (auto& v : m.values()) v = rng.normal();
        write_embeddings(m, dir / "t.aue1");
        std::string bytes = slurp(dir / "t.aue1");
        spit(dir / "t.aue1", bytes.substr(0, bytes.size() - 5));
        CHECK_THROWS_AS((void)read_embeddings(dir / "t.aue1"), FormatError);
    }
    SUBCASE("unsupported version is rejected") {
        write_embeddings(Tensor::matrix(1, 1, {0.5}), dir / "v.aue1");
        std::string bytes = slurp(dir / "v.aue1");
        bytes[4] = 9;
        spit(dir / "v.aue1", bytes);
        CHECK_THROWS_AS((void)read_embeddings(dir / "v.aue1"), FormatError);
    }
    fs::remove_all(dir);
}

TEST_CASE("manifest io and subject splitting") {
    fs::path dir = temp_dir("manifest");

    Manifest m;
    m.dataset = "unit";
    m.dim = 4;
    m.classes = 2;
    m.root = dir;
    Rng rng(3);
    for (int s = 0; s < 10; ++s) {
        std::string sid = (s < 8 ? "src" : "tgt") + std::to_string(s);
        Tensor frames = Tensor::zeros({3, 4});
        for (auto& v : frames.values()) v = rng.normal();
        quantize_to_f32(frames);
        std::string rel = "v" + std::to_string(s) + ".aue1";
        write_embeddings(frames, dir / rel);
        m.records.push_back(ManifestRecord{sid, static_cast<std::size_t>(s % 2), rel, 3,
                                           s < 8 ? Role::kSource : Role::kTarget});
    }
    write_manifest(m, dir / "manifest.jsonl");
    Manifest back = read_manifest(dir / "manifest.jsonl");
    CHECK(back.records.size() == 10);
    CHECK(back.dim == 4);
    validate_manifest(back);

    SUBCASE("8/2 partition is disjoint") {
        Manifest src = split_subjects(back, Role::kSource);
        Manifest tgt = split_subjects(back, Role::kTarget);
        CHECK(src.records.size() == 8);
        CHECK(tgt.records.size() == 2);
        std::set<std::string> a, b;
        for (const auto& r : src.records) a.insert(r.subject);
        for (const auto& r : tgt.records) b.insert(r.subject);
        for (const auto& sid : b) CHECK(a.count(sid) == 0);
    }
    SUBCASE("all-source manifest filtered by target is empty") {
        Manifest src = split_subjects(back, Role::kSource);
        Manifest none = split_subjects(src, Role::kTarget);
        CHECK(none.records.empty());
    }
    SUBCASE("a subject with both roles violates the protocol") {
        Manifest bad = back;
        bad.records[0].role = Role::kTarget;
        bad.records.push_back(bad.records[0]);
        bad.records.back().role = Role::kSource;
        CHECK_THROWS_AS((void)split_subjects(bad, Role::kSource), ProtocolError);
    }
    SUBCASE("validation catches frame-count lies") {
        Manifest bad = back;
        bad.records[0].frame_count = 99;
        CHECK_THROWS_AS(validate_manifest(bad), ProtocolError);
    }
    fs::remove_all(dir);
}

TEST_CASE("prompt set io") {
    fs::path dir = temp_dir("prompts");
    PromptSet p;
    p.kind = PromptKind::kAu;
    Rng rng(4);
    p.embeddings = Tensor::zeros({3, 4});
    for (auto& v : p.embeddings.values()) v = rng.normal();
    quantize_to_f32(p.embeddings);
    p.names = {"au_01", "au_02", "au_03"};
    write_prompt_set(p, dir / "p.aue1");
    PromptSet back = read_prompt_set(dir / "p.aue1");
    CHECK(back.names == p.names);
    CHECK(back.kind == PromptKind::kAu);
    CHECK(back.embeddings.values() == p.embeddings.values());

    SUBCASE("duplicate names rejected") {
        PromptSet bad = p;
        bad.names[1] = "au_01";
        CHECK_THROWS_AS(write_prompt_set(bad, dir / "bad.aue1"), ProtocolError);
    }
    SUBCASE("zero row rejected and named") {
        PromptSet bad = p;
        for (std::size_t j = 0; j < 4; ++j) bad.embeddings.at(1, j) = 0.0;
        try {
            bad.validate();
            FAIL("expected DomainError");
        } catch (const DomainError& e) {
            CHECK(std::string(e.what()).find("au_02") != std::string::npos);
        }
    }
    fs::remove_all(dir);
}

namespace {

SynthSpec tiny_spec(std::uint64_t seed) {
    SynthSpec s;
    s.seed = seed;
    s.dim = 16;
    s.prompts = 10;
    s.classes = 2;
    s.source_subjects = 2;
    s.target_subjects = 1;
    s.videos_per_subject = 3;
    s.t_min = 8;
    s.t_max = 12;
    s.active_per_class = 3;
    s.shared_active = 2;
    return s;
}

std::string corpus_fingerprint(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string all;
    for (const auto& f : files) {
        all += f.filename().string();
        all += slurp(f);
    }
    return all;
}

} // namespace

TEST_CASE("synthetic corpus generation") {
    SUBCASE("same spec produces byte-identical corpora") {
        fs::path d1 = temp_dir("synth1");
        fs::path d2 = temp_dir("synth2");
        synth_generate(tiny_spec(42), d1);
        synth_generate(tiny_spec(42), d2);
        CHECK(corpus_fingerprint(d1) == corpus_fingerprint(d2));
        fs::remove_all(d1);
        fs::remove_all(d2);
    }
    SUBCASE("latent directions are orthonormal") {
        fs::path d = temp_dir("synth3");
        SynthOutput out = synth_generate(tiny_spec(7), d);
        const Tensor& u = out.truth.directions;
        for (std::size_t i = 0; i < u.dim(0); ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                double dot = 0.0;
                for (std::size_t k = 0; k < u.dim(1); ++k) dot += u.at(i, k) * u.at(j, k);
                CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10));
            }
        }
        fs::remove_all(d);
    }
    SUBCASE("noise-free corpus is perfectly separable via ground truth") {
        fs::path d = temp_dir("synth4");
        SynthSpec s = tiny_spec(11);
        s.noise = 0.0;
        s.subject_perturb = 0.0;
        s.target_shift = 0.0;
        s.confound_strength = 0.0;
        SynthOutput out = synth_generate(s, d);
        validate_manifest(out.manifest);

        // nearest-template classification of the recovered peak-frame weights
        auto videos = load_all(out.manifest);
        std::size_t hits = 0;
        for (const auto& v : videos) {
            // peak frame = the one with the largest norm
            std::size_t best = 0;
            double best_norm = -1.0;
            for (std::size_t t = 0; t < v.frames.dim(0); ++t) {
                double n2 = 0.0;
                for (std::size_t k = 0; k < v.frames.dim(1); ++k) {
                    n2 += v.frames.at(t, k) * v.frames.at(t, k);
                }
                if (n2 > best_norm) {
                    best_norm = n2;
                    best = t;
                }
            }
            // project onto the latent directions to recover weights
            std::vector<double> w(s.prompts, 0.0);
            for (std::size_t i = 0; i < s.prompts; ++i) {
                for (std::size_t k = 0; k < s.dim; ++k) {
                    w[i] += v.frames.at(best, k) * out.truth.directions.at(i, k);
                }
            }
            // nearest class template up to scale (cosine in weight space)
            std::size_t argmax = 0;
            double best_cos = -2.0;
            for (std::size_t c = 0; c < s.classes; ++c) {
                double dot = 0, nw = 0, nt = 0;
                for (std::size_t i = 0; i < s.prompts; ++i) {
                    dot += w[i] * out.truth.class_templates[c][i];
                    nw += w[i] * w[i];
                    nt += out.truth.class_templates[c][i] * out.truth.class_templates[c][i];
                }
                double cosv = dot / std::sqrt(nw * nt);
                if (cosv > best_cos) {
                    best_cos = cosv;
                    argmax = c;
                }
            }
            if (argmax == v.label) ++hits;
        }
        CHECK(hits == videos.size());
        fs::remove_all(d);
    }
    SUBCASE("orthonormality requires dim >= prompts") {
        SynthSpec s = tiny_spec(1);
        s.dim = 4;
        CHECK_THROWS_AS(s.validate(), ConfigError);
    }
    SUBCASE("single class is rejected") {
        SynthSpec s = tiny_spec(1);
        s.classes = 1;
        CHECK_THROWS_AS(s.validate(), ConfigError);
    }
    SUBCASE("explicit identical templates are rejected") {
        SynthSpec s = tiny_spec(1);
        s.class_templates = {std::vector<double>(10, 1.0), std::vector<double>(10, 1.0)};
        CHECK_THROWS_AS(s.validate(), ConfigError);
    }
    SUBCASE("ground truth round-trips through its files") {
        fs::path d = temp_dir("synth5");
        SynthOutput out = synth_generate(tiny_spec(5), d);
        GroundTruth t = read_ground_truth(d);
        CHECK(t.class_templates == out.truth.class_templates);
        CHECK(t.subjects.size() == out.truth.subjects.size());
        fs::remove_all(d);
    }
}
