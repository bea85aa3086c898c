#include "aupt/synth.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "aupt/embedding_io.hpp"
#include "aupt/errors.hpp"
#include "aupt/rng.hpp"

namespace aupt {

using nlohmann::json;

namespace {

/// Orthonormalize N gaussian rows in R^d (modified Gram-Schmidt).
Tensor orthonormal_rows(Rng& rng, std::size_t n, std::size_t d) {
    Tensor u = Tensor::zeros({n, d});
    for (auto& v : u.values()) v = rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
        double* ri = u.data() + i * d;
        for (std::size_t j = 0; j < i; ++j) {
            const double* rj = u.data() + j * d;
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += ri[k] * rj[k];
            for (std::size_t k = 0; k < d; ++k) ri[k] -= dot * rj[k];
        }
        double nrm = 0.0;
        for (std::size_t k = 0; k < d; ++k) nrm += ri[k] * ri[k];
        nrm = std::sqrt(nrm);
        for (std::size_t k = 0; k < d; ++k) ri[k] /= nrm;
    }
    return u;
}

std::vector<double> mix_pattern(const Tensor& directions,
                                const std::vector<double>& weights) {
    std::size_t n = directions.dim(0), d = directions.dim(1);
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double w = weights[i];
        if (w == 0.0) continue;
        const double* row = directions.data() + i * d;
        for (std::size_t k = 0; k < d; ++k) out[k] += w * row[k];
    }
    return out;
}

std::string zero_pad(std::size_t v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

} // namespace

void SynthSpec::validate() const {
    if (classes < 2) throw ConfigError("synth: class count must be >= 2");
    if (dim < prompts) {
        throw ConfigError("synth: orthonormal directions need dim >= prompts (" +
                          std::to_string(dim) + " < " + std::to_string(prompts) + ")");
    }
    if (t_min == 0 || t_max < t_min) throw ConfigError("synth: bad frame-count range");
    if (source_subjects == 0 || videos_per_subject == 0) {
        throw ConfigError("synth: need at least one source subject and one video");
    }
    if (class_templates.empty()) {
        if (active_per_class * classes + shared_active > prompts) {
            throw ConfigError("synth: per-class active sets do not fit into prompt count");
        }
    } else {
        if (class_templates.size() != classes) {
            throw ConfigError("synth: explicit templates must have one row per class");
        }
        for (const auto& row : class_templates) {
            if (row.size() != prompts) throw ConfigError("synth: template width must be N");
        }
        for (std::size_t a = 0; a < classes; ++a) {
            for (std::size_t b = a + 1; b < classes; ++b) {
                if (class_templates[a] == class_templates[b]) {
                    throw ConfigError("synth: class templates must be distinct");
                }
            }
        }
    }
    for (double s : {subject_perturb, confound_strength, target_shift, noise, prompt_noise}) {
        if (s < 0.0) throw ConfigError("synth: scales must be >= 0");
    }
    if (intensity_lo <= 0.0 || intensity_hi < intensity_lo) {
        throw ConfigError("synth: bad intensity range");
    }
}

SynthOutput synth_generate(const SynthSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    std::filesystem::create_directories(out_dir / "embeddings");

    Rng rng(Rng::substream(spec.seed, "synth"));
    SynthOutput out;

    out.truth.directions = orthonormal_rows(rng, spec.prompts, spec.dim);
    const Tensor& u = out.truth.directions;

    // class templates: disjoint active sets plus a few activations shared by
    // every class
    if (spec.class_templates.empty()) {
        auto perm = rng.permutation(spec.prompts);
        out.truth.class_templates.assign(spec.classes, std::vector<double>(spec.prompts, 0.0));
        for (std::size_t c = 0; c < spec.classes; ++c) {
            for (std::size_t a = 0; a < spec.active_per_class; ++a) {
                out.truth.class_templates[c][perm[c * spec.active_per_class + a]] =
                    rng.uniform(spec.template_lo, spec.template_hi);
            }
        }
        for (std::size_t s = 0; s < spec.shared_active; ++s) {
            std::size_t idx = perm[spec.classes * spec.active_per_class + s];
            double w = rng.uniform(0.4, 0.7);
            for (std::size_t c = 0; c < spec.classes; ++c) out.truth.class_templates[c][idx] = w;
        }
    } else {
        out.truth.class_templates = spec.class_templates;
    }

    // prompts: latent directions plus a small offset
    Tensor au_prompts = u;
    for (auto& v : au_prompts.values()) v += spec.prompt_noise * rng.normal();
    quantize_to_f32(au_prompts);
    out.au_prompts.embeddings = au_prompts;
    out.au_prompts.kind = PromptKind::kAu;
    for (std::size_t i = 0; i < spec.prompts; ++i) {
        out.au_prompts.names.push_back("au_" + zero_pad(i + 1, 2));
    }

    // class-prompt ensemble for the swap experiment: noisy template mixtures,
    // cycling over classes
    Tensor cp = Tensor::zeros({spec.prompts, spec.dim});
    for (std::size_t i = 0; i < spec.prompts; ++i) {
        std::size_t c = i % spec.classes;
        std::vector<double> pattern = mix_pattern(u, out.truth.class_templates[c]);
        for (std::size_t k = 0; k < spec.dim; ++k) {
            cp.at(i, k) = pattern[k] + 0.3 * rng.normal();
        }
        out.class_prompts.names.push_back("cp_" + std::to_string(c) + "_" + zero_pad(i + 1, 2));
    }
    quantize_to_f32(cp);
    out.class_prompts.embeddings = cp;
    out.class_prompts.kind = PromptKind::kClassPromptEnsemble;

    out.manifest.dataset = "synth";
    out.manifest.dim = spec.dim;
    out.manifest.classes = spec.classes;
    out.manifest.root = out_dir;

    auto gen_videos = [&](Role role, std::size_t subject_count) {
        for (std::size_t s = 0; s < subject_count; ++s) {
            std::string sid = (role == Role::kSource ? "src" : "tgt") + zero_pad(s, 2);
            out.truth.subjects.push_back(sid);

            // subject shift: jitter on the active template weights
            auto weights = out.truth.class_templates;
            for (std::size_t c = 0; c < spec.classes; ++c) {
                for (std::size_t i = 0; i < spec.prompts; ++i) {
                    if (weights[c][i] != 0.0) {
                        weights[c][i] += spec.subject_perturb * rng.normal();
                    }
                }
            }
            out.truth.subject_weights.push_back(weights);

            double shift = role == Role::kTarget ? spec.target_shift : 0.0;
            for (std::size_t v = 0; v < spec.videos_per_subject; ++v) {
                std::size_t label = rng.below(spec.classes);
                std::size_t t = spec.t_min + rng.below(spec.t_max - spec.t_min + 1);

                double intensity =
                    rng.uniform(spec.intensity_lo,
                                std::max(spec.intensity_lo, spec.intensity_hi - 0.25 * shift));
                double conf_amp = spec.confound_strength * rng.uniform(0.7, 1.3) + 0.10 * shift;
                double tilt = rng.uniform(spec.confound_tilt - 0.1, spec.confound_tilt + 0.1) +
                              0.10 * shift;

                std::vector<double> peak = mix_pattern(u, weights[label]);
                std::size_t other = (label + 1) % spec.classes;
                std::vector<double> conf_w(spec.prompts);
                for (std::size_t i = 0; i < spec.prompts; ++i) {
                    conf_w[i] = tilt * weights[other][i] + (1.0 - tilt) * weights[label][i];
                }
                std::vector<double> conf = mix_pattern(u, conf_w);

                double t_peak = rng.uniform(0.35, 0.65) * static_cast<double>(t);
                double sig_peak = rng.uniform(2.5, 3.5);
                double edge[2] = {rng.uniform(0.0, 0.15) * static_cast<double>(t),
                                  rng.uniform(0.85, 1.0) * static_cast<double>(t)};
                double sig_edge[2] = {rng.uniform(6.0, 10.0), rng.uniform(6.0, 10.0)};

                Tensor frames = Tensor::zeros({t, spec.dim});
                for (std::size_t ti = 0; ti < t; ++ti) {
                    double x = static_cast<double>(ti);
                    double ep = std::exp(-0.5 * std::pow((x - t_peak) / sig_peak, 2.0));
                    double ec = std::exp(-0.5 * std::pow((x - edge[0]) / sig_edge[0], 2.0)) +
                                std::exp(-0.5 * std::pow((x - edge[1]) / sig_edge[1], 2.0));
                    double* row = frames.data() + ti * spec.dim;
                    for (std::size_t k = 0; k < spec.dim; ++k) {
                        row[k] = intensity * ep * peak[k] + conf_amp * ec * conf[k] +
                                 spec.noise * rng.normal();
                    }
                }
                quantize_to_f32(frames);

                std::string rel = "embeddings/" + sid + "_" + zero_pad(v, 3) + ".aue1";
                write_embeddings(frames, out_dir / rel);
                out.manifest.records.push_back(
                    ManifestRecord{sid, label, rel, t, role});
            }
        }
    };
    gen_videos(Role::kSource, spec.source_subjects);
    gen_videos(Role::kTarget, spec.target_subjects);

    write_manifest(out.manifest, out_dir / "manifest.jsonl");
    write_prompt_set(out.au_prompts, out_dir / "prompts_au.aue1");
    write_prompt_set(out.class_prompts, out_dir / "prompts_cp.aue1");
    write_ground_truth(out.truth, out_dir);
    return out;
}

void write_ground_truth(const GroundTruth& t, const std::filesystem::path& dir) {
    write_embeddings(t.directions, dir / "directions.aue1");
    json j;
    j["directions"] = "directions.aue1";
    j["class_templates"] = t.class_templates;
    json subjects = json::object();
    for (std::size_t i = 0; i < t.subjects.size(); ++i) {
        subjects[t.subjects[i]] = t.subject_weights[i];
    }
    j["subject_weights"] = subjects;
    atomic_write_file(dir / "ground_truth.json", j.dump(2) + "\n");
}

GroundTruth read_ground_truth(const std::filesystem::path& dir) {
    std::ifstream in(dir / "ground_truth.json");
    if (!in) throw IoError("cannot open ground truth in " + dir.string());
    json j;
    in >> j;
    GroundTruth t;
    t.directions = read_embeddings(dir / j.at("directions").get<std::string>());
    t.class_templates = j.at("class_templates").get<std::vector<std::vector<double>>>();
    for (const auto& [sid, w] : j.at("subject_weights").items()) {
        t.subjects.push_back(sid);
        t.subject_weights.push_back(w.get<std::vector<std::vector<double>>>());
    }
    return t;
}

} // namespace aupt
