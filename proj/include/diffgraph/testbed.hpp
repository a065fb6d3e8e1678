#pragma once

// Synthetic expert ecosystem and quality oracle. Generation is linear
// (y = W p), experts are noisy copies of per-cluster ideal weights and
// per-attribute ideal low-rank deltas, and the five metrics are
// exp(-|P_k (y - y*)| / tau) under five fixed random projections. Linearity
// keeps the coefficient oracle exhaustive, which is the whole point.
//
// Everything derives deterministically from the master seed; regenerating
// with the same spec is byte-identical.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "diffgraph/graph_store.hpp"
#include "diffgraph/linalg.hpp"
#include "diffgraph/llm.hpp"
#include "diffgraph/merger.hpp"
#include "diffgraph/persistence.hpp"
#include "diffgraph/registration.hpp"
#include "diffgraph/rng.hpp"

namespace diffgraph::testbed {

struct TestbedSpec {
    int d_task = 8;
    int d_out = 8;
    int n_clusters = 4;
    int n_attributes = 6;
    int peft_rank = 2;
    int proj_rows = 4; // q: rows of each metric projection
    double tau = 1.0;
    double noise_scale = 0.1;
    int n_ckpt_per_cluster = 2;
    int n_peft_per_attribute = 2;
    int n_distractors = 0;
    int max_prompt_attrs = 3;
    std::uint64_t master_seed = 42;
};

inline void to_json(ordered_json& j, const TestbedSpec& s) {
    j = ordered_json{{"d_task", s.d_task},
                     {"d_out", s.d_out},
                     {"n_clusters", s.n_clusters},
                     {"n_attributes", s.n_attributes},
                     {"peft_rank", s.peft_rank},
                     {"proj_rows", s.proj_rows},
                     {"tau", s.tau},
                     {"noise_scale", s.noise_scale},
                     {"n_ckpt_per_cluster", s.n_ckpt_per_cluster},
                     {"n_peft_per_attribute", s.n_peft_per_attribute},
                     {"n_distractors", s.n_distractors},
                     {"max_prompt_attrs", s.max_prompt_attrs},
                     {"master_seed", s.master_seed}};
}

inline void from_json(const ordered_json& j, TestbedSpec& s) {
    TestbedSpec def;
    s.d_task = j.value("d_task", def.d_task);
    s.d_out = j.value("d_out", def.d_out);
    s.n_clusters = j.value("n_clusters", def.n_clusters);
    s.n_attributes = j.value("n_attributes", def.n_attributes);
    s.peft_rank = j.value("peft_rank", def.peft_rank);
    s.proj_rows = j.value("proj_rows", def.proj_rows);
    s.tau = j.value("tau", def.tau);
    s.noise_scale = j.value("noise_scale", def.noise_scale);
    s.n_ckpt_per_cluster = j.value("n_ckpt_per_cluster", def.n_ckpt_per_cluster);
    s.n_peft_per_attribute = j.value("n_peft_per_attribute", def.n_peft_per_attribute);
    s.n_distractors = j.value("n_distractors", def.n_distractors);
    s.max_prompt_attrs = j.value("max_prompt_attrs", def.max_prompt_attrs);
    s.master_seed = j.value("master_seed", def.master_seed);
}

inline void write_testbed_spec(const std::filesystem::path& path, const TestbedSpec& s) {
    ordered_json j;
    to_json(j, s);
    write_file_bytes(path, j.dump(2) + "\n");
}

inline TestbedSpec read_testbed_spec(const std::filesystem::path& path) {
    try {
        ordered_json j = ordered_json::parse(read_file_bytes(path));
        TestbedSpec s;
        from_json(j, s);
        return s;
    } catch (const json::exception& e) {
        fail(errc::io_failure, std::string("bad testbed spec: ") + e.what());
    }
}

// Word tables are chosen so that, at the default d_node = 32, no cluster,
// attribute, or grammar keyword shares a hash bucket with another one or with
// any homepage-template word (asserted in the test suite). Retrieval quality
// at desk scale depends on that separation.
inline std::string cluster_word(int k) {
    static const char* words[] = {"forest", "portrait", "city", "desert"};
    if (k >= 0 && k < 4) return words[k];
    return "zone" + std::to_string(k);
}

inline std::string attribute_word(int a) {
    static const char* words[] = {"neon", "fog", "grain", "frost", "ember", "dusk"};
    if (a >= 0 && a < 6) return words[a];
    return "trait" + std::to_string(a);
}

inline std::string copy_word(int c) {
    static const char* words[] = {"polished", "soft", "gloss", "tone", "blend", "sheen"};
    return words[c % 6];
}

inline std::string fake_subject_word(int i) {
    static const char* words[] = {"bog", "reef", "wreck"};
    return words[i % 3];
}

// splitmix64-style mixer for order-independent substream seeds
inline std::uint64_t sub_seed(std::uint64_t master, std::string_view tag, std::uint64_t a = 0,
                              std::uint64_t b = 0) {
    std::uint64_t x = master ^ fnv1a64(tag);
    x += (a + 1) * 0x9e3779b97f4a7c15ull;
    x += (b + 1) * 0xbf58476d1ce4e5b9ull;
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

// Ground truth derived from the spec: base model, per-cluster ideals,
// per-attribute ideal deltas, metric projections.
struct TestbedTruth {
    Mat base;                       // d_out x d_task
    std::vector<Mat> cluster_ideal; // n_clusters of d_out x d_task
    std::vector<PeftPayload> attribute_ideal;
    std::vector<Mat> projections; // 5 of proj_rows x d_out
};

inline TestbedTruth make_truth(const TestbedSpec& spec) {
    TestbedTruth t;
    const double wscale = 1.0 / std::sqrt(double(spec.d_task));
    {
        Rng r(sub_seed(spec.master_seed, "base"));
        t.base = random_matrix(spec.d_out, spec.d_task, r, wscale);
    }
    for (int k = 0; k < spec.n_clusters; ++k) {
        Rng r(sub_seed(spec.master_seed, "cluster", static_cast<std::uint64_t>(k)));
        t.cluster_ideal.push_back(random_matrix(spec.d_out, spec.d_task, r, wscale));
    }
    for (int a = 0; a < spec.n_attributes; ++a) {
        Rng r(sub_seed(spec.master_seed, "delta", static_cast<std::uint64_t>(a)));
        PeftPayload p;
        p.up = random_matrix(spec.d_out, spec.peft_rank, r, 0.5 / std::sqrt(double(spec.peft_rank)));
        p.down = random_matrix(spec.peft_rank, spec.d_task, r, wscale);
        t.attribute_ideal.push_back(std::move(p));
    }
    for (int m = 0; m < kEdgeDim; ++m) {
        Rng r(sub_seed(spec.master_seed, "proj", static_cast<std::uint64_t>(m)));
        t.projections.push_back(random_orthonormal_rows(spec.proj_rows, spec.d_out, r));
    }
    return t;
}

// A user or reference prompt. The feature vector is a pure function of the
// prompt text, so a corpus line is self-contained.
struct SyntheticPrompt {
    std::string text;
    Vec feature; // unit norm, length d_task
    int cluster = -1;
    std::vector<int> attribute_ids;
};

inline SyntheticPrompt prompt_from_text(const TestbedSpec& spec, const std::string& text) {
    ParsedNeeds parsed = stub_parse(text);
    SyntheticPrompt p;
    p.text = text;
    require(parsed.summary.rfind("subject:", 0) == 0, errc::invalid_argument,
            "prompt does not match the testbed grammar: " + text);
    std::string subject = parsed.summary.substr(8);
    for (int k = 0; k < spec.n_clusters; ++k)
        if (cluster_word(k) == subject) p.cluster = k;
    require(p.cluster >= 0, errc::invalid_argument, "unknown subject token: " + subject);
    for (const auto& attr : parsed.attributes) {
        int found = -1;
        for (int a = 0; a < spec.n_attributes; ++a)
            if (attribute_word(a) == attr) found = a;
        require(found >= 0, errc::invalid_argument, "unknown attribute token: " + attr);
        p.attribute_ids.push_back(found);
    }
    Rng r(sub_seed(spec.master_seed, "prompt-feature", fnv1a64(text)));
    p.feature = Vec(spec.d_task);
    for (int i = 0; i < spec.d_task; ++i) p.feature[i] = r.normal();
    double n = p.feature.norm();
    if (n < 1e-12) p.feature[0] = 1.0, n = 1.0;
    p.feature /= n;
    return p;
}

inline Vec generate(const MergedModel& merged, const SyntheticPrompt& prompt) {
    require(merged.weight.cols() == prompt.feature.size(), errc::shape_mismatch,
            "merged model and prompt feature disagree");
    return merged.weight * prompt.feature;
}

inline Vec target(const TestbedSpec& spec, const TestbedTruth& truth,
                  const SyntheticPrompt& prompt) {
    require(prompt.cluster >= 0 && prompt.cluster < spec.n_clusters, errc::invalid_argument,
            "prompt cluster out of range");
    Mat w = truth.cluster_ideal[prompt.cluster];
    for (int a : prompt.attribute_ids) w += truth.attribute_ideal[a].materialize();
    return w * prompt.feature;
}

// Five metrics in (0,1]; the scalar reward is their mean.
class QualityScorer {
public:
    QualityScorer(TestbedSpec spec, TestbedTruth truth)
        : spec_(std::move(spec)), truth_(std::move(truth)) {}

    explicit QualityScorer(const TestbedSpec& spec) : QualityScorer(spec, make_truth(spec)) {}

    Vec score(const Vec& output, const SyntheticPrompt& prompt) const {
        Vec ystar = target(spec_, truth_, prompt);
        require(output.size() == ystar.size(), errc::shape_mismatch, "output length mismatch");
        Vec metrics(kEdgeDim);
        for (int m = 0; m < kEdgeDim; ++m)
            metrics[m] = std::exp(-(truth_.projections[m] * (output - ystar)).norm() / spec_.tau);
        return metrics;
    }

    double scalar(const Vec& output, const SyntheticPrompt& prompt) const {
        return score(output, prompt).mean();
    }

    const TestbedSpec& spec() const { return spec_; }
    const TestbedTruth& truth() const { return truth_; }

private:
    TestbedSpec spec_;
    TestbedTruth truth_;
};

// ---------------------------------------------------------------------------
// Ecosystem construction.
//
// Epoch semantics: 2023 emits CKPT experts for every cluster plus PEFT
// experts for the first half of the attributes (plus any distractors); 2025
// emits PEFT experts for the remaining attributes; any other tag emits
// everything. Expert content depends only on (spec, role indices), never on
// the epoch tag, so epoch unions match the full ecosystem.
//
// Copies alternate a quality multiplier on the noise scale (polished vs
// sloppy releases); node calibration is what reveals it.

inline double quality_multiplier(int copy) { return copy % 2 == 0 ? 0.5 : 1.8; }

inline ExpertSource make_ckpt_source(const TestbedSpec& spec, const TestbedTruth& truth, int k,
                                     int copy, int epoch_tag) {
    const std::string cw = cluster_word(k);
    ExpertSource s;
    s.id = "ckpt-" + cw + "-v" + std::to_string(copy + 1);
    s.kind = ExpertKind::ckpt;
    s.homepage_text = "High quality base for subject:" + cw + ". Tuned " + cw +
                      " style with rich texture and " + copy_word(copy) + " sheen.";
    Rng r(sub_seed(spec.master_seed, "ckpt-noise", static_cast<std::uint64_t>(k),
                   static_cast<std::uint64_t>(copy)));
    const double sigma =
        spec.noise_scale * quality_multiplier(copy) / std::sqrt(double(spec.d_task));
    s.payload = CkptPayload{truth.cluster_ideal[k] +
                            random_matrix(spec.d_out, spec.d_task, r, sigma)};
    s.version = copy + 1;
    s.registered_at = epoch_tag;
    return s;
}

inline ExpertSource make_peft_source(const TestbedSpec& spec, const TestbedTruth& truth, int a,
                                     int copy, int epoch_tag) {
    const std::string aw = attribute_word(a);
    ExpertSource s;
    s.id = "peft-" + aw + "-v" + std::to_string(copy + 1);
    s.kind = ExpertKind::peft;
    s.homepage_text = "Lora adapter for attr:" + aw + " control. Delivers " + aw +
                      " style touch with " + copy_word(copy) + " gloss.";
    Rng r(sub_seed(spec.master_seed, "peft-noise", static_cast<std::uint64_t>(a),
                   static_cast<std::uint64_t>(copy)));
    const double mult = spec.noise_scale * quality_multiplier(copy);
    const PeftPayload& ideal = truth.attribute_ideal[a];
    PeftPayload p;
    p.up = ideal.up + random_matrix(spec.d_out, spec.peft_rank, r,
                                    mult * 0.5 / std::sqrt(double(spec.peft_rank)));
    p.down = ideal.down +
             random_matrix(spec.peft_rank, spec.d_task, r, mult / std::sqrt(double(spec.d_task)));
    s.payload = std::move(p);
    s.version = copy + 1;
    s.registered_at = epoch_tag;
    return s;
}

// Bait experts: word overlap with a real cluster/attribute, skill token and
// payload pointing nowhere. Retrieval likes them; the filter must not.
inline ExpertSource make_distractor_source(const TestbedSpec& spec, int i, int epoch_tag) {
    ExpertSource s;
    s.id = "distractor-" + std::to_string(i);
    s.registered_at = epoch_tag;
    s.version = 1;
    Rng r(sub_seed(spec.master_seed, "distractor", static_cast<std::uint64_t>(i)));
    const std::string fake = fake_subject_word(i);
    // the bait words must sit in the first sentence: that is all the expert
    // summary keeps
    if (i % 2 == 0) {
        const std::string bait = cluster_word(i / 2 % spec.n_clusters);
        s.kind = ExpertKind::ckpt;
        s.homepage_text = "Rich " + bait + " " + bait + " style base for subject:" + fake +
                          " with high quality texture.";
        s.payload = CkptPayload{
            random_matrix(spec.d_out, spec.d_task, r, 1.0 / std::sqrt(double(spec.d_task)))};
    } else {
        const std::string bait = attribute_word(i / 2 % spec.n_attributes);
        s.kind = ExpertKind::peft;
        s.homepage_text = "Soft " + bait + " " + bait + " style lora adapter for attr:" + fake +
                          " control.";
        PeftPayload p;
        p.up = random_matrix(spec.d_out, spec.peft_rank, r,
                             0.5 / std::sqrt(double(spec.peft_rank)));
        p.down = random_matrix(spec.peft_rank, spec.d_task, r, 1.0 / std::sqrt(double(spec.d_task)));
        s.payload = std::move(p);
    }
    return s;
}

inline std::vector<ExpertSource> build_ecosystem(const TestbedSpec& spec, int n_ckpt_per_cluster,
                                                 int n_peft_per_attribute, int epoch_tag) {
    require(n_ckpt_per_cluster >= 1 && n_peft_per_attribute >= 1, errc::invalid_argument,
            "ecosystem counts must be >= 1");
    TestbedTruth truth = make_truth(spec);
    std::vector<ExpertSource> out;
    const int half = spec.n_attributes / 2;
    int attr_lo = 0, attr_hi = spec.n_attributes;
    bool emit_ckpt = true, emit_distractors = true;
    if (epoch_tag == 2023) {
        attr_hi = half;
    } else if (epoch_tag == 2025) {
        attr_lo = half;
        emit_ckpt = false;
        emit_distractors = false;
    }
    if (emit_ckpt)
        for (int k = 0; k < spec.n_clusters; ++k)
            for (int c = 0; c < n_ckpt_per_cluster; ++c)
                out.push_back(make_ckpt_source(spec, truth, k, c, epoch_tag));
    for (int a = attr_lo; a < attr_hi; ++a)
        for (int c = 0; c < n_peft_per_attribute; ++c)
            out.push_back(make_peft_source(spec, truth, a, c, epoch_tag));
    if (emit_distractors)
        for (int i = 0; i < spec.n_distractors; ++i)
            out.push_back(make_distractor_source(spec, i, epoch_tag));
    return out;
}

inline std::vector<ExpertSource> standard_ecosystem(const TestbedSpec& spec) {
    return build_ecosystem(spec, spec.n_ckpt_per_cluster, spec.n_peft_per_attribute, 0);
}

// CalibrationBench backed by the testbed: the lone expert generates for the
// reference prompt (PEFT applied on the base model) and the scorer grades it.
class TestbedBench final : public CalibrationBench {
public:
    explicit TestbedBench(const QualityScorer& scorer) : scorer_(scorer) {}

    std::vector<float> evaluate(const ExpertPayload& payload,
                                const std::string& ref_prompt_text) override {
        const TestbedSpec& spec = scorer_.spec();
        SyntheticPrompt prompt = prompt_from_text(spec, ref_prompt_text);
        Mat w;
        if (payload_kind(payload) == ExpertKind::ckpt) {
            w = std::get<CkptPayload>(payload).weight;
        } else {
            const auto& p = std::get<PeftPayload>(payload);
            require(p.up.rows() == spec.d_out && p.down.cols() == spec.d_task,
                    errc::payload_mismatch, "peft payload does not fit the testbed");
            w = scorer_.truth().base + p.materialize();
        }
        require(w.rows() == spec.d_out && w.cols() == spec.d_task, errc::payload_mismatch,
                "payload does not fit the testbed");
        ++generation_calls_;
        Vec y = w * prompt.feature;
        Vec m = scorer_.score(y, prompt);
        std::vector<float> out(kEdgeDim);
        for (int i = 0; i < kEdgeDim; ++i) out[i] = static_cast<float>(m[i]);
        return out;
    }

    long generation_calls() const override { return generation_calls_; }

private:
    const QualityScorer& scorer_;
    long generation_calls_ = 0;
};

// ---------------------------------------------------------------------------
// Prompt corpus: every (cluster, attribute subset up to max_prompt_attrs)
// combination, in every attribute order. Attribute order changes the text
// (and therefore the prompt feature) but not the parse semantics, which is
// how the corpus gets enough distinct prompts for disjoint splits.

inline std::vector<std::string> enumerate_prompts(const TestbedSpec& spec) {
    std::vector<std::string> out;
    std::vector<int> ids(spec.n_attributes);
    for (int a = 0; a < spec.n_attributes; ++a) ids[a] = a;
    for (int k = 0; k < spec.n_clusters; ++k) {
        const std::string head = "subject:" + cluster_word(k);
        out.push_back(head);
        int max_sz = std::min(spec.max_prompt_attrs, spec.n_attributes);
        for (int sz = 1; sz <= max_sz; ++sz) {
            std::vector<int> comb(sz);
            for (int i = 0; i < sz; ++i) comb[i] = i;
            for (;;) {
                std::vector<int> perm = comb;
                std::sort(perm.begin(), perm.end());
                do {
                    std::string text = head + "; attrs:";
                    for (std::size_t i = 0; i < perm.size(); ++i) {
                        if (i) text += ",";
                        text += attribute_word(perm[i]);
                    }
                    out.push_back(text);
                } while (std::next_permutation(perm.begin(), perm.end()));
                // next combination
                int i = sz - 1;
                while (i >= 0 && comb[i] == spec.n_attributes - sz + i) --i;
                if (i < 0) break;
                ++comb[i];
                for (int j = i + 1; j < sz; ++j) comb[j] = comb[j - 1] + 1;
            }
        }
    }
    return out;
}

struct PromptSplits {
    std::vector<std::string> reference_candidates;
    std::vector<std::string> train;
    std::vector<std::string> heldout;
};

inline PromptSplits make_prompt_splits(const TestbedSpec& spec, std::size_t n_ref_candidates,
                                       std::size_t n_train, std::size_t n_heldout) {
    std::vector<std::string> all = enumerate_prompts(spec);
    require(n_ref_candidates + n_train + n_heldout <= all.size(), errc::insufficient_candidates,
            "corpus too small for requested splits");
    Rng r(sub_seed(spec.master_seed, "corpus"));
    r.shuffle(all);
    PromptSplits s;
    auto it = all.begin();
    s.reference_candidates.assign(it, it + static_cast<std::ptrdiff_t>(n_ref_candidates));
    it += static_cast<std::ptrdiff_t>(n_ref_candidates);
    s.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
    it += static_cast<std::ptrdiff_t>(n_train);
    s.heldout.assign(it, it + static_cast<std::ptrdiff_t>(n_heldout));
    return s;
}

// prompts that need at least one attribute from the 2025-only half
inline bool needs_new_epoch_skills(const TestbedSpec& spec, const SyntheticPrompt& p) {
    const int half = spec.n_attributes / 2;
    return std::any_of(p.attribute_ids.begin(), p.attribute_ids.end(),
                       [&](int a) { return a >= half; });
}

inline bool uses_only_old_epoch_skills(const TestbedSpec& spec, const SyntheticPrompt& p) {
    const int half = spec.n_attributes / 2;
    return std::all_of(p.attribute_ids.begin(), p.attribute_ids.end(),
                       [&](int a) { return a < half; });
}

// ---------------------------------------------------------------------------
// Coefficient oracle: brute force over pre-softmax coefficient vectors.
// Exhaustive grid {-2,-1.5,...,2} per free entry (first entry of each group
// pinned at 0, softmax shift invariance) when the expert count allows it,
// otherwise seeded random search.

struct OracleResult {
    Vec w;
    double reward = 0.0;
};

inline OracleResult oracle_coefficients(const Subgraph& sub, const SyntheticPrompt& prompt,
                                        const QualityScorer& scorer, int resolution = 9,
                                        int random_samples = 10000) {
    const int m = sub.n_ckpt;
    const int n = sub.n_peft();
    const int total = m + n;
    require(total >= 1 && m >= 1, errc::no_ckpt_selected, "oracle needs a non-empty selection");

    OracleResult best;
    best.w = Vec::Zero(total);
    best.reward = -1.0;
    auto consider = [&](const Vec& w) {
        MergePlan plan;
        plan.w = w;
        plan.n_ckpt = m;
        double reward = scorer.scalar(generate(merge_subgraph(plan, sub), prompt), prompt);
        if (reward > best.reward) {
            best.reward = reward;
            best.w = w;
        }
    };

    if (total <= 4) {
        // free entries: all but the first of each group
        std::vector<int> free_idx;
        for (int i = 1; i < m; ++i) free_idx.push_back(i);
        for (int j = m + 1; j < total; ++j) free_idx.push_back(j);
        const int nf = static_cast<int>(free_idx.size());
        std::vector<int> counter(nf, 0);
        for (;;) {
            Vec w = Vec::Zero(total);
            for (int i = 0; i < nf; ++i)
                w[free_idx[i]] = -2.0 + 4.0 * counter[i] / double(resolution - 1);
            consider(w);
            int i = nf - 1;
            while (i >= 0 && counter[i] == resolution - 1) counter[i--] = 0;
            if (i < 0) break;
            ++counter[i];
        }
    } else {
        Rng r(sub_seed(scorer.spec().master_seed, "oracle", fnv1a64(prompt.text)));
        for (int s = 0; s < random_samples; ++s) {
            Vec w(total);
            for (int i = 0; i < total; ++i) w[i] = r.uniform(-2.0, 2.0);
            consider(w);
        }
    }
    return best;
}

} // namespace diffgraph::testbed
