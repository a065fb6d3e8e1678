#pragma once

// Graph Construction Agent: node registration (describe + embed an expert)
// and node calibration (score the lone expert on every reference prompt).
// Both are training-free; insertion never rescales or rewrites existing
// features.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "diffgraph/embeddings.hpp"
#include "diffgraph/graph_store.hpp"
#include "diffgraph/llm.hpp"

namespace diffgraph {

struct ExpertSource {
    std::string id;
    ExpertKind kind = ExpertKind::ckpt;
    std::string homepage_text;
    ExpertPayload payload;
    int version = 1;
    int registered_at = 0;
};

struct CalibrationReport {
    std::string expert_id;
    std::vector<std::vector<float>> rows; // one 5-vector per reference prompt
    double wall_time = 0.0;               // seconds
};

// Evaluates a single expert alone on one reference prompt; returns the
// 5-metric vector. generation_calls() exposes an instrumentation counter so
// tests can assert the O(N_r) insertion cost.
class CalibrationBench {
public:
    virtual ~CalibrationBench() = default;
    virtual std::vector<float> evaluate(const ExpertPayload& payload,
                                        const std::string& ref_prompt_text) = 0;
    virtual long generation_calls() const = 0;
};

inline ExpertRecord register_node(const ExpertSource& source, const LlmClient& llm,
                                  const Embedder& embedder) {
    require(!source.homepage_text.empty(), errc::invalid_argument, "homepage text is empty");
    ExpertRecord rec;
    rec.id = source.id;
    rec.kind = source.kind;
    rec.description = llm.summarize_expert(source.homepage_text);
    rec.node_feature = embedder.embed(rec.description);
    rec.payload = source.payload;
    rec.version = source.version;
    rec.registered_at = source.registered_at;
    return rec;
}

inline std::vector<CalibrationEdge> calibrate_node(const ExpertRecord& record,
                                                   const std::vector<ReferencePrompt>& ref_prompts,
                                                   CalibrationBench& bench) {
    std::vector<CalibrationEdge> edges;
    edges.reserve(ref_prompts.size());
    for (const auto& ref : ref_prompts) {
        std::vector<float> scores = bench.evaluate(record.payload, ref.text);
        require(scores.size() == kEdgeDim, errc::dimension_mismatch,
                "scorer returned wrong metric count");
        for (float& s : scores) s = std::clamp(s, 0.0f, 1.0f);
        edges.push_back({record.id, ref.id, std::move(scores)});
    }
    return edges;
}

// register + calibrate + insert, timed; the whole training-free insertion path.
inline CalibrationReport add_expert(UniversalGraph& graph, const ExpertSource& source,
                                    const LlmClient& llm, const Embedder& embedder,
                                    CalibrationBench& bench) {
    auto t0 = std::chrono::steady_clock::now();
    ExpertRecord rec = register_node(source, llm, embedder);
    std::vector<CalibrationEdge> edges = calibrate_node(rec, graph.ref_prompts, bench);
    CalibrationReport report;
    report.expert_id = rec.id;
    for (const auto& e : edges) report.rows.push_back(e.scores);
    insert_expert(graph, std::move(rec), std::move(edges));
    report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// Farthest-point sampling in embedding space. Seeded at the candidate nearest
// the corpus centroid, then greedily maximizing the minimum distance to the
// chosen set. Ties resolve to the lexicographically smaller text.
inline std::vector<ReferencePrompt> select_reference_prompts(
    const std::vector<std::string>& candidate_prompts, std::size_t count,
    const Embedder& embedder) {
    require(count <= candidate_prompts.size(), errc::insufficient_candidates,
            "requested more reference prompts than candidates");
    const std::size_t n = candidate_prompts.size();
    std::vector<std::vector<float>> embs(n);
    for (std::size_t i = 0; i < n; ++i) embs[i] = embedder.embed(candidate_prompts[i]);

    const int d = embedder.dim();
    std::vector<double> centroid(d, 0.0);
    for (const auto& e : embs)
        for (int k = 0; k < d; ++k) centroid[k] += e[k];
    for (double& c : centroid) c /= std::max<std::size_t>(n, 1);

    auto dist2_to_centroid = [&](std::size_t i) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) {
            double diff = embs[i][k] - centroid[k];
            s += diff * diff;
        }
        return s;
    };
    auto dist2 = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) {
            double diff = double(embs[i][k]) - embs[j][k];
            s += diff * diff;
        }
        return s;
    };

    std::vector<std::size_t> chosen;
    std::vector<bool> taken(n, false);
    std::vector<double> min_dist2(n, 0.0);
    if (count > 0) {
        std::size_t best = 0;
        double best_d = dist2_to_centroid(0);
        for (std::size_t i = 1; i < n; ++i) {
            double di = dist2_to_centroid(i);
            if (di < best_d ||
                (di == best_d && candidate_prompts[i] < candidate_prompts[best])) {
                best = i;
                best_d = di;
            }
        }
        chosen.push_back(best);
        taken[best] = true;
        for (std::size_t i = 0; i < n; ++i) min_dist2[i] = dist2(i, best);
    }
    while (chosen.size() < count) {
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            if (best == n || min_dist2[i] > min_dist2[best] ||
                (min_dist2[i] == min_dist2[best] &&
                 candidate_prompts[i] < candidate_prompts[best]))
                best = i;
        }
        chosen.push_back(best);
        taken[best] = true;
        for (std::size_t i = 0; i < n; ++i) min_dist2[i] = std::min(min_dist2[i], dist2(i, best));
    }

    std::vector<ReferencePrompt> out;
    out.reserve(chosen.size());
    for (std::size_t k = 0; k < chosen.size(); ++k) {
        ReferencePrompt r;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "ref-%03zu", k);
        r.id = buf;
        r.text = candidate_prompts[chosen[k]];
        r.node_feature = embs[chosen[k]];
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace diffgraph
