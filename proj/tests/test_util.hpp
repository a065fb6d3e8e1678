#pragma once

// Shared builders for the unit suite: tiny graphs with hand-set features and
// a scratch-directory guard.

#include <filesystem>
#include <string>
#include <vector>

#include "diffgraph/graph_store.hpp"
#include "diffgraph/rng.hpp"

namespace dgtest {

using namespace diffgraph;

// unit vector along one axis
inline std::vector<float> axis_feature(int dim, int axis) {
    std::vector<float> v(dim, 0.0f);
    v[axis % dim] = 1.0f;
    return v;
}

inline std::vector<float> random_unit_feature(int dim, Rng& rng) {
    std::vector<float> v(dim);
    double n = 0.0;
    for (auto& x : v) {
        x = static_cast<float>(rng.normal());
        n += double(x) * x;
    }
    n = std::sqrt(n);
    for (auto& x : v) x = static_cast<float>(x / n);
    return v;
}

inline ExpertRecord make_expert(const std::string& id, ExpertKind kind, int d_node, int axis,
                                Rng& rng, int d_out = 4, int d_task = 4, int rank = 2) {
    ExpertRecord rec;
    rec.id = id;
    rec.kind = kind;
    rec.description = "expert " + id;
    rec.node_feature = axis_feature(d_node, axis);
    if (kind == ExpertKind::ckpt) {
        rec.payload = CkptPayload{random_matrix(d_out, d_task, rng)};
    } else {
        rec.payload = PeftPayload{random_matrix(d_out, rank, rng), random_matrix(rank, d_task, rng)};
    }
    return rec;
}

inline std::vector<CalibrationEdge> uniform_edges(const UniversalGraph& g, const std::string& id,
                                                  float score) {
    std::vector<CalibrationEdge> edges;
    for (const auto& ref : g.ref_prompts)
        edges.push_back({id, ref.id, std::vector<float>(kEdgeDim, score)});
    return edges;
}

// graph with n_experts alternating ckpt/peft (first is ckpt) and n_refs
// reference prompts; all features axis-aligned, scores pseudo-random in [0,1]
inline UniversalGraph tiny_graph(int n_experts, int n_refs, int d_node = 8,
                                 std::uint64_t seed = 99) {
    Rng rng(seed);
    UniversalGraph g;
    g.d_node = d_node;
    for (int j = 0; j < n_refs; ++j) {
        ReferencePrompt r;
        r.id = "ref" + std::to_string(j);
        r.text = "ref prompt " + std::to_string(j);
        r.node_feature = axis_feature(d_node, j + 1);
        g.ref_prompts.push_back(r);
    }
    for (int i = 0; i < n_experts; ++i) {
        ExpertKind kind = i % 2 == 0 ? ExpertKind::ckpt : ExpertKind::peft;
        ExpertRecord rec = make_expert("exp" + std::to_string(i), kind, d_node, i, rng);
        std::vector<CalibrationEdge> edges;
        for (const auto& ref : g.ref_prompts)
            edges.push_back({rec.id, ref.id,
                             {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                              static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                              static_cast<float>(rng.uniform())}});
        insert_expert(g, rec, edges);
    }
    return g;
}

class ScratchDir {
public:
    explicit ScratchDir(const std::string& name) {
        path_ = std::filesystem::temp_directory_path() /
                ("diffgraph-test-" + name + "-" + std::to_string(::getpid()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace dgtest
