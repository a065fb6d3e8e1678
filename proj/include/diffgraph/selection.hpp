#pragma once

// Expert Selection Agent: parse the user prompt, retrieve CKPT candidates by
// summary similarity and PEFT candidates per extracted attribute, then let
// the LLM filter finalize the merge set. Two stages on purpose: retrieval
// narrows the pool before the (token-limited, in the real system) filter.

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "diffgraph/embeddings.hpp"
#include "diffgraph/graph_store.hpp"
#include "diffgraph/llm.hpp"

namespace diffgraph {

struct SelectionResult {
    std::vector<std::string> ckpt; // >= 1, descending retrieval similarity
    std::vector<std::string> peft; // may be empty
    std::string summary;
    std::vector<std::string> attributes;

    std::vector<std::string> all_ids() const {
        std::vector<std::string> ids = ckpt;
        ids.insert(ids.end(), peft.begin(), peft.end());
        return ids;
    }
};

struct SelectionOptions {
    int k1 = 3;            // CKPT retrieval width
    int k2 = 3;            // PEFT retrieval width per attribute
    bool skip_filter = false; // retrieval-only variant (the "no-esa" ablation)
};

inline SelectionResult select_experts(const UniversalGraph& graph, const std::string& user_prompt,
                                      const LlmClient& llm, const Embedder& embedder,
                                      const SelectionOptions& opt = {}) {
    require(opt.k1 >= 1 && opt.k2 >= 1, errc::invalid_argument, "k1 and k2 must be >= 1");

    std::vector<std::pair<std::string, std::vector<float>>> ckpt_pool, peft_pool;
    for (const auto& e : graph.experts)
        (e.kind == ExpertKind::ckpt ? ckpt_pool : peft_pool).emplace_back(e.id, e.node_feature);
    require(!ckpt_pool.empty(), errc::no_ckpt_experts, "graph has no CKPT expert");

    ParsedNeeds needs;
    needs.summary = llm.summarize_prompt(user_prompt);
    needs.attributes = llm.extract_attributes(user_prompt);

    std::vector<ScoredId> ckpt_cands =
        top_k(embedder.embed(needs.summary), ckpt_pool, static_cast<std::size_t>(opt.k1));

    // per-attribute retrieval, deduplicated keeping the best similarity
    std::map<std::string, double> peft_best;
    if (!peft_pool.empty()) {
        for (const auto& attr : needs.attributes) {
            for (const auto& hit :
                 top_k(embedder.embed(attr), peft_pool, static_cast<std::size_t>(opt.k2))) {
                auto it = peft_best.find(hit.id);
                if (it == peft_best.end() || hit.similarity > it->second)
                    peft_best[hit.id] = hit.similarity;
            }
        }
    }
    std::vector<ScoredId> peft_cands;
    for (const auto& [id, sim] : peft_best) peft_cands.push_back({id, sim});
    std::sort(peft_cands.begin(), peft_cands.end(), [](const ScoredId& a, const ScoredId& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.id < b.id;
    });

    std::vector<std::string> kept_ids;
    if (opt.skip_filter) {
        for (const auto& c : ckpt_cands) kept_ids.push_back(c.id);
        for (const auto& c : peft_cands) kept_ids.push_back(c.id);
    } else {
        std::vector<ExpertBrief> briefs;
        for (const auto& c : ckpt_cands)
            briefs.push_back({c.id, ExpertKind::ckpt, graph.find_expert(c.id)->description});
        for (const auto& c : peft_cands)
            briefs.push_back({c.id, ExpertKind::peft, graph.find_expert(c.id)->description});
        kept_ids = llm.filter_experts(needs, briefs);
        // the filter may reorder or invent nothing: enforce subset semantics
        for (const auto& id : kept_ids)
            require(std::any_of(briefs.begin(), briefs.end(),
                                [&](const ExpertBrief& b) { return b.id == id; }),
                    errc::invalid_argument, "filter returned id outside candidates: " + id);
    }

    SelectionResult res;
    res.summary = needs.summary;
    res.attributes = needs.attributes;
    auto kept = [&](const std::string& id) {
        return std::find(kept_ids.begin(), kept_ids.end(), id) != kept_ids.end();
    };
    for (const auto& c : ckpt_cands)
        if (kept(c.id)) res.ckpt.push_back(c.id);
    for (const auto& c : peft_cands)
        if (kept(c.id)) res.peft.push_back(c.id);
    require(!res.ckpt.empty(), errc::filter_emptied_ckpt, "LLM filter removed every CKPT expert");
    return res;
}

} // namespace diffgraph
