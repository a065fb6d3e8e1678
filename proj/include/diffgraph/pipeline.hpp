#pragma once

// One place that wires select -> activate -> plan -> merge -> generate ->
// score, including the degraded variants used by the ablation protocols.
// Everything is deterministic given (graph, params, prompt, seeds).

#include <optional>
#include <string>
#include <vector>

#include "diffgraph/embeddings.hpp"
#include "diffgraph/graph_store.hpp"
#include "diffgraph/llm.hpp"
#include "diffgraph/merger.hpp"
#include "diffgraph/planner.hpp"
#include "diffgraph/selection.hpp"
#include "diffgraph/testbed.hpp"

namespace diffgraph {

enum class Ablation {
    none,
    equal_weights,     // w/o MP: merge with equal weights
    random_weights,    // random merging coefficients
    no_calibration,    // zero edge features in the activated subgraph
    no_registration,   // zero expert node features (and prompt affinities)
    no_esa,            // retrieval only, no LLM filter
    random_activation, // random expert selection instead of ESA
};

inline const char* ablation_name(Ablation a) {
    switch (a) {
        case Ablation::none: return "none";
        case Ablation::equal_weights: return "equal";
        case Ablation::random_weights: return "random";
        case Ablation::no_calibration: return "no-calibration";
        case Ablation::no_registration: return "no-registration";
        case Ablation::no_esa: return "no-esa";
        case Ablation::random_activation: return "random-activation";
    }
    return "none";
}

inline Ablation ablation_from_name(const std::string& s) {
    for (Ablation a : {Ablation::none, Ablation::equal_weights, Ablation::random_weights,
                       Ablation::no_calibration, Ablation::no_registration, Ablation::no_esa,
                       Ablation::random_activation})
        if (s == ablation_name(a)) return a;
    fail(errc::invalid_argument, "unknown ablation variant: " + s);
}

struct Pipeline {
    const UniversalGraph* graph = nullptr;
    const LlmClient* llm = nullptr;
    const Embedder* embedder = nullptr;
    const testbed::QualityScorer* scorer = nullptr;
    SelectionOptions selection;
    Ablation ablation = Ablation::none;
    std::uint64_t variant_seed = 0; // seeds random-coefficient / random-activation draws
    int random_ckpt = 2;            // cardinality of random-activation picks
    int random_peft = 3;
};

struct PreparedPrompt {
    testbed::SyntheticPrompt prompt;
    SelectionResult selection;
    Subgraph sub;
};

namespace detail {

inline SelectionResult random_activation_select(const Pipeline& pl, const std::string& text) {
    std::vector<std::string> ckpt_ids, peft_ids;
    for (const auto& e : pl.graph->experts)
        (e.kind == ExpertKind::ckpt ? ckpt_ids : peft_ids).push_back(e.id);
    require(!ckpt_ids.empty(), errc::no_ckpt_experts, "graph has no CKPT expert");
    Rng rng(testbed::sub_seed(pl.variant_seed, "random-activation", fnv1a64(text)));
    auto pick = [&](std::vector<std::string> pool, int want) {
        rng.shuffle(pool);
        if (static_cast<int>(pool.size()) > want) pool.resize(want);
        return pool;
    };
    SelectionResult sel;
    sel.ckpt = pick(ckpt_ids, std::max(1, pl.random_ckpt));
    sel.peft = pick(peft_ids, std::max(0, pl.random_peft));
    sel.summary = text;
    return sel;
}

inline void apply_subgraph_ablation(const Pipeline& pl, Subgraph& sub) {
    if (pl.ablation == Ablation::no_calibration) {
        for (auto& e : sub.edges) std::fill(e.scores.begin(), e.scores.end(), 0.0f);
    } else if (pl.ablation == Ablation::no_registration) {
        for (auto& rec : sub.selected)
            std::fill(rec.node_feature.begin(), rec.node_feature.end(), 0.0f);
        std::fill(sub.prompt_edges.begin(), sub.prompt_edges.end(), 0.0f);
    }
}

} // namespace detail

inline PreparedPrompt prepare_prompt(const Pipeline& pl, const std::string& text) {
    require(pl.graph && pl.llm && pl.embedder && pl.scorer, errc::invalid_argument,
            "pipeline is not fully wired");
    PreparedPrompt out;
    out.prompt = testbed::prompt_from_text(pl.scorer->spec(), text);
    if (pl.ablation == Ablation::random_activation) {
        out.selection = detail::random_activation_select(pl, text);
    } else {
        SelectionOptions opt = pl.selection;
        opt.skip_filter = opt.skip_filter || pl.ablation == Ablation::no_esa;
        out.selection = select_experts(*pl.graph, text, *pl.llm, *pl.embedder, opt);
    }
    out.sub = activate_subgraph(*pl.graph, out.selection.all_ids(), pl.embedder->embed(text));
    detail::apply_subgraph_ablation(pl, out.sub);
    return out;
}

struct RolloutResult {
    SelectionResult selection;
    MergePlan plan;
    Vec metrics; // the 5 testbed metrics
    double reward = 0.0;
};

inline MergePlan ablation_plan(const Pipeline& pl, const PreparedPrompt& prep) {
    MergePlan plan;
    plan.n_ckpt = prep.sub.n_ckpt;
    plan.w = Vec::Constant(prep.sub.n_selected(), 0.5);
    if (pl.ablation == Ablation::random_weights) {
        Rng rng(testbed::sub_seed(pl.variant_seed, "random-coeff", fnv1a64(prep.prompt.text)));
        for (Eigen::Index i = 0; i < plan.w.size(); ++i) plan.w[i] = rng.uniform();
    }
    return plan;
}

inline RolloutResult score_plan(const Pipeline& pl, const PreparedPrompt& prep,
                                MergePlan plan) {
    RolloutResult out;
    out.selection = prep.selection;
    MergedModel merged = merge_subgraph(plan, prep.sub);
    Vec y = testbed::generate(merged, prep.prompt);
    out.metrics = pl.scorer->score(y, prep.prompt);
    out.reward = out.metrics.mean();
    out.plan = std::move(plan);
    return out;
}

// Full inference-mode rollout for one prompt.
inline RolloutResult run_infer(const Pipeline& pl, const VgaeParams& params,
                               const std::string& text) {
    PreparedPrompt prep = prepare_prompt(pl, text);
    MergePlan plan;
    if (pl.ablation == Ablation::equal_weights || pl.ablation == Ablation::random_weights)
        plan = ablation_plan(pl, prep);
    else
        plan = diffgraph::plan(prep.sub, params, InferPlanMode{});
    return score_plan(pl, prep, std::move(plan));
}

} // namespace diffgraph
