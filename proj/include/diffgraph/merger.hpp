#pragma once

// Parameter merging: W = sum_i softmax(w_ckpt)_i W_i, dW = sum_j
// softmax(w_peft)_j up_j*down_j, merged = W + dW. Softmax is applied to the
// raw coefficients (which live in (0,1)); that compresses the effective
// weight range, as the formulation dictates.

#include <cmath>
#include <vector>

#include "diffgraph/graph_store.hpp"
#include "diffgraph/linalg.hpp"
#include "diffgraph/payload.hpp"

namespace diffgraph {

struct MergePlan {
    Vec w;          // per-expert coefficients, ckpt group first
    int n_ckpt = 0; // ckpt slice = [0, n_ckpt), peft slice = [n_ckpt, w.size())
    double log_prob = 0.0; // populated in training mode only

    int n_peft() const { return static_cast<int>(w.size()) - n_ckpt; }
};

struct MergedModel {
    Mat weight; // d_out x d_task
};

inline Vec softmax(const Vec& v) {
    require(v.size() > 0, errc::empty_input, "softmax of empty vector");
    require(all_finite(v), errc::non_finite_output, "softmax of non-finite vector");
    double m = v.maxCoeff();
    Vec e = (v.array() - m).exp();
    return e / e.sum();
}

inline MergedModel merge(const MergePlan& plan, const std::vector<CkptPayload>& ckpt_payloads,
                         const std::vector<PeftPayload>& peft_payloads) {
    require(plan.n_ckpt >= 1, errc::no_ckpt_selected, "merge needs at least one CKPT expert");
    require(plan.n_ckpt + static_cast<int>(peft_payloads.size()) == plan.w.size(),
            errc::slice_mismatch, "plan length != payload count");
    require(static_cast<int>(ckpt_payloads.size()) == plan.n_ckpt, errc::slice_mismatch,
            "ckpt payload count != ckpt slice");

    const Eigen::Index d_out = ckpt_payloads[0].weight.rows();
    const Eigen::Index d_task = ckpt_payloads[0].weight.cols();
    for (const auto& p : ckpt_payloads)
        require(p.weight.rows() == d_out && p.weight.cols() == d_task, errc::shape_mismatch,
                "ckpt payload shape mismatch");

    Vec w_ckpt = plan.w.head(plan.n_ckpt);
    Vec s_ckpt = softmax(w_ckpt);
    Mat merged = Mat::Zero(d_out, d_task);
    for (int i = 0; i < plan.n_ckpt; ++i) merged += s_ckpt[i] * ckpt_payloads[i].weight;

    if (!peft_payloads.empty()) {
        Vec s_peft = softmax(plan.w.tail(plan.n_peft()));
        for (std::size_t j = 0; j < peft_payloads.size(); ++j) {
            Mat delta = peft_payloads[j].materialize();
            require(delta.rows() == d_out && delta.cols() == d_task, errc::shape_mismatch,
                    "peft payload shape mismatch");
            merged += s_peft[static_cast<Eigen::Index>(j)] * delta;
        }
    }
    return MergedModel{std::move(merged)};
}

// Convenience: pull payloads out of an activated subgraph in node order.
inline MergedModel merge_subgraph(const MergePlan& plan, const Subgraph& sub) {
    std::vector<CkptPayload> ckpt;
    std::vector<PeftPayload> peft;
    for (const auto& rec : sub.selected) {
        if (rec.kind == ExpertKind::ckpt)
            ckpt.push_back(std::get<CkptPayload>(rec.payload));
        else
            peft.push_back(std::get<PeftPayload>(rec.payload));
    }
    require(static_cast<int>(ckpt.size()) == plan.n_ckpt, errc::slice_mismatch,
            "subgraph ckpt count != plan slice");
    return merge(plan, ckpt, peft);
}

} // namespace diffgraph
