#pragma once

// Policy-gradient training of the VGAE. The generation/score path is a black
// box that only supplies the scalar reward; gradients flow through the Beta
// log-density and the reparameterized Gaussian latents (score-function
// estimator with a batch-mean baseline by default). One AdamW step per batch.

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "diffgraph/pipeline.hpp"
#include "diffgraph/planner.hpp"
#include "diffgraph/rng.hpp"

namespace diffgraph {

enum class BaselineKind { none, batch_mean };

struct TrainConfig {
    int batch_size = 8;
    int epochs = 60;
    int max_steps = 0; // 0: run all epochs
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double weight_decay = 1e-4;
    BaselineKind baseline = BaselineKind::batch_mean;
    double kl_weight = 0.0;
    std::uint64_t seed = 0;
    // Gradient estimator form. The score-function (log-derivative) reading is
    // the default; the literal form weights each sample by P(w) as well and
    // is kept only for comparison.
    bool literal_grad_form = false;
};

struct TrainSample {
    std::string prompt;
    double reward = 0.0;
    double log_prob = 0.0;
};

struct TrainStepReport {
    double mean_reward = 0.0;
    double grad_norm = 0.0;
    std::vector<TrainSample> samples;
};

struct AdamWState {
    std::vector<Vec> m, v;
    long t = 0;
};

inline AdamWState make_adamw_state(VgaeParams& params) {
    AdamWState st;
    for (const auto& ref : tensor_refs(params)) {
        st.m.push_back(Vec::Zero(ref.size));
        st.v.push_back(Vec::Zero(ref.size));
    }
    return st;
}

inline void adamw_step(VgaeParams& params, VgaeGrads& grads, AdamWState& st,
                       const TrainConfig& cfg) {
    constexpr double eps = 1e-8;
    ++st.t;
    auto prefs = tensor_refs(params);
    auto grefs = tensor_refs(grads);
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(st.t));
    for (std::size_t k = 0; k < prefs.size(); ++k) {
        double* p = prefs[k].data;
        const double* g = grefs[k].data;
        Vec& m = st.m[k];
        Vec& v = st.v[k];
        for (Eigen::Index i = 0; i < prefs[k].size; ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + eps) + cfg.weight_decay * p[i]);
        }
    }
}

// One policy-gradient step over the given prompt batch. Throws
// NonFiniteGradient (leaving params untouched) if any gradient blows up.
inline TrainStepReport train_step(VgaeParams& params, const Pipeline& pipeline,
                                  const std::vector<std::string>& prompt_batch,
                                  const TrainConfig& cfg, AdamWState& opt_state, Rng& rng) {
    require(!prompt_batch.empty(), errc::empty_input, "empty training batch");
    const int B = static_cast<int>(prompt_batch.size());

    struct Rollout {
        PreparedPrompt prep;
        PlanTrace trace;
        double reward = 0.0;
    };
    std::vector<Rollout> rollouts;
    rollouts.reserve(B);
    TrainStepReport report;
    for (const auto& text : prompt_batch) {
        Rollout r;
        r.prep = prepare_prompt(pipeline, text);
        r.trace = plan_forward(r.prep.sub, params, rng.next_u64());
        MergePlan plan;
        plan.w = r.trace.w;
        plan.n_ckpt = r.prep.sub.n_ckpt;
        RolloutResult res = score_plan(pipeline, r.prep, std::move(plan));
        r.reward = res.reward;
        report.samples.push_back({text, r.reward, r.trace.log_prob});
        report.mean_reward += r.reward / B;
        rollouts.push_back(std::move(r));
    }

    double baseline = cfg.baseline == BaselineKind::batch_mean ? report.mean_reward : 0.0;
    VgaeGrads grads = zero_grads(params.dims);
    for (const auto& r : rollouts) {
        double scale;
        if (cfg.literal_grad_form) {
            // d/dtheta of -(1/B) sum u_b P(w_b); P = exp(log_prob), clamped
            scale = -r.reward * std::exp(std::min(r.trace.log_prob, 30.0)) / B;
        } else {
            scale = -(r.reward - baseline) / B;
        }
        plan_backward(r.prep.sub, params, r.trace, scale, cfg.kl_weight / B, grads);
    }

    double norm2 = 0.0;
    for (const auto& ref : tensor_refs(grads)) {
        for (Eigen::Index i = 0; i < ref.size; ++i) {
            require(std::isfinite(ref.data[i]), errc::non_finite_gradient,
                    std::string("non-finite gradient in ") + ref.name);
            norm2 += ref.data[i] * ref.data[i];
        }
    }
    report.grad_norm = std::sqrt(norm2);
    adamw_step(params, grads, opt_state, cfg);
    return report;
}

struct TrainResult {
    int steps = 0;
    double first_mean_reward = 0.0;
    double last_mean_reward = 0.0;
};

// Epoch loop: shuffle the training prompts (sampling without replacement per
// epoch), slice batches, step. Writes one JSON line per step when a log sink
// is given.
inline TrainResult train(VgaeParams& params, const Pipeline& pipeline,
                         const std::vector<std::string>& train_prompts, const TrainConfig& cfg,
                         std::ostream* log = nullptr) {
    require(!train_prompts.empty(), errc::empty_input, "no training prompts");
    require(cfg.batch_size >= 1 && cfg.lr > 0.0, errc::invalid_argument, "bad train config");
    Rng rng(cfg.seed);
    AdamWState opt_state = make_adamw_state(params);
    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::string> order = train_prompts;
        rng.shuffle(order);
        for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
            std::vector<std::string> batch(
                order.begin() + static_cast<std::ptrdiff_t>(off),
                order.begin() + static_cast<std::ptrdiff_t>(
                                    std::min(off + cfg.batch_size, order.size())));
            TrainStepReport rep = train_step(params, pipeline, batch, cfg, opt_state, rng);
            ++result.steps;
            if (result.steps == 1) result.first_mean_reward = rep.mean_reward;
            result.last_mean_reward = rep.mean_reward;
            if (log) {
                ordered_json line;
                line["step"] = result.steps;
                line["mean_reward"] = rep.mean_reward;
                line["grad_norm"] = rep.grad_norm;
                line["lr"] = cfg.lr;
                *log << line.dump() << "\n";
            }
            if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) return result;
        }
    }
    return result;
}

struct EvalRow {
    std::string prompt;
    double reward = 0.0;
    Vec metrics;
};

struct EvalSummary {
    double mean_reward = 0.0;
    Vec metric_means;
    std::vector<EvalRow> rows;
};

// Infer-mode evaluation over a prompt list; aggregates the 5 testbed metrics
// and the scalar reward.
inline EvalSummary evaluate(const VgaeParams& params, const Pipeline& pipeline,
                            const std::vector<std::string>& prompts) {
    EvalSummary out;
    out.metric_means = Vec::Zero(kEdgeDim);
    if (prompts.empty()) return out;
    for (const auto& text : prompts) {
        RolloutResult r = run_infer(pipeline, params, text);
        out.rows.push_back({text, r.reward, r.metrics});
        out.mean_reward += r.reward;
        out.metric_means += r.metrics;
    }
    out.mean_reward /= double(prompts.size());
    out.metric_means /= double(prompts.size());
    return out;
}

} // namespace diffgraph
