#pragma once

// VGAE Merging Planner. Encoder: two two-layer GCNs (mean and log-variance)
// over the activated subgraph, normalized adjacency D^{-1/2}(A+I)D^{-1/2}
// whose expert-reference weights come from a learned projection of the
// 5-metric calibration scores through softplus. Decoder: per-expert FFN on
// [h_p, h_exp_i] emitting (a_i, b_i), re-parameterized to a uni-modal
// Beta(1+e^a, 1+e^b). Training samples w_i ~ Beta; inference uses the mean
// alpha/(alpha+beta).
//
// The backward pass is hand-derived over this fixed computation graph
// (including the degree-normalization term of the adjacency); the
// finite-difference harness in the test suite checks every weight.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "diffgraph/graph_store.hpp"
#include "diffgraph/linalg.hpp"
#include "diffgraph/merger.hpp"
#include "diffgraph/persistence.hpp"
#include "diffgraph/rng.hpp"

namespace diffgraph {

constexpr int kVgaeFormatVersion = 1;
constexpr double kExpClamp = 30.0; // a_i, b_i are clamped here before exp

struct VgaeDims {
    int d_node = 32;
    int d_edge = kEdgeDim;
    int d_h1 = 64;
    int d_h = 32;
    int d_ffn = 64;
};

struct GcnParams {
    Mat w1; // d_node x d_h1
    Mat w2; // d_h1 x d_h
};

struct DecoderParams {
    Mat w1; // 2*d_h x d_ffn
    Vec b1; // d_ffn
    Mat w2; // d_ffn x 2
    Vec b2; // 2
};

struct VgaeParams {
    VgaeDims dims;
    GcnParams gcn_mu;
    GcnParams gcn_sigma;
    Vec edge_proj; // d_edge
    DecoderParams dec;
};

struct TensorRef {
    const char* name;
    double* data;
    Eigen::Index size;
};

// Fixed tensor order; serialization and the optimizer both rely on it.
inline std::vector<TensorRef> tensor_refs(VgaeParams& p) {
    return {
        {"gcn_mu.w1", p.gcn_mu.w1.data(), p.gcn_mu.w1.size()},
        {"gcn_mu.w2", p.gcn_mu.w2.data(), p.gcn_mu.w2.size()},
        {"gcn_sigma.w1", p.gcn_sigma.w1.data(), p.gcn_sigma.w1.size()},
        {"gcn_sigma.w2", p.gcn_sigma.w2.data(), p.gcn_sigma.w2.size()},
        {"edge_proj", p.edge_proj.data(), p.edge_proj.size()},
        {"dec.w1", p.dec.w1.data(), p.dec.w1.size()},
        {"dec.b1", p.dec.b1.data(), p.dec.b1.size()},
        {"dec.w2", p.dec.w2.data(), p.dec.w2.size()},
        {"dec.b2", p.dec.b2.data(), p.dec.b2.size()},
    };
}

inline VgaeParams zero_params(const VgaeDims& dims) {
    VgaeParams p;
    p.dims = dims;
    p.gcn_mu.w1 = Mat::Zero(dims.d_node, dims.d_h1);
    p.gcn_mu.w2 = Mat::Zero(dims.d_h1, dims.d_h);
    p.gcn_sigma.w1 = Mat::Zero(dims.d_node, dims.d_h1);
    p.gcn_sigma.w2 = Mat::Zero(dims.d_h1, dims.d_h);
    p.edge_proj = Vec::Zero(dims.d_edge);
    p.dec.w1 = Mat::Zero(2 * dims.d_h, dims.d_ffn);
    p.dec.b1 = Vec::Zero(dims.d_ffn);
    p.dec.w2 = Mat::Zero(dims.d_ffn, 2);
    p.dec.b2 = Vec::Zero(2);
    return p;
}

// Xavier-uniform GCN and decoder hidden layer; decoder output layer and
// edge_proj start at zero, so the initial policy is Beta(2,2) everywhere
// (exactly the equal-weight merge in expectation).
inline VgaeParams init_params(const VgaeDims& dims, std::uint64_t seed) {
    VgaeParams p = zero_params(dims);
    Rng rng(seed);
    auto xavier = [&](Mat& m) {
        double s = std::sqrt(6.0 / double(m.rows() + m.cols()));
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-s, s);
    };
    xavier(p.gcn_mu.w1);
    xavier(p.gcn_mu.w2);
    xavier(p.gcn_sigma.w1);
    xavier(p.gcn_sigma.w2);
    xavier(p.dec.w1);
    return p;
}

inline void check_param_shapes(const VgaeParams& p) {
    const auto& d = p.dims;
    require(p.gcn_mu.w1.rows() == d.d_node && p.gcn_mu.w1.cols() == d.d_h1 &&
                p.gcn_mu.w2.rows() == d.d_h1 && p.gcn_mu.w2.cols() == d.d_h &&
                p.gcn_sigma.w1.rows() == d.d_node && p.gcn_sigma.w1.cols() == d.d_h1 &&
                p.gcn_sigma.w2.rows() == d.d_h1 && p.gcn_sigma.w2.cols() == d.d_h &&
                p.edge_proj.size() == d.d_edge && p.dec.w1.rows() == 2 * d.d_h &&
                p.dec.w1.cols() == d.d_ffn && p.dec.b1.size() == d.d_ffn &&
                p.dec.w2.rows() == d.d_ffn && p.dec.w2.cols() == 2 && p.dec.b2.size() == 2,
            errc::dimension_mismatch, "VGAE parameter shapes inconsistent with dims");
}

// ---------------------------------------------------------------------------
// Adjacency

struct AdjacencyTrace {
    Mat a_hat;  // normalized, n x n
    Mat m;      // A + I
    Vec degree; // row sums of m
    struct CalibEdge {
        int row, col;
        double t; // edge_proj . scores
    };
    std::vector<CalibEdge> calib; // aligned with Subgraph.edges order
};

inline AdjacencyTrace build_adjacency_trace(const Subgraph& sub, const Vec& edge_proj) {
    require(edge_proj.size() == kEdgeDim, errc::dimension_mismatch, "edge_proj length != d_edge");
    const int n_exp = sub.n_selected();
    const int n_ref = static_cast<int>(sub.ref_prompts.size());
    const int n = 1 + n_exp + n_ref;

    AdjacencyTrace tr;
    Mat a = Mat::Zero(n, n);
    for (int i = 0; i < n_exp; ++i) {
        double w = sub.prompt_edges[i];
        a(0, 1 + i) = w;
        a(1 + i, 0) = w;
    }
    require(sub.edges.size() == static_cast<std::size_t>(n_exp) * n_ref,
            errc::incomplete_calibration, "subgraph edge block incomplete");
    tr.calib.reserve(sub.edges.size());
    for (int i = 0; i < n_exp; ++i) {
        for (int j = 0; j < n_ref; ++j) {
            const auto& scores = sub.edges[static_cast<std::size_t>(i) * n_ref + j].scores;
            require(scores.size() == kEdgeDim, errc::dimension_mismatch, "edge score length");
            double t = 0.0;
            for (int k = 0; k < kEdgeDim; ++k) t += edge_proj[k] * scores[k];
            double w = softplus(t);
            int row = 1 + i;
            int col = 1 + n_exp + j;
            a(row, col) = w;
            a(col, row) = w;
            tr.calib.push_back({row, col, t});
        }
    }
    tr.m = a + Mat::Identity(n, n);
    tr.degree = tr.m.rowwise().sum();
    Vec r = tr.degree.array().rsqrt();
    tr.a_hat = tr.m.array() * (r * r.transpose()).array();
    return tr;
}

inline Mat build_adjacency(const Subgraph& sub, const Vec& edge_proj) {
    return build_adjacency_trace(sub, edge_proj).a_hat;
}

// ---------------------------------------------------------------------------
// Forward

struct BetaParams {
    Vec alpha;
    Vec beta;
};

inline double log_beta_pdf(double w, double alpha, double beta) {
    require(w > 0.0 && w < 1.0, errc::invalid_argument, "beta pdf support is (0,1)");
    return (alpha - 1.0) * std::log(w) + (beta - 1.0) * std::log1p(-w) +
           std::lgamma(alpha + beta) - std::lgamma(alpha) - std::lgamma(beta);
}

struct EncodedSubgraph {
    Mat mu;        // (1 + n_exp) x d_h, row 0 = user prompt node
    Mat log_sigma; // same shape
    Mat h;         // sampled or mean latents
    Mat noise;     // the Gaussian draws used (empty in Mean mode)
};

namespace detail {

struct GcnTrace {
    Mat p1;   // A_hat X
    Mat pre1; // p1 W1
    Mat t;    // relu(pre1)
    Mat p2;   // A_hat t
    Mat out;  // p2 W2
};

inline GcnTrace gcn_forward(const Mat& a_hat, const Mat& x, const GcnParams& g) {
    GcnTrace tr;
    tr.p1 = a_hat * x;
    tr.pre1 = tr.p1 * g.w1;
    tr.t = tr.pre1.cwiseMax(0.0);
    tr.p2 = a_hat * tr.t;
    tr.out = tr.p2 * g.w2;
    return tr;
}

} // namespace detail

struct PlanTrace {
    AdjacencyTrace adj;
    Mat x; // n x d_node node features: prompt, experts, ref prompts
    detail::GcnTrace mu_net, sigma_net;
    Mat mu, log_sigma; // kept rows (1 + n_exp) x d_h
    Mat eps;           // kept rows; zero in Mean mode
    Mat h;             // kept rows
    bool sampled = false;
    // decoder
    Mat z;       // n_exp x 2*d_h
    Mat hid_pre; // n_exp x d_ffn
    Mat hid;     // tanh(hid_pre)
    Mat ab;      // n_exp x 2
    Vec alpha, beta;
    Vec w;       // coefficients
    Vec log_pdf; // per expert, Train mode
    double log_prob = 0.0;
    double kl = 0.0; // KL(q || N(0, I)) over kept rows
};

inline Mat stack_node_features(const Subgraph& sub, int d_node) {
    const int n_exp = sub.n_selected();
    const int n_ref = static_cast<int>(sub.ref_prompts.size());
    Mat x(1 + n_exp + n_ref, d_node);
    auto fill_row = [&](int row, const std::vector<float>& v) {
        require(v.size() == static_cast<std::size_t>(d_node), errc::dimension_mismatch,
                "node feature length != d_node");
        for (int j = 0; j < d_node; ++j) x(row, j) = v[j];
    };
    fill_row(0, sub.user_prompt_feature);
    for (int i = 0; i < n_exp; ++i) fill_row(1 + i, sub.selected[i].node_feature);
    for (int j = 0; j < n_ref; ++j) fill_row(1 + n_exp + j, sub.ref_prompts[j].node_feature);
    return x;
}

// Full forward pass. sample_seed: nullopt => Mean mode (infer), otherwise the
// latents use seeded Gaussian noise and w is sampled from the Beta heads.
inline PlanTrace plan_forward(const Subgraph& sub, const VgaeParams& params,
                              std::optional<std::uint64_t> sample_seed) {
    check_param_shapes(params);
    const int n_exp = sub.n_selected();
    require(n_exp >= 1, errc::no_ckpt_selected, "empty subgraph");
    const int d_h = params.dims.d_h;

    PlanTrace tr;
    tr.adj = build_adjacency_trace(sub, params.edge_proj);
    tr.x = stack_node_features(sub, params.dims.d_node);
    tr.mu_net = detail::gcn_forward(tr.adj.a_hat, tr.x, params.gcn_mu);
    tr.sigma_net = detail::gcn_forward(tr.adj.a_hat, tr.x, params.gcn_sigma);

    const int kept = 1 + n_exp;
    tr.mu = tr.mu_net.out.topRows(kept);
    tr.log_sigma = tr.sigma_net.out.topRows(kept);
    require(all_finite(tr.mu) && all_finite(tr.log_sigma), errc::non_finite_output,
            "encoder produced non-finite output");

    tr.sampled = sample_seed.has_value();
    tr.eps = Mat::Zero(kept, d_h);
    Rng rng(sample_seed.value_or(0));
    if (tr.sampled) {
        for (int i = 0; i < kept; ++i)
            for (int j = 0; j < d_h; ++j) tr.eps(i, j) = rng.normal();
        tr.h = tr.mu + (tr.log_sigma.array().exp() * tr.eps.array()).matrix();
    } else {
        tr.h = tr.mu;
    }

    Mat sigma2 = tr.log_sigma.array().exp().square().matrix();
    tr.kl = 0.5 * (tr.mu.array().square() + sigma2.array() - 1.0 -
                   2.0 * tr.log_sigma.array())
                      .sum();

    tr.z.resize(n_exp, 2 * d_h);
    for (int i = 0; i < n_exp; ++i) {
        tr.z.row(i).head(d_h) = tr.h.row(0);
        tr.z.row(i).tail(d_h) = tr.h.row(1 + i);
    }
    tr.hid_pre = (tr.z * params.dec.w1).rowwise() + params.dec.b1.transpose();
    tr.hid = tr.hid_pre.array().tanh().matrix();
    tr.ab = (tr.hid * params.dec.w2).rowwise() + params.dec.b2.transpose();
    require(all_finite(tr.ab), errc::non_finite_output, "decoder produced non-finite output");

    tr.alpha.resize(n_exp);
    tr.beta.resize(n_exp);
    tr.w.resize(n_exp);
    tr.log_pdf = Vec::Zero(n_exp);
    for (int i = 0; i < n_exp; ++i) {
        tr.alpha[i] = 1.0 + std::exp(std::min(tr.ab(i, 0), kExpClamp));
        tr.beta[i] = 1.0 + std::exp(std::min(tr.ab(i, 1), kExpClamp));
        if (tr.sampled) {
            tr.w[i] = rng.beta(tr.alpha[i], tr.beta[i]);
        } else {
            tr.w[i] = tr.alpha[i] / (tr.alpha[i] + tr.beta[i]);
        }
    }
    if (tr.sampled) {
        for (int i = 0; i < n_exp; ++i)
            tr.log_pdf[i] = log_beta_pdf(tr.w[i], tr.alpha[i], tr.beta[i]);
        tr.log_prob = tr.log_pdf.sum();
    }
    return tr;
}

// Spec-level operations in terms of the full forward.

struct SampleMode {
    std::uint64_t seed = 0;
};
struct MeanMode {};

inline EncodedSubgraph encode(const Subgraph& sub, const VgaeParams& params, SampleMode mode) {
    PlanTrace tr = plan_forward(sub, params, mode.seed);
    return {tr.mu, tr.log_sigma, tr.h, tr.eps};
}

inline EncodedSubgraph encode(const Subgraph& sub, const VgaeParams& params, MeanMode) {
    PlanTrace tr = plan_forward(sub, params, std::nullopt);
    return {tr.mu, tr.log_sigma, tr.h, Mat()};
}

inline BetaParams decode(const EncodedSubgraph& enc, const VgaeParams& params) {
    const int n_exp = static_cast<int>(enc.h.rows()) - 1;
    require(n_exp >= 1, errc::invalid_argument, "encoded subgraph lacks expert rows");
    const int d_h = params.dims.d_h;
    require(enc.h.cols() == d_h, errc::dimension_mismatch, "latent width != d_h");
    BetaParams out;
    out.alpha.resize(n_exp);
    out.beta.resize(n_exp);
    for (int i = 0; i < n_exp; ++i) {
        Vec z(2 * d_h);
        z.head(d_h) = enc.h.row(0);
        z.tail(d_h) = enc.h.row(1 + i);
        Vec hid = ((params.dec.w1.transpose() * z) + params.dec.b1).array().tanh();
        Vec ab = params.dec.w2.transpose() * hid + params.dec.b2;
        require(all_finite(ab), errc::non_finite_output, "decoder produced non-finite output");
        out.alpha[i] = 1.0 + std::exp(std::min(ab[0], kExpClamp));
        out.beta[i] = 1.0 + std::exp(std::min(ab[1], kExpClamp));
    }
    return out;
}

struct TrainPlanMode {
    std::uint64_t seed = 0;
};
struct InferPlanMode {};

inline MergePlan plan(const Subgraph& sub, const VgaeParams& params, TrainPlanMode mode) {
    PlanTrace tr = plan_forward(sub, params, mode.seed);
    MergePlan p;
    p.w = tr.w;
    p.n_ckpt = sub.n_ckpt;
    p.log_prob = tr.log_prob;
    return p;
}

inline MergePlan plan(const Subgraph& sub, const VgaeParams& params, InferPlanMode) {
    PlanTrace tr = plan_forward(sub, params, std::nullopt);
    MergePlan p;
    p.w = tr.w;
    p.n_ckpt = sub.n_ckpt;
    p.log_prob = 0.0;
    return p;
}

// ---------------------------------------------------------------------------
// Backward

struct VgaeGrads {
    GcnParams gcn_mu;
    GcnParams gcn_sigma;
    Vec edge_proj;
    DecoderParams dec;
};

inline VgaeGrads zero_grads(const VgaeDims& dims) {
    VgaeParams z = zero_params(dims);
    return {z.gcn_mu, z.gcn_sigma, z.edge_proj, z.dec};
}

inline std::vector<TensorRef> tensor_refs(VgaeGrads& g) {
    return {
        {"gcn_mu.w1", g.gcn_mu.w1.data(), g.gcn_mu.w1.size()},
        {"gcn_mu.w2", g.gcn_mu.w2.data(), g.gcn_mu.w2.size()},
        {"gcn_sigma.w1", g.gcn_sigma.w1.data(), g.gcn_sigma.w1.size()},
        {"gcn_sigma.w2", g.gcn_sigma.w2.data(), g.gcn_sigma.w2.size()},
        {"edge_proj", g.edge_proj.data(), g.edge_proj.size()},
        {"dec.w1", g.dec.w1.data(), g.dec.w1.size()},
        {"dec.b1", g.dec.b1.data(), g.dec.b1.size()},
        {"dec.w2", g.dec.w2.data(), g.dec.w2.size()},
        {"dec.b2", g.dec.b2.data(), g.dec.b2.size()},
    };
}

namespace detail {

// dL/dA_hat -> edge_proj gradient, through M = A + I and the degree terms
inline void adjacency_backward(const AdjacencyTrace& adj, const Subgraph& sub, const Mat& ghat,
                               Vec& edge_proj_grad) {
    const Eigen::Index n = adj.m.rows();
    Vec r = adj.degree.array().rsqrt(); // d^{-1/2}
    Vec u = Vec::Zero(n), v = Vec::Zero(n);
    for (Eigen::Index k = 0; k < n; ++k)
        for (Eigen::Index j = 0; j < n; ++j) {
            double gm = ghat(k, j) * adj.m(k, j);
            u[k] += gm * r[j];
            v[j] += gm * r[k];
        }
    auto dM = [&](int k, int l) {
        return ghat(k, l) * r[k] * r[l] - 0.5 * u[k] * r[k] * r[k] * r[k] -
               0.5 * v[l] * r[l] * r[l] * r[l];
    };
    for (std::size_t e = 0; e < adj.calib.size(); ++e) {
        const auto& ce = adj.calib[e];
        double dw = dM(ce.row, ce.col) + dM(ce.col, ce.row);
        double dt = dw * sigmoid(ce.t);
        const auto& scores = sub.edges[e].scores;
        for (int k = 0; k < kEdgeDim; ++k) edge_proj_grad[k] += dt * scores[k];
    }
}

// returns dL/dA_hat contribution of one GCN given dL/dout
inline Mat gcn_backward(const GcnTrace& tr, const Mat& a_hat, const Mat& x, const GcnParams& g,
                        const Mat& dout, GcnParams& grad) {
    grad.w2 += tr.p2.transpose() * dout;
    Mat dp2 = dout * g.w2.transpose();
    Mat ghat = dp2 * tr.t.transpose();
    Mat dt = a_hat.transpose() * dp2;
    Mat dpre1 = (tr.pre1.array() > 0.0).cast<double>() * dt.array();
    grad.w1 += tr.p1.transpose() * dpre1;
    Mat dp1 = dpre1 * g.w1.transpose();
    ghat += dp1 * x.transpose();
    return ghat;
}

} // namespace detail

// Gradient of scale * log_prob + kl_weight * KL with respect to every
// parameter, for one traced sample (Train mode; the Gaussian noise and the
// Beta draws in the trace are treated as frozen). The caller picks
// scale = -(u - baseline)/B to get the REINFORCE loss gradient.
inline void plan_backward(const Subgraph& sub, const VgaeParams& params, const PlanTrace& tr,
                          double scale, double kl_weight, VgaeGrads& grads) {
    require(tr.sampled, errc::invalid_argument, "backward requires a Train-mode trace");
    const int n_exp = sub.n_selected();
    const int d_h = params.dims.d_h;
    const int kept = 1 + n_exp;
    const Eigen::Index n = tr.adj.m.rows();

    // d(log pdf)/d(alpha,beta), then through alpha = 1 + e^{min(a, clamp)}
    Mat dab = Mat::Zero(n_exp, 2);
    for (int i = 0; i < n_exp; ++i) {
        double a = tr.alpha[i], b = tr.beta[i];
        double dig_ab = digamma(a + b);
        double dlp_da = std::log(tr.w[i]) - digamma(a) + dig_ab;
        double dlp_db = std::log1p(-tr.w[i]) - digamma(b) + dig_ab;
        double da_draw = tr.ab(i, 0) <= kExpClamp ? std::exp(tr.ab(i, 0)) : 0.0;
        double db_draw = tr.ab(i, 1) <= kExpClamp ? std::exp(tr.ab(i, 1)) : 0.0;
        dab(i, 0) = scale * dlp_da * da_draw;
        dab(i, 1) = scale * dlp_db * db_draw;
    }

    // decoder FFN
    grads.dec.w2 += tr.hid.transpose() * dab;
    grads.dec.b2 += dab.colwise().sum().transpose();
    Mat dhid = dab * params.dec.w2.transpose();
    Mat dhid_pre = (1.0 - tr.hid.array().square()) * dhid.array();
    grads.dec.w1 += tr.z.transpose() * dhid_pre;
    grads.dec.b1 += dhid_pre.colwise().sum().transpose();
    Mat dz = dhid_pre * params.dec.w1.transpose();

    Mat dh = Mat::Zero(kept, d_h);
    for (int i = 0; i < n_exp; ++i) {
        dh.row(0) += dz.row(i).head(d_h);
        dh.row(1 + i) += dz.row(i).tail(d_h);
    }

    // reparameterized latent + optional KL prior term
    Mat sigma = tr.log_sigma.array().exp().matrix();
    Mat dmu = dh;
    Mat dlogsig = (dh.array() * tr.eps.array() * sigma.array()).matrix();
    if (kl_weight != 0.0) {
        dmu += kl_weight * tr.mu;
        dlogsig += (kl_weight * (sigma.array().square() - 1.0)).matrix();
    }

    Mat gmu_full = Mat::Zero(n, d_h);
    gmu_full.topRows(kept) = dmu;
    Mat gsig_full = Mat::Zero(n, d_h);
    gsig_full.topRows(kept) = dlogsig;

    Mat ghat = detail::gcn_backward(tr.mu_net, tr.adj.a_hat, tr.x, params.gcn_mu, gmu_full,
                                    grads.gcn_mu);
    ghat += detail::gcn_backward(tr.sigma_net, tr.adj.a_hat, tr.x, params.gcn_sigma, gsig_full,
                                 grads.gcn_sigma);
    detail::adjacency_backward(tr.adj, sub, ghat, grads.edge_proj);
}

// Re-evaluates scale-able pieces with frozen randomness: the log-probability
// of the given w under the parameters' Beta heads, with latents rebuilt from
// the given noise. This is the scalar the finite-difference harness probes.
struct FrozenEval {
    double log_prob = 0.0;
    double kl = 0.0;
};

inline FrozenEval eval_frozen(const Subgraph& sub, const VgaeParams& params, const Mat& eps,
                              const Vec& w) {
    check_param_shapes(params);
    const int n_exp = sub.n_selected();
    const int d_h = params.dims.d_h;
    const int kept = 1 + n_exp;
    require(eps.rows() == kept && eps.cols() == d_h, errc::dimension_mismatch,
            "noise shape mismatch");
    require(w.size() == n_exp, errc::dimension_mismatch, "w length mismatch");

    AdjacencyTrace adj = build_adjacency_trace(sub, params.edge_proj);
    Mat x = stack_node_features(sub, params.dims.d_node);
    detail::GcnTrace mu_net = detail::gcn_forward(adj.a_hat, x, params.gcn_mu);
    detail::GcnTrace sig_net = detail::gcn_forward(adj.a_hat, x, params.gcn_sigma);
    Mat mu = mu_net.out.topRows(kept);
    Mat log_sigma = sig_net.out.topRows(kept);
    Mat h = mu + (log_sigma.array().exp() * eps.array()).matrix();

    FrozenEval out;
    out.kl = 0.5 * (mu.array().square() + log_sigma.array().exp().square() - 1.0 -
                    2.0 * log_sigma.array())
                       .sum();
    for (int i = 0; i < n_exp; ++i) {
        Vec z(2 * d_h);
        z.head(d_h) = h.row(0);
        z.tail(d_h) = h.row(1 + i);
        Vec hid = ((params.dec.w1.transpose() * z) + params.dec.b1).array().tanh();
        Vec ab = params.dec.w2.transpose() * hid + params.dec.b2;
        double alpha = 1.0 + std::exp(std::min(ab[0], kExpClamp));
        double beta = 1.0 + std::exp(std::min(ab[1], kExpClamp));
        out.log_prob += log_beta_pdf(w[i], alpha, beta);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization: one-line JSON header (dims + body sha256) followed by the
// tensors as raw little-endian f32 in tensor_refs order.

inline void write_vgae(const std::filesystem::path& path, const VgaeParams& params) {
    check_param_shapes(params);
    VgaeParams copy = params;
    std::vector<float> floats;
    for (const auto& t : tensor_refs(copy))
        for (Eigen::Index i = 0; i < t.size; ++i) floats.push_back(static_cast<float>(t.data[i]));
    ordered_json header;
    header["format_version"] = kVgaeFormatVersion;
    header["d_node"] = params.dims.d_node;
    header["d_edge"] = params.dims.d_edge;
    header["d_h1"] = params.dims.d_h1;
    header["d_h"] = params.dims.d_h;
    header["d_ffn"] = params.dims.d_ffn;
    write_header_blob(path, std::move(header), floats_to_le_bytes(floats));
}

inline VgaeParams read_vgae(const std::filesystem::path& path) {
    HeaderBlob blob = read_header_blob(path);
    require(blob.header.at("format_version").get<int>() == kVgaeFormatVersion,
            errc::format_version_mismatch, "vgae file format version mismatch");
    VgaeDims dims;
    dims.d_node = blob.header.at("d_node").get<int>();
    dims.d_edge = blob.header.at("d_edge").get<int>();
    dims.d_h1 = blob.header.at("d_h1").get<int>();
    dims.d_h = blob.header.at("d_h").get<int>();
    dims.d_ffn = blob.header.at("d_ffn").get<int>();
    VgaeParams params = zero_params(dims);
    std::vector<float> floats = le_bytes_to_floats(blob.body);
    std::size_t pos = 0;
    for (const auto& t : tensor_refs(params)) {
        require(pos + static_cast<std::size_t>(t.size) <= floats.size(),
                errc::dimension_mismatch, "vgae body too short");
        for (Eigen::Index i = 0; i < t.size; ++i) t.data[i] = floats[pos++];
    }
    require(pos == floats.size(), errc::dimension_mismatch, "vgae body too long");
    return params;
}

} // namespace diffgraph
