#pragma once

// Test-only oracles, kept deliberately independent of the library's compute
// paths: plain triple loops, no Eigen expressions, own softplus/normalizer.

#include <cmath>
#include <functional>
#include <vector>

#include "diffgraph/graph_store.hpp"
#include "diffgraph/planner.hpp"

namespace dgtest {

using namespace diffgraph;

// Naive dense recomputation of the mean-GCN output (all rows), from the raw
// subgraph and parameters.
inline std::vector<std::vector<double>> naive_gcn_mu(const Subgraph& sub,
                                                     const VgaeParams& params) {
    const int n_exp = sub.n_selected();
    const int n_ref = static_cast<int>(sub.ref_prompts.size());
    const int n = 1 + n_exp + n_ref;
    const int d_node = params.dims.d_node;
    const int d_h1 = params.dims.d_h1;
    const int d_h = params.dims.d_h;

    // adjacency with self loops
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) m[i][i] = 1.0;
    for (int i = 0; i < n_exp; ++i) {
        m[0][1 + i] += sub.prompt_edges[i];
        m[1 + i][0] += sub.prompt_edges[i];
    }
    for (int i = 0; i < n_exp; ++i) {
        for (int j = 0; j < n_ref; ++j) {
            const auto& scores = sub.edges[static_cast<std::size_t>(i) * n_ref + j].scores;
            double t = 0.0;
            for (int k = 0; k < kEdgeDim; ++k) t += params.edge_proj[k] * scores[k];
            double w = t > 30.0 ? t : std::log(1.0 + std::exp(t));
            m[1 + i][1 + n_exp + j] += w;
            m[1 + n_exp + j][1 + i] += w;
        }
    }
    std::vector<double> deg(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) deg[i] += m[i][j];
    std::vector<std::vector<double>> ahat(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) ahat[i][j] = m[i][j] / std::sqrt(deg[i] * deg[j]);

    // node features
    std::vector<std::vector<double>> x(n, std::vector<double>(d_node, 0.0));
    for (int j = 0; j < d_node; ++j) x[0][j] = sub.user_prompt_feature[j];
    for (int i = 0; i < n_exp; ++i)
        for (int j = 0; j < d_node; ++j) x[1 + i][j] = sub.selected[i].node_feature[j];
    for (int r = 0; r < n_ref; ++r)
        for (int j = 0; j < d_node; ++j) x[1 + n_exp + r][j] = sub.ref_prompts[r].node_feature[j];

    // layer 1: relu(ahat x w1)
    std::vector<std::vector<double>> ax(n, std::vector<double>(d_node, 0.0));
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < d_node; ++j) ax[i][j] += ahat[i][k] * x[k][j];
    std::vector<std::vector<double>> t1(n, std::vector<double>(d_h1, 0.0));
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < d_node; ++k)
            for (int j = 0; j < d_h1; ++j) t1[i][j] += ax[i][k] * params.gcn_mu.w1(k, j);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d_h1; ++j) t1[i][j] = std::max(0.0, t1[i][j]);

    // layer 2: ahat t1 w2
    std::vector<std::vector<double>> at(n, std::vector<double>(d_h1, 0.0));
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < d_h1; ++j) at[i][j] += ahat[i][k] * t1[k][j];
    std::vector<std::vector<double>> out(n, std::vector<double>(d_h, 0.0));
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < d_h1; ++k)
            for (int j = 0; j < d_h; ++j) out[i][j] += at[i][k] * params.gcn_mu.w2(k, j);
    return out;
}

struct FdReport {
    double max_rel_err = 0.0;
    const char* worst_tensor = "";
    Eigen::Index worst_index = -1;
    long checked = 0;
};

// Central finite differences over every parameter entry vs the provided
// analytic gradient. rel err = |a-b| / max(1, |a|, |b|).
inline FdReport fd_check_gradients(VgaeParams& params, VgaeGrads& analytic,
                                   const std::function<double()>& loss, double eps = 1e-4) {
    FdReport rep;
    auto prefs = tensor_refs(params);
    auto grefs = tensor_refs(analytic);
    for (std::size_t t = 0; t < prefs.size(); ++t) {
        for (Eigen::Index i = 0; i < prefs[t].size; ++i) {
            double saved = prefs[t].data[i];
            prefs[t].data[i] = saved + eps;
            double up = loss();
            prefs[t].data[i] = saved - eps;
            double down = loss();
            prefs[t].data[i] = saved;
            double fd = (up - down) / (2.0 * eps);
            double an = grefs[t].data[i];
            double denom = std::max({1.0, std::abs(fd), std::abs(an)});
            double rel = std::abs(fd - an) / denom;
            ++rep.checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_tensor = prefs[t].name;
                rep.worst_index = i;
            }
        }
    }
    return rep;
}

} // namespace dgtest
