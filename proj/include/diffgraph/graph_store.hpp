#pragma once

// Universal graph: bipartite expert / reference-prompt graph with embedding
// node features and calibration-score edge features. Plain value types; all
// invariants are enforced by the mutation functions. Concurrency contract:
// any number of readers, mutations need exclusive access to the value.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "diffgraph/embeddings.hpp"
#include "diffgraph/payload.hpp"
#include "diffgraph/persistence.hpp"

namespace diffgraph {

constexpr int kGraphFormatVersion = 1;
constexpr int kEdgeDim = 5;

struct ExpertRecord {
    std::string id;
    ExpertKind kind = ExpertKind::ckpt;
    std::string description;
    std::vector<float> node_feature; // unit L2 norm, length d_node
    ExpertPayload payload;
    int version = 1;
    int registered_at = 0; // release-era tag, e.g. 2023
};

struct ReferencePrompt {
    std::string id;
    std::string text;
    std::vector<float> node_feature;
};

struct CalibrationEdge {
    std::string expert_id;
    std::string ref_prompt_id;
    std::vector<float> scores; // length kEdgeDim, each in [0,1]
};

struct UniversalGraph {
    int d_node = 32;
    int d_edge = kEdgeDim;
    int format_version = kGraphFormatVersion;
    std::vector<ExpertRecord> experts;       // manifest order
    std::vector<ReferencePrompt> ref_prompts; // fixed at construction
    // Kept grouped: block e*N_r..(e+1)*N_r holds expert e's edges in
    // reference-prompt order. save/load and activation rely on this.
    std::vector<CalibrationEdge> edges;

    std::size_t n_experts() const { return experts.size(); }
    std::size_t n_ref_prompts() const { return ref_prompts.size(); }

    const ExpertRecord* find_expert(const std::string& id) const {
        for (const auto& e : experts)
            if (e.id == id) return &e;
        return nullptr;
    }

    std::ptrdiff_t expert_index(const std::string& id) const {
        for (std::size_t i = 0; i < experts.size(); ++i)
            if (experts[i].id == id) return static_cast<std::ptrdiff_t>(i);
        return -1;
    }
};

namespace detail {

inline bool is_unit_norm(const std::vector<float>& v) {
    double n = 0.0;
    for (float x : v) n += double(x) * x;
    return std::abs(std::sqrt(n) - 1.0) <= 1e-6;
}

inline double safe_affinity(const std::vector<float>& a, const std::vector<float>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
        dot += double(a[i]) * b[i];
        na += double(a[i]) * a[i];
        nb += double(b[i]) * b[i];
    }
    if (na <= 0.0 || nb <= 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

} // namespace detail

inline void validate_graph(const UniversalGraph& g) {
    require(g.d_edge == kEdgeDim, errc::dimension_mismatch, "d_edge must be 5");
    std::map<std::string, std::size_t> expert_ids;
    for (std::size_t i = 0; i < g.experts.size(); ++i) {
        const auto& e = g.experts[i];
        require(expert_ids.emplace(e.id, i).second, errc::duplicate_id,
                "duplicate expert id: " + e.id);
        require(e.node_feature.size() == static_cast<std::size_t>(g.d_node),
                errc::dimension_mismatch, "expert node feature length: " + e.id);
        require(detail::is_unit_norm(e.node_feature), errc::dimension_mismatch,
                "expert node feature not unit norm: " + e.id);
    }
    std::map<std::string, std::size_t> ref_ids;
    for (std::size_t j = 0; j < g.ref_prompts.size(); ++j) {
        const auto& r = g.ref_prompts[j];
        require(ref_ids.emplace(r.id, j).second, errc::duplicate_id,
                "duplicate reference prompt id: " + r.id);
        require(r.node_feature.size() == static_cast<std::size_t>(g.d_node),
                errc::dimension_mismatch, "ref prompt feature length: " + r.id);
        require(detail::is_unit_norm(r.node_feature), errc::dimension_mismatch,
                "ref prompt feature not unit norm: " + r.id);
    }
    require(g.edges.size() == g.experts.size() * g.ref_prompts.size(),
            errc::incomplete_calibration, "edge count != experts x ref prompts");
    for (std::size_t k = 0; k < g.edges.size(); ++k) {
        const auto& edge = g.edges[k];
        std::size_t ei = k / std::max<std::size_t>(g.ref_prompts.size(), 1);
        std::size_t rj = k % std::max<std::size_t>(g.ref_prompts.size(), 1);
        require(ei < g.experts.size() && g.experts[ei].id == edge.expert_id,
                errc::incomplete_calibration, "edge block out of order");
        require(g.ref_prompts[rj].id == edge.ref_prompt_id, errc::incomplete_calibration,
                "edge block out of order");
        require(edge.scores.size() == static_cast<std::size_t>(g.d_edge),
                errc::dimension_mismatch, "edge score length");
        for (float s : edge.scores)
            require(s >= 0.0f && s <= 1.0f, errc::invalid_argument, "edge score outside [0,1]");
    }
}

// Training-free insertion: the new expert and its edges are appended, nothing
// pre-existing is touched.
inline void insert_expert(UniversalGraph& g, ExpertRecord record,
                          std::vector<CalibrationEdge> edges) {
    require(g.find_expert(record.id) == nullptr, errc::duplicate_id,
            "expert already present: " + record.id);
    require(record.node_feature.size() == static_cast<std::size_t>(g.d_node),
            errc::dimension_mismatch, "node feature length != d_node");
    require(detail::is_unit_norm(record.node_feature), errc::dimension_mismatch,
            "node feature not unit norm");
    // every reference prompt covered exactly once
    std::vector<CalibrationEdge> ordered;
    ordered.reserve(g.ref_prompts.size());
    for (const auto& ref : g.ref_prompts) {
        const CalibrationEdge* found = nullptr;
        for (const auto& e : edges) {
            if (e.ref_prompt_id == ref.id) {
                require(found == nullptr, errc::incomplete_calibration,
                        "duplicate edge for reference prompt " + ref.id);
                found = &e;
            }
        }
        require(found != nullptr, errc::incomplete_calibration,
                "missing edge for reference prompt " + ref.id);
        require(found->expert_id == record.id, errc::incomplete_calibration,
                "edge expert id mismatch");
        require(found->scores.size() == static_cast<std::size_t>(g.d_edge),
                errc::dimension_mismatch, "edge score length != d_edge");
        for (float s : found->scores)
            require(s >= 0.0f && s <= 1.0f, errc::invalid_argument, "edge score outside [0,1]");
        ordered.push_back(*found);
    }
    require(edges.size() == g.ref_prompts.size(), errc::incomplete_calibration,
            "extra edges supplied");
    record.payload = quantize_payload_f32(record.payload);
    g.experts.push_back(std::move(record));
    for (auto& e : ordered) g.edges.push_back(std::move(e));
}

inline void remove_expert(UniversalGraph& g, const std::string& expert_id) {
    std::ptrdiff_t idx = g.expert_index(expert_id);
    require(idx >= 0, errc::unknown_id, "no such expert: " + expert_id);
    const std::size_t nr = g.ref_prompts.size();
    g.edges.erase(g.edges.begin() + idx * static_cast<std::ptrdiff_t>(nr),
                  g.edges.begin() + (idx + 1) * static_cast<std::ptrdiff_t>(nr));
    g.experts.erase(g.experts.begin() + idx);
}

// Per-request activation. Node order is fixed: user prompt, selected experts
// (CKPT group first, selection order within each group), reference prompts in
// graph order.
struct Subgraph {
    std::vector<float> user_prompt_feature;
    std::vector<ExpertRecord> selected; // ckpt group first
    int n_ckpt = 0;
    std::vector<ReferencePrompt> ref_prompts;
    std::vector<CalibrationEdge> edges;  // selected-order blocks x ref order
    std::vector<float> prompt_edges;     // per selected expert, in [0,1]

    int n_selected() const { return static_cast<int>(selected.size()); }
    int n_peft() const { return n_selected() - n_ckpt; }
    int n_nodes() const { return 1 + n_selected() + static_cast<int>(ref_prompts.size()); }
};

inline Subgraph activate_subgraph(const UniversalGraph& g, const std::vector<std::string>& ids,
                                  const std::vector<float>& user_prompt_feature) {
    require(user_prompt_feature.size() == static_cast<std::size_t>(g.d_node),
            errc::dimension_mismatch, "user prompt feature length != d_node");
    require(!ids.empty(), errc::no_ckpt_selected, "empty selection");
    const std::size_t nr = g.ref_prompts.size();

    std::vector<std::ptrdiff_t> ckpt_idx, peft_idx;
    std::vector<std::string> seen;
    for (const auto& id : ids) {
        require(std::find(seen.begin(), seen.end(), id) == seen.end(), errc::invalid_argument,
                "duplicate id in selection: " + id);
        seen.push_back(id);
        std::ptrdiff_t idx = g.expert_index(id);
        require(idx >= 0, errc::unknown_id, "no such expert: " + id);
        // calibrated == full edge block present (structurally guaranteed after
        // insert_expert, re-checked for hand-built graphs)
        require(g.edges.size() >= (static_cast<std::size_t>(idx) + 1) * nr,
                errc::uncalibrated_expert, "expert lacks calibration edges: " + id);
        (g.experts[idx].kind == ExpertKind::ckpt ? ckpt_idx : peft_idx).push_back(idx);
    }
    require(!ckpt_idx.empty(), errc::no_ckpt_selected, "selection has no CKPT expert");

    Subgraph sub;
    sub.user_prompt_feature = user_prompt_feature;
    sub.n_ckpt = static_cast<int>(ckpt_idx.size());
    sub.ref_prompts = g.ref_prompts;
    auto add = [&](std::ptrdiff_t idx) {
        const auto& rec = g.experts[idx];
        sub.selected.push_back(rec);
        sub.prompt_edges.push_back(
            static_cast<float>(detail::safe_affinity(user_prompt_feature, rec.node_feature)));
        for (std::size_t j = 0; j < nr; ++j)
            sub.edges.push_back(g.edges[static_cast<std::size_t>(idx) * nr + j]);
    };
    for (auto idx : ckpt_idx) add(idx);
    for (auto idx : peft_idx) add(idx);
    return sub;
}

// ---------------------------------------------------------------------------
// Bundle persistence. Directory layout:
//   manifest.json         UTF-8; ids, kinds, descriptions, file checksums
//   edges.coo             "<expert_index> <ref_prompt_index>\n" sorted rows
//   node_features.bin     raw f32le, (|experts|+|refs|) x d_node, experts first
//   edge_features.bin     raw f32le, |edges| x d_edge, aligned with edges.coo
//   payloads/<id>.bin     payload container per expert

namespace detail {

inline std::string sanitize_filename(const std::string& id) {
    std::string out;
    for (char c : id)
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ||
                              c == '.'
                          ? c
                          : '_');
    return out;
}

} // namespace detail

inline void save_graph(const UniversalGraph& g, const std::filesystem::path& dir) {
    validate_graph(g);
    std::error_code ec;
    std::filesystem::create_directories(dir / "payloads", ec);
    require(!ec, errc::io_failure, "cannot create bundle directory: " + dir.string());

    std::vector<float> node_feats;
    node_feats.reserve((g.experts.size() + g.ref_prompts.size()) * g.d_node);
    for (const auto& e : g.experts)
        node_feats.insert(node_feats.end(), e.node_feature.begin(), e.node_feature.end());
    for (const auto& r : g.ref_prompts)
        node_feats.insert(node_feats.end(), r.node_feature.begin(), r.node_feature.end());
    std::string node_body = floats_to_le_bytes(node_feats);

    std::vector<float> edge_feats;
    edge_feats.reserve(g.edges.size() * g.d_edge);
    std::string coo;
    for (std::size_t k = 0; k < g.edges.size(); ++k) {
        edge_feats.insert(edge_feats.end(), g.edges[k].scores.begin(), g.edges[k].scores.end());
        std::size_t ei = k / std::max<std::size_t>(g.ref_prompts.size(), 1);
        std::size_t rj = k % std::max<std::size_t>(g.ref_prompts.size(), 1);
        coo += std::to_string(ei) + " " + std::to_string(rj) + "\n";
    }
    std::string edge_body = floats_to_le_bytes(edge_feats);

    ordered_json manifest;
    manifest["format_version"] = g.format_version;
    manifest["d_node"] = g.d_node;
    manifest["d_edge"] = g.d_edge;
    ordered_json shas = ordered_json::object();

    ordered_json experts = ordered_json::array();
    std::vector<std::string> used_names;
    for (const auto& e : g.experts) {
        std::string name = detail::sanitize_filename(e.id);
        while (std::find(used_names.begin(), used_names.end(), name) != used_names.end())
            name += "_";
        used_names.push_back(name);
        std::string payload_file = "payloads/" + name + ".bin";
        write_payload(dir / payload_file, e.payload);
        shas[payload_file] = sha256_hex(read_file_bytes(dir / payload_file));
        ordered_json je;
        je["id"] = e.id;
        je["kind"] = kind_name(e.kind);
        je["description"] = e.description;
        je["version"] = e.version;
        je["registered_at"] = e.registered_at;
        je["payload_file"] = payload_file;
        experts.push_back(std::move(je));
    }
    manifest["experts"] = std::move(experts);

    ordered_json refs = ordered_json::array();
    for (const auto& r : g.ref_prompts) {
        ordered_json jr;
        jr["id"] = r.id;
        jr["text"] = r.text;
        refs.push_back(std::move(jr));
    }
    manifest["ref_prompts"] = std::move(refs);

    write_file_bytes(dir / "edges.coo", coo);
    write_file_bytes(dir / "node_features.bin", node_body);
    write_file_bytes(dir / "edge_features.bin", edge_body);
    shas["node_features.bin"] = sha256_hex(node_body);
    shas["edge_features.bin"] = sha256_hex(edge_body);
    manifest["sha256"] = std::move(shas);
    write_file_bytes(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline UniversalGraph load_graph(const std::filesystem::path& dir) {
    ordered_json manifest;
    try {
        manifest = ordered_json::parse(read_file_bytes(dir / "manifest.json"));
    } catch (const json::exception& e) {
        fail(errc::io_failure, std::string("bad manifest: ") + e.what());
    }
    require(manifest.at("format_version").get<int>() == kGraphFormatVersion,
            errc::format_version_mismatch,
            "bundle format_version " + manifest["format_version"].dump() + ", expected " +
                std::to_string(kGraphFormatVersion));
    UniversalGraph g;
    g.d_node = manifest.at("d_node").get<int>();
    g.d_edge = manifest.at("d_edge").get<int>();
    require(g.d_node > 0, errc::dimension_mismatch, "d_node must be positive");

    const auto& shas = manifest.at("sha256");
    auto read_checked = [&](const std::string& rel, std::size_t expect_floats) {
        std::string body = read_file_bytes(dir / rel);
        require(body.size() == expect_floats * 4, errc::dimension_mismatch,
                rel + " length mismatch");
        require(shas.contains(rel), errc::io_failure, "manifest missing checksum for " + rel);
        require(shas.at(rel).get<std::string>() == sha256_hex(body), errc::checksum_mismatch,
                rel + " checksum mismatch");
        return le_bytes_to_floats(body);
    };

    const auto& jexperts = manifest.at("experts");
    const auto& jrefs = manifest.at("ref_prompts");
    const std::size_t ne = jexperts.size();
    const std::size_t nr = jrefs.size();

    std::vector<float> node_feats = read_checked("node_features.bin", (ne + nr) * g.d_node);
    std::vector<float> edge_feats = read_checked("edge_features.bin", ne * nr * g.d_edge);

    for (std::size_t i = 0; i < ne; ++i) {
        const auto& je = jexperts[i];
        ExpertRecord rec;
        rec.id = je.at("id").get<std::string>();
        rec.kind = kind_from_name(je.at("kind").get<std::string>());
        rec.description = je.at("description").get<std::string>();
        rec.version = je.at("version").get<int>();
        rec.registered_at = je.at("registered_at").get<int>();
        rec.node_feature.assign(node_feats.begin() + static_cast<std::ptrdiff_t>(i * g.d_node),
                                node_feats.begin() +
                                    static_cast<std::ptrdiff_t>((i + 1) * g.d_node));
        std::string payload_file = je.at("payload_file").get<std::string>();
        std::string body = read_file_bytes(dir / payload_file);
        require(shas.contains(payload_file), errc::io_failure,
                "manifest missing checksum for " + payload_file);
        require(shas.at(payload_file).get<std::string>() == sha256_hex(body),
                errc::checksum_mismatch, payload_file + " checksum mismatch");
        rec.payload = read_payload(dir / payload_file);
        require(payload_kind(rec.payload) == rec.kind, errc::payload_mismatch,
                "payload kind disagrees with manifest for " + rec.id);
        g.experts.push_back(std::move(rec));
    }
    for (std::size_t j = 0; j < nr; ++j) {
        const auto& jr = jrefs[j];
        ReferencePrompt r;
        r.id = jr.at("id").get<std::string>();
        r.text = jr.at("text").get<std::string>();
        r.node_feature.assign(
            node_feats.begin() + static_cast<std::ptrdiff_t>((ne + j) * g.d_node),
            node_feats.begin() + static_cast<std::ptrdiff_t>((ne + j + 1) * g.d_node));
        g.ref_prompts.push_back(std::move(r));
    }

    // edges.coo drives edge order; features are row-aligned with it
    std::string coo = read_file_bytes(dir / "edges.coo");
    std::size_t pos = 0, row = 0;
    while (pos < coo.size()) {
        std::size_t nl = coo.find('\n', pos);
        require(nl != std::string::npos, errc::io_failure, "edges.coo missing trailing newline");
        std::string line = coo.substr(pos, nl - pos);
        pos = nl + 1;
        std::size_t sp = line.find(' ');
        require(sp != std::string::npos, errc::io_failure, "bad edges.coo line");
        std::size_t ei = 0, rj = 0;
        try {
            ei = std::stoul(line.substr(0, sp));
            rj = std::stoul(line.substr(sp + 1));
        } catch (const std::exception&) {
            fail(errc::io_failure, "bad edges.coo line: " + line);
        }
        require(ei < ne && rj < nr, errc::io_failure, "edges.coo index out of range");
        CalibrationEdge e;
        e.expert_id = g.experts[ei].id;
        e.ref_prompt_id = g.ref_prompts[rj].id;
        e.scores.assign(edge_feats.begin() + static_cast<std::ptrdiff_t>(row * g.d_edge),
                        edge_feats.begin() + static_cast<std::ptrdiff_t>((row + 1) * g.d_edge));
        g.edges.push_back(std::move(e));
        ++row;
    }
    require(row == ne * nr, errc::incomplete_calibration, "edges.coo row count mismatch");
    validate_graph(g);
    return g;
}

inline bool graph_equal(const UniversalGraph& a, const UniversalGraph& b) {
    if (a.d_node != b.d_node || a.d_edge != b.d_edge) return false;
    if (a.experts.size() != b.experts.size() || a.ref_prompts.size() != b.ref_prompts.size() ||
        a.edges.size() != b.edges.size())
        return false;
    for (std::size_t i = 0; i < a.experts.size(); ++i) {
        const auto& x = a.experts[i];
        const auto& y = b.experts[i];
        if (x.id != y.id || x.kind != y.kind || x.description != y.description ||
            x.version != y.version || x.registered_at != y.registered_at ||
            x.node_feature != y.node_feature || !payload_equal(x.payload, y.payload))
            return false;
    }
    for (std::size_t j = 0; j < a.ref_prompts.size(); ++j) {
        const auto& x = a.ref_prompts[j];
        const auto& y = b.ref_prompts[j];
        if (x.id != y.id || x.text != y.text || x.node_feature != y.node_feature) return false;
    }
    for (std::size_t k = 0; k < a.edges.size(); ++k) {
        const auto& x = a.edges[k];
        const auto& y = b.edges[k];
        if (x.expert_id != y.expert_id || x.ref_prompt_id != y.ref_prompt_id ||
            x.scores != y.scores)
            return false;
    }
    return true;
}

} // namespace diffgraph
