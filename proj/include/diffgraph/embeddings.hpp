#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "diffgraph/common.hpp"

namespace diffgraph {

// Text -> unit vector. Implementations must be pure functions of the input
// text and safe for concurrent calls.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<float> embed(const std::string& text) const = 0;
    virtual int dim() const = 0;
};

inline std::vector<std::string> tokenize_words(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

// Bag-of-words bucket counts: token -> FNV-1a(token) mod dim, L2-normalized.
// Fully deterministic across platforms; empty input maps to e_0.
class HashEmbedder final : public Embedder {
public:
    explicit HashEmbedder(int dim = 32) : dim_(dim) {
        require(dim > 0, errc::invalid_argument, "embedder dim must be positive");
    }

    std::vector<float> embed(const std::string& text) const override {
        std::vector<double> counts(dim_, 0.0);
        bool any = false;
        for (const auto& tok : tokenize_words(text)) {
            counts[fnv1a64(tok) % static_cast<std::uint64_t>(dim_)] += 1.0;
            any = true;
        }
        std::vector<float> out(dim_, 0.0f);
        if (!any) {
            out[0] = 1.0f;
            return out;
        }
        double norm = 0.0;
        for (double c : counts) norm += c * c;
        norm = std::sqrt(norm);
        for (int i = 0; i < dim_; ++i) out[i] = static_cast<float>(counts[i] / norm);
        return out;
    }

    int dim() const override { return dim_; }

private:
    int dim_;
};

inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    require(a.size() == b.size(), errc::dimension_mismatch, "cosine: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += double(a[i]) * b[i];
        na += double(a[i]) * a[i];
        nb += double(b[i]) * b[i];
    }
    require(na > 0.0 && nb > 0.0, errc::zero_vector, "cosine: zero-norm input");
    double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(c, -1.0, 1.0);
}

struct ScoredId {
    std::string id;
    double similarity;
};

// Exact top-k by cosine, descending; ties broken by ascending id. Returns the
// whole pool (sorted) when k exceeds it.
inline std::vector<ScoredId> top_k(const std::vector<float>& query,
                                   const std::vector<std::pair<std::string, std::vector<float>>>& candidates,
                                   std::size_t k) {
    require(k >= 1, errc::invalid_argument, "top_k: k must be >= 1");
    std::vector<ScoredId> scored;
    scored.reserve(candidates.size());
    for (const auto& [id, vec] : candidates) scored.push_back({id, cosine(query, vec)});
    std::sort(scored.begin(), scored.end(), [](const ScoredId& a, const ScoredId& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.id < b.id;
    });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

} // namespace diffgraph
