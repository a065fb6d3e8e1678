#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <vector>

#include "diffgraph/common.hpp"
#include "diffgraph/payload.hpp"

namespace diffgraph {

struct ParsedNeeds {
    std::string summary;
    std::vector<std::string> attributes;
};

struct ExpertBrief {
    std::string id;
    ExpertKind kind = ExpertKind::ckpt;
    std::string description;
};

// Agent-side language tasks. The stub below is a pure function of its inputs;
// an HTTP-backed client (http_clients.hpp) satisfies the same contract.
// filter_experts must return a subset of the candidate ids and keep >= 1 CKPT.
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual std::string summarize_prompt(const std::string& prompt) const = 0;
    virtual std::vector<std::string> extract_attributes(const std::string& prompt) const = 0;
    virtual std::vector<std::string> filter_experts(const ParsedNeeds& needs,
                                                    const std::vector<ExpertBrief>& candidates) const = 0;
    virtual std::string summarize_expert(const std::string& homepage) const = 0;
};

namespace detail {

inline bool token_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

} // namespace detail

// Grammar: `subject:<token>[; attrs:<token>(,<token>)*]`. Anything else falls
// back to (full prompt, no attributes); this keeps the parser total.
inline ParsedNeeds stub_parse(const std::string& user_prompt) {
    const std::string p = detail::lower(user_prompt);
    auto fallback = [&] { return ParsedNeeds{user_prompt, {}}; };

    const std::string subj_key = "subject:";
    if (p.rfind(subj_key, 0) != 0) return fallback();
    std::size_t i = subj_key.size();
    std::size_t subj_begin = i;
    while (i < p.size() && detail::token_char(p[i])) ++i;
    if (i == subj_begin) return fallback();
    std::string subject = p.substr(subj_begin, i - subj_begin);
    if (i == p.size()) return ParsedNeeds{"subject:" + subject, {}};

    const std::string attr_key = "; attrs:";
    if (p.compare(i, attr_key.size(), attr_key) != 0) return fallback();
    i += attr_key.size();
    std::vector<std::string> attrs;
    for (;;) {
        std::size_t begin = i;
        while (i < p.size() && detail::token_char(p[i])) ++i;
        if (i == begin) return fallback();
        attrs.push_back(p.substr(begin, i - begin));
        if (i == p.size()) break;
        if (p[i] != ',') return fallback();
        ++i;
    }
    return ParsedNeeds{"subject:" + subject, std::move(attrs)};
}

// All `key:value` skill tokens in a text, lowercased, order of appearance,
// deduplicated.
inline std::vector<std::string> skill_tokens(const std::string& text) {
    const std::string t = detail::lower(text);
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < t.size()) {
        if (!detail::token_char(t[i])) {
            ++i;
            continue;
        }
        std::size_t begin = i;
        while (i < t.size() && detail::token_char(t[i])) ++i;
        if (i < t.size() && t[i] == ':' && i + 1 < t.size() && detail::token_char(t[i + 1])) {
            std::size_t vbegin = ++i;
            while (i < t.size() && detail::token_char(t[i])) ++i;
            std::string tok = t.substr(begin, i - begin);
            if (std::find(out.begin(), out.end(), tok) == out.end()) out.push_back(tok);
        } else {
            (void)begin;
        }
    }
    return out;
}

// Deterministic agent stub.
//   summarize_expert: first sentence of the homepage plus every skill token.
//   filter: keep a candidate iff one of its skill tokens matches the parsed
//   needs (full token against the summary, value part against an attribute);
//   the top retrieval-ranked CKPT candidate is always kept.
class StubLlm final : public LlmClient {
public:
    std::string summarize_prompt(const std::string& prompt) const override {
        return stub_parse(prompt).summary;
    }

    std::vector<std::string> extract_attributes(const std::string& prompt) const override {
        return stub_parse(prompt).attributes;
    }

    std::string summarize_expert(const std::string& homepage) const override {
        std::size_t end = homepage.find_first_of(".!?");
        std::string first = end == std::string::npos ? homepage : homepage.substr(0, end + 1);
        while (!first.empty() && std::isspace(static_cast<unsigned char>(first.front())))
            first.erase(first.begin());
        std::string out = first;
        for (const auto& tok : skill_tokens(homepage)) {
            if (!out.empty()) out += " ";
            out += tok;
        }
        return out;
    }

    std::vector<std::string> filter_experts(const ParsedNeeds& needs,
                                            const std::vector<ExpertBrief>& candidates) const override {
        const std::string summary_lc = detail::lower(needs.summary);
        std::vector<std::string> attr_lc;
        for (const auto& a : needs.attributes) attr_lc.push_back(detail::lower(a));

        std::vector<std::string> kept;
        const ExpertBrief* first_ckpt = nullptr;
        for (const auto& cand : candidates) {
            if (cand.kind == ExpertKind::ckpt && first_ckpt == nullptr) first_ckpt = &cand;
            bool match = false;
            for (const auto& tok : skill_tokens(cand.description)) {
                if (tok == summary_lc) {
                    match = true;
                    break;
                }
                std::size_t colon = tok.find(':');
                std::string value = tok.substr(colon + 1);
                if (std::find(attr_lc.begin(), attr_lc.end(), value) != attr_lc.end()) {
                    match = true;
                    break;
                }
            }
            if (match) kept.push_back(cand.id);
        }
        if (first_ckpt != nullptr &&
            std::find(kept.begin(), kept.end(), first_ckpt->id) == kept.end()) {
            bool any_ckpt = false;
            for (const auto& cand : candidates) {
                if (cand.kind != ExpertKind::ckpt) continue;
                if (std::find(kept.begin(), kept.end(), cand.id) != kept.end()) {
                    any_ckpt = true;
                    break;
                }
            }
            if (!any_ckpt) kept.push_back(first_ckpt->id);
        }
        return kept;
    }
};

} // namespace diffgraph
