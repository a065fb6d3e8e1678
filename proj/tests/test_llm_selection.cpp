#include <doctest.h>

#include "diffgraph/llm.hpp"
#include "diffgraph/registration.hpp"
#include "diffgraph/selection.hpp"
#include "diffgraph/testbed.hpp"

#include "test_util.hpp"

using namespace diffgraph;

TEST_CASE("stub_parse grammar") {
    auto p = stub_parse("subject:portrait; attrs:eyes,lips");
    CHECK(p.summary == "subject:portrait");
    REQUIRE(p.attributes.size() == 2);
    CHECK(p.attributes[0] == "eyes");
    CHECK(p.attributes[1] == "lips");

    p = stub_parse("subject:city");
    CHECK(p.summary == "subject:city");
    CHECK(p.attributes.empty());

    p = stub_parse("a watercolor fox");
    CHECK(p.summary == "a watercolor fox");
    CHECK(p.attributes.empty());

    // malformed attr lists fall back to free text
    p = stub_parse("subject:city; attrs:");
    CHECK(p.summary == "subject:city; attrs:");
    p = stub_parse("subject:city; attrs:a,,b");
    CHECK(p.summary == "subject:city; attrs:a,,b");
}

TEST_CASE("skill token extraction") {
    auto toks = skill_tokens("Expert for subject:forest. Also attr:fog and subject:forest again");
    REQUIRE(toks.size() == 2);
    CHECK(toks[0] == "subject:forest");
    CHECK(toks[1] == "attr:fog");
    CHECK(skill_tokens("no tokens here").empty());
    // colon with missing value is not a token
    CHECK(skill_tokens("dangling: colon").empty());
}

TEST_CASE("stub summarize_expert: first sentence plus skill tokens") {
    StubLlm llm;
    std::string desc =
        llm.summarize_expert("Expert for subject:forest. Trained on woodland scenes.");
    CHECK(desc == "Expert for subject:forest. subject:forest");

    // identical homepages give identical records modulo id
    HashEmbedder emb(32);
    ExpertSource a, b;
    a.id = "a";
    b.id = "b";
    a.kind = b.kind = ExpertKind::ckpt;
    a.homepage_text = b.homepage_text = "Expert for subject:forest. Trained on woods.";
    a.payload = b.payload = CkptPayload{Mat::Zero(2, 2)};
    ExpertRecord ra = register_node(a, llm, emb);
    ExpertRecord rb = register_node(b, llm, emb);
    CHECK(ra.description == rb.description);
    CHECK(ra.node_feature == rb.node_feature);
}

TEST_CASE("stub filter keeps matching skill tokens and always one ckpt") {
    StubLlm llm;
    ParsedNeeds needs{"subject:forest", {"fog"}};
    std::vector<ExpertBrief> cands = {
        {"good-ckpt", ExpertKind::ckpt, "Base for subject:forest. subject:forest"},
        {"wrong-ckpt", ExpertKind::ckpt, "Base for subject:city. subject:city"},
        {"fog-peft", ExpertKind::peft, "Adapter attr:fog control"},
        {"ember-peft", ExpertKind::peft, "Adapter attr:ember control"},
        {"distractor", ExpertKind::ckpt, "Base for subject:bog. forest forest texture"},
    };
    auto kept = llm.filter_experts(needs, cands);
    CHECK(std::find(kept.begin(), kept.end(), "good-ckpt") != kept.end());
    CHECK(std::find(kept.begin(), kept.end(), "fog-peft") != kept.end());
    CHECK(std::find(kept.begin(), kept.end(), "wrong-ckpt") == kept.end());
    CHECK(std::find(kept.begin(), kept.end(), "ember-peft") == kept.end());
    CHECK(std::find(kept.begin(), kept.end(), "distractor") == kept.end());

    // nothing matches: the top-ranked ckpt candidate is retained anyway
    ParsedNeeds nomatch{"subject:harbor", {}};
    auto fallback = llm.filter_experts(nomatch, cands);
    REQUIRE(fallback.size() == 1);
    CHECK(fallback[0] == "good-ckpt");
}

namespace {

// graph assembled through the real registration pipeline over the testbed
UniversalGraph testbed_graph(const testbed::TestbedSpec& spec, int n_ref = 8) {
    StubLlm llm;
    HashEmbedder emb(32);
    testbed::QualityScorer scorer(spec);
    testbed::TestbedBench bench(scorer);
    auto splits = testbed::make_prompt_splits(spec, 32, 64, 64);
    UniversalGraph g;
    g.d_node = 32;
    g.ref_prompts = select_reference_prompts(splits.reference_candidates, n_ref, emb);
    for (const auto& src : testbed::standard_ecosystem(spec))
        add_expert(g, src, llm, emb, bench);
    return g;
}

} // namespace

TEST_CASE("select_experts on the testbed graph") {
    testbed::TestbedSpec spec;
    UniversalGraph g = testbed_graph(spec);
    StubLlm llm;
    HashEmbedder emb(32);

    SUBCASE("summary and attributes from the stub") {
        SelectionResult sel = select_experts(g, "subject:forest; attrs:ember,fog", llm, emb);
        CHECK(sel.summary == "subject:forest");
        REQUIRE(sel.attributes.size() == 2);
        CHECK(sel.attributes[0] == "ember");
        CHECK(sel.attributes[1] == "fog");
        // the two forest ckpt experts survive the filter, the third candidate
        // (another cluster) does not
        REQUIRE(sel.ckpt.size() == 2);
        for (const auto& id : sel.ckpt) CHECK(id.substr(0, 11) == "ckpt-forest");
        // peft picks cover the requested attributes only
        CHECK(!sel.peft.empty());
        for (const auto& id : sel.peft) {
            bool ok = id.substr(0, 10) == "peft-ember" || id.substr(0, 8) == "peft-fog";
            CHECK(ok);
        }
    }

    SUBCASE("matching cluster expert ranks first in retrieval") {
        // exhaustive cosine oracle over ckpt experts
        SelectionResult sel = select_experts(g, "subject:desert", llm, emb);
        auto q = emb.embed("subject:desert");
        std::string best;
        double best_sim = -2.0;
        for (const auto& e : g.experts) {
            if (e.kind != ExpertKind::ckpt) continue;
            double s = cosine(q, e.node_feature);
            if (s > best_sim || (s == best_sim && e.id < best)) {
                best_sim = s;
                best = e.id;
            }
        }
        REQUIRE(!sel.ckpt.empty());
        CHECK(sel.ckpt[0] == best);
        CHECK(best.substr(0, 11) == "ckpt-desert");
    }

    SUBCASE("selection is deterministic") {
        auto a = select_experts(g, "subject:city; attrs:grain", llm, emb);
        auto b = select_experts(g, "subject:city; attrs:grain", llm, emb);
        CHECK(a.ckpt == b.ckpt);
        CHECK(a.peft == b.peft);
    }

    SUBCASE("cardinality bounds over the whole corpus") {
        SelectionOptions opt;
        auto splits = testbed::make_prompt_splits(spec, 32, 64, 64);
        for (const auto& text : splits.heldout) {
            SelectionResult sel = select_experts(g, text, llm, emb, opt);
            CHECK(sel.ckpt.size() >= 1);
            CHECK(sel.ckpt.size() <= static_cast<std::size_t>(opt.k1));
            CHECK(sel.peft.size() <= sel.attributes.size() * static_cast<std::size_t>(opt.k2));
            // no duplicates, disjoint groups
            for (const auto& id : sel.peft)
                CHECK(std::find(sel.ckpt.begin(), sel.ckpt.end(), id) == sel.ckpt.end());
        }
    }
}

TEST_CASE("graph with one ckpt expert and no peft selects it regardless of prompt") {
    StubLlm llm;
    HashEmbedder emb(32);
    UniversalGraph g;
    g.d_node = 32;
    ReferencePrompt ref;
    ref.id = "r0";
    ref.text = "subject:forest";
    ref.node_feature = emb.embed(ref.text);
    g.ref_prompts.push_back(ref);
    ExpertRecord solo;
    solo.id = "only";
    solo.kind = ExpertKind::ckpt;
    solo.description = "Base for subject:city. subject:city";
    solo.node_feature = emb.embed(solo.description);
    solo.payload = CkptPayload{Mat::Zero(2, 2)};
    insert_expert(g, solo, {{"only", "r0", std::vector<float>(kEdgeDim, 0.5f)}});

    for (const char* prompt : {"subject:forest", "subject:desert; attrs:fog", "free text"}) {
        SelectionResult sel = select_experts(g, prompt, llm, emb);
        REQUIRE(sel.ckpt.size() == 1);
        CHECK(sel.ckpt[0] == "only");
        CHECK(sel.peft.empty());
    }
}

TEST_CASE("no ckpt experts is an error") {
    StubLlm llm;
    HashEmbedder emb(32);
    UniversalGraph g;
    g.d_node = 32;
    try {
        select_experts(g, "subject:forest", llm, emb);
        FAIL("expected NoCkptExperts");
    } catch (const Error& e) {
        CHECK(e.code() == errc::no_ckpt_experts);
    }
}

TEST_CASE("distractor scenario: retrieval over-selects, the filter removes it") {
    testbed::TestbedSpec spec;
    spec.n_distractors = 2; // one ckpt bait (forest words), one peft bait
    UniversalGraph g = testbed_graph(spec);
    StubLlm llm;
    HashEmbedder emb(32);

    // retrieval-only: the forest-flavored distractor lands in the candidates
    SelectionOptions no_filter;
    no_filter.skip_filter = true;
    SelectionResult raw = select_experts(g, "subject:forest; attrs:ember", llm, emb, no_filter);
    bool distractor_retrieved =
        std::find(raw.ckpt.begin(), raw.ckpt.end(), "distractor-0") != raw.ckpt.end();
    CHECK(distractor_retrieved);

    // full ESA: the filter drops it
    SelectionResult filtered = select_experts(g, "subject:forest; attrs:ember", llm, emb);
    CHECK(std::find(filtered.ckpt.begin(), filtered.ckpt.end(), "distractor-0") ==
          filtered.ckpt.end());
    for (const auto& id : filtered.ckpt) CHECK(id.substr(0, 11) == "ckpt-forest");
}

TEST_CASE("filter output is always a subset of retrieval output") {
    testbed::TestbedSpec spec;
    spec.n_distractors = 2;
    UniversalGraph g = testbed_graph(spec);
    StubLlm llm;
    HashEmbedder emb(32);
    auto splits = testbed::make_prompt_splits(spec, 16, 32, 64);
    for (const auto& text : splits.heldout) {
        SelectionOptions raw_opt;
        raw_opt.skip_filter = true;
        SelectionResult raw = select_experts(g, text, llm, emb, raw_opt);
        SelectionResult fil = select_experts(g, text, llm, emb);
        for (const auto& id : fil.ckpt)
            CHECK(std::find(raw.ckpt.begin(), raw.ckpt.end(), id) != raw.ckpt.end());
        for (const auto& id : fil.peft)
            CHECK(std::find(raw.peft.begin(), raw.peft.end(), id) != raw.peft.end());
    }
}
