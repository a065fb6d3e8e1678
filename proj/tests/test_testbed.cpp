#include <doctest.h>

#include <cmath>
#include <set>

#include "diffgraph/testbed.hpp"

#include "test_util.hpp"

using namespace diffgraph;
using namespace diffgraph::testbed;

TEST_CASE("ecosystem counting and determinism") {
    TestbedSpec spec;
    auto eco = build_ecosystem(spec, 2, 2, 0);
    CHECK(eco.size() == 4 * 2 + 6 * 2); // 20 experts

    auto eco2 = build_ecosystem(spec, 2, 2, 0);
    REQUIRE(eco.size() == eco2.size());
    for (std::size_t i = 0; i < eco.size(); ++i) {
        CHECK(eco[i].id == eco2[i].id);
        CHECK(eco[i].homepage_text == eco2[i].homepage_text);
        CHECK(payload_equal(eco[i].payload, eco2[i].payload));
    }

    // epoch split partitions the same content
    auto e23 = build_ecosystem(spec, 2, 2, 2023);
    auto e25 = build_ecosystem(spec, 2, 2, 2025);
    CHECK(e23.size() + e25.size() == eco.size());
    std::set<std::string> union_ids, full_ids;
    for (const auto& s : e23) union_ids.insert(s.id);
    for (const auto& s : e25) union_ids.insert(s.id);
    for (const auto& s : eco) full_ids.insert(s.id);
    CHECK(union_ids == full_ids);
    // 2025 experts are peft adapters for the second attribute half
    for (const auto& s : e25) {
        CHECK(s.kind == ExpertKind::peft);
        CHECK(s.registered_at == 2025);
    }
}

TEST_CASE("zero noise makes the first copy the exact ideal") {
    TestbedSpec spec;
    spec.noise_scale = 0.0;
    TestbedTruth truth = make_truth(spec);
    auto eco = build_ecosystem(spec, 1, 1, 0);
    int checked = 0;
    for (const auto& s : eco) {
        if (s.kind == ExpertKind::ckpt) {
            int k = -1;
            for (int c = 0; c < spec.n_clusters; ++c)
                if (s.id == "ckpt-" + cluster_word(c) + "-v1") k = c;
            REQUIRE(k >= 0);
            CHECK(std::get<CkptPayload>(s.payload).weight == truth.cluster_ideal[k]);
            ++checked;
        }
    }
    CHECK(checked == spec.n_clusters);
}

TEST_CASE("generate is the linear map") {
    TestbedSpec spec;
    SyntheticPrompt p = prompt_from_text(spec, "subject:forest");

    SUBCASE("identity and zero") {
        MergedModel ident{Mat::Identity(8, 8)};
        Vec y = generate(ident, p);
        CHECK((y - p.feature).norm() == doctest::Approx(0.0));
        MergedModel zero{Mat::Zero(8, 8)};
        CHECK(generate(zero, p).norm() == doctest::Approx(0.0));
    }

    SUBCASE("matches a naive matvec oracle") {
        Rng rng(9);
        MergedModel m{random_matrix(8, 8, rng)};
        Vec y = generate(m, p);
        for (int i = 0; i < 8; ++i) {
            double acc = 0.0;
            for (int j = 0; j < 8; ++j) acc += m.weight(i, j) * p.feature[j];
            CHECK(y[i] == doctest::Approx(acc).epsilon(1e-12));
        }
    }

    SUBCASE("shape mismatch") {
        MergedModel bad{Mat::Zero(8, 5)};
        CHECK_THROWS_AS(generate(bad, p), Error);
    }
}

TEST_CASE("target composes cluster ideal and attribute deltas") {
    TestbedSpec spec;
    TestbedTruth truth = make_truth(spec);

    SUBCASE("no attributes") {
        SyntheticPrompt p = prompt_from_text(spec, "subject:city");
        Vec expect = truth.cluster_ideal[2] * p.feature;
        CHECK((target(spec, truth, p) - expect).norm() == doctest::Approx(0.0));
    }

    SUBCASE("one attribute equals the hand-composed sum") {
        SyntheticPrompt p = prompt_from_text(spec, "subject:city; attrs:ember");
        Mat w = truth.cluster_ideal[2] +
                truth.attribute_ideal[4].up * truth.attribute_ideal[4].down;
        Vec expect = w * p.feature;
        CHECK((target(spec, truth, p) - expect).norm() == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("score closed forms and duplicate-implementation oracle") {
    TestbedSpec spec;
    TestbedTruth truth = make_truth(spec);
    QualityScorer scorer(spec, truth);
    SyntheticPrompt p = prompt_from_text(spec, "subject:portrait; attrs:fog");
    Vec ystar = target(spec, truth, p);

    SUBCASE("exact target gives all ones") {
        Vec m = scorer.score(ystar, p);
        for (int i = 0; i < kEdgeDim; ++i) CHECK(m[i] == doctest::Approx(1.0));
        CHECK(scorer.scalar(ystar, p) == doctest::Approx(1.0));
    }

    SUBCASE("projected distance tau*ln2 on every metric gives 0.5") {
        // use a truth whose five projections coincide so one offset hits all
        TestbedTruth same = truth;
        for (int i = 1; i < kEdgeDim; ++i) same.projections[i] = same.projections[0];
        QualityScorer s2(spec, same);
        Vec v(spec.proj_rows);
        v.setZero();
        v[0] = std::log(2.0) * spec.tau;
        Vec offset = same.projections[0].transpose() * v; // |P offset| = |v| = ln 2
        Vec m = s2.score(target(spec, same, p) + offset, p);
        for (int i = 0; i < kEdgeDim; ++i) CHECK(m[i] == doctest::Approx(0.5).epsilon(1e-12));
    }

    SUBCASE("random output matches an independent recomputation") {
        Rng rng(11);
        Vec y(spec.d_out);
        for (int i = 0; i < spec.d_out; ++i) y[i] = rng.normal();
        Vec m = scorer.score(y, p);
        for (int k = 0; k < kEdgeDim; ++k) {
            // second norm implementation: explicit loops
            double s = 0.0;
            for (int r = 0; r < spec.proj_rows; ++r) {
                double acc = 0.0;
                for (int c = 0; c < spec.d_out; ++c)
                    acc += truth.projections[k](r, c) * (y[c] - ystar[c]);
                s += acc * acc;
            }
            CHECK(m[k] == doctest::Approx(std::exp(-std::sqrt(s) / spec.tau)).epsilon(1e-12));
        }
    }
}

TEST_CASE("score decreases monotonically along rays from the target") {
    TestbedSpec spec;
    TestbedTruth truth = make_truth(spec);
    QualityScorer scorer(spec, truth);
    SyntheticPrompt p = prompt_from_text(spec, "subject:desert; attrs:dusk");
    Vec ystar = target(spec, truth, p);
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        Vec dir(spec.d_out);
        for (int i = 0; i < spec.d_out; ++i) dir[i] = rng.normal();
        double prev = 1.0 + 1e-12;
        for (double t : {0.1, 0.3, 0.7, 1.5, 3.0}) {
            double u = scorer.scalar(ystar + t * dir, p);
            CHECK(u <= prev);
            prev = u;
        }
    }
}

TEST_CASE("prompt features are unit norm and a pure function of the text") {
    TestbedSpec spec;
    SyntheticPrompt a = prompt_from_text(spec, "subject:forest; attrs:ember,fog");
    SyntheticPrompt b = prompt_from_text(spec, "subject:forest; attrs:ember,fog");
    CHECK(a.feature == b.feature);
    CHECK(a.feature.norm() == doctest::Approx(1.0));
    CHECK(a.cluster == 0);
    REQUIRE(a.attribute_ids.size() == 2);
    CHECK(a.attribute_ids[0] == 4);
    CHECK(a.attribute_ids[1] == 1);

    // attribute order keeps semantics but changes the feature draw
    SyntheticPrompt c = prompt_from_text(spec, "subject:forest; attrs:fog,ember");
    CHECK(c.cluster == a.cluster);
    CHECK(c.feature != a.feature);

    CHECK_THROWS_AS(prompt_from_text(spec, "subject:unknownword"), Error);
    CHECK_THROWS_AS(prompt_from_text(spec, "free text prompt"), Error);
}

TEST_CASE("prompt corpus: splits are disjoint and large enough") {
    TestbedSpec spec;
    auto all = enumerate_prompts(spec);
    // 4 clusters x (1 + 6 + 15*2! + 20*3!) texts
    CHECK(all.size() == 4u * (1 + 6 + 30 + 120));
    std::set<std::string> uniq(all.begin(), all.end());
    CHECK(uniq.size() == all.size());

    auto splits = make_prompt_splits(spec, 64, 160, 200);
    CHECK(splits.reference_candidates.size() == 64);
    CHECK(splits.train.size() == 160);
    CHECK(splits.heldout.size() == 200);
    std::set<std::string> seen;
    for (const auto& t : splits.reference_candidates) CHECK(seen.insert(t).second);
    for (const auto& t : splits.train) CHECK(seen.insert(t).second);
    for (const auto& t : splits.heldout) CHECK(seen.insert(t).second);

    CHECK_THROWS_AS(make_prompt_splits(spec, 500, 500, 500), Error);
}

TEST_CASE("testbed spec json round trip") {
    dgtest::ScratchDir dir("spec");
    TestbedSpec spec;
    spec.noise_scale = 0.25;
    spec.n_distractors = 2;
    spec.master_seed = 777;
    write_testbed_spec(dir.path() / "testbed.json", spec);
    TestbedSpec back = read_testbed_spec(dir.path() / "testbed.json");
    CHECK(back.noise_scale == spec.noise_scale);
    CHECK(back.n_distractors == 2);
    CHECK(back.master_seed == 777);
    CHECK(back.d_task == spec.d_task);
}

TEST_CASE("template vocabulary stays off the discriminative hash buckets") {
    // the retrieval story depends on this separation at d_node = 32
    TestbedSpec spec;
    std::set<std::uint64_t> disc;
    std::vector<std::string> disc_words = {"subject", "attrs", "attr"};
    for (int k = 0; k < spec.n_clusters; ++k) disc_words.push_back(cluster_word(k));
    for (int a = 0; a < spec.n_attributes; ++a) disc_words.push_back(attribute_word(a));
    for (const auto& w : disc_words) {
        auto b = fnv1a64(w) % 32;
        CHECK(disc.insert(b).second); // pairwise distinct
    }
    // every word appearing in homepages must avoid those buckets, except the
    // discriminative words themselves
    std::set<std::string> disc_set(disc_words.begin(), disc_words.end());
    auto eco = build_ecosystem(spec, 2, 2, 0);
    TestbedSpec spec_d = spec;
    spec_d.n_distractors = 3;
    auto eco_d = build_ecosystem(spec_d, 2, 2, 0);
    eco.insert(eco.end(), eco_d.begin(), eco_d.end());
    for (const auto& src : eco) {
        for (const auto& tok : tokenize_words(src.homepage_text)) {
            if (disc_set.count(tok)) continue;
            CHECK_MESSAGE(disc.count(fnv1a64(tok) % 32) == 0, "word '", tok,
                          "' collides with a discriminative bucket");
        }
    }
}
