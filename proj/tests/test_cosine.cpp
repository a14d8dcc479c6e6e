#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "qrec/cosine.hpp"
#include "qrec/rng.hpp"
#include "qrec/testkit.hpp"

#include "helpers.hpp"

using namespace qrec;

namespace {

// Brute-force oracle, arithmetic written out independently of the library.
std::vector<std::string> brute_force_top_cosine(const Corpus& corpus, const std::string& query_id,
                                                std::size_t n) {
    const QuestionRecord& query = corpus.require(query_id);
    std::vector<std::pair<double, std::string>> scored;
    for (const QuestionRecord& candidate : corpus.records()) {
        if (candidate.id == query_id || candidate.subject != query.subject) continue;
        double dot_val = 0.0, qq = 0.0, cc = 0.0;
        for (std::size_t d = 0; d < query.embedding.size(); ++d) {
            dot_val += query.embedding[d] * candidate.embedding[d];
            qq += query.embedding[d] * query.embedding[d];
            cc += candidate.embedding[d] * candidate.embedding[d];
        }
        scored.emplace_back(dot_val / std::sqrt(qq * cc), candidate.id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < std::min(n, scored.size()); ++i) ids.push_back(scored[i].second);
    return ids;
}

Corpus random_corpus(std::size_t n, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<QuestionRecord> records;
    for (std::size_t i = 0; i < n; ++i) {
        QuestionRecord r;
        r.id = "q" + std::to_string(i);
        r.subject = kAllSubjects[i % 2];  // two subjects so the filter matters
        r.text = "t";
        r.embedding = testutil::random_embedding(rng, dim, -1.0, 1.0);
        records.push_back(std::move(r));
    }
    return Corpus(std::move(records));
}

}  // namespace

TEST_CASE("cosine_similarity basics", "[cosine]") {
    SECTION("self similarity is 1") {
        const Embedding v{0.5, -2.0, 3.25};
        CHECK(cosine_similarity(v, v) == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("orthogonal vectors score 0") {
        CHECK(cosine_similarity({1, 0}, {0, 1}) == 0.0);
    }
    SECTION("hand-computed quotient") {
        // dot = 4 + 10 + 18 = 32, |a|^2 = 14, |b|^2 = 77
        const double expected = 32.0 / std::sqrt(14.0 * 77.0);
        CHECK(cosine_similarity({1, 2, 3}, {4, 5, 6}) == Catch::Approx(expected).epsilon(1e-14));
    }
    SECTION("zero norm is degenerate") {
        CHECK_THROWS_WITH(cosine_similarity({0, 0}, {1, 1}),
                          Catch::Matchers::ContainsSubstring("degenerate"));
        CHECK_THROWS_AS(cosine_similarity({1, 1}, {0, 0}), DataError);
    }
    SECTION("dimension mismatch") {
        CHECK_THROWS_AS(cosine_similarity({1, 2}, {1, 2, 3}), DataError);
    }
    SECTION("bounded in [-1, 1]") {
        Rng rng(31);
        for (int i = 0; i < 200; ++i) {
            const auto a = testutil::random_embedding(rng, 8);
            const auto b = testutil::random_embedding(rng, 8);
            const double s = cosine_similarity(a, b);
            CHECK(s >= -1.0 - 1e-12);
            CHECK(s <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("recommend_cosine scaled-copy fixture", "[cosine]") {
    std::vector<QuestionRecord> records{
        {"q1", Subject::xyz, "t", {1.0, 2.0}},
        {"q2", Subject::xyz, "t", {2.0, 4.0}},   // scaled copy of q1
        {"q3", Subject::xyz, "t", {5.0, -1.0}},
    };
    const Corpus corpus(std::move(records));
    const auto recs = recommend_cosine(corpus, "q1", 1);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].question_id == "q2");
    CHECK(recs[0].score == Catch::Approx(1.0).margin(1e-12));
    CHECK(recs[0].rank == 1);
}

TEST_CASE("recommend_cosine edge cases", "[cosine]") {
    std::vector<QuestionRecord> records{
        {"solo", Subject::nog, "t", {1.0, 1.0}},
        {"other", Subject::kva, "t", {1.0, 0.0}},
        {"other2", Subject::kva, "t", {0.5, 0.5}},
    };
    const Corpus corpus(std::move(records));

    SECTION("query whose subject has only itself yields empty") {
        CHECK(recommend_cosine(corpus, "solo", 3).empty());
    }
    SECTION("unknown query id") {
        CHECK_THROWS_AS(recommend_cosine(corpus, "nope", 1), DataError);
    }
    SECTION("n larger than the pool returns the full pool") {
        const auto recs = recommend_cosine(corpus, "other", 50);
        REQUIRE(recs.size() == 1);
        CHECK(recs[0].question_id == "other2");
    }
    SECTION("n must be positive") {
        CHECK_THROWS_AS(recommend_cosine(corpus, "other", 0), DataError);
    }
}

TEST_CASE("recommend_cosine equals the exhaustive brute-force oracle", "[cosine]") {
    const Corpus corpus = random_corpus(200, 8, 2024);
    Rng pick(5);
    for (int trial = 0; trial < 10; ++trial) {
        const std::string query = "q" + std::to_string(pick.uniform_index(200));
        const auto recs = recommend_cosine(corpus, query, 5);
        const auto expected = brute_force_top_cosine(corpus, query, 5);
        REQUIRE(recs.size() == expected.size());
        for (std::size_t i = 0; i < recs.size(); ++i) {
            CHECK(recs[i].question_id == expected[i]);
            CHECK(recs[i].rank == i + 1);
        }
    }
}

TEST_CASE("recommend_cosine properties", "[cosine]") {
    const Corpus corpus = random_corpus(120, 6, 99);
    const auto recs = recommend_cosine(corpus, "q0", 10);
    REQUIRE(recs.size() == 10);

    SECTION("scores descend and subjects match") {
        const Subject subject = corpus.require("q0").subject;
        for (std::size_t i = 0; i < recs.size(); ++i) {
            CHECK(recs[i].question_id != "q0");
            CHECK(corpus.require(recs[i].question_id).subject == subject);
            if (i > 0) CHECK(recs[i - 1].score >= recs[i].score);
        }
    }
    SECTION("invariant under uniform positive scaling of all embeddings") {
        std::vector<QuestionRecord> scaled = corpus.records();
        for (QuestionRecord& r : scaled) {
            for (double& x : r.embedding) x *= 3.7;
        }
        const Corpus scaled_corpus(std::move(scaled));
        const auto scaled_recs = recommend_cosine(scaled_corpus, "q0", 10);
        REQUIRE(scaled_recs.size() == recs.size());
        for (std::size_t i = 0; i < recs.size(); ++i) {
            CHECK(scaled_recs[i].question_id == recs[i].question_id);
        }
    }
}
