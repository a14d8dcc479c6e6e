#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "qrec/som.hpp"
#include "qrec/testkit.hpp"

#include "helpers.hpp"

using namespace qrec;

namespace {

SomModel tiny_model(std::vector<Embedding> weights, std::size_t rows, std::size_t cols,
                    std::map<std::string, GridCoord> assignments, std::size_t dim) {
    SomModel model;
    model.config.rows = rows;
    model.config.cols = cols;
    model.config.radius0 = 1.0;
    model.subject = Subject::xyz;
    model.dim = dim;
    model.weights = std::move(weights);
    model.assignments = std::move(assignments);
    return model;
}

}  // namespace

TEST_CASE("learning rate and radius schedules decay linearly", "[som]") {
    SomConfig c;
    c.epochs = 1000;
    c.lr0 = 0.5;
    c.radius0 = 4.0;

    CHECK(som_learning_rate(c, 0) == 0.5);
    CHECK(som_radius(c, 0) == 4.0);
    double prev_alpha = som_learning_rate(c, 0);
    double prev_sigma = som_radius(c, 0);
    for (std::size_t t = 1; t < c.epochs; ++t) {
        const double alpha = som_learning_rate(c, t);
        const double sigma = som_radius(c, t);
        CHECK(alpha <= prev_alpha);
        CHECK(sigma <= prev_sigma);
        prev_alpha = alpha;
        prev_sigma = sigma;
    }
    CHECK(som_learning_rate(c, c.epochs - 1) > 0.0);
    CHECK(som_radius(c, c.epochs - 1) == 0.5);  // floored

    SECTION("default radius is max(rows, cols)/2") {
        SomConfig d;  // 5x8 grid, radius0 unset
        CHECK(som_radius(d, 0) == 4.0);
    }
}

TEST_CASE("bmu picks the Euclidean-nearest codebook vector", "[som]") {
    SECTION("1x2 grid by inspection") {
        const auto model = tiny_model({{0, 0}, {1, 1}}, 1, 2, {}, 2);
        CHECK(bmu(model, {0.1, 0.1}) == GridCoord{0, 0});
        CHECK(bmu(model, {0.9, 0.8}) == GridCoord{0, 1});
    }
    SECTION("a codebook vector maps to its own neuron") {
        const auto model = tiny_model({{0, 0}, {3, -1}, {2, 2}, {-4, 5}}, 2, 2, {}, 2);
        CHECK(bmu(model, {3, -1}) == GridCoord{0, 1});
        CHECK(bmu(model, {-4, 5}) == GridCoord{1, 1});
    }
    SECTION("ties break row-major") {
        const auto model = tiny_model({{1, 0}, {-1, 0}}, 1, 2, {}, 2);
        CHECK(bmu(model, {0, 0}) == GridCoord{0, 0});
    }
    SECTION("dimension mismatch") {
        const auto model = tiny_model({{0, 0}, {1, 1}}, 1, 2, {}, 2);
        CHECK_THROWS_AS(bmu(model, {1, 2, 3}), DataError);
    }
    SECTION("matches an exhaustive scan on a random 5x8 codebook") {
        Rng rng(321);
        std::vector<Embedding> weights;
        for (int i = 0; i < 40; ++i) weights.push_back(testutil::random_embedding(rng, 8));
        const auto model = tiny_model(std::move(weights), 5, 8, {}, 8);
        for (int q = 0; q < 100; ++q) {
            const Embedding x = testutil::random_embedding(rng, 8);
            std::size_t best = 0;
            double best_d2 = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < 40; ++i) {
                double d2 = 0.0;
                for (std::size_t d = 0; d < 8; ++d) {
                    const double diff = model.weights[i][d] - x[d];
                    d2 += diff * diff;
                }
                if (d2 < best_d2) {
                    best_d2 = d2;
                    best = i;
                }
            }
            CHECK(bmu(model, x) == GridCoord{best / 8, best % 8});
        }
    }
}

TEST_CASE("train_som converges to a single training point", "[som]") {
    std::vector<QuestionRecord> records{{"only", Subject::xyz, "t", {2.5, -1.0, 0.25}}};
    const Corpus corpus(std::move(records));
    SomConfig config;
    config.rows = 2;
    config.cols = 3;
    config.epochs = 1000;
    config.seed = 11;
    const SomModel model = train_som(corpus, Subject::xyz, config);

    const GridCoord g = bmu(model, corpus.at(0).embedding);
    CHECK(euclidean_distance(model.weight_at(g.row, g.col), corpus.at(0).embedding) <= 1e-6);
    CHECK(quantization_error(model, corpus) <= 1e-6);
    REQUIRE(model.assignments.count("only") == 1);
}

TEST_CASE("train_som separates two well-separated blobs", "[som]") {
    BlobSpec spec;
    spec.n_blobs = 2;
    spec.points_per_blob = 60;
    spec.dim = 8;
    spec.center_separation = 10.0;
    spec.blob_std = 1.0;  // separation ratio 10
    spec.seed = 17;
    const BlobCorpus blob = generate_blob_corpus(spec);

    SomConfig config;
    config.epochs = 200;
    config.seed = 3;
    const SomModel model = train_som(blob.corpus, Subject::xyz, config);

    std::set<std::pair<std::size_t, std::size_t>> bmu_sets[2];
    for (const auto& [id, coord] : model.assignments) {
        bmu_sets[blob.labels.at(id)].insert({coord.row, coord.col});
    }
    CHECK(!bmu_sets[0].empty());
    CHECK(!bmu_sets[1].empty());
    for (const auto& coord : bmu_sets[0]) CHECK(bmu_sets[1].count(coord) == 0);
}

TEST_CASE("train_som is bit-identical under a fixed seed", "[som]") {
    BlobSpec spec;
    spec.n_blobs = 3;
    spec.points_per_blob = 30;
    spec.dim = 5;
    spec.seed = 23;
    const BlobCorpus blob = generate_blob_corpus(spec);

    SomConfig config;
    config.epochs = 50;
    config.seed = 7;
    const SomModel a = train_som(blob.corpus, Subject::xyz, config);
    const SomModel b = train_som(blob.corpus, Subject::xyz, config);

    REQUIRE(a.weights.size() == b.weights.size());
    for (std::size_t i = 0; i < a.weights.size(); ++i) {
        CHECK(a.weights[i] == b.weights[i]);  // bitwise
    }
    CHECK(a.assignments == b.assignments);

    SomConfig other = config;
    other.seed = 8;
    const SomModel c = train_som(blob.corpus, Subject::xyz, other);
    CHECK(a.weights != c.weights);
}

TEST_CASE("codebook stays inside the data bounding box", "[som]") {
    BlobSpec spec;
    spec.n_blobs = 2;
    spec.points_per_blob = 40;
    spec.dim = 4;
    spec.seed = 41;
    const BlobCorpus blob = generate_blob_corpus(spec);

    Embedding lo = blob.corpus.at(0).embedding, hi = lo;
    for (const QuestionRecord& r : blob.corpus.records()) {
        for (std::size_t d = 0; d < 4; ++d) {
            lo[d] = std::min(lo[d], r.embedding[d]);
            hi[d] = std::max(hi[d], r.embedding[d]);
        }
    }

    SomConfig config;
    config.epochs = 100;
    config.seed = 2;
    const SomModel model = train_som(blob.corpus, Subject::xyz, config);
    for (const Embedding& w : model.weights) {
        for (std::size_t d = 0; d < 4; ++d) {
            const double slack = 1e-12 * (hi[d] - lo[d]);
            CHECK(w[d] >= lo[d] - slack);
            CHECK(w[d] <= hi[d] + slack);
        }
    }
}

TEST_CASE("train_som input validation", "[som]") {
    std::vector<QuestionRecord> records{{"a", Subject::xyz, "t", {1.0, 2.0}}};
    const Corpus corpus(std::move(records));
    CHECK_THROWS_AS(train_som(corpus, Subject::kva, {}), DataError);  // empty slice
    SomConfig bad;
    bad.rows = 1;
    bad.cols = 1;
    CHECK_THROWS_AS(train_som(corpus, Subject::xyz, bad), DataError);
}

TEST_CASE("quantization error improves with training", "[som]") {
    BlobSpec spec;
    spec.n_blobs = 3;
    spec.points_per_blob = 30;
    spec.dim = 8;
    spec.seed = 5;
    const BlobCorpus blob = generate_blob_corpus(spec);

    SomConfig short_run;
    short_run.epochs = 10;
    short_run.seed = 13;
    SomConfig long_run = short_run;
    long_run.epochs = 1000;

    const double qe_short = quantization_error(train_som(blob.corpus, Subject::xyz, short_run),
                                               blob.corpus);
    const double qe_long = quantization_error(train_som(blob.corpus, Subject::xyz, long_run),
                                              blob.corpus);
    CHECK(qe_long <= qe_short);
}

TEST_CASE("quantization error is zero when codebook sits on the data", "[som]") {
    std::vector<QuestionRecord> records{{"a", Subject::xyz, "t", {0.0, 0.0}},
                                        {"b", Subject::xyz, "t", {1.0, 1.0}}};
    const Corpus corpus(std::move(records));
    const auto model = tiny_model({{0, 0}, {1, 1}}, 1, 2,
                                  {{"a", {0, 0}}, {"b", {0, 1}}}, 2);
    CHECK(quantization_error(model, corpus) == 0.0);
}

TEST_CASE("recommend_som ranks the BMU cluster first", "[som]") {
    // 1x3 grid, neuron 0 holds {query, q7}, neuron 1 holds the rest.
    std::vector<QuestionRecord> records{
        {"query", Subject::xyz, "t", {0.0}},
        {"q7", Subject::xyz, "t", {0.4}},
        {"far1", Subject::xyz, "t", {4.6}},
        {"far2", Subject::xyz, "t", {5.2}},
    };
    const Corpus corpus(std::move(records));
    const auto model = tiny_model(
        {{0.2}, {5.0}, {10.0}}, 1, 3,
        {{"query", {0, 0}}, {"q7", {0, 0}}, {"far1", {0, 1}}, {"far2", {0, 1}}}, 1);

    SECTION("only co-cluster candidate comes back alone for n=1") {
        const auto recs = recommend_som(model, corpus, "query", 1);
        REQUIRE(recs.size() == 1);
        CHECK(recs[0].question_id == "q7");
        CHECK(recs[0].score == Catch::Approx(0.4));
    }
    SECTION("backfill extends past the cluster in ring order") {
        const auto recs = recommend_som(model, corpus, "query", 3);
        REQUIRE(recs.size() == 3);
        CHECK(recs[0].question_id == "q7");
        CHECK(recs[1].question_id == "far1");  // ring 1, nearest first
        CHECK(recs[2].question_id == "far2");
        CHECK(recs[0].rank == 1);
        CHECK(recs[2].rank == 3);
    }
}

TEST_CASE("recommend_som backfills when the query is alone in its neuron", "[som]") {
    // Hand-constructed 4-point fixture with known geometry.
    std::vector<QuestionRecord> records{
        {"qA", Subject::xyz, "t", {0.0}},
        {"qB", Subject::xyz, "t", {4.5}},
        {"qC", Subject::xyz, "t", {5.5}},
        {"qD", Subject::xyz, "t", {10.0}},
    };
    const Corpus corpus(std::move(records));
    const auto model = tiny_model(
        {{0.0}, {5.0}, {10.0}}, 1, 3,
        {{"qA", {0, 0}}, {"qB", {0, 1}}, {"qC", {0, 1}}, {"qD", {0, 2}}}, 1);

    const auto one = recommend_som(model, corpus, "qA", 1);
    REQUIRE(one.size() == 1);
    CHECK(one[0].question_id == "qB");  // nearest within the adjacent ring

    const auto three = recommend_som(model, corpus, "qA", 3);
    REQUIRE(three.size() == 3);
    CHECK(three[0].question_id == "qB");
    CHECK(three[1].question_id == "qC");
    CHECK(three[2].question_id == "qD");  // ring 2 only after ring 1 is exhausted
}

TEST_CASE("recommend_som respects blob structure", "[som]") {
    BlobSpec spec;
    spec.n_blobs = 2;
    spec.points_per_blob = 50;
    spec.dim = 8;
    spec.seed = 31;
    const BlobCorpus blob = generate_blob_corpus(spec);

    SomConfig config;
    config.epochs = 200;
    config.seed = 19;
    const SomModel model = train_som(blob.corpus, Subject::xyz, config);

    const std::string query = "XYZ-b0-0";
    const auto recs = recommend_som(model, blob.corpus, query, 3);
    REQUIRE(recs.size() == 3);
    for (const Recommendation& r : recs) {
        CHECK(r.question_id != query);
        CHECK(blob.labels.at(r.question_id) == 0);
    }

    SECTION("unknown query throws") {
        CHECK_THROWS_AS(recommend_som(model, blob.corpus, "missing", 1), DataError);
    }
}

TEST_CASE("SOM persistence round-trips bit-exactly", "[som]") {
    testutil::TempDir dir;
    BlobSpec spec;
    spec.n_blobs = 2;
    spec.points_per_blob = 20;
    spec.dim = 4;
    spec.seed = 3;
    const BlobCorpus blob = generate_blob_corpus(spec);
    SomConfig config;
    config.epochs = 30;
    config.seed = 71;
    const SomModel model = train_som(blob.corpus, Subject::xyz, config);

    const auto path = dir.file("som.json");
    save_som(model, path);
    const SomModel loaded = load_som(path);
    CHECK(loaded.subject == model.subject);
    CHECK(loaded.dim == model.dim);
    CHECK(loaded.config.rows == model.config.rows);
    CHECK(loaded.config.radius0 == model.config.radius0);
    CHECK(loaded.weights == model.weights);  // bitwise through JSON
    CHECK(loaded.assignments == model.assignments);

    SECTION("assignment CSV export") {
        const auto csv = dir.file("assign.csv");
        export_assignments_csv(model, csv);
        const std::string content = testutil::read_file(csv);
        CHECK(content.rfind("question_id,row,col\n", 0) == 0);
        CHECK(content.find("XYZ-b0-0,") != std::string::npos);
    }
    SECTION("version field is mandatory and checked") {
        nlohmann::json j = som_to_json(model);
        j["version"] = 999;
        CHECK_THROWS_AS(som_from_json(j), DataError);
        j.erase("version");
        CHECK_THROWS_AS(som_from_json(j), DataError);
    }
    SECTION("out-of-bounds assignment is rejected") {
        nlohmann::json j = som_to_json(model);
        j["assignments"]["XYZ-b0-0"] = {99, 0};
        CHECK_THROWS_AS(som_from_json(j), DataError);
    }
}
