#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "qrec/core.hpp"
#include "qrec/rng.hpp"

namespace qrec {

struct SomConfig {
    std::size_t rows = 5;
    std::size_t cols = 8;
    std::size_t epochs = 1000;
    double lr0 = 0.5;
    double radius0 = 0.0;  // <= 0 means max(rows, cols) / 2, resolved at training time
    std::uint64_t seed = 0;
};

// Learning rate at epoch t: lr0 * (1 - t/epochs). Strictly positive for
// t < epochs, nonincreasing in t.
inline double som_learning_rate(const SomConfig& c, std::size_t epoch) {
    return c.lr0 * (1.0 - static_cast<double>(epoch) / static_cast<double>(c.epochs));
}

// Neighborhood radius at epoch t: radius0 * (1 - t/epochs), floored at 0.5.
inline double som_radius(const SomConfig& c, std::size_t epoch) {
    const double r0 = c.radius0 > 0.0 ? c.radius0
                                      : static_cast<double>(std::max(c.rows, c.cols)) / 2.0;
    return std::max(r0 * (1.0 - static_cast<double>(epoch) / static_cast<double>(c.epochs)), 0.5);
}

struct GridCoord {
    std::size_t row = 0;
    std::size_t col = 0;

    bool operator==(const GridCoord&) const = default;
};

// A trained Kohonen map over one subject's questions: the codebook grid plus
// the final BMU assignment of every training question. Immutable once trained.
struct SomModel {
    SomConfig config;  // radius0 stored resolved
    Subject subject = Subject::xyz;
    std::size_t dim = 0;
    std::vector<Embedding> weights;               // row-major, rows * cols codebook vectors
    std::map<std::string, GridCoord> assignments;  // question id -> final BMU

    std::size_t neuron_count() const { return config.rows * config.cols; }
    const Embedding& weight_at(std::size_t r, std::size_t c) const {
        return weights[r * config.cols + c];
    }
};

// Best Matching Unit: codebook vector Euclidean-closest to x. Ties break in
// row-major order (the scan keeps the first minimum).
inline GridCoord bmu(const SomModel& model, const Embedding& x) {
    if (x.size() != model.dim) {
        throw DataError("bmu: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                        std::to_string(model.dim) + ")");
    }
    std::size_t best = 0;
    double best_d2 = squared_distance(model.weights[0], x);
    for (std::size_t i = 1; i < model.weights.size(); ++i) {
        const double d2 = squared_distance(model.weights[i], x);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    return {best / model.config.cols, best % model.config.cols};
}

// Online Kohonen training over the subject slice of the corpus.
//
// Codebook vectors start uniformly random inside the per-coordinate data range.
// Each epoch is one seeded-shuffle pass over the slice; for every sample the
// BMU is found and every neuron moves by alpha(t) * h * (x - w), with Gaussian
// neighborhood h = exp(-d2_grid / (2 sigma(t)^2)) over squared Euclidean grid
// distance. alpha and sigma decay linearly per epoch (see som_learning_rate /
// som_radius). All randomness comes from config.seed, so training is
// bit-reproducible.
inline SomModel train_som(const Corpus& corpus, Subject subject, SomConfig config) {
    const auto& slice = corpus.subject_indices(subject);
    if (slice.empty()) {
        throw DataError("train_som: no questions for subject " + std::string(subject_name(subject)));
    }
    if (config.rows * config.cols < 2) throw DataError("train_som: grid needs at least 2 neurons");
    if (config.epochs < 1) throw DataError("train_som: epochs must be >= 1");
    if (!(config.lr0 > 0.0) || config.lr0 > 1.0) throw DataError("train_som: lr0 must be in (0, 1]");
    if (config.radius0 <= 0.0) {
        config.radius0 = static_cast<double>(std::max(config.rows, config.cols)) / 2.0;
    }

    SomModel model;
    model.config = config;
    model.subject = subject;
    model.dim = corpus.dim();

    const std::size_t dim = corpus.dim();
    const std::size_t n_neurons = config.rows * config.cols;
    Rng rng(config.seed);

    // Init inside the per-coordinate bounding box of the data.
    Embedding lo = corpus.at(slice[0]).embedding;
    Embedding hi = lo;
    for (std::size_t idx : slice) {
        const Embedding& e = corpus.at(idx).embedding;
        for (std::size_t d = 0; d < dim; ++d) {
            lo[d] = std::min(lo[d], e[d]);
            hi[d] = std::max(hi[d], e[d]);
        }
    }
    model.weights.assign(n_neurons, Embedding(dim));
    for (Embedding& w : model.weights) {
        for (std::size_t d = 0; d < dim; ++d) w[d] = rng.uniform(lo[d], hi[d]);
    }

    // Neighborhood lookup indexed by squared grid distance; rebuilt per epoch.
    const std::size_t max_d2 =
        (config.rows - 1) * (config.rows - 1) + (config.cols - 1) * (config.cols - 1);
    std::vector<double> h_table(max_d2 + 1);

    std::vector<std::size_t> order(slice.begin(), slice.end());
    for (std::size_t t = 0; t < config.epochs; ++t) {
        const double alpha = som_learning_rate(config, t);
        const double sigma = som_radius(config, t);
        const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
        for (std::size_t d2 = 0; d2 <= max_d2; ++d2) {
            h_table[d2] = std::exp(-static_cast<double>(d2) * inv_two_sigma2);
        }

        rng.shuffle(order);
        for (std::size_t idx : order) {
            const Embedding& x = corpus.at(idx).embedding;
            const GridCoord winner = bmu(model, x);
            for (std::size_t r = 0; r < config.rows; ++r) {
                const std::size_t dr = r > winner.row ? r - winner.row : winner.row - r;
                for (std::size_t c = 0; c < config.cols; ++c) {
                    const std::size_t dc = c > winner.col ? c - winner.col : winner.col - c;
                    const double step = alpha * h_table[dr * dr + dc * dc];
                    Embedding& w = model.weights[r * config.cols + c];
                    for (std::size_t d = 0; d < dim; ++d) w[d] += step * (x[d] - w[d]);
                }
            }
        }
    }

    for (std::size_t idx : slice) {
        const QuestionRecord& q = corpus.at(idx);
        model.assignments.emplace(q.id, bmu(model, q.embedding));
    }
    return model;
}

// Mean Euclidean distance from each question of the model's subject slice to
// its BMU codebook vector. Lower is a tighter map.
inline double quantization_error(const SomModel& model, const Corpus& corpus) {
    const auto& slice = corpus.subject_indices(model.subject);
    if (slice.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t idx : slice) {
        const Embedding& x = corpus.at(idx).embedding;
        const GridCoord g = bmu(model, x);
        total += euclidean_distance(x, model.weight_at(g.row, g.col));
    }
    return total / static_cast<double>(slice.size());
}

// BMU-cluster recommendation: candidates assigned to the query's BMU ranked by
// Euclidean distance ascending (ties by id). When the cluster has fewer than n
// other members, backfill walks outward over grid rings of increasing
// Chebyshev distance from the BMU, nearest-Euclidean-first within each ring.
inline std::vector<Recommendation> recommend_som(const SomModel& model, const Corpus& corpus,
                                                 const std::string& query_id, std::size_t n) {
    if (n == 0) throw DataError("recommend_som: n must be >= 1");
    auto assigned = model.assignments.find(query_id);
    if (assigned == model.assignments.end()) {
        throw DataError("recommend_som: query id \"" + query_id + "\" not assigned in model");
    }
    const QuestionRecord& query = corpus.require(query_id);
    const GridCoord center = bmu(model, query.embedding);

    // Bucket assigned questions by Chebyshev ring around the BMU.
    const std::size_t max_ring =
        std::max(std::max(center.row, model.config.rows - 1 - center.row),
                 std::max(center.col, model.config.cols - 1 - center.col));
    std::vector<std::vector<detail::ScoredId>> rings(max_ring + 1);
    for (const auto& [id, coord] : model.assignments) {
        if (id == query_id) continue;
        const std::size_t dr = coord.row > center.row ? coord.row - center.row : center.row - coord.row;
        const std::size_t dc = coord.col > center.col ? coord.col - center.col : center.col - coord.col;
        const QuestionRecord& candidate = corpus.require(id);
        rings[std::max(dr, dc)].push_back(
            {euclidean_distance(query.embedding, candidate.embedding), &candidate.id});
    }

    std::vector<Recommendation> out;
    for (auto& ring : rings) {
        if (out.size() >= n) break;
        auto ranked = detail::rank_candidates(std::move(ring), n - out.size(), /*ascending=*/true);
        for (Recommendation& r : ranked) {
            r.rank = out.size() + 1;
            out.push_back(std::move(r));
        }
    }
    return out;
}

// --- persistence ------------------------------------------------------------

inline constexpr int kSomFormatVersion = 1;

inline nlohmann::json som_to_json(const SomModel& model) {
    nlohmann::json assignments = nlohmann::json::object();
    for (const auto& [id, coord] : model.assignments) {
        assignments[id] = {coord.row, coord.col};
    }
    return {{"format", "qrec-som"},
            {"version", kSomFormatVersion},
            {"subject", std::string(subject_name(model.subject))},
            {"dim", model.dim},
            {"config",
             {{"rows", model.config.rows},
              {"cols", model.config.cols},
              {"epochs", model.config.epochs},
              {"lr0", model.config.lr0},
              {"radius0", model.config.radius0},
              {"seed", model.config.seed}}},
            {"weights", model.weights},
            {"assignments", std::move(assignments)}};
}

inline SomModel som_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "qrec-som") {
            throw DataError("not a SOM model file");
        }
        if (j.at("version").get<int>() != kSomFormatVersion) {
            throw DataError("unsupported SOM model version " + j.at("version").dump());
        }
        SomModel model;
        model.subject = parse_subject(j.at("subject").get<std::string>());
        model.dim = j.at("dim").get<std::size_t>();
        const auto& c = j.at("config");
        model.config.rows = c.at("rows").get<std::size_t>();
        model.config.cols = c.at("cols").get<std::size_t>();
        model.config.epochs = c.at("epochs").get<std::size_t>();
        model.config.lr0 = c.at("lr0").get<double>();
        model.config.radius0 = c.at("radius0").get<double>();
        model.config.seed = c.at("seed").get<std::uint64_t>();
        model.weights = j.at("weights").get<std::vector<Embedding>>();
        if (model.weights.size() != model.config.rows * model.config.cols) {
            throw DataError("SOM weight count does not match grid size");
        }
        for (const Embedding& w : model.weights) {
            if (w.size() != model.dim || !all_finite(w)) {
                throw DataError("SOM codebook vector has wrong dimension or non-finite values");
            }
        }
        for (const auto& [id, coord] : j.at("assignments").items()) {
            const std::size_t r = coord.at(0).get<std::size_t>();
            const std::size_t c2 = coord.at(1).get<std::size_t>();
            if (r >= model.config.rows || c2 >= model.config.cols) {
                throw DataError("SOM assignment out of grid bounds for id \"" + id + "\"");
            }
            model.assignments.emplace(id, GridCoord{r, c2});
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid SOM model file: ") + e.what());
    }
}

inline void save_som(const SomModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write SOM model file " + path.string());
    out << som_to_json(model).dump(2) << "\n";
    if (!out) throw DataError("failed writing SOM model file " + path.string());
}

inline SomModel load_som(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open SOM model file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid SOM model file " + path.string() + ": " + e.what());
    }
    return som_from_json(j);
}

// Cluster-assignment export for external plotting: question_id,row,col.
inline void export_assignments_csv(const SomModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write assignments CSV " + path.string());
    out << "question_id,row,col\n";
    for (const auto& [id, coord] : model.assignments) {
        out << id << "," << coord.row << "," << coord.col << "\n";
    }
    if (!out) throw DataError("failed writing assignments CSV " + path.string());
}

}  // namespace qrec
