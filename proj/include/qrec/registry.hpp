#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qrec/core.hpp"
#include "qrec/cosine.hpp"
#include "qrec/gmm.hpp"
#include "qrec/rng.hpp"
#include "qrec/som.hpp"
#include "qrec/strategy.hpp"

namespace qrec {

// Per-subject model bindings plus the randomized A/B assignment policy.
// Immutable once the models are registered; all queries are safe concurrently.
class StrategyRegistry {
public:
    StrategyRegistry(std::shared_ptr<const Corpus> corpus, std::uint64_t assignment_seed,
                     std::vector<Strategy> arms = default_arms())
        : corpus_(std::move(corpus)), assignment_seed_(assignment_seed), arms_(std::move(arms)) {
        if (!corpus_) throw DataError("registry: corpus must not be null");
        if (arms_.empty()) throw DataError("registry: at least one arm required");
    }

    const Corpus& corpus() const { return *corpus_; }
    std::uint64_t assignment_seed() const { return assignment_seed_; }
    const std::vector<Strategy>& arms() const { return arms_; }
    Divergence divergence = Divergence::kl_query_to_candidate;

    void register_som(SomModel model) {
        if (model.dim != corpus_->dim()) {
            throw ModelError("registry: SOM for " + std::string(subject_name(model.subject)) +
                             " has dim " + std::to_string(model.dim) + ", corpus has " +
                             std::to_string(corpus_->dim()));
        }
        for (const auto& [id, coord] : model.assignments) {
            const QuestionRecord* record = corpus_->find(id);
            if (!record || record->subject != model.subject) {
                throw ModelError("registry: SOM assignment id \"" + id +
                                 "\" is not a corpus question of subject " +
                                 std::string(subject_name(model.subject)));
            }
        }
        const Subject subject = model.subject;
        som_[static_cast<std::size_t>(subject)] = std::move(model);
    }

    void register_gmm(GmmModel model) {
        if (model.dim != corpus_->dim()) {
            throw ModelError("registry: GMM for " + std::string(subject_name(model.subject)) +
                             " has dim " + std::to_string(model.dim) + ", corpus has " +
                             std::to_string(corpus_->dim()));
        }
        for (const auto& [id, probs] : model.posteriors) {
            const QuestionRecord* record = corpus_->find(id);
            if (!record || record->subject != model.subject) {
                throw ModelError("registry: GMM posterior id \"" + id +
                                 "\" is not a corpus question of subject " +
                                 std::string(subject_name(model.subject)));
            }
        }
        const Subject subject = model.subject;
        gmm_[static_cast<std::size_t>(subject)] = std::move(model);
    }

    const SomModel* som_for(Subject s) const {
        const auto& slot = som_[static_cast<std::size_t>(s)];
        return slot ? &*slot : nullptr;
    }
    const GmmModel* gmm_for(Subject s) const {
        const auto& slot = gmm_[static_cast<std::size_t>(s)];
        return slot ? &*slot : nullptr;
    }

    // A strategy is routable for a subject when the model it needs is
    // registered there; cosine needs only the corpus.
    bool routable(Strategy strategy, Subject subject) const {
        if (corpus_->subject_indices(subject).empty()) return false;
        switch (strategy) {
            case Strategy::cosine: return true;
            case Strategy::som: return som_for(subject) != nullptr;
            case Strategy::gmm_kl:
            case Strategy::gmm_cluster: return gmm_for(subject) != nullptr;
        }
        return false;
    }

    // Arms routable for every subject present in the corpus. A session may
    // contain any present subject, so assignment only considers these.
    std::vector<Strategy> routable_arms() const {
        std::vector<Strategy> out;
        const std::vector<Subject> subjects = corpus_->subjects_present();
        if (subjects.empty()) return out;
        for (Strategy arm : arms_) {
            bool ok = true;
            for (Subject s : subjects) ok = ok && routable(arm, s);
            if (ok) out.push_back(arm);
        }
        return out;
    }

    // Uniform, deterministic per-session arm choice: the same key always maps
    // to the same arm, and distinct keys spread evenly across routable arms.
    Strategy assign(std::string_view session_key) const {
        const std::vector<Strategy> routable = routable_arms();
        if (routable.empty()) throw ModelError("registry: no routable strategy");
        const std::uint64_t h = splitmix64(splitmix64(assignment_seed_) ^ fnv1a64(session_key));
        return routable[h % routable.size()];
    }

    // Pure dispatch to the owning module; adds no filtering or reordering.
    std::vector<Recommendation> recommend(Strategy strategy, const std::string& query_id,
                                          std::size_t n) const {
        const QuestionRecord& query = corpus_->require(query_id);
        switch (strategy) {
            case Strategy::cosine:
                return recommend_cosine(*corpus_, query_id, n);
            case Strategy::som: {
                const SomModel* model = som_for(query.subject);
                if (!model) {
                    throw ModelError("missing SOM for " + std::string(subject_name(query.subject)));
                }
                return recommend_som(*model, *corpus_, query_id, n);
            }
            case Strategy::gmm_kl: {
                const GmmModel* model = gmm_for(query.subject);
                if (!model) {
                    throw ModelError("missing GMM for " + std::string(subject_name(query.subject)));
                }
                return recommend_gmm_kl(*model, *corpus_, query_id, n, divergence);
            }
            case Strategy::gmm_cluster: {
                const GmmModel* model = gmm_for(query.subject);
                if (!model) {
                    throw ModelError("missing GMM for " + std::string(subject_name(query.subject)));
                }
                return recommend_gmm_cluster(*model, *corpus_, query_id, n);
            }
        }
        throw ModelError("unknown strategy");
    }

private:
    std::shared_ptr<const Corpus> corpus_;
    std::uint64_t assignment_seed_;
    std::vector<Strategy> arms_;
    std::array<std::optional<SomModel>, 4> som_;
    std::array<std::optional<GmmModel>, 4> gmm_;
};

// --- manifest --------------------------------------------------------------
//
// A registry manifest names the corpus and the per-subject model files:
// {
//   "format": "qrec-registry", "version": 1,
//   "corpus": "corpus.jsonl", "assignment_seed": 42,
//   "arms": ["cosineSimilarityAlg", ...],
//   "divergence": "kl_query_to_candidate",
//   "som": {"XYZ": "som_XYZ.json", ...}, "gmm": {...}
// }
// Relative paths resolve against the manifest's directory.

inline constexpr int kRegistryFormatVersion = 1;

struct RegistryManifest {
    std::string corpus_path;
    std::uint64_t assignment_seed = 0;
    std::vector<Strategy> arms = default_arms();
    Divergence divergence = Divergence::kl_query_to_candidate;
    std::map<Subject, std::string> som_paths;
    std::map<Subject, std::string> gmm_paths;
};

inline void save_registry_manifest(const RegistryManifest& manifest,
                                   const std::filesystem::path& path) {
    nlohmann::json arms = nlohmann::json::array();
    for (Strategy s : manifest.arms) arms.push_back(std::string(strategy_name(s)));
    nlohmann::json som = nlohmann::json::object();
    for (const auto& [subject, file] : manifest.som_paths) {
        som[std::string(subject_name(subject))] = file;
    }
    nlohmann::json gmm = nlohmann::json::object();
    for (const auto& [subject, file] : manifest.gmm_paths) {
        gmm[std::string(subject_name(subject))] = file;
    }
    const nlohmann::json j{{"format", "qrec-registry"},
                           {"version", kRegistryFormatVersion},
                           {"corpus", manifest.corpus_path},
                           {"assignment_seed", manifest.assignment_seed},
                           {"arms", std::move(arms)},
                           {"divergence", std::string(divergence_name(manifest.divergence))},
                           {"som", std::move(som)},
                           {"gmm", std::move(gmm)}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write registry manifest " + path.string());
    out << j.dump(2) << "\n";
}

inline RegistryManifest load_registry_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open registry manifest " + path.string());
    nlohmann::json j;
    try {
        in >> j;
        if (j.at("format").get<std::string>() != "qrec-registry") {
            throw DataError("not a registry manifest");
        }
        if (j.at("version").get<int>() != kRegistryFormatVersion) {
            throw DataError("unsupported registry manifest version " + j.at("version").dump());
        }
        RegistryManifest manifest;
        manifest.corpus_path = j.at("corpus").get<std::string>();
        manifest.assignment_seed = j.at("assignment_seed").get<std::uint64_t>();
        manifest.arms.clear();
        for (const auto& arm : j.at("arms")) {
            manifest.arms.push_back(parse_strategy(arm.get<std::string>()));
        }
        if (j.contains("divergence")) {
            manifest.divergence = parse_divergence(j.at("divergence").get<std::string>());
        }
        for (const auto& [subject, file] : j.at("som").items()) {
            manifest.som_paths.emplace(parse_subject(subject), file.get<std::string>());
        }
        for (const auto& [subject, file] : j.at("gmm").items()) {
            manifest.gmm_paths.emplace(parse_subject(subject), file.get<std::string>());
        }
        return manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid registry manifest " + path.string() + ": " + e.what());
    }
}

// Loads the corpus and every model the manifest names, validating each against
// the corpus as it is registered.
inline StrategyRegistry load_registry(const std::filesystem::path& manifest_path);

}  // namespace qrec

#include "qrec/corpus_io.hpp"

namespace qrec {

inline StrategyRegistry load_registry(const std::filesystem::path& manifest_path) {
    const RegistryManifest manifest = load_registry_manifest(manifest_path);
    const std::filesystem::path base = manifest_path.parent_path();
    auto resolve = [&base](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    auto corpus = std::make_shared<const Corpus>(load_corpus(resolve(manifest.corpus_path)));
    StrategyRegistry registry(std::move(corpus), manifest.assignment_seed, manifest.arms);
    registry.divergence = manifest.divergence;
    for (const auto& [subject, file] : manifest.som_paths) {
        SomModel model = load_som(resolve(file));
        if (model.subject != subject) {
            throw ModelError("registry manifest: " + file + " holds subject " +
                             std::string(subject_name(model.subject)) + ", expected " +
                             std::string(subject_name(subject)));
        }
        registry.register_som(std::move(model));
    }
    for (const auto& [subject, file] : manifest.gmm_paths) {
        GmmModel model = load_gmm(resolve(file));
        if (model.subject != subject) {
            throw ModelError("registry manifest: " + file + " holds subject " +
                             std::string(subject_name(model.subject)) + ", expected " +
                             std::string(subject_name(subject)));
        }
        registry.register_gmm(std::move(model));
    }
    return registry;
}

}  // namespace qrec
