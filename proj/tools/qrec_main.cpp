// qrec: train, query and evaluate math-question recommenders over precomputed
// embeddings. Subcommands: ingest, train, select-k, recommend, assign,
// analyze, gen-fixtures. Exit codes: 0 success, 1 usage error, 2 data error,
// 3 model error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qrec/qrec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::vector<qrec::Subject> parse_subject_list(const std::string& csv) {
    std::vector<qrec::Subject> out;
    std::stringstream ss(csv);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (!token.empty()) out.push_back(qrec::parse_subject(token));
    }
    if (out.empty()) throw qrec::DataError("empty subject list");
    return out;
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw qrec::DataError("cannot write " + path.string());
    out << content;
    if (!out) throw qrec::DataError("failed writing " + path.string());
}

// --- ingest -------------------------------------------------------------------

struct IngestArgs {
    std::string corpus;
    std::string out;
};

int run_ingest(const qrec::RunConfig&, const IngestArgs& args) {
    const qrec::Corpus corpus = qrec::load_corpus(args.corpus);
    if (!args.out.empty()) qrec::save_corpus(corpus, args.out);
    ordered_json per_subject = ordered_json::object();
    for (qrec::Subject s : corpus.subjects_present()) {
        per_subject[std::string(qrec::subject_name(s))] = corpus.subject_indices(s).size();
    }
    ordered_json summary{{"records", corpus.size()},
                         {"dim", corpus.dim()},
                         {"per_subject", std::move(per_subject)}};
    if (!args.out.empty()) summary["normalized"] = args.out;
    std::cout << summary.dump(2) << "\n";
    return 0;
}

// --- train --------------------------------------------------------------------

struct TrainArgs {
    std::string subjects;  // empty = all present
    bool som_only = false;
    bool gmm_only = false;
};

int run_train(const qrec::RunConfig& cfg, const TrainArgs& args) {
    if (cfg.paths.corpus.empty()) throw qrec::DataError("train: --corpus is required");
    const fs::path out_dir = cfg.paths.out_dir;
    fs::create_directories(out_dir);

    const qrec::Corpus corpus = qrec::load_corpus(cfg.paths.corpus);
    std::vector<qrec::Subject> subjects = args.subjects.empty()
                                              ? corpus.subjects_present()
                                              : parse_subject_list(args.subjects);

    qrec::RegistryManifest manifest;
    manifest.corpus_path = fs::absolute(cfg.paths.corpus).string();
    manifest.assignment_seed = cfg.seed;
    manifest.arms = cfg.arms;
    manifest.divergence = cfg.divergence;

    ordered_json summary = ordered_json::object();
    for (qrec::Subject subject : subjects) {
        const std::string name(qrec::subject_name(subject));
        ordered_json entry = ordered_json::object();

        if (!args.gmm_only) {
            qrec::SomConfig som_config = cfg.som;
            som_config.seed = qrec::derive_seed(cfg.seed, "som:" + name);
            const qrec::SomModel model = qrec::train_som(corpus, subject, som_config);
            const fs::path file = out_dir / ("som_" + name + ".json");
            qrec::save_som(model, file);
            qrec::export_assignments_csv(model, out_dir / ("som_assignments_" + name + ".csv"));
            manifest.som_paths[subject] = file.filename().string();
            entry["som"] = {{"file", file.string()},
                            {"quantization_error", qrec::quantization_error(model, corpus)}};
        }
        if (!args.som_only) {
            qrec::GmmConfig gmm_config = cfg.gmm;
            gmm_config.k = cfg.gmm_k_override != 0 ? cfg.gmm_k_override
                                                   : cfg.components.for_subject(subject);
            gmm_config.seed = qrec::derive_seed(cfg.seed, "gmm:" + name);
            const qrec::GmmModel model = qrec::fit_gmm(corpus, subject, gmm_config);
            const fs::path file = out_dir / ("gmm_" + name + ".json");
            qrec::save_gmm(model, file);
            manifest.gmm_paths[subject] = file.filename().string();
            entry["gmm"] = {{"file", file.string()},
                            {"k", gmm_config.k},
                            {"converged", model.converged},
                            {"final_log_likelihood", model.final_log_likelihood},
                            {"em_iterations", model.log_likelihood_path.size()}};
        }
        summary[name] = std::move(entry);
    }

    qrec::save_registry_manifest(manifest, out_dir / "manifest.json");
    summary["manifest"] = (out_dir / "manifest.json").string();
    std::cout << summary.dump(2) << "\n";
    return 0;
}

// --- select-k ------------------------------------------------------------------

struct SelectKArgs {
    std::string subject;
    std::size_t k_min = 1;
    std::size_t k_max = 8;
    std::string out;
};

int run_select_k(const qrec::RunConfig& cfg, const SelectKArgs& args) {
    if (cfg.paths.corpus.empty()) throw qrec::DataError("select-k: --corpus is required");
    const qrec::Corpus corpus = qrec::load_corpus(cfg.paths.corpus);
    const qrec::Subject subject = qrec::parse_subject(args.subject);

    qrec::GmmConfig base = cfg.gmm;
    base.seed = cfg.seed;
    const qrec::SelectKReport report =
        qrec::select_k(corpus, subject, args.k_min, args.k_max, base);

    if (!args.out.empty()) qrec::save_select_k_csv(report, args.out);

    ordered_json rows = ordered_json::array();
    for (const qrec::SelectKRow& row : report.rows) {
        ordered_json r{{"k", row.k}};
        r["bic"] = row.bic ? ordered_json(*row.bic) : ordered_json(nullptr);
        r["silhouette"] = row.silhouette ? ordered_json(*row.silhouette) : ordered_json(nullptr);
        r["converged"] = row.converged;
        r["log_likelihood"] =
            row.log_likelihood ? ordered_json(*row.log_likelihood) : ordered_json(nullptr);
        if (!row.error.empty()) r["error"] = row.error;
        rows.push_back(std::move(r));
    }
    ordered_json out{{"subject", std::string(qrec::subject_name(subject))},
                     {"chosen_k", report.chosen_k},
                     {"rows", std::move(rows)}};
    if (!args.out.empty()) out["csv"] = args.out;
    std::cout << out.dump(2) << "\n";
    return 0;
}

// --- recommend / assign ----------------------------------------------------------

qrec::StrategyRegistry build_registry(const qrec::RunConfig& cfg, const std::string& manifest) {
    if (!manifest.empty()) return qrec::load_registry(manifest);
    if (cfg.paths.corpus.empty()) {
        throw qrec::DataError("either --manifest or --corpus is required");
    }
    auto corpus = std::make_shared<const qrec::Corpus>(qrec::load_corpus(cfg.paths.corpus));
    qrec::StrategyRegistry registry(std::move(corpus), cfg.seed, cfg.arms);
    registry.divergence = cfg.divergence;
    const fs::path models_dir = cfg.paths.models_dir;
    for (qrec::Subject subject : registry.corpus().subjects_present()) {
        const std::string name(qrec::subject_name(subject));
        const fs::path som_file = models_dir / ("som_" + name + ".json");
        if (fs::exists(som_file)) registry.register_som(qrec::load_som(som_file));
        const fs::path gmm_file = models_dir / ("gmm_" + name + ".json");
        if (fs::exists(gmm_file)) registry.register_gmm(qrec::load_gmm(gmm_file));
    }
    return registry;
}

struct RecommendArgs {
    std::string manifest;
    std::string query;
    std::string strategy = "cosineSimilarityAlg";
    std::size_t n = 5;
};

int run_recommend(const qrec::RunConfig& cfg, const RecommendArgs& args) {
    const qrec::StrategyRegistry registry = build_registry(cfg, args.manifest);
    const qrec::Strategy strategy = qrec::parse_strategy(args.strategy);
    const std::vector<qrec::Recommendation> recs =
        registry.recommend(strategy, args.query, args.n);
    ordered_json out = ordered_json::array();
    for (const qrec::Recommendation& r : recs) {
        out.push_back({{"question_id", r.question_id}, {"score", r.score}, {"rank", r.rank}});
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

struct AssignArgs {
    std::string manifest;
    std::string session_key;
};

int run_assign(const qrec::RunConfig& cfg, const AssignArgs& args) {
    const qrec::StrategyRegistry registry = build_registry(cfg, args.manifest);
    const qrec::Strategy strategy = registry.assign(args.session_key);
    ordered_json out{{"session_key", args.session_key},
                     {"strategy", std::string(qrec::strategy_name(strategy))}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

// --- analyze -------------------------------------------------------------------

struct AnalyzeArgs {
    std::string out_json;
    std::string out_text;
};

int run_analyze(const qrec::RunConfig& cfg, const AnalyzeArgs& args) {
    if (cfg.paths.sessions.empty() || cfg.paths.questions.empty()) {
        throw qrec::DataError("analyze: --sessions and --questions are required");
    }
    const qrec::SessionLog log =
        qrec::load_session_log(cfg.paths.sessions, cfg.paths.questions);
    const qrec::Report report = qrec::build_report(log, cfg.report);
    const std::string text = qrec::report_to_text(report);
    if (!args.out_json.empty()) {
        write_text_file(args.out_json, qrec::report_to_json(report).dump(2) + "\n");
    }
    if (!args.out_text.empty()) write_text_file(args.out_text, text);
    std::cout << text;
    return 0;
}

// --- gen-fixtures -----------------------------------------------------------------

struct GenFixturesArgs {
    std::string kind = "all";  // blobs | logs | all
    std::string subjects = "XYZ,KVA,NOG,DTK";
    std::size_t questions_per_subject = 200;
    std::size_t blobs_per_subject = 4;
    std::size_t dim = 8;
    double separation = 10.0;
    double blob_std = 1.0;
};

int run_gen_fixtures(const qrec::RunConfig& cfg, const GenFixturesArgs& args) {
    const fs::path out_dir = cfg.paths.out_dir;
    fs::create_directories(out_dir);
    ordered_json summary = ordered_json::object();

    if (args.kind == "blobs" || args.kind == "all") {
        if (args.questions_per_subject % args.blobs_per_subject != 0) {
            throw qrec::DataError(
                "gen-fixtures: questions-per-subject must be divisible by blobs-per-subject");
        }
        std::vector<qrec::Corpus> parts;
        std::ofstream labels(out_dir / "blob_labels.csv");
        if (!labels) throw qrec::DataError("cannot write blob_labels.csv");
        labels << "question_id,blob\n";
        for (qrec::Subject subject : parse_subject_list(args.subjects)) {
            qrec::BlobSpec spec;
            spec.subject = subject;
            spec.n_blobs = args.blobs_per_subject;
            spec.points_per_blob = args.questions_per_subject / args.blobs_per_subject;
            spec.dim = args.dim;
            spec.center_separation = args.separation;
            spec.blob_std = args.blob_std;
            spec.seed = qrec::derive_seed(cfg.seed, "blobs:" +
                                                        std::string(qrec::subject_name(subject)));
            qrec::BlobCorpus blob = qrec::generate_blob_corpus(spec);
            for (const auto& [id, label] : blob.labels) labels << id << "," << label << "\n";
            parts.push_back(std::move(blob.corpus));
        }
        const qrec::Corpus corpus = qrec::merge_corpora(parts);
        qrec::save_corpus(corpus, out_dir / "corpus.jsonl");
        summary["corpus"] = (out_dir / "corpus.jsonl").string();
        summary["labels"] = (out_dir / "blob_labels.csv").string();
        summary["questions"] = corpus.size();
    }

    if (args.kind == "logs" || args.kind == "all") {
        // Three-arm scripted log with exact per-arm correctness rates and a
        // spread of ratings; 200 sessions x 5 questions per arm.
        qrec::SessionScript script;
        script.seed = qrec::derive_seed(cfg.seed, "logs");
        const std::vector<std::pair<qrec::Strategy, double>> rates = {
            {qrec::Strategy::cosine, 0.592},
            {qrec::Strategy::gmm_kl, 0.609},
            {qrec::Strategy::som, 0.612}};
        for (const auto& [arm, rate] : rates) {
            qrec::ArmScript a;
            a.arm = arm;
            a.sessions = 200;
            a.questions_per_session = 5;
            a.correctness_rate = rate;
            a.ratings = {5, 4, 0, 3, 5};
            a.response_times_seconds = {40.0, 65.0, 90.0, 30.0, 120.0, 55.0, 75.0};
            script.arms.push_back(std::move(a));
        }
        const qrec::SessionLog log = qrec::generate_session_log(script);
        qrec::save_session_log(log, out_dir / "sessions.csv", out_dir / "session_questions.csv");
        summary["sessions"] = (out_dir / "sessions.csv").string();
        summary["session_questions"] = (out_dir / "session_questions.csv").string();
        summary["session_count"] = log.sessions.size();
    }

    if (summary.empty()) {
        throw qrec::DataError("gen-fixtures: --kind must be blobs, logs or all");
    }
    std::cout << summary.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    // --config is applied before flag binding so flags override file values.
    std::string config_path;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--config" && i + 1 < argc) {
            config_path = argv[i + 1];
        } else if (arg.rfind("--config=", 0) == 0) {
            config_path = arg.substr(9);
        }
    }

    qrec::RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = qrec::RunConfig::load(config_path);
    } catch (const qrec::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    CLI::App app{"Math-question recommendation engine and evaluation toolkit"};
    app.require_subcommand(0, 1);
    app.fallthrough();  // global flags (--seed, --config) work after a subcommand too
    bool dump_config = false;
    std::string config_opt;
    app.add_option("--config", config_opt, "JSON config file (flags override its values)");
    app.add_option("--seed", cfg.seed, "master seed fanned out to every module");
    app.add_flag("--dump-config", dump_config, "print the effective config as JSON and exit");

    std::function<int()> action;

    auto* ingest = app.add_subcommand("ingest", "Validate a corpus file and report its shape");
    IngestArgs ingest_args;
    ingest->add_option("--corpus", ingest_args.corpus, "corpus JSONL file")->required();
    ingest->add_option("--out", ingest_args.out, "write the cleaned, validated corpus here");
    ingest->callback([&]() { action = [&]() { return run_ingest(cfg, ingest_args); }; });

    auto* train = app.add_subcommand("train", "Train per-subject SOM and GMM models");
    TrainArgs train_args;
    train->add_option("--corpus", cfg.paths.corpus, "corpus JSONL file");
    train->add_option("--out-dir", cfg.paths.out_dir, "directory for model files + manifest");
    train->add_option("--subjects", train_args.subjects, "comma-separated subject filter");
    train->add_flag("--som-only", train_args.som_only, "train only SOM models");
    train->add_flag("--gmm-only", train_args.gmm_only, "train only GMM models");
    train->add_option("--rows", cfg.som.rows, "SOM grid rows");
    train->add_option("--cols", cfg.som.cols, "SOM grid columns");
    train->add_option("--epochs", cfg.som.epochs, "SOM training epochs");
    train->add_option("--lr0", cfg.som.lr0, "SOM initial learning rate");
    train->add_option("--radius0", cfg.som.radius0, "SOM initial radius (0 = max(rows,cols)/2)");
    train->add_option("--gmm-k", cfg.gmm_k_override, "force one component count for every subject");
    train->add_option("--tol", cfg.gmm.tol, "EM log-likelihood tolerance");
    train->add_option("--max-iter", cfg.gmm.max_iter, "maximum EM iterations");
    train->add_option("--reg-covar", cfg.gmm.reg_covar, "covariance diagonal regularization");
    train->callback([&]() { action = [&]() { return run_train(cfg, train_args); }; });

    auto* select_k = app.add_subcommand("select-k", "BIC/silhouette sweep over component counts");
    SelectKArgs select_args;
    select_k->add_option("--corpus", cfg.paths.corpus, "corpus JSONL file");
    select_k->add_option("--subject", select_args.subject, "subject to sweep")->required();
    select_k->add_option("--k-min", select_args.k_min, "smallest k");
    select_k->add_option("--k-max", select_args.k_max, "largest k");
    select_k->add_option("--out", select_args.out, "selection report CSV path");
    select_k->add_option("--tol", cfg.gmm.tol, "EM log-likelihood tolerance");
    select_k->add_option("--max-iter", cfg.gmm.max_iter, "maximum EM iterations");
    select_k->add_option("--reg-covar", cfg.gmm.reg_covar, "covariance diagonal regularization");
    select_k->callback([&]() { action = [&]() { return run_select_k(cfg, select_args); }; });

    auto* recommend = app.add_subcommand("recommend", "Rank the most similar questions");
    RecommendArgs rec_args;
    recommend->add_option("--manifest", rec_args.manifest, "registry manifest from train");
    recommend->add_option("--corpus", cfg.paths.corpus, "corpus JSONL (alternative to manifest)");
    recommend->add_option("--models-dir", cfg.paths.models_dir,
                          "model directory used with --corpus");
    recommend->add_option("--query", rec_args.query, "query question id")->required();
    recommend->add_option("--strategy", rec_args.strategy,
                          "cosineSimilarityAlg | somSimilarityAlg | gmmSimilarityAlg | gmmClusterAlg");
    recommend->add_option("-n,--n", rec_args.n, "number of recommendations");
    recommend->callback([&]() { action = [&]() { return run_recommend(cfg, rec_args); }; });

    auto* assign = app.add_subcommand("assign", "Deterministic A/B arm for a session key");
    AssignArgs assign_args;
    assign->add_option("--manifest", assign_args.manifest, "registry manifest from train");
    assign->add_option("--corpus", cfg.paths.corpus, "corpus JSONL (alternative to manifest)");
    assign->add_option("--models-dir", cfg.paths.models_dir,
                       "model directory used with --corpus");
    assign->add_option("--session-key", assign_args.session_key, "session key")->required();
    assign->callback([&]() { action = [&]() { return run_assign(cfg, assign_args); }; });

    auto* analyze = app.add_subcommand("analyze", "Compute the evaluation report from log CSVs");
    AnalyzeArgs analyze_args;
    analyze->add_option("--sessions", cfg.paths.sessions, "sessions.csv");
    analyze->add_option("--questions", cfg.paths.questions, "session_questions.csv");
    analyze->add_option("--out-json", analyze_args.out_json, "write the report as JSON here");
    analyze->add_option("--out-text", analyze_args.out_text, "write the text report here");
    double window_lo = -1.0, window_hi = -1.0;
    bool no_window = false, keep_missing = false, no_trailing = false;
    double min_seconds = -1.0;
    analyze->add_option("--window-lo", window_lo, "duration percentile window low (percent)");
    analyze->add_option("--window-hi", window_hi, "duration percentile window high (percent)");
    analyze->add_flag("--no-window", no_window, "disable the duration percentile window");
    analyze->add_option("--min-seconds", min_seconds, "minimum session duration in seconds");
    analyze->add_flag("--keep-missing-duration", keep_missing,
                      "keep sessions without a duration in filtered sections");
    analyze->add_flag("--no-trailing-streaks", no_trailing,
                      "ignore wrong-answer runs cut off by session end");
    analyze->callback([&]() {
        action = [&, window_lo, window_hi, no_window, keep_missing, min_seconds, no_trailing]() {
            if (window_lo >= 0.0 && window_hi >= 0.0) {
                cfg.report.durations.percentile_window = {window_lo, window_hi};
            }
            if (no_window) cfg.report.durations.percentile_window = std::nullopt;
            if (min_seconds >= 0.0) {
                cfg.report.durations.min_duration_seconds = min_seconds;
                cfg.report.questions_per_session.min_duration_seconds = min_seconds;
            }
            if (keep_missing) {
                cfg.report.durations.drop_missing_duration = false;
                cfg.report.questions_per_session.drop_missing_duration = false;
            }
            if (no_trailing) cfg.report.streak_count_trailing = false;
            return run_analyze(cfg, analyze_args);
        };
    });

    auto* gen = app.add_subcommand("gen-fixtures", "Write synthetic corpora and session logs");
    GenFixturesArgs gen_args;
    gen->add_option("--out-dir", cfg.paths.out_dir, "output directory");
    gen->add_option("--kind", gen_args.kind, "blobs | logs | all");
    gen->add_option("--subjects", gen_args.subjects, "comma-separated subjects");
    gen->add_option("--questions-per-subject", gen_args.questions_per_subject,
                    "corpus size per subject");
    gen->add_option("--blobs-per-subject", gen_args.blobs_per_subject, "clusters per subject");
    gen->add_option("--dim", gen_args.dim, "embedding dimension");
    gen->add_option("--separation", gen_args.separation, "minimum blob center separation");
    gen->add_option("--std", gen_args.blob_std, "blob standard deviation");
    gen->callback([&]() { action = [&]() { return run_gen_fixtures(cfg, gen_args); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (dump_config) {
        std::cout << cfg.to_json().dump(2) << "\n";
        return 0;
    }
    if (!action) {
        std::cerr << app.help();
        return 1;
    }
    try {
        return action();
    } catch (const qrec::ModelError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return 3;
    } catch (const qrec::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
