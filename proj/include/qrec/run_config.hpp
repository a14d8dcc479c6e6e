#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qrec/analytics.hpp"
#include "qrec/gmm.hpp"
#include "qrec/som.hpp"
#include "qrec/strategy.hpp"

namespace qrec {

// One declarative configuration for the whole pipeline. Every default is the
// production value: 5x8 SOM grid, 1000 epochs, initial learning rate 0.5, EM
// tolerance 1e-3 with at most 100 iterations, and per-subject component counts
// 16/18/15/31. CLI flags override individual fields.
struct RunConfig {
    std::uint64_t seed = 42;

    struct Paths {
        std::string corpus;
        std::string models_dir = "models";
        std::string sessions;
        std::string questions;
        std::string out_dir = "out";
    } paths;

    std::vector<Strategy> arms = default_arms();
    Divergence divergence = Divergence::kl_query_to_candidate;

    SomConfig som;                    // rows 5, cols 8, epochs 1000, lr0 0.5
    GmmConfig gmm;                    // tol 1e-3, max_iter 100, reg_covar 1e-6
    SubjectComponentCounts components;  // 16 / 18 / 15 / 31
    std::size_t gmm_k_override = 0;   // nonzero forces one k for every subject

    ReportPolicies report;

    nlohmann::ordered_json to_json() const {
        using json = nlohmann::ordered_json;
        json arms_json = json::array();
        for (Strategy s : arms) arms_json.push_back(std::string(strategy_name(s)));
        json j;
        j["seed"] = seed;
        j["paths"] = {{"corpus", paths.corpus},
                      {"models_dir", paths.models_dir},
                      {"sessions", paths.sessions},
                      {"questions", paths.questions},
                      {"out_dir", paths.out_dir}};
        j["arms"] = std::move(arms_json);
        j["divergence"] = std::string(divergence_name(divergence));
        j["som"] = {{"rows", som.rows},
                    {"cols", som.cols},
                    {"epochs", som.epochs},
                    {"lr0", som.lr0},
                    {"radius0", som.radius0}};
        j["gmm"] = {{"covariance", "full"},
                    {"tol", gmm.tol},
                    {"max_iter", gmm.max_iter},
                    {"reg_covar", gmm.reg_covar},
                    {"components",
                     {{"XYZ", components.xyz},
                      {"KVA", components.kva},
                      {"NOG", components.nog},
                      {"DTK", components.dtk}}},
                    {"k_override", gmm_k_override}};
        j["report"] = {
            {"durations", detail::filter_policy_to_json(report.durations)},
            {"questions_per_session",
             detail::filter_policy_to_json(report.questions_per_session)},
            {"streak_count_trailing", report.streak_count_trailing}};
        return j;
    }

    static FilterPolicy filter_policy_from_json(const nlohmann::json& j, FilterPolicy base) {
        if (j.contains("drop_missing_duration")) {
            base.drop_missing_duration = j.at("drop_missing_duration").get<bool>();
        }
        if (j.contains("min_duration_seconds")) {
            const auto& v = j.at("min_duration_seconds");
            base.min_duration_seconds =
                v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
        }
        if (j.contains("percentile_window")) {
            const auto& v = j.at("percentile_window");
            if (v.is_null()) {
                base.percentile_window = std::nullopt;
            } else {
                base.percentile_window =
                    std::pair<double, double>{v.at(0).get<double>(), v.at(1).get<double>()};
            }
        }
        return base;
    }

    // Merges file values over the built-in defaults; unknown keys are ignored
    // so configs stay forward compatible.
    static RunConfig from_json(const nlohmann::json& j) {
        RunConfig c;
        try {
            if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
            if (j.contains("paths")) {
                const auto& p = j.at("paths");
                if (p.contains("corpus")) c.paths.corpus = p.at("corpus").get<std::string>();
                if (p.contains("models_dir")) {
                    c.paths.models_dir = p.at("models_dir").get<std::string>();
                }
                if (p.contains("sessions")) c.paths.sessions = p.at("sessions").get<std::string>();
                if (p.contains("questions")) {
                    c.paths.questions = p.at("questions").get<std::string>();
                }
                if (p.contains("out_dir")) c.paths.out_dir = p.at("out_dir").get<std::string>();
            }
            if (j.contains("arms")) {
                c.arms.clear();
                for (const auto& arm : j.at("arms")) {
                    c.arms.push_back(parse_strategy(arm.get<std::string>()));
                }
            }
            if (j.contains("divergence")) {
                c.divergence = parse_divergence(j.at("divergence").get<std::string>());
            }
            if (j.contains("som")) {
                const auto& s = j.at("som");
                if (s.contains("rows")) c.som.rows = s.at("rows").get<std::size_t>();
                if (s.contains("cols")) c.som.cols = s.at("cols").get<std::size_t>();
                if (s.contains("epochs")) c.som.epochs = s.at("epochs").get<std::size_t>();
                if (s.contains("lr0")) c.som.lr0 = s.at("lr0").get<double>();
                if (s.contains("radius0")) c.som.radius0 = s.at("radius0").get<double>();
            }
            if (j.contains("gmm")) {
                const auto& g = j.at("gmm");
                if (g.contains("covariance") && g.at("covariance").get<std::string>() != "full") {
                    throw DataError("config: only full covariance is supported");
                }
                if (g.contains("tol")) c.gmm.tol = g.at("tol").get<double>();
                if (g.contains("max_iter")) c.gmm.max_iter = g.at("max_iter").get<std::size_t>();
                if (g.contains("reg_covar")) c.gmm.reg_covar = g.at("reg_covar").get<double>();
                if (g.contains("k_override")) {
                    c.gmm_k_override = g.at("k_override").get<std::size_t>();
                }
                if (g.contains("components")) {
                    const auto& k = g.at("components");
                    if (k.contains("XYZ")) c.components.xyz = k.at("XYZ").get<std::size_t>();
                    if (k.contains("KVA")) c.components.kva = k.at("KVA").get<std::size_t>();
                    if (k.contains("NOG")) c.components.nog = k.at("NOG").get<std::size_t>();
                    if (k.contains("DTK")) c.components.dtk = k.at("DTK").get<std::size_t>();
                }
            }
            if (j.contains("report")) {
                const auto& r = j.at("report");
                if (r.contains("durations")) {
                    c.report.durations =
                        filter_policy_from_json(r.at("durations"), c.report.durations);
                }
                if (r.contains("questions_per_session")) {
                    c.report.questions_per_session = filter_policy_from_json(
                        r.at("questions_per_session"), c.report.questions_per_session);
                }
                if (r.contains("streak_count_trailing")) {
                    c.report.streak_count_trailing = r.at("streak_count_trailing").get<bool>();
                }
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("invalid config: ") + e.what());
        }
        return c;
    }

    static RunConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open config file " + path.string());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DataError("invalid config file " + path.string() + ": " + e.what());
        }
        return from_json(j);
    }
};

}  // namespace qrec
