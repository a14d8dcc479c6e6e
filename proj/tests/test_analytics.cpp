#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qrec/analytics.hpp"
#include "qrec/testkit.hpp"

#include "helpers.hpp"

using namespace qrec;

namespace {

QuizSession make_session(std::string id, Strategy arm, double start, std::optional<double> minutes,
                         std::optional<int> rating = std::nullopt) {
    QuizSession s;
    s.session_id = std::move(id);
    s.algorithm = arm;
    s.question_types = {Subject::xyz};
    s.started_at = start;
    if (minutes) s.ended_at = start + *minutes * 60.0;
    s.rating = rating;
    return s;
}

SessionQuestion make_question(std::string session, std::size_t order,
                              std::optional<bool> correct, double presented = 0.0,
                              std::optional<double> response_seconds = 30.0) {
    SessionQuestion q;
    q.session_id = std::move(session);
    q.question_id = q.session_id + "-q" + std::to_string(order);
    q.sequence_order = order;
    q.presented_at = presented;
    if (response_seconds) q.answered_at = presented + *response_seconds;
    q.correct = correct;
    return q;
}

}  // namespace

TEST_CASE("ISO-8601 parsing and formatting", "[analytics]") {
    CHECK(parse_iso8601("1970-01-01T00:00:00Z") == 0.0);
    CHECK(parse_iso8601("1970-01-02T00:00:00Z") == 86400.0);
    CHECK(parse_iso8601("2025-01-01T00:00:00Z") == 1735689600.0);
    CHECK(parse_iso8601("2025-01-01T00:00:00.500Z") == 1735689600.5);
    CHECK(parse_iso8601("2025-01-01T01:00:00+01:00") == 1735689600.0);
    CHECK(parse_iso8601("2024-12-31T23:00:00-01:00") == 1735689600.0);
    CHECK(parse_iso8601("2025-01-01T00:00:00") == 1735689600.0);  // bare = UTC

    CHECK(format_iso8601(1735689600.0) == "2025-01-01T00:00:00Z");
    CHECK(format_iso8601(1735689600.5) == "2025-01-01T00:00:00.500Z");
    CHECK(format_iso8601(0.0) == "1970-01-01T00:00:00Z");

    // Round trip across a spread of instants, to millisecond precision.
    Rng rng(6);
    for (int i = 0; i < 200; ++i) {
        const double t = std::round(rng.uniform(0.0, 4e9) * 1000.0) / 1000.0;
        CHECK(parse_iso8601(format_iso8601(t)) == Catch::Approx(t).margin(5e-4));
    }

    CHECK_THROWS_AS(parse_iso8601("not a time"), DataError);
    CHECK_THROWS_AS(parse_iso8601("2025-13-01T00:00:00Z"), DataError);
    CHECK_THROWS_AS(parse_iso8601("2025-01-01T25:00:00Z"), DataError);
    CHECK_THROWS_AS(parse_iso8601("2025-01-01T00:00:00Zjunk"), DataError);
}

TEST_CASE("session_duration_minutes", "[analytics]") {
    const double start = parse_iso8601("2025-03-05T10:00:00Z");

    SECTION("simple arithmetic") {
        auto s = make_session("s1", Strategy::cosine, start, std::nullopt);
        s.ended_at = parse_iso8601("2025-03-05T10:13:08Z");
        const auto minutes = session_duration_minutes(s);
        REQUIRE(minutes.has_value());
        CHECK(*minutes == Catch::Approx(13.0 + 8.0 / 60.0).margin(1e-9));
    }
    SECTION("absent end means absent duration") {
        CHECK(!session_duration_minutes(make_session("s1", Strategy::som, start, std::nullopt))
                   .has_value());
    }
    SECTION("negative duration is a data error") {
        auto s = make_session("s1", Strategy::som, start, std::nullopt);
        s.ended_at = start - 1.0;
        CHECK_THROWS_AS(session_duration_minutes(s), DataError);
    }
    SECTION("epoch-subtraction oracle over a thousand sessions") {
        Rng rng(8);
        for (int i = 0; i < 1000; ++i) {
            const double begin = rng.uniform(0.0, 2e9);
            const double extent = rng.uniform(0.0, 5e5);
            auto s = make_session("s", Strategy::gmm_kl, begin, std::nullopt);
            s.ended_at = begin + extent;
            CHECK(*session_duration_minutes(s) ==
                  Catch::Approx(((begin + extent) - begin) / 60.0).margin(1e-12));
        }
    }
}

TEST_CASE("filter_sessions retains the central 90 of 1..100 minutes", "[analytics]") {
    std::vector<QuizSession> sessions;
    for (int i = 1; i <= 100; ++i) {
        sessions.push_back(make_session("s" + std::to_string(i), Strategy::cosine, 1000.0,
                                        static_cast<double>(i)));
    }
    FilterPolicy policy;
    policy.percentile_window = {5.0, 95.0};
    const FilterResult result = filter_sessions(sessions, policy);

    CHECK(result.report.input == 100);
    CHECK(result.report.retained == 90);
    CHECK(result.report.dropped_outside_window == 10);
    CHECK(result.report.dropped_below_min == 0);
    // Exactly durations 6..95 survive the interpolated (5.95, 95.05) window.
    std::set<std::string> ids;
    for (const QuizSession& s : result.sessions) ids.insert(s.session_id);
    for (int i = 6; i <= 95; ++i) CHECK(ids.count("s" + std::to_string(i)) == 1);
}

TEST_CASE("filter_sessions rules", "[analytics]") {
    std::vector<QuizSession> sessions;
    sessions.push_back(make_session("tiny", Strategy::cosine, 0.0, 3.0 / 60.0));  // 3 seconds
    sessions.push_back(make_session("open", Strategy::cosine, 0.0, std::nullopt));
    sessions.push_back(make_session("ok", Strategy::cosine, 0.0, 10.0));

    SECTION("sub-5-second and missing-duration sessions are dropped") {
        const FilterResult result = filter_sessions(sessions, FilterPolicy{});
        CHECK(result.report.dropped_below_min == 1);
        CHECK(result.report.dropped_missing_duration == 1);
        REQUIRE(result.sessions.size() == 1);
        CHECK(result.sessions[0].session_id == "ok");
    }
    SECTION("a no-op policy keeps everything") {
        const FilterResult result = filter_sessions(sessions, FilterPolicy::none());
        CHECK(result.report.retained == 3);
    }
    SECTION("exclusions plus retained equals input") {
        const FilterResult result = filter_sessions(sessions, FilterPolicy{});
        CHECK(result.report.retained + result.report.dropped_below_min +
                  result.report.dropped_missing_duration +
                  result.report.dropped_outside_window ==
              result.report.input);
    }
    SECTION("inverted window is an error") {
        FilterPolicy policy;
        policy.percentile_window = {95.0, 5.0};
        CHECK_THROWS_AS(filter_sessions(sessions, policy), DataError);
    }
}

TEST_CASE("filter_sessions matches a sort-and-slice oracle", "[analytics]") {
    Rng rng(44);
    std::vector<QuizSession> sessions;
    for (int i = 0; i < 250; ++i) {
        std::optional<double> minutes;
        const double coin = rng.uniform();
        if (coin < 0.1) {
            minutes = std::nullopt;  // unfinished
        } else if (coin < 0.2) {
            minutes = rng.uniform(0.0, 4.0 / 60.0);  // below 5 s
        } else {
            minutes = rng.uniform(0.5, 300.0);
        }
        sessions.push_back(make_session("s" + std::to_string(i), Strategy::som, 0.0, minutes));
    }
    FilterPolicy policy;
    policy.percentile_window = {5.0, 95.0};
    const FilterResult result = filter_sessions(sessions, policy);

    // Oracle: apply the rules independently.
    std::vector<std::pair<double, std::string>> pool;
    for (const QuizSession& s : sessions) {
        const auto minutes = session_duration_minutes(s);
        if (!minutes || *minutes * 60.0 < 5.0) continue;
        pool.emplace_back(*minutes, s.session_id);
    }
    std::vector<double> durations;
    for (const auto& [minutes, id] : pool) durations.push_back(minutes);
    std::sort(durations.begin(), durations.end());
    const auto pct = [&durations](double p) {
        const double rank = (durations.size() - 1) * p / 100.0;
        const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
        const std::size_t hi = static_cast<std::size_t>(std::ceil(rank));
        return durations[lo] + (rank - lo) * (durations[hi] - durations[lo]);
    };
    const double lo = pct(5.0), hi = pct(95.0);
    std::set<std::string> expected;
    for (const auto& [minutes, id] : pool) {
        if (minutes >= lo && minutes <= hi) expected.insert(id);
    }
    std::set<std::string> actual;
    for (const QuizSession& s : result.sessions) actual.insert(s.session_id);
    CHECK(actual == expected);
}

TEST_CASE("summarize", "[analytics]") {
    SECTION("three values") {
        const SummaryStats s = summarize({1.0, 2.0, 3.0});
        CHECK(s.count == 3);
        CHECK(s.mean == 2.0);
        CHECK(s.std == 1.0);
        CHECK(s.min == 1.0);
        CHECK(s.p25 == 1.5);
        CHECK(s.p50 == 2.0);
        CHECK(s.p75 == 2.5);
        CHECK(s.max == 3.0);
    }
    SECTION("single value degenerates with std 0") {
        const SummaryStats s = summarize({5.0});
        CHECK(s.count == 1);
        CHECK(s.mean == 5.0);
        CHECK(s.std == 0.0);
        CHECK(s.min == 5.0);
        CHECK(s.p50 == 5.0);
        CHECK(s.max == 5.0);
    }
    SECTION("empty is an error") {
        CHECK_THROWS_AS(summarize({}), DataError);
    }
    SECTION("permutation invariant") {
        Rng rng(3);
        std::vector<double> values;
        for (int i = 0; i < 50; ++i) values.push_back(rng.uniform(-5.0, 20.0));
        const SummaryStats a = summarize(values);
        rng.shuffle(values);
        const SummaryStats b = summarize(values);
        CHECK(a.mean == b.mean);
        CHECK(a.p25 == b.p25);
        CHECK(a.max == b.max);
    }
    SECTION("published duration row as a generated fixture") {
        const auto sample = build_sample_with_stats(367, 25.63, 5.33, 13.13, 0.95, 257.73);
        const SummaryStats s = summarize(sample);
        CHECK(s.count == 367);
        CHECK(s.mean == Catch::Approx(25.63).margin(0.01));
        CHECK(s.p25 == Catch::Approx(5.33).margin(0.01));
        CHECK(s.p50 == Catch::Approx(13.13).margin(0.01));
        CHECK(s.max == Catch::Approx(257.73).margin(0.01));
        CHECK(s.min == Catch::Approx(0.95).margin(0.01));
    }
}

TEST_CASE("correctness_by_algorithm", "[analytics]") {
    SECTION("simple ratio") {
        SessionLog log;
        log.sessions.push_back(make_session("s1", Strategy::som, 0.0, 5.0));
        for (std::size_t i = 1; i <= 5; ++i) {
            log.questions.push_back(make_question("s1", i, i <= 3));
        }
        const auto rates = correctness_by_algorithm(log);
        REQUIRE(rates.count(Strategy::som) == 1);
        CHECK(*rates.at(Strategy::som).rate == Catch::Approx(0.6).margin(1e-12));
        CHECK(rates.at(Strategy::som).answered == 5);
    }
    SECTION("all flags absent yields an absent rate, reported") {
        SessionLog log;
        log.sessions.push_back(make_session("s1", Strategy::cosine, 0.0, 5.0));
        log.questions.push_back(make_question("s1", 1, std::nullopt));
        log.questions.push_back(make_question("s1", 2, std::nullopt));
        const auto rates = correctness_by_algorithm(log);
        REQUIRE(rates.count(Strategy::cosine) == 1);
        CHECK(!rates.at(Strategy::cosine).rate.has_value());
        CHECK(rates.at(Strategy::cosine).missing == 2);
    }
    SECTION("scripted per-arm targets recovered exactly") {
        SessionScript script;
        const std::vector<std::pair<Strategy, double>> targets = {
            {Strategy::cosine, 0.592}, {Strategy::gmm_kl, 0.609}, {Strategy::som, 0.612}};
        for (const auto& [arm, rate] : targets) {
            ArmScript a;
            a.arm = arm;
            a.sessions = 200;
            a.questions_per_session = 5;
            a.correctness_rate = rate;
            script.arms.push_back(a);
        }
        const SessionLog log = generate_session_log(script);
        const auto rates = correctness_by_algorithm(log);
        for (const auto& [arm, rate] : targets) {
            CHECK(*rates.at(arm).rate == Catch::Approx(rate).margin(1e-9));
        }
    }
}

TEST_CASE("response_times_by_algorithm", "[analytics]") {
    SECTION("single response") {
        SessionLog log;
        log.sessions.push_back(make_session("s1", Strategy::cosine, 0.0, 5.0));
        log.questions.push_back(make_question("s1", 1, true, 100.0, 64.49));
        const auto stats = response_times_by_algorithm(log);
        REQUIRE(stats.count(Strategy::cosine) == 1);
        CHECK(stats.at(Strategy::cosine).median == Catch::Approx(64.49));
        CHECK(stats.at(Strategy::cosine).mean == Catch::Approx(64.49));
        CHECK(stats.at(Strategy::cosine).p95 == Catch::Approx(64.49));
    }
    SECTION("published response-time profile as a generated fixture") {
        const auto sample = build_response_time_sample(64.49, 95.82, 295.92);
        SessionScript script;
        ArmScript a;
        a.arm = Strategy::cosine;
        a.sessions = 3;
        a.questions_per_session = 7;  // 21 questions total = sample size
        a.correctness_rate = 6.0 / 7.0;
        a.response_times_seconds = sample;
        script.arms.push_back(a);
        const SessionLog log = generate_session_log(script);
        const auto stats = response_times_by_algorithm(log);
        REQUIRE(stats.count(Strategy::cosine) == 1);
        CHECK(stats.at(Strategy::cosine).median == Catch::Approx(64.49).margin(0.5));
        CHECK(stats.at(Strategy::cosine).mean == Catch::Approx(95.82).margin(0.5));
        CHECK(stats.at(Strategy::cosine).p95 == Catch::Approx(295.92).margin(0.5));
    }
    SECTION("matches a sort-based oracle") {
        Rng rng(14);
        SessionLog log;
        log.sessions.push_back(make_session("s1", Strategy::som, 0.0, 60.0));
        std::vector<double> times;
        for (std::size_t i = 1; i <= 101; ++i) {
            const double rt = rng.uniform(1.0, 400.0);
            times.push_back(rt);
            log.questions.push_back(make_question("s1", i, true, i * 1000.0, rt));
        }
        std::sort(times.begin(), times.end());
        const auto stats = response_times_by_algorithm(log);
        CHECK(stats.at(Strategy::som).median == Catch::Approx(times[50]).margin(1e-9));
        CHECK(stats.at(Strategy::som).p95 == Catch::Approx(times[95]).margin(1e-9));
        const double mean = std::accumulate(times.begin(), times.end(), 0.0) / 101.0;
        CHECK(stats.at(Strategy::som).mean == Catch::Approx(mean).margin(1e-9));
    }
    SECTION("negative response time lists the offender") {
        SessionLog log;
        log.sessions.push_back(make_session("s1", Strategy::som, 0.0, 5.0));
        log.questions.push_back(make_question("s1", 1, true, 100.0, -5.0));
        CHECK_THROWS_WITH(response_times_by_algorithm(log),
                          Catch::Matchers::ContainsSubstring("s1-q1"));
    }
}

TEST_CASE("wrong_streaks run-length encoding", "[analytics]") {
    auto pattern_to_questions = [](const std::vector<std::optional<bool>>& pattern) {
        std::vector<SessionQuestion> out;
        for (std::size_t i = 0; i < pattern.size(); ++i) {
            out.push_back(make_question("s", i + 1, pattern[i]));
        }
        return out;
    };

    SECTION("hand counts") {
        // W W C W C -> [2, 1]
        CHECK(wrong_streaks(pattern_to_questions({false, false, true, false, true})) ==
              std::vector<std::size_t>{2, 1});
        CHECK(wrong_streaks(pattern_to_questions({true, true, true})).empty());
    }
    SECTION("trailing runs honor the policy switch") {
        const auto questions = pattern_to_questions({true, false, false});
        CHECK(wrong_streaks(questions, true) == std::vector<std::size_t>{2});
        CHECK(wrong_streaks(questions, false).empty());
    }
    SECTION("unanswered questions are skipped") {
        CHECK(wrong_streaks(pattern_to_questions({false, std::nullopt, false, true})) ==
              std::vector<std::size_t>{2});
    }
    SECTION("order comes from sequence_order, not input order") {
        auto questions = pattern_to_questions({false, true, false});
        std::swap(questions[0], questions[2]);
        CHECK(wrong_streaks(questions) == std::vector<std::size_t>{1, 1});
    }
    SECTION("matches a run-length oracle over random sessions") {
        Rng rng(500);
        for (int session = 0; session < 500; ++session) {
            const std::size_t len = 1 + rng.uniform_index(15);
            std::vector<std::optional<bool>> pattern;
            std::string bits;
            for (std::size_t i = 0; i < len; ++i) {
                const bool correct = rng.uniform() < 0.55;
                pattern.push_back(correct);
                bits.push_back(correct ? 'C' : 'W');
            }
            // Oracle: scan maximal W-runs in the string.
            std::vector<std::size_t> expected;
            std::size_t run = 0;
            for (char c : bits) {
                if (c == 'W') {
                    ++run;
                } else if (run > 0) {
                    expected.push_back(run);
                    run = 0;
                }
            }
            if (run > 0) expected.push_back(run);

            const auto actual = wrong_streaks(pattern_to_questions(pattern));
            CHECK(actual == expected);

            // Conservation: streak lengths sum to the wrong-answer count.
            const std::size_t wrong =
                static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 'W'));
            CHECK(std::accumulate(actual.begin(), actual.end(), std::size_t{0}) == wrong);
        }
    }
}

TEST_CASE("streak_distribution percentages", "[analytics]") {
    SECTION("hand-built [1, 1, 2]") {
        SessionLog log;
        log.sessions.push_back(make_session("s1", Strategy::som, 0.0, 5.0));
        log.sessions.push_back(make_session("s2", Strategy::som, 0.0, 5.0));
        std::size_t order = 1;
        // s1: W C W C  -> [1, 1]; s2: W W C -> [2]
        for (bool c : {false, true, false, true}) {
            log.questions.push_back(make_question("s1", order++, c));
        }
        order = 1;
        for (bool c : {false, false, true}) {
            log.questions.push_back(make_question("s2", order++, c));
        }
        const auto dist = streak_distribution(log);
        REQUIRE(dist.count(Strategy::som) == 1);
        CHECK(percentage_at(dist.at(Strategy::som), 1) == Catch::Approx(66.67).margin(0.01));
        CHECK(percentage_at(dist.at(Strategy::som), 2) == Catch::Approx(33.33).margin(0.01));
        CHECK(dist.at(Strategy::som).total == 3);
    }
    SECTION("published streak row reproduced within 0.01") {
        const std::map<std::size_t, double> published{
            {1, 64.71}, {2, 21.40}, {3, 7.40}, {4, 3.65}, {5, 1.32},
            {6, 0.81},  {7, 0.41},  {8, 0.30}, {9, 0.00}, {10, 0.00}};
        SessionScript script;
        ArmScript a;
        a.arm = Strategy::som;
        a.streak_counts = streak_counts_from_percentages(published);
        script.arms.push_back(a);
        const SessionLog log = generate_session_log(script);
        const auto dist = streak_distribution(log);
        REQUIRE(dist.count(Strategy::som) == 1);
        double row_sum = 0.0;
        for (const auto& [len, pct] : published) {
            CHECK(percentage_at(dist.at(Strategy::som), len) ==
                  Catch::Approx(pct).margin(0.01));
        }
        for (const auto& [len, pct] : dist.at(Strategy::som).percentages) row_sum += pct;
        CHECK(row_sum == Catch::Approx(100.0).margin(0.01));
    }
}

TEST_CASE("CSV round trip and validation", "[analytics]") {
    testutil::TempDir dir;

    SECTION("save and load preserve the log") {
        SessionScript script;
        ArmScript a;
        a.arm = Strategy::gmm_kl;
        a.sessions = 7;
        a.patterns = {{true, false, true}, {false, false, true, true}};
        a.ratings = {5, 0, 3};
        a.question_types = {Subject::kva, Subject::dtk};
        script.arms.push_back(a);
        const SessionLog original = generate_session_log(script);

        save_session_log(original, dir.file("sessions.csv"), dir.file("questions.csv"));
        const SessionLog loaded =
            load_session_log(dir.file("sessions.csv"), dir.file("questions.csv"));

        REQUIRE(loaded.sessions.size() == original.sessions.size());
        REQUIRE(loaded.questions.size() == original.questions.size());
        for (std::size_t i = 0; i < original.sessions.size(); ++i) {
            CHECK(loaded.sessions[i].session_id == original.sessions[i].session_id);
            CHECK(loaded.sessions[i].algorithm == original.sessions[i].algorithm);
            CHECK(loaded.sessions[i].user_id == original.sessions[i].user_id);
            CHECK(loaded.sessions[i].rating == original.sessions[i].rating);
            CHECK(loaded.sessions[i].question_types == original.sessions[i].question_types);
            CHECK(loaded.sessions[i].started_at ==
                  Catch::Approx(original.sessions[i].started_at).margin(5e-4));
        }
        for (std::size_t i = 0; i < original.questions.size(); ++i) {
            CHECK(loaded.questions[i].question_id == original.questions[i].question_id);
            CHECK(loaded.questions[i].sequence_order == original.questions[i].sequence_order);
            CHECK(loaded.questions[i].correct == original.questions[i].correct);
        }
    }
    SECTION("malformed row reports its number") {
        testutil::write_file(dir.file("sessions.csv"),
                             "session_id,user_id,algorithm,question_types,started_at,ended_at,"
                             "rating\n"
                             "s1,,cosineSimilarityAlg,XYZ,2025-01-01T00:00:00Z,,\n"
                             "s2,borked\n");
        CHECK_THROWS_WITH(load_sessions_csv(dir.file("sessions.csv")),
                          Catch::Matchers::ContainsSubstring("row 3"));
    }
    SECTION("bad header is rejected") {
        testutil::write_file(dir.file("sessions.csv"), "wrong,header\n");
        CHECK_THROWS_AS(load_sessions_csv(dir.file("sessions.csv")), DataError);
    }
    SECTION("duplicate session id is rejected") {
        testutil::write_file(dir.file("sessions.csv"),
                             "session_id,user_id,algorithm,question_types,started_at,ended_at,"
                             "rating\n"
                             "s1,,cosineSimilarityAlg,XYZ,2025-01-01T00:00:00Z,,\n"
                             "s1,,somSimilarityAlg,XYZ,2025-01-01T00:00:00Z,,\n");
        CHECK_THROWS_WITH(load_sessions_csv(dir.file("sessions.csv")),
                          Catch::Matchers::ContainsSubstring("duplicate"));
    }
    SECTION("sequence gaps are rejected") {
        testutil::write_file(dir.file("sessions.csv"),
                             "session_id,user_id,algorithm,question_types,started_at,ended_at,"
                             "rating\n"
                             "s1,,cosineSimilarityAlg,XYZ,2025-01-01T00:00:00Z,,\n");
        testutil::write_file(dir.file("questions.csv"),
                             "session_id,question_id,sequence_order,presented_at,answered_at,"
                             "correct\n"
                             "s1,q1,1,2025-01-01T00:00:00Z,,true\n"
                             "s1,q3,3,2025-01-01T00:01:00Z,,false\n");
        CHECK_THROWS_WITH(load_session_log(dir.file("sessions.csv"), dir.file("questions.csv")),
                          Catch::Matchers::ContainsSubstring("gaps"));
    }
    SECTION("question referencing an unknown session is rejected") {
        testutil::write_file(dir.file("sessions.csv"),
                             "session_id,user_id,algorithm,question_types,started_at,ended_at,"
                             "rating\n");
        testutil::write_file(dir.file("questions.csv"),
                             "session_id,question_id,sequence_order,presented_at,answered_at,"
                             "correct\n"
                             "ghost,q1,1,2025-01-01T00:00:00Z,,true\n");
        CHECK_THROWS_WITH(load_session_log(dir.file("sessions.csv"), dir.file("questions.csv")),
                          Catch::Matchers::ContainsSubstring("ghost"));
    }
}

TEST_CASE("build_report composes the per-operation results", "[analytics]") {
    SECTION("empty log yields a zero-count report without crashing") {
        const Report report = build_report(SessionLog{});
        CHECK(report.total_sessions == 0);
        CHECK(report.session_counts.empty());
        CHECK(report.durations_minutes.empty());
        CHECK(report.streaks.empty());
        const auto j = report_to_json(report);
        CHECK(j.at("session_counts").at("total") == 0);
        CHECK(!report_to_text(report).empty());
    }
    SECTION("full fixture sections equal the per-operation oracles") {
        SessionScript script;
        for (Strategy arm : {Strategy::cosine, Strategy::som, Strategy::gmm_kl}) {
            ArmScript a;
            a.arm = arm;
            a.sessions = 40;
            a.questions_per_session = 5;
            a.correctness_rate = 0.6;
            a.ratings = {4, 5, 0};
            script.arms.push_back(a);
        }
        const SessionLog log = generate_session_log(script);
        const Report report = build_report(log);

        const auto correctness = correctness_by_algorithm(log);
        const auto response = response_times_by_algorithm(log);
        const auto streaks = streak_distribution(log);
        for (Strategy arm : {Strategy::cosine, Strategy::som, Strategy::gmm_kl}) {
            CHECK(report.session_counts.at(arm) == 40);
            CHECK(*report.correctness.at(arm).rate == *correctness.at(arm).rate);
            CHECK(report.response_times_seconds.at(arm).median == response.at(arm).median);
            CHECK(report.streaks.at(arm).total == streaks.at(arm).total);
            CHECK(report.questions_per_session.at(arm).mean == 5.0);
        }
    }
    SECTION("permissive policies tolerate unfinished sessions") {
        SessionLog log;
        log.sessions.push_back(make_session("done", Strategy::som, 0.0, 12.0));
        log.sessions.push_back(make_session("open", Strategy::som, 0.0, std::nullopt));
        log.questions.push_back(make_question("done", 1, true));
        ReportPolicies policies;
        policies.durations = FilterPolicy::none();
        policies.questions_per_session = FilterPolicy::none();
        const Report report = build_report(log, policies);
        CHECK(report.duration_filter.retained == 2);
        CHECK(report.durations_minutes.at(Strategy::som).count == 1);  // only the finished one
        CHECK(report.questions_per_session.at(Strategy::som).count == 2);
    }
    SECTION("session counts total the full log") {
        SessionScript script;
        const std::size_t counts[3] = {618, 618, 619};
        const Strategy arms[3] = {Strategy::cosine, Strategy::gmm_kl, Strategy::som};
        for (int i = 0; i < 3; ++i) {
            ArmScript a;
            a.arm = arms[i];
            a.sessions = counts[i];
            a.questions_per_session = 2;
            a.correctness_rate = 0.5;
            script.arms.push_back(a);
        }
        const SessionLog log = generate_session_log(script);
        const Report report = build_report(log);
        CHECK(report.total_sessions == 1855);
        std::size_t total = 0;
        for (const auto& [arm, count] : report.session_counts) total += count;
        CHECK(total == 1855);
    }
}
