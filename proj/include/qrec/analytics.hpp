#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "qrec/core.hpp"
#include "qrec/strategy.hpp"

namespace qrec {

// --- timestamps -----------------------------------------------------------
//
// Timestamps are UTC epoch seconds (double, so sub-second offsets survive).
// The CSV wire format is ISO-8601: YYYY-MM-DDTHH:MM:SS[.fff][Z|+HH:MM].

namespace detail {

// Days since 1970-01-01 from a civil date (Gregorian, proleptic).
inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yr = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y = static_cast<int>(yr + (m <= 2));
}

}  // namespace detail

inline double parse_iso8601(std::string_view s) {
    int year = 0, offset_sign = 0;
    unsigned month = 0, day = 0, hour = 0, minute = 0, second = 0;
    unsigned off_h = 0, off_m = 0;
    double frac = 0.0;

    const std::string str(s);
    const char* p = str.c_str();
    int consumed = 0;
    if (std::sscanf(p, "%d-%2u-%2uT%2u:%2u:%2u%n", &year, &month, &day, &hour, &minute, &second,
                    &consumed) != 6) {
        throw DataError("invalid timestamp \"" + str + "\"");
    }
    p += consumed;
    if (*p == '.') {
        ++p;
        double scale = 0.1;
        if (*p < '0' || *p > '9') throw DataError("invalid timestamp \"" + str + "\"");
        while (*p >= '0' && *p <= '9') {
            frac += (*p - '0') * scale;
            scale *= 0.1;
            ++p;
        }
    }
    if (*p == 'Z') {
        ++p;
    } else if (*p == '+' || *p == '-') {
        offset_sign = *p == '+' ? 1 : -1;
        ++p;
        if (std::sscanf(p, "%2u:%2u%n", &off_h, &off_m, &consumed) != 2) {
            throw DataError("invalid timestamp offset in \"" + str + "\"");
        }
        p += consumed;
    }
    if (*p != '\0') throw DataError("trailing characters in timestamp \"" + str + "\"");
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60) {
        throw DataError("out-of-range timestamp \"" + str + "\"");
    }
    const std::int64_t days = detail::days_from_civil(year, month, day);
    double epoch = static_cast<double>(days) * 86400.0 + hour * 3600.0 + minute * 60.0 + second +
                   frac;
    epoch -= offset_sign * (off_h * 3600.0 + off_m * 60.0);
    return epoch;
}

// Millisecond precision; the fractional part is omitted when zero.
inline std::string format_iso8601(double epoch_seconds) {
    const double rounded = std::round(epoch_seconds * 1000.0) / 1000.0;
    double int_part = 0.0;
    double frac = std::modf(rounded, &int_part);
    std::int64_t whole = static_cast<std::int64_t>(int_part);
    if (frac < 0.0) {
        frac += 1.0;
        whole -= 1;
    }
    std::int64_t days = whole / 86400;
    std::int64_t rem = whole % 86400;
    if (rem < 0) {
        rem += 86400;
        days -= 1;
    }
    int y = 0;
    unsigned m = 0, d = 0;
    detail::civil_from_days(days, y, m, d);
    char buf[40];
    const int ms = static_cast<int>(std::round(frac * 1000.0));
    if (ms != 0) {
        std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lld.%03dZ", y, m, d,
                      static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                      static_cast<long long>(rem % 60), ms);
    } else {
        std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", y, m, d,
                      static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                      static_cast<long long>(rem % 60));
    }
    return buf;
}

// --- log schema -------------------------------------------------------------

struct QuizSession {
    std::string session_id;
    std::optional<std::string> user_id;
    Strategy algorithm = Strategy::cosine;
    std::set<Subject> question_types;
    double started_at = 0.0;
    std::optional<double> ended_at;
    std::optional<int> rating;  // 1..5
};

struct SessionQuestion {
    std::string session_id;
    std::string question_id;
    std::size_t sequence_order = 0;  // 1..m within a session, no gaps
    double presented_at = 0.0;
    std::optional<double> answered_at;
    std::optional<bool> correct;
};

struct SessionLog {
    std::vector<QuizSession> sessions;
    std::vector<SessionQuestion> questions;
};

// --- durations & filtering ---------------------------------------------------

// (ended - started) in minutes; absent when the session never ended.
inline std::optional<double> session_duration_minutes(const QuizSession& s) {
    if (!s.ended_at) return std::nullopt;
    const double minutes = (*s.ended_at - s.started_at) / 60.0;
    if (minutes < 0.0) {
        throw DataError("session \"" + s.session_id + "\" ends before it starts");
    }
    return minutes;
}

// Linear-interpolation percentile (the rank (n-1)*p/100 convention) over a
// sorted sample. p in [0, 100].
inline double percentile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw DataError("percentile of empty sample");
    if (sorted.size() == 1) return sorted[0];
    const double rank = (static_cast<double>(sorted.size()) - 1.0) * p / 100.0;
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(rank));
    if (lo == hi) return sorted[lo];
    const double w = rank - static_cast<double>(lo);
    return sorted[lo] + w * (sorted[hi] - sorted[lo]);
}

struct FilterPolicy {
    bool drop_missing_duration = true;
    std::optional<double> min_duration_seconds = 5.0;
    // Percentile window (lo, hi) in percent, applied to durations that survive
    // the two rules above; sessions outside [P_lo, P_hi] are dropped.
    std::optional<std::pair<double, double>> percentile_window;

    // Sessions without a duration cannot satisfy a duration rule, so they are
    // dropped (and counted) whenever min_duration_seconds or percentile_window
    // is active, regardless of drop_missing_duration.
    static FilterPolicy none() { return {false, std::nullopt, std::nullopt}; }
};

struct FilterReport {
    std::size_t input = 0;
    std::size_t retained = 0;
    std::size_t dropped_missing_duration = 0;
    std::size_t dropped_below_min = 0;
    std::size_t dropped_outside_window = 0;
};

struct FilterResult {
    std::vector<QuizSession> sessions;
    FilterReport report;
};

inline FilterResult filter_sessions(const std::vector<QuizSession>& sessions,
                                    const FilterPolicy& policy) {
    if (policy.percentile_window && policy.percentile_window->first >= policy.percentile_window->second) {
        throw DataError("filter_sessions: percentile window lo must be < hi");
    }
    FilterResult result;
    result.report.input = sessions.size();

    std::vector<const QuizSession*> kept;
    std::vector<double> durations;
    for (const QuizSession& s : sessions) {
        const std::optional<double> minutes = session_duration_minutes(s);
        if (!minutes) {
            if (policy.drop_missing_duration || policy.min_duration_seconds ||
                policy.percentile_window) {
                ++result.report.dropped_missing_duration;
                continue;
            }
            kept.push_back(&s);
            durations.push_back(0.0);
            continue;
        }
        if (policy.min_duration_seconds && *minutes * 60.0 < *policy.min_duration_seconds) {
            ++result.report.dropped_below_min;
            continue;
        }
        kept.push_back(&s);
        durations.push_back(*minutes);
    }

    if (policy.percentile_window && !durations.empty()) {
        std::vector<double> sorted = durations;
        std::sort(sorted.begin(), sorted.end());
        const double lo = percentile_sorted(sorted, policy.percentile_window->first);
        const double hi = percentile_sorted(sorted, policy.percentile_window->second);
        for (std::size_t i = 0; i < kept.size(); ++i) {
            if (durations[i] < lo || durations[i] > hi) {
                ++result.report.dropped_outside_window;
            } else {
                result.sessions.push_back(*kept[i]);
            }
        }
    } else {
        for (const QuizSession* s : kept) result.sessions.push_back(*s);
    }
    result.report.retained = result.sessions.size();
    return result;
}

// --- summary statistics -------------------------------------------------------

struct SummaryStats {
    std::size_t count = 0;
    double mean = 0.0;
    double std = 0.0;  // sample std (n-1 denominator); 0 for a single value
    double min = 0.0;
    double p25 = 0.0;
    double p50 = 0.0;
    double p75 = 0.0;
    double max = 0.0;
};

inline SummaryStats summarize(std::vector<double> values) {
    if (values.empty()) throw DataError("summarize: empty sample");
    std::sort(values.begin(), values.end());
    SummaryStats s;
    s.count = values.size();
    double total = 0.0;
    for (double v : values) total += v;
    s.mean = total / static_cast<double>(s.count);
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = s.count > 1 ? std::sqrt(ss / static_cast<double>(s.count - 1)) : 0.0;
    s.min = values.front();
    s.max = values.back();
    s.p25 = percentile_sorted(values, 25.0);
    s.p50 = percentile_sorted(values, 50.0);
    s.p75 = percentile_sorted(values, 75.0);
    return s;
}

// --- per-algorithm metrics ------------------------------------------------------

namespace detail {

inline std::unordered_map<std::string, Strategy> session_arm_index(const SessionLog& log) {
    std::unordered_map<std::string, Strategy> index;
    index.reserve(log.sessions.size());
    for (const QuizSession& s : log.sessions) index.emplace(s.session_id, s.algorithm);
    return index;
}

inline Strategy arm_of(const std::unordered_map<std::string, Strategy>& index,
                       const SessionQuestion& q) {
    auto it = index.find(q.session_id);
    if (it == index.end()) {
        throw DataError("question row references unknown session \"" + q.session_id + "\"");
    }
    return it->second;
}

}  // namespace detail

struct CorrectnessEntry {
    std::size_t answered = 0;  // questions with a correctness flag
    std::size_t missing = 0;   // questions without one
    std::optional<double> rate;  // absent when nothing was answered
};

inline std::map<Strategy, CorrectnessEntry> correctness_by_algorithm(const SessionLog& log) {
    const auto index = detail::session_arm_index(log);
    std::map<Strategy, CorrectnessEntry> out;
    std::map<Strategy, std::size_t> correct;
    for (const SessionQuestion& q : log.questions) {
        const Strategy arm = detail::arm_of(index, q);
        CorrectnessEntry& entry = out[arm];
        if (q.correct) {
            ++entry.answered;
            if (*q.correct) ++correct[arm];
        } else {
            ++entry.missing;
        }
    }
    for (auto& [arm, entry] : out) {
        if (entry.answered > 0) {
            entry.rate = static_cast<double>(correct[arm]) / static_cast<double>(entry.answered);
        }
    }
    return out;
}

struct ResponseTimeStats {
    std::size_t count = 0;
    double median = 0.0;
    double mean = 0.0;
    double p95 = 0.0;
};

// Response time = answered_at - presented_at, in seconds, over answered
// questions. Negative response times are a data-consistency error listing the
// offending question ids.
inline std::map<Strategy, ResponseTimeStats> response_times_by_algorithm(const SessionLog& log) {
    const auto index = detail::session_arm_index(log);
    std::map<Strategy, std::vector<double>> times;
    std::string offenders;
    for (const SessionQuestion& q : log.questions) {
        if (!q.answered_at) continue;
        const double seconds = *q.answered_at - q.presented_at;
        if (seconds < 0.0) {
            if (!offenders.empty()) offenders += ", ";
            offenders += q.question_id;
            continue;
        }
        times[detail::arm_of(index, q)].push_back(seconds);
    }
    if (!offenders.empty()) {
        throw DataError("negative response time for question(s): " + offenders);
    }
    std::map<Strategy, ResponseTimeStats> out;
    for (auto& [arm, values] : times) {
        std::sort(values.begin(), values.end());
        ResponseTimeStats stats;
        stats.count = values.size();
        double total = 0.0;
        for (double v : values) total += v;
        stats.mean = total / static_cast<double>(values.size());
        stats.median = percentile_sorted(values, 50.0);
        stats.p95 = percentile_sorted(values, 95.0);
        out.emplace(arm, stats);
    }
    return out;
}

// --- wrong-answer streaks ---------------------------------------------------------

// Maximal runs of consecutive incorrect answers in one session, ordered by
// sequence_order. Questions without a correctness flag are skipped. A run cut
// off by the session end still counts when count_trailing is set (the default;
// dropping those runs would discard exactly the sessions that ended on
// repeated failure).
inline std::vector<std::size_t> wrong_streaks(std::vector<SessionQuestion> questions,
                                              bool count_trailing = true) {
    std::sort(questions.begin(), questions.end(),
              [](const SessionQuestion& a, const SessionQuestion& b) {
                  return a.sequence_order < b.sequence_order;
              });
    std::vector<std::size_t> streaks;
    std::size_t run = 0;
    for (const SessionQuestion& q : questions) {
        if (!q.correct) continue;
        if (*q.correct) {
            if (run > 0) streaks.push_back(run);
            run = 0;
        } else {
            ++run;
        }
    }
    if (run > 0 && count_trailing) streaks.push_back(run);
    return streaks;
}

struct StreakDistribution {
    std::map<std::size_t, std::size_t> counts;     // streak length -> occurrences
    std::map<std::size_t, double> percentages;     // same keys, rows sum to 100
    std::size_t total = 0;
};

inline std::map<Strategy, StreakDistribution> streak_distribution(const SessionLog& log,
                                                                  bool count_trailing = true) {
    const auto index = detail::session_arm_index(log);
    std::unordered_map<std::string, std::vector<SessionQuestion>> by_session;
    for (const SessionQuestion& q : log.questions) by_session[q.session_id].push_back(q);

    std::map<Strategy, StreakDistribution> out;
    for (auto& [session_id, questions] : by_session) {
        const Strategy arm = detail::arm_of(index, questions.front());
        StreakDistribution& dist = out[arm];
        for (std::size_t len : wrong_streaks(std::move(questions), count_trailing)) {
            ++dist.counts[len];
            ++dist.total;
        }
    }
    for (auto& [arm, dist] : out) {
        for (const auto& [len, count] : dist.counts) {
            dist.percentages[len] =
                100.0 * static_cast<double>(count) / static_cast<double>(dist.total);
        }
    }
    return out;
}

inline double percentage_at(const StreakDistribution& dist, std::size_t length) {
    auto it = dist.percentages.find(length);
    return it == dist.percentages.end() ? 0.0 : it->second;
}

// --- CSV IO -------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

// Validates the per-session invariant: sequence_order is 1..m, no gaps or
// duplicates.
inline void check_sequence_orders(const SessionLog& log) {
    std::unordered_map<std::string, std::vector<std::size_t>> orders;
    for (const SessionQuestion& q : log.questions) {
        orders[q.session_id].push_back(q.sequence_order);
    }
    for (auto& [session_id, seq] : orders) {
        std::sort(seq.begin(), seq.end());
        for (std::size_t i = 0; i < seq.size(); ++i) {
            if (seq[i] != i + 1) {
                throw DataError("session \"" + session_id +
                                "\" has gaps or duplicates in sequence_order");
            }
        }
    }
}

}  // namespace detail

// sessions.csv: session_id,user_id,algorithm,question_types,started_at,ended_at,rating
// question_types is a semicolon-joined subject list; absent values are empty fields.
inline std::vector<QuizSession> load_sessions_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open sessions file " + path.string());
    std::string line;
    std::size_t line_no = 0;
    std::vector<QuizSession> sessions;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        const std::string where = path.filename().string() + " row " + std::to_string(line_no);
        const auto fields = detail::split_csv_row(line);
        if (line_no == 1) {
            if (fields.size() != 7 || fields[0] != "session_id") {
                throw DataError(where + ": expected header "
                                        "session_id,user_id,algorithm,question_types,started_at,"
                                        "ended_at,rating");
            }
            continue;
        }
        if (fields.size() != 7) {
            throw DataError(where + ": expected 7 fields, got " + std::to_string(fields.size()));
        }
        try {
            QuizSession s;
            s.session_id = fields[0];
            if (s.session_id.empty()) throw DataError("empty session_id");
            if (!seen.insert(s.session_id).second) {
                throw DataError("duplicate session_id \"" + s.session_id + "\"");
            }
            if (!fields[1].empty()) s.user_id = fields[1];
            s.algorithm = parse_strategy(fields[2]);
            std::stringstream types(fields[3]);
            std::string token;
            while (std::getline(types, token, ';')) {
                if (!token.empty()) s.question_types.insert(parse_subject(token));
            }
            s.started_at = parse_iso8601(fields[4]);
            if (!fields[5].empty()) s.ended_at = parse_iso8601(fields[5]);
            if (!fields[6].empty()) {
                const int rating = std::stoi(fields[6]);
                if (rating < 1 || rating > 5) {
                    throw DataError("rating out of range: " + fields[6]);
                }
                s.rating = rating;
            }
            if (s.ended_at && *s.ended_at < s.started_at) {
                throw DataError("session ends before it starts");
            }
            sessions.push_back(std::move(s));
        } catch (const std::exception& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return sessions;
}

// session_questions.csv:
// session_id,question_id,sequence_order,presented_at,answered_at,correct
// correct is true, false, or empty.
inline std::vector<SessionQuestion> load_questions_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open session questions file " + path.string());
    std::string line;
    std::size_t line_no = 0;
    std::vector<SessionQuestion> questions;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        const std::string where = path.filename().string() + " row " + std::to_string(line_no);
        const auto fields = detail::split_csv_row(line);
        if (line_no == 1) {
            if (fields.size() != 6 || fields[0] != "session_id") {
                throw DataError(where + ": expected header "
                                        "session_id,question_id,sequence_order,presented_at,"
                                        "answered_at,correct");
            }
            continue;
        }
        if (fields.size() != 6) {
            throw DataError(where + ": expected 6 fields, got " + std::to_string(fields.size()));
        }
        try {
            SessionQuestion q;
            q.session_id = fields[0];
            q.question_id = fields[1];
            if (q.session_id.empty() || q.question_id.empty()) {
                throw DataError("empty session_id or question_id");
            }
            const long order = std::stol(fields[2]);
            if (order < 1) throw DataError("sequence_order must be >= 1");
            q.sequence_order = static_cast<std::size_t>(order);
            q.presented_at = parse_iso8601(fields[3]);
            if (!fields[4].empty()) q.answered_at = parse_iso8601(fields[4]);
            if (!fields[5].empty()) {
                if (fields[5] == "true") {
                    q.correct = true;
                } else if (fields[5] == "false") {
                    q.correct = false;
                } else {
                    throw DataError("correct must be true, false or empty, got \"" + fields[5] +
                                    "\"");
                }
            }
            questions.push_back(std::move(q));
        } catch (const std::exception& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return questions;
}

inline SessionLog load_session_log(const std::filesystem::path& sessions_path,
                                   const std::filesystem::path& questions_path) {
    SessionLog log;
    log.sessions = load_sessions_csv(sessions_path);
    log.questions = load_questions_csv(questions_path);
    detail::check_sequence_orders(log);
    const auto index = detail::session_arm_index(log);
    for (const SessionQuestion& q : log.questions) detail::arm_of(index, q);
    return log;
}

inline void save_session_log(const SessionLog& log, const std::filesystem::path& sessions_path,
                             const std::filesystem::path& questions_path) {
    std::ofstream sessions(sessions_path);
    if (!sessions) throw DataError("cannot write sessions file " + sessions_path.string());
    sessions << "session_id,user_id,algorithm,question_types,started_at,ended_at,rating\n";
    for (const QuizSession& s : log.sessions) {
        sessions << s.session_id << "," << (s.user_id ? *s.user_id : "") << ","
                 << strategy_name(s.algorithm) << ",";
        bool first = true;
        for (Subject subject : s.question_types) {
            if (!first) sessions << ";";
            sessions << subject_name(subject);
            first = false;
        }
        sessions << "," << format_iso8601(s.started_at) << ","
                 << (s.ended_at ? format_iso8601(*s.ended_at) : "") << ","
                 << (s.rating ? std::to_string(*s.rating) : "") << "\n";
    }
    std::ofstream questions(questions_path);
    if (!questions) throw DataError("cannot write questions file " + questions_path.string());
    questions << "session_id,question_id,sequence_order,presented_at,answered_at,correct\n";
    for (const SessionQuestion& q : log.questions) {
        questions << q.session_id << "," << q.question_id << "," << q.sequence_order << ","
                  << format_iso8601(q.presented_at) << ","
                  << (q.answered_at ? format_iso8601(*q.answered_at) : "") << ","
                  << (q.correct ? (*q.correct ? "true" : "false") : "") << "\n";
    }
}

// --- full report -------------------------------------------------------------
//
// The study applied different outlier policies per table: duration summaries
// removed the 5th-95th percentile tails, questions-per-session explicitly kept
// them, and both removed sub-5-second and unfinished sessions. The report
// therefore carries a per-section policy map with those defaults.

struct ReportPolicies {
    FilterPolicy durations{true, 5.0, std::pair<double, double>{5.0, 95.0}};
    FilterPolicy questions_per_session{true, 5.0, std::nullopt};
    bool streak_count_trailing = true;
};

struct Report {
    std::size_t total_sessions = 0;
    std::map<Strategy, std::size_t> session_counts;

    FilterReport duration_filter;
    std::map<Strategy, SummaryStats> durations_minutes;

    FilterReport questions_filter;
    std::map<Strategy, SummaryStats> questions_per_session;

    std::map<Strategy, SummaryStats> ratings;  // rated sessions only
    std::map<Strategy, CorrectnessEntry> correctness;
    std::map<Strategy, ResponseTimeStats> response_times_seconds;
    std::map<Strategy, StreakDistribution> streaks;

    ReportPolicies policies;
};

inline Report build_report(const SessionLog& log, const ReportPolicies& policies = {}) {
    Report report;
    report.policies = policies;
    report.total_sessions = log.sessions.size();
    for (const QuizSession& s : log.sessions) ++report.session_counts[s.algorithm];

    const auto index = detail::session_arm_index(log);

    // Durations, filtered per policy. A permissive policy can retain sessions
    // without a duration; they contribute to counts but not to duration stats.
    {
        FilterResult filtered = filter_sessions(log.sessions, policies.durations);
        report.duration_filter = filtered.report;
        std::map<Strategy, std::vector<double>> per_arm;
        for (const QuizSession& s : filtered.sessions) {
            const std::optional<double> minutes = session_duration_minutes(s);
            if (minutes) per_arm[s.algorithm].push_back(*minutes);
        }
        for (auto& [arm, values] : per_arm) {
            report.durations_minutes.emplace(arm, summarize(std::move(values)));
        }
    }

    // Questions per session over the (differently) filtered session set.
    {
        FilterResult filtered = filter_sessions(log.sessions, policies.questions_per_session);
        report.questions_filter = filtered.report;
        std::unordered_map<std::string, double> counts;
        for (const QuizSession& s : filtered.sessions) counts.emplace(s.session_id, 0.0);
        for (const SessionQuestion& q : log.questions) {
            auto it = counts.find(q.session_id);
            if (it != counts.end()) it->second += 1.0;
        }
        std::map<Strategy, std::vector<double>> per_arm;
        for (const QuizSession& s : filtered.sessions) {
            per_arm[s.algorithm].push_back(counts[s.session_id]);
        }
        for (auto& [arm, values] : per_arm) {
            report.questions_per_session.emplace(arm, summarize(std::move(values)));
        }
    }

    // Ratings: sessions that have one.
    {
        std::map<Strategy, std::vector<double>> per_arm;
        for (const QuizSession& s : log.sessions) {
            if (s.rating) per_arm[s.algorithm].push_back(static_cast<double>(*s.rating));
        }
        for (auto& [arm, values] : per_arm) {
            report.ratings.emplace(arm, summarize(std::move(values)));
        }
    }

    report.correctness = correctness_by_algorithm(log);
    report.response_times_seconds = response_times_by_algorithm(log);
    report.streaks = streak_distribution(log, policies.streak_count_trailing);
    return report;
}

namespace detail {

inline nlohmann::ordered_json summary_to_json(const SummaryStats& s) {
    return {{"count", s.count}, {"mean", s.mean}, {"std", s.std}, {"min", s.min},
            {"p25", s.p25},     {"p50", s.p50},   {"p75", s.p75}, {"max", s.max}};
}

inline nlohmann::ordered_json filter_policy_to_json(const FilterPolicy& p) {
    nlohmann::ordered_json j;
    j["drop_missing_duration"] = p.drop_missing_duration;
    j["min_duration_seconds"] =
        p.min_duration_seconds ? nlohmann::ordered_json(*p.min_duration_seconds)
                               : nlohmann::ordered_json(nullptr);
    j["percentile_window"] = p.percentile_window
                                 ? nlohmann::ordered_json({p.percentile_window->first,
                                                           p.percentile_window->second})
                                 : nlohmann::ordered_json(nullptr);
    return j;
}

inline nlohmann::ordered_json filter_report_to_json(const FilterReport& r) {
    return {{"input", r.input},
            {"retained", r.retained},
            {"dropped_missing_duration", r.dropped_missing_duration},
            {"dropped_below_min", r.dropped_below_min},
            {"dropped_outside_window", r.dropped_outside_window}};
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const Report& report) {
    using json = nlohmann::ordered_json;
    json j;
    j["session_counts"]["policy"] = "none";
    j["session_counts"]["total"] = report.total_sessions;
    for (const auto& [arm, count] : report.session_counts) {
        j["session_counts"]["per_arm"][std::string(strategy_name(arm))] = count;
    }

    j["durations_minutes"]["policy"] = detail::filter_policy_to_json(report.policies.durations);
    j["durations_minutes"]["filter"] = detail::filter_report_to_json(report.duration_filter);
    for (const auto& [arm, stats] : report.durations_minutes) {
        j["durations_minutes"]["per_arm"][std::string(strategy_name(arm))] =
            detail::summary_to_json(stats);
    }

    j["questions_per_session"]["policy"] =
        detail::filter_policy_to_json(report.policies.questions_per_session);
    j["questions_per_session"]["filter"] = detail::filter_report_to_json(report.questions_filter);
    for (const auto& [arm, stats] : report.questions_per_session) {
        j["questions_per_session"]["per_arm"][std::string(strategy_name(arm))] =
            detail::summary_to_json(stats);
    }

    j["ratings"]["policy"] = "rated sessions only";
    for (const auto& [arm, stats] : report.ratings) {
        j["ratings"]["per_arm"][std::string(strategy_name(arm))] = detail::summary_to_json(stats);
    }

    j["correctness"]["policy"] = "answered questions only";
    for (const auto& [arm, entry] : report.correctness) {
        json e;
        e["answered"] = entry.answered;
        e["missing"] = entry.missing;
        e["rate"] = entry.rate ? json(*entry.rate) : json(nullptr);
        j["correctness"]["per_arm"][std::string(strategy_name(arm))] = std::move(e);
    }

    j["response_times_seconds"]["policy"] = "answered questions only";
    for (const auto& [arm, stats] : report.response_times_seconds) {
        j["response_times_seconds"]["per_arm"][std::string(strategy_name(arm))] = {
            {"count", stats.count},
            {"median", stats.median},
            {"mean", stats.mean},
            {"p95", stats.p95}};
    }

    j["streaks"]["policy"] = {{"count_trailing", report.policies.streak_count_trailing}};
    for (const auto& [arm, dist] : report.streaks) {
        json percentages = json::object();
        json counts = json::object();
        for (const auto& [len, pct] : dist.percentages) {
            percentages[std::to_string(len)] = pct;
        }
        for (const auto& [len, count] : dist.counts) {
            counts[std::to_string(len)] = count;
        }
        j["streaks"]["per_arm"][std::string(strategy_name(arm))] = {
            {"total", dist.total},
            {"percentages", std::move(percentages)},
            {"counts", std::move(counts)}};
    }
    return j;
}

inline std::string report_to_text(const Report& report) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(2);

    out << "== Session counts ==\n";
    out << "total sessions: " << report.total_sessions << "\n";
    for (const auto& [arm, count] : report.session_counts) {
        out << "  " << strategy_name(arm) << ": " << count << "\n";
    }

    auto print_summary_table = [&out](const std::map<Strategy, SummaryStats>& table) {
        out << "  algorithm                count    mean     std     min     p25     p50     p75     max\n";
        for (const auto& [arm, s] : table) {
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "  %-22s %7zu %7.2f %7.2f %7.2f %7.2f %7.2f %7.2f %7.2f\n",
                          std::string(strategy_name(arm)).c_str(), s.count, s.mean, s.std, s.min,
                          s.p25, s.p50, s.p75, s.max);
            out << buf;
        }
    };

    out << "\n== Session durations (minutes) ==\n";
    const FilterReport& df = report.duration_filter;
    out << "filter: input " << df.input << ", retained " << df.retained << " (missing "
        << df.dropped_missing_duration << ", below-min " << df.dropped_below_min << ", outside-window "
        << df.dropped_outside_window << ")\n";
    print_summary_table(report.durations_minutes);

    out << "\n== Questions per session ==\n";
    const FilterReport& qf = report.questions_filter;
    out << "filter: input " << qf.input << ", retained " << qf.retained << " (missing "
        << qf.dropped_missing_duration << ", below-min " << qf.dropped_below_min << ", outside-window "
        << qf.dropped_outside_window << ")\n";
    print_summary_table(report.questions_per_session);

    out << "\n== Ratings (rated sessions only) ==\n";
    print_summary_table(report.ratings);

    out << "\n== Correctness ==\n";
    for (const auto& [arm, entry] : report.correctness) {
        out << "  " << strategy_name(arm) << ": ";
        if (entry.rate) {
            out << (*entry.rate * 100.0) << "% of " << entry.answered << " answered";
        } else {
            out << "no answered questions";
        }
        out << " (" << entry.missing << " unanswered)\n";
    }

    out << "\n== Response times (seconds) ==\n";
    for (const auto& [arm, stats] : report.response_times_seconds) {
        out << "  " << strategy_name(arm) << ": median " << stats.median << ", mean " << stats.mean
            << ", p95 " << stats.p95 << " (n=" << stats.count << ")\n";
    }

    out << "\n== Wrong-answer streak distribution (%) ==\n";
    std::size_t max_len = 0;
    for (const auto& [arm, dist] : report.streaks) {
        if (!dist.counts.empty()) max_len = std::max(max_len, dist.counts.rbegin()->first);
    }
    out << "  length:";
    for (std::size_t len = 1; len <= max_len; ++len) out << "\t" << len;
    out << "\n";
    for (const auto& [arm, dist] : report.streaks) {
        out << "  " << strategy_name(arm) << ":";
        for (std::size_t len = 1; len <= max_len; ++len) {
            out << "\t" << percentage_at(dist, len);
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace qrec
