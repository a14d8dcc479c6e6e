#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qrec/core.hpp"

namespace qrec {

// Corpus files are JSON Lines: one object per line with fields
//   id (string), subject ("XYZ"|"KVA"|"NOG"|"DTK"), text (string),
//   embedding (array of numbers, parsed as 64-bit floats).
// Text is cleaned on load; records whose text cleans to empty are rejected.
inline Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file " + path.string());

    std::vector<QuestionRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path.filename().string() + ":" + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": malformed JSON (" + e.what() + ")");
        }
        QuestionRecord r;
        try {
            r.id = j.at("id").get<std::string>();
            r.subject = parse_subject(j.at("subject").get<std::string>());
            r.text = clean_text(j.at("text").get<std::string>());
            r.embedding = j.at("embedding").get<Embedding>();
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": " + e.what());
        }
        if (r.text.empty()) throw DataError(where + ": empty text for id \"" + r.id + "\"");
        if (!all_finite(r.embedding)) {
            throw DataError(where + ": non-finite embedding value for id \"" + r.id + "\"");
        }
        records.push_back(std::move(r));
    }
    return Corpus(std::move(records));
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write corpus file " + path.string());
    for (const QuestionRecord& r : corpus.records()) {
        nlohmann::json j{{"id", r.id},
                         {"subject", std::string(subject_name(r.subject))},
                         {"text", r.text},
                         {"embedding", r.embedding}};
        out << j.dump() << "\n";
    }
    if (!out) throw DataError("failed writing corpus file " + path.string());
}

}  // namespace qrec
