#include "uqeval/dataset.hpp"

#include <fstream>
#include <set>

#include "uqeval/errors.hpp"

namespace uqeval {

namespace fs = std::filesystem;

const std::array<std::string_view, 14>& dataset_categories() {
    static const std::array<std::string_view, 14> cats = {
        "Mathematics", "Physics",    "Chemistry",        "Law",     "Engineering",
        "Economics",   "Health",     "Psychology",       "Business", "Biology",
        "Philosophy",  "Computer Science", "History",    "Other",
    };
    return cats;
}

bool is_valid_category(std::string_view name) {
    for (auto c : dataset_categories()) {
        if (c == name) return true;
    }
    return false;
}

void validate_question(const QuestionRecord& q) {
    auto fail = [&](const std::string& rule) {
        throw UqError(ErrorKind::validation, "record '" + q.id + "': " + rule);
    };
    if (q.id.empty()) {
        throw UqError(ErrorKind::validation, "record with empty id");
    }
    if (q.text.empty()) fail("empty question text");
    const auto n = q.options.size();
    if (n < 3) fail("options length " + std::to_string(n) + " < 3");
    if (n > 10) fail("options length " + std::to_string(n) + " > 10");
    if (q.answer_index < 0 || static_cast<std::size_t>(q.answer_index) >= n) {
        fail("answer_index " + std::to_string(q.answer_index) + " outside [0, " +
             std::to_string(n) + ")");
    }
    if (!is_valid_category(q.category)) {
        fail("unknown category '" + q.category + "'");
    }
}

json question_to_json(const QuestionRecord& q) {
    json j;
    j["id"] = q.id;
    j["text"] = q.text;
    j["options"] = q.options;
    j["answer_index"] = q.answer_index;
    j["category"] = q.category;
    j["source"] = q.source;
    return j;
}

namespace {

std::string id_string(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    throw UqError(ErrorKind::validation, "id must be a string or integer");
}

// A–J or a–j -> 0-based option index; -1 if not a letter.
int letter_to_index(const std::string& s) {
    if (s.size() != 1) return -1;
    char c = s[0];
    if (c >= 'A' && c <= 'J') return c - 'A';
    if (c >= 'a' && c <= 'j') return c - 'a';
    return -1;
}

} // namespace

QuestionRecord question_from_json(const json& j) {
    QuestionRecord q;
    try {
        q.id = id_string(j.at("id"));
        q.text = j.at("text").get<std::string>();
        q.options = j.at("options").get<std::vector<std::string>>();
        q.answer_index = j.at("answer_index").get<int>();
        q.category = j.at("category").get<std::string>();
        q.source = j.value("source", std::string{});
    } catch (const json::exception& e) {
        throw UqError(ErrorKind::validation, std::string("malformed question record: ") + e.what());
    }
    return q;
}

DatasetFormat dataset_format_from_string(std::string_view s) {
    if (s == "canonical-jsonl") return DatasetFormat::canonical_jsonl;
    if (s == "mmlu-pro-table") return DatasetFormat::mmlu_pro_table;
    throw UqError(ErrorKind::validation, "unknown dataset format '" + std::string(s) + "'");
}

namespace {

// MMLU-Pro export rows: question_id / question / options / answer (letter)
// and/or answer_index / category / src.
QuestionRecord question_from_table_row(const json& j) {
    QuestionRecord q;
    try {
        q.id = id_string(j.at("question_id"));
        q.text = j.at("question").get<std::string>();
        q.options = j.at("options").get<std::vector<std::string>>();
        q.category = j.at("category").get<std::string>();
        q.source = j.value("src", std::string{"mmlu-pro"});

        int from_letter = -1;
        if (j.contains("answer") && j.at("answer").is_string()) {
            from_letter = letter_to_index(j.at("answer").get<std::string>());
        }
        if (j.contains("answer_index")) {
            q.answer_index = j.at("answer_index").get<int>();
            if (from_letter >= 0 && from_letter != q.answer_index) {
                throw UqError(ErrorKind::validation,
                              "record '" + q.id + "': answer letter and answer_index disagree");
            }
        } else if (from_letter >= 0) {
            q.answer_index = from_letter;
        } else {
            throw UqError(ErrorKind::validation,
                          "record '" + q.id + "': no parseable answer/answer_index");
        }
    } catch (const json::exception& e) {
        throw UqError(ErrorKind::validation, std::string("malformed table row: ") + e.what());
    }
    return q;
}

std::vector<json> read_table_rows(const fs::path& path) {
    // Accept either a JSON array or JSONL.
    std::ifstream in(path);
    if (!in) throw UqError(ErrorKind::io, "cannot open " + path.string());
    char first = 0;
    in >> first;
    in.close();
    if (first == '[') {
        json doc = json::parse(read_file(path), nullptr, false);
        if (doc.is_discarded() || !doc.is_array()) {
            throw UqError(ErrorKind::validation, path.string() + ": expected a JSON array");
        }
        return std::vector<json>(doc.begin(), doc.end());
    }
    return read_jsonl(path);
}

} // namespace

LoadResult load_dataset(const fs::path& path, DatasetFormat format, const LoadOptions& opts) {
    std::vector<json> rows;
    if (format == DatasetFormat::canonical_jsonl) {
        rows = read_jsonl(path);
    } else {
        rows = read_table_rows(path);
    }

    LoadResult result;
    result.records.reserve(rows.size());
    std::set<std::string> seen_ids;
    for (const auto& row : rows) {
        try {
            QuestionRecord q = format == DatasetFormat::canonical_jsonl
                                   ? question_from_json(row)
                                   : question_from_table_row(row);
            validate_question(q);
            if (!seen_ids.insert(q.id).second) {
                throw UqError(ErrorKind::validation, "record '" + q.id + "': duplicate id");
            }
            result.records.push_back(std::move(q));
        } catch (const UqError& e) {
            if (!opts.skip_invalid) throw;
            ++result.skipped;
            result.skip_messages.push_back(e.what());
        }
    }
    return result;
}

std::map<std::string, std::size_t> category_histogram(std::span<const QuestionRecord> records) {
    std::map<std::string, std::size_t> hist;
    for (const auto& q : records) {
        ++hist[q.category];
    }
    return hist;
}

void write_canonical_jsonl(const fs::path& path, std::span<const QuestionRecord> records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw UqError(ErrorKind::io, "cannot write " + path.string());
    for (const auto& q : records) {
        out << jsonl_line(question_to_json(q));
    }
    out.flush();
    if (!out) throw UqError(ErrorKind::io, "short write to " + path.string());
}

} // namespace uqeval
