#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uqeval/jsonl.hpp"

namespace uqeval {

// One multiple-choice item. Immutable once validated.
struct QuestionRecord {
    std::string id;
    std::string text;
    std::vector<std::string> options;   // 3..10 entries
    int answer_index = 0;               // 0-based
    std::string category;               // one of the 14 fixed names
    std::string source;
};

// The fixed category set, in canonical report order.
const std::array<std::string_view, 14>& dataset_categories();
bool is_valid_category(std::string_view name);

// Throws UqError(validation) naming the record id and the violated rule.
void validate_question(const QuestionRecord& q);

json question_to_json(const QuestionRecord& q);
QuestionRecord question_from_json(const json& j);

enum class DatasetFormat { canonical_jsonl, mmlu_pro_table };

DatasetFormat dataset_format_from_string(std::string_view s);

struct LoadOptions {
    bool skip_invalid = false;   // drop invalid records instead of aborting
};

struct LoadResult {
    std::vector<QuestionRecord> records;
    std::size_t skipped = 0;
    std::vector<std::string> skip_messages;
};

// Loads and validates a dataset file, preserving input order. Duplicate ids
// and invariant violations raise UqError(validation) unless skip_invalid.
LoadResult load_dataset(const std::filesystem::path& path, DatasetFormat format,
                        const LoadOptions& opts = {});

std::map<std::string, std::size_t> category_histogram(std::span<const QuestionRecord> records);

void write_canonical_jsonl(const std::filesystem::path& path,
                           std::span<const QuestionRecord> records);

} // namespace uqeval
