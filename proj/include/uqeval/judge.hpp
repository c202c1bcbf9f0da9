#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "uqeval/dataset.hpp"
#include "uqeval/gateway.hpp"

namespace uqeval {

class Gateway;

enum class JudgeKind { numeric, nominal, reasoning };

enum class NominalComplexity {
    high_school_and_easier,
    undergraduate_easy,
    undergraduate_hard,
    graduate,
    postgraduate,
};

enum class ReasoningSteps { low, medium, high };

std::string to_string(JudgeKind k);
JudgeKind judge_kind_from_string(std::string_view s);
std::string to_string(NominalComplexity c);
NominalComplexity nominal_from_string(std::string_view s);
std::string to_string(ReasoningSteps s);
ReasoningSteps steps_from_string(std::string_view s);

// Ordinal mapping used when nominal labels act as an uncertainty score.
double nominal_ordinal_score(NominalComplexity c);   // 0, 0.25, 0.5, 0.75, 1

// The prompt templates shipped under prompts/, embedded byte-identically.
const std::string& judge_prompt_template(JudgeKind kind);

// Template verbatim as the system message; question text plus numbered
// options as the user message.
std::vector<ChatMessage> build_judge_prompt(const QuestionRecord& question, JudgeKind kind);

// Parsers are total: any input yields a value or a structured error.
enum class JudgeErrorType { parse, range };

template <typename T>
struct Parsed {
    std::optional<T> value;
    JudgeErrorType error_type = JudgeErrorType::parse;
    std::string error;

    bool ok() const { return value.has_value(); }
};

// Last [[<decimal>]] in the text; must lie in [0,1].
Parsed<double> parse_numeric(std::string_view raw);

struct NominalParse {
    NominalComplexity value;
    bool leniency_used = false;   // [[undergraduate]] -> undergraduate_easy
};

// Last [[<label>]] matched against the five scale labels after trimming and
// lowercasing, with the single documented leniency mapping.
Parsed<NominalParse> parse_nominal(std::string_view raw);

struct ReasoningEstimate {
    bool requires_knowledge = false;
    bool requires_reasoning = false;
    ReasoningSteps steps = ReasoningSteps::low;
};

// All three [[<key>: <value>]] groups, any order, case-insensitive keys.
Parsed<ReasoningEstimate> parse_reasoning(std::string_view raw);

struct RegenerationPolicy {
    int max_attempts = 3;
    // Optional extra trigger: return true to regenerate even though the
    // response parsed (hook for a score-based quality gate).
    std::function<bool(JudgeKind, const std::string& raw)> regenerate_if;
};

struct JudgeRecord {
    std::string question_id;
    std::string judge_model_id;
    std::optional<double> complexity_numeric;
    std::optional<NominalComplexity> complexity_nominal;
    std::optional<bool> requires_knowledge;
    std::optional<bool> requires_reasoning;
    std::optional<ReasoningSteps> reasoning_steps;
    bool nominal_leniency_used = false;
    std::map<std::string, int> attempts_used;        // kind -> attempts
    std::map<std::string, std::string> raw_texts;    // kind -> final raw response
    std::set<std::string> failed_kinds;              // transport exhaustion
};

json judge_to_json(const JudgeRecord& r);
JudgeRecord judge_from_json(const json& j);

struct JudgeRunConfig {
    std::string model_id;
    std::set<JudgeKind> kinds = {JudgeKind::numeric, JudgeKind::nominal, JudgeKind::reasoning};
    RegenerationPolicy policy;
    int max_new_tokens = 1024;
    double temperature = 0.0;
    int concurrency = 1;
};

// Generates, parses, and regenerates per kind up to policy.max_attempts;
// fields stay absent when every attempt failed to parse. Transport failures
// mark the kind failed without aborting the record.
JudgeRecord judge_question(const QuestionRecord& question, Gateway& gateway,
                           const JudgeRunConfig& config);

using JudgeSink = std::function<void(const JudgeRecord&)>;

struct RunJudgesStats {
    std::size_t total = 0;
    std::size_t kinds_failed = 0;     // transport-failed (question, kind) pairs
    std::size_t kinds_exhausted = 0;  // parse-exhausted (question, kind) pairs
    std::size_t leniency_uses = 0;
};

RunJudgesStats run_judges(std::span<const QuestionRecord> questions, Gateway& gateway,
                          const JudgeRunConfig& config, std::size_t start_index,
                          const JudgeSink& sink);

} // namespace uqeval
