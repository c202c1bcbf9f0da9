#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uqeval/dataset.hpp"
#include "uqeval/gateway.hpp"
#include "uqeval/uncertainty.hpp"

namespace uqeval {

class Gateway;

// Numbered-option prompt; the model is instructed to reply `Answer: <number>`.
std::vector<ChatMessage> build_qa_prompt(const QuestionRecord& question);

struct ChoiceExtraction {
    std::optional<int> index;      // 0-based; empty = malformed
    std::size_t digit_begin = 0;   // byte span of the chosen number in raw text
    std::size_t digit_end = 0;
};

// Case-insensitive `Answer: <number>` (last occurrence wins), falling back to
// a lone leading number when the pattern is absent. Out-of-range numbers are
// malformed, not errors.
ChoiceExtraction extract_choice(std::string_view raw_text, int n_options);

enum class EntropyAggregation { first, mean, max };

EntropyAggregation entropy_aggregation_from_string(std::string_view s);
TopkPolicy topk_policy_from_string(std::string_view s);
std::string to_string(EntropyAggregation a);
std::string to_string(TopkPolicy p);

struct EntropyPolicy {
    EntropyAggregation aggregation = EntropyAggregation::first;
    TopkPolicy topk = TopkPolicy::tail_bucket;
};

struct AnswerRecord {
    std::string question_id;
    std::string model_id;
    std::string raw_text;
    std::optional<int> extracted_choice;
    bool is_malformed = false;
    std::optional<bool> is_correct;
    double entropy = 0.0;
    double confidence = 0.0;
    int distribution_support = 0;
    bool coverage_is_full_vocab = false;
    bool failed = false;   // transport failure after retries; excluded from metrics
};

json answer_to_json(const AnswerRecord& a);
AnswerRecord answer_from_json(const json& j);

// Assembles one AnswerRecord from a completion (choice extraction, entropy at
// the answer-number token, confidence, correctness against the gold index).
AnswerRecord assemble_answer(const QuestionRecord& question, const std::string& model_id,
                             const CompletionResponse& response, const EntropyPolicy& policy);

struct RunAnswersConfig {
    std::string model_id;
    int concurrency = 1;
    EntropyPolicy entropy;
    int max_new_tokens = 16;     // greedy answer decode
    double temperature = 0.0;
    int top_k_logprobs = 20;
};

// Receives records strictly in input order, one call per question.
using AnswerSink = std::function<void(const AnswerRecord&)>;

struct RunAnswersStats {
    std::size_t total = 0;       // questions processed by this call
    std::size_t malformed = 0;
    std::size_t failed = 0;
};

// Answers questions[start_index..) through the gateway, dispatching up to
// config.concurrency requests at once but persisting in input order.
RunAnswersStats run_answers(std::span<const QuestionRecord> questions, Gateway& gateway,
                            const RunAnswersConfig& config, std::size_t start_index,
                            const AnswerSink& sink);

// Malformed-rate status per the 5% rule: rate strictly above 0.05 of
// non-failed answers -> "threshold-exceeded", else "ok".
std::string malformed_status(std::size_t malformed, std::size_t answered);

} // namespace uqeval
