#include "uqeval/qa_runner.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "uqeval/errors.hpp"
#include "uqeval/parallel.hpp"

namespace uqeval {

std::vector<ChatMessage> build_qa_prompt(const QuestionRecord& question) {
    std::string user = question.text;
    user += "\n";
    for (std::size_t i = 0; i < question.options.size(); ++i) {
        user += std::to_string(i + 1) + ". " + question.options[i] + "\n";
    }
    user += "Reply with exactly \"Answer: <number>\" where <number> is the number of the "
            "correct option. Do not add any other text.";
    return {
        {"system", "You answer multiple-choice questions. Reply with exactly \"Answer: "
                   "<number>\" and nothing else."},
        {"user", std::move(user)},
    };
}

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Matches `answer` (any case) + optional spaces + ':' + optional spaces +
// digits, starting at `pos`. On success returns the digit span.
bool match_answer_at(std::string_view s, std::size_t pos, std::size_t* dbegin,
                     std::size_t* dend) {
    static constexpr std::string_view kWord = "answer";
    if (pos + kWord.size() > s.size()) return false;
    for (std::size_t i = 0; i < kWord.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[pos + i])) != kWord[i]) return false;
    }
    std::size_t i = pos + kWord.size();
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    if (i >= s.size() || s[i] != ':') return false;
    ++i;
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    if (i >= s.size() || !is_digit(s[i])) return false;
    *dbegin = i;
    while (i < s.size() && is_digit(s[i])) ++i;
    *dend = i;
    return true;
}

} // namespace

ChoiceExtraction extract_choice(std::string_view raw_text, int n_options) {
    if (n_options < 3 || n_options > 10) {
        throw UqError(ErrorKind::validation, "n_options must be in [3, 10]");
    }
    ChoiceExtraction out;

    // last `Answer: <number>` occurrence wins
    std::size_t dbegin = 0, dend = 0;
    bool found = false;
    for (std::size_t pos = 0; pos < raw_text.size(); ++pos) {
        std::size_t b, e;
        if (match_answer_at(raw_text, pos, &b, &e)) {
            dbegin = b;
            dend = e;
            found = true;
            pos = e - 1;
        }
    }

    if (!found) {
        // fallback: a lone leading number ("3", "3.", "3) ...")
        std::size_t i = 0;
        while (i < raw_text.size() &&
               std::isspace(static_cast<unsigned char>(raw_text[i]))) {
            ++i;
        }
        std::size_t b = i;
        while (i < raw_text.size() && is_digit(raw_text[i])) ++i;
        if (i == b) return out;   // no digits: malformed
        std::size_t after = i;
        if (after < raw_text.size() && (raw_text[after] == '.' || raw_text[after] == ')')) {
            ++after;
        }
        if (after < raw_text.size() &&
            !std::isspace(static_cast<unsigned char>(raw_text[after]))) {
            return out;   // number glued to other text: not a lone answer
        }
        dbegin = b;
        dend = i;
    }

    if (dend - dbegin > 2) return out;   // longest valid option number is "10"
    int value = 0;
    for (std::size_t i = dbegin; i < dend; ++i) value = value * 10 + (raw_text[i] - '0');
    if (value < 1 || value > n_options) return out;   // out of range: malformed
    out.index = value - 1;
    out.digit_begin = dbegin;
    out.digit_end = dend;
    return out;
}

EntropyAggregation entropy_aggregation_from_string(std::string_view s) {
    if (s == "first") return EntropyAggregation::first;
    if (s == "mean") return EntropyAggregation::mean;
    if (s == "max") return EntropyAggregation::max;
    throw UqError(ErrorKind::validation, "unknown entropy aggregation '" + std::string(s) + "'");
}

TopkPolicy topk_policy_from_string(std::string_view s) {
    if (s == "renormalize") return TopkPolicy::renormalize;
    if (s == "tail-bucket" || s == "tail_bucket") return TopkPolicy::tail_bucket;
    throw UqError(ErrorKind::validation, "unknown top-k policy '" + std::string(s) + "'");
}

std::string to_string(EntropyAggregation a) {
    switch (a) {
        case EntropyAggregation::first: return "first";
        case EntropyAggregation::mean: return "mean";
        case EntropyAggregation::max: return "max";
    }
    return "first";
}

std::string to_string(TopkPolicy p) {
    return p == TopkPolicy::renormalize ? "renormalize" : "tail-bucket";
}

json answer_to_json(const AnswerRecord& a) {
    json j;
    j["question_id"] = a.question_id;
    j["model_id"] = a.model_id;
    j["raw_text"] = a.raw_text;
    if (a.extracted_choice) j["extracted_choice"] = *a.extracted_choice;
    j["is_malformed"] = a.is_malformed;
    if (a.is_correct) j["is_correct"] = *a.is_correct;
    j["entropy"] = a.entropy;
    j["confidence"] = a.confidence;
    j["distribution_support"] = a.distribution_support;
    j["coverage_is_full_vocab"] = a.coverage_is_full_vocab;
    if (a.failed) j["failed"] = true;
    return j;
}

AnswerRecord answer_from_json(const json& j) {
    AnswerRecord a;
    try {
        a.question_id = j.at("question_id").get<std::string>();
        a.model_id = j.at("model_id").get<std::string>();
        a.raw_text = j.at("raw_text").get<std::string>();
        if (j.contains("extracted_choice")) a.extracted_choice = j.at("extracted_choice").get<int>();
        a.is_malformed = j.at("is_malformed").get<bool>();
        if (j.contains("is_correct")) a.is_correct = j.at("is_correct").get<bool>();
        a.entropy = j.at("entropy").get<double>();
        a.confidence = j.at("confidence").get<double>();
        a.distribution_support = j.at("distribution_support").get<int>();
        a.coverage_is_full_vocab = j.at("coverage_is_full_vocab").get<bool>();
        a.failed = j.value("failed", false);
    } catch (const json::exception& e) {
        throw UqError(ErrorKind::validation, std::string("malformed answer record: ") + e.what());
    }
    return a;
}

namespace {

// Positions of the generated tokens whose text spans overlap
// [digit_begin, digit_end). Token texts are taken from the greedy (top)
// entries; if they fail to reconstruct raw_text the span lookup degrades to
// position 0.
std::vector<std::size_t> positions_covering_span(const CompletionResponse& resp,
                                                 std::size_t begin, std::size_t end) {
    std::vector<std::size_t> out;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < resp.token_distributions.size(); ++i) {
        const auto& d = resp.token_distributions[i];
        if (d.entries.empty()) continue;
        const std::size_t len = d.entries.front().token_text.size();
        const std::size_t tok_begin = offset;
        const std::size_t tok_end = offset + len;
        if (tok_begin < end && tok_end > begin) out.push_back(i);
        offset = tok_end;
    }
    if (offset != resp.text.size()) {
        // token texts do not reconstruct the response; span mapping unreliable
        return {};
    }
    return out;
}

} // namespace

AnswerRecord assemble_answer(const QuestionRecord& question, const std::string& model_id,
                             const CompletionResponse& response, const EntropyPolicy& policy) {
    AnswerRecord rec;
    rec.question_id = question.id;
    rec.model_id = model_id;
    rec.raw_text = response.text;

    const ChoiceExtraction choice =
        extract_choice(response.text, static_cast<int>(question.options.size()));
    rec.extracted_choice = choice.index;
    rec.is_malformed = !choice.index.has_value();
    if (choice.index) {
        rec.is_correct = (*choice.index == question.answer_index);
    }

    if (!response.token_distributions.empty()) {
        std::vector<std::size_t> positions;
        if (choice.index) {
            positions = positions_covering_span(response, choice.digit_begin, choice.digit_end);
        }
        if (positions.empty()) positions.push_back(0);
        if (policy.aggregation == EntropyAggregation::first) {
            positions.resize(1);
        }

        double agg = 0.0;
        int support = 0;
        bool full = true;
        for (std::size_t idx : positions) {
            const auto& dist = response.token_distributions[idx];
            const TopkEntropy te = entropy_from_topk(dist, policy.topk);
            support = std::max(support, te.effective_support);
            full = full && dist.coverage_is_full_vocab;
            switch (policy.aggregation) {
                case EntropyAggregation::first: agg = te.entropy; break;
                case EntropyAggregation::mean: agg += te.entropy; break;
                case EntropyAggregation::max: agg = std::max(agg, te.entropy); break;
            }
        }
        if (policy.aggregation == EntropyAggregation::mean) {
            agg /= static_cast<double>(positions.size());
        }
        rec.entropy = agg;
        rec.distribution_support = support;
        rec.coverage_is_full_vocab = full;
        rec.confidence = support >= 2 ? confidence(agg, support) : 1.0;
    } else {
        rec.entropy = 0.0;
        rec.confidence = 1.0;
        rec.distribution_support = 0;
        rec.coverage_is_full_vocab = false;
    }
    return rec;
}

namespace {

AnswerRecord failed_answer(const QuestionRecord& question, const std::string& model_id) {
    AnswerRecord rec;
    rec.question_id = question.id;
    rec.model_id = model_id;
    rec.failed = true;
    rec.is_malformed = false;
    rec.entropy = 0.0;
    rec.confidence = 0.0;
    rec.distribution_support = 0;
    return rec;
}

} // namespace

RunAnswersStats run_answers(std::span<const QuestionRecord> questions, Gateway& gateway,
                            const RunAnswersConfig& config, std::size_t start_index,
                            const AnswerSink& sink) {
    if (config.concurrency < 1) {
        throw UqError(ErrorKind::validation, "concurrency must be >= 1");
    }
    RunAnswersStats stats;

    auto make = [&](std::size_t i) -> AnswerRecord {
        const QuestionRecord& q = questions[i];
        try {
            CompletionRequest req;
            req.model_id = config.model_id;
            req.prompt_messages = build_qa_prompt(q);
            req.max_new_tokens = config.max_new_tokens;
            req.temperature = config.temperature;
            req.want_token_distributions = true;
            req.top_k_logprobs = config.top_k_logprobs;
            const CompletionResponse resp = gateway.complete(req);
            return assemble_answer(q, config.model_id, resp, config.entropy);
        } catch (const UqError& e) {
            if (e.kind() == ErrorKind::transport) {
                return failed_answer(q, config.model_id);
            }
            throw;
        }
    };

    ordered_parallel_for<AnswerRecord>(
        start_index, questions.size(), config.concurrency, make,
        [&](std::size_t, const AnswerRecord& rec) {
            ++stats.total;
            if (rec.failed) {
                ++stats.failed;
            } else if (rec.is_malformed) {
                ++stats.malformed;
            }
            sink(rec);
        });
    return stats;
}

std::string malformed_status(std::size_t malformed, std::size_t answered) {
    if (answered == 0) return "ok";
    const double rate = static_cast<double>(malformed) / static_cast<double>(answered);
    return rate > 0.05 ? "threshold-exceeded" : "ok";
}

} // namespace uqeval
