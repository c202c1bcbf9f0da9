#include "uqeval/judge.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>

#include "uqeval/errors.hpp"
#include "uqeval/parallel.hpp"

// generated from prompts/*.txt at build time
#include "prompt_numeric.inc"
#include "prompt_nominal.inc"
#include "prompt_reasoning.inc"

namespace uqeval {

std::string to_string(JudgeKind k) {
    switch (k) {
        case JudgeKind::numeric: return "numeric";
        case JudgeKind::nominal: return "nominal";
        case JudgeKind::reasoning: return "reasoning";
    }
    return "numeric";
}

JudgeKind judge_kind_from_string(std::string_view s) {
    if (s == "numeric") return JudgeKind::numeric;
    if (s == "nominal") return JudgeKind::nominal;
    if (s == "reasoning") return JudgeKind::reasoning;
    throw UqError(ErrorKind::validation, "unknown judge kind '" + std::string(s) + "'");
}

std::string to_string(NominalComplexity c) {
    switch (c) {
        case NominalComplexity::high_school_and_easier: return "high_school_and_easier";
        case NominalComplexity::undergraduate_easy: return "undergraduate_easy";
        case NominalComplexity::undergraduate_hard: return "undergraduate_hard";
        case NominalComplexity::graduate: return "graduate";
        case NominalComplexity::postgraduate: return "postgraduate";
    }
    return "high_school_and_easier";
}

NominalComplexity nominal_from_string(std::string_view s) {
    if (s == "high_school_and_easier") return NominalComplexity::high_school_and_easier;
    if (s == "undergraduate_easy") return NominalComplexity::undergraduate_easy;
    if (s == "undergraduate_hard") return NominalComplexity::undergraduate_hard;
    if (s == "graduate") return NominalComplexity::graduate;
    if (s == "postgraduate") return NominalComplexity::postgraduate;
    throw UqError(ErrorKind::validation, "unknown nominal complexity '" + std::string(s) + "'");
}

std::string to_string(ReasoningSteps s) {
    switch (s) {
        case ReasoningSteps::low: return "low";
        case ReasoningSteps::medium: return "medium";
        case ReasoningSteps::high: return "high";
    }
    return "low";
}

ReasoningSteps steps_from_string(std::string_view s) {
    if (s == "low") return ReasoningSteps::low;
    if (s == "medium") return ReasoningSteps::medium;
    if (s == "high") return ReasoningSteps::high;
    throw UqError(ErrorKind::validation, "unknown reasoning steps '" + std::string(s) + "'");
}

double nominal_ordinal_score(NominalComplexity c) {
    return static_cast<double>(static_cast<int>(c)) * 0.25;
}

const std::string& judge_prompt_template(JudgeKind kind) {
    static const std::string numeric(kPromptNumericBytes, kPromptNumericLen);
    static const std::string nominal(kPromptNominalBytes, kPromptNominalLen);
    static const std::string reasoning(kPromptReasoningBytes, kPromptReasoningLen);
    switch (kind) {
        case JudgeKind::numeric: return numeric;
        case JudgeKind::nominal: return nominal;
        case JudgeKind::reasoning: return reasoning;
    }
    return numeric;
}

std::vector<ChatMessage> build_judge_prompt(const QuestionRecord& question, JudgeKind kind) {
    std::string user = question.text;
    user += "\n";
    for (std::size_t i = 0; i < question.options.size(); ++i) {
        user += std::to_string(i + 1) + ". " + question.options[i] + "\n";
    }
    return {
        {"system", judge_prompt_template(kind)},
        {"user", std::move(user)},
    };
}

namespace {

struct BracketGroup {
    std::string_view content;
};

// Every [[...]] group in order of appearance.
std::vector<BracketGroup> bracket_groups(std::string_view s) {
    std::vector<BracketGroup> out;
    std::size_t pos = 0;
    while (pos + 3 < s.size() + 1) {
        const std::size_t open = s.find("[[", pos);
        if (open == std::string_view::npos) break;
        const std::size_t close = s.find("]]", open + 2);
        if (close == std::string_view::npos) break;
        out.push_back({s.substr(open + 2, close - open - 2)});
        pos = close + 2;
    }
    return out;
}

std::string trim_lower(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    std::string out(s.substr(b, e - b));
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool parse_decimal(std::string_view s, double* out) {
    const std::string t = trim_lower(s);
    if (t.empty()) return false;
    const char* begin = t.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end != begin + t.size()) return false;
    // reject nan/inf spellings strtod accepts
    if (!(v == v) || v > 1e308 || v < -1e308) return false;
    *out = v;
    return true;
}

} // namespace

Parsed<double> parse_numeric(std::string_view raw) {
    Parsed<double> result;
    bool found = false;
    double last = 0.0;
    for (const auto& g : bracket_groups(raw)) {
        double v;
        if (parse_decimal(g.content, &v)) {
            found = true;
            last = v;
        }
    }
    if (!found) {
        result.error_type = JudgeErrorType::parse;
        result.error = "no [[<number>]] group in response";
        return result;
    }
    if (last < 0.0 || last > 1.0) {
        result.error_type = JudgeErrorType::range;
        result.error = "complexity " + std::to_string(last) + " outside [0, 1]";
        return result;
    }
    result.value = last;
    return result;
}

Parsed<NominalParse> parse_nominal(std::string_view raw) {
    Parsed<NominalParse> result;
    const auto groups = bracket_groups(raw);
    if (groups.empty()) {
        result.error = "no [[<label>]] group in response";
        return result;
    }
    const std::string label = trim_lower(groups.back().content);
    static const std::pair<std::string_view, NominalComplexity> kScale[] = {
        {"high_school_and_easier", NominalComplexity::high_school_and_easier},
        {"undergraduate_easy", NominalComplexity::undergraduate_easy},
        {"undergraduate_hard", NominalComplexity::undergraduate_hard},
        {"graduate", NominalComplexity::graduate},
        {"postgraduate", NominalComplexity::postgraduate},
    };
    for (const auto& [name, value] : kScale) {
        if (label == name) {
            result.value = NominalParse{value, false};
            return result;
        }
    }
    // the prompt's own example emits a label that is not on its scale
    if (label == "undergraduate") {
        result.value = NominalParse{NominalComplexity::undergraduate_easy, true};
        return result;
    }
    result.error = "label '" + label + "' not on the complexity scale";
    return result;
}

namespace {

// Last [[<key>: <value>]] for the given key, case-insensitive.
std::optional<std::string> last_keyed_group(std::string_view raw, std::string_view key) {
    std::optional<std::string> out;
    for (const auto& g : bracket_groups(raw)) {
        const auto colon = g.content.find(':');
        if (colon == std::string_view::npos) continue;
        if (trim_lower(g.content.substr(0, colon)) != key) continue;
        out = trim_lower(g.content.substr(colon + 1));
    }
    return out;
}

bool parse_yes_no(const std::string& v, bool* out) {
    if (v == "yes") { *out = true; return true; }
    if (v == "no") { *out = false; return true; }
    return false;
}

} // namespace

Parsed<ReasoningEstimate> parse_reasoning(std::string_view raw) {
    Parsed<ReasoningEstimate> result;
    ReasoningEstimate est;

    const auto knowledge = last_keyed_group(raw, "requires knowledge");
    if (!knowledge) {
        result.error = "missing group: Requires knowledge";
        return result;
    }
    if (!parse_yes_no(*knowledge, &est.requires_knowledge)) {
        result.error = "invalid value for Requires knowledge: '" + *knowledge + "'";
        return result;
    }

    const auto reasoning = last_keyed_group(raw, "requires reasoning");
    if (!reasoning) {
        result.error = "missing group: Requires reasoning";
        return result;
    }
    if (!parse_yes_no(*reasoning, &est.requires_reasoning)) {
        result.error = "invalid value for Requires reasoning: '" + *reasoning + "'";
        return result;
    }

    const auto steps = last_keyed_group(raw, "number of reasoning steps");
    if (!steps) {
        result.error = "missing group: Number of reasoning steps";
        return result;
    }
    if (*steps == "low") {
        est.steps = ReasoningSteps::low;
    } else if (*steps == "medium") {
        est.steps = ReasoningSteps::medium;
    } else if (*steps == "high") {
        est.steps = ReasoningSteps::high;
    } else {
        result.error = "invalid value for Number of reasoning steps: '" + *steps + "'";
        return result;
    }

    result.value = est;
    return result;
}

json judge_to_json(const JudgeRecord& r) {
    json j;
    j["question_id"] = r.question_id;
    j["judge_model_id"] = r.judge_model_id;
    if (r.complexity_numeric) j["complexity_numeric"] = *r.complexity_numeric;
    if (r.complexity_nominal) j["complexity_nominal"] = to_string(*r.complexity_nominal);
    if (r.requires_knowledge) j["requires_knowledge"] = *r.requires_knowledge;
    if (r.requires_reasoning) j["requires_reasoning"] = *r.requires_reasoning;
    if (r.reasoning_steps) j["reasoning_steps"] = to_string(*r.reasoning_steps);
    if (r.nominal_leniency_used) j["nominal_leniency_used"] = true;
    j["attempts_used"] = r.attempts_used;
    j["raw_texts"] = r.raw_texts;
    if (!r.failed_kinds.empty()) {
        j["failed_kinds"] = std::vector<std::string>(r.failed_kinds.begin(), r.failed_kinds.end());
    }
    return j;
}

JudgeRecord judge_from_json(const json& j) {
    JudgeRecord r;
    try {
        r.question_id = j.at("question_id").get<std::string>();
        r.judge_model_id = j.at("judge_model_id").get<std::string>();
        if (j.contains("complexity_numeric")) {
            r.complexity_numeric = j.at("complexity_numeric").get<double>();
        }
        if (j.contains("complexity_nominal")) {
            r.complexity_nominal = nominal_from_string(j.at("complexity_nominal").get<std::string>());
        }
        if (j.contains("requires_knowledge")) {
            r.requires_knowledge = j.at("requires_knowledge").get<bool>();
        }
        if (j.contains("requires_reasoning")) {
            r.requires_reasoning = j.at("requires_reasoning").get<bool>();
        }
        if (j.contains("reasoning_steps")) {
            r.reasoning_steps = steps_from_string(j.at("reasoning_steps").get<std::string>());
        }
        r.nominal_leniency_used = j.value("nominal_leniency_used", false);
        if (j.contains("attempts_used")) {
            r.attempts_used = j.at("attempts_used").get<std::map<std::string, int>>();
        }
        if (j.contains("raw_texts")) {
            r.raw_texts = j.at("raw_texts").get<std::map<std::string, std::string>>();
        }
        if (j.contains("failed_kinds")) {
            for (const auto& k : j.at("failed_kinds")) {
                r.failed_kinds.insert(k.get<std::string>());
            }
        }
    } catch (const json::exception& e) {
        throw UqError(ErrorKind::validation, std::string("malformed judge record: ") + e.what());
    }
    return r;
}

JudgeRecord judge_question(const QuestionRecord& question, Gateway& gateway,
                           const JudgeRunConfig& config) {
    if (config.policy.max_attempts < 1) {
        throw UqError(ErrorKind::validation, "max_attempts must be >= 1");
    }
    JudgeRecord rec;
    rec.question_id = question.id;
    rec.judge_model_id = config.model_id;

    for (JudgeKind kind : config.kinds) {
        const std::string kind_name = to_string(kind);
        CompletionRequest req;
        req.model_id = config.model_id;
        req.prompt_messages = build_judge_prompt(question, kind);
        req.max_new_tokens = config.max_new_tokens;
        req.temperature = config.temperature;
        req.want_token_distributions = false;

        int attempts = 0;
        for (int attempt = 1; attempt <= config.policy.max_attempts; ++attempt) {
            attempts = attempt;
            CompletionResponse resp;
            try {
                resp = gateway.complete(req);
            } catch (const UqError& e) {
                if (e.kind() == ErrorKind::transport) {
                    rec.failed_kinds.insert(kind_name);
                    break;
                }
                throw;
            }
            rec.raw_texts[kind_name] = resp.text;

            bool parsed_ok = false;
            switch (kind) {
                case JudgeKind::numeric: {
                    const auto p = parse_numeric(resp.text);
                    if (p.ok()) {
                        rec.complexity_numeric = *p.value;
                        parsed_ok = true;
                    }
                    break;
                }
                case JudgeKind::nominal: {
                    const auto p = parse_nominal(resp.text);
                    if (p.ok()) {
                        rec.complexity_nominal = p.value->value;
                        rec.nominal_leniency_used |= p.value->leniency_used;
                        parsed_ok = true;
                    }
                    break;
                }
                case JudgeKind::reasoning: {
                    const auto p = parse_reasoning(resp.text);
                    if (p.ok()) {
                        rec.requires_knowledge = p.value->requires_knowledge;
                        rec.requires_reasoning = p.value->requires_reasoning;
                        rec.reasoning_steps = p.value->steps;
                        parsed_ok = true;
                    }
                    break;
                }
            }
            if (parsed_ok) {
                // quality-gate hook: regenerate while attempts remain, keep
                // the last parsed value otherwise
                if (config.policy.regenerate_if &&
                    config.policy.regenerate_if(kind, resp.text) &&
                    attempt < config.policy.max_attempts) {
                    continue;
                }
                break;
            }
        }
        rec.attempts_used[kind_name] = attempts;
    }
    return rec;
}

RunJudgesStats run_judges(std::span<const QuestionRecord> questions, Gateway& gateway,
                          const JudgeRunConfig& config, std::size_t start_index,
                          const JudgeSink& sink) {
    RunJudgesStats stats;
    ordered_parallel_for<JudgeRecord>(
        start_index, questions.size(), config.concurrency,
        [&](std::size_t i) { return judge_question(questions[i], gateway, config); },
        [&](std::size_t, const JudgeRecord& rec) {
            ++stats.total;
            stats.kinds_failed += rec.failed_kinds.size();
            if (rec.nominal_leniency_used) ++stats.leniency_uses;
            for (JudgeKind kind : config.kinds) {
                if (rec.failed_kinds.count(to_string(kind))) continue;
                const bool absent =
                    (kind == JudgeKind::numeric && !rec.complexity_numeric) ||
                    (kind == JudgeKind::nominal && !rec.complexity_nominal) ||
                    (kind == JudgeKind::reasoning && !rec.requires_knowledge);
                if (absent) ++stats.kinds_exhausted;
            }
            sink(rec);
        });
    return stats;
}

} // namespace uqeval
