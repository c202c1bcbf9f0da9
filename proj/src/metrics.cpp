#include "uqeval/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "uqeval/errors.hpp"

namespace uqeval {

json eval_row_to_json(const EvalRow& r) {
    json j;
    j["question_id"] = r.question_id;
    j["category"] = r.category;
    j["option_count"] = r.option_count;
    j["is_correct"] = r.is_correct;
    j["entropy"] = r.entropy;
    j["confidence"] = r.confidence;
    if (r.complexity_numeric) j["complexity_numeric"] = *r.complexity_numeric;
    if (r.complexity_nominal) j["complexity_nominal"] = to_string(*r.complexity_nominal);
    if (r.requires_reasoning) j["requires_reasoning"] = *r.requires_reasoning;
    if (r.reasoning_steps) j["reasoning_steps"] = to_string(*r.reasoning_steps);
    return j;
}

EvalRow eval_row_from_json(const json& j) {
    EvalRow r;
    try {
        r.question_id = j.at("question_id").get<std::string>();
        r.category = j.at("category").get<std::string>();
        r.option_count = j.at("option_count").get<int>();
        r.is_correct = j.at("is_correct").get<bool>();
        r.entropy = j.at("entropy").get<double>();
        r.confidence = j.at("confidence").get<double>();
        if (j.contains("complexity_numeric")) {
            r.complexity_numeric = j.at("complexity_numeric").get<double>();
        }
        if (j.contains("complexity_nominal")) {
            r.complexity_nominal = nominal_from_string(j.at("complexity_nominal").get<std::string>());
        }
        if (j.contains("requires_reasoning")) {
            r.requires_reasoning = j.at("requires_reasoning").get<bool>();
        }
        if (j.contains("reasoning_steps")) {
            r.reasoning_steps = steps_from_string(j.at("reasoning_steps").get<std::string>());
        }
    } catch (const json::exception& e) {
        throw UqError(ErrorKind::validation, std::string("malformed eval row: ") + e.what());
    }
    return r;
}

std::vector<EvalRow> join_rows(std::span<const QuestionRecord> questions,
                               std::span<const AnswerRecord> answers,
                               std::span<const JudgeRecord> judges) {
    std::unordered_map<std::string_view, const QuestionRecord*> by_id;
    by_id.reserve(questions.size());
    for (const auto& q : questions) by_id.emplace(q.id, &q);

    std::unordered_map<std::string_view, const JudgeRecord*> judge_by_id;
    judge_by_id.reserve(judges.size());
    for (const auto& r : judges) judge_by_id.emplace(r.question_id, &r);

    std::vector<EvalRow> rows;
    rows.reserve(answers.size());
    for (const auto& a : answers) {
        const auto it = by_id.find(a.question_id);
        if (it == by_id.end()) {
            throw UqError(ErrorKind::validation,
                          "answer references unknown question id '" + a.question_id + "'");
        }
        if (a.failed || a.is_malformed) continue;   // discarded from all metrics
        const QuestionRecord& q = *it->second;
        EvalRow row;
        row.question_id = a.question_id;
        row.category = q.category;
        row.option_count = static_cast<int>(q.options.size());
        row.is_correct = a.is_correct.value();
        row.entropy = a.entropy;
        row.confidence = a.confidence;
        if (const auto jt = judge_by_id.find(a.question_id); jt != judge_by_id.end()) {
            const JudgeRecord& jr = *jt->second;
            row.complexity_numeric = jr.complexity_numeric;
            row.complexity_nominal = jr.complexity_nominal;
            row.requires_reasoning = jr.requires_reasoning;
            row.reasoning_steps = jr.reasoning_steps;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

AucResult roc_auc(std::span<const double> scores, std::span<const unsigned char> positive) {
    if (scores.size() != positive.size()) {
        throw UqError(ErrorKind::validation, "scores and labels differ in length");
    }
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (unsigned char p : positive) n_pos += p ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n < 2 || n_pos == 0 || n_neg == 0) {
        return {0.5, false};
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // midranks: tied scores share the average of their rank range
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }

    double rank_sum_pos = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (positive[k]) rank_sum_pos += rank[k];
    }
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return {u / (static_cast<double>(n_pos) * static_cast<double>(n_neg)), true};
}

CalibrationTable calibration_table(std::span<const double> confidences,
                                   std::span<const unsigned char> is_correct, int n_bins) {
    if (confidences.size() != is_correct.size()) {
        throw UqError(ErrorKind::validation, "confidences and labels differ in length");
    }
    if (n_bins < 2) {
        throw UqError(ErrorKind::validation, "n_bins must be >= 2");
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CalibrationTable table;
    table.n_bins = n_bins;
    table.total_count = confidences.size();
    table.bins.resize(static_cast<std::size_t>(n_bins));
    std::vector<double> conf_sum(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<std::size_t> correct(static_cast<std::size_t>(n_bins), 0);

    const double width = 1.0 / static_cast<double>(n_bins);
    for (int b = 0; b < n_bins; ++b) {
        table.bins[static_cast<std::size_t>(b)].lower = static_cast<double>(b) * width;
        table.bins[static_cast<std::size_t>(b)].upper =
            b + 1 == n_bins ? 1.0 : static_cast<double>(b + 1) * width;
    }

    for (std::size_t k = 0; k < confidences.size(); ++k) {
        const double c = confidences[k];
        if (!(c >= 0.0 && c <= 1.0)) {
            throw UqError(ErrorKind::domain,
                          "confidence " + std::to_string(c) + " outside [0, 1]");
        }
        int b = static_cast<int>(c / width);
        if (b >= n_bins) b = n_bins - 1;   // c == 1.0 lands in the closed final bin
        auto& bin = table.bins[static_cast<std::size_t>(b)];
        ++bin.count;
        conf_sum[static_cast<std::size_t>(b)] += c;
        correct[static_cast<std::size_t>(b)] += is_correct[k] ? 1 : 0;
    }

    for (int b = 0; b < n_bins; ++b) {
        auto& bin = table.bins[static_cast<std::size_t>(b)];
        if (bin.count == 0) {
            bin.mean_confidence = nan;
            bin.empirical_accuracy = nan;
        } else {
            bin.mean_confidence = conf_sum[static_cast<std::size_t>(b)] / static_cast<double>(bin.count);
            bin.empirical_accuracy =
                static_cast<double>(correct[static_cast<std::size_t>(b)]) / static_cast<double>(bin.count);
        }
    }
    return table;
}

StratifyKey stratify_key_from_string(std::string_view s) {
    if (s == "category") return StratifyKey::category;
    if (s == "requires_reasoning") return StratifyKey::requires_reasoning;
    if (s == "reasoning_steps") return StratifyKey::reasoning_steps;
    if (s == "overall") return StratifyKey::overall;
    throw UqError(ErrorKind::validation, "unknown stratify key '" + std::string(s) + "'");
}

namespace {

SliceStats slice_stats(std::span<const EvalRow* const> rows) {
    SliceStats s;
    s.count = rows.size();
    if (rows.empty()) return s;

    std::size_t n_correct = 0;
    std::vector<double> entropy;
    std::vector<unsigned char> incorrect;
    entropy.reserve(rows.size());
    incorrect.reserve(rows.size());
    std::vector<double> masj_num;
    std::vector<unsigned char> masj_num_incorrect;
    std::vector<double> masj_nom;
    std::vector<unsigned char> masj_nom_incorrect;

    for (const EvalRow* r : rows) {
        n_correct += r->is_correct ? 1 : 0;
        entropy.push_back(r->entropy);
        incorrect.push_back(r->is_correct ? 0 : 1);
        if (r->complexity_numeric) {
            masj_num.push_back(*r->complexity_numeric);
            masj_num_incorrect.push_back(r->is_correct ? 0 : 1);
        }
        if (r->complexity_nominal) {
            masj_nom.push_back(nominal_ordinal_score(*r->complexity_nominal));
            masj_nom_incorrect.push_back(r->is_correct ? 0 : 1);
        }
    }
    s.accuracy = static_cast<double>(n_correct) / static_cast<double>(rows.size());
    s.auc_entropy = roc_auc(entropy, incorrect);
    s.auc_masj_numeric = roc_auc(masj_num, masj_num_incorrect);
    s.masj_numeric_count = masj_num.size();
    s.auc_masj_nominal = roc_auc(masj_nom, masj_nom_incorrect);
    s.masj_nominal_count = masj_nom.size();
    return s;
}

} // namespace

StratifiedReport stratify(std::span<const EvalRow> rows, StratifyKey key, int n_bins) {
    if (rows.empty()) {
        throw UqError(ErrorKind::validation, "stratify over empty row set");
    }
    StratifiedReport report;

    std::vector<const EvalRow*> all;
    all.reserve(rows.size());
    for (const auto& r : rows) all.push_back(&r);
    report.overall = slice_stats(all);

    std::map<std::string, std::vector<const EvalRow*>> groups;
    for (const auto& r : rows) {
        switch (key) {
            case StratifyKey::overall:
                break;
            case StratifyKey::category:
                groups[r.category].push_back(&r);
                break;
            case StratifyKey::requires_reasoning:
                if (r.requires_reasoning) {
                    groups[*r.requires_reasoning ? "yes_reasoning" : "no_reasoning"].push_back(&r);
                }
                break;
            case StratifyKey::reasoning_steps:
                if (r.reasoning_steps) {
                    groups["steps_" + to_string(*r.reasoning_steps)].push_back(&r);
                }
                break;
        }
    }
    for (const auto& [name, members] : groups) {
        report.slices[name] = slice_stats(members);
    }

    std::vector<double> confidences;
    std::vector<unsigned char> correct;
    confidences.reserve(rows.size());
    correct.reserve(rows.size());
    for (const auto& r : rows) {
        confidences.push_back(r.confidence);
        correct.push_back(r.is_correct ? 1 : 0);
    }
    report.calibration = calibration_table(confidences, correct, n_bins);
    return report;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace uqeval
