#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uqeval/dataset.hpp"
#include "uqeval/judge.hpp"
#include "uqeval/qa_runner.hpp"

namespace uqeval {

// One scored question: a non-malformed, non-failed answer joined with its
// question and (optionally) judge labels.
struct EvalRow {
    std::string question_id;
    std::string category;
    int option_count = 0;
    bool is_correct = false;
    double entropy = 0.0;
    double confidence = 0.0;
    std::optional<double> complexity_numeric;
    std::optional<NominalComplexity> complexity_nominal;
    std::optional<bool> requires_reasoning;
    std::optional<ReasoningSteps> reasoning_steps;
};

json eval_row_to_json(const EvalRow& r);
EvalRow eval_row_from_json(const json& j);

// One row per non-malformed, non-failed answer; judge fields stay absent
// when unavailable. Unknown question ids raise UqError(validation).
std::vector<EvalRow> join_rows(std::span<const QuestionRecord> questions,
                               std::span<const AnswerRecord> answers,
                               std::span<const JudgeRecord> judges);

struct AucResult {
    double value = 0.5;
    bool defined = false;   // false when either class is empty
};

// Probability that a random positive outranks a random negative; ties count
// half (Mann-Whitney midrank convention). Positive class for error
// prediction is "incorrect", scored by entropy.
AucResult roc_auc(std::span<const double> scores, std::span<const unsigned char> positive);

struct CalibrationBin {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t count = 0;
    double mean_confidence = 0.0;     // undefined (NaN) when count == 0
    double empirical_accuracy = 0.0;  // undefined (NaN) when count == 0
};

struct CalibrationTable {
    std::vector<CalibrationBin> bins;
    int n_bins = 0;
    std::size_t total_count = 0;
};

// Equal-width bins over [0,1], left-closed right-open, final bin closed.
// Confidence outside [0,1] -> UqError(domain).
CalibrationTable calibration_table(std::span<const double> confidences,
                                   std::span<const unsigned char> is_correct, int n_bins);

enum class StratifyKey { category, requires_reasoning, reasoning_steps, overall };

StratifyKey stratify_key_from_string(std::string_view s);

struct SliceStats {
    std::size_t count = 0;
    double accuracy = 0.0;
    AucResult auc_entropy;          // entropy predicting error
    AucResult auc_masj_numeric;     // complexity_numeric predicting error
    std::size_t masj_numeric_count = 0;
    AucResult auc_masj_nominal;     // ordinal-mapped nominal predicting error
    std::size_t masj_nominal_count = 0;
};

struct StratifiedReport {
    std::map<std::string, SliceStats> slices;   // sorted by slice name
    SliceStats overall;
    CalibrationTable calibration;
};

// Rows lacking the slicing key's judge field are excluded from that key's
// slices (they still count in `overall`). Throws UqError(validation) on an
// empty row set.
StratifiedReport stratify(std::span<const EvalRow> rows, StratifyKey key, int n_bins = 10);

// Shortest round-trip decimal formatting, locale-independent.
std::string format_double(double v);

} // namespace uqeval
