#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "uqeval/jsonl.hpp"
#include "uqeval/metrics.hpp"

namespace uqeval {

// The full report document: overall stats, per-category / per-reasoning
// stratifications, calibration table, and run counts. Deterministic field
// order and number formatting.
json report_document(const std::string& run_id, const std::string& model_id,
                     std::span<const EvalRow> rows, const json& counts, int n_bins);

// Writes report.json plus auc_by_category.csv, auc_by_reasoning.csv,
// calibration.csv and entropy_hist.csv next to it. Byte-deterministic for
// identical inputs.
void write_report_files(const std::filesystem::path& dir, const json& report_doc,
                        std::span<const EvalRow> rows, int n_bins);

} // namespace uqeval
