#include "uqeval/report_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "uqeval/errors.hpp"

namespace uqeval {

namespace fs = std::filesystem;

namespace {

json auc_json(const AucResult& a) {
    return a.defined ? json(a.value) : json(nullptr);
}

json slice_json(const SliceStats& s) {
    json j;
    j["count"] = s.count;
    j["accuracy"] = s.accuracy;
    j["roc_auc"] = auc_json(s.auc_entropy);
    j["auc_defined"] = s.auc_entropy.defined;
    j["masj_numeric_auc"] = auc_json(s.auc_masj_numeric);
    j["masj_numeric_count"] = s.masj_numeric_count;
    j["masj_nominal_auc"] = auc_json(s.auc_masj_nominal);
    j["masj_nominal_count"] = s.masj_nominal_count;
    return j;
}

json calibration_json(const CalibrationTable& t) {
    json j;
    j["n_bins"] = t.n_bins;
    j["total_count"] = t.total_count;
    json bins = json::array();
    for (const auto& b : t.bins) {
        json jb;
        jb["lower"] = b.lower;
        jb["upper"] = b.upper;
        jb["count"] = b.count;
        jb["mean_confidence"] = b.count == 0 ? json(nullptr) : json(b.mean_confidence);
        jb["empirical_accuracy"] = b.count == 0 ? json(nullptr) : json(b.empirical_accuracy);
        bins.push_back(std::move(jb));
    }
    j["bins"] = std::move(bins);
    return j;
}

json slices_json(const StratifiedReport& rep) {
    json j = json::object();
    for (const auto& [name, stats] : rep.slices) {
        j[name] = slice_json(stats);
    }
    return j;
}

} // namespace

json report_document(const std::string& run_id, const std::string& model_id,
                     std::span<const EvalRow> rows, const json& counts, int n_bins) {
    json doc;
    doc["run_id"] = run_id;
    doc["model_id"] = model_id;
    doc["counts"] = counts;
    if (rows.empty()) {
        doc["overall"] = nullptr;
        doc["calibration"] = nullptr;
        doc["by_category"] = json::object();
        doc["by_requires_reasoning"] = json::object();
        doc["by_reasoning_steps"] = json::object();
        return doc;
    }
    const StratifiedReport by_cat = stratify(rows, StratifyKey::category, n_bins);
    const StratifiedReport by_req = stratify(rows, StratifyKey::requires_reasoning, n_bins);
    const StratifiedReport by_steps = stratify(rows, StratifyKey::reasoning_steps, n_bins);
    doc["overall"] = slice_json(by_cat.overall);
    doc["calibration"] = calibration_json(by_cat.calibration);
    doc["by_category"] = slices_json(by_cat);
    doc["by_requires_reasoning"] = slices_json(by_req);
    doc["by_reasoning_steps"] = slices_json(by_steps);
    return doc;
}

namespace {

void write_text(const fs::path& path, const std::string& content) {
    atomic_write_file(path, content);
}

std::string csv_auc_field(const json& slice) {
    return slice.at("roc_auc").is_null() ? std::string{}
                                         : format_double(slice.at("roc_auc").get<double>());
}

std::string auc_slices_csv(const json& slices, const char* key_column,
                           const std::vector<std::string>& order) {
    std::string out = std::string(key_column) + ",count,accuracy,roc_auc,auc_defined\n";
    for (const auto& name : order) {
        if (!slices.contains(name)) continue;
        const json& s = slices.at(name);
        out += name;
        out += ',' + std::to_string(s.at("count").get<std::size_t>());
        out += ',' + format_double(s.at("accuracy").get<double>());
        out += ',' + csv_auc_field(s);
        out += ',';
        out += s.at("auc_defined").get<bool>() ? "true" : "false";
        out += '\n';
    }
    return out;
}

std::string calibration_csv(const json& calibration) {
    std::string out = "bin_lower,bin_upper,count,mean_confidence,empirical_accuracy\n";
    if (calibration.is_null()) return out;
    for (const auto& b : calibration.at("bins")) {
        out += format_double(b.at("lower").get<double>());
        out += ',' + format_double(b.at("upper").get<double>());
        out += ',' + std::to_string(b.at("count").get<std::size_t>());
        out += ',';
        if (!b.at("mean_confidence").is_null()) {
            out += format_double(b.at("mean_confidence").get<double>());
        }
        out += ',';
        if (!b.at("empirical_accuracy").is_null()) {
            out += format_double(b.at("empirical_accuracy").get<double>());
        }
        out += '\n';
    }
    return out;
}

// Per-correctness entropy histogram, fixed 0.05-nat bins from zero up to the
// largest observed entropy.
std::string entropy_hist_csv(std::span<const EvalRow> rows) {
    std::string out = "bin_lower,bin_upper,correct_count,incorrect_count\n";
    if (rows.empty()) return out;
    constexpr double kWidth = 0.05;
    double max_entropy = 0.0;
    for (const auto& r : rows) max_entropy = std::max(max_entropy, r.entropy);
    std::size_t n_bins = static_cast<std::size_t>(std::ceil(max_entropy / kWidth));
    if (n_bins == 0) n_bins = 1;
    std::vector<std::size_t> correct(n_bins, 0), incorrect(n_bins, 0);
    for (const auto& r : rows) {
        std::size_t b = static_cast<std::size_t>(r.entropy / kWidth);
        if (b >= n_bins) b = n_bins - 1;
        (r.is_correct ? correct : incorrect)[b] += 1;
    }
    for (std::size_t b = 0; b < n_bins; ++b) {
        out += format_double(static_cast<double>(b) * kWidth);
        out += ',' + format_double(static_cast<double>(b + 1) * kWidth);
        out += ',' + std::to_string(correct[b]);
        out += ',' + std::to_string(incorrect[b]);
        out += '\n';
    }
    return out;
}

} // namespace

void write_report_files(const fs::path& dir, const json& report_doc,
                        std::span<const EvalRow> rows, int n_bins) {
    (void)n_bins;
    write_text(dir / "report.json", report_doc.dump(2) + "\n");

    std::vector<std::string> categories;
    for (auto c : dataset_categories()) categories.emplace_back(c);
    std::sort(categories.begin(), categories.end());
    write_text(dir / "auc_by_category.csv",
               auc_slices_csv(report_doc.at("by_category"), "category", categories));

    const std::vector<std::string> reasoning_order = {
        "no_reasoning", "yes_reasoning", "steps_low", "steps_medium", "steps_high"};
    json reasoning_slices = json::object();
    for (const auto& [k, v] : report_doc.at("by_requires_reasoning").items()) {
        reasoning_slices[k] = v;
    }
    for (const auto& [k, v] : report_doc.at("by_reasoning_steps").items()) {
        reasoning_slices[k] = v;
    }
    write_text(dir / "auc_by_reasoning.csv",
               auc_slices_csv(reasoning_slices, "slice", reasoning_order));

    write_text(dir / "calibration.csv", calibration_csv(report_doc.at("calibration")));
    write_text(dir / "entropy_hist.csv", entropy_hist_csv(rows));
}

} // namespace uqeval
