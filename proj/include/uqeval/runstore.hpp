#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include "uqeval/dataset.hpp"
#include "uqeval/judge.hpp"
#include "uqeval/jsonl.hpp"
#include "uqeval/qa_runner.hpp"

namespace uqeval {

struct RunPaths {
    std::filesystem::path dir;

    std::filesystem::path config() const { return dir / "config.json"; }
    std::filesystem::path manifest() const { return dir / "manifest.json"; }
    std::filesystem::path questions() const { return dir / "questions.jsonl"; }
    std::filesystem::path answers() const { return dir / "answers.jsonl"; }
    std::filesystem::path answers_ckpt() const { return dir / "answers.ckpt"; }
    std::filesystem::path judges() const { return dir / "judges.jsonl"; }
    std::filesystem::path judges_ckpt() const { return dir / "judges.ckpt"; }
    std::filesystem::path rows() const { return dir / "rows.jsonl"; }
    std::filesystem::path report_json() const { return dir / "report.json"; }
    std::filesystem::path csv_auc_by_category() const { return dir / "auc_by_category.csv"; }
    std::filesystem::path csv_auc_by_reasoning() const { return dir / "auc_by_reasoning.csv"; }
    std::filesystem::path csv_calibration() const { return dir / "calibration.csv"; }
    std::filesystem::path csv_entropy_hist() const { return dir / "entropy_hist.csv"; }
};

struct ModelEndpoint {
    std::string endpoint;       // http(s)://... or mock:<script.json>
    std::string model_id;
    int max_new_tokens = 16;
    double temperature = 0.0;
    int top_k_logprobs = 20;
};

struct RunConfig {
    std::string run_id;
    std::string dataset_path;
    ModelEndpoint answer_model{"", "", 16, 0.0, 20};
    ModelEndpoint judge_model{"", "", 1024, 0.0, 0};
    int concurrency = 2;
    double rate_limit = 1000.0;   // requests per second
    EntropyPolicy entropy_policy;
    std::set<JudgeKind> judge_kinds = {JudgeKind::numeric, JudgeKind::nominal,
                                       JudgeKind::reasoning};
    int judge_max_attempts = 3;
    std::uint64_t seed = 0;
    double failure_rate = 0.0;    // deterministic transport-failure injection
    int calibration_bins = 10;

    json to_json() const;
    static RunConfig from_json(const json& j);
    void validate() const;
};

// Append-only JSONL output with a {lines, bytes} checkpoint updated after
// every durable record. On open, a partial trailing line beyond the
// checkpoint is truncated away and writing resumes at the checkpointed line.
// Honors the UQEVAL_KILL_AFTER_RECORDS / UQEVAL_KILL_PHASE crash-injection
// hooks used by the resume tests.
class CheckpointedWriter {
public:
    CheckpointedWriter(std::filesystem::path data_path, std::filesystem::path ckpt_path);
    ~CheckpointedWriter();

    std::size_t resume_lines() const { return lines_; }
    void append(const json& record);
    void finish();

private:
    void write_checkpoint();

    std::filesystem::path data_path_;
    std::filesystem::path ckpt_path_;
    std::size_t lines_ = 0;
    std::size_t bytes_ = 0;
    std::FILE* file_ = nullptr;
    long kill_after_ = -1;
    bool kill_before_ckpt_ = false;
    long appended_ = 0;
};

struct StageResult {
    std::string status;   // "complete", "ok", "threshold-exceeded", "no-op"
    int exit_code = 0;
    json details;
};

struct IngestOptions {
    std::filesystem::path input;
    DatasetFormat format = DatasetFormat::canonical_jsonl;
    bool skip_invalid = false;
};

// Pipeline stages. Each persists its output durably before flipping its
// manifest status to complete; rerunning a complete stage is a no-op unless
// force. Missing prerequisites raise UqError(dependency); stage-config or
// digest mismatches on resume raise UqError(integrity).
StageResult stage_ingest(const RunPaths& paths, RunConfig& config, const IngestOptions& opts,
                         bool force);
StageResult stage_answer(const RunPaths& paths, const RunConfig& config, bool force);
StageResult stage_judge(const RunPaths& paths, const RunConfig& config, bool force);
StageResult stage_score(const RunPaths& paths, const RunConfig& config, bool force);
StageResult stage_report(const RunPaths& paths, const RunConfig& config, bool force);

// Loads the run-dir config snapshot; UqError(dependency) when absent.
RunConfig load_run_config(const RunPaths& paths);
void save_run_config(const RunPaths& paths, const RunConfig& config);

json load_manifest(const RunPaths& paths);
void save_manifest(const RunPaths& paths, const json& manifest);

} // namespace uqeval
