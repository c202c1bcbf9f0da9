#include "uqeval/runstore.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>

#include "uqeval/errors.hpp"
#include "uqeval/http_backend.hpp"
#include "uqeval/metrics.hpp"
#include "uqeval/report_io.hpp"

namespace uqeval {

namespace fs = std::filesystem;

// ----- run config -----

namespace {

json model_to_json(const ModelEndpoint& m) {
    json j;
    j["endpoint"] = m.endpoint;
    j["model_id"] = m.model_id;
    j["max_new_tokens"] = m.max_new_tokens;
    j["temperature"] = m.temperature;
    j["top_k_logprobs"] = m.top_k_logprobs;
    return j;
}

ModelEndpoint model_from_json(const json& j, const ModelEndpoint& defaults) {
    ModelEndpoint m = defaults;
    m.endpoint = j.value("endpoint", m.endpoint);
    m.model_id = j.value("model_id", m.model_id);
    m.max_new_tokens = j.value("max_new_tokens", m.max_new_tokens);
    m.temperature = j.value("temperature", m.temperature);
    m.top_k_logprobs = j.value("top_k_logprobs", m.top_k_logprobs);
    return m;
}

bool filesystem_safe(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
        if (!ok) return false;
    }
    return s != "." && s != "..";
}

} // namespace

json RunConfig::to_json() const {
    json j;
    j["run_id"] = run_id;
    j["dataset_path"] = dataset_path;
    j["answer_model"] = model_to_json(answer_model);
    j["judge_model"] = model_to_json(judge_model);
    j["concurrency"] = concurrency;
    j["rate_limit"] = rate_limit;
    j["entropy_policy"] =
        json{{"aggregation", to_string(entropy_policy.aggregation)},
             {"topk_policy", to_string(entropy_policy.topk)}};
    std::vector<std::string> kinds;
    for (JudgeKind k : judge_kinds) kinds.push_back(to_string(k));
    j["judge_kinds"] = kinds;
    j["judge_max_attempts"] = judge_max_attempts;
    j["seed"] = seed;
    j["failure_rate"] = failure_rate;
    j["calibration_bins"] = calibration_bins;
    return j;
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    try {
        c.run_id = j.value("run_id", std::string{"run"});
        c.dataset_path = j.value("dataset_path", std::string{});
        if (j.contains("answer_model")) {
            c.answer_model = model_from_json(j.at("answer_model"), c.answer_model);
        }
        if (j.contains("judge_model")) {
            c.judge_model = model_from_json(j.at("judge_model"), c.judge_model);
        }
        c.concurrency = j.value("concurrency", c.concurrency);
        c.rate_limit = j.value("rate_limit", c.rate_limit);
        if (j.contains("entropy_policy")) {
            const json& e = j.at("entropy_policy");
            c.entropy_policy.aggregation =
                entropy_aggregation_from_string(e.value("aggregation", "first"));
            c.entropy_policy.topk = topk_policy_from_string(e.value("topk_policy", "tail-bucket"));
        }
        if (j.contains("judge_kinds")) {
            c.judge_kinds.clear();
            for (const auto& k : j.at("judge_kinds")) {
                c.judge_kinds.insert(judge_kind_from_string(k.get<std::string>()));
            }
        }
        c.judge_max_attempts = j.value("judge_max_attempts", c.judge_max_attempts);
        c.seed = j.value("seed", c.seed);
        c.failure_rate = j.value("failure_rate", c.failure_rate);
        c.calibration_bins = j.value("calibration_bins", c.calibration_bins);
    } catch (const json::exception& e) {
        throw UqError(ErrorKind::validation, std::string("malformed run config: ") + e.what());
    }
    return c;
}

void RunConfig::validate() const {
    if (!filesystem_safe(run_id)) {
        throw UqError(ErrorKind::validation, "run_id '" + run_id + "' is not filesystem-safe");
    }
    if (concurrency < 1) throw UqError(ErrorKind::validation, "concurrency must be >= 1");
    if (!(rate_limit > 0.0)) throw UqError(ErrorKind::validation, "rate_limit must be > 0");
    if (judge_max_attempts < 1) {
        throw UqError(ErrorKind::validation, "judge_max_attempts must be >= 1");
    }
    if (failure_rate < 0.0 || failure_rate >= 1.0) {
        throw UqError(ErrorKind::validation, "failure_rate must be in [0, 1)");
    }
    if (calibration_bins < 2) {
        throw UqError(ErrorKind::validation, "calibration_bins must be >= 2");
    }
}

RunConfig load_run_config(const RunPaths& paths) {
    if (!fs::exists(paths.config())) {
        throw UqError(ErrorKind::dependency,
                      paths.config().string() + " missing; run `uqeval ingest` first");
    }
    json j = json::parse(read_file(paths.config()), nullptr, false);
    if (j.is_discarded()) {
        throw UqError(ErrorKind::validation, paths.config().string() + ": invalid JSON");
    }
    return RunConfig::from_json(j);
}

void save_run_config(const RunPaths& paths, const RunConfig& config) {
    atomic_write_file(paths.config(), config.to_json().dump(2) + "\n");
}

json load_manifest(const RunPaths& paths) {
    if (!fs::exists(paths.manifest())) return json::object();
    json j = json::parse(read_file(paths.manifest()), nullptr, false);
    if (j.is_discarded()) {
        throw UqError(ErrorKind::integrity, paths.manifest().string() + ": invalid JSON");
    }
    return j;
}

void save_manifest(const RunPaths& paths, const json& manifest) {
    atomic_write_file(paths.manifest(), manifest.dump(2) + "\n");
}

// ----- checkpointed writer -----

CheckpointedWriter::CheckpointedWriter(fs::path data_path, fs::path ckpt_path)
    : data_path_(std::move(data_path)), ckpt_path_(std::move(ckpt_path)) {
    if (const char* env = std::getenv("UQEVAL_KILL_AFTER_RECORDS")) {
        kill_after_ = std::atol(env);
    }
    if (const char* env = std::getenv("UQEVAL_KILL_PHASE")) {
        kill_before_ckpt_ = std::strcmp(env, "line") == 0;
    }

    bool have_ckpt = false;
    if (fs::exists(ckpt_path_) && fs::exists(data_path_)) {
        json j = json::parse(read_file(ckpt_path_), nullptr, false);
        if (!j.is_discarded() && j.contains("lines") && j.contains("bytes")) {
            lines_ = j.at("lines").get<std::size_t>();
            bytes_ = j.at("bytes").get<std::size_t>();
            have_ckpt = true;
        }
    }
    if (have_ckpt) {
        const auto size = fs::file_size(data_path_);
        if (size < bytes_) {
            throw UqError(ErrorKind::integrity,
                          data_path_.string() + " is shorter than its checkpoint");
        }
        if (size > bytes_) {
            fs::resize_file(data_path_, bytes_);   // drop a partially written tail
        }
    } else {
        lines_ = 0;
        bytes_ = 0;
        std::FILE* trunc = std::fopen(data_path_.string().c_str(), "wb");
        if (!trunc) throw UqError(ErrorKind::io, "cannot create " + data_path_.string());
        std::fclose(trunc);
        write_checkpoint();
    }

    file_ = std::fopen(data_path_.string().c_str(), "ab");
    if (!file_) throw UqError(ErrorKind::io, "cannot append to " + data_path_.string());
}

CheckpointedWriter::~CheckpointedWriter() {
    if (file_) std::fclose(file_);
}

void CheckpointedWriter::write_checkpoint() {
    json j;
    j["lines"] = lines_;
    j["bytes"] = bytes_;
    atomic_write_file(ckpt_path_, j.dump() + "\n");
}

void CheckpointedWriter::append(const json& record) {
    const std::string line = jsonl_line(record);
    if (std::fwrite(line.data(), 1, line.size(), file_) != line.size()) {
        throw UqError(ErrorKind::io, "short write to " + data_path_.string());
    }
    std::fflush(file_);
    ++lines_;
    bytes_ += line.size();
    ++appended_;
    if (kill_after_ >= 0 && appended_ >= kill_after_ && kill_before_ckpt_) {
        std::_Exit(86);
    }
    write_checkpoint();
    if (kill_after_ >= 0 && appended_ >= kill_after_ && !kill_before_ckpt_) {
        std::_Exit(86);
    }
}

void CheckpointedWriter::finish() {
    if (file_) {
        std::fflush(file_);
        std::fclose(file_);
        file_ = nullptr;
    }
}

// ----- stage framework -----

namespace {

std::string stage_status(const json& manifest, const std::string& stage) {
    if (manifest.contains("stages") && manifest.at("stages").contains(stage)) {
        return manifest.at("stages").at(stage).value("status", "");
    }
    return "";
}

void require_complete(const json& manifest, const std::string& stage, const fs::path& artifact) {
    if (stage_status(manifest, stage) != "complete" || !fs::exists(artifact)) {
        throw UqError(ErrorKind::dependency,
                      artifact.filename().string() + " missing (stage `" + stage +
                          "` has not completed)");
    }
}

void verify_digest(const json& manifest, const std::string& stage, const fs::path& artifact) {
    const std::string name = artifact.filename().string();
    const json& st = manifest.at("stages").at(stage);
    if (!st.contains("digests") || !st.at("digests").contains(name)) return;
    const std::string recorded = st.at("digests").at(name).get<std::string>();
    const std::string actual = sha256_file(artifact);
    if (recorded != actual) {
        throw UqError(ErrorKind::integrity,
                      name + " does not match the digest recorded by stage `" + stage + "`");
    }
}

long long now_wall_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - start)
        .count();
}

std::shared_ptr<Backend> build_backend(const ModelEndpoint& model, const RunConfig& config) {
    std::shared_ptr<Backend> backend = make_backend_for_endpoint(model.endpoint);
    if (config.failure_rate > 0.0) {
        backend = std::make_shared<FailureInjectingBackend>(backend, config.failure_rate,
                                                            config.seed);
    }
    return backend;
}

Gateway make_gateway(const ModelEndpoint& model, const RunConfig& config) {
    GatewayOptions opts;
    opts.max_in_flight = config.concurrency;
    opts.requests_per_second = config.rate_limit;
    opts.retry.jitter_seed = config.seed;
    if (model.endpoint.rfind("mock:", 0) == 0) {
        // backoff exists to be polite to remote services; in-process mocks
        // only need the retry counting
        opts.retry.initial_backoff_s = 0.001;
        opts.retry.max_backoff_s = 0.002;
    }
    return Gateway(build_backend(model, config), opts);
}

json answer_stage_config(const RunConfig& c, const std::string& questions_digest) {
    json j;
    j["model"] = model_to_json(c.answer_model);
    j["entropy_policy"] = json{{"aggregation", to_string(c.entropy_policy.aggregation)},
                               {"topk_policy", to_string(c.entropy_policy.topk)}};
    j["seed"] = c.seed;
    j["failure_rate"] = c.failure_rate;
    j["questions_digest"] = questions_digest;
    return j;
}

json judge_stage_config(const RunConfig& c, const std::string& questions_digest) {
    json j;
    j["model"] = model_to_json(c.judge_model);
    std::vector<std::string> kinds;
    for (JudgeKind k : c.judge_kinds) kinds.push_back(to_string(k));
    j["kinds"] = kinds;
    j["max_attempts"] = c.judge_max_attempts;
    j["seed"] = c.seed;
    j["failure_rate"] = c.failure_rate;
    j["questions_digest"] = questions_digest;
    return j;
}

// Marks a stage running, guarding against resumption under a changed config.
void begin_stage(const RunPaths& paths, json& manifest, const std::string& stage,
                 const json& stage_config) {
    if (!manifest.contains("stages")) manifest["stages"] = json::object();
    json& stages = manifest["stages"];
    if (stages.contains(stage) && stages.at(stage).value("status", "") == "running") {
        const json prev = stages.at(stage).value("stage_config", json::object());
        if (prev != stage_config) {
            throw UqError(ErrorKind::integrity,
                          "stage `" + stage + "` was interrupted under a different config; "
                          "rerun with --force to restart it");
        }
    }
    stages[stage] = json{{"status", "running"}, {"stage_config", stage_config}};
    save_manifest(paths, manifest);
}

void complete_stage(const RunPaths& paths, json& manifest, const std::string& stage,
                    json details, const std::vector<fs::path>& artifacts) {
    json digests = json::object();
    for (const auto& a : artifacts) {
        digests[a.filename().string()] = sha256_file(a);
    }
    details["status"] = "complete";
    details["digests"] = std::move(digests);
    manifest["stages"][stage] = std::move(details);
    save_manifest(paths, manifest);
}

std::vector<QuestionRecord> load_questions(const RunPaths& paths) {
    std::vector<QuestionRecord> questions;
    for (const auto& j : read_jsonl(paths.questions())) {
        questions.push_back(question_from_json(j));
    }
    return questions;
}

} // namespace

// ----- stages -----

StageResult stage_ingest(const RunPaths& paths, RunConfig& config, const IngestOptions& opts,
                         bool force) {
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(paths.dir);
    json manifest = load_manifest(paths);
    if (stage_status(manifest, "ingest") == "complete" && !force) {
        return {"no-op", 0, manifest.at("stages").at("ingest")};
    }

    LoadOptions load_opts;
    load_opts.skip_invalid = opts.skip_invalid;
    LoadResult loaded = load_dataset(opts.input, opts.format, load_opts);

    write_canonical_jsonl(paths.questions(), loaded.records);

    config.dataset_path = opts.input.string();
    config.validate();
    save_run_config(paths, config);

    manifest["run_id"] = config.run_id;
    manifest["config"] = config.to_json();
    json details;
    details["questions"] = loaded.records.size();
    details["skipped"] = loaded.skipped;
    details["wall_ms"] = now_wall_ms(t0);
    complete_stage(paths, manifest, "ingest", std::move(details), {paths.questions()});

    json out = manifest.at("stages").at("ingest");
    out["skip_messages"] = loaded.skip_messages;
    return {"complete", 0, out};
}

StageResult stage_answer(const RunPaths& paths, const RunConfig& config, bool force) {
    const auto t0 = std::chrono::steady_clock::now();
    json manifest = load_manifest(paths);
    require_complete(manifest, "ingest", paths.questions());
    verify_digest(manifest, "ingest", paths.questions());

    if (stage_status(manifest, "answer") == "complete") {
        if (!force) return {"no-op", 0, manifest.at("stages").at("answer")};
        fs::remove(paths.answers());
        fs::remove(paths.answers_ckpt());
    }

    const std::string questions_digest = sha256_file(paths.questions());
    begin_stage(paths, manifest, "answer", answer_stage_config(config, questions_digest));

    const std::vector<QuestionRecord> questions = load_questions(paths);

    CheckpointedWriter writer(paths.answers(), paths.answers_ckpt());
    const std::size_t start = writer.resume_lines();
    if (start > questions.size()) {
        throw UqError(ErrorKind::integrity, "answers.jsonl has more records than questions");
    }

    Gateway gateway = make_gateway(config.answer_model, config);
    RunAnswersConfig run_cfg;
    run_cfg.model_id = config.answer_model.model_id;
    run_cfg.concurrency = config.concurrency;
    run_cfg.entropy = config.entropy_policy;
    run_cfg.max_new_tokens = config.answer_model.max_new_tokens;
    run_cfg.temperature = config.answer_model.temperature;
    run_cfg.top_k_logprobs = config.answer_model.top_k_logprobs;

    run_answers(questions, gateway, run_cfg, start,
                [&](const AnswerRecord& rec) { writer.append(answer_to_json(rec)); });
    writer.finish();

    // totals over the whole artifact, not just this invocation's slice
    std::size_t total = 0, malformed = 0, failed = 0;
    for (const auto& j : read_jsonl(paths.answers())) {
        const AnswerRecord rec = answer_from_json(j);
        ++total;
        if (rec.failed) {
            ++failed;
        } else if (rec.is_malformed) {
            ++malformed;
        }
    }
    const std::size_t answered = total - failed;
    const std::string run_status = malformed_status(malformed, answered);
    const double rate =
        answered == 0 ? 0.0 : static_cast<double>(malformed) / static_cast<double>(answered);

    json details;
    details["total"] = total;
    details["malformed"] = malformed;
    details["failed"] = failed;
    details["malformed_rate"] = rate;
    details["run_status"] = run_status;
    details["wall_ms"] = now_wall_ms(t0);
    complete_stage(paths, manifest, "answer", std::move(details), {paths.answers()});

    int exit_code = 0;
    if (failed > 0) {
        exit_code = 4;
    } else if (run_status == "threshold-exceeded") {
        exit_code = 5;
    }
    return {run_status, exit_code, manifest.at("stages").at("answer")};
}

StageResult stage_judge(const RunPaths& paths, const RunConfig& config, bool force) {
    const auto t0 = std::chrono::steady_clock::now();
    json manifest = load_manifest(paths);
    require_complete(manifest, "ingest", paths.questions());
    verify_digest(manifest, "ingest", paths.questions());

    if (stage_status(manifest, "judge") == "complete") {
        if (!force) return {"no-op", 0, manifest.at("stages").at("judge")};
        fs::remove(paths.judges());
        fs::remove(paths.judges_ckpt());
    }

    const std::string questions_digest = sha256_file(paths.questions());
    begin_stage(paths, manifest, "judge", judge_stage_config(config, questions_digest));

    const std::vector<QuestionRecord> questions = load_questions(paths);

    CheckpointedWriter writer(paths.judges(), paths.judges_ckpt());
    const std::size_t start = writer.resume_lines();
    if (start > questions.size()) {
        throw UqError(ErrorKind::integrity, "judges.jsonl has more records than questions");
    }

    Gateway gateway = make_gateway(config.judge_model, config);
    JudgeRunConfig run_cfg;
    run_cfg.model_id = config.judge_model.model_id;
    run_cfg.kinds = config.judge_kinds;
    run_cfg.policy.max_attempts = config.judge_max_attempts;
    run_cfg.max_new_tokens = config.judge_model.max_new_tokens;
    run_cfg.temperature = config.judge_model.temperature;
    run_cfg.concurrency = config.concurrency;

    run_judges(questions, gateway, run_cfg, start,
               [&](const JudgeRecord& rec) { writer.append(judge_to_json(rec)); });
    writer.finish();

    std::size_t total = 0, kinds_failed = 0, leniency_uses = 0;
    for (const auto& j : read_jsonl(paths.judges())) {
        const JudgeRecord rec = judge_from_json(j);
        ++total;
        kinds_failed += rec.failed_kinds.size();
        if (rec.nominal_leniency_used) ++leniency_uses;
    }

    json details;
    details["total"] = total;
    details["kinds_failed"] = kinds_failed;
    details["leniency_uses"] = leniency_uses;
    details["wall_ms"] = now_wall_ms(t0);
    complete_stage(paths, manifest, "judge", std::move(details), {paths.judges()});

    return {"complete", kinds_failed > 0 ? 4 : 0, manifest.at("stages").at("judge")};
}

StageResult stage_score(const RunPaths& paths, const RunConfig& config, bool force) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)config;
    json manifest = load_manifest(paths);
    require_complete(manifest, "ingest", paths.questions());
    require_complete(manifest, "answer", paths.answers());
    verify_digest(manifest, "ingest", paths.questions());
    verify_digest(manifest, "answer", paths.answers());

    if (stage_status(manifest, "score") == "complete" && !force) {
        return {"no-op", 0, manifest.at("stages").at("score")};
    }

    const std::vector<QuestionRecord> questions = load_questions(paths);
    std::vector<AnswerRecord> answers;
    for (const auto& j : read_jsonl(paths.answers())) {
        answers.push_back(answer_from_json(j));
    }
    std::vector<JudgeRecord> judges;
    if (stage_status(manifest, "judge") == "complete" && fs::exists(paths.judges())) {
        verify_digest(manifest, "judge", paths.judges());
        for (const auto& j : read_jsonl(paths.judges())) {
            judges.push_back(judge_from_json(j));
        }
    }

    const std::vector<EvalRow> rows = join_rows(questions, answers, judges);
    std::string content;
    for (const auto& r : rows) content += jsonl_line(eval_row_to_json(r));
    atomic_write_file(paths.rows(), content);

    json details;
    details["rows"] = rows.size();
    details["judged"] = judges.size();
    details["wall_ms"] = now_wall_ms(t0);
    complete_stage(paths, manifest, "score", std::move(details), {paths.rows()});
    return {"complete", 0, manifest.at("stages").at("score")};
}

StageResult stage_report(const RunPaths& paths, const RunConfig& config, bool force) {
    const auto t0 = std::chrono::steady_clock::now();
    json manifest = load_manifest(paths);
    require_complete(manifest, "score", paths.rows());
    verify_digest(manifest, "score", paths.rows());

    if (stage_status(manifest, "report") == "complete" && !force) {
        // deterministic emission: rerunning would produce identical bytes
        return {"no-op", 0, manifest.at("stages").at("report")};
    }

    std::vector<EvalRow> rows;
    for (const auto& j : read_jsonl(paths.rows())) {
        rows.push_back(eval_row_from_json(j));
    }

    const json& stages = manifest.at("stages");
    json counts;
    counts["questions"] = stages.at("ingest").value("questions", std::size_t{0});
    counts["answers"] = stages.at("answer").value("total", std::size_t{0});
    counts["malformed_discarded"] = stages.at("answer").value("malformed", std::size_t{0});
    counts["failed"] = stages.at("answer").value("failed", std::size_t{0});
    counts["judged_questions"] =
        stages.contains("judge") ? stages.at("judge").value("total", std::size_t{0}) : 0;
    counts["rows"] = rows.size();

    const json doc = report_document(manifest.value("run_id", config.run_id),
                                     config.answer_model.model_id, rows, counts,
                                     config.calibration_bins);
    write_report_files(paths.dir, doc, rows, config.calibration_bins);

    json details;
    details["wall_ms"] = now_wall_ms(t0);
    complete_stage(paths, manifest, "report", std::move(details),
                   {paths.report_json(), paths.csv_auc_by_category(), paths.csv_auc_by_reasoning(),
                    paths.csv_calibration(), paths.csv_entropy_hist()});
    return {"complete", 0, manifest.at("stages").at("report")};
}

} // namespace uqeval
