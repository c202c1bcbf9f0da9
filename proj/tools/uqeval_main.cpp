// uqeval: batch pipeline for entropy / model-as-judge uncertainty evaluation
// on multiple-choice QA datasets.
//
// Stages communicate only through files in the run directory:
//   ingest -> questions.jsonl
//   answer -> answers.jsonl (+ checkpoint, resumable)
//   judge  -> judges.jsonl  (+ checkpoint, resumable)
//   score  -> rows.jsonl
//   report -> report.json + auc_by_category.csv + auc_by_reasoning.csv +
//             calibration.csv + entropy_hist.csv
//
// Exit codes: 0 ok, 2 validation, 3 dependency, 4 transport exhaustion,
// 5 malformed-rate threshold exceeded.

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "uqeval/errors.hpp"
#include "uqeval/kernels.hpp"
#include "uqeval/runstore.hpp"

namespace {

using namespace uqeval;

std::set<JudgeKind> parse_kinds(const std::string& csv) {
    std::set<JudgeKind> kinds;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
        const std::size_t comma = csv.find(',', pos);
        const std::string item =
            csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!item.empty()) kinds.insert(judge_kind_from_string(item));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (kinds.empty()) {
        throw UqError(ErrorKind::validation, "no judge kinds given");
    }
    return kinds;
}

void print_stage(const char* stage, const StageResult& result) {
    std::string extra;
    for (const char* key : {"questions", "skipped", "total", "malformed", "failed", "rows",
                            "kinds_failed", "leniency_uses"}) {
        if (result.details.contains(key)) {
            extra += std::string(" ") + key + "=" + result.details.at(key).dump();
        }
    }
    if (result.details.contains("run_status")) {
        extra += " run_status=" + result.details.at("run_status").get<std::string>();
    }
    std::printf("[%s] status=%s%s\n", stage, result.status.c_str(), extra.c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"uncertainty evaluation pipeline for multiple-choice QA"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "validate a dataset into a run directory");
    std::string in_input, in_format = "canonical-jsonl", in_out, in_run_id, in_config;
    bool in_skip_invalid = false, in_force = false;
    std::uint64_t in_seed = 0;
    ingest->add_option("--input", in_input, "dataset file")->required();
    ingest->add_option("--format", in_format, "canonical-jsonl | mmlu-pro-table");
    ingest->add_option("--out", in_out, "run directory")->required();
    ingest->add_option("--run-id", in_run_id, "run id (default: directory name)");
    ingest->add_option("--config", in_config, "seed config file (JSON)");
    ingest->add_option("--seed", in_seed, "run seed");
    ingest->add_flag("--skip-invalid", in_skip_invalid, "drop invalid records instead of aborting");
    ingest->add_flag("--force", in_force, "re-run even if the stage is complete");

    auto add_common = [](CLI::App* cmd, std::string& run_dir, bool& force) {
        cmd->add_option("--run", run_dir, "run directory")->required();
        cmd->add_flag("--force", force, "re-run even if the stage is complete");
    };

    // answer
    auto* answer = app.add_subcommand("answer", "generate model answers with token entropy");
    std::string an_run, an_endpoint, an_model, an_agg, an_topk_policy;
    int an_concurrency = 0, an_max_tokens = 0, an_top_logprobs = -1;
    double an_rate = 0.0, an_temperature = -1.0, an_failure_rate = -1.0;
    std::uint64_t an_seed = 0;
    bool an_force = false;
    add_common(answer, an_run, an_force);
    answer->add_option("--endpoint", an_endpoint, "http(s)://... or mock:<script.json>");
    answer->add_option("--model", an_model, "model id");
    answer->add_option("--concurrency", an_concurrency, "max in-flight requests");
    answer->add_option("--rate-limit", an_rate, "requests per second");
    answer->add_option("--max-new-tokens", an_max_tokens, "decode budget");
    answer->add_option("--temperature", an_temperature, "sampling temperature");
    answer->add_option("--top-logprobs", an_top_logprobs, "top-k logprobs to request");
    answer->add_option("--entropy-agg", an_agg, "first | mean | max");
    answer->add_option("--topk-policy", an_topk_policy, "tail-bucket | renormalize");
    auto* an_seed_opt = answer->add_option("--seed", an_seed, "run seed");
    answer->add_option("--failure-rate", an_failure_rate,
                       "deterministic transport failure injection (testing)");

    // judge
    auto* judge = app.add_subcommand("judge", "collect model-as-judge complexity labels");
    std::string ju_run, ju_endpoint, ju_model, ju_kinds;
    int ju_attempts = 0, ju_max_tokens = 0, ju_concurrency = 0;
    double ju_temperature = -1.0, ju_failure_rate = -1.0;
    std::uint64_t ju_seed = 0;
    bool ju_force = false;
    add_common(judge, ju_run, ju_force);
    judge->add_option("--kinds", ju_kinds, "comma list of numeric,nominal,reasoning");
    judge->add_option("--endpoint", ju_endpoint, "http(s)://... or mock:<script.json>");
    judge->add_option("--model", ju_model, "judge model id");
    judge->add_option("--max-attempts", ju_attempts, "regeneration attempts per kind");
    judge->add_option("--max-new-tokens", ju_max_tokens, "decode budget");
    judge->add_option("--temperature", ju_temperature, "sampling temperature");
    judge->add_option("--concurrency", ju_concurrency, "max in-flight requests");
    auto* ju_seed_opt = judge->add_option("--seed", ju_seed, "run seed");
    judge->add_option("--failure-rate", ju_failure_rate,
                      "deterministic transport failure injection (testing)");

    // score
    auto* score = app.add_subcommand("score", "join answers and judges into eval rows");
    std::string sc_run;
    bool sc_force = false;
    add_common(score, sc_run, sc_force);

    // report
    auto* report = app.add_subcommand("report", "emit report.json and CSV tables");
    std::string re_run;
    int re_bins = 0;
    bool re_force = false;
    add_common(report, re_run, re_force);
    report->add_option("--bins", re_bins, "calibration bins");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            RunConfig config;
            if (!in_config.empty()) {
                json j = json::parse(read_file(in_config), nullptr, false);
                if (j.is_discarded()) {
                    throw UqError(ErrorKind::validation, in_config + ": invalid JSON");
                }
                config = RunConfig::from_json(j);
            }
            RunPaths paths{in_out};
            if (!in_run_id.empty()) {
                config.run_id = in_run_id;
            } else if (config.run_id.empty() || config.run_id == "run") {
                const std::string base = paths.dir.filename().string();
                if (!base.empty()) config.run_id = base;
            }
            if (ingest->count("--seed")) config.seed = in_seed;
            IngestOptions opts;
            opts.input = in_input;
            opts.format = dataset_format_from_string(in_format);
            opts.skip_invalid = in_skip_invalid;
            const StageResult result = stage_ingest(paths, config, opts, in_force);
            print_stage("ingest", result);
            return result.exit_code;
        }

        if (*answer) {
            RunPaths paths{an_run};
            RunConfig config = load_run_config(paths);
            if (!an_endpoint.empty()) config.answer_model.endpoint = an_endpoint;
            if (!an_model.empty()) config.answer_model.model_id = an_model;
            if (answer->count("--concurrency")) config.concurrency = an_concurrency;
            if (answer->count("--rate-limit")) config.rate_limit = an_rate;
            if (answer->count("--max-new-tokens")) config.answer_model.max_new_tokens = an_max_tokens;
            if (answer->count("--temperature")) config.answer_model.temperature = an_temperature;
            if (answer->count("--top-logprobs")) config.answer_model.top_k_logprobs = an_top_logprobs;
            if (!an_agg.empty()) {
                config.entropy_policy.aggregation = entropy_aggregation_from_string(an_agg);
            }
            if (!an_topk_policy.empty()) {
                config.entropy_policy.topk = topk_policy_from_string(an_topk_policy);
            }
            if (an_seed_opt->count()) config.seed = an_seed;
            if (answer->count("--failure-rate")) config.failure_rate = an_failure_rate;
            config.validate();
            if (config.answer_model.endpoint.empty()) {
                throw UqError(ErrorKind::validation, "no answer endpoint configured");
            }
            save_run_config(paths, config);
            const StageResult result = stage_answer(paths, config, an_force);
            print_stage("answer", result);
            return result.exit_code;
        }

        if (*judge) {
            RunPaths paths{ju_run};
            RunConfig config = load_run_config(paths);
            if (!ju_kinds.empty()) config.judge_kinds = parse_kinds(ju_kinds);
            if (!ju_endpoint.empty()) config.judge_model.endpoint = ju_endpoint;
            if (!ju_model.empty()) config.judge_model.model_id = ju_model;
            if (judge->count("--max-attempts")) config.judge_max_attempts = ju_attempts;
            if (judge->count("--max-new-tokens")) config.judge_model.max_new_tokens = ju_max_tokens;
            if (judge->count("--temperature")) config.judge_model.temperature = ju_temperature;
            if (judge->count("--concurrency")) config.concurrency = ju_concurrency;
            if (ju_seed_opt->count()) config.seed = ju_seed;
            if (judge->count("--failure-rate")) config.failure_rate = ju_failure_rate;
            config.validate();
            if (config.judge_model.endpoint.empty()) {
                throw UqError(ErrorKind::validation, "no judge endpoint configured");
            }
            save_run_config(paths, config);
            const StageResult result = stage_judge(paths, config, ju_force);
            print_stage("judge", result);
            return result.exit_code;
        }

        if (*score) {
            RunPaths paths{sc_run};
            RunConfig config = load_run_config(paths);
            const StageResult result = stage_score(paths, config, sc_force);
            print_stage("score", result);
            return result.exit_code;
        }

        if (*report) {
            RunPaths paths{re_run};
            RunConfig config = load_run_config(paths);
            if (report->count("--bins")) config.calibration_bins = re_bins;
            config.validate();
            save_run_config(paths, config);
            const StageResult result = stage_report(paths, config, re_force);
            print_stage("report", result);
            return result.exit_code;
        }
    } catch (const UqError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
