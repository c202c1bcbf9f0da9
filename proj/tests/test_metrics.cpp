#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "uqeval/errors.hpp"
#include "uqeval/metrics.hpp"
#include "uqeval/rng.hpp"

#include "oracles.hpp"

using namespace uqeval;

namespace {

EvalRow row(const std::string& id, const std::string& category, bool correct, double entropy,
            double confidence = 0.5) {
    EvalRow r;
    r.question_id = id;
    r.category = category;
    r.option_count = 4;
    r.is_correct = correct;
    r.entropy = entropy;
    r.confidence = confidence;
    return r;
}

} // namespace

TEST_CASE("roc_auc matches the documented example") {
    const std::vector<double> scores{0.1, 0.4, 0.35, 0.8};
    const std::vector<unsigned char> pos{0, 0, 1, 1};
    const auto result = roc_auc(scores, pos);
    REQUIRE(result.defined);
    CHECK(result.value == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(result.value == doctest::Approx(testing::pairwise_auc(scores, pos)).epsilon(1e-12));
}

TEST_CASE("roc_auc of perfectly separated scores is 1, of constant scores 0.5") {
    const std::vector<double> sep{0.9, 0.8, 0.1, 0.2};
    const std::vector<unsigned char> pos{1, 1, 0, 0};
    CHECK(roc_auc(sep, pos).value == doctest::Approx(1.0));

    const std::vector<double> flat{0.5, 0.5, 0.5, 0.5};
    CHECK(roc_auc(flat, pos).value == doctest::Approx(0.5));
}

TEST_CASE("roc_auc is undefined for single-class input") {
    const std::vector<double> scores{0.1, 0.2};
    CHECK_FALSE(roc_auc(scores, std::vector<unsigned char>{1, 1}).defined);
    CHECK_FALSE(roc_auc(scores, std::vector<unsigned char>{0, 0}).defined);
}

TEST_CASE("roc_auc equals the pairwise oracle on 500 random tied instances") {
    SplitMix64 rng(2024);
    for (int iter = 0; iter < 500; ++iter) {
        const std::size_t n = 2 + rng.next_below(199);
        std::vector<double> scores(n);
        std::vector<unsigned char> pos(n);
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            // coarse grid injects plenty of ties
            scores[i] = static_cast<double>(rng.next_below(12)) / 11.0;
            pos[i] = rng.next_unit() < 0.4 ? 1 : 0;
            (pos[i] ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;

        const auto got = roc_auc(scores, pos);
        REQUIRE(got.defined);
        CHECK(std::abs(got.value - testing::pairwise_auc(scores, pos)) < 1e-12);

        // complement identity
        std::vector<unsigned char> neg(n);
        for (std::size_t i = 0; i < n; ++i) neg[i] = pos[i] ? 0 : 1;
        CHECK(std::abs(got.value + roc_auc(scores, neg).value - 1.0) < 1e-12);
    }
}

TEST_CASE("roc_auc is invariant under strictly increasing transforms") {
    SplitMix64 rng(404);
    for (int iter = 0; iter < 100; ++iter) {
        const std::size_t n = 4 + rng.next_below(60);
        std::vector<double> scores(n);
        std::vector<unsigned char> pos(n);
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = rng.next_range(0.01, 5.0);
            pos[i] = rng.next_unit() < 0.5 ? 1 : 0;
            (pos[i] ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        std::vector<double> transformed(n);
        for (std::size_t i = 0; i < n; ++i) transformed[i] = std::exp(2.0 * scores[i]) + 3.0;
        CHECK(roc_auc(scores, pos).value ==
              doctest::Approx(roc_auc(transformed, pos).value).epsilon(1e-12));
    }
}

TEST_CASE("calibration reproduces the forced 2-bin example") {
    const std::vector<double> conf{0.9, 0.9, 0.1, 0.1};
    const std::vector<unsigned char> correct{1, 1, 0, 0};
    const auto table = calibration_table(conf, correct, 2);
    REQUIRE(table.bins.size() == 2);
    CHECK(table.bins[0].count == 2);
    CHECK(table.bins[0].mean_confidence == doctest::Approx(0.1));
    CHECK(table.bins[0].empirical_accuracy == doctest::Approx(0.0));
    CHECK(table.bins[1].count == 2);
    CHECK(table.bins[1].mean_confidence == doctest::Approx(0.9));
    CHECK(table.bins[1].empirical_accuracy == doctest::Approx(1.0));
    CHECK(table.total_count == 4);
}

TEST_CASE("calibration final bin is closed at 1.0") {
    const std::vector<double> conf(7, 1.0);
    const std::vector<unsigned char> correct(7, 1);
    const auto table = calibration_table(conf, correct, 10);
    for (int b = 0; b < 9; ++b) CHECK(table.bins[static_cast<std::size_t>(b)].count == 0);
    CHECK(table.bins[9].count == 7);
    CHECK(table.bins[9].empirical_accuracy == doctest::Approx(1.0));
}

TEST_CASE("calibration rejects out-of-range confidence") {
    const std::vector<double> conf{1.0001};
    const std::vector<unsigned char> correct{1};
    CHECK_THROWS_AS(calibration_table(conf, correct, 10), UqError);
}

TEST_CASE("calibration bins partition the input") {
    SplitMix64 rng(808);
    for (int iter = 0; iter < 50; ++iter) {
        const std::size_t n = 1 + rng.next_below(300);
        const int bins = 2 + static_cast<int>(rng.next_below(18));
        std::vector<double> conf(n);
        std::vector<unsigned char> correct(n);
        for (std::size_t i = 0; i < n; ++i) {
            conf[i] = rng.next_unit();
            correct[i] = rng.next_unit() < 0.6 ? 1 : 0;
        }
        const auto table = calibration_table(conf, correct, bins);
        std::size_t total = 0;
        for (const auto& b : table.bins) {
            total += b.count;
            if (b.count > 0) {
                CHECK(b.mean_confidence >= b.lower - 1e-12);
                CHECK(b.mean_confidence <= b.upper + 1e-12);
            }
        }
        CHECK(total == n);
        CHECK(table.bins.front().lower == 0.0);
        CHECK(table.bins.back().upper == 1.0);
    }
}

TEST_CASE("join keeps only scoreable answers and flags unknown ids") {
    std::vector<QuestionRecord> questions;
    for (int i = 0; i < 10; ++i) {
        QuestionRecord q;
        q.id = "q" + std::to_string(i);
        q.text = "t";
        q.options = {"a", "b", "c"};
        q.answer_index = 1;
        q.category = "Law";
        q.source = "unit";
        questions.push_back(std::move(q));
    }
    std::vector<AnswerRecord> answers;
    for (int i = 0; i < 10; ++i) {
        AnswerRecord a;
        a.question_id = "q" + std::to_string(i);
        a.model_id = "m";
        a.raw_text = "Answer: 2";
        if (i < 2) {
            a.is_malformed = true;
        } else {
            a.extracted_choice = 1;
            a.is_correct = true;
        }
        a.entropy = 0.1;
        a.confidence = 0.9;
        a.distribution_support = 3;
        answers.push_back(std::move(a));
    }
    const auto rows = join_rows(questions, answers, {});
    CHECK(rows.size() == 8);
    for (const auto& r : rows) {
        CHECK_FALSE(r.complexity_numeric.has_value());
        CHECK_FALSE(r.requires_reasoning.has_value());
    }

    answers[5].question_id = "zzz";
    CHECK_THROWS_AS(join_rows(questions, answers, {}), UqError);
}

TEST_CASE("stratify by category: per-slice AUC matches the pairwise oracle") {
    std::vector<EvalRow> rows;
    SplitMix64 rng(66);
    for (int i = 0; i < 120; ++i) {
        const std::string cat = i % 2 == 0 ? "Biology" : "Law";
        const bool correct = rng.next_unit() < 0.6;
        // entropy loosely higher for incorrect answers
        const double h = correct ? rng.next_range(0.0, 1.2) : rng.next_range(0.4, 2.0);
        rows.push_back(row("q" + std::to_string(i), cat, correct, h, rng.next_unit()));
    }
    const auto report = stratify(rows, StratifyKey::category);
    REQUIRE(report.slices.size() == 2);

    for (const auto& name : {"Biology", "Law"}) {
        std::vector<double> scores;
        std::vector<unsigned char> pos;
        std::size_t n_correct = 0;
        for (const auto& r : rows) {
            if (r.category != name) continue;
            scores.push_back(r.entropy);
            pos.push_back(r.is_correct ? 0 : 1);
            n_correct += r.is_correct ? 1 : 0;
        }
        const auto& slice = report.slices.at(name);
        CHECK(slice.count == scores.size());
        CHECK(slice.accuracy ==
              doctest::Approx(static_cast<double>(n_correct) / scores.size()));
        REQUIRE(slice.auc_entropy.defined);
        CHECK(std::abs(slice.auc_entropy.value - testing::pairwise_auc(scores, pos)) < 1e-12);
    }

    // slice counts over a partition sum to the overall count
    std::size_t total = 0;
    for (const auto& [name, s] : report.slices) total += s.count;
    CHECK(total == report.overall.count);
}

TEST_CASE("stratify: perfect separation inside every category gives AUC 1") {
    std::vector<EvalRow> rows;
    for (int i = 0; i < 40; ++i) {
        const std::string cat(dataset_categories()[static_cast<std::size_t>(i) % 4]);
        const bool correct = i % 3 != 0;
        rows.push_back(row("q" + std::to_string(i), cat, correct, correct ? 0.1 : 2.0));
    }
    const auto report = stratify(rows, StratifyKey::category);
    for (const auto& [name, slice] : report.slices) {
        REQUIRE(slice.auc_entropy.defined);
        CHECK(slice.auc_entropy.value == doctest::Approx(1.0));
    }
    CHECK(report.overall.auc_entropy.value == doctest::Approx(1.0));
}

TEST_CASE("stratify: a single-class slice is marked undefined") {
    std::vector<EvalRow> rows;
    for (int i = 0; i < 10; ++i) {
        rows.push_back(row("q" + std::to_string(i), "History", true, 0.5));
    }
    for (int i = 10; i < 20; ++i) {
        rows.push_back(row("q" + std::to_string(i), "Law", i % 2 == 0, 0.5));
    }
    const auto report = stratify(rows, StratifyKey::category);
    CHECK_FALSE(report.slices.at("History").auc_entropy.defined);
    CHECK(report.slices.at("Law").auc_entropy.defined);
}

TEST_CASE("stratify by reasoning keys skips rows without judge fields") {
    std::vector<EvalRow> rows;
    for (int i = 0; i < 30; ++i) {
        EvalRow r = row("q" + std::to_string(i), "Law", i % 2 == 0, 0.3 + i * 0.01);
        if (i < 20) {
            r.requires_reasoning = (i % 3 == 0);
            r.reasoning_steps = i % 3 == 0 ? ReasoningSteps::high : ReasoningSteps::low;
        }
        rows.push_back(std::move(r));
    }
    const auto by_req = stratify(rows, StratifyKey::requires_reasoning);
    std::size_t in_slices = 0;
    for (const auto& [name, s] : by_req.slices) in_slices += s.count;
    CHECK(in_slices == 20);
    CHECK(by_req.overall.count == 30);
    CHECK(by_req.slices.count("yes_reasoning") == 1);
    CHECK(by_req.slices.count("no_reasoning") == 1);

    const auto by_steps = stratify(rows, StratifyKey::reasoning_steps);
    CHECK(by_steps.slices.count("steps_high") == 1);
    CHECK(by_steps.slices.count("steps_low") == 1);
    CHECK(by_steps.slices.count("steps_medium") == 0);
}

TEST_CASE("stratify computes masj AUCs alongside entropy") {
    std::vector<EvalRow> rows;
    SplitMix64 rng(3);
    for (int i = 0; i < 60; ++i) {
        EvalRow r = row("q" + std::to_string(i), "Physics", rng.next_unit() < 0.5,
                        rng.next_range(0.0, 2.0));
        r.complexity_numeric = rng.next_unit();
        r.complexity_nominal = static_cast<NominalComplexity>(rng.next_below(5));
        rows.push_back(std::move(r));
    }
    const auto report = stratify(rows, StratifyKey::overall);
    CHECK(report.overall.masj_numeric_count == 60);
    CHECK(report.overall.masj_nominal_count == 60);
    CHECK(report.overall.auc_masj_numeric.defined);
    CHECK(report.overall.auc_masj_nominal.defined);

    std::vector<double> nominal_scores;
    std::vector<unsigned char> pos;
    for (const auto& r : rows) {
        nominal_scores.push_back(nominal_ordinal_score(*r.complexity_nominal));
        pos.push_back(r.is_correct ? 0 : 1);
    }
    CHECK(std::abs(report.overall.auc_masj_nominal.value -
                   testing::pairwise_auc(nominal_scores, pos)) < 1e-12);
}

TEST_CASE("stratify rejects an empty row set") {
    CHECK_THROWS_AS(stratify({}, StratifyKey::overall), UqError);
}

TEST_CASE("format_double is shortest round-trip") {
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(2.302585092994046) == "2.302585092994046");
}
