#include <algorithm>
#include <string>
#include <vector>

#include "doctest.h"

#include "aupt/errors.hpp"
#include "aupt/metrics.hpp"
#include "aupt/rng.hpp"

using namespace aupt;

namespace {

ConfusionMatrix from_lists(const std::vector<std::size_t>& y, const std::vector<std::size_t>& yhat,
                           std::size_t classes) {
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < y.size(); ++i) cm.add(y[i], yhat[i]);
    return cm;
}

} // namespace

TEST_CASE("war") {
    ConfusionMatrix perfect(2);
    perfect.add(0, 0);
    perfect.add(1, 1);
    CHECK(war(perfect) == doctest::Approx(100.0));

    ConfusionMatrix cm = from_lists({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
    CHECK(war(cm) == doctest::Approx(75.0));

    ConfusionMatrix empty(2);
    CHECK_THROWS_AS((void)war(empty), DomainError);

    SUBCASE("uniform-random predictions land near 50% for two classes") {
        Rng rng(99);
        ConfusionMatrix mc(2);
        for (int i = 0; i < 1000; ++i) {
            mc.add(rng.below(2), rng.below(2));
        }
        CHECK(war(mc) > 45.0);
        CHECK(war(mc) < 55.0);
    }
}

TEST_CASE("uar") {
    ConfusionMatrix cm = from_lists({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
    CHECK(uar(cm) == doctest::Approx(75.0)); // recalls 0.5 and 1.0

    // degenerate predictor on balanced truth
    ConfusionMatrix deg = from_lists({0, 0, 1, 1}, {0, 0, 0, 0}, 2);
    CHECK(uar(deg) == doctest::Approx(50.0));

    // class without true instances is excluded from the mean
    ConfusionMatrix sparse = from_lists({0, 0}, {0, 1}, 3);
    CHECK(uar(sparse) == doctest::Approx(50.0));
}

TEST_CASE("macro_f1") {
    ConfusionMatrix perfect(2);
    perfect.add(0, 0);
    perfect.add(1, 1);
    CHECK(macro_f1(perfect) == doctest::Approx(100.0));

    ConfusionMatrix cm = from_lists({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
    CHECK(macro_f1(cm) == doctest::Approx(100.0 * (2.0 / 3.0 + 0.8) / 2.0).epsilon(1e-12));
    CHECK(round1(macro_f1(cm)) == doctest::Approx(73.3));

    // predictor that never emits class 1: class-1 F1 is 0 by convention
    ConfusionMatrix deg = from_lists({0, 0, 1, 1}, {0, 0, 0, 0}, 2);
    double f0 = 2.0 * (0.5 * 1.0) / (0.5 + 1.0); // precision 0.5, recall 1.0
    CHECK(macro_f1(deg) == doctest::Approx(100.0 * f0 / 2.0).epsilon(1e-12));
}

TEST_CASE("binary balanced truth makes war equal uar exactly") {
    Rng rng(5);
    for (int it = 0; it < 50; ++it) {
        std::vector<std::size_t> y, yhat;
        std::size_t n = 10 + rng.below(20);
        for (std::size_t i = 0; i < n; ++i) {
            y.push_back(0);
            y.push_back(1);
            yhat.push_back(rng.below(2));
            yhat.push_back(rng.below(2));
        }
        ConfusionMatrix cm = from_lists(y, yhat, 2);
        CHECK(war(cm) == doctest::Approx(uar(cm)).epsilon(1e-12));
    }
}

TEST_CASE("metrics are invariant to video ordering") {
    Rng rng(6);
    std::vector<PredictionRecord> preds;
    for (int i = 0; i < 40; ++i) {
        preds.push_back(PredictionRecord{"s" + std::to_string(i % 4), rng.below(2), rng.below(2)});
    }
    MetricsBundle a = subject_report(preds, 2);
    auto perm = rng.permutation(preds.size());
    std::vector<PredictionRecord> shuffled;
    for (std::size_t i : perm) shuffled.push_back(preds[i]);
    MetricsBundle b = subject_report(shuffled, 2);
    CHECK(a.war == doctest::Approx(b.war).epsilon(1e-15));
    CHECK(a.uar == doctest::Approx(b.uar).epsilon(1e-15));
    CHECK(a.macro_f1 == doctest::Approx(b.macro_f1).epsilon(1e-15));
}

TEST_CASE("subject_report") {
    SUBCASE("single subject: Avg equals the subject row") {
        std::vector<PredictionRecord> preds = {{"a", 0, 0}, {"a", 1, 1}, {"a", 1, 0}};
        MetricsBundle b = subject_report(preds, 2);
        REQUIRE(b.per_subject.size() == 2);
        CHECK(b.per_subject[1].subject == "Avg");
        CHECK(b.per_subject[0].war == doctest::Approx(b.per_subject[1].war));
    }
    SUBCASE("two subjects at 100 and 50 average to 75") {
        std::vector<PredictionRecord> preds = {
            {"a", 0, 0}, {"a", 1, 1}, {"b", 0, 0}, {"b", 1, 0}};
        MetricsBundle b = subject_report(preds, 2);
        CHECK(b.per_subject.back().war == doctest::Approx(75.0));
    }
    SUBCASE("matches a brute-force per-subject recount") {
        Rng rng(7);
        std::vector<PredictionRecord> preds;
        for (int i = 0; i < 60; ++i) {
            preds.push_back(
                PredictionRecord{"s" + std::to_string(rng.below(5)), rng.below(2), rng.below(2)});
        }
        MetricsBundle b = subject_report(preds, 2);
        for (const auto& sm : b.per_subject) {
            if (sm.subject == "Avg") continue;
            std::size_t hits = 0, total = 0;
            for (const auto& p : preds) {
                if (p.subject != sm.subject) continue;
                ++total;
                if (p.label == p.predicted) ++hits;
            }
            CHECK(sm.count == total);
            CHECK(sm.war ==
                  doctest::Approx(100.0 * static_cast<double>(hits) / static_cast<double>(total)));
        }
    }
}

TEST_CASE("csv emission uses the fixed column order") {
    std::vector<PredictionRecord> preds = {{"a", 0, 0}, {"a", 1, 1}};
    std::string csv = metrics_csv(subject_report(preds, 2));
    CHECK(csv.rfind("subject,n,war,uar,macro_f1\n", 0) == 0);
    CHECK(csv.find("a,2,100.0,100.0,100.0") != std::string::npos);
    CHECK(csv.find("Avg,2,100.0,100.0,100.0") != std::string::npos);
}

TEST_CASE("round1 is half-up to one decimal") {
    CHECK(round1(73.333) == doctest::Approx(73.3));
    CHECK(round1(73.35) == doctest::Approx(73.4));
    CHECK(round1(50.0) == doctest::Approx(50.0));
}
