#include <catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include <json.hpp>

#include "admitlab/error.hpp"
#include "admitlab/evaluation.hpp"
#include "oracles.hpp"

using namespace admitlab;
using Catch::Approx;

TEST_CASE("80/20 split of 10000 samples", "[evaluation][split]") {
    const LabeledData d = oracle::random_labeled(2500, 2, 1);
    const SplitIndices s = split(d, 0.8, 42);
    CHECK(s.train.size() == 8000);
    CHECK(s.test.size() == 2000);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.test.begin(), s.test.end());
    CHECK(all.size() == 10000);

    // stratified: each structure contributes 500 test rows
    std::map<StructureId, int> per;
    for (std::size_t i : s.test) ++per[d.structures[i]];
    for (const auto& [k, v] : per) CHECK(v == 500);

    const SplitIndices again = split(d, 0.8, 42);
    CHECK(again.train == s.train);
    CHECK(again.test == s.test);
    CHECK(split(d, 0.8, 43).test != s.test);
}

TEST_CASE("split is keyed by sample id, not by row position", "[evaluation][split]") {
    const LabeledData d = oracle::random_labeled(30, 2, 5);
    std::vector<std::size_t> rev(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) rev[i] = d.size() - 1 - i;
    const LabeledData r = d.subset(rev);
    std::set<std::uint64_t> a, b;
    for (std::size_t i : split(d, 0.8, 9).test) a.insert(d.ids[i]);
    for (std::size_t i : split(r, 0.8, 9).test) b.insert(r.ids[i]);
    CHECK(a == b);
}

TEST_CASE("split argument checks", "[evaluation][split]") {
    const LabeledData d = oracle::random_labeled(10, 2, 5);
    CHECK_THROWS_AS(split(d, 1.0, 1), Error);
    CHECK_THROWS_AS(split(d, 0.0, 1), Error);
    const LabeledData tiny = oracle::random_labeled(1, 2, 5);
    CHECK_THROWS_AS(split(tiny, 0.8, 1), Error);
}

TEST_CASE("confusion matrix is consistent with accuracy", "[evaluation]") {
    const LabeledData d = oracle::random_labeled(50, 4, 11, 0.8);
    const SplitIndices s = split(d, 0.8, 1);
    for (LearnerId l : kAllLearners) {
        Hyperparams hp;
        hp.rf_n_trees = 10;
        hp.gbt_rounds = 10;
        const TrainedModel m = train(l, hp, d.subset(s.train));
        const EvaluationReport r = evaluate(m, d.subset(s.test));
        const std::size_t tp = r.confusion[1][1], tn = r.confusion[0][0];
        const std::size_t total = tp + tn + r.confusion[0][1] + r.confusion[1][0];
        CHECK(total == r.n);
        CHECK(r.accuracy == Approx(static_cast<double>(tp + tn) / static_cast<double>(total)));
        std::size_t per_total = 0;
        for (const auto& [name, ps] : r.per_structure) per_total += ps.total;
        CHECK(per_total == r.n);
    }
}

TEST_CASE("cross-validation on separable data", "[evaluation][cv]") {
    const LabeledData d = oracle::random_labeled(20, 2, 3, 20.0);
    const CrossValidation cv = cross_validate(d, LearnerId::DT, Hyperparams{}, 10, 7);
    CHECK(cv.runs == 10);
    CHECK(cv.mean == 1.0);
    CHECK(cv.std == 0.0);
    const CrossValidation k = cross_validate_kfold(d, LearnerId::LR, Hyperparams{}, 5, 7);
    CHECK(k.runs == 5);
    CHECK(k.mean == 1.0);
}

TEST_CASE("cross-validation is reproducible and thread-independent", "[evaluation][cv]") {
    const LabeledData d = oracle::random_labeled(30, 3, 13, 0.5);
    Hyperparams hp;
    hp.rf_n_trees = 10;
    const CrossValidation a = cross_validate(d, LearnerId::RF, hp, 6, 21, 0.8, 1);
    const CrossValidation b = cross_validate(d, LearnerId::RF, hp, 6, 21, 0.8, 3);
    CHECK(a.accuracies == b.accuracies);
    CHECK(a.mean == b.mean);
    // sample standard deviation
    double m = 0.0, ss = 0.0;
    for (double x : a.accuracies) m += x;
    m /= 6.0;
    for (double x : a.accuracies) ss += (x - m) * (x - m);
    CHECK(a.std == Approx(std::sqrt(ss / 5.0)));
}

TEST_CASE("k-fold uses every row once for testing", "[evaluation][cv]") {
    const LabeledData d = oracle::random_labeled(10, 2, 2, 0.3);
    const CrossValidation cv = cross_validate_kfold(d, LearnerId::NBC, Hyperparams{}, 5, 1);
    CHECK(cv.accuracies.size() == 5);
    CHECK_THROWS_AS(cross_validate_kfold(d, LearnerId::NBC, Hyperparams{}, 11, 1), Error);
    CHECK_THROWS_AS(cross_validate_kfold(d, LearnerId::NBC, Hyperparams{}, 1, 1), Error);
}

TEST_CASE("generalization reduces to ordinary evaluation", "[evaluation]") {
    const LabeledData d = oracle::random_labeled(40, 3, 4, 1.0);
    const SplitIndices s = split(d, 0.8, 5);
    const TrainedModel m = train(LearnerId::LR, Hyperparams{}, d.subset(s.train));
    const EvaluationReport a = evaluate(m, d.subset(s.test));
    const EvaluationReport b = evaluate_generalization(m, d.subset(s.test));
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.confusion == b.confusion);
    const std::vector<std::size_t> none;
    CHECK_THROWS_AS(evaluate_generalization(m, d.subset(none)), Error);
}

TEST_CASE("report JSON", "[evaluation]") {
    const LabeledData d = oracle::random_labeled(20, 2, 4, 3.0);
    const TrainedModel m = train(LearnerId::DT, Hyperparams{}, d);
    EvaluationReport r = evaluate(m, d);
    r.cv = cross_validate(d, LearnerId::DT, Hyperparams{}, 3, 1);
    const auto j = nlohmann::json::parse(report_to_json(r));
    CHECK(j["learner"] == "DT");
    CHECK(j["n"] == 80);
    CHECK(j["cross_validation"]["runs"] == 3);
    CHECK(j["per_structure"].contains("ccGFM"));
}
