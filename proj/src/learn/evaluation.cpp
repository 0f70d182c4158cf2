#include "admitlab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "admitlab/error.hpp"
#include "admitlab/parallel.hpp"
#include "admitlab/rng.hpp"

namespace admitlab {

namespace {

constexpr std::uint64_t kSplitStream = 0x73706c74ull;  // "splt"

// Groups row indices by structure, each group in ascending id order then shuffled.
std::map<StructureId, std::vector<std::size_t>> shuffled_strata(const LabeledData& data, std::uint64_t seed) {
    std::map<StructureId, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < data.size(); ++i) strata[data.structures[i]].push_back(i);
    for (auto& [s, rows] : strata) {
        std::stable_sort(rows.begin(), rows.end(),
                         [&](std::size_t a, std::size_t b) { return data.ids[a] < data.ids[b]; });
        KeyedRng rng{seed, kSplitStream, static_cast<std::uint64_t>(s)};
        for (std::size_t k = rows.size(); k > 1; --k) std::swap(rows[k - 1], rows[rng.below(k)]);
    }
    return strata;
}

void summarize(CrossValidation& cv) {
    const double n = static_cast<double>(cv.runs);
    cv.mean = std::accumulate(cv.accuracies.begin(), cv.accuracies.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : cv.accuracies) ss += (a - cv.mean) * (a - cv.mean);
    cv.std = cv.runs > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

}  // namespace

SplitIndices split(const LabeledData& data, double train_fraction, std::uint64_t seed) {
    if (data.size() == 0) throw Error(ErrorCode::TooFewSamples, "cannot split an empty dataset");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "train_fraction must lie in (0, 1)");
    }
    SplitIndices out;
    for (auto& [s, rows] : shuffled_strata(data, seed)) {
        if (rows.size() < 2) {
            throw Error(ErrorCode::TooFewSamples,
                        std::string(to_string(s)) + " stratum has fewer than 2 samples");
        }
        auto n_test = static_cast<std::size_t>(std::llround((1.0 - train_fraction) * static_cast<double>(rows.size())));
        n_test = std::clamp<std::size_t>(n_test, 1, rows.size() - 1);
        out.test.insert(out.test.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
        out.train.insert(out.train.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

EvaluationReport evaluate(const TrainedModel& model, const LabeledData& data) {
    EvaluationReport r;
    r.learner = std::string(to_string(model.learner));
    r.n = data.size();
    const std::vector<int> pred = predict_batch(model, data.x);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        ++r.confusion[static_cast<std::size_t>(data.y[i])][static_cast<std::size_t>(pred[i])];
        const bool ok = pred[i] == data.y[i];
        correct += ok;
        auto& ps = r.per_structure[std::string(to_string(data.structures[i]))];
        ps.correct += ok;
        ++ps.total;
    }
    r.accuracy = data.size() ? static_cast<double>(correct) / static_cast<double>(data.size()) : 0.0;
    return r;
}

EvaluationReport evaluate_generalization(const TrainedModel& model, const LabeledData& holdout) {
    if (holdout.size() == 0) throw Error(ErrorCode::TooFewSamples, "holdout is empty");
    return evaluate(model, holdout);
}

CrossValidation cross_validate(const LabeledData& data, LearnerId learner, const Hyperparams& hp,
                               int runs, std::uint64_t seed, double train_fraction, int threads) {
    if (runs < 1) throw Error(ErrorCode::InvalidArgument, "runs must be >= 1");
    CrossValidation cv;
    cv.runs = runs;
    cv.accuracies.resize(static_cast<std::size_t>(runs));
    parallel_for(cv.accuracies.size(), threads, [&](std::size_t run) {
        const SplitIndices s = split(data, train_fraction, seed + run);
        Hyperparams h = hp;
        h.seed = hp.seed + run;
        const TrainedModel m = train(learner, h, data.subset(s.train), 1);
        cv.accuracies[run] = evaluate(m, data.subset(s.test)).accuracy;
    });
    summarize(cv);
    return cv;
}

CrossValidation cross_validate_kfold(const LabeledData& data, LearnerId learner, const Hyperparams& hp,
                                     int folds, std::uint64_t seed, int threads) {
    if (folds < 2) throw Error(ErrorCode::InvalidArgument, "folds must be >= 2");
    if (data.size() == 0) throw Error(ErrorCode::TooFewSamples, "cannot cross-validate an empty dataset");
    std::vector<int> fold_of(data.size());
    for (const auto& [s, rows] : shuffled_strata(data, seed)) {
        if (rows.size() < static_cast<std::size_t>(folds)) {
            throw Error(ErrorCode::TooFewSamples,
                        std::string(to_string(s)) + " stratum has fewer samples than folds");
        }
        for (std::size_t k = 0; k < rows.size(); ++k) fold_of[rows[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
    }
    CrossValidation cv;
    cv.runs = folds;
    cv.accuracies.resize(static_cast<std::size_t>(folds));
    parallel_for(cv.accuracies.size(), threads, [&](std::size_t f) {
        std::vector<std::size_t> train_rows, test_rows;
        for (std::size_t i = 0; i < data.size(); ++i) {
            (fold_of[i] == static_cast<int>(f) ? test_rows : train_rows).push_back(i);
        }
        Hyperparams h = hp;
        h.seed = hp.seed + f;
        const TrainedModel m = train(learner, h, data.subset(train_rows), 1);
        cv.accuracies[f] = evaluate(m, data.subset(test_rows)).accuracy;
    });
    summarize(cv);
    return cv;
}

std::string report_to_json(const EvaluationReport& r) {
    nlohmann::ordered_json j;
    j["learner"] = r.learner;
    j["n"] = r.n;
    j["accuracy"] = r.accuracy;
    j["confusion"] = {{"GFL", {{"GFL", r.confusion[0][0]}, {"GFM", r.confusion[0][1]}}},
                      {"GFM", {{"GFL", r.confusion[1][0]}, {"GFM", r.confusion[1][1]}}}};
    auto& ps = j["per_structure"] = nlohmann::ordered_json::object();
    for (const auto& [name, s] : r.per_structure) {
        ps[name] = {{"correct", s.correct},
                    {"total", s.total},
                    {"accuracy", s.total ? static_cast<double>(s.correct) / static_cast<double>(s.total) : 0.0}};
    }
    if (r.cv) {
        j["cross_validation"] = {{"runs", r.cv->runs}, {"mean", r.cv->mean}, {"std", r.cv->std},
                                 {"accuracies", r.cv->accuracies}};
    }
    return j.dump(2);
}

}  // namespace admitlab
