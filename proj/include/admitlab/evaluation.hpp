#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "admitlab/classifiers.hpp"

namespace admitlab {

struct SplitIndices {
    std::vector<std::size_t> train, test;
};

/// Stratified by structure (which fixes the mode). Each stratum contributes
/// round((1 - train_fraction) * size) test rows chosen by a seeded shuffle of its ids.
SplitIndices split(const LabeledData& data, double train_fraction, std::uint64_t seed);

struct StructureScore {
    std::size_t correct = 0, total = 0;
};

struct CrossValidation {
    int runs = 0;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation over runs
    std::vector<double> accuracies;
};

struct EvaluationReport {
    std::string learner;
    std::size_t n = 0;
    double accuracy = 0.0;
    // confusion[actual][predicted], index 0 = GFL, 1 = GFM
    std::array<std::array<std::size_t, 2>, 2> confusion{};
    std::map<std::string, StructureScore> per_structure;
    std::optional<CrossValidation> cv;
};

EvaluationReport evaluate(const TrainedModel& model, const LabeledData& data);

/// Accuracy of `model` on a structure never seen in training.
EvaluationReport evaluate_generalization(const TrainedModel& model, const LabeledData& holdout);

CrossValidation cross_validate(const LabeledData& data, LearnerId learner, const Hyperparams& hp,
                               int runs, std::uint64_t seed, double train_fraction = 0.8,
                               int threads = 1);

/// Stratified k-fold alternative: each stratum is shuffled once and dealt round-robin
/// into `folds` folds; every fold serves as the test set once.
CrossValidation cross_validate_kfold(const LabeledData& data, LearnerId learner, const Hyperparams& hp,
                                     int folds, std::uint64_t seed, int threads = 1);

std::string report_to_json(const EvaluationReport& r);

}  // namespace admitlab
