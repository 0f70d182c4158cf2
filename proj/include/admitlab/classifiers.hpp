#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "admitlab/dataset.hpp"

namespace admitlab {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class LearnerId { LR, DT, RF, NBC, XGB, SVM, KNN };

inline constexpr std::array<LearnerId, 7> kAllLearners = {
    LearnerId::LR,  LearnerId::DT,  LearnerId::RF, LearnerId::NBC,
    LearnerId::XGB, LearnerId::SVM, LearnerId::KNN};

std::string_view to_string(LearnerId id);
LearnerId parse_learner(std::string_view name);
bool uses_scaler(LearnerId id);
bool is_tree_based(LearnerId id);

struct Hyperparams {
    int lr_max_iter = 100;
    double lr_rate = 0.1;
    int dt_max_depth = 6;
    int rf_n_trees = 100;
    int rf_max_depth = 0;  // 0: grow until pure
    int knn_k = 20;
    double svm_c = 1.0;
    int svm_epochs = 500;
    int gbt_rounds = 100;
    int gbt_depth = 3;
    double gbt_shrinkage = 0.1;
    double gbt_lambda = 1.0;
    double nbc_var_floor = 1e-9;  // relative to each feature's variance
    int max_bins = 256;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Labels: 1 = GFM, 0 = GFL.
struct LabeledData {
    RowMatrix x;
    std::vector<int> y;
    std::vector<std::uint64_t> ids;
    std::vector<StructureId> structures;
    std::vector<std::string> feature_names;

    std::size_t size() const { return y.size(); }
    std::size_t width() const { return static_cast<std::size_t>(x.cols()); }

    static LabeledData from_dataset(const Dataset& ds);
    LabeledData subset(std::span<const std::size_t> rows) const;
};

inline int label_of(Mode m) { return m == Mode::GFM ? 1 : 0; }
inline Mode mode_of_label(int y) { return y == 1 ? Mode::GFM : Mode::GFL; }

struct Scaler {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd std;

    static Scaler fit(const RowMatrix& x);
    RowMatrix apply(const RowMatrix& x) const;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double count0 = 0.0, count1 = 0.0;  // class weights reaching the node
    double value = 0.0;                 // boosted trees: leaf output
};

/// Rows go left when x[feature] <= threshold.
struct Tree {
    std::vector<TreeNode> nodes;

    const TreeNode& leaf_for(std::span<const double> row) const;
    int predict_class(std::span<const double> row) const;
};

struct LinearModel {
    Eigen::VectorXd w;
    double b = 0.0;
};

struct Forest {
    std::vector<Tree> trees;
};

struct GaussianNb {
    std::array<Eigen::VectorXd, 2> mean, var;
    std::array<double, 2> log_prior{};
    std::array<std::size_t, 2> class_count{};
};

struct Boosted {
    double base_score = 0.0;
    double shrinkage = 0.1;
    std::vector<Tree> trees;
};

struct Knn {
    int k = 20;
    RowMatrix x;  // scaled, in canonical order
    std::vector<int> y;
};

struct TrainedModel {
    LearnerId learner = LearnerId::DT;
    std::size_t width = 0;
    std::vector<std::string> feature_names;
    std::optional<Scaler> scaler;
    std::variant<LinearModel, Tree, Forest, GaussianNb, Boosted, Knn> body;
};

/// Rows are put in ascending id order before fitting so results do not depend on the
/// order of the input.
TrainedModel train(LearnerId learner, const Hyperparams& hp, const LabeledData& data,
                   int threads = 1);

int predict(const TrainedModel& model, std::span<const double> row);
std::vector<int> predict_batch(const TrainedModel& model, const RowMatrix& x);

struct FeatureImportance {
    std::vector<double> weights;  // per feature, sums to 1
    std::vector<std::pair<std::string, double>> ranked;  // top_k, descending
};

FeatureImportance feature_importances(const TrainedModel& model, std::size_t top_k = 5);

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace admitlab
