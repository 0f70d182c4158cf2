#include "admitlab/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <type_traits>

#include "admitlab/error.hpp"
#include "admitlab/parallel.hpp"
#include "admitlab/rng.hpp"
#include "trees.hpp"

namespace admitlab {

namespace {

constexpr std::uint64_t kBootstrapStream = 0x626f6f74ull;  // "boot"
constexpr std::uint64_t kFeatureStream = 0x66656174ull;    // "feat"

constexpr std::array<std::string_view, 7> kLearnerNames = {"LR", "DT", "RF", "NBC", "XGB", "SVM", "KNN"};

std::vector<std::size_t> canonical_order(const LabeledData& d) {
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return d.ids[a] < d.ids[b]; });
    return order;
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

LinearModel train_lr(const RowMatrix& x, const std::vector<int>& y, const Hyperparams& hp) {
    const Eigen::Index n = x.rows();
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) target(i) = y[static_cast<std::size_t>(i)];
    LinearModel m{Eigen::VectorXd::Zero(x.cols()), 0.0};
    Eigen::VectorXd resid(n);
    for (int epoch = 0; epoch < hp.lr_max_iter; ++epoch) {
        const Eigen::VectorXd z = (x * m.w).array() + m.b;
        for (Eigen::Index i = 0; i < n; ++i) resid(i) = sigmoid(z(i)) - target(i);
        m.w -= hp.lr_rate * (x.transpose() * resid) / static_cast<double>(n);
        m.b -= hp.lr_rate * resid.mean();
    }
    return m;
}

// Minimizes (lambda/2)|w|^2 + mean(hinge) with lambda = 1/(C n), which has the same
// minimizer as the usual C-weighted form. Step 1/sqrt(t+1); the best iterate is kept.
LinearModel train_svm(const RowMatrix& x, const std::vector<int>& y, const Hyperparams& hp) {
    const Eigen::Index n = x.rows();
    const double lambda = 1.0 / (hp.svm_c * static_cast<double>(n));
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i) s(i) = y[static_cast<std::size_t>(i)] ? 1.0 : -1.0;

    LinearModel m{Eigen::VectorXd::Zero(x.cols()), 0.0};
    LinearModel best = m;
    double best_obj = std::numeric_limits<double>::infinity();
    Eigen::VectorXd coef(n);
    for (int epoch = 0; epoch <= hp.svm_epochs; ++epoch) {
        const Eigen::VectorXd margin = s.cwiseProduct((x * m.w).array().matrix() + Eigen::VectorXd::Constant(n, m.b));
        double hinge = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool active = margin(i) < 1.0;
            hinge += active ? 1.0 - margin(i) : 0.0;
            coef(i) = active ? -s(i) : 0.0;
        }
        const double obj = 0.5 * lambda * m.w.squaredNorm() + hinge / static_cast<double>(n);
        if (obj < best_obj) {
            best_obj = obj;
            best = m;
        }
        if (epoch == hp.svm_epochs) break;
        const double eta = 1.0 / std::sqrt(static_cast<double>(epoch) + 1.0);
        const Eigen::VectorXd gw = lambda * m.w + (x.transpose() * coef) / static_cast<double>(n);
        const double gb = coef.mean();
        m.w -= eta * gw;
        m.b -= eta * gb;
    }
    return best;
}

GaussianNb train_nbc(const RowMatrix& x, const std::vector<int>& y, const Hyperparams& hp) {
    const Eigen::Index f = x.cols();
    GaussianNb nb;
    const Eigen::RowVectorXd all_mean = x.colwise().mean();
    const Eigen::RowVectorXd all_var = (x.rowwise() - all_mean).array().square().colwise().mean();
    for (int c = 0; c < 2; ++c) {
        nb.mean[c] = Eigen::VectorXd::Zero(f);
        nb.var[c] = Eigen::VectorXd::Zero(f);
    }
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const int c = y[static_cast<std::size_t>(i)];
        nb.mean[c] += x.row(i).transpose();
        ++nb.class_count[c];
    }
    for (int c = 0; c < 2; ++c) nb.mean[c] /= static_cast<double>(nb.class_count[c]);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const int c = y[static_cast<std::size_t>(i)];
        nb.var[c] += (x.row(i).transpose() - nb.mean[c]).array().square().matrix();
    }
    for (int c = 0; c < 2; ++c) {
        nb.var[c] /= static_cast<double>(nb.class_count[c]);
        for (Eigen::Index j = 0; j < f; ++j) {
            const double floor = all_var(j) > 0.0 ? hp.nbc_var_floor * all_var(j) : 1e-12;
            nb.var[c](j) += floor;
        }
        nb.log_prior[c] = std::log(static_cast<double>(nb.class_count[c]) / static_cast<double>(x.rows()));
    }
    return nb;
}

int predict_nbc(const GaussianNb& nb, std::span<const double> row) {
    std::array<double, 2> score{};
    for (int c = 0; c < 2; ++c) {
        double s = nb.log_prior[c];
        for (std::size_t j = 0; j < row.size(); ++j) {
            const double v = nb.var[c](static_cast<Eigen::Index>(j));
            const double d = row[j] - nb.mean[c](static_cast<Eigen::Index>(j));
            s -= 0.5 * (std::log(2.0 * std::numbers::pi * v) + d * d / v);
        }
        score[c] = s;
    }
    if (score[1] > score[0]) return 1;
    if (score[0] > score[1]) return 0;
    return nb.class_count[1] > nb.class_count[0] ? 1 : 0;
}

Forest train_rf(const detail::BinnedMatrix& bm, const std::vector<int>& y,
                const std::vector<std::uint64_t>& ids, const Hyperparams& hp, int threads) {
    Forest forest;
    forest.trees.resize(static_cast<std::size_t>(hp.rf_n_trees));
    const int mtry = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(bm.f)))));
    parallel_for(forest.trees.size(), threads, [&](std::size_t t) {
        std::vector<double> w(bm.n);
        std::vector<std::uint32_t> rows;
        rows.reserve(bm.n);
        for (std::size_t i = 0; i < bm.n; ++i) {
            KeyedRng rng{hp.seed, kBootstrapStream, t, ids[i]};
            w[i] = rng.poisson1();
            if (w[i] > 0.0) rows.push_back(static_cast<std::uint32_t>(i));
        }
        detail::ClassTreeConfig cfg{hp.rf_max_depth, mtry, hp.seed ^ kFeatureStream, t};
        forest.trees[t] = detail::build_class_tree(bm, y, w, std::move(rows), cfg, nullptr);
    });
    return forest;
}

Boosted train_gbt(const detail::BinnedMatrix& bm, const std::vector<int>& y, const Hyperparams& hp) {
    Boosted model;
    model.shrinkage = hp.gbt_shrinkage;
    const double pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
    const double p0 = pos / static_cast<double>(y.size());
    model.base_score = std::log(p0 / (1.0 - p0));
    std::vector<double> f(bm.n, model.base_score), g(bm.n), h(bm.n);
    for (int round = 0; round < hp.gbt_rounds; ++round) {
        for (std::size_t i = 0; i < bm.n; ++i) {
            const double p = sigmoid(f[i]);
            g[i] = p - y[i];
            h[i] = std::max(p * (1.0 - p), 1e-16);
        }
        Tree t = detail::build_boost_tree(bm, g, h, hp.gbt_depth, hp.gbt_lambda);
        // Training rows follow the tree through their bin codes, which agree with the
        // stored thresholds by construction.
        for (std::size_t i = 0; i < bm.n; ++i) {
            int node = 0;
            while (t.nodes[static_cast<std::size_t>(node)].feature >= 0) {
                const TreeNode& nd = t.nodes[static_cast<std::size_t>(node)];
                const std::uint8_t c = bm.code(i, static_cast<std::size_t>(nd.feature));
                node = bm.bin_hi[static_cast<std::size_t>(nd.feature)][c] <= nd.threshold ? nd.left : nd.right;
            }
            f[i] += hp.gbt_shrinkage * t.nodes[static_cast<std::size_t>(node)].value;
        }
        model.trees.push_back(std::move(t));
    }
    return model;
}

int leaf_majority(const TreeNode& leaf) { return leaf.count1 > leaf.count0 ? 1 : 0; }

}  // namespace

std::string_view to_string(LearnerId id) { return kLearnerNames[static_cast<std::size_t>(id)]; }

LearnerId parse_learner(std::string_view name) {
    for (std::size_t k = 0; k < kLearnerNames.size(); ++k) {
        if (kLearnerNames[k] == name) return static_cast<LearnerId>(k);
    }
    std::string valid;
    for (auto n : kLearnerNames) valid += (valid.empty() ? "" : ", ") + std::string(n);
    throw Error(ErrorCode::InvalidArgument, "unknown learner '" + std::string(name) + "'; valid: " + valid);
}

bool uses_scaler(LearnerId id) {
    return id == LearnerId::LR || id == LearnerId::SVM || id == LearnerId::KNN;
}

bool is_tree_based(LearnerId id) { return id == LearnerId::DT || id == LearnerId::RF; }

void Hyperparams::validate() const {
    if (lr_max_iter < 1 || dt_max_depth < 1 || rf_n_trees < 1 || rf_max_depth < 0 || knn_k < 1 ||
        svm_epochs < 1 || gbt_rounds < 1 || gbt_depth < 1 || max_bins < 2 || max_bins > 256) {
        throw Error(ErrorCode::ParamOutOfRange, "hyperparameter counts must be positive (max_bins in 2..256)");
    }
    if (!(lr_rate > 0.0) || !(svm_c > 0.0) || !(gbt_shrinkage > 0.0) || !(gbt_lambda >= 0.0) ||
        !(nbc_var_floor >= 0.0)) {
        throw Error(ErrorCode::ParamOutOfRange, "hyperparameter rates must be positive");
    }
}

LabeledData LabeledData::from_dataset(const Dataset& ds) {
    LabeledData d;
    const auto n = static_cast<Eigen::Index>(ds.size());
    const auto f = static_cast<Eigen::Index>(ds.width());
    d.x.resize(n, f);
    d.y.reserve(ds.size());
    d.ids.reserve(ds.size());
    d.structures.reserve(ds.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const Sample& s = ds.samples[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(s.features.size()) != f) {
            throw Error(ErrorCode::WidthMismatch, "sample width differs from the dataset header");
        }
        d.x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(s.features.data(), f);
        d.y.push_back(label_of(s.mode));
        d.ids.push_back(s.id);
        d.structures.push_back(s.structure);
    }
    d.feature_names = ds.feature_names;
    return d;
}

LabeledData LabeledData::subset(std::span<const std::size_t> rows) const {
    LabeledData d;
    d.feature_names = feature_names;
    d.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        d.x.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(rows[k]));
        d.y.push_back(y[rows[k]]);
        d.ids.push_back(ids[rows[k]]);
        d.structures.push_back(structures[rows[k]]);
    }
    return d;
}

Scaler Scaler::fit(const RowMatrix& x) {
    if (x.rows() == 0) throw Error(ErrorCode::TooFewSamples, "cannot fit a scaler on zero rows");
    Scaler s;
    s.mean = x.colwise().mean();
    s.std = (x.rowwise() - s.mean).array().square().colwise().mean().sqrt();
    for (Eigen::Index j = 0; j < s.std.size(); ++j) s.std(j) = std::max(s.std(j), 1e-12);
    return s;
}

RowMatrix Scaler::apply(const RowMatrix& x) const {
    if (x.cols() != mean.size()) throw Error(ErrorCode::WidthMismatch, "scaler width mismatch");
    return (x.rowwise() - mean).array().rowwise() / std.array();
}

const TreeNode& Tree::leaf_for(std::span<const double> row) const {
    std::size_t node = 0;
    while (nodes[node].feature >= 0) {
        const TreeNode& nd = nodes[node];
        node = static_cast<std::size_t>(row[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right);
    }
    return nodes[node];
}

int Tree::predict_class(std::span<const double> row) const { return leaf_majority(leaf_for(row)); }

TrainedModel train(LearnerId learner, const Hyperparams& hp, const LabeledData& data, int threads) {
    hp.validate();
    const std::size_t n1 = static_cast<std::size_t>(std::count(data.y.begin(), data.y.end(), 1));
    const std::size_t n0 = data.size() - n1;
    if (n0 < 2 || n1 < 2) {
        std::ostringstream msg;
        msg << "each class needs at least 2 samples (GFL " << n0 << ", GFM " << n1 << ")";
        throw Error(ErrorCode::DegenerateData, msg.str());
    }
    const LabeledData d = data.subset(canonical_order(data));

    TrainedModel m;
    m.learner = learner;
    m.width = d.width();
    m.feature_names = d.feature_names;
    RowMatrix xs;
    if (uses_scaler(learner)) {
        m.scaler = Scaler::fit(d.x);
        xs = m.scaler->apply(d.x);
    }

    switch (learner) {
        case LearnerId::LR:
            m.body = train_lr(xs, d.y, hp);
            break;
        case LearnerId::SVM:
            m.body = train_svm(xs, d.y, hp);
            break;
        case LearnerId::KNN:
            m.body = Knn{hp.knn_k, std::move(xs), d.y};
            break;
        case LearnerId::NBC:
            m.body = train_nbc(d.x, d.y, hp);
            break;
        case LearnerId::DT: {
            const detail::BinnedMatrix bm = detail::bin_features(d.x, hp.max_bins);
            std::vector<std::uint32_t> rows(bm.n);
            std::iota(rows.begin(), rows.end(), 0u);
            const std::vector<double> w(bm.n, 1.0);
            m.body = detail::build_class_tree(bm, d.y, w, std::move(rows), {hp.dt_max_depth, 0, hp.seed, 0},
                                              nullptr);
            break;
        }
        case LearnerId::RF:
            m.body = train_rf(detail::bin_features(d.x, hp.max_bins), d.y, d.ids, hp, threads);
            break;
        case LearnerId::XGB:
            m.body = train_gbt(detail::bin_features(d.x, hp.max_bins), d.y, hp);
            break;
    }
    return m;
}

namespace detail {
std::vector<int> predict_knn(const Knn& knn, const RowMatrix& q);
}

std::vector<int> predict_batch(const TrainedModel& model, const RowMatrix& x) {
    if (static_cast<std::size_t>(x.cols()) != model.width) {
        std::ostringstream msg;
        msg << "model expects " << model.width << " features, got " << x.cols();
        throw Error(ErrorCode::WidthMismatch, msg.str());
    }
    const RowMatrix xs = model.scaler ? model.scaler->apply(x) : RowMatrix();
    const RowMatrix& in = model.scaler ? xs : x;
    const auto n = static_cast<std::size_t>(in.rows());
    const auto f = static_cast<std::size_t>(in.cols());
    std::vector<int> out(n);
    const auto row = [&](std::size_t i) { return std::span<const double>(in.data() + i * f, f); };

    if (const auto* k = std::get_if<Knn>(&model.body)) return detail::predict_knn(*k, in);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = row(i);
        out[i] = std::visit(
            [&](const auto& b) -> int {
                using T = std::decay_t<decltype(b)>;
                if constexpr (std::is_same_v<T, LinearModel>) {
                    double z = b.b;
                    for (std::size_t j = 0; j < f; ++j) z += b.w(static_cast<Eigen::Index>(j)) * r[j];
                    return z > 0.0 ? 1 : 0;
                } else if constexpr (std::is_same_v<T, Tree>) {
                    return b.predict_class(r);
                } else if constexpr (std::is_same_v<T, Forest>) {
                    std::size_t votes = 0;
                    for (const Tree& t : b.trees) votes += static_cast<std::size_t>(t.predict_class(r));
                    return 2 * votes > b.trees.size() ? 1 : 0;
                } else if constexpr (std::is_same_v<T, GaussianNb>) {
                    return predict_nbc(b, r);
                } else if constexpr (std::is_same_v<T, Boosted>) {
                    double z = b.base_score;
                    for (const Tree& t : b.trees) z += b.shrinkage * t.leaf_for(r).value;
                    return z > 0.0 ? 1 : 0;
                } else {
                    return 0;
                }
            },
            model.body);
    }
    return out;
}

int predict(const TrainedModel& model, std::span<const double> row) {
    RowMatrix x(1, static_cast<Eigen::Index>(row.size()));
    for (std::size_t j = 0; j < row.size(); ++j) x(0, static_cast<Eigen::Index>(j)) = row[j];
    return predict_batch(model, x).front();
}

namespace {

// Weighted Gini decrease per feature, recomputed from the stored node class weights.
std::vector<double> tree_importance(const Tree& t, std::size_t width) {
    std::vector<double> imp(width, 0.0);
    const auto weighted = [](const TreeNode& n) {
        const double w = n.count0 + n.count1;
        return w > 0.0 ? (n.count0 * n.count0 + n.count1 * n.count1) / w : 0.0;
    };
    for (const TreeNode& n : t.nodes) {
        if (n.feature < 0) continue;
        const double dec = weighted(t.nodes[static_cast<std::size_t>(n.left)]) +
                           weighted(t.nodes[static_cast<std::size_t>(n.right)]) - weighted(n);
        imp[static_cast<std::size_t>(n.feature)] += std::max(dec, 0.0);
    }
    const double sum = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (sum > 0.0) {
        for (double& v : imp) v /= sum;
    }
    return imp;
}

}  // namespace

FeatureImportance feature_importances(const TrainedModel& model, std::size_t top_k) {
    std::vector<double> w(model.width, 0.0);
    if (const auto* t = std::get_if<Tree>(&model.body)) {
        w = tree_importance(*t, model.width);
    } else if (const auto* f = std::get_if<Forest>(&model.body)) {
        std::size_t used = 0;
        for (const Tree& tr : f->trees) {
            const auto ti = tree_importance(tr, model.width);
            if (std::accumulate(ti.begin(), ti.end(), 0.0) == 0.0) continue;
            for (std::size_t j = 0; j < w.size(); ++j) w[j] += ti[j];
            ++used;
        }
        const double sum = std::accumulate(w.begin(), w.end(), 0.0);
        if (used > 0 && sum > 0.0) {
            for (double& v : w) v /= sum;
        }
    } else {
        throw Error(ErrorCode::NotTreeBased,
                    std::string(to_string(model.learner)) + " has no impurity-based importance");
    }
    FeatureImportance fi;
    fi.weights = w;
    std::vector<std::size_t> order(w.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
    for (std::size_t k = 0; k < std::min(top_k, order.size()); ++k) {
        const std::size_t j = order[k];
        const std::string name = j < model.feature_names.size() ? model.feature_names[j] : "f" + std::to_string(j);
        fi.ranked.emplace_back(name, w[j]);
    }
    return fi;
}

}  // namespace admitlab
