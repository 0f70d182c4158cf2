#include <fstream>
#include <iterator>

#include <json.hpp>

#include "admitlab/classifiers.hpp"
#include "admitlab/error.hpp"

namespace admitlab {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "admitlab-model";
constexpr int kVersion = 1;

json vec_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
json vec_to_json(const Eigen::RowVectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json tree_to_json(const Tree& t) {
    std::vector<int> feature, left, right;
    std::vector<double> threshold, c0, c1, value;
    for (const TreeNode& n : t.nodes) {
        feature.push_back(n.feature);
        left.push_back(n.left);
        right.push_back(n.right);
        threshold.push_back(n.threshold);
        c0.push_back(n.count0);
        c1.push_back(n.count1);
        value.push_back(n.value);
    }
    return {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
            {"count0", c0},       {"count1", c1},           {"value", value}};
}

Tree tree_from_json(const json& j) {
    const auto feature = j.at("feature").get<std::vector<int>>();
    const auto left = j.at("left").get<std::vector<int>>();
    const auto right = j.at("right").get<std::vector<int>>();
    const auto threshold = j.at("threshold").get<std::vector<double>>();
    const auto c0 = j.at("count0").get<std::vector<double>>();
    const auto c1 = j.at("count1").get<std::vector<double>>();
    const auto value = j.at("value").get<std::vector<double>>();
    const std::size_t n = feature.size();
    if (left.size() != n || right.size() != n || threshold.size() != n || c0.size() != n ||
        c1.size() != n || value.size() != n || n == 0) {
        throw Error(ErrorCode::SchemaError, "tree arrays have inconsistent lengths");
    }
    Tree t;
    t.nodes.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        t.nodes[k] = {feature[k], threshold[k], left[k], right[k], c0[k], c1[k], value[k]};
        if (feature[k] >= 0 && (left[k] <= static_cast<int>(k) || right[k] <= static_cast<int>(k) ||
                                left[k] >= static_cast<int>(n) || right[k] >= static_cast<int>(n))) {
            throw Error(ErrorCode::SchemaError, "tree child index out of range");
        }
    }
    return t;
}

}  // namespace

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
    json j;
    j["format"] = kFormat;
    j["version"] = kVersion;
    j["learner"] = std::string(to_string(model.learner));
    j["width"] = model.width;
    j["feature_names"] = model.feature_names;
    if (model.scaler) j["scaler"] = {{"mean", vec_to_json(model.scaler->mean)}, {"std", vec_to_json(model.scaler->std)}};

    json body;
    std::visit(
        [&](const auto& b) {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, LinearModel>) {
                body = {{"w", vec_to_json(b.w)}, {"b", b.b}};
            } else if constexpr (std::is_same_v<T, Tree>) {
                body = {{"tree", tree_to_json(b)}};
            } else if constexpr (std::is_same_v<T, Forest>) {
                json trees = json::array();
                for (const Tree& t : b.trees) trees.push_back(tree_to_json(t));
                body = {{"trees", trees}};
            } else if constexpr (std::is_same_v<T, GaussianNb>) {
                body = {{"mean0", vec_to_json(b.mean[0])}, {"mean1", vec_to_json(b.mean[1])},
                        {"var0", vec_to_json(b.var[0])},   {"var1", vec_to_json(b.var[1])},
                        {"log_prior", b.log_prior},        {"class_count", b.class_count}};
            } else if constexpr (std::is_same_v<T, Boosted>) {
                json trees = json::array();
                for (const Tree& t : b.trees) trees.push_back(tree_to_json(t));
                body = {{"base_score", b.base_score}, {"shrinkage", b.shrinkage}, {"trees", trees}};
            } else if constexpr (std::is_same_v<T, Knn>) {
                body = {{"k", b.k},
                        {"rows", b.x.rows()},
                        {"x", std::vector<double>(b.x.data(), b.x.data() + b.x.size())},
                        {"y", b.y}};
            }
        },
        model.body);
    j["body"] = std::move(body);

    const std::vector<std::uint8_t> bytes = json::to_cbor(j);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    TrainedModel m;
    try {
        const json j = json::from_cbor(bytes);
        if (j.at("format") != kFormat) throw Error(ErrorCode::SchemaError, path.string() + " is not a model file");
        if (j.at("version").get<int>() != kVersion) {
            throw Error(ErrorCode::SchemaError, "unsupported model version " + j.at("version").dump());
        }
        m.learner = parse_learner(j.at("learner").get<std::string>());
        m.width = j.at("width").get<std::size_t>();
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        if (j.contains("scaler")) {
            Scaler s;
            s.mean = vec_from_json(j["scaler"]["mean"]).transpose();
            s.std = vec_from_json(j["scaler"]["std"]).transpose();
            m.scaler = s;
        }
        const json& b = j.at("body");
        switch (m.learner) {
            case LearnerId::LR:
            case LearnerId::SVM:
                m.body = LinearModel{vec_from_json(b.at("w")), b.at("b").get<double>()};
                break;
            case LearnerId::DT:
                m.body = tree_from_json(b.at("tree"));
                break;
            case LearnerId::RF: {
                Forest f;
                for (const json& t : b.at("trees")) f.trees.push_back(tree_from_json(t));
                m.body = std::move(f);
                break;
            }
            case LearnerId::NBC: {
                GaussianNb nb;
                nb.mean = {vec_from_json(b.at("mean0")), vec_from_json(b.at("mean1"))};
                nb.var = {vec_from_json(b.at("var0")), vec_from_json(b.at("var1"))};
                nb.log_prior = b.at("log_prior").get<std::array<double, 2>>();
                nb.class_count = b.at("class_count").get<std::array<std::size_t, 2>>();
                m.body = std::move(nb);
                break;
            }
            case LearnerId::XGB: {
                Boosted g;
                g.base_score = b.at("base_score");
                g.shrinkage = b.at("shrinkage");
                for (const json& t : b.at("trees")) g.trees.push_back(tree_from_json(t));
                m.body = std::move(g);
                break;
            }
            case LearnerId::KNN: {
                Knn k;
                k.k = b.at("k");
                const auto rows = b.at("rows").get<Eigen::Index>();
                const auto x = b.at("x").get<std::vector<double>>();
                if (rows * static_cast<Eigen::Index>(m.width) != static_cast<Eigen::Index>(x.size())) {
                    throw Error(ErrorCode::SchemaError, "k-NN training matrix has the wrong size");
                }
                k.x = Eigen::Map<const RowMatrix>(x.data(), rows, static_cast<Eigen::Index>(m.width));
                k.y = b.at("y").get<std::vector<int>>();
                m.body = std::move(k);
                break;
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, path.string() + ": " + e.what());
    }
    return m;
}

}  // namespace admitlab
