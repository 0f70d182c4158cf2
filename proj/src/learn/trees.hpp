#pragma once

#include <cstdint>
#include <vector>

#include "admitlab/classifiers.hpp"

namespace admitlab::detail {

/// Features quantized to at most `max_bins` ordered bins. With few distinct values each
/// value gets its own bin, so candidate thresholds are the exact midpoints.
struct BinnedMatrix {
    std::size_t n = 0, f = 0;
    std::vector<std::uint8_t> row_codes;  // n x f
    std::vector<std::uint8_t> col_codes;  // f x n
    std::vector<int> n_bins;
    std::vector<std::vector<double>> bin_lo, bin_hi;  // per feature, per bin

    std::uint8_t code(std::size_t row, std::size_t feat) const { return row_codes[row * f + feat]; }
};

BinnedMatrix bin_features(const RowMatrix& x, int max_bins);

struct ClassTreeConfig {
    int max_depth = 0;     // 0: unlimited
    int max_features = 0;  // 0: all features at every node
    std::uint64_t seed = 0;
    std::uint64_t tree_key = 0;
};

/// Gini tree on weighted rows. `importance`, if given, accumulates the weighted impurity
/// decrease per feature.
Tree build_class_tree(const BinnedMatrix& bm, const std::vector<int>& y,
                      const std::vector<double>& w, std::vector<std::uint32_t> rows,
                      const ClassTreeConfig& cfg, std::vector<double>* importance);

/// Second-order regression tree for boosting; leaves hold -G/(H+lambda).
Tree build_boost_tree(const BinnedMatrix& bm, const std::vector<double>& g,
                      const std::vector<double>& h, int max_depth, double lambda);

}  // namespace admitlab::detail
