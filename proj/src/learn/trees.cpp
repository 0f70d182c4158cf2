#include "trees.hpp"

#include <algorithm>
#include <numeric>

#include "admitlab/error.hpp"
#include "admitlab/rng.hpp"

namespace admitlab::detail {

namespace {

constexpr int kMaxBins = 256;

double midpoint(double a, double b) {
    const double m = a + 0.5 * (b - a);
    return m < b ? m : a;
}

struct SplitChoice {
    int feature = -1;
    int bin = -1;  // rows with code <= bin go left
    double threshold = 0.0;
    double gain = 0.0;
};

class ClassTreeBuilder {
public:
    ClassTreeBuilder(const BinnedMatrix& bm, const std::vector<int>& y, const std::vector<double>& w,
                     std::vector<std::uint32_t> rows, const ClassTreeConfig& cfg,
                     std::vector<double>* importance)
        : bm_(bm), y_(y), w_(w), rows_(std::move(rows)), cfg_(cfg), imp_(importance),
          hist_(bm.f * kMaxBins * 2), all_features_(bm.f) {
        std::iota(all_features_.begin(), all_features_.end(), 0);
    }

    Tree build() {
        if (!rows_.empty()) grow(0, rows_.size(), 0);
        return std::move(tree_);
    }

private:
    int grow(std::size_t lo, std::size_t hi, int depth) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        double c0 = 0.0, c1 = 0.0;
        for (std::size_t k = lo; k < hi; ++k) (y_[rows_[k]] ? c1 : c0) += w_[rows_[k]];
        tree_.nodes[id].count0 = c0;
        tree_.nodes[id].count1 = c1;
        if ((cfg_.max_depth > 0 && depth >= cfg_.max_depth) || c0 == 0.0 || c1 == 0.0 || hi - lo < 2) {
            return id;
        }

        const std::vector<int> feats = features_for(id);
        const SplitChoice best = find_split(lo, hi, feats, c0, c1);
        if (best.feature < 0) return id;

        const auto mid_it = std::stable_partition(
            rows_.begin() + static_cast<std::ptrdiff_t>(lo), rows_.begin() + static_cast<std::ptrdiff_t>(hi),
            [&](std::uint32_t r) { return bm_.code(r, static_cast<std::size_t>(best.feature)) <= best.bin; });
        const std::size_t mid = static_cast<std::size_t>(mid_it - rows_.begin());
        if (imp_) (*imp_)[static_cast<std::size_t>(best.feature)] += best.gain;

        tree_.nodes[id].feature = best.feature;
        tree_.nodes[id].threshold = best.threshold;
        const int l = grow(lo, mid, depth + 1);
        const int r = grow(mid, hi, depth + 1);
        tree_.nodes[id].left = l;
        tree_.nodes[id].right = r;
        return id;
    }

    std::vector<int> features_for(int node_id) {
        const int f = static_cast<int>(bm_.f);
        if (cfg_.max_features <= 0 || cfg_.max_features >= f) return all_features_;
        std::vector<int> pool = all_features_;
        KeyedRng rng{cfg_.seed, cfg_.tree_key, static_cast<std::uint64_t>(node_id)};
        for (int k = 0; k < cfg_.max_features; ++k) {
            const auto j = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(f - k)));
            std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(j)]);
        }
        pool.resize(static_cast<std::size_t>(cfg_.max_features));
        std::sort(pool.begin(), pool.end());
        return pool;
    }

    SplitChoice find_split(std::size_t lo, std::size_t hi, const std::vector<int>& feats, double c0,
                           double c1) {
        const std::size_t f = bm_.f;
        const bool all = feats.size() == f;
        for (int j : feats) {
            std::fill_n(hist_.begin() + static_cast<std::ptrdiff_t>(j) * kMaxBins * 2,
                        bm_.n_bins[static_cast<std::size_t>(j)] * 2, 0.0);
        }
        if (all) {
            for (std::size_t k = lo; k < hi; ++k) {
                const std::uint32_t r = rows_[k];
                const std::uint8_t* codes = &bm_.row_codes[r * f];
                const double wr = w_[r];
                const int yr = y_[r];
                double* h = hist_.data() + yr;
                for (std::size_t j = 0; j < f; ++j) h[(j * kMaxBins + codes[j]) * 2] += wr;
            }
        } else {
            for (int j : feats) {
                const std::uint8_t* codes = &bm_.col_codes[static_cast<std::size_t>(j) * bm_.n];
                double* h = hist_.data() + static_cast<std::size_t>(j) * kMaxBins * 2;
                for (std::size_t k = lo; k < hi; ++k) {
                    const std::uint32_t r = rows_[k];
                    h[codes[r] * 2 + y_[r]] += w_[r];
                }
            }
        }

        const double total = c0 + c1;
        const double parent = (c0 * c0 + c1 * c1) / total;
        SplitChoice best;
        best.gain = 1e-12 * total;
        bool found = false;
        for (int j : feats) {
            const double* h = hist_.data() + static_cast<std::size_t>(j) * kMaxBins * 2;
            const int nb = bm_.n_bins[static_cast<std::size_t>(j)];
            double l0 = 0.0, l1 = 0.0;
            int prev = -1;
            for (int b = 0; b < nb; ++b) {
                const double b0 = h[b * 2], b1 = h[b * 2 + 1];
                if (b0 == 0.0 && b1 == 0.0) continue;
                if (prev >= 0) {
                    const double wl = l0 + l1, r0 = c0 - l0, r1 = c1 - l1, wr = r0 + r1;
                    const double gain = (l0 * l0 + l1 * l1) / wl + (r0 * r0 + r1 * r1) / wr - parent;
                    if (gain > best.gain) {
                        best.gain = gain;
                        best.feature = j;
                        best.bin = prev;
                        best.threshold = midpoint(bm_.bin_hi[static_cast<std::size_t>(j)][static_cast<std::size_t>(prev)],
                                                  bm_.bin_lo[static_cast<std::size_t>(j)][static_cast<std::size_t>(b)]);
                        found = true;
                    }
                }
                l0 += b0;
                l1 += b1;
                prev = b;
            }
        }
        if (!found) best.feature = -1;
        return best;
    }

    const BinnedMatrix& bm_;
    const std::vector<int>& y_;
    const std::vector<double>& w_;
    std::vector<std::uint32_t> rows_;
    ClassTreeConfig cfg_;
    std::vector<double>* imp_;
    std::vector<double> hist_;
    std::vector<int> all_features_;
    Tree tree_;
};

class BoostTreeBuilder {
public:
    BoostTreeBuilder(const BinnedMatrix& bm, const std::vector<double>& g, const std::vector<double>& h,
                     int max_depth, double lambda)
        : bm_(bm), g_(g), h_(h), max_depth_(max_depth), lambda_(lambda), rows_(bm.n),
          hist_(bm.f * kMaxBins * 3) {
        std::iota(rows_.begin(), rows_.end(), 0u);
    }

    Tree build() {
        if (!rows_.empty()) grow(0, rows_.size(), 0);
        return std::move(tree_);
    }

private:
    int grow(std::size_t lo, std::size_t hi, int depth) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        double gs = 0.0, hs = 0.0;
        for (std::size_t k = lo; k < hi; ++k) {
            gs += g_[rows_[k]];
            hs += h_[rows_[k]];
        }
        tree_.nodes[id].value = -gs / (hs + lambda_);
        tree_.nodes[id].count0 = static_cast<double>(hi - lo);
        if (depth >= max_depth_ || hi - lo < 2) return id;

        const std::size_t f = bm_.f;
        std::fill(hist_.begin(), hist_.end(), 0.0);
        for (std::size_t k = lo; k < hi; ++k) {
            const std::uint32_t r = rows_[k];
            const std::uint8_t* codes = &bm_.row_codes[r * f];
            const double gr = g_[r], hr = h_[r];
            for (std::size_t j = 0; j < f; ++j) {
                double* cell = &hist_[(j * kMaxBins + codes[j]) * 3];
                cell[0] += gr;
                cell[1] += hr;
                cell[2] += 1.0;
            }
        }
        const double parent = gs * gs / (hs + lambda_);
        double best_gain = 1e-12;
        int best_f = -1, best_b = -1;
        double best_thr = 0.0;
        for (std::size_t j = 0; j < f; ++j) {
            const double* hj = &hist_[j * kMaxBins * 3];
            double gl = 0.0, hl = 0.0;
            int prev = -1;
            for (int b = 0; b < bm_.n_bins[j]; ++b) {
                if (hj[b * 3 + 2] == 0.0) continue;
                if (prev >= 0) {
                    const double gr = gs - gl, hr = hs - hl;
                    const double gain = gl * gl / (hl + lambda_) + gr * gr / (hr + lambda_) - parent;
                    if (gain > best_gain) {
                        best_gain = gain;
                        best_f = static_cast<int>(j);
                        best_b = prev;
                        best_thr = midpoint(bm_.bin_hi[j][static_cast<std::size_t>(prev)],
                                            bm_.bin_lo[j][static_cast<std::size_t>(b)]);
                    }
                }
                gl += hj[b * 3];
                hl += hj[b * 3 + 1];
                prev = b;
            }
        }
        if (best_f < 0) return id;
        const auto mid_it = std::stable_partition(
            rows_.begin() + static_cast<std::ptrdiff_t>(lo), rows_.begin() + static_cast<std::ptrdiff_t>(hi),
            [&](std::uint32_t r) { return bm_.code(r, static_cast<std::size_t>(best_f)) <= best_b; });
        const std::size_t mid = static_cast<std::size_t>(mid_it - rows_.begin());
        tree_.nodes[id].feature = best_f;
        tree_.nodes[id].threshold = best_thr;
        const int l = grow(lo, mid, depth + 1);
        const int r = grow(mid, hi, depth + 1);
        tree_.nodes[id].left = l;
        tree_.nodes[id].right = r;
        return id;
    }

    const BinnedMatrix& bm_;
    const std::vector<double>& g_;
    const std::vector<double>& h_;
    int max_depth_;
    double lambda_;
    std::vector<std::uint32_t> rows_;
    std::vector<double> hist_;
    Tree tree_;
};

}  // namespace

BinnedMatrix bin_features(const RowMatrix& x, int max_bins) {
    if (max_bins < 2 || max_bins > kMaxBins) {
        throw Error(ErrorCode::InvalidArgument, "max_bins must lie in 2..256");
    }
    BinnedMatrix bm;
    bm.n = static_cast<std::size_t>(x.rows());
    bm.f = static_cast<std::size_t>(x.cols());
    bm.row_codes.resize(bm.n * bm.f);
    bm.col_codes.resize(bm.n * bm.f);
    bm.n_bins.resize(bm.f);
    bm.bin_lo.resize(bm.f);
    bm.bin_hi.resize(bm.f);

    std::vector<std::pair<double, std::uint32_t>> col(bm.n);
    for (std::size_t j = 0; j < bm.f; ++j) {
        for (std::size_t i = 0; i < bm.n; ++i) col[i] = {x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), static_cast<std::uint32_t>(i)};
        std::sort(col.begin(), col.end());
        std::size_t unique = 0;
        for (std::size_t i = 0; i < bm.n; ++i) unique += (i == 0 || col[i].first != col[i - 1].first);

        auto& lo = bm.bin_lo[j];
        auto& hi = bm.bin_hi[j];
        int bin = -1;
        for (std::size_t i = 0; i < bm.n; ++i) {
            const bool new_value = i == 0 || col[i].first != col[i - 1].first;
            if (new_value) {
                bool open_new = bin < 0;
                if (!open_new) {
                    if (unique <= static_cast<std::size_t>(max_bins)) {
                        open_new = true;
                    } else {
                        // close the current bin once it holds its share of the rows
                        const std::size_t target = bm.n * static_cast<std::size_t>(bin + 1) /
                                                   static_cast<std::size_t>(max_bins);
                        open_new = i >= target && bin + 1 < max_bins;
                    }
                }
                if (open_new) {
                    ++bin;
                    lo.push_back(col[i].first);
                    hi.push_back(col[i].first);
                }
            }
            hi.back() = col[i].first;
            const auto c = static_cast<std::uint8_t>(bin);
            bm.row_codes[col[i].second * bm.f + j] = c;
            bm.col_codes[j * bm.n + col[i].second] = c;
        }
        bm.n_bins[j] = bin + 1;
    }
    return bm;
}

Tree build_class_tree(const BinnedMatrix& bm, const std::vector<int>& y, const std::vector<double>& w,
                      std::vector<std::uint32_t> rows, const ClassTreeConfig& cfg,
                      std::vector<double>* importance) {
    if (importance) importance->assign(bm.f, 0.0);
    ClassTreeBuilder b(bm, y, w, std::move(rows), cfg, importance);
    return b.build();
}

Tree build_boost_tree(const BinnedMatrix& bm, const std::vector<double>& g, const std::vector<double>& h,
                      int max_depth, double lambda) {
    BoostTreeBuilder b(bm, g, h, max_depth, lambda);
    return b.build();
}

}  // namespace admitlab::detail
