#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "admitlab/classifiers.hpp"

namespace admitlab::detail {

namespace {

double exact_sq_distance(const double* a, const double* b, Eigen::Index f) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < f; ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

}  // namespace

// Candidates come from the Gram-matrix expansion; the final ranking uses exact
// squared distances, with equal distances resolved by training order.
std::vector<int> predict_knn(const Knn& knn, const RowMatrix& q) {
    const Eigen::Index n = knn.x.rows(), f = knn.x.cols();
    const auto k = static_cast<std::size_t>(std::min<Eigen::Index>(knn.k, n));
    const Eigen::VectorXd xn = knn.x.rowwise().squaredNorm();
    const double xn_max = n > 0 ? xn.maxCoeff() : 0.0;
    std::vector<int> out(static_cast<std::size_t>(q.rows()), 0);

    constexpr Eigen::Index kBlock = 256;
    std::vector<double> approx(static_cast<std::size_t>(n));
    std::vector<std::pair<double, std::size_t>> cand;
    for (Eigen::Index q0 = 0; q0 < q.rows(); q0 += kBlock) {
        const Eigen::Index qb = std::min(kBlock, q.rows() - q0);
        const RowMatrix gram = q.middleRows(q0, qb) * knn.x.transpose();
        for (Eigen::Index r = 0; r < qb; ++r) {
            const Eigen::Index qi = q0 + r;
            const double qn = q.row(qi).squaredNorm();
            for (Eigen::Index i = 0; i < n; ++i) approx[static_cast<std::size_t>(i)] = qn + xn(i) - 2.0 * gram(r, i);
            std::vector<double> sorted = approx;
            std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
            const double kth = sorted[k - 1];
            const double margin = 1e-12 * (qn + xn_max) * static_cast<double>(f + 8);
            cand.clear();
            for (Eigen::Index i = 0; i < n; ++i) {
                if (approx[static_cast<std::size_t>(i)] <= kth + 2.0 * margin) {
                    cand.emplace_back(exact_sq_distance(q.row(qi).data(), knn.x.row(i).data(), f),
                                      static_cast<std::size_t>(i));
                }
            }
            std::sort(cand.begin(), cand.end());
            std::size_t votes = 0;
            for (std::size_t j = 0; j < k; ++j) votes += static_cast<std::size_t>(knn.y[cand[j].second]);
            int label;
            if (2 * votes > k) {
                label = 1;
            } else if (2 * votes < k) {
                label = 0;
            } else {
                // tie: class of the nearest neighbour, GFL if the nearest distance is shared
                // by both classes
                const double d0 = cand.front().first;
                bool has0 = false, has1 = false;
                for (std::size_t j = 0; j < cand.size() && cand[j].first == d0; ++j) {
                    (knn.y[cand[j].second] ? has1 : has0) = true;
                }
                label = (has1 && !has0) ? 1 : 0;
            }
            out[static_cast<std::size_t>(qi)] = label;
        }
    }
    return out;
}

}  // namespace admitlab::detail
